#include "levitate/config.hpp"

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include <yaml-cpp/yaml.h>

#include "levitate/error.hpp"

namespace levitate::config {

namespace {

using nlohmann::json;

std::string line_of(const YAML::Node &node) {
  const auto mark = node.Mark();
  if (mark.line < 0) return {};
  return " (line " + std::to_string(mark.line + 1) + ")";
}

template <typename T>
std::string type_name() {
  if constexpr (std::is_same_v<T, double>) return "a number";
  else if constexpr (std::is_same_v<T, int>) return "an integer";
  else if constexpr (std::is_same_v<T, std::uint64_t>) return "a non-negative integer";
  else if constexpr (std::is_same_v<T, bool>) return "true or false";
  else if constexpr (std::is_same_v<T, std::string>) return "a string";
  else return "a list";
}

template <typename T>
json to_json_value(const T &v) {
  return json(v);
}

// One mapping in the file. Reads are recorded so leftover keys can be
// reported as unknown.
class Section {
public:
  Section(YAML::Node node, std::string path, json &defaults)
      : node_(std::move(node)), path_(std::move(path)), defaults_(&defaults) {
    if (node_ && !node_.IsMap())
      throw ConfigError("expected a mapping" + line_of(node_), path_);
  }

  const std::string &path() const { return path_; }

  std::string key_path(const std::string &key) const { return path_.empty() ? key : path_ + "." + key; }

  bool has(const std::string &key) const { return node_ && node_[key] && !node_[key].IsNull(); }

  template <typename T>
  T required(const std::string &key) {
    used_.insert(key);
    if (!has(key)) throw ConfigError("required key is missing" + line_of(node_), key_path(key));
    return convert<T>(key);
  }

  template <typename T>
  std::optional<T> optional(const std::string &key) {
    used_.insert(key);
    if (!has(key)) return std::nullopt;
    return convert<T>(key);
  }

  template <typename T>
  T value(const std::string &key, const T &fallback) {
    if (auto v = optional<T>(key)) return *v;
    (*defaults_)[key_path(key)] = to_json_value(fallback);
    return fallback;
  }

  /// Record a default that was computed rather than read.
  template <typename T>
  void note_default(const std::string &key, const T &v) {
    (*defaults_)[key_path(key)] = to_json_value(v);
  }

  Section child(const std::string &key) {
    used_.insert(key);
    if (!has(key)) throw ConfigError("required section is missing" + line_of(node_), key_path(key));
    return Section(node_[key], key_path(key), *defaults_);
  }

  std::optional<Section> optional_child(const std::string &key) {
    used_.insert(key);
    if (!has(key)) return std::nullopt;
    return Section(node_[key], key_path(key), *defaults_);
  }

  YAML::Node raw(const std::string &key) {
    used_.insert(key);
    return node_ ? node_[key] : YAML::Node();
  }

  std::string line(const std::string &key) const { return has(key) ? line_of(node_[key]) : line_of(node_); }

  void finish() const {
    if (!node_) return;
    for (const auto &kv : node_) {
      const auto key = kv.first.as<std::string>();
      if (!used_.count(key)) throw ConfigError("unknown key" + line_of(kv.first), key_path(key));
    }
  }

private:
  template <typename T>
  T convert(const std::string &key) const {
    const YAML::Node n = node_[key];
    try {
      if constexpr (std::is_same_v<T, double>) {
        const auto text = n.as<std::string>();
        std::size_t used = 0;
        const double v = std::stod(text, &used);
        if (used != text.size()) throw std::invalid_argument(text);
        return v;
      } else {
        return n.as<T>();
      }
    } catch (const std::exception &) {
      throw ConfigError("expected " + type_name<T>() + line_of(n), key_path(key));
    }
  }

  YAML::Node node_;
  std::string path_;
  json *defaults_;
  std::set<std::string> used_;
};

json yaml_to_json(const YAML::Node &node) {
  switch (node.Type()) {
  case YAML::NodeType::Map: {
    json out = json::object();
    for (const auto &kv : node) out[kv.first.as<std::string>()] = yaml_to_json(kv.second);
    return out;
  }
  case YAML::NodeType::Sequence: {
    json out = json::array();
    for (const auto &v : node) out.push_back(yaml_to_json(v));
    return out;
  }
  case YAML::NodeType::Scalar: {
    const auto text = node.as<std::string>();
    if (node.Tag() != "!") {
      if (text == "true") return true;
      if (text == "false") return false;
      try {
        std::size_t used = 0;
        const double v = std::stod(text, &used);
        if (used == text.size()) return v;
      } catch (const std::exception &) {
      }
    }
    return text;
  }
  default:
    return nullptr;
  }
}

RunKind parse_kind(const std::string &name, const std::string &key) {
  if (name == "classical") return RunKind::classical;
  if (name == "quantum") return RunKind::quantum;
  if (name == "analyze") return RunKind::analyze;
  if (name == "calibrate") return RunKind::calibrate;
  throw ConfigError("unknown run kind '" + name + "' (classical, quantum, analyze, calibrate)", key);
}

const char *required_sections(RunKind kind) {
  switch (kind) {
  case RunKind::classical: return "particle, gas, trap, protocol, simulation";
  case RunKind::quantum: return "particle, trap, decoherence, protocol, evolution, states";
  case RunKind::analyze: return "input";
  case RunKind::calibrate: return "particle, gas, trap, calibration";
  }
  return "";
}

void check_sections(const YAML::Node &root, RunKind kind) {
  std::stringstream list(required_sections(kind));
  std::string name, missing;
  while (std::getline(list, name, ',')) {
    name.erase(0, name.find_first_not_of(' '));
    if (!root[name] || root[name].IsNull()) missing += (missing.empty() ? "" : ", ") + name;
  }
  if (!missing.empty())
    throw ConfigError("missing required sections for a " + to_string(kind) + " run: " + missing, "");
}

ParticleSpec read_particle(Section s, bool optical) {
  ParticleSpec p;
  p.radius = s.required<double>("radius");
  p.density = s.required<double>("density");
  p.refractive_index = optical ? s.value("refractive_index", 1.44) : s.value("refractive_index", 1.0);
  s.finish();
  p.validate(s.path());
  return p;
}

GasEnvironment read_gas(Section s) {
  GasEnvironment g;
  g.pressure = s.required<double>("pressure");
  g.temperature = s.value("temperature", 300.0);
  g.gas_molecular_mass = s.value("molecular_mass", 4.81e-26);
  s.finish();
  g.validate(s.path());
  return g;
}

// power_low is filled from the protocol's s_low by the caller.
TrapSpec read_trap(Section s, const ParticleSpec &particle) {
  TrapSpec t;
  t.wavelength = s.value("wavelength", 1550e-9);
  t.medium_index = s.value("medium_index", 1.0);
  t.power_high = s.required<double>("power_high");
  const auto waist = s.optional<double>("waist");
  const auto xi = s.optional<double>("duffing_xi");
  if (waist && xi) throw ConfigError("give either waist or duffing_xi, not both" + s.line("duffing_xi"), s.key_path("duffing_xi"));
  if (!waist && !xi) throw ConfigError("one of waist or duffing_xi is required", s.key_path("waist"));
  try {
    t.waist = waist ? *waist : waist_for_duffing(*xi);
  } catch (const ConfigError &e) {
    throw ConfigError(e.what(), s.key_path("duffing_xi"));
  }
  if (xi) s.note_default("waist", t.waist);
  t.empirical_xi = s.optional<double>("empirical_xi");
  t.power_low = t.power_high;
  const auto f = s.optional<double>("frequency_hz");
  const auto scale = s.optional<double>("depth_scale");
  if (f && scale) throw ConfigError("give either frequency_hz or depth_scale, not both", s.key_path("depth_scale"));
  if (f) {
    if (!(*f > 0)) throw ConfigError("must be > 0" + s.line("frequency_hz"), s.key_path("frequency_hz"));
    t = calibrate_depth(t, particle, 2.0 * kPi * *f);
    s.note_default("depth_scale", t.depth_scale);
  } else {
    t.depth_scale = scale.value_or(1.0);
    if (!scale) s.note_default("depth_scale", 1.0);
  }
  s.finish();
  t.validate(s.path());
  return t;
}

// Durations in the file are seconds; `time_scale` converts them to the
// caller's units (omega for the oscillator-unit quantum run).
PulseProtocol read_protocol(Section &s, double omega, double time_scale, std::optional<double> cover) {
  PulseProtocol p;
  p.s_low = s.required<double>("s_low");
  if (!(p.s_low > 0 && p.s_low < 1))
    throw ConfigError("s_low must lie in (0, 1)" + s.line("s_low"), s.key_path("s_low"));
  const auto timing = protocol_timing(omega, p.s_low);
  auto duration = [&](const char *key, double fallback) {
    if (auto v = s.optional<double>(key)) return *v * time_scale;
    s.note_default(key, fallback / time_scale);
    return fallback;
  };
  p.tau_high = duration("tau_high", timing.tau_high);
  p.tau_low = duration("tau_low", timing.tau_low);
  if (cover) {
    const int pulses = static_cast<int>(std::ceil(*cover / (p.tau_high + p.tau_low) - 1e-9));
    p.n_pulses = s.value("n_pulses", std::max(1, pulses));
  } else {
    p.n_pulses = s.required<int>("n_pulses");
  }
  p.n_sequences = s.value("n_sequences", 1);
  p.inter_sequence_delay = duration("inter_sequence_delay", 0.0);
  s.finish();
  p.validate(s.path());
  return p;
}

AnalysisSettings read_analysis(std::optional<Section> s) {
  AnalysisSettings a;
  if (!s) return a;
  a.bins = s->value("bins", 121);
  if (a.bins < 4) throw ConfigError("bins must be >= 4", s->key_path("bins"));
  if (s->has("bandwidth")) {
    const auto text = s->raw("bandwidth").as<std::string>();
    if (text == "silverman") {
      a.bandwidth = std::nullopt;
    } else {
      a.bandwidth = s->required<double>("bandwidth");
      if (!(*a.bandwidth >= 0)) throw ConfigError("bandwidth must be >= 0 or 'silverman'", s->key_path("bandwidth"));
    }
  } else {
    s->note_default("bandwidth", 0.0);
  }
  a.amplitude_bins = s->value("amplitude_bins", 12);
  s->finish();
  return a;
}

ForceKind parse_force(const std::string &name, const std::string &key) {
  if (name == "gaussian") return ForceKind::gaussian;
  if (name == "linear") return ForceKind::linear;
  if (name == "duffing") return ForceKind::duffing;
  throw ConfigError("unknown force model '" + name + "' (gaussian, linear, duffing)", key);
}

ClassicalRun read_classical(Section &root, std::uint64_t seed, int threads) {
  ClassicalRun r;
  r.particle = read_particle(root.child("particle"), true);
  r.gas = read_gas(root.child("gas"));
  r.trap = read_trap(root.child("trap"), r.particle);
  const double omega = trap_frequency(r.trap, r.particle, r.trap.power_high);
  {
    Section s = root.child("protocol");
    r.protocol = read_protocol(s, omega, 1.0, std::nullopt);
  }
  r.trap.power_low = r.protocol.s_low * r.trap.power_high;
  r.trap.validate("trap");

  Section s = root.child("simulation");
  auto &sim = r.sim;
  sim.n_trajectories = s.required<int>("n_trajectories");
  sim.dt = s.value("dt", classical::default_time_step(omega, r.protocol));
  const double end_of_trains = r.protocol.sequence_period() * r.protocol.n_sequences - r.protocol.inter_sequence_delay;
  sim.duration = s.value("duration", end_of_trains > 0 ? end_of_trains : 2.0 * kPi / omega);
  sim.scheme = classical::parse_step_scheme(s.value<std::string>("scheme", "semi_implicit"));
  r.force = parse_force(s.value<std::string>("force", "gaussian"), s.key_path("force"));
  r.initial_temperature = s.value("initial_temperature", r.gas.temperature);
  sim.escape_bound = s.value("escape_bound", 3.0 * r.trap.waist);
  sim.noise_substeps = s.value("noise_substeps", 1);
  sim.master_seed = seed;
  sim.threads = threads;
  const auto pulses = s.optional<std::vector<double>>("snapshot_pulses");
  r.snapshot_pulses = pulses ? *pulses : std::vector<double>{0.0, static_cast<double>(r.protocol.n_pulses)};
  if (!pulses) s.note_default("snapshot_pulses", r.snapshot_pulses);
  for (double k : r.snapshot_pulses) sim.snapshot_times.push_back(k * r.protocol.pulse_period());
  s.finish();
  if (!(r.initial_temperature > 0))
    throw ConfigError("initial_temperature must be > 0", s.key_path("initial_temperature"));
  sim.validate(omega, s.path());

  r.analysis = read_analysis(root.optional_child("analysis"));
  if (auto rs = root.optional_child("relaxation")) {
    RelaxationSettings rel;
    rel.duration = rs->required<double>("duration");
    rel.steps_per_period = rs->value("steps_per_period", 200);
    rel.record_every = rs->value("record_every", 10);
    rel.n_trajectories = rs->value("n_trajectories", 300);
    rel.window = rs->value("window", rel.duration / 100.0);
    rs->finish();
    if (rel.steps_per_period < 200)
      throw ConfigError("steps_per_period must be >= 200", rs->key_path("steps_per_period"));
    if (!(rel.window > 0)) throw ConfigError("window must be > 0", rs->key_path("window"));
    classical::RelaxationConfig{2.0 * kPi / omega / rel.steps_per_period, rel.duration, rel.record_every,
                                rel.n_trajectories}
        .validate(omega, rs->path());
    r.relaxation = rel;
  }
  return r;
}

QuantumRun read_quantum(Section &root) {
  QuantumRun q;
  const ParticleSpec particle = read_particle(root.child("particle"), false);
  q.units.mass = particle_mass(particle);
  {
    Section s = root.child("trap");
    const double f = s.required<double>("frequency_hz");
    if (!(f > 0)) throw ConfigError("must be > 0", s.key_path("frequency_hz"));
    q.units.omega = 2.0 * kPi * f;
    q.depth_levels = s.value("depth_levels", 100.0);
    if (!(q.depth_levels > 0)) throw ConfigError("must be > 0", s.key_path("depth_levels"));
    s.finish();
  }
  {
    Section s = root.child("decoherence");
    const auto ratio = s.optional<double>("gamma_over_omega");
    const auto lambda = s.optional<double>("lambda_recoil");
    if (ratio && lambda) throw ConfigError("give either gamma_over_omega or lambda_recoil", s.key_path("lambda_recoil"));
    if (!ratio && !lambda) throw ConfigError("one of gamma_over_omega or lambda_recoil is required", s.key_path("gamma_over_omega"));
    const double dx = zero_point_fluctuation(q.units.mass, q.units.omega);
    q.gamma_over_omega = ratio ? *ratio : DecoherenceSpec{*lambda}.gamma_over_omega(dx, q.units.omega);
    if (!(q.gamma_over_omega >= 0)) throw ConfigError("must be >= 0", s.key_path(ratio ? "gamma_over_omega" : "lambda_recoil"));
    s.finish();
  }
  {
    Section s = root.child("evolution");
    const double amount = s.required<double>("duration");
    q.time_reading = s.value<std::string>("time_reading", "periods");
    if (q.time_reading == "periods") q.duration = amount * 2.0 * kPi;
    else if (q.time_reading == "radians") q.duration = amount;
    else throw ConfigError("time_reading must be 'periods' or 'radians'", s.key_path("time_reading"));
    if (!(q.duration > 0)) throw ConfigError("must be > 0", s.key_path("duration"));
    q.steps_per_period = s.value("steps_per_period", 2000);
    if (q.steps_per_period < 500) throw ConfigError("steps_per_period must be >= 500", s.key_path("steps_per_period"));
    q.n_snapshots = s.value("snapshots", 11);
    if (q.n_snapshots < 1) throw ConfigError("snapshots must be >= 1", s.key_path("snapshots"));
    q.positivity_check_every = s.value("positivity_check_every", 1000);
    s.finish();
  }
  {
    Section s = root.child("protocol");
    q.protocol = read_protocol(s, 1.0, q.units.omega, q.duration);
  }
  if (auto s = root.optional_child("grid")) {
    q.n_points = s->value("n_points", 512);
    if (auto hw = s->optional<double>("half_width")) q.half_width = *hw / q.units.length();
    s->finish();
  } else {
    root.note_default("grid.n_points", 512);
  }
  if (auto s = root.optional_child("output")) {
    q.export_wigner = s->value("wigner", true);
    q.fock_levels = s->value("fock_levels", 60);
    s->finish();
  }
  const YAML::Node list = root.raw("states");
  if (!list.IsSequence() || list.size() == 0)
    throw ConfigError("states must be a non-empty list" + line_of(list), "states");
  json scratch;
  for (std::size_t i = 0; i < list.size(); ++i) {
    Section s(list[i], "states[" + std::to_string(i) + "]", scratch);
    QuantumStateRun st;
    try {
      st.spec.kind = quantum::parse_state_kind(s.required<std::string>("kind"));
    } catch (const ConfigError &e) {
      throw ConfigError(e.what(), s.key_path("kind"));
    }
    st.label = s.value<std::string>("label", quantum::to_string(st.spec.kind));
    switch (st.spec.kind) {
    case quantum::StateKind::thermal: st.spec.n_mean = s.required<double>("n_mean"); break;
    case quantum::StateKind::fock: st.spec.n = s.required<int>("n"); break;
    case quantum::StateKind::blurred_fock:
      st.spec.n = s.required<int>("n");
      st.spec.sigma_n = s.value("sigma_n", 5.0);
      break;
    case quantum::StateKind::gaussian:
      st.spec.width = s.required<double>("width") / q.units.length();
      st.spec.centre = s.value("centre", 0.0) / q.units.length();
      break;
    }
    s.finish();
    st.spec.validate(s.path());
    for (const auto &other : q.states)
      if (other.label == st.label) throw ConfigError("duplicate state label '" + st.label + "'", s.key_path("label"));
    q.states.push_back(std::move(st));
  }
  for (auto &[k, v] : scratch.items()) root.note_default(k, v);
  return q;
}

AnalyzeRun read_analyze(Section &root) {
  AnalyzeRun a;
  a.input = root.required<std::string>("input");
  const auto mode = root.value<std::string>("mode", "psd");
  if (mode == "psd") a.mode = AnalyzeMode::psd;
  else if (mode == "bimodality") a.mode = AnalyzeMode::bimodality;
  else if (mode == "backbone") a.mode = AnalyzeMode::backbone;
  else throw ConfigError("mode must be psd, bimodality or backbone", "mode");
  a.column = root.value<std::string>("column", "x");
  a.sample_rate = root.optional<double>("sample_rate");
  if (a.sample_rate && !(*a.sample_rate > 0)) throw ConfigError("must be > 0", "sample_rate");
  if (auto s = root.optional_child("psd")) {
    a.psd.segment_length = s->value("segment_length", 0);
    a.psd.min_peak_contrast = s->value("min_peak_contrast", 10.0);
    a.psd.band_half_widths = s->value("band_half_widths", 10.0);
    s->finish();
  }
  a.analysis = read_analysis(root.optional_child("analysis"));
  return a;
}

CalibrateRun read_calibrate(Section &root) {
  CalibrateRun c;
  c.particle = read_particle(root.child("particle"), true);
  c.gas = read_gas(root.child("gas"));
  c.trap = read_trap(root.child("trap"), c.particle);
  Section s = root.child("calibration");
  c.duration = s.required<double>("duration");
  c.steps_per_period = s.value("steps_per_period", 200);
  c.record_every = s.value("record_every", 10);
  c.n_trajectories = s.value("n_trajectories", 16);
  s.finish();
  if (!(c.duration > 0)) throw ConfigError("must be > 0", s.key_path("duration"));
  if (c.steps_per_period < 200) throw ConfigError("steps_per_period must be >= 200", s.key_path("steps_per_period"));
  if (c.record_every < 1) throw ConfigError("record_every must be >= 1", s.key_path("record_every"));
  if (c.n_trajectories < 1) throw ConfigError("n_trajectories must be >= 1", s.key_path("n_trajectories"));
  return c;
}

} // namespace

std::string to_string(RunKind kind) {
  switch (kind) {
  case RunKind::classical: return "classical";
  case RunKind::quantum: return "quantum";
  case RunKind::analyze: return "analyze";
  case RunKind::calibrate: return "calibrate";
  }
  return "unknown";
}

RunConfig parse_config(const std::string &text, const std::filesystem::path &source) {
  YAML::Node doc;
  try {
    doc = YAML::Load(text);
  } catch (const YAML::Exception &e) {
    throw ConfigError("parse error at line " + std::to_string(e.mark.line + 1) + ", column " +
                      std::to_string(e.mark.column + 1) + ": " + e.msg);
  }
  if (!doc || doc.IsNull())
    throw ConfigError("configuration is empty; missing required sections: kind, output_dir and, per kind, "
                      "classical: particle, gas, trap, protocol, simulation; quantum: particle, trap, "
                      "decoherence, protocol, evolution, states; analyze: input; calibrate: particle, gas, "
                      "trap, calibration");
  if (!doc.IsMap()) throw ConfigError("top level must be a mapping" + line_of(doc));

  RunConfig cfg;
  cfg.source = source;
  cfg.echo = yaml_to_json(doc);
  Section root(doc, "", cfg.defaults);
  if (!root.has("kind")) throw ConfigError("required key is missing; missing required sections: kind", "kind");
  cfg.kind = parse_kind(root.required<std::string>("kind"), "kind");
  check_sections(doc, cfg.kind);
  const std::string stem = source.stem().string();
  cfg.output_dir = root.value<std::string>("output_dir", "results/" + (stem.empty() ? std::string("run") : stem));
  const auto seed = root.value<std::string>("master_seed", "0");
  try {
    std::size_t used = 0;
    cfg.master_seed = std::stoull(seed, &used);
    if (used != seed.size() || seed.front() == '-') throw std::invalid_argument(seed);
  } catch (const std::exception &) {
    throw ConfigError("expected a non-negative integer" + root.line("master_seed"), "master_seed");
  }
  cfg.threads = root.value("threads", 1);
  if (cfg.threads < 1) throw ConfigError("threads must be >= 1", "threads");

  switch (cfg.kind) {
  case RunKind::classical: cfg.run = read_classical(root, cfg.master_seed, cfg.threads); break;
  case RunKind::quantum: cfg.run = read_quantum(root); break;
  case RunKind::analyze: cfg.run = read_analyze(root); break;
  case RunKind::calibrate: cfg.run = read_calibrate(root); break;
  }
  root.finish();
  return cfg;
}

RunConfig load_config(const std::filesystem::path &path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open configuration file '" + path.string() + "'");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str(), path);
}

std::filesystem::path resolve_output_dir(const RunConfig &cfg) {
  if (const char *env = std::getenv("LEVITATE_OUTPUT_DIR"); env && *env) return env;
  return cfg.output_dir;
}

} // namespace levitate::config
