#include "levitate/pipelines.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <numeric>

#include <Eigen/Core>

#include "levitate/constants.hpp"
#include "levitate/error.hpp"
#include "levitate/io.hpp"
#include "levitate/model.hpp"

#ifndef LEVITATE_VERSION
#define LEVITATE_VERSION "0.0.0"
#endif

namespace levitate::pipeline {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json fit_json(const analysis::DoubleGaussianFit &f) {
  return {{"mu1", f.mu1},         {"mu2", f.mu2},           {"sigma1", f.sigma1},
          {"sigma2", f.sigma2},   {"w1", f.w1},             {"w2", f.w2},
          {"residual_rms", f.residual_rms}, {"iterations", f.iterations}, {"converged", f.converged}};
}

classical::LangevinPhysics physics_for(const config::ClassicalRun &r) {
  auto physics = classical::make_physics(r.trap, r.particle, r.gas);
  const double omega = physics.omega();
  switch (r.force) {
  case config::ForceKind::gaussian: break;
  case config::ForceKind::linear: physics.force = classical::LinearForce{omega}; break;
  case config::ForceKind::duffing: physics.force = classical::DuffingForce{omega, duffing_coefficient(r.trap)}; break;
  }
  return physics;
}

std::string force_name(config::ForceKind k) {
  switch (k) {
  case config::ForceKind::gaussian: return "gaussian";
  case config::ForceKind::linear: return "linear";
  case config::ForceKind::duffing: return "duffing";
  }
  return "unknown";
}

Eigen::VectorXd double_gaussian_curve(const Eigen::VectorXd &x, const analysis::DoubleGaussianFit &f) {
  auto g = [&](double mu, double s) {
    return (-0.5 * ((x.array() - mu) / s).square()).exp() / (std::sqrt(2.0 * kPi) * s);
  };
  return (f.w1 * g(f.mu1, f.sigma1) + f.w2 * g(f.mu2, f.sigma2)).matrix();
}

} // namespace

int count_peaks(const Eigen::VectorXd &y) {
  const auto n = y.size();
  if (n < 3) return 0;
  Eigen::VectorXd s = y;
  for (Eigen::Index i = 1; i + 1 < n; ++i) s(i) = (y(i - 1) + 2 * y(i) + y(i + 1)) / 4.0;
  const double top = s.maxCoeff();
  int peaks = 0;
  for (Eigen::Index i = 1; i + 1 < n; ++i)
    if (s(i) > s(i - 1) && s(i) >= s(i + 1) && s(i) > 0.1 * top) ++peaks;
  return peaks;
}

PeakPair principal_peak_pair(const Eigen::VectorXd &x, const Eigen::VectorXd &y) {
  const auto n = y.size();
  PeakPair pair;
  if (n < 3) return pair;
  Eigen::VectorXd s = y;
  for (Eigen::Index i = 1; i + 1 < n; ++i) s(i) = (y(i - 1) + 2 * y(i) + y(i + 1)) / 4.0;
  Eigen::Index best = -1, second = -1;
  for (Eigen::Index i = 1; i + 1 < n; ++i) {
    if (!(s(i) > s(i - 1) && s(i) >= s(i + 1))) continue;
    if (best < 0 || s(i) > s(best)) {
      second = best;
      best = i;
    } else if (second < 0 || s(i) > s(second)) {
      second = i;
    }
  }
  if (second < 0) return pair;
  const auto lo = std::min(best, second), hi = std::max(best, second);
  pair.found = true;
  pair.left = x(lo);
  pair.right = x(hi);
  pair.height_left = y(lo);
  pair.height_right = y(hi);
  pair.dip = s.segment(lo, hi - lo + 1).minCoeff() / std::min(s(lo), s(hi));
  return pair;
}

namespace {

json peak_json(const PeakPair &p, double scale) {
  if (!p.found) return nullptr;
  return {{"left", p.left * scale}, {"right", p.right * scale}, {"separation", p.separation() * scale}, {"dip", p.dip}};
}

} // namespace

ClassicalOutcome run_classical(const config::RunConfig &cfg, const std::optional<fs::path> &out) {
  const auto &r = std::get<config::ClassicalRun>(cfg.run);
  const auto physics = physics_for(r);
  const double omega = physics.omega();
  auto sim = r.sim;
  sim.threads = cfg.threads;
  sim.master_seed = cfg.master_seed;

  ClassicalOutcome res;
  res.ensemble = classical::run_ensemble(r.protocol, sim, physics, r.initial_temperature);

  const double period = r.protocol.pulse_period();
  for (const auto &snap : res.ensemble.snapshots) {
    SnapshotBimodality b;
    b.time = snap.time;
    b.pulses = snap.time / period;
    b.n_points = static_cast<int>(snap.points.rows());
    try {
      const auto density = analysis::phase_space_density(snap.points, r.analysis.bandwidth, r.analysis.bins);
      b.n_outside = density.n_outside;
      const auto marginal = analysis::position_marginal(density);
      b.fit = analysis::fit_double_gaussian(marginal);
      b.ashman_d = analysis::ashman_d(*b.fit);
    } catch (const NumericalError &e) {
      b.error = e.what();
    }
    res.bimodality.push_back(std::move(b));
  }
  if (res.ensemble.snapshots.empty()) throw ConfigError("no snapshots requested", "simulation.snapshot_pulses");

  // Headline: the last snapshot.
  const auto &last = res.ensemble.snapshots.back();
  const auto density = analysis::phase_space_density(last.points, r.analysis.bandwidth, r.analysis.bins);
  res.final_marginal = analysis::position_marginal(density);
  const auto final_fit = analysis::fit_double_gaussian(res.final_marginal);
  res.final_ashman_d = res.bimodality.back().ashman_d;

  const double gamma = gas_damping_rate(r.particle, r.gas);
  json snaps = json::array();
  for (const auto &b : res.bimodality) {
    json j = {{"time", b.time}, {"pulses", b.pulses}, {"n_points", b.n_points}, {"n_outside", b.n_outside}};
    if (b.fit) j["fit"] = fit_json(*b.fit);
    j["ashman_d"] = b.ashman_d ? json(*b.ashman_d) : json(nullptr);
    if (!b.error.empty()) j["error"] = b.error;
    snaps.push_back(j);
  }
  res.report = {
      {"kind", "classical"},
      {"ashman_d_final", res.final_ashman_d ? json(*res.final_ashman_d) : json(nullptr)},
      {"final_fit", fit_json(final_fit)},
      {"snapshots", snaps},
      {"n_trajectories", res.ensemble.n_trajectories},
      {"n_escaped", res.ensemble.n_escaped},
      {"omega", omega},
      {"frequency_hz", omega / (2.0 * kPi)},
      {"mass", physics.mass},
      {"gamma_m", gamma},
      {"relaxation_time_expected", 1.0 / gamma},
      {"thermal_position_std", thermal_position_std(physics.mass, omega, r.initial_temperature)},
      {"depth_scale", r.trap.depth_scale},
      {"waist", r.trap.waist},
      {"duffing_xi", duffing_coefficient(r.trap)},
      {"s_low", r.protocol.s_low},
      {"tau_high", r.protocol.tau_high},
      {"tau_low", r.protocol.tau_low},
      {"n_pulses", r.protocol.n_pulses},
      {"dt", sim.dt},
      {"scheme", classical::to_string(sim.scheme)},
      {"force", force_name(r.force)},
      {"bandwidth", r.analysis.bandwidth ? json(*r.analysis.bandwidth) : json("silverman")},
      {"bins", r.analysis.bins},
  };

  if (r.relaxation) {
    const auto &rel = *r.relaxation;
    const classical::RelaxationConfig rc{2.0 * kPi / omega / rel.steps_per_period, rel.duration, rel.record_every,
                                         rel.n_trajectories};
    const auto trajs = classical::run_relaxation(r.protocol, sim, rc, physics, r.initial_temperature);
    res.relaxation_series = classical::variance_timeseries(trajs, rel.window);
    res.relaxation = analysis::relaxation_time(*res.relaxation_series);
    res.report["relaxation"] = {{"tau", res.relaxation->tau},
                                {"tau_stderr", res.relaxation->tau_stderr},
                                {"var_initial", res.relaxation->var_initial},
                                {"var_final", res.relaxation->var_final},
                                {"tau_expected", 1.0 / gamma},
                                {"ratio", res.relaxation->tau * gamma},
                                {"n_trajectories", static_cast<int>(trajs.size())},
                                {"dt", rc.dt},
                                {"window", rel.window}};
  }

  if (out) {
    std::vector<double> idx, t, traj, x, p;
    for (std::size_t k = 0; k < res.ensemble.snapshots.size(); ++k) {
      const auto &s = res.ensemble.snapshots[k];
      for (Eigen::Index i = 0; i < s.points.rows(); ++i) {
        idx.push_back(static_cast<double>(k));
        t.push_back(s.time);
        traj.push_back(s.trajectory_index[static_cast<std::size_t>(i)]);
        x.push_back(s.points(i, 0));
        p.push_back(s.points(i, 1));
      }
    }
    auto vec = [](const std::vector<double> &v) { return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())).eval(); };
    io::write_csv(*out / "snapshots.csv", {"snapshot", "time", "trajectory", "x", "p"},
                  {vec(idx), vec(t), vec(traj), vec(x), vec(p)});
    io::write_csv(*out / "marginal_final.csv", {"x", "density", "fit"},
                  {res.final_marginal.x, res.final_marginal.density,
                   double_gaussian_curve(res.final_marginal.x, final_fit)});
    io::write_matrix(*out / "density_final", density.density,
                     {{"quantity", "phase-space density, rows x, columns p = v/omega"},
                      {"units", {{"x", "m"}, {"p", "m"}, {"density", "1/m^2"}}},
                      {"x_edges", io::to_json(density.x_edges)},
                      {"p_edges", io::to_json(density.p_edges)},
                      {"time", last.time}});
    if (res.relaxation_series) {
      const auto &rs = *res.relaxation_series;
      io::write_csv(*out / "relaxation.csv", {"time", "std_x", "variance", "count"},
                    {rs.times, rs.std_x, rs.std_x.array().square().matrix(), rs.counts.cast<double>()});
    }
    io::write_json(*out / "report.json", res.report);
  }
  return res;
}

double default_half_width(const quantum::InitialStateSpec &spec, double waist) {
  double var = 0;
  if (spec.kind == quantum::StateKind::gaussian) {
    var = spec.width * spec.width + spec.centre * spec.centre;
  } else {
    const auto w = spec.level_weights();
    for (std::size_t n = 0; n < w.size(); ++n) var += w[n] * (static_cast<double>(n) + 0.5);
  }
  return std::max(6.0 * std::sqrt(var), 1.2 * waist);
}

namespace {

double mean_energy(const quantum::InitialStateSpec &spec) {
  if (spec.kind == quantum::StateKind::gaussian) {
    const double s = spec.width;
    return 0.5 * (1.0 / (4.0 * s * s) + s * s + spec.centre * spec.centre);
  }
  const auto w = spec.level_weights();
  double e = 0;
  for (std::size_t n = 0; n < w.size(); ++n) e += w[n] * (static_cast<double>(n) + 0.5);
  return e;
}

} // namespace

QuantumOutcome run_quantum(const config::RunConfig &cfg, const std::optional<fs::path> &out) {
  const auto &q = std::get<config::QuantumRun>(cfg.run);
  const double waist = std::sqrt(4.0 * q.depth_levels);
  const double lambda = 2.0 * q.gamma_over_omega;
  const double dt = 2.0 * kPi / q.steps_per_period;
  const double L = q.units.length(), P = q.units.momentum();

  QuantumOutcome res;
  json states = json::array();
  for (const auto &st : q.states) {
    const double half = q.half_width.value_or(default_half_width(st.spec, waist));
    const auto grid = quantum::make_grid(q.n_points, half);
    const auto terms = quantum::build_hamiltonian_terms(grid, q.depth_levels, waist, 1.0,
                                                        std::sqrt(2.0 * mean_energy(st.spec)));
    const auto rho0 = quantum::prepare_initial_state(st.spec, grid);

    quantum::PropagationOptions opts;
    for (int k = 1; k <= q.n_snapshots; ++k) opts.snapshot_times.push_back(q.duration * k / q.n_snapshots);
    opts.positivity_check_every = q.positivity_check_every;
    opts.threads = cfg.threads;

    QuantumStateOutcome so;
    so.label = st.label;
    so.propagation = quantum::propagate(rho0, terms, q.protocol, q.duration, lambda, dt, opts);
    const auto &prop = so.propagation;

    std::vector<const quantum::DensityMatrix *> states_seq{&rho0};
    std::vector<double> times{0.0};
    for (std::size_t k = 0; k < prop.snapshots.size(); ++k) {
      states_seq.push_back(&prop.snapshots[k]);
      times.push_back(prop.snapshot_times[k]);
    }
    quantum::WignerDistribution w_first, w_last;
    for (std::size_t k = 0; k < states_seq.size(); ++k) {
      auto w = quantum::wigner_transform(*states_seq[k], cfg.threads);
      so.negativity.push_back(quantum::wigner_negativity(w));
      so.purity.push_back(quantum::purity(*states_seq[k]));
      if (k == 0) w_first = std::move(w);
      else if (k + 1 == states_seq.size()) w_last = std::move(w);
    }
    so.times = times;
    so.delta_n = quantum::negativity_increment(so.negativity);
    so.x = grid.positions();
    so.marginal_initial = quantum::marginal_wigner_x(w_first);
    so.marginal_final = quantum::marginal_wigner_x(w_last);
    so.final_marginal_peaks = count_peaks(so.marginal_final);
    so.peaks_initial = principal_peak_pair(so.x, so.marginal_initial);
    so.peaks_final = principal_peak_pair(so.x, so.marginal_final);
    int levels = q.fock_levels;
    while (levels > 0 && std::sqrt(2.0 * levels + 1.0) >= 0.9 * grid.x_max) --levels;
    so.populations_initial = quantum::fock_populations(rho0, levels);
    so.populations_final = quantum::fock_populations(prop.state, levels);

    std::vector<double> times_si;
    for (double t : times) times_si.push_back(t / q.units.omega);
    so.report = {{"label", st.label},
                 {"kind", quantum::to_string(st.spec.kind)},
                 {"omega_t", times},
                 {"time_s", times_si},
                 {"negativity", so.negativity},
                 {"delta_n", so.delta_n},
                 {"purity", so.purity},
                 {"delta_n_final", so.delta_n.back()},
                 {"max_abs_delta_n", std::abs(*std::max_element(so.delta_n.begin(), so.delta_n.end(),
                                                                [](double a, double b) { return std::abs(a) < std::abs(b); }))},
                 {"final_marginal_peaks", so.final_marginal_peaks},
                 {"initial_marginal_peaks", count_peaks(so.marginal_initial)},
                 {"principal_peaks_initial_m", peak_json(so.peaks_initial, L)},
                 {"principal_peaks_final_m", peak_json(so.peaks_final, L)},
                 {"position_variance_initial", quantum::position_variance(rho0) * L * L},
                 {"position_variance_final", quantum::position_variance(prop.state) * L * L},
                 {"populations_initial", io::to_json(so.populations_initial)},
                 {"populations_final", io::to_json(so.populations_final)},
                 {"grid", {{"n_points", grid.n_points}, {"half_width_m", grid.x_max * L}, {"spacing_m", grid.spacing() * L}}},
                 {"diagnostics", {{"steps", prop.steps}, {"dt_omega", prop.dt}, {"max_trace_drift", prop.max_trace_drift},
                                  {"max_hermiticity_error", prop.max_hermiticity_error},
                                  {"min_eigenvalue", prop.min_eigenvalue}, {"max_edge_density", prop.max_edge_density * (1.0 / L)}}}};
    states.push_back(so.report);

    if (out) {
      io::write_json(*out / (st.label + "_diagnostics.json"), so.report);
      io::write_csv(*out / (st.label + "_marginal.csv"), {"x", "w_x_initial", "w_x_final"},
                    {so.x * L, so.marginal_initial / L, so.marginal_final / L});
      if (q.export_wigner) {
        auto header = [&](double t) {
          return json{{"label", st.label},
                      {"quantity", "Wigner distribution, rows x, columns p"},
                      {"units", {{"x", "m"}, {"p", "kg m/s"}, {"values", "1/(m kg m/s)"}, {"time", "s"}}},
                      {"x", io::to_json(w_first.x * L)},
                      {"p", io::to_json(w_first.p * P)},
                      {"time", t / q.units.omega},
                      {"omega_t", t}};
        };
        io::write_matrix(*out / (st.label + "_wigner_initial"), w_first.values / Constants::hbar, header(0.0));
        io::write_matrix(*out / (st.label + "_wigner_final"), w_last.values / Constants::hbar, header(times.back()));
      }
    }
    res.states.push_back(std::move(so));
  }
  res.report = {{"kind", "quantum"},
                {"states", states},
                {"depth_levels", q.depth_levels},
                {"gamma_over_omega", q.gamma_over_omega},
                {"lambda_oscillator_units", lambda},
                {"waist_m", waist * L},
                {"duration_omega_t", q.duration},
                {"time_reading", q.time_reading},
                {"time_reading_note", q.time_reading == "periods"
                                          ? "evolution.duration counts oscillation periods: omega t = 2 pi * duration"
                                          : "evolution.duration is omega t in radians"},
                {"steps_per_period", q.steps_per_period},
                {"s_low", q.protocol.s_low},
                {"n_pulses", q.protocol.n_pulses},
                {"x_zpf_m", zero_point_fluctuation(q.units.mass, q.units.omega)},
                {"mass", q.units.mass}};
  if (out) io::write_json(*out / "report.json", res.report);
  return res;
}

json run_analyze(const config::RunConfig &cfg, const std::optional<fs::path> &out) {
  const auto &a = std::get<config::AnalyzeRun>(cfg.run);
  const auto table = io::read_csv(a.input);
  json report = {{"kind", "analyze"}, {"input", a.input.string()}};
  switch (a.mode) {
  case config::AnalyzeMode::psd: {
    const Eigen::VectorXd x = table.column(a.column);
    double fs_rate = 0;
    if (a.sample_rate) {
      fs_rate = *a.sample_rate;
    } else {
      const Eigen::VectorXd t = table.column("time");
      if (t.size() < 2) throw NumericalError("analyze", "time column too short");
      fs_rate = static_cast<double>(t.size() - 1) / (t(t.size() - 1) - t(0));
    }
    const auto fit = analysis::psd_lorentzian_calibration(std::span<const double>(x.data(), static_cast<std::size_t>(x.size())), fs_rate, a.psd);
    report["mode"] = "psd";
    report["sample_rate"] = fs_rate;
    report["omega0"] = fit.omega0;
    report["frequency_hz"] = fit.omega0 / (2.0 * kPi);
    report["gamma"] = fit.gamma;
    report["amplitude"] = fit.amplitude;
    report["background"] = fit.background;
    report["omega0_stderr"] = std::sqrt(std::max(0.0, fit.covariance(0, 0)));
    report["gamma_stderr"] = std::sqrt(std::max(0.0, fit.covariance(1, 1)));
    report["segments"] = fit.segments;
    report["converged"] = fit.converged;
    break;
  }
  case config::AnalyzeMode::bimodality: {
    Eigen::MatrixX2d pts(table.values.rows(), 2);
    pts.col(0) = table.column("x");
    pts.col(1) = table.column("p");
    const auto d = analysis::phase_space_density(pts, a.analysis.bandwidth, a.analysis.bins);
    const auto m = analysis::position_marginal(d);
    const auto f = analysis::fit_double_gaussian(m);
    report["mode"] = "bimodality";
    report["fit"] = fit_json(f);
    report["ashman_d"] = analysis::ashman_d(f);
    report["n_points"] = d.n_points;
    report["n_outside"] = d.n_outside;
    if (out) io::write_csv(*out / "marginal.csv", {"x", "density", "fit"}, {m.x, m.density, double_gaussian_curve(m.x, f)});
    break;
  }
  case config::AnalyzeMode::backbone: {
    const Eigen::VectorXd t = table.column("time");
    const Eigen::VectorXd x = table.column(a.column);
    std::vector<classical::Trajectory> trajs;
    if (table.has("trajectory")) {
      const Eigen::VectorXd id = table.column("trajectory");
      Eigen::Index start = 0;
      for (Eigen::Index i = 1; i <= id.size(); ++i)
        if (i == id.size() || id(i) != id(start)) {
          classical::Trajectory tr;
          tr.times = t.segment(start, i - start);
          tr.positions = x.segment(start, i - start);
          trajs.push_back(std::move(tr));
          start = i;
        }
    } else {
      classical::Trajectory tr;
      tr.times = t;
      tr.positions = x;
      trajs.push_back(std::move(tr));
    }
    const auto b = analysis::duffing_backbone(trajs, a.analysis.amplitude_bins);
    report["mode"] = "backbone";
    report["omega0"] = b.omega0;
    report["xi"] = b.xi;
    report["xi_stderr"] = b.xi_stderr;
    report["n_cycles"] = b.n_cycles;
    report["n_bins"] = b.n_bins;
    break;
  }
  }
  if (out) io::write_json(*out / "report.json", report);
  return report;
}

CalibrationOutcome run_calibrate(const config::RunConfig &cfg, const std::optional<fs::path> &out) {
  const auto &c = std::get<config::CalibrateRun>(cfg.run);
  const auto physics = classical::make_physics(c.trap, c.particle, c.gas);
  const double omega = physics.omega();

  PulseProtocol steady{0.5, 1.0, 1.0, 0, 1, 0.0};
  classical::SimConfig sim;
  sim.dt = 2.0 * kPi / omega / c.steps_per_period;
  sim.duration = c.duration;
  sim.n_trajectories = c.n_trajectories;
  sim.master_seed = cfg.master_seed;
  sim.escape_bound = 3.0 * c.trap.waist;
  sim.record_stride = c.record_every;
  sim.threads = cfg.threads;
  sim.validate(omega, "calibration");
  const auto ens = classical::run_ensemble(steady, sim, physics, c.gas.temperature);

  CalibrationOutcome res;
  double sum_sq = 0;
  long count = 0;
  std::vector<std::span<const double>> records;
  for (const auto &t : ens.trajectories) {
    sum_sq += t.positions.squaredNorm();
    count += t.positions.size();
    records.emplace_back(t.positions.data(), static_cast<std::size_t>(t.positions.size()));
  }
  res.position_variance = sum_sq / static_cast<double>(count);
  res.expected_variance = std::pow(thermal_position_std(physics.mass, omega, c.gas.temperature), 2);
  res.omega_expected = omega;
  res.gamma_expected = physics.damping;
  const double fs_rate = 1.0 / (sim.dt * c.record_every);
  res.fit = analysis::psd_lorentzian_calibration(std::span<const std::span<const double>>(records), fs_rate);
  res.mass_estimate = Constants::kB * c.gas.temperature / (res.fit.omega0 * res.fit.omega0 * res.position_variance);

  res.report = {{"kind", "calibrate"},
                {"position_variance", res.position_variance},
                {"position_variance_expected", res.expected_variance},
                {"variance_ratio", res.position_variance / res.expected_variance},
                {"omega0", res.fit.omega0},
                {"omega_expected", omega},
                {"omega_ratio", res.fit.omega0 / omega},
                {"gamma", res.fit.gamma},
                {"gamma_expected", res.gamma_expected},
                {"gamma_ratio", res.fit.gamma / res.gamma_expected},
                {"omega0_stderr", std::sqrt(std::max(0.0, res.fit.covariance(0, 0)))},
                {"gamma_stderr", std::sqrt(std::max(0.0, res.fit.covariance(1, 1)))},
                {"mass_estimate", res.mass_estimate},
                {"mass", physics.mass},
                {"segments", res.fit.segments},
                {"sample_rate", fs_rate},
                {"n_trajectories", c.n_trajectories}};
  if (out) {
    io::write_json(*out / "report.json", res.report);
    const auto &t0 = ens.trajectories.front();
    io::write_csv(*out / "trace.csv", {"time", "x", "v"}, {t0.times, t0.positions, t0.velocities});
  }
  return res;
}

json run(const config::RunConfig &cfg) {
  const fs::path out = config::resolve_output_dir(cfg);
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec || !fs::is_directory(out)) throw ConfigError("cannot create output directory '" + out.string() + "'", "output_dir");
  {
    const auto probe = out / ".write_probe";
    std::ofstream f(probe);
    if (!f) throw ConfigError("output directory '" + out.string() + "' is not writable", "output_dir");
    f.close();
    fs::remove(probe, ec);
  }
  const auto started = std::chrono::system_clock::now();
  const auto t0 = std::chrono::steady_clock::now();
  json report;
  switch (cfg.kind) {
  case config::RunKind::classical: report = run_classical(cfg, out).report; break;
  case config::RunKind::quantum: report = run_quantum(cfg, out).report; break;
  case config::RunKind::analyze: report = run_analyze(cfg, out); break;
  case config::RunKind::calibrate: report = run_calibrate(cfg, out).report; break;
  }
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const std::time_t stamp = std::chrono::system_clock::to_time_t(started);
  char when[32];
  std::strftime(when, sizeof when, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&stamp));

  std::vector<std::string> files;
  for (const auto &e : fs::directory_iterator(out))
    if (e.is_regular_file() && e.path().filename() != "metadata.json") files.push_back(e.path().filename().string());
  std::sort(files.begin(), files.end());
  const json meta = {{"kind", config::to_string(cfg.kind)},
                     {"config_file", cfg.source.string()},
                     {"config", cfg.echo},
                     {"defaults_applied", cfg.defaults},
                     {"master_seed", cfg.master_seed},
                     {"threads", cfg.threads},
                     {"versions", {{"levitate", LEVITATE_VERSION},
                                   {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                                 std::to_string(EIGEN_MINOR_VERSION)},
                                   {"compiler", __VERSION__}}},
                     {"started_utc", when},
                     {"wall_time_s", wall},
                     {"files", files}};
  io::write_json(out / "metadata.json", meta);
  return report;
}

} // namespace levitate::pipeline
