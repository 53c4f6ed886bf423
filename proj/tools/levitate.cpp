#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "levitate/config.hpp"
#include "levitate/error.hpp"
#include "levitate/io.hpp"
#include "levitate/pipelines.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace levitate;

namespace {

int report_error(const std::string &type, const std::string &message, json extra = json::object()) {
  extra["type"] = type;
  extra["message"] = message;
  std::cerr << json{{"error", extra}}.dump() << "\n";
  return type == "config" ? 1 : 2;
}

void apply_overrides(config::RunConfig &cfg, std::optional<int> threads, const std::string &output_dir) {
  if (threads) {
    if (*threads < 1) throw ConfigError("must be >= 1", "--threads");
    cfg.threads = *threads;
  }
  if (!output_dir.empty()) {
    cfg.output_dir = output_dir;
    unsetenv("LEVITATE_OUTPUT_DIR");
  }
}

Eigen::VectorXd centres(const json &edges) {
  const auto e = edges.get<std::vector<double>>();
  Eigen::VectorXd c(static_cast<Eigen::Index>(e.size()) - 1);
  for (Eigen::Index i = 0; i < c.size(); ++i) c(i) = 0.5 * (e[i] + e[i + 1]);
  return c;
}

Eigen::VectorXd as_vector(const json &j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

// Long-format CSVs from the binary matrices and JSON series of a results directory.
json plot_data(const fs::path &dir, const fs::path &dest) {
  if (!fs::is_directory(dir)) throw ConfigError("not a results directory: '" + dir.string() + "'", "--input");
  fs::create_directories(dest);
  json written = json::array();
  for (const auto &entry : fs::directory_iterator(dir)) {
    const auto path = entry.path();
    if (path.extension() == ".bin") {
      const auto base = path.parent_path() / path.stem();
      const auto header = io::read_json(base.string() + ".json");
      const auto m = io::read_matrix(base);
      Eigen::VectorXd xs, ps;
      if (header.contains("x_edges")) {
        xs = centres(header["x_edges"]);
        ps = centres(header["p_edges"]);
      } else {
        xs = as_vector(header["x"]);
        ps = as_vector(header["p"]);
      }
      const Eigen::Index n = m.rows() * m.cols();
      Eigen::VectorXd cx(n), cp(n), cv(n);
      for (Eigen::Index i = 0; i < m.rows(); ++i)
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
          const auto k = i * m.cols() + j;
          cx(k) = xs(i);
          cp(k) = ps(j);
          cv(k) = m(i, j);
        }
      const auto name = path.stem().string() + ".csv";
      io::write_csv(dest / name, {"x", "p", "value"}, {cx, cp, cv});
      written.push_back(name);
    } else if (path.extension() == ".json" && path.stem().string().ends_with("_diagnostics")) {
      const auto d = io::read_json(path);
      const auto name = path.stem().string().substr(0, path.stem().string().size() - 12) + "_series.csv";
      io::write_csv(dest / name, {"omega_t", "time", "negativity", "delta_n", "purity"},
                    {as_vector(d["omega_t"]), as_vector(d["time_s"]), as_vector(d["negativity"]),
                     as_vector(d["delta_n"]), as_vector(d["purity"])});
      written.push_back(name);
    } else if (path.filename() == "report.json") {
      const auto r = io::read_json(path);
      if (r.value("kind", "") != "classical") continue;
      std::vector<double> t, pulses, ad;
      for (const auto &s : r["snapshots"]) {
        if (s["ashman_d"].is_null()) continue;
        t.push_back(s["time"]);
        pulses.push_back(s["pulses"]);
        ad.push_back(s["ashman_d"]);
      }
      auto vec = [](const std::vector<double> &v) {
        return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())).eval();
      };
      io::write_csv(dest / "ashman_d.csv", {"time", "pulses", "ashman_d"}, {vec(t), vec(pulses), vec(ad)});
      written.push_back("ashman_d.csv");
    }
  }
  return {{"plot_data", dest.string()}, {"files", written}};
}

} // namespace

int main(int argc, char **argv) {
  CLI::App app{"levitate: pulsed-trap squeezing of a levitated nanoparticle"};
  app.require_subcommand(1);

  std::string config_path, output_dir, input;
  std::optional<int> threads;

  auto *run = app.add_subcommand("run", "run a configuration and write its results");
  run->add_option("--config,-c", config_path, "YAML configuration")->required();
  run->add_option("--threads,-j", threads, "worker threads");
  run->add_option("--output-dir,-o", output_dir, "output directory");

  bool psd = false, bimodality = false, backbone = false;
  std::string column = "x";
  std::optional<double> sample_rate;
  int bins = 121;
  auto *analyze = app.add_subcommand("analyze", "analyze an existing CSV trace or point cloud");
  analyze->add_option("--config,-c", config_path, "YAML configuration of kind analyze");
  analyze->add_option("--input,-i", input, "CSV input");
  auto *mode = analyze->add_option_group("mode");
  mode->add_flag("--psd", psd, "Lorentzian PSD fit of a position trace");
  mode->add_flag("--bimodality", bimodality, "double-Gaussian fit of an x,p point cloud");
  mode->add_flag("--backbone", backbone, "Duffing backbone of free oscillations");
  mode->require_option(0, 1);
  analyze->add_option("--column", column, "trace column");
  analyze->add_option("--sample-rate", sample_rate, "Hz, default from the time column");
  analyze->add_option("--bins", bins, "density grid bins per axis");
  analyze->add_option("--threads,-j", threads, "worker threads");
  analyze->add_option("--output-dir,-o", output_dir, "output directory");

  auto *calibrate = app.add_subcommand("calibrate", "steady-trap equipartition and PSD calibration");
  calibrate->add_option("--config,-c", config_path, "YAML configuration of kind calibrate")->required();
  calibrate->add_option("--threads,-j", threads, "worker threads");
  calibrate->add_option("--output-dir,-o", output_dir, "output directory");

  auto *validate = app.add_subcommand("validate-config", "load a configuration and print it with defaults");
  validate->add_option("--config,-c", config_path, "YAML configuration")->required();

  auto *plot = app.add_subcommand("plot-data", "long-format CSVs from a results directory");
  plot->add_option("--input,-i", input, "results directory")->required();
  plot->add_option("--output-dir,-o", output_dir, "destination, default <input>/plot");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp &e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp &e) {
    return app.exit(e);
  } catch (const CLI::ParseError &e) {
    return report_error("config", e.what(), {{"stage", "command line"}});
  }

  try {
    if (*validate) {
      const auto cfg = config::load_config(config_path);
      std::cout << json{{"kind", config::to_string(cfg.kind)},
                        {"valid", true},
                        {"output_dir", config::resolve_output_dir(cfg).string()},
                        {"defaults_applied", cfg.defaults}}
                       .dump(2)
                << "\n";
      return 0;
    }
    if (*plot) {
      const fs::path dest = output_dir.empty() ? fs::path(input) / "plot" : fs::path(output_dir);
      std::cout << plot_data(input, dest).dump(2) << "\n";
      return 0;
    }

    config::RunConfig cfg;
    if (*analyze && config_path.empty()) {
      if (input.empty()) throw ConfigError("either --config or --input is required", "--input");
      config::AnalyzeRun a;
      a.input = input;
      a.column = column;
      a.sample_rate = sample_rate;
      a.analysis.bins = bins;
      a.mode = bimodality ? config::AnalyzeMode::bimodality
               : backbone ? config::AnalyzeMode::backbone
                          : config::AnalyzeMode::psd;
      cfg.kind = config::RunKind::analyze;
      cfg.source = input;
      cfg.output_dir = fs::path("results") / ("analyze_" + fs::path(input).stem().string());
      cfg.echo = {{"kind", "analyze"},
                  {"analyze", {{"input", input}, {"mode", a.mode == config::AnalyzeMode::psd ? "psd"
                                                         : a.mode == config::AnalyzeMode::bimodality ? "bimodality"
                                                                                                     : "backbone"},
                               {"column", column}}}};
      cfg.run = a;
    } else {
      cfg = config::load_config(config_path);
      const auto expected = *analyze ? std::optional(config::RunKind::analyze)
                            : *calibrate ? std::optional(config::RunKind::calibrate)
                                         : std::nullopt;
      if (expected && cfg.kind != *expected)
        throw ConfigError("subcommand expects kind '" + config::to_string(*expected) + "', file has '" +
                              config::to_string(cfg.kind) + "'",
                          "kind");
      if (*analyze && !input.empty()) std::get<config::AnalyzeRun>(cfg.run).input = input;
    }
    apply_overrides(cfg, threads, output_dir);
    const auto report = pipeline::run(cfg);
    std::cout << json{{"kind", config::to_string(cfg.kind)},
                      {"output_dir", config::resolve_output_dir(cfg).string()},
                      {"report", report}}
                     .dump(2)
              << "\n";
    return 0;
  } catch (const ConfigError &e) {
    return report_error("config", e.what(), {{"key", e.key()}});
  } catch (const NumericalError &e) {
    return report_error("numerical", e.what(), {{"operation", e.operation()}});
  } catch (const std::exception &e) {
    return report_error("runtime", e.what());
  }
}
