#pragma once

// Run configuration files: YAML, SI units throughout. Every key that is
// left out and filled by a default is reported in `defaults`.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "levitate/analysis.hpp"
#include "levitate/classical.hpp"
#include "levitate/model.hpp"
#include "levitate/protocol.hpp"
#include "levitate/quantum.hpp"

namespace levitate::config {

enum class RunKind { classical, quantum, analyze, calibrate };

std::string to_string(RunKind kind);

enum class ForceKind { gaussian, linear, duffing };

struct AnalysisSettings {
  int bins = 121;
  std::optional<double> bandwidth = 0.0; // m; nullopt is Silverman's rule
  int amplitude_bins = 12;
};

struct RelaxationSettings {
  double duration = 0; // s
  int steps_per_period = 200;
  int record_every = 10;
  int n_trajectories = 300;
  double window = 0; // s, variance pooling window
};

struct ClassicalRun {
  ParticleSpec particle;
  GasEnvironment gas;
  TrapSpec trap;             // depth_scale already calibrated
  PulseProtocol protocol;
  classical::SimConfig sim;
  ForceKind force = ForceKind::gaussian;
  double initial_temperature = 0;
  std::vector<double> snapshot_pulses; // snapshot times in pulse periods
  AnalysisSettings analysis;
  std::optional<RelaxationSettings> relaxation;
};

struct QuantumStateRun {
  std::string label;
  quantum::InitialStateSpec spec;
};

struct QuantumRun {
  quantum::QuantumUnits units;
  double depth_levels = 100;    // U0 / (hbar omega)
  double gamma_over_omega = 0;  // recoil rate in units of omega
  PulseProtocol protocol;       // oscillator units
  double duration = 0;          // oscillator units (omega t)
  std::string time_reading = "periods";
  int steps_per_period = 2000;
  int n_snapshots = 11;
  int n_points = 512;
  std::optional<double> half_width; // oscillator units
  int positivity_check_every = 1000;
  int fock_levels = 60;
  bool export_wigner = true;
  std::vector<QuantumStateRun> states;
};

enum class AnalyzeMode { psd, bimodality, backbone };

struct AnalyzeRun {
  AnalyzeMode mode = AnalyzeMode::psd;
  std::filesystem::path input;
  std::string column = "x";
  std::optional<double> sample_rate; // Hz; from the time column if absent
  analysis::SpectrumFitOptions psd;
  AnalysisSettings analysis;
};

struct CalibrateRun {
  ParticleSpec particle;
  GasEnvironment gas;
  TrapSpec trap;
  double duration = 0; // s per record
  int steps_per_period = 200;
  int record_every = 10;
  int n_trajectories = 16;
};

struct RunConfig {
  RunKind kind = RunKind::classical;
  std::filesystem::path source;
  std::filesystem::path output_dir;
  std::uint64_t master_seed = 0;
  int threads = 1;
  std::variant<ClassicalRun, QuantumRun, AnalyzeRun, CalibrateRun> run;
  nlohmann::json echo;     // the file as parsed
  nlohmann::json defaults; // dotted key -> applied default
};

/// Throws ConfigError naming the offending key (and line when known).
RunConfig load_config(const std::filesystem::path &path);
RunConfig parse_config(const std::string &text, const std::filesystem::path &source = "<string>");

/// Output directory after the LEVITATE_OUTPUT_DIR override, if set.
std::filesystem::path resolve_output_dir(const RunConfig &cfg);

} // namespace levitate::config
