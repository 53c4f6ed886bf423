#pragma once

// End-to-end runs behind the command-line subcommands. Each returns its
// results in memory and, given an output directory, writes them there.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "levitate/analysis.hpp"
#include "levitate/classical.hpp"
#include "levitate/config.hpp"
#include "levitate/quantum.hpp"

namespace levitate::pipeline {

struct SnapshotBimodality {
  double time = 0;
  double pulses = 0;
  int n_points = 0;
  int n_outside = 0;
  std::optional<analysis::DoubleGaussianFit> fit;
  std::optional<double> ashman_d;
  std::string error;
};

struct ClassicalOutcome {
  classical::EnsembleResult ensemble;
  std::vector<SnapshotBimodality> bimodality;
  std::optional<double> final_ashman_d; // empty when the final fit fails
  analysis::Marginal final_marginal;
  std::optional<classical::VarianceSeries> relaxation_series;
  std::optional<analysis::RelaxationFit> relaxation;
  nlohmann::json report;
};

ClassicalOutcome run_classical(const config::RunConfig &cfg, const std::optional<std::filesystem::path> &out);

/// The two highest local maxima of a smoothed series.
struct PeakPair {
  bool found = false;
  double left = 0, right = 0;     // positions, left < right
  double height_left = 0, height_right = 0;
  double dip = 0;                 // minimum between them / lower height
  double separation() const { return right - left; }
};

PeakPair principal_peak_pair(const Eigen::VectorXd &x, const Eigen::VectorXd &y);

struct QuantumStateOutcome {
  std::string label;
  std::vector<double> times;   // oscillator units
  std::vector<double> negativity;
  std::vector<double> delta_n;
  std::vector<double> purity;
  Eigen::VectorXd x;           // oscillator units
  Eigen::VectorXd marginal_initial;
  Eigen::VectorXd marginal_final;
  int final_marginal_peaks = 0;
  PeakPair peaks_initial;
  PeakPair peaks_final;
  Eigen::VectorXd populations_initial;
  Eigen::VectorXd populations_final;
  quantum::PropagationResult propagation;
  nlohmann::json report;
};

struct QuantumOutcome {
  std::vector<QuantumStateOutcome> states;
  nlohmann::json report;
};

QuantumOutcome run_quantum(const config::RunConfig &cfg, const std::optional<std::filesystem::path> &out);

/// Grid half-width used when the config leaves it out:
/// max(6 std of the state, 1.2 w0), oscillator units.
double default_half_width(const quantum::InitialStateSpec &spec, double waist);

nlohmann::json run_analyze(const config::RunConfig &cfg, const std::optional<std::filesystem::path> &out);

struct CalibrationOutcome {
  double position_variance = 0;  // m^2, pooled over records
  double expected_variance = 0;  // kB T / (m omega^2)
  double omega_expected = 0;
  double gamma_expected = 0;
  analysis::SpectrumFit fit;
  double mass_estimate = 0;      // kg, equipartition with the fitted omega0
  nlohmann::json report;
};

CalibrationOutcome run_calibrate(const config::RunConfig &cfg, const std::optional<std::filesystem::path> &out);

/// Dispatches on cfg.kind, writes outputs and metadata.json under the
/// resolved output directory, and returns the run report.
nlohmann::json run(const config::RunConfig &cfg);

/// Number of local maxima above 10% of the peak after 3-point smoothing.
int count_peaks(const Eigen::VectorXd &y);

} // namespace levitate::pipeline
