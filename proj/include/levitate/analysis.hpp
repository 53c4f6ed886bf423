#pragma once

// Phase-space densities, double-Gaussian bimodality fits, spectral
// calibration, relaxation and Duffing backbone estimates.

#include <optional>
#include <span>

#include <Eigen/Core>

#include "levitate/classical.hpp"

namespace levitate::analysis {

struct GridSpec {
  double x_min, x_max;
  int nx;
  double p_min, p_max;
  int np;
};

/// bins x bins over +-4 std per axis, symmetric about the origin.
GridSpec default_grid(const Eigen::MatrixX2d &points, int bins = 121);

struct PhaseSpaceDistribution {
  Eigen::VectorXd x_edges;  // m
  Eigen::VectorXd p_edges;  // m (p/(m omega))
  Eigen::MatrixXd density;  // nx x np, integrates to 1 over cell areas
  double bandwidth_x = 0;   // m, 0 for a raw histogram
  double bandwidth_p = 0;
  int n_points = 0;
  int n_outside = 0;        // dropped by the default grid

  double cell_area() const;
};

/// Silverman's rule in two dimensions, std * n^(-1/6), per axis.
Eigen::Vector2d silverman_bandwidth(const Eigen::MatrixX2d &points);

/// Histogram of `points` on `grid`, each point spread by a Gaussian of the
/// given bandwidth (integrated over each cell). `bandwidth` nullopt means
/// Silverman per axis; 0 gives the raw histogram. Throws if any point lies
/// outside the grid.
PhaseSpaceDistribution phase_space_density(const Eigen::MatrixX2d &points, const GridSpec &grid,
                                           std::optional<double> bandwidth = 0.0);

/// Same on default_grid(points); points beyond the grid are dropped and
/// counted in n_outside. Needs at least 10 points.
PhaseSpaceDistribution phase_space_density(const Eigen::MatrixX2d &points,
                                           std::optional<double> bandwidth = 0.0, int bins = 121);

struct Marginal {
  Eigen::VectorXd x;       // bin centres
  Eigen::VectorXd density; // unit integral
  double bin_width = 0;
};

Marginal position_marginal(const PhaseSpaceDistribution &d);

struct DoubleGaussianFit {
  double mu1 = 0, mu2 = 0;
  double sigma1 = 0, sigma2 = 0;
  double w1 = 0.5, w2 = 0.5;
  double residual_rms = 0; // rms residual / peak density
  int iterations = 0;
  bool converged = false;
};

struct DoubleGaussianOptions {
  double residual_tolerance = 0.1;
  double seed_smoothing_bins = 1.0;
  int max_iterations = 2000;
};

/// Least-squares fit of w1 N(mu1, sigma1) + w2 N(mu2, sigma2) to the
/// marginal. Seeds come from the two highest local maxima of the smoothed
/// marginal; the result is returned with mu1 <= mu2 and w1 + w2 = 1.
DoubleGaussianFit fit_double_gaussian(const Marginal &marginal, const DoubleGaussianOptions &opts = {});

/// sqrt(2) |mu1 - mu2| / sqrt(sigma1^2 + sigma2^2).
double ashman_d(double mu1, double mu2, double sigma1, double sigma2);
/// Throws NumericalError unless fit.converged.
double ashman_d(const DoubleGaussianFit &fit);

struct Spectrum {
  Eigen::VectorXd omega; // rad/s
  Eigen::VectorXd psd;   // one-sided, x^2 per (rad/s)
  int segments = 0;
};

/// Welch estimate with a Hann window and 50% overlap, mean removed per
/// segment.
Spectrum welch_psd(std::span<const double> samples, double sample_rate, int segment_length);

struct SpectrumFit {
  double omega0 = 0;     // rad/s
  double gamma = 0;      // 1/s
  double amplitude = 0;  // psd units * (rad/s)^4
  double background = 0; // psd units
  Eigen::Matrix4d covariance = Eigen::Matrix4d::Zero(); // (omega0, gamma, amplitude, background)
  int segments = 0;
  bool converged = false;
};

struct SpectrumFitOptions {
  int segment_length = 0;        // 0 picks the largest power of two giving >= 8 segments
  double min_peak_contrast = 10; // peak / median of the spectrum
  double band_half_widths = 10;  // fit window around the peak, in linewidths
};

/// Fits A / ((w^2 - w0^2)^2 + gamma^2 w^2) + B to the Welch spectrum of a
/// position record. Throws NumericalError when no resonance stands above
/// the background or the record is shorter than 100 periods.
SpectrumFit psd_lorentzian_calibration(std::span<const double> samples, double sample_rate,
                                       const SpectrumFitOptions &opts = {});

/// Same with the Welch spectra of several equally sampled records averaged.
SpectrumFit psd_lorentzian_calibration(std::span<const std::span<const double>> records, double sample_rate,
                                       const SpectrumFitOptions &opts = {});

struct RelaxationFit {
  double tau = 0;
  double var_initial = 0;
  double var_final = 0;
  double tau_stderr = 0;
  bool converged = false;
};

/// var(t) = var_inf + (var_0 - var_inf) exp(-(t - t_0) / tau), t_0 the
/// first sample time.
RelaxationFit relaxation_time(std::span<const double> times, std::span<const double> variances);
RelaxationFit relaxation_time(const classical::VarianceSeries &series);

struct BackboneFit {
  double omega0 = 0;    // rad/s
  double xi = 0;        // 1/m^2
  double xi_stderr = 0;
  int n_cycles = 0;
  int n_bins = 0;
};

/// Instantaneous frequency from successive upward zero crossings against
/// squared cycle amplitude; fits omega = omega0 (1 + 3 xi A^2 / 8).
BackboneFit duffing_backbone(std::span<const classical::Trajectory> trajectories, int amplitude_bins);

} // namespace levitate::analysis
