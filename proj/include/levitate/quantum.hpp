#pragma once

// Position-grid density-matrix dynamics in the pulsed inverted-Gaussian
// well with recoil dephasing, and phase-space diagnostics of the result.
//
// Everything here works in oscillator units: hbar = m = omega = 1, so
// lengths are in sqrt(hbar/(m omega)) = sqrt(2) x_zpf, momenta in
// sqrt(hbar m omega), times in 1/omega. QuantumUnits converts to SI.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "levitate/protocol.hpp"

namespace levitate::quantum {

struct QuantumUnits {
  double mass = 1;  // kg
  double omega = 1; // rad/s, harmonic frequency of the undriven well

  double length() const;   // m
  double momentum() const; // kg m/s
  double time() const { return 1.0 / omega; }
  double energy() const;   // J
};

/// Periodic grid x_i = x_min + i * spacing, i < n_points; x_max itself is
/// the image of x_min.
struct QuantumGrid {
  int n_points = 0;
  double x_min = 0;
  double x_max = 0;

  double spacing() const { return (x_max - x_min) / n_points; }
  Eigen::VectorXd positions() const;
  /// Kinetic-step momenta in FFT order, 2 pi k / (n spacing).
  Eigen::VectorXd fft_momenta() const;
  void validate(const std::string &path = "grid") const;
};

/// n_points (power of two, >= 128) over [-half_width, half_width).
QuantumGrid make_grid(int n_points, double half_width);

/// rho(x_i, x_j) as a kernel: trace * spacing = 1.
struct DensityMatrix {
  QuantumGrid grid;
  Eigen::MatrixXcd elements;

  double trace() const;
  double hermiticity_error() const;
};

struct HamiltonianTerms {
  Eigen::VectorXd kinetic;   // p_k^2 / 2m in FFT order
  Eigen::VectorXd potential; // V(x_i) at S = 1
  double mass = 1;
  double harmonic_omega = 0; // sqrt(V''(0) / m), 0 if not confining
};

/// V(x) = -U0 exp(-2 x^2 / w0^2). Requires spacing <= w0/32 and
/// spacing <= (pi/4) / p_max_expected; throws ConfigError otherwise.
HamiltonianTerms build_hamiltonian_terms(const QuantumGrid &grid, double u0, double waist, double mass,
                                         double p_max_expected);

/// V = m omega^2 x^2 / 2.
HamiltonianTerms harmonic_terms(const QuantumGrid &grid, double mass = 1.0, double omega = 1.0);

/// Oscillator eigenfunctions psi_0..psi_{n_max} sampled on x (columns).
Eigen::MatrixXd hermite_functions(const Eigen::VectorXd &x, int n_max);

enum class StateKind { thermal, fock, blurred_fock, gaussian };

StateKind parse_state_kind(const std::string &name);
std::string to_string(StateKind kind);

struct InitialStateSpec {
  StateKind kind = StateKind::thermal;
  double n_mean = 0;   // thermal
  int n = 0;           // fock; centre for blurred_fock
  double sigma_n = 5;  // blurred_fock
  double width = 0;    // gaussian, position std
  double centre = 0;   // gaussian displacement

  void validate(const std::string &path = "state") const;
  /// Occupation weights over oscillator levels (empty for gaussian),
  /// truncated once the remaining tail is below 1e-12 and renormalized.
  std::vector<double> level_weights() const;
};

/// Fails when the state's density at either grid edge exceeds 1e-12.
DensityMatrix prepare_initial_state(const InitialStateSpec &spec, const QuantumGrid &grid);

struct PropagationOptions {
  std::vector<double> snapshot_times; // kept states, in (0, t_final]
  int positivity_check_every = 1000;  // steps; 0 disables
  int threads = 1;
};

struct PropagationResult {
  DensityMatrix state;
  std::vector<double> snapshot_times;
  std::vector<DensityMatrix> snapshots;
  double dt = 0; // t_final / steps
  long steps = 0;
  double max_trace_drift = 0;
  double max_hermiticity_error = 0;
  double min_eigenvalue = 0; // most negative spot-checked eigenvalue of rho * spacing
  double max_edge_density = 0;
};

/// Strang splitting per step: half kinetic, potential S(t) V and dephasing
/// exp(-lambda (x - x')^2 dt), half kinetic. S is held at its value at the
/// start of each step. dt is shrunk so that t_final is a whole number of
/// steps and must not exceed 2 pi / 500.
PropagationResult propagate(const DensityMatrix &rho, const HamiltonianTerms &terms,
                            const PulseProtocol &protocol, double t_final, double lambda, double dt,
                            const PropagationOptions &opts = {});

struct WignerDistribution {
  Eigen::VectorXd x; // grid positions
  Eigen::VectorXd p; // pi m / (n spacing), m = -n/2 .. n/2 - 1
  Eigen::MatrixXd values; // rows x, columns p

  double cell_area() const;
  double integral() const;
};

/// Anti-diagonal Fourier transform. Throws if the imaginary residue exceeds
/// 1e-10.
WignerDistribution wigner_transform(const DensityMatrix &rho, int threads = 1);

/// Integral of W over its negative region (<= 0).
double wigner_negativity(const WignerDistribution &w);

/// |N(t)| - |N(0)| per entry.
std::vector<double> negativity_increment(const std::vector<double> &negativity);

/// Tr(rho^2) spacing^2.
double purity(const DensityMatrix &rho);

/// W integrated over p.
Eigen::VectorXd marginal_wigner_x(const WignerDistribution &w);

/// <n|rho|n> spacing^2 for n = 0..n_max.
Eigen::VectorXd fock_populations(const DensityMatrix &rho, int n_max);

/// Half the trace norm of rho1 - rho2.
double trace_distance(const DensityMatrix &a, const DensityMatrix &b);

/// Smallest eigenvalue of rho * spacing.
double min_eigenvalue(const DensityMatrix &rho);

/// <x^2> - <x>^2 from the diagonal.
double position_variance(const DensityMatrix &rho);

} // namespace levitate::quantum
