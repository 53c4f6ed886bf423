#pragma once

// Stochastic Langevin integration of the trapped-particle x motion under a
// pulsed stiffness protocol, and seeded ensembles of such trajectories.

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Core>

#include "levitate/model.hpp"
#include "levitate/protocol.hpp"
#include "levitate/rng.hpp"

namespace levitate::classical {

/// a(x) = -omega^2 x exp(-2 x^2 / w0^2), the inverted-Gaussian trap.
struct GaussianForce {
  double omega;
  double waist;
  double acceleration(double x) const {
    return -omega * omega * x * std::exp(-2.0 * x * x / (waist * waist));
  }
};

/// First-order expansion of GaussianForce.
struct LinearForce {
  double omega;
  double acceleration(double x) const { return -omega * omega * x; }
};

/// a(x) = -omega^2 (x + xi x^3).
struct DuffingForce {
  double omega;
  double xi;
  double acceleration(double x) const { return -omega * omega * (x + xi * x * x * x); }
};

using ForceModel = std::variant<GaussianForce, LinearForce, DuffingForce>;

double force_omega(const ForceModel &force);

/// Everything the integrator needs about the particle and its bath.
struct LangevinPhysics {
  double mass;        // kg
  double damping;     // Gamma_m, 1/s
  double temperature; // K
  ForceModel force;

  double omega() const { return force_omega(force); }
  /// Velocity-noise amplitude sqrt(2 Gamma kB T / m), in m s^-3/2.
  double noise_amplitude() const;
};

/// Physics handles for an inverted-Gaussian trap at power_high.
LangevinPhysics make_physics(const TrapSpec &trap, const ParticleSpec &particle,
                             const GasEnvironment &gas);

enum class StepScheme {
  semi_implicit,  // v first, then x with the new v
  explicit_euler, // plain Euler-Maruyama, x with the old v
  velocity_verlet // kick-drift-kick, each half kick carrying half the noise
};

StepScheme parse_step_scheme(const std::string &name);
std::string to_string(StepScheme scheme);

struct SimConfig {
  double dt = 0;                     // s
  double duration = 0;               // s
  std::vector<double> snapshot_times; // s, ascending, within [0, duration]
  int n_trajectories = 1;
  std::uint64_t master_seed = 0;
  double escape_bound = 0;           // m
  StepScheme scheme = StepScheme::semi_implicit;
  int record_stride = 0;             // keep every k-th step; 0 keeps none
  int threads = 1;
  /// Each step's noise is the normalized sum of this many unit draws, so a
  /// run at dt with k substeps follows the same Brownian path as one at
  /// dt/k with 1. Not available for velocity_verlet.
  int noise_substeps = 1;

  void validate(double omega, const std::string &path = "sim") const;
};

/// min(T/1000, tau_low/50).
double default_time_step(double omega, const PulseProtocol &protocol);

struct PhaseState {
  double x; // m
  double v; // m/s
};

struct Trajectory {
  Eigen::VectorXd times;
  Eigen::VectorXd positions;
  Eigen::VectorXd velocities;
  /// One row per snapshot time: (x, v). Rows after an escape are NaN.
  Eigen::MatrixX2d snapshots;
  PhaseState final_state{0.0, 0.0}; // state where integration stopped
  bool escaped = false;
  std::uint64_t seed = 0;
};

/// One point per surviving trajectory per snapshot; columns (x, v/omega).
struct EnsembleSnapshot {
  double time;
  Eigen::MatrixX2d points;
  std::vector<int> trajectory_index;
};

struct EnsembleResult {
  std::vector<EnsembleSnapshot> snapshots;
  int n_trajectories = 0;
  int n_escaped = 0;
  double omega = 0;
  /// Filled only when SimConfig::record_stride > 0.
  std::vector<Trajectory> trajectories;
};

/// x ~ N(0, kB T/(m omega^2)), v ~ N(0, kB T/m).
PhaseState sample_thermal_state(RandomStream &rng, double mass, double omega, double temperature);

/// One step with S held constant, given unit normal deviates. `noise[1]` is
/// used only by velocity_verlet.
PhaseState euler_maruyama_step(PhaseState state, double dt, double s, const LangevinPhysics &physics,
                               StepScheme scheme, std::array<double, 2> noise);

PhaseState euler_maruyama_step(PhaseState state, double dt, double s, const LangevinPhysics &physics,
                               StepScheme scheme, RandomStream &rng);

/// Integrates from t = 0 to cfg.duration with S(t) evaluated at the start
/// of each step. Noise is drawn from `rng`; pass a zero-temperature physics
/// for deterministic runs. `seed` only labels the result and error reports.
Trajectory simulate_trajectory(PhaseState init, const PulseProtocol &protocol, const SimConfig &cfg,
                               const LangevinPhysics &physics, RandomStream &rng,
                               std::uint64_t seed = 0);

/// Trajectory i starts from a thermal draw on stream_seed(master_seed, i).
/// Throws if more than half the trajectories escape.
EnsembleResult run_ensemble(const PulseProtocol &protocol, const SimConfig &cfg,
                            const LangevinPhysics &physics, double initial_temperature);

struct RelaxationConfig {
  double dt = 0;       // s
  double duration = 0; // s, after the end of the train
  int record_stride = 1;
  int n_trajectories = 1;

  void validate(double omega, const std::string &path = "relaxation") const;
};

/// Trajectory i repeats run_ensemble's trajectory i through the pulse
/// train, then continues at full stiffness on the same stream. Returned
/// trajectories hold only the post-train record, times measured from the
/// end of the train; escaped trajectories are left out.
std::vector<Trajectory> run_relaxation(const PulseProtocol &protocol, const SimConfig &train,
                                       const RelaxationConfig &relax, const LangevinPhysics &physics,
                                       double initial_temperature);

struct VarianceSeries {
  Eigen::VectorXd times;  // bin centres
  Eigen::VectorXd std_x;
  Eigen::VectorXi counts;
};

/// Ensemble std of x pooled over fixed windows; bins with < 2 samples are
/// skipped.
VarianceSeries variance_timeseries(std::span<const Trajectory> trajectories, double window);

} // namespace levitate::classical
