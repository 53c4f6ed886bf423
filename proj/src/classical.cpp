#include "levitate/classical.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <thread>

#include "levitate/error.hpp"

namespace levitate::classical {

double force_omega(const ForceModel &force) {
  return std::visit([](const auto &f) { return f.omega; }, force);
}

double LangevinPhysics::noise_amplitude() const {
  return std::sqrt(2.0 * damping * Constants::kB * temperature / mass);
}

LangevinPhysics make_physics(const TrapSpec &trap, const ParticleSpec &particle,
                             const GasEnvironment &gas) {
  const double omega = trap_frequency(trap, particle, trap.power_high);
  return {particle_mass(particle), gas_damping_rate(particle, gas), gas.temperature,
          GaussianForce{omega, trap.waist}};
}

StepScheme parse_step_scheme(const std::string &name) {
  if (name == "semi_implicit") return StepScheme::semi_implicit;
  if (name == "explicit") return StepScheme::explicit_euler;
  if (name == "velocity_verlet") return StepScheme::velocity_verlet;
  throw ConfigError("unknown scheme '" + name + "' (semi_implicit, explicit, velocity_verlet)");
}

std::string to_string(StepScheme scheme) {
  switch (scheme) {
  case StepScheme::semi_implicit: return "semi_implicit";
  case StepScheme::explicit_euler: return "explicit";
  case StepScheme::velocity_verlet: return "velocity_verlet";
  }
  return "semi_implicit";
}

void SimConfig::validate(double omega, const std::string &path) const {
  const double period = 2.0 * kPi / omega;
  if (!(dt > 0)) throw ConfigError("dt must be > 0", path + ".dt");
  if (dt > period / 200.0 * (1.0 + 1e-12))
    throw ConfigError("dt must not exceed one 200th of the trap period", path + ".dt");
  if (!(duration > 0)) throw ConfigError("duration must be > 0", path + ".duration");
  if (!std::is_sorted(snapshot_times.begin(), snapshot_times.end()))
    throw ConfigError("snapshot_times must be ascending", path + ".snapshot_times");
  for (double t : snapshot_times)
    if (t < 0 || t > duration * (1.0 + 1e-12))
      throw ConfigError("snapshot_times must lie within [0, duration]", path + ".snapshot_times");
  if (n_trajectories < 1) throw ConfigError("n_trajectories must be >= 1", path + ".n_trajectories");
  if (!(escape_bound > 0)) throw ConfigError("escape_bound must be > 0", path + ".escape_bound");
  if (record_stride < 0) throw ConfigError("record_stride must be >= 0", path + ".record_stride");
  if (threads < 1) throw ConfigError("threads must be >= 1", path + ".threads");
  if (noise_substeps < 1) throw ConfigError("noise_substeps must be >= 1", path + ".noise_substeps");
  if (noise_substeps > 1 && scheme == StepScheme::velocity_verlet)
    throw ConfigError("noise_substeps > 1 is not available for velocity_verlet", path + ".noise_substeps");
}

void RelaxationConfig::validate(double omega, const std::string &path) const {
  const double period = 2.0 * kPi / omega;
  if (!(dt > 0) || dt > period / 200.0 * (1.0 + 1e-12))
    throw ConfigError("dt must lie in (0, T/200]", path + ".dt");
  if (!(duration > dt)) throw ConfigError("duration must exceed dt", path + ".duration");
  if (record_stride < 1) throw ConfigError("record_stride must be >= 1", path + ".record_stride");
  if (n_trajectories < 1) throw ConfigError("n_trajectories must be >= 1", path + ".n_trajectories");
}

double default_time_step(double omega, const PulseProtocol &protocol) {
  const double period = 2.0 * kPi / omega;
  double dt = period / 1000.0;
  if (protocol.n_pulses > 0) dt = std::min(dt, protocol.tau_low / 50.0);
  return dt;
}

PhaseState sample_thermal_state(RandomStream &rng, double mass, double omega, double temperature) {
  std::normal_distribution<double> normal(0.0, 1.0);
  const double sv = std::sqrt(Constants::kB * temperature / mass);
  const double sx = sv / omega;
  const double nx = normal(rng);
  const double nv = normal(rng);
  return {sx * nx, sv * nv};
}

namespace {

template <typename Force>
PhaseState step_impl(PhaseState s, double dt, double stiffness, const Force &force, double gamma,
                     double amp, StepScheme scheme, const std::array<double, 2> &noise) {
  switch (scheme) {
  case StepScheme::semi_implicit: {
    const double v = s.v + dt * (-gamma * s.v + stiffness * force.acceleration(s.x)) +
                     amp * std::sqrt(dt) * noise[0];
    return {s.x + dt * v, v};
  }
  case StepScheme::explicit_euler: {
    const double v = s.v + dt * (-gamma * s.v + stiffness * force.acceleration(s.x)) +
                     amp * std::sqrt(dt) * noise[0];
    return {s.x + dt * s.v, v};
  }
  case StepScheme::velocity_verlet: {
    const double h = 0.5 * dt;
    const double kick = amp * std::sqrt(h);
    const double vh = s.v + h * (-gamma * s.v + stiffness * force.acceleration(s.x)) + kick * noise[0];
    const double x = s.x + dt * vh;
    const double v = vh + h * (-gamma * vh + stiffness * force.acceleration(x)) + kick * noise[1];
    return {x, v};
  }
  }
  return s;
}

} // namespace

PhaseState euler_maruyama_step(PhaseState state, double dt, double s, const LangevinPhysics &physics,
                               StepScheme scheme, std::array<double, 2> noise) {
  const double amp = physics.noise_amplitude();
  return std::visit(
      [&](const auto &f) { return step_impl(state, dt, s, f, physics.damping, amp, scheme, noise); },
      physics.force);
}

PhaseState euler_maruyama_step(PhaseState state, double dt, double s, const LangevinPhysics &physics,
                               StepScheme scheme, RandomStream &rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::array<double, 2> noise{normal(rng), 0.0};
  if (scheme == StepScheme::velocity_verlet) noise[1] = normal(rng);
  return euler_maruyama_step(state, dt, s, physics, scheme, noise);
}

namespace {

template <typename Force>
Trajectory integrate(PhaseState state, const PulseProtocol &protocol, const SimConfig &cfg,
                     const Force &force, const LangevinPhysics &physics, RandomStream &rng,
                     std::uint64_t seed) {
  const long long n_steps = std::llround(cfg.duration / cfg.dt);
  const double amp = physics.noise_amplitude();
  const bool two_draws = cfg.scheme == StepScheme::velocity_verlet;
  const int substeps = std::max(1, cfg.noise_substeps);
  const double substep_norm = 1.0 / std::sqrt(static_cast<double>(substeps));
  std::normal_distribution<double> normal(0.0, 1.0);

  std::vector<long long> snap_steps;
  snap_steps.reserve(cfg.snapshot_times.size());
  for (double t : cfg.snapshot_times)
    snap_steps.push_back(std::min(n_steps, std::llround(t / cfg.dt)));

  Trajectory traj;
  traj.seed = seed;
  traj.snapshots.setConstant(static_cast<Eigen::Index>(snap_steps.size()), 2,
                             std::numeric_limits<double>::quiet_NaN());
  Eigen::Index n_rec = 0;
  if (cfg.record_stride > 0) {
    const Eigen::Index cap = static_cast<Eigen::Index>(n_steps / cfg.record_stride + 1);
    traj.times.resize(cap);
    traj.positions.resize(cap);
    traj.velocities.resize(cap);
  }

  std::size_t next_snap = 0;
  for (long long k = 0;; ++k) {
    while (next_snap < snap_steps.size() && snap_steps[next_snap] == k) {
      traj.snapshots(static_cast<Eigen::Index>(next_snap), 0) = state.x;
      traj.snapshots(static_cast<Eigen::Index>(next_snap), 1) = state.v;
      ++next_snap;
    }
    if (cfg.record_stride > 0 && k % cfg.record_stride == 0) {
      traj.times(n_rec) = static_cast<double>(k) * cfg.dt;
      traj.positions(n_rec) = state.x;
      traj.velocities(n_rec) = state.v;
      ++n_rec;
    }
    if (k == n_steps) break;

    const double t = static_cast<double>(k) * cfg.dt;
    const double s = control_average(protocol, t, t + cfg.dt);
    std::array<double, 2> noise{normal(rng), 0.0};
    if (two_draws) noise[1] = normal(rng);
    if (substeps > 1) {
      for (int j = 1; j < substeps; ++j) noise[0] += normal(rng);
      noise[0] *= substep_norm;
    }
    state = step_impl(state, cfg.dt, s, force, physics.damping, amp, cfg.scheme, noise);

    if (!std::isfinite(state.x) || !std::isfinite(state.v))
      throw NumericalError("euler_maruyama_step", "non-finite state at step " + std::to_string(k + 1) +
                                                      " of trajectory seed " + std::to_string(seed));
    if (std::abs(state.x) > cfg.escape_bound) {
      traj.escaped = true;
      break;
    }
  }
  traj.final_state = state;
  if (cfg.record_stride > 0) {
    traj.times.conservativeResize(n_rec);
    traj.positions.conservativeResize(n_rec);
    traj.velocities.conservativeResize(n_rec);
  }
  return traj;
}

} // namespace

Trajectory simulate_trajectory(PhaseState init, const PulseProtocol &protocol, const SimConfig &cfg,
                               const LangevinPhysics &physics, RandomStream &rng, std::uint64_t seed) {
  return std::visit(
      [&](const auto &f) { return integrate(init, protocol, cfg, f, physics, rng, seed); },
      physics.force);
}

EnsembleResult run_ensemble(const PulseProtocol &protocol, const SimConfig &cfg,
                            const LangevinPhysics &physics, double initial_temperature) {
  const double omega = physics.omega();
  const int n = cfg.n_trajectories;
  std::vector<Trajectory> trajs(static_cast<std::size_t>(n));

  std::atomic<int> next{0};
  auto worker = [&] {
    for (int i = next++; i < n; i = next++) {
      const std::uint64_t seed = stream_seed(cfg.master_seed, static_cast<std::uint64_t>(i));
      RandomStream rng(seed);
      const PhaseState init = sample_thermal_state(rng, physics.mass, omega, initial_temperature);
      trajs[static_cast<std::size_t>(i)] = simulate_trajectory(init, protocol, cfg, physics, rng, seed);
    }
  };
  const int n_threads = std::max(1, std::min(cfg.threads, n));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int w = 0; w < n_threads; ++w) pool.emplace_back(worker);
  }

  EnsembleResult result;
  result.n_trajectories = n;
  result.omega = omega;
  for (const auto &t : trajs) result.n_escaped += t.escaped ? 1 : 0;
  if (2 * result.n_escaped > n)
    throw NumericalError("run_ensemble", std::to_string(result.n_escaped) + " of " + std::to_string(n) +
                                             " trajectories escaped");

  for (std::size_t j = 0; j < cfg.snapshot_times.size(); ++j) {
    EnsembleSnapshot snap;
    snap.time = std::min(cfg.duration, std::llround(cfg.snapshot_times[j] / cfg.dt) * cfg.dt);
    std::vector<int> alive;
    for (int i = 0; i < n; ++i)
      if (std::isfinite(trajs[static_cast<std::size_t>(i)].snapshots(static_cast<Eigen::Index>(j), 0)))
        alive.push_back(i);
    snap.points.resize(static_cast<Eigen::Index>(alive.size()), 2);
    for (std::size_t r = 0; r < alive.size(); ++r) {
      const auto &row = trajs[static_cast<std::size_t>(alive[r])].snapshots.row(static_cast<Eigen::Index>(j));
      snap.points(static_cast<Eigen::Index>(r), 0) = row(0);
      snap.points(static_cast<Eigen::Index>(r), 1) = row(1) / omega;
    }
    snap.trajectory_index = std::move(alive);
    result.snapshots.push_back(std::move(snap));
  }
  if (cfg.record_stride > 0) result.trajectories = std::move(trajs);
  return result;
}

std::vector<Trajectory> run_relaxation(const PulseProtocol &protocol, const SimConfig &train,
                                       const RelaxationConfig &relax, const LangevinPhysics &physics,
                                       double initial_temperature) {
  const double omega = physics.omega();
  relax.validate(omega);
  const int n = relax.n_trajectories;
  SimConfig train_cfg = train;
  train_cfg.snapshot_times.clear();
  train_cfg.record_stride = 0;
  SimConfig relax_cfg = train;
  relax_cfg.dt = relax.dt;
  relax_cfg.duration = relax.duration;
  relax_cfg.snapshot_times.clear();
  relax_cfg.record_stride = relax.record_stride;
  relax_cfg.noise_substeps = 1;
  const PulseProtocol steady{protocol.s_low, protocol.tau_high, protocol.tau_low, 0, 1, 0.0};

  std::vector<Trajectory> trajs(static_cast<std::size_t>(n));
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int i = next++; i < n; i = next++) {
      const std::uint64_t seed = stream_seed(train.master_seed, static_cast<std::uint64_t>(i));
      RandomStream rng(seed);
      const PhaseState init = sample_thermal_state(rng, physics.mass, omega, initial_temperature);
      Trajectory pulsed = simulate_trajectory(init, protocol, train_cfg, physics, rng, seed);
      if (pulsed.escaped) {
        trajs[static_cast<std::size_t>(i)].escaped = true;
        continue;
      }
      trajs[static_cast<std::size_t>(i)] =
          simulate_trajectory(pulsed.final_state, steady, relax_cfg, physics, rng, seed);
    }
  };
  const int n_threads = std::max(1, std::min(train.threads, n));
  if (n_threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (int w = 0; w < n_threads; ++w) pool.emplace_back(worker);
  }
  std::vector<Trajectory> kept;
  for (auto &t : trajs)
    if (!t.escaped) kept.push_back(std::move(t));
  if (2 * kept.size() < static_cast<std::size_t>(n))
    throw NumericalError("run_relaxation", "more than half of the trajectories escaped");
  return kept;
}

VarianceSeries variance_timeseries(std::span<const Trajectory> trajectories, double window) {
  if (!(window > 0)) throw ConfigError("window must be > 0");
  double t_max = 0;
  for (const auto &t : trajectories)
    if (t.times.size() > 0) t_max = std::max(t_max, t.times(t.times.size() - 1));
  const auto n_bins = static_cast<std::size_t>(std::floor(t_max / window)) + 1;
  std::vector<double> sum(n_bins, 0.0), sum_sq(n_bins, 0.0);
  std::vector<int> count(n_bins, 0);
  for (const auto &t : trajectories) {
    for (Eigen::Index k = 0; k < t.times.size(); ++k) {
      const auto b = static_cast<std::size_t>(std::floor(t.times(k) / window));
      const double x = t.positions(k);
      sum[b] += x;
      sum_sq[b] += x * x;
      ++count[b];
    }
  }
  std::vector<Eigen::Index> kept;
  for (std::size_t b = 0; b < n_bins; ++b)
    if (count[b] >= 2) kept.push_back(static_cast<Eigen::Index>(b));
  VarianceSeries out;
  out.times.resize(static_cast<Eigen::Index>(kept.size()));
  out.std_x.resize(static_cast<Eigen::Index>(kept.size()));
  out.counts.resize(static_cast<Eigen::Index>(kept.size()));
  for (std::size_t i = 0; i < kept.size(); ++i) {
    const auto b = static_cast<std::size_t>(kept[i]);
    const double c = count[b];
    const double mean = sum[b] / c;
    const double var = std::max(0.0, (sum_sq[b] - c * mean * mean) / (c - 1.0));
    const auto r = static_cast<Eigen::Index>(i);
    out.times(r) = (static_cast<double>(b) + 0.5) * window;
    out.std_x(r) = std::sqrt(var);
    out.counts(r) = count[b];
  }
  return out;
}

} // namespace levitate::classical
