#include <cmath>

#include <gtest/gtest.h>

#include "levitate/classical.hpp"
#include "levitate/error.hpp"
#include "oracles.hpp"

using namespace levitate;
using namespace levitate::classical;

namespace {

constexpr double kOmega = 2 * kPi * 77e3;
constexpr double kMass = 1.1214e-16; // kg, about a 230 nm silica sphere

LangevinPhysics linear_physics(double damping, double temperature) {
  return {kMass, damping, temperature, LinearForce{kOmega}};
}

PulseProtocol pulse_train(int pulses) {
  const auto timing = protocol_timing(kOmega, 0.71);
  return {0.71, timing.tau_high, timing.tau_low, pulses, 1, 0.0};
}

SimConfig base_config(double dt, double duration, int n) {
  SimConfig cfg;
  cfg.dt = dt;
  cfg.duration = duration;
  cfg.n_trajectories = n;
  cfg.master_seed = 42;
  cfg.escape_bound = 1.0;
  return cfg;
}

} // namespace

TEST(Step, SemiImplicitMatchesHandUpdate) {
  const auto physics = linear_physics(100.0, 300.0);
  const PhaseState s{1e-8, 2e-3};
  const double dt = 1e-8;
  const auto out = euler_maruyama_step(s, dt, 0.5, physics, StepScheme::semi_implicit, {0.3, 0.0});
  const double v = s.v + dt * (-100.0 * s.v - 0.5 * kOmega * kOmega * s.x) +
                   std::sqrt(2 * 100.0 * Constants::kB * 300.0 / kMass) * std::sqrt(dt) * 0.3;
  EXPECT_DOUBLE_EQ(out.v, v);
  EXPECT_DOUBLE_EQ(out.x, s.x + dt * v);
}

TEST(Step, ExplicitUsesOldVelocity) {
  const auto physics = linear_physics(0.0, 0.0);
  const PhaseState s{1e-8, 2e-3};
  const auto out = euler_maruyama_step(s, 1e-9, 1.0, physics, StepScheme::explicit_euler, {0.0, 0.0});
  EXPECT_DOUBLE_EQ(out.x, s.x + 1e-9 * s.v);
}

TEST(Integrator, UndampedHarmonicPeriodClosesOrbit) {
  const auto physics = linear_physics(0.0, 0.0);
  const double period = 2 * kPi / kOmega;
  for (auto scheme : {StepScheme::semi_implicit, StepScheme::velocity_verlet}) {
    auto cfg = base_config(period / 4000, period, 1);
    cfg.scheme = scheme;
    RandomStream rng(1);
    const auto t = simulate_trajectory({1e-8, 0.0}, PulseProtocol{0.5, 1, 1, 0, 1, 0}, cfg, physics, rng);
    EXPECT_NEAR(t.final_state.x, 1e-8, 1e-5 * 1e-8) << to_string(scheme);
    EXPECT_NEAR(t.final_state.v, 0.0, 1e-2 * 1e-8 * kOmega) << to_string(scheme);
  }
}

TEST(Integrator, PulsedCovarianceMatchesSymplecticProduct) {
  const auto physics = linear_physics(0.0, 0.0);
  const auto protocol = pulse_train(55);
  const double dt = 2 * kPi / kOmega / 2000;
  auto cfg = base_config(dt, protocol.train_duration(), 400);
  cfg.scheme = StepScheme::velocity_verlet;
  cfg.snapshot_times = {0.0, protocol.pulse_period(), 5 * protocol.pulse_period(), protocol.train_duration()};
  const auto ens = run_ensemble(protocol, cfg, physics, 300.0);
  ASSERT_EQ(ens.n_escaped, 0);

  const Eigen::Matrix2d sigma0 = oracle::covariance(ens.snapshots[0].points);
  for (std::size_t j = 1; j < ens.snapshots.size(); ++j) {
    Eigen::Matrix2d m = oracle::pulse_map(protocol, kOmega, ens.snapshots[j].time);
    // snapshot columns are (x, v / omega)
    Eigen::Matrix2d scale = Eigen::Vector2d(1.0, 1.0 / kOmega).asDiagonal();
    m = scale * m * scale.inverse();
    const Eigen::Matrix2d expected = m * sigma0 * m.transpose();
    const Eigen::Matrix2d got = oracle::covariance(ens.snapshots[j].points);
    EXPECT_LT(oracle::max_relative_error(got, expected), 0.01) << "snapshot " << j << "\n" << got << "\n" << expected;
  }
}

TEST(Integrator, StationaryVarianceIsEquipartition) {
  const double gamma = 3e4;
  const auto physics = linear_physics(gamma, 300.0);
  const double period = 2 * kPi / kOmega;
  auto cfg = base_config(period / 200, 0.02, 8);
  cfg.record_stride = 10;
  const auto ens = run_ensemble(PulseProtocol{0.5, 1, 1, 0, 1, 0}, cfg, physics, 300.0);
  double sum = 0;
  long n = 0;
  for (const auto &t : ens.trajectories) {
    sum += t.positions.squaredNorm();
    n += t.positions.size();
  }
  const double expected = Constants::kB * 300.0 / (kMass * kOmega * kOmega);
  EXPECT_NEAR(sum / n / expected, 1.0, 0.05);
}

TEST(Ensemble, ThreadCountDoesNotChangeResults) {
  const auto physics = linear_physics(3e4, 300.0);
  const auto protocol = pulse_train(5);
  auto cfg = base_config(2 * kPi / kOmega / 1000, protocol.train_duration(), 37);
  cfg.snapshot_times = {0.0, protocol.train_duration()};
  cfg.threads = 1;
  const auto a = run_ensemble(protocol, cfg, physics, 300.0);
  cfg.threads = 4;
  const auto b = run_ensemble(protocol, cfg, physics, 300.0);
  for (std::size_t j = 0; j < a.snapshots.size(); ++j) {
    EXPECT_EQ(a.snapshots[j].points, b.snapshots[j].points);
    EXPECT_EQ(a.snapshots[j].trajectory_index, b.snapshots[j].trajectory_index);
  }
}

TEST(Ensemble, SeedChangesResults) {
  const auto physics = linear_physics(3e4, 300.0);
  auto cfg = base_config(2 * kPi / kOmega / 1000, 1e-4, 5);
  cfg.snapshot_times = {1e-4};
  const auto a = run_ensemble(pulse_train(0), cfg, physics, 300.0);
  cfg.master_seed = 43;
  const auto b = run_ensemble(pulse_train(0), cfg, physics, 300.0);
  EXPECT_NE(a.snapshots[0].points, b.snapshots[0].points);
}

TEST(Ensemble, StreamSeedsAreDistinct) {
  EXPECT_NE(stream_seed(0, 0), stream_seed(0, 1));
  EXPECT_NE(stream_seed(1, 0), stream_seed(0, 1));
  EXPECT_EQ(stream_seed(7, 3), splitmix64(7 ^ splitmix64(3)));
}

TEST(Ensemble, NoiseSubstepsFollowTheFinerPath) {
  const auto physics = linear_physics(3e4, 300.0);
  const double period = 2 * kPi / kOmega;
  auto coarse = base_config(period / 500, 20 * period, 1);
  coarse.noise_substeps = 2;
  auto fine = base_config(period / 1000, 20 * period, 1);
  auto single = coarse;
  single.noise_substeps = 1;
  const PulseProtocol steady{0.5, 1, 1, 0, 1, 0};
  RandomStream r1(5), r2(5), r3(5);
  const auto a = simulate_trajectory({0, 0}, steady, coarse, physics, r1);
  const auto b = simulate_trajectory({0, 0}, steady, fine, physics, r2);
  const auto c = simulate_trajectory({0, 0}, steady, single, physics, r3);
  const double sx = std::sqrt(Constants::kB * 300.0 / kMass) / kOmega;
  EXPECT_LT(std::abs(a.final_state.x - b.final_state.x), 0.1 * sx);
  EXPECT_GT(std::abs(c.final_state.x - b.final_state.x), std::abs(a.final_state.x - b.final_state.x));
}

TEST(Ensemble, EscapeIsFlagged) {
  const auto physics = LangevinPhysics{kMass, 0.0, 0.0, GaussianForce{kOmega, 4.47e-6}};
  auto cfg = base_config(2 * kPi / kOmega / 1000, 1e-4, 1);
  cfg.escape_bound = 5e-6;
  RandomStream rng(1);
  const auto t = simulate_trajectory({0.0, 10.0}, pulse_train(0), cfg, physics, rng);
  EXPECT_TRUE(t.escaped);
}

TEST(Ensemble, MostlyEscapedEnsembleThrows) {
  const auto physics = LangevinPhysics{kMass, 0.0, 0.0, GaussianForce{kOmega, 4.47e-6}};
  auto cfg = base_config(2 * kPi / kOmega / 1000, 1e-4, 8);
  cfg.escape_bound = 1e-12;
  EXPECT_THROW(run_ensemble(pulse_train(0), cfg, physics, 300.0), NumericalError);
}

TEST(Validate, RejectsCoarseStepAndVerletSubsteps) {
  const double period = 2 * kPi / kOmega;
  auto cfg = base_config(period / 100, 1e-4, 1);
  EXPECT_THROW(cfg.validate(kOmega), ConfigError);
  cfg.dt = period / 1000;
  cfg.scheme = StepScheme::velocity_verlet;
  cfg.noise_substeps = 2;
  EXPECT_THROW(cfg.validate(kOmega), ConfigError);
  cfg.scheme = StepScheme::semi_implicit;
  EXPECT_NO_THROW(cfg.validate(kOmega));
  cfg.snapshot_times = {2e-4};
  EXPECT_THROW(cfg.validate(kOmega), ConfigError);
}

TEST(Relaxation, ContinuesFromTrainEndState) {
  const auto physics = linear_physics(3e4, 300.0);
  const auto protocol = pulse_train(5);
  const double period = 2 * kPi / kOmega;
  auto train = base_config(period / 1000, protocol.train_duration(), 6);
  train.snapshot_times = {protocol.train_duration()};
  const auto ens = run_ensemble(protocol, train, physics, 300.0);
  const RelaxationConfig relax{period / 200, 50 * period, 5, 6};
  const auto trajs = run_relaxation(protocol, train, relax, physics, 300.0);
  ASSERT_EQ(trajs.size(), 6u);
  for (std::size_t i = 0; i < trajs.size(); ++i) {
    EXPECT_DOUBLE_EQ(trajs[i].positions(0), ens.snapshots[0].points(static_cast<Eigen::Index>(i), 0));
    EXPECT_DOUBLE_EQ(trajs[i].times(0), 0.0);
  }
}

TEST(Relaxation, VarianceSeriesPoolsWindows) {
  Trajectory a, b;
  a.times = Eigen::Vector4d(0, 1, 2, 3);
  a.positions = Eigen::Vector4d(1, 1, 2, 2);
  b.times = a.times;
  b.positions = Eigen::Vector4d(-1, -1, -2, -2);
  const std::vector<Trajectory> trajs{a, b};
  const auto s = variance_timeseries(trajs, 2.0);
  ASSERT_EQ(s.times.size(), 2);
  EXPECT_EQ(s.counts(0), 4);
  EXPECT_NEAR(s.std_x(1) / s.std_x(0), 2.0, 1e-12);
}
