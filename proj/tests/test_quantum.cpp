#include <cmath>

#include <gtest/gtest.h>

#include "levitate/error.hpp"
#include "levitate/pipelines.hpp"
#include "levitate/quantum.hpp"
#include "oracles.hpp"

using namespace levitate;
using namespace levitate::quantum;

namespace {

const PulseProtocol kSteady{0.5, 1.0, 1.0, 0, 1, 0.0};

InitialStateSpec fock(int n) {
  InitialStateSpec s;
  s.kind = StateKind::fock;
  s.n = n;
  return s;
}

InitialStateSpec coherent(double centre) {
  InitialStateSpec s;
  s.kind = StateKind::gaussian;
  s.width = std::sqrt(0.5);
  s.centre = centre;
  return s;
}

InitialStateSpec thermal(double n_mean) {
  InitialStateSpec s;
  s.kind = StateKind::thermal;
  s.n_mean = n_mean;
  return s;
}

// The grid the quantum pipeline picks for a state in the 100-level well.
QuantumGrid default_grid_for(const InitialStateSpec &s, int n = 512) {
  return make_grid(n, pipeline::default_half_width(s, std::sqrt(400.0)));
}

} // namespace

TEST(Grid, SpacingAndMomenta) {
  const auto g = make_grid(256, 8.0);
  EXPECT_DOUBLE_EQ(g.spacing(), 16.0 / 256);
  EXPECT_DOUBLE_EQ(g.positions()(0), -8.0);
  const auto p = g.fft_momenta();
  EXPECT_NEAR(p(1), 2 * kPi / 16.0, 1e-14);
  EXPECT_NEAR(p(255), -2 * kPi / 16.0, 1e-14);
  EXPECT_THROW(make_grid(100, 8.0), ConfigError);
}

TEST(Hermite, Orthonormal) {
  const auto g = make_grid(512, 12.0);
  const auto h = hermite_functions(g.positions(), 30);
  const Eigen::MatrixXd gram = h.transpose() * h * g.spacing();
  EXPECT_LT((gram - Eigen::MatrixXd::Identity(31, 31)).cwiseAbs().maxCoeff(), 1e-10);
}

TEST(Hamiltonian, ResolutionPrecondition) {
  const auto coarse = make_grid(128, 40.0);
  EXPECT_THROW(build_hamiltonian_terms(coarse, 100.0, 20.0, 1.0, 6.4), ConfigError);
  const auto fine = make_grid(512, 24.0);
  const auto terms = build_hamiltonian_terms(fine, 100.0, 20.0, 1.0, 6.4);
  EXPECT_NEAR(terms.harmonic_omega, 1.0, 1e-12);
}

TEST(InitialState, EdgeDensityGuard) {
  EXPECT_THROW(prepare_initial_state(fock(20), make_grid(256, 5.0)), NumericalError);
}

TEST(InitialState, ThermalLevelWeights) {
  const auto spec = thermal(4.52);
  const auto w = spec.level_weights();
  const double q = 4.52 / 5.52;
  EXPECT_NEAR(w[0], 1 - q, 1e-9);
  EXPECT_NEAR(w[3] / w[2], q, 1e-12);
  const auto grid = default_grid_for(spec);
  const auto rho = prepare_initial_state(spec, grid);
  EXPECT_NEAR(rho.trace(), 1.0, 1e-12);
  const auto pops = fock_populations(rho, 10);
  for (int n = 0; n <= 10; ++n) EXPECT_NEAR(pops(n), (1 - q) * std::pow(q, n), 1e-8);
  EXPECT_NEAR(purity(rho), (1 - q) / (1 + q), 1e-8);
  EXPECT_GT(min_eigenvalue(rho), -1e-12);
  EXPECT_NEAR(position_variance(rho), 4.52 + 0.5, 1e-8);
}

TEST(InitialState, BlurredFockIsGaussianMixture) {
  InitialStateSpec s;
  s.kind = StateKind::blurred_fock;
  s.n = 20;
  s.sigma_n = 5;
  const auto w = s.level_weights();
  EXPECT_NEAR(w[20] / w[25], std::exp(0.5), 1e-9);
  EXPECT_NEAR(w[15], w[25], 1e-12);
}

TEST(Wigner, GroundStatePeakAndIntegral) {
  const auto spec = fock(0);
  const auto rho = prepare_initial_state(spec, default_grid_for(spec));
  const auto w = wigner_transform(rho);
  EXPECT_NEAR(w.integral(), 1.0, 1e-10);
  Eigen::Index i, j;
  w.values.maxCoeff(&i, &j);
  EXPECT_NEAR(w.values(i, j), 1.0 / kPi, 1e-6);
  EXPECT_NEAR(wigner_negativity(w), 0.0, 1e-10);
}

TEST(Wigner, Fock1NegativityClosedForm) {
  const auto spec = fock(1);
  const auto rho = prepare_initial_state(spec, default_grid_for(spec));
  const auto w = wigner_transform(rho);
  EXPECT_NEAR(wigner_negativity(w), oracle::fock1_negativity(), 1e-3);
}

TEST(Wigner, MarginalMatchesDiagonal) {
  const auto spec = thermal(2.0);
  const auto rho = prepare_initial_state(spec, default_grid_for(spec, 256));
  const auto w = wigner_transform(rho);
  const Eigen::VectorXd diag = rho.elements.diagonal().real();
  EXPECT_LT((marginal_wigner_x(w) - diag).cwiseAbs().maxCoeff(), 1e-8);
}

TEST(Wigner, ThreadCountIdentical) {
  const auto spec = fock(3);
  const auto rho = prepare_initial_state(spec, default_grid_for(spec, 256));
  EXPECT_EQ(wigner_transform(rho, 1).values, wigner_transform(rho, 3).values);
}

TEST(Negativity, IncrementOnMagnitudes) {
  const auto d = negativity_increment({-0.2, -0.25, -0.1});
  EXPECT_DOUBLE_EQ(d[0], 0.0);
  EXPECT_NEAR(d[1], 0.05, 1e-15);
  EXPECT_NEAR(d[2], -0.1, 1e-15);
}

TEST(Propagate, HarmonicPeriodReturnsCoherentState) {
  const auto grid = make_grid(256, 12.0);
  const auto rho = prepare_initial_state(coherent(2.0), grid);
  const auto terms = harmonic_terms(grid);
  const auto out = propagate(rho, terms, kSteady, 2 * kPi, 0.0, 2 * kPi / 8000);
  EXPECT_LT(trace_distance(out.state, rho), 1e-6);
  EXPECT_LT(out.max_trace_drift, 1e-9);
  EXPECT_LT(out.max_hermiticity_error, 1e-10);
}

TEST(Propagate, HarmonicHalfPeriodMirrorsState) {
  const auto grid = make_grid(256, 12.0);
  const auto rho = prepare_initial_state(coherent(2.0), grid);
  const auto mirrored = prepare_initial_state(coherent(-2.0), grid);
  const auto out = propagate(rho, harmonic_terms(grid), kSteady, kPi, 0.0, 2 * kPi / 8000);
  EXPECT_LT(trace_distance(out.state, mirrored), 1e-6);
}

TEST(Propagate, UnitaryConservesPurityAndNegativity) {
  const auto spec = fock(1);
  const auto grid = make_grid(256, 12.0);
  const auto rho = prepare_initial_state(spec, grid);
  PropagationOptions opts;
  opts.snapshot_times = {2 * kPi, 4 * kPi, 6 * kPi};
  const auto out = propagate(rho, harmonic_terms(grid), kSteady, 6 * kPi, 0.0, 2 * kPi / 1000, opts);
  const double n0 = wigner_negativity(wigner_transform(rho));
  const double p0 = purity(rho);
  for (const auto &s : out.snapshots) {
    EXPECT_NEAR(purity(s), p0, 1e-8);
    EXPECT_NEAR(wigner_negativity(wigner_transform(s)), n0, 1e-6);
  }
}

TEST(Propagate, PureDephasingRate) {
  const auto grid = make_grid(128, 8.0);
  const auto rho = prepare_initial_state(coherent(0.0), grid);
  HamiltonianTerms frozen;
  frozen.kinetic = Eigen::VectorXd::Zero(grid.n_points);
  frozen.potential = Eigen::VectorXd::Zero(grid.n_points);
  const double t = 0.5;
  const int i = 64, j = 74;
  const double d = grid.positions()(j) - grid.positions()(i);
  for (double lambda : {0.05, 0.1}) {
    const auto out = propagate(rho, frozen, kSteady, t, lambda, 2 * kPi / 1000);
    const double ratio = std::abs(out.state.elements(i, j)) / std::abs(rho.elements(i, j));
    EXPECT_NEAR(-std::log(ratio) / t, lambda * d * d, 1e-10 * lambda * d * d);
  }
}

TEST(Propagate, DecoherencePurityNonIncreasing) {
  const auto grid = make_grid(128, 10.0);
  const auto rho = prepare_initial_state(fock(2), grid);
  PropagationOptions opts;
  for (int k = 1; k <= 8; ++k) opts.snapshot_times.push_back(k * 0.5);
  const auto out = propagate(rho, harmonic_terms(grid), kSteady, 4.0, 0.02, 2 * kPi / 1000, opts);
  double last = purity(rho);
  for (const auto &s : out.snapshots) {
    const double p = purity(s);
    EXPECT_LE(p, last + 1e-12);
    last = p;
  }
  EXPECT_LT(last, purity(rho));
}

TEST(Propagate, RejectsCoarseStep) {
  const auto grid = make_grid(128, 10.0);
  const auto rho = prepare_initial_state(fock(0), grid);
  EXPECT_THROW(propagate(rho, harmonic_terms(grid), kSteady, 1.0, 0.0, 0.1), ConfigError);
}

TEST(Propagate, GaussianWellPulsesKeepInvariants) {
  const auto spec = thermal(1.0);
  const auto grid = default_grid_for(spec, 256);
  const auto terms = build_hamiltonian_terms(grid, 100.0, 20.0, 1.0, 2.0);
  const auto rho = prepare_initial_state(spec, grid);
  const auto timing = protocol_timing(1.0, 0.71);
  const PulseProtocol pulses{0.71, timing.tau_high, timing.tau_low, 4, 1, 0.0};
  PropagationOptions opts;
  opts.positivity_check_every = 500;
  const auto out = propagate(rho, terms, pulses, pulses.train_duration(), 2e-5, 2 * kPi / 1000, opts);
  EXPECT_NEAR(out.state.trace(), 1.0, 1e-9);
  EXPECT_GT(out.min_eigenvalue, -1e-9);
  EXPECT_LT(out.max_hermiticity_error, 1e-10);
}

TEST(PeakPair, FindsSymmetricPair) {
  const Eigen::VectorXd x = Eigen::VectorXd::LinSpaced(201, -5, 5);
  const Eigen::VectorXd y = ((-(x.array() - 2).square()).exp() + (-(x.array() + 2).square()).exp()).matrix();
  const auto p = pipeline::principal_peak_pair(x, y);
  ASSERT_TRUE(p.found);
  EXPECT_NEAR(p.left, -2.0, 0.05);
  EXPECT_NEAR(p.right, 2.0, 0.05);
  EXPECT_LT(p.dip, 0.1);
  EXPECT_EQ(pipeline::count_peaks(y), 2);
}
