#include "levitate/quantum.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <map>
#include <thread>

#include <Eigen/Eigenvalues>
#include <unsupported/Eigen/FFT>

#include "levitate/constants.hpp"
#include "levitate/error.hpp"

namespace levitate::quantum {

namespace {

using cd = std::complex<double>;

template <typename Fn>
void parallel_columns(Eigen::Index n, int threads, Fn &&fn) {
  const int t = std::max(1, std::min<int>(threads, static_cast<int>(n)));
  if (t == 1) {
    fn(0, n, 0);
    return;
  }
  std::vector<std::jthread> pool;
  pool.reserve(static_cast<std::size_t>(t));
  for (int k = 0; k < t; ++k) {
    const Eigen::Index lo = n * k / t, hi = n * (k + 1) / t;
    pool.emplace_back([&fn, lo, hi, k] { fn(lo, hi, k); });
  }
}

// Plans are created on first use and planning is not thread-safe.
void warm_up(Eigen::FFT<double> &fft, std::vector<cd> &a, std::vector<cd> &b) {
  const auto n = static_cast<Eigen::Index>(a.size());
  fft.fwd(b.data(), a.data(), n);
  fft.inv(a.data(), b.data(), n);
}

bool is_power_of_two(int n) { return n > 0 && (n & (n - 1)) == 0; }

// Multiplies every column of `a` by exp(-i T dt) in momentum space. The
// phases already carry the 1/n of the inverse transform.
struct KineticPass {
  Eigen::VectorXcd phase;
  std::vector<Eigen::FFT<double>> ffts;
  std::vector<std::vector<cd>> buffers;

  KineticPass(const Eigen::VectorXd &kinetic, double tau, int threads) {
    const auto n = kinetic.size();
    phase.resize(n);
    for (Eigen::Index k = 0; k < n; ++k) phase(k) = std::polar(1.0 / static_cast<double>(n), -kinetic(k) * tau);
    const int t = std::max(1, threads);
    ffts.resize(static_cast<std::size_t>(t));
    buffers.assign(static_cast<std::size_t>(t), std::vector<cd>(static_cast<std::size_t>(n)));
    std::vector<cd> scratch(static_cast<std::size_t>(n));
    for (std::size_t i = 0; i < ffts.size(); ++i) {
      ffts[i].SetFlag(Eigen::FFT<double>::Unscaled);
      warm_up(ffts[i], buffers[i], scratch);
    }
  }

  void columns(Eigen::MatrixXcd &a) {
    const auto n = a.rows();
    parallel_columns(a.cols(), static_cast<int>(ffts.size()), [&](Eigen::Index lo, Eigen::Index hi, int id) {
      auto &fft = ffts[static_cast<std::size_t>(id)];
      auto &buf = buffers[static_cast<std::size_t>(id)];
      for (Eigen::Index j = lo; j < hi; ++j) {
        cd *col = a.col(j).data();
        fft.fwd(buf.data(), col, n);
        for (Eigen::Index k = 0; k < n; ++k) buf[static_cast<std::size_t>(k)] *= phase(k);
        fft.inv(col, buf.data(), n);
      }
    });
  }

  // rho -> K rho K^dagger, using K (K rho)^dagger = (K rho K^dagger)^dagger.
  void apply(Eigen::MatrixXcd &rho) {
    columns(rho);
    rho.adjointInPlace();
    columns(rho);
    rho.adjointInPlace();
  }
};

} // namespace

double QuantumUnits::length() const { return std::sqrt(Constants::hbar / (mass * omega)); }
double QuantumUnits::momentum() const { return std::sqrt(Constants::hbar * mass * omega); }
double QuantumUnits::energy() const { return Constants::hbar * omega; }

Eigen::VectorXd QuantumGrid::positions() const {
  return Eigen::VectorXd::LinSpaced(n_points, x_min, x_min + (n_points - 1) * spacing());
}

Eigen::VectorXd QuantumGrid::fft_momenta() const {
  Eigen::VectorXd p(n_points);
  const double dp = 2.0 * kPi / (n_points * spacing());
  for (int k = 0; k < n_points; ++k) p(k) = dp * (k < n_points / 2 ? k : k - n_points);
  return p;
}

void QuantumGrid::validate(const std::string &path) const {
  if (!is_power_of_two(n_points) || n_points < 128)
    throw ConfigError("n_points must be a power of two >= 128, got " + std::to_string(n_points), path + ".n_points");
  if (!(x_max > 0) || std::abs(x_min + x_max) > 1e-12 * x_max)
    throw ConfigError("grid must be symmetric about 0 with x_max > 0", path + ".half_width");
}

QuantumGrid make_grid(int n_points, double half_width) {
  QuantumGrid g{n_points, -half_width, half_width};
  g.validate();
  return g;
}

double DensityMatrix::trace() const { return elements.diagonal().real().sum() * grid.spacing(); }

double DensityMatrix::hermiticity_error() const {
  return (elements - elements.adjoint()).cwiseAbs().maxCoeff();
}

HamiltonianTerms build_hamiltonian_terms(const QuantumGrid &grid, double u0, double waist, double mass,
                                         double p_max_expected) {
  grid.validate();
  if (!(u0 > 0)) throw ConfigError("trap depth must be > 0", "potential.u0");
  if (!(waist > 0)) throw ConfigError("waist must be > 0", "potential.waist");
  if (!(mass > 0)) throw ConfigError("mass must be > 0", "potential.mass");
  const double dx = grid.spacing();
  if (dx > waist / 32.0)
    throw ConfigError("grid spacing " + std::to_string(dx) + " does not resolve the waist (needs <= w0/32)",
                      "grid.n_points");
  if (p_max_expected > 0 && dx > 0.25 * kPi / p_max_expected)
    throw ConfigError("grid spacing " + std::to_string(dx) + " does not resolve momenta up to " +
                          std::to_string(p_max_expected),
                      "grid.n_points");
  HamiltonianTerms h;
  h.mass = mass;
  h.kinetic = grid.fft_momenta().array().square() / (2.0 * mass);
  const Eigen::ArrayXd x = grid.positions().array();
  h.potential = (-u0 * (-2.0 * x.square() / (waist * waist)).exp()).matrix();
  h.harmonic_omega = std::sqrt(4.0 * u0 / (mass * waist * waist));
  return h;
}

HamiltonianTerms harmonic_terms(const QuantumGrid &grid, double mass, double omega) {
  grid.validate();
  HamiltonianTerms h;
  h.mass = mass;
  h.kinetic = grid.fft_momenta().array().square() / (2.0 * mass);
  h.potential = 0.5 * mass * omega * omega * grid.positions().array().square().matrix();
  h.harmonic_omega = omega;
  return h;
}

Eigen::MatrixXd hermite_functions(const Eigen::VectorXd &x, int n_max) {
  if (n_max < 0) throw ConfigError("n_max must be >= 0");
  Eigen::MatrixXd psi(x.size(), n_max + 1);
  psi.col(0) = (std::pow(kPi, -0.25) * (-0.5 * x.array().square()).exp()).matrix();
  if (n_max >= 1) psi.col(1) = (std::sqrt(2.0) * x.array() * psi.col(0).array()).matrix();
  for (int n = 1; n < n_max; ++n)
    psi.col(n + 1) = (std::sqrt(2.0 / (n + 1)) * x.array() * psi.col(n).array() -
                      std::sqrt(static_cast<double>(n) / (n + 1)) * psi.col(n - 1).array())
                         .matrix();
  return psi;
}

StateKind parse_state_kind(const std::string &name) {
  if (name == "thermal") return StateKind::thermal;
  if (name == "fock") return StateKind::fock;
  if (name == "blurred_fock") return StateKind::blurred_fock;
  if (name == "gaussian") return StateKind::gaussian;
  throw ConfigError("unknown state kind '" + name + "' (thermal, fock, blurred_fock, gaussian)");
}

std::string to_string(StateKind kind) {
  switch (kind) {
  case StateKind::thermal: return "thermal";
  case StateKind::fock: return "fock";
  case StateKind::blurred_fock: return "blurred_fock";
  case StateKind::gaussian: return "gaussian";
  }
  return "unknown";
}

void InitialStateSpec::validate(const std::string &path) const {
  switch (kind) {
  case StateKind::thermal:
    if (!(n_mean >= 0)) throw ConfigError("n_mean must be >= 0", path + ".n_mean");
    break;
  case StateKind::fock:
    if (n < 0) throw ConfigError("n must be >= 0", path + ".n");
    break;
  case StateKind::blurred_fock:
    if (n < 0) throw ConfigError("n must be >= 0", path + ".n");
    if (!(sigma_n > 0)) throw ConfigError("sigma_n must be > 0", path + ".sigma_n");
    break;
  case StateKind::gaussian:
    if (!(width > 0)) throw ConfigError("width must be > 0", path + ".width");
    break;
  }
}

std::vector<double> InitialStateSpec::level_weights() const {
  std::vector<double> w;
  switch (kind) {
  case StateKind::thermal: {
    if (n_mean == 0) return {1.0};
    const double r = n_mean / (1.0 + n_mean);
    double p = 1.0 / (1.0 + n_mean);
    // Tail beyond level n is r^(n+1).
    for (int k = 0;; ++k) {
      w.push_back(p);
      if (std::pow(r, k + 1) < 1e-12) break;
      p *= r;
    }
    break;
  }
  case StateKind::fock:
    w.assign(static_cast<std::size_t>(n) + 1, 0.0);
    w.back() = 1.0;
    return w;
  case StateKind::blurred_fock: {
    const int reach = static_cast<int>(std::ceil(sigma_n * std::sqrt(2.0 * std::log(1e12)))) + 1;
    for (int m = 0; m <= n + reach; ++m) w.push_back(std::exp(-0.5 * (m - n) * (m - n) / (sigma_n * sigma_n)));
    break;
  }
  case StateKind::gaussian:
    return {};
  }
  double sum = 0;
  for (double v : w) sum += v;
  for (double &v : w) v /= sum;
  return w;
}

DensityMatrix prepare_initial_state(const InitialStateSpec &spec, const QuantumGrid &grid) {
  spec.validate();
  grid.validate();
  const Eigen::VectorXd x = grid.positions();
  DensityMatrix rho{grid, {}};
  if (spec.kind == StateKind::gaussian) {
    const double s = spec.width;
    const Eigen::VectorXd psi =
        (std::pow(2.0 * kPi * s * s, -0.25) * (-(x.array() - spec.centre).square() / (4.0 * s * s)).exp()).matrix();
    rho.elements = (psi * psi.transpose()).cast<cd>();
  } else {
    const std::vector<double> w = spec.level_weights();
    const int n_max = static_cast<int>(w.size()) - 1;
    const Eigen::MatrixXd psi = hermite_functions(x, n_max);
    const Eigen::Map<const Eigen::VectorXd> weights(w.data(), n_max + 1);
    rho.elements = (psi * weights.asDiagonal() * psi.transpose()).cast<cd>();
  }
  const double edge = std::max(std::abs(rho.elements(0, 0)), std::abs(rho.elements(grid.n_points - 1, grid.n_points - 1)));
  if (edge > 1e-12)
    throw NumericalError("prepare_initial_state", to_string(spec.kind) + " state density " + std::to_string(edge) +
                                                      " at the grid edge exceeds 1e-12; widen the grid");
  return rho;
}

PropagationResult propagate(const DensityMatrix &rho, const HamiltonianTerms &terms, const PulseProtocol &protocol,
                            double t_final, double lambda, double dt, const PropagationOptions &opts) {
  const QuantumGrid &grid = rho.grid;
  const int n = grid.n_points;
  if (terms.kinetic.size() != n || terms.potential.size() != n)
    throw ConfigError("Hamiltonian terms do not match the grid");
  if (!(t_final > 0)) throw ConfigError("t_final must be > 0", "propagation.t_final");
  if (!(dt > 0) || dt > 2.0 * kPi / 500.0 * (1 + 1e-12))
    throw ConfigError("dt must lie in (0, T/500]", "propagation.dt");
  if (!(lambda >= 0)) throw ConfigError("decoherence constant must be >= 0", "decoherence");

  PropagationResult out;
  out.steps = static_cast<long>(std::ceil(t_final / dt - 1e-9));
  out.dt = t_final / static_cast<double>(out.steps);
  const double h = out.dt;

  std::vector<long> snap_steps;
  for (double t : opts.snapshot_times) {
    if (!(t > 0 && t <= t_final * (1 + 1e-12)))
      throw ConfigError("snapshot times must lie in (0, t_final]", "propagation.snapshots");
    snap_steps.push_back(std::clamp(std::lround(t / h), 1L, out.steps));
  }
  std::sort(snap_steps.begin(), snap_steps.end());
  snap_steps.erase(std::unique(snap_steps.begin(), snap_steps.end()), snap_steps.end());

  const Eigen::ArrayXd x = grid.positions().array();
  std::map<double, Eigen::MatrixXcd> multipliers;
  auto build = [&](double s) {
    Eigen::MatrixXcd m(n, n);
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i) {
        const double dv = terms.potential(i) - terms.potential(j);
        const double d = x(i) - x(j);
        m(i, j) = std::polar(std::exp(-lambda * d * d * h), -s * dv * h);
      }
    return m;
  };
  Eigen::MatrixXcd straddle;
  auto multiplier = [&](double s) -> const Eigen::MatrixXcd & {
    if (s != 1.0 && s != protocol.s_low) {
      straddle = build(s);
      return straddle;
    }
    auto it = multipliers.find(s);
    if (it != multipliers.end()) return it->second;
    return multipliers.emplace(s, build(s)).first->second;
  };

  const int threads = std::max(1, opts.threads);
  KineticPass half(terms.kinetic, 0.5 * h, threads);
  KineticPass full(terms.kinetic, h, threads);

  Eigen::MatrixXcd a = rho.elements;
  const double dx = grid.spacing();
  out.min_eigenvalue = 0;
  auto check = [&](long step) {
    const double trace = a.diagonal().real().sum() * dx;
    const double drift = std::abs(trace - 1.0);
    out.max_trace_drift = std::max(out.max_trace_drift, drift);
    if (!(drift <= 1e-9))
      throw NumericalError("propagate", "trace drift " + std::to_string(drift) + " at step " + std::to_string(step));
    out.max_edge_density =
        std::max({out.max_edge_density, std::abs(a(0, 0)), std::abs(a(n - 1, n - 1))});
  };
  auto check_hermiticity = [&](long step) {
    const double err = (a - a.adjoint()).cwiseAbs().maxCoeff();
    out.max_hermiticity_error = std::max(out.max_hermiticity_error, err);
    if (!(err <= 1e-10))
      throw NumericalError("propagate",
                           "Hermiticity error " + std::to_string(err) + " at step " + std::to_string(step));
  };

  std::size_t next_snap = 0;
  half.apply(a);
  for (long k = 0; k < out.steps; ++k) {
    const double s = control_average(protocol, static_cast<double>(k) * h, static_cast<double>(k + 1) * h);
    a.array() *= multiplier(s).array();
    const long done = k + 1;
    const bool snap = next_snap < snap_steps.size() && snap_steps[next_snap] == done;
    const bool last = done == out.steps;
    const bool spot = opts.positivity_check_every > 0 && done % opts.positivity_check_every == 0;
    if (snap || last || spot) {
      half.apply(a);
      check(done);
      check_hermiticity(done);
      if (spot || last) {
        DensityMatrix probe{grid, a};
        const double ev = min_eigenvalue(probe);
        out.min_eigenvalue = std::min(out.min_eigenvalue, ev);
        if (ev < -1e-6)
          throw NumericalError("propagate", "density matrix lost positivity (eigenvalue " + std::to_string(ev) +
                                                ") at step " + std::to_string(done));
      }
      if (snap) {
        out.snapshot_times.push_back(static_cast<double>(done) * h);
        out.snapshots.push_back(DensityMatrix{grid, a});
        ++next_snap;
      }
      if (!last) half.apply(a);
    } else {
      full.apply(a);
      check(done);
      if (done % 16 == 0) check_hermiticity(done);
    }
  }
  out.state = DensityMatrix{grid, std::move(a)};
  return out;
}

double WignerDistribution::cell_area() const {
  const double dx = x.size() > 1 ? x(1) - x(0) : 0.0;
  const double dp = p.size() > 1 ? p(1) - p(0) : 0.0;
  return dx * dp;
}

double WignerDistribution::integral() const { return values.sum() * cell_area(); }

WignerDistribution wigner_transform(const DensityMatrix &rho, int threads) {
  const int n = rho.grid.n_points;
  const double dx = rho.grid.spacing();
  WignerDistribution w;
  w.x = rho.grid.positions();
  w.p.resize(n);
  for (int m = 0; m < n; ++m) w.p(m) = kPi * (m - n / 2) / (n * dx);
  w.values.resize(n, n);

  const int t = std::max(1, threads);
  std::vector<double> residue(static_cast<std::size_t>(t), 0.0);
  std::vector<Eigen::FFT<double>> ffts(static_cast<std::size_t>(t));
  std::vector<std::vector<cd>> gs(static_cast<std::size_t>(t), std::vector<cd>(static_cast<std::size_t>(n)));
  std::vector<std::vector<cd>> fs = gs;
  for (int k = 0; k < t; ++k)
    warm_up(ffts[static_cast<std::size_t>(k)], gs[static_cast<std::size_t>(k)], fs[static_cast<std::size_t>(k)]);
  parallel_columns(n, t, [&](Eigen::Index lo, Eigen::Index hi, int id) {
    auto &fft = ffts[static_cast<std::size_t>(id)];
    auto &g = gs[static_cast<std::size_t>(id)];
    auto &f = fs[static_cast<std::size_t>(id)];
    for (Eigen::Index i = lo; i < hi; ++i) {
      std::fill(g.begin(), g.end(), cd(0));
      const Eigen::Index reach = std::min(i, static_cast<Eigen::Index>(n - 1) - i);
      for (Eigen::Index k = -reach; k <= reach; ++k)
        g[static_cast<std::size_t>((k + n) % n)] = rho.elements(i + k, i - k);
      fft.fwd(f.data(), g.data(), n);
      for (int m = 0; m < n; ++m) {
        const cd v = f[static_cast<std::size_t>((m - n / 2 + n) % n)] * (dx / kPi);
        w.values(i, m) = v.real();
        residue[static_cast<std::size_t>(id)] = std::max(residue[static_cast<std::size_t>(id)], std::abs(v.imag()));
      }
    }
  });
  const double worst = *std::max_element(residue.begin(), residue.end());
  if (worst > 1e-10)
    throw NumericalError("wigner_transform", "imaginary residue " + std::to_string(worst) + " exceeds 1e-10");
  return w;
}

double wigner_negativity(const WignerDistribution &w) {
  return w.values.cwiseMin(0.0).sum() * w.cell_area();
}

std::vector<double> negativity_increment(const std::vector<double> &negativity) {
  if (negativity.size() < 2) throw NumericalError("negativity_increment", "need at least 2 snapshots");
  std::vector<double> out;
  out.reserve(negativity.size());
  for (double v : negativity) out.push_back(std::abs(v) - std::abs(negativity.front()));
  return out;
}

double purity(const DensityMatrix &rho) {
  const double dx = rho.grid.spacing();
  return rho.elements.cwiseAbs2().sum() * dx * dx;
}

Eigen::VectorXd marginal_wigner_x(const WignerDistribution &w) {
  const double dp = w.p.size() > 1 ? w.p(1) - w.p(0) : 0.0;
  return w.values.rowwise().sum() * dp;
}

Eigen::VectorXd fock_populations(const DensityMatrix &rho, int n_max) {
  const Eigen::VectorXd x = rho.grid.positions();
  if (n_max < 0) throw ConfigError("n_max must be >= 0");
  if (std::sqrt(2.0 * n_max + 1.0) >= 0.9 * rho.grid.x_max)
    throw NumericalError("fock_populations", "level " + std::to_string(n_max) + " is not representable on the grid");
  const Eigen::MatrixXd psi = hermite_functions(x, n_max);
  const double dx = rho.grid.spacing();
  const Eigen::MatrixXcd projected = rho.elements * psi.cast<cd>();
  Eigen::VectorXd p(n_max + 1);
  for (int k = 0; k <= n_max; ++k) p(k) = (psi.col(k).cast<cd>().dot(projected.col(k))).real() * dx * dx;
  return p;
}

double trace_distance(const DensityMatrix &a, const DensityMatrix &b) {
  if (a.grid.n_points != b.grid.n_points) throw ConfigError("trace_distance: grids differ");
  Eigen::MatrixXcd d = (a.elements - b.elements) * a.grid.spacing();
  d = 0.5 * (d + d.adjoint()).eval();
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(d, Eigen::EigenvaluesOnly);
  return 0.5 * es.eigenvalues().cwiseAbs().sum();
}

double min_eigenvalue(const DensityMatrix &rho) {
  Eigen::MatrixXcd m = rho.elements * rho.grid.spacing();
  m = 0.5 * (m + m.adjoint()).eval();
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(m, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff();
}

double position_variance(const DensityMatrix &rho) {
  const Eigen::ArrayXd x = rho.grid.positions().array();
  const Eigen::ArrayXd d = rho.elements.diagonal().real().array() * rho.grid.spacing();
  const double mean = (x * d).sum();
  return ((x - mean).square() * d).sum();
}

} // namespace levitate::quantum
