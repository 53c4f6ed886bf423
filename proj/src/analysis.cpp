#include "levitate/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numeric>
#include <vector>

#include <unsupported/Eigen/FFT>

#include "levitate/error.hpp"
#include "levitate/levmar.hpp"

namespace levitate::analysis {

namespace {

constexpr double kSqrt2Pi = 2.50662827463100050242;

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

double column_std(const Eigen::MatrixX2d &points, int col) {
  const auto c = points.col(col).array();
  const double mean = c.mean();
  return std::sqrt((c - mean).square().sum() / static_cast<double>(points.rows()));
}

Eigen::VectorXd edges(double lo, double hi, int n) {
  return Eigen::VectorXd::LinSpaced(n + 1, lo, hi);
}

// Fraction of a Gaussian (centre, bandwidth) falling in each bin of `e`,
// written into w; returns the first bin index touched.
int spread(double centre, double bandwidth, const Eigen::VectorXd &e, std::vector<double> &w) {
  const int n = static_cast<int>(e.size()) - 1;
  const double lo = e(0);
  const double width = (e(n) - lo) / n;
  int bin = static_cast<int>(std::floor((centre - lo) / width));
  bin = std::clamp(bin, 0, n - 1);
  w.clear();
  if (bandwidth <= 0) {
    w.push_back(1.0);
    return bin;
  }
  const int reach = static_cast<int>(std::ceil(6.0 * bandwidth / width)) + 1;
  const int first = std::max(0, bin - reach);
  const int last = std::min(n - 1, bin + reach);
  for (int j = first; j <= last; ++j)
    w.push_back(normal_cdf((e(j + 1) - centre) / bandwidth) - normal_cdf((e(j) - centre) / bandwidth));
  return first;
}

} // namespace

double PhaseSpaceDistribution::cell_area() const {
  const double dx = (x_edges(x_edges.size() - 1) - x_edges(0)) / static_cast<double>(x_edges.size() - 1);
  const double dp = (p_edges(p_edges.size() - 1) - p_edges(0)) / static_cast<double>(p_edges.size() - 1);
  return dx * dp;
}

GridSpec default_grid(const Eigen::MatrixX2d &points, int bins) {
  if (bins < 1) throw ConfigError("bins must be >= 1", "bins");
  const double sx = column_std(points, 0);
  const double sp = column_std(points, 1);
  if (!(sx > 0) || !(sp > 0))
    throw NumericalError("phase_space_density", "point cloud has zero spread on an axis");
  return {-4 * sx, 4 * sx, bins, -4 * sp, 4 * sp, bins};
}

Eigen::Vector2d silverman_bandwidth(const Eigen::MatrixX2d &points) {
  const double factor = std::pow(static_cast<double>(points.rows()), -1.0 / 6.0);
  return {column_std(points, 0) * factor, column_std(points, 1) * factor};
}

namespace {

PhaseSpaceDistribution accumulate(const Eigen::MatrixX2d &points, const GridSpec &grid, double bx, double bp) {
  PhaseSpaceDistribution d;
  d.x_edges = edges(grid.x_min, grid.x_max, grid.nx);
  d.p_edges = edges(grid.p_min, grid.p_max, grid.np);
  d.bandwidth_x = bx;
  d.bandwidth_p = bp;
  d.n_points = static_cast<int>(points.rows());
  d.density = Eigen::MatrixXd::Zero(grid.nx, grid.np);
  std::vector<double> wx, wp;
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    const int ix = spread(points(i, 0), bx, d.x_edges, wx);
    const int ip = spread(points(i, 1), bp, d.p_edges, wp);
    for (std::size_t a = 0; a < wx.size(); ++a)
      for (std::size_t b = 0; b < wp.size(); ++b)
        d.density(ix + static_cast<int>(a), ip + static_cast<int>(b)) += wx[a] * wp[b];
  }
  d.density /= d.density.sum() * d.cell_area();
  return d;
}

bool on_grid(const GridSpec &grid, double x, double p) {
  return x >= grid.x_min && x <= grid.x_max && p >= grid.p_min && p <= grid.p_max;
}

Eigen::Vector2d resolve_bandwidth(const Eigen::MatrixX2d &points, std::optional<double> bandwidth) {
  if (!bandwidth) return silverman_bandwidth(points);
  if (!(*bandwidth >= 0)) throw ConfigError("bandwidth must be >= 0", "bandwidth");
  return {*bandwidth, *bandwidth};
}

} // namespace

PhaseSpaceDistribution phase_space_density(const Eigen::MatrixX2d &points, const GridSpec &grid,
                                           std::optional<double> bandwidth) {
  if (points.rows() < 1) throw NumericalError("phase_space_density", "no points");
  if (grid.nx < 1 || grid.np < 1 || !(grid.x_max > grid.x_min) || !(grid.p_max > grid.p_min))
    throw ConfigError("degenerate phase-space grid", "grid");
  int outside = 0;
  for (Eigen::Index i = 0; i < points.rows(); ++i)
    if (!on_grid(grid, points(i, 0), points(i, 1))) ++outside;
  if (outside > 0)
    throw NumericalError("phase_space_density", std::to_string(outside) + " points lie outside the grid");
  const Eigen::Vector2d bw = resolve_bandwidth(points, bandwidth);
  return accumulate(points, grid, bw(0), bw(1));
}

PhaseSpaceDistribution phase_space_density(const Eigen::MatrixX2d &points, std::optional<double> bandwidth,
                                           int bins) {
  if (points.rows() < 10)
    throw NumericalError("phase_space_density", "need at least 10 points, got " + std::to_string(points.rows()));
  const GridSpec grid = default_grid(points, bins);
  std::vector<Eigen::Index> inside;
  for (Eigen::Index i = 0; i < points.rows(); ++i)
    if (on_grid(grid, points(i, 0), points(i, 1))) inside.push_back(i);
  Eigen::MatrixX2d kept(static_cast<Eigen::Index>(inside.size()), 2);
  for (std::size_t r = 0; r < inside.size(); ++r) kept.row(static_cast<Eigen::Index>(r)) = points.row(inside[r]);
  if (kept.rows() == 0) throw NumericalError("phase_space_density", "no points inside the default grid");
  // Silverman is taken from the full cloud.
  const Eigen::Vector2d bw = resolve_bandwidth(points, bandwidth);
  auto d = accumulate(kept, grid, bw(0), bw(1));
  d.n_outside = static_cast<int>(points.rows() - kept.rows());
  return d;
}

Marginal position_marginal(const PhaseSpaceDistribution &d) {
  const auto nx = d.density.rows();
  const double dx = (d.x_edges(nx) - d.x_edges(0)) / static_cast<double>(nx);
  Marginal m;
  m.bin_width = dx;
  m.x = 0.5 * (d.x_edges.head(nx) + d.x_edges.tail(nx));
  m.density = d.density.rowwise().sum();
  m.density /= m.density.sum() * dx;
  return m;
}

namespace {

// Parameters (w1, mu1, s1, w2, mu2, s2); f = sum_k w_k N(x; mu_k, s_k).
struct DoubleGaussianProblem {
  const Eigen::VectorXd &x;
  const Eigen::VectorXd &y;

  Eigen::Index n_residuals() const { return x.size(); }

  void residuals(const Eigen::VectorXd &p, Eigen::VectorXd &r) const {
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      double f = 0;
      for (int k = 0; k < 2; ++k) {
        const double z = (x(i) - p(3 * k + 1)) / p(3 * k + 2);
        f += p(3 * k) * std::exp(-0.5 * z * z) / (kSqrt2Pi * p(3 * k + 2));
      }
      r(i) = f - y(i);
    }
  }

  void jacobian(const Eigen::VectorXd &p, Eigen::MatrixXd &J) const {
    for (Eigen::Index i = 0; i < x.size(); ++i) {
      for (int k = 0; k < 2; ++k) {
        const double w = p(3 * k), mu = p(3 * k + 1), s = p(3 * k + 2);
        const double z = (x(i) - mu) / s;
        const double g = std::exp(-0.5 * z * z) / (kSqrt2Pi * s);
        J(i, 3 * k) = g;
        J(i, 3 * k + 1) = w * g * z / s;
        J(i, 3 * k + 2) = w * g * (z * z - 1.0) / s;
      }
    }
  }

  void project(Eigen::VectorXd &p) const {
    const double floor = 1e-6 * (x(x.size() - 1) - x(0)) / static_cast<double>(x.size());
    for (int k = 0; k < 2; ++k) {
      p(3 * k + 2) = std::max(std::abs(p(3 * k + 2)), floor);
      p(3 * k) = std::max(p(3 * k), 0.0);
    }
  }
};

Eigen::VectorXd gaussian_smooth(const Eigen::VectorXd &y, double sigma_bins) {
  if (sigma_bins <= 0) return y;
  const int reach = static_cast<int>(std::ceil(4 * sigma_bins));
  const auto n = y.size();
  Eigen::VectorXd out(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double acc = 0, wsum = 0;
    for (int k = -reach; k <= reach; ++k) {
      const Eigen::Index j = i + k;
      if (j < 0 || j >= n) continue;
      const double w = std::exp(-0.5 * k * k / (sigma_bins * sigma_bins));
      acc += w * y(j);
      wsum += w;
    }
    out(i) = acc / wsum;
  }
  return out;
}

} // namespace

DoubleGaussianFit fit_double_gaussian(const Marginal &marginal, const DoubleGaussianOptions &opts) {
  const auto n = marginal.x.size();
  if (n < 20)
    throw NumericalError("fit_double_gaussian", "marginal needs >= 20 support points, got " + std::to_string(n));

  const Eigen::VectorXd s = gaussian_smooth(marginal.density, opts.seed_smoothing_bins);
  std::vector<Eigen::Index> peaks;
  for (Eigen::Index i = 1; i + 1 < n; ++i)
    if (s(i) > s(i - 1) && s(i) >= s(i + 1) && s(i) > 0) peaks.push_back(i);
  if (peaks.empty()) {
    Eigen::Index imax;
    s.maxCoeff(&imax);
    peaks.push_back(imax);
  }
  std::stable_sort(peaks.begin(), peaks.end(), [&](Eigen::Index a, Eigen::Index b) { return s(a) > s(b); });

  const double dx = marginal.bin_width;
  const double mean = (marginal.x.array() * marginal.density.array()).sum() * dx;
  const double var =
      ((marginal.x.array() - mean).square() * marginal.density.array()).sum() * dx;

  double mu1, mu2, sigma;
  if (peaks.size() >= 2) {
    mu1 = std::min(marginal.x(peaks[0]), marginal.x(peaks[1]));
    mu2 = std::max(marginal.x(peaks[0]), marginal.x(peaks[1]));
    sigma = 0.5 * (mu2 - mu1);
  } else {
    mu1 = mu2 = marginal.x(peaks[0]);
    sigma = 0.5 * std::sqrt(var);
  }
  // Fit in standardised coordinates so every parameter is of order one.
  const double sd = std::sqrt(var);
  if (!(sd > 0)) throw NumericalError("fit_double_gaussian", "marginal has zero variance");
  const Eigen::VectorXd xs = ((marginal.x.array() - mean) / sd).matrix();
  const Eigen::VectorXd ys = marginal.density * sd;
  Eigen::VectorXd p(6);
  p << 0.5, (mu1 - mean) / sd, sigma / sd, 0.5, (mu2 - mean) / sd, sigma / sd;

  const DoubleGaussianProblem problem{xs, ys};
  LevMarOptions lm_opts;
  lm_opts.max_iterations = opts.max_iterations;
  const LevMarResult lm = levenberg_marquardt(problem, p, lm_opts);
  Eigen::VectorXd q = lm.parameters;
  for (int k = 0; k < 2; ++k) {
    q(3 * k + 1) = mean + sd * q(3 * k + 1);
    q(3 * k + 2) = sd * q(3 * k + 2);
  }

  DoubleGaussianFit fit;
  const double wsum = q(0) + q(3);
  int a = 0, b = 1;
  if (q(4) < q(1)) std::swap(a, b);
  fit.mu1 = q(3 * a + 1);
  fit.sigma1 = q(3 * a + 2);
  fit.w1 = q(3 * a) / wsum;
  fit.mu2 = q(3 * b + 1);
  fit.sigma2 = q(3 * b + 2);
  fit.w2 = q(3 * b) / wsum;
  fit.iterations = lm.iterations;
  fit.residual_rms = std::sqrt(lm.cost / static_cast<double>(n)) / ys.maxCoeff();
  const bool finite = std::isfinite(fit.mu1) && std::isfinite(fit.mu2) && std::isfinite(fit.sigma1) &&
                      std::isfinite(fit.sigma2) && wsum > 0;
  fit.converged = lm.converged && finite && fit.residual_rms <= opts.residual_tolerance;
  return fit;
}

double ashman_d(double mu1, double mu2, double sigma1, double sigma2) {
  return std::sqrt(2.0) * std::abs(mu1 - mu2) / std::sqrt(sigma1 * sigma1 + sigma2 * sigma2);
}

double ashman_d(const DoubleGaussianFit &fit) {
  if (!fit.converged)
    throw NumericalError("ashman_d", "double-Gaussian fit did not converge (residual_rms " +
                                         std::to_string(fit.residual_rms) + ")");
  return ashman_d(fit.mu1, fit.mu2, fit.sigma1, fit.sigma2);
}

Spectrum welch_psd(std::span<const double> samples, double sample_rate, int segment_length) {
  const auto n = static_cast<Eigen::Index>(samples.size());
  if (segment_length < 8 || segment_length > n)
    throw NumericalError("welch_psd", "segment length must lie in [8, record length]");
  const Eigen::Index hop = segment_length / 2;
  Eigen::VectorXd window(segment_length);
  for (int i = 0; i < segment_length; ++i)
    window(i) = 0.5 - 0.5 * std::cos(2.0 * kPi * i / segment_length);
  const double wnorm = window.squaredNorm();

  Eigen::FFT<double> fft;
  const Eigen::Index n_freq = segment_length / 2 + 1;
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(n_freq);
  std::vector<double> seg(static_cast<std::size_t>(segment_length));
  std::vector<std::complex<double>> spec;
  int count = 0;
  for (Eigen::Index start = 0; start + segment_length <= n; start += hop) {
    const double mean =
        std::accumulate(samples.begin() + start, samples.begin() + start + segment_length, 0.0) / segment_length;
    for (int i = 0; i < segment_length; ++i)
      seg[static_cast<std::size_t>(i)] = (samples[static_cast<std::size_t>(start + i)] - mean) * window(i);
    fft.fwd(spec, seg);
    for (Eigen::Index k = 0; k < n_freq; ++k) acc(k) += std::norm(spec[static_cast<std::size_t>(k)]);
    ++count;
  }
  // One-sided density per rad/s.
  const double omega_rate = 2.0 * kPi * sample_rate;
  Spectrum out;
  out.segments = count;
  out.psd = acc / (count * wnorm * omega_rate);
  out.psd.segment(1, n_freq - 2) *= 2.0;
  out.omega = Eigen::VectorXd::LinSpaced(n_freq, 0.0, omega_rate / 2.0);
  return out;
}

namespace {

// Normalised frequency u = omega / scale; params (u0, g, A, B):
// m(u) = A / ((u^2 - u0^2)^2 + g^2 u^2) + b^2, residual log m - log data.
struct LorentzianProblem {
  const Eigen::VectorXd &u;
  const Eigen::VectorXd &y;

  Eigen::Index n_residuals() const { return u.size(); }

  void residuals(const Eigen::VectorXd &p, Eigen::VectorXd &r) const {
    for (Eigen::Index i = 0; i < u.size(); ++i) {
      const double d = u(i) * u(i) - p(0) * p(0);
      const double den = d * d + p(1) * p(1) * u(i) * u(i);
      r(i) = std::log(p(2) / den + p(3) * p(3)) - std::log(y(i));
    }
  }

  void jacobian(const Eigen::VectorXd &p, Eigen::MatrixXd &J) const {
    for (Eigen::Index i = 0; i < u.size(); ++i) {
      const double u2 = u(i) * u(i);
      const double d = u2 - p(0) * p(0);
      const double den = d * d + p(1) * p(1) * u2;
      const double m = p(2) / den + p(3) * p(3);
      const double dm_dden = -p(2) / (den * den);
      J(i, 0) = dm_dden * (2.0 * d * (-2.0 * p(0))) / m;
      J(i, 1) = dm_dden * (2.0 * p(1) * u2) / m;
      J(i, 2) = (1.0 / den) / m;
      J(i, 3) = 2.0 * p(3) / m;
    }
  }

  void project(Eigen::VectorXd &p) const {
    p(0) = std::abs(p(0));
    p(1) = std::max(std::abs(p(1)), 1e-9);
    p(2) = std::max(p(2), 1e-300);
    p(3) = std::abs(p(3));
  }
};

} // namespace

SpectrumFit psd_lorentzian_calibration(std::span<const double> samples, double sample_rate,
                                       const SpectrumFitOptions &opts) {
  const std::span<const double> one[] = {samples};
  return psd_lorentzian_calibration(std::span<const std::span<const double>>(one), sample_rate, opts);
}

SpectrumFit psd_lorentzian_calibration(std::span<const std::span<const double>> records, double sample_rate,
                                       const SpectrumFitOptions &opts) {
  if (records.empty()) throw NumericalError("psd_lorentzian_calibration", "no records");
  std::size_t shortest = records.front().size();
  for (const auto &r : records) shortest = std::min(shortest, r.size());
  const auto n = static_cast<int>(shortest);
  int seg = opts.segment_length;
  if (seg == 0) {
    seg = 8;
    while (2 * seg <= 2 * n / 9) seg *= 2;
  }
  Spectrum spec = welch_psd(records.front(), sample_rate, seg);
  if (records.size() > 1) {
    spec.psd *= spec.segments;
    for (std::size_t r = 1; r < records.size(); ++r) {
      const Spectrum more = welch_psd(records[r], sample_rate, seg);
      spec.psd += more.psd * more.segments;
      spec.segments += more.segments;
    }
    spec.psd /= spec.segments;
  }
  const auto nf = spec.psd.size();

  // Skip the lowest bins, which carry the mean-removal and window leakage.
  const Eigen::Index first = std::min<Eigen::Index>(3, nf - 1);
  Eigen::Index ipk = first;
  spec.psd.segment(first, nf - first).maxCoeff(&ipk);
  ipk += first;
  std::vector<double> sorted(spec.psd.data() + first, spec.psd.data() + nf);
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<long>(sorted.size() / 2), sorted.end());
  const double median = sorted[sorted.size() / 2];
  const double peak = spec.psd(ipk);
  if (!(peak > opts.min_peak_contrast * median))
    throw NumericalError("psd_lorentzian_calibration",
                         "no resonance above background (peak/median " + std::to_string(peak / median) + ")");
  const double omega_pk = spec.omega(ipk);
  const double duration = n / sample_rate;
  if (duration * omega_pk / (2.0 * kPi) < 100.0)
    throw NumericalError("psd_lorentzian_calibration", "record spans fewer than 100 oscillation periods");

  // Full width at half maximum as the seed linewidth.
  Eigen::Index lo = ipk, hi = ipk;
  while (lo > first && spec.psd(lo) > 0.5 * peak) --lo;
  while (hi < nf - 1 && spec.psd(hi) > 0.5 * peak) ++hi;
  const double dw = spec.omega(1) - spec.omega(0);
  const double gamma_seed = std::max(spec.omega(hi) - spec.omega(lo), 2.0 * dw);

  const double w_lo = std::max(omega_pk - opts.band_half_widths * gamma_seed, 0.2 * omega_pk);
  const double w_hi = std::min(omega_pk + opts.band_half_widths * gamma_seed, 3.0 * omega_pk);
  std::vector<Eigen::Index> band;
  for (Eigen::Index k = first; k < nf; ++k)
    if (spec.omega(k) >= w_lo && spec.omega(k) <= w_hi && spec.psd(k) > 0) band.push_back(k);
  if (band.size() < 8) throw NumericalError("psd_lorentzian_calibration", "resonance is not resolved");

  const double scale = omega_pk;
  Eigen::VectorXd u(static_cast<Eigen::Index>(band.size())), y(static_cast<Eigen::Index>(band.size()));
  for (std::size_t i = 0; i < band.size(); ++i) {
    u(static_cast<Eigen::Index>(i)) = spec.omega(band[i]) / scale;
    y(static_cast<Eigen::Index>(i)) = spec.psd(band[i]) / peak;
  }
  const double g0 = gamma_seed / scale;
  Eigen::VectorXd p(4);
  p << 1.0, g0, g0 * g0, std::sqrt(1e-3);

  const LorentzianProblem problem{u, y};
  const LevMarResult lm = levenberg_marquardt(problem, p);
  const Eigen::VectorXd &q = lm.parameters;

  SpectrumFit fit;
  fit.omega0 = q(0) * scale;
  fit.gamma = q(1) * scale;
  fit.amplitude = q(2) * peak * std::pow(scale, 4);
  fit.background = q(3) * q(3) * peak;
  const Eigen::Vector4d jac(scale, scale, peak * std::pow(scale, 4), 2.0 * q(3) * peak);
  fit.covariance = jac.asDiagonal() * lm.covariance * jac.asDiagonal();
  fit.segments = spec.segments;
  fit.converged = lm.converged;
  if (!lm.converged) throw NumericalError("psd_lorentzian_calibration", "Lorentzian fit did not converge");
  return fit;
}

namespace {

// Params (a, b, tau): var = a + (b - a) exp(-t / tau).
struct RelaxationProblem {
  const Eigen::VectorXd &t;
  const Eigen::VectorXd &y;

  Eigen::Index n_residuals() const { return t.size(); }

  void residuals(const Eigen::VectorXd &p, Eigen::VectorXd &r) const {
    r = (p(0) + (p(1) - p(0)) * (-t.array() / p(2)).exp()).matrix() - y;
  }

  void jacobian(const Eigen::VectorXd &p, Eigen::MatrixXd &J) const {
    const Eigen::ArrayXd e = (-t.array() / p(2)).exp();
    J.col(0) = (1.0 - e).matrix();
    J.col(1) = e.matrix();
    J.col(2) = ((p(1) - p(0)) * e * t.array() / (p(2) * p(2))).matrix();
  }

  void project(Eigen::VectorXd &p) const { p(2) = std::max(std::abs(p(2)), 1e-12 * t(t.size() - 1)); }
};

} // namespace

RelaxationFit relaxation_time(std::span<const double> times, std::span<const double> variances) {
  const auto n = static_cast<Eigen::Index>(times.size());
  if (n < 5 || variances.size() != times.size())
    throw NumericalError("relaxation_time", "need at least 5 matching samples");
  Eigen::VectorXd t(n), y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    t(i) = times[static_cast<std::size_t>(i)] - times[0];
    y(i) = variances[static_cast<std::size_t>(i)];
  }
  const Eigen::Index tail = std::max<Eigen::Index>(1, n / 10);
  const double v_inf = y.tail(tail).mean();
  const double v_0 = y.head(std::max<Eigen::Index>(1, n / 50)).mean();
  const double scale = std::max(std::abs(v_inf), std::abs(v_0));
  const double resid_std = std::sqrt((y.tail(tail).array() - v_inf).square().mean());
  if (!(std::abs(v_0 - v_inf) > 1e-3 * scale) || !(std::abs(v_0 - v_inf) > 3.0 * resid_std))
    throw NumericalError("relaxation_time", "series has no resolvable decay; tau is unidentifiable");

  double tau = t(n - 1) / 3.0;
  const double target = v_inf + (v_0 - v_inf) / std::exp(1.0);
  for (Eigen::Index i = 0; i < n; ++i)
    if ((v_0 > v_inf) ? y(i) <= target : y(i) >= target) {
      tau = std::max(t(i), t(1));
      break;
    }

  Eigen::VectorXd y_scaled = y / scale;
  Eigen::VectorXd p(3);
  p << v_inf / scale, v_0 / scale, tau;
  const RelaxationProblem problem{t, y_scaled};
  const LevMarResult lm = levenberg_marquardt(problem, p);

  RelaxationFit fit;
  fit.var_final = lm.parameters(0) * scale;
  fit.var_initial = lm.parameters(1) * scale;
  fit.tau = lm.parameters(2);
  fit.tau_stderr = std::sqrt(std::max(0.0, lm.covariance(2, 2)));
  fit.converged = lm.converged && std::isfinite(fit.tau) && fit.tau < t(n - 1);
  if (!fit.converged) throw NumericalError("relaxation_time", "exponential fit did not converge");
  return fit;
}

RelaxationFit relaxation_time(const classical::VarianceSeries &series) {
  const Eigen::VectorXd var = series.std_x.array().square();
  return relaxation_time(std::span<const double>(series.times.data(), static_cast<std::size_t>(series.times.size())),
                         std::span<const double>(var.data(), static_cast<std::size_t>(var.size())));
}

BackboneFit duffing_backbone(std::span<const classical::Trajectory> trajectories, int amplitude_bins) {
  if (amplitude_bins < 2) throw ConfigError("amplitude_bins must be >= 2");
  std::vector<double> amp2, freq;
  for (const auto &tr : trajectories) {
    const auto &x = tr.positions;
    const auto &t = tr.times;
    double last_cross = std::numeric_limits<double>::quiet_NaN();
    double xmax = -std::numeric_limits<double>::infinity();
    double xmin = std::numeric_limits<double>::infinity();
    for (Eigen::Index k = 1; k < x.size(); ++k) {
      xmax = std::max(xmax, x(k));
      xmin = std::min(xmin, x(k));
      if (x(k - 1) < 0 && x(k) >= 0) {
        const double frac = -x(k - 1) / (x(k) - x(k - 1));
        const double tc = t(k - 1) + frac * (t(k) - t(k - 1));
        if (std::isfinite(last_cross)) {
          const double a = 0.5 * (xmax - xmin);
          amp2.push_back(a * a);
          freq.push_back(2.0 * kPi / (tc - last_cross));
        }
        last_cross = tc;
        xmax = -std::numeric_limits<double>::infinity();
        xmin = std::numeric_limits<double>::infinity();
      }
    }
  }
  if (amp2.size() < 3) throw NumericalError("duffing_backbone", "fewer than 3 complete oscillation cycles");
  const auto [amin_it, amax_it] = std::minmax_element(amp2.begin(), amp2.end());
  const double amin = *amin_it, amax = *amax_it;
  if (!(amax - amin > 1e-3 * amax))
    throw NumericalError("duffing_backbone", "insufficient amplitude spread across cycles");

  std::vector<double> bx(static_cast<std::size_t>(amplitude_bins), 0.0), by(bx), bn(bx);
  for (std::size_t i = 0; i < amp2.size(); ++i) {
    auto b = static_cast<std::size_t>((amp2[i] - amin) / (amax - amin) * amplitude_bins);
    b = std::min(b, static_cast<std::size_t>(amplitude_bins - 1));
    bx[b] += amp2[i];
    by[b] += freq[i];
    bn[b] += 1.0;
  }
  // Weighted least squares of bin-mean frequency on bin-mean A^2.
  double sw = 0, sx = 0, sy = 0, sxx = 0, sxy = 0;
  int used = 0;
  for (std::size_t b = 0; b < bn.size(); ++b) {
    if (bn[b] == 0) continue;
    const double xb = bx[b] / bn[b], yb = by[b] / bn[b], w = bn[b];
    sw += w;
    sx += w * xb;
    sy += w * yb;
    sxx += w * xb * xb;
    sxy += w * xb * yb;
    ++used;
  }
  if (used < 2) throw NumericalError("duffing_backbone", "insufficient amplitude spread across bins");
  const double det = sw * sxx - sx * sx;
  const double slope = (sw * sxy - sx * sy) / det;
  const double intercept = (sy - slope * sx) / sw;

  double ss = 0;
  for (std::size_t i = 0; i < amp2.size(); ++i) {
    const double r = freq[i] - (intercept + slope * amp2[i]);
    ss += r * r;
  }
  // Per-cycle scatter propagated to the slope.
  const double s2 = ss / std::max<double>(1.0, static_cast<double>(amp2.size()) - 2.0);
  double cx = 0;
  const double mean_a = std::accumulate(amp2.begin(), amp2.end(), 0.0) / static_cast<double>(amp2.size());
  for (double a : amp2) cx += (a - mean_a) * (a - mean_a);
  const double slope_err = std::sqrt(s2 / cx);

  BackboneFit fit;
  fit.omega0 = intercept;
  fit.xi = 8.0 * slope / (3.0 * intercept);
  fit.xi_stderr = 8.0 * slope_err / (3.0 * intercept);
  fit.n_cycles = static_cast<int>(amp2.size());
  fit.n_bins = used;
  return fit;
}

} // namespace levitate::analysis
