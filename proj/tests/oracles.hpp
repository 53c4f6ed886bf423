#pragma once

// Closed-form references shared by the unit tests and the acceptance run.

#include <algorithm>
#include <cmath>
#include <vector>

#include <Eigen/Core>
#include <Eigen/LU>

#include "levitate/protocol.hpp"

namespace oracle {

/// Exact flow of x'' = -omega^2 x over time t, acting on (x, v).
inline Eigen::Matrix2d harmonic_map(double omega, double t) {
  const double c = std::cos(omega * t), s = std::sin(omega * t);
  Eigen::Matrix2d m;
  m << c, s / omega, -omega * s, c;
  return m;
}

/// Exact flow over [0, t_end] of x'' = -S(t) omega^2 x, switching at the
/// true window boundaries of the protocol.
inline Eigen::Matrix2d pulse_map(const levitate::PulseProtocol &protocol, double omega, double t_end) {
  std::vector<double> cuts{0.0, t_end};
  for (int q = 0; q < protocol.n_sequences; ++q) {
    const double base = q * protocol.sequence_period();
    for (int k = 0; k <= protocol.n_pulses; ++k) {
      cuts.push_back(base + k * protocol.pulse_period());
      if (k < protocol.n_pulses) cuts.push_back(base + k * protocol.pulse_period() + protocol.tau_low);
    }
  }
  std::erase_if(cuts, [&](double c) { return c < 0 || c > t_end; });
  std::sort(cuts.begin(), cuts.end());
  Eigen::Matrix2d m = Eigen::Matrix2d::Identity();
  for (std::size_t i = 1; i < cuts.size(); ++i) {
    const double a = cuts[i - 1], b = cuts[i];
    if (b <= a) continue;
    const double s = levitate::control_function(protocol, 0.5 * (a + b));
    m = harmonic_map(omega * std::sqrt(s), b - a) * m;
  }
  return m;
}

/// Sample covariance of the rows of a two-column matrix.
inline Eigen::Matrix2d covariance(const Eigen::MatrixX2d &points) {
  const Eigen::RowVector2d mean = points.colwise().mean();
  const Eigen::MatrixX2d c = points.rowwise() - mean;
  return c.transpose() * c / static_cast<double>(points.rows() - 1);
}

/// max |a_ij - b_ij| / |b_ij|.
inline double max_relative_error(const Eigen::Matrix2d &a, const Eigen::Matrix2d &b) {
  return ((a - b).array().abs() / b.array().abs()).maxCoeff();
}

/// 1 - 2/sqrt(e) up to sign: negative-region integral of the n = 1 Wigner function.
inline double fock1_negativity() { return 1.0 - 2.0 / std::sqrt(std::exp(1.0)); }

} // namespace oracle
