#pragma once

#include <cmath>

#include <Eigen/Dense>

namespace levitate {

struct LevMarOptions {
  int max_iterations = 200;
  double parameter_tolerance = 1e-8; // relative step size at convergence
  double initial_damping = 1e-3;
};

struct LevMarResult {
  Eigen::VectorXd parameters;
  Eigen::MatrixXd covariance; // s^2 (J^T J)^-1 at the solution
  double cost = 0;            // sum of squared residuals
  int iterations = 0;
  bool converged = false;
};

/// Damped Gauss-Newton with Marquardt diagonal scaling. `Problem` provides
///   Eigen::Index n_residuals() const;
///   void residuals(const Eigen::VectorXd &p, Eigen::VectorXd &r) const;
///   void jacobian(const Eigen::VectorXd &p, Eigen::MatrixXd &J) const;
/// Optionally `void project(Eigen::VectorXd &p) const` keeps p feasible.
template <typename Problem>
LevMarResult levenberg_marquardt(const Problem &problem, Eigen::VectorXd p,
                                 const LevMarOptions &opts = {}) {
  const Eigen::Index m = problem.n_residuals();
  const Eigen::Index n = p.size();
  Eigen::VectorXd r(m), r_trial(m);
  Eigen::MatrixXd J(m, n);

  auto project = [&](Eigen::VectorXd &q) {
    if constexpr (requires { problem.project(q); }) problem.project(q);
  };
  project(p);
  problem.residuals(p, r);
  double cost = r.squaredNorm();
  double lambda = opts.initial_damping;

  LevMarResult out;
  for (int it = 1; it <= opts.max_iterations; ++it) {
    out.iterations = it;
    problem.jacobian(p, J);
    const Eigen::MatrixXd JtJ = J.transpose() * J;
    const Eigen::VectorXd g = J.transpose() * r;
    Eigen::VectorXd diag = JtJ.diagonal().cwiseMax(1e-300);

    bool accepted = false;
    Eigen::VectorXd step;
    for (int tries = 0; tries < 30; ++tries) {
      Eigen::MatrixXd A = JtJ;
      A.diagonal() += lambda * diag;
      step = A.ldlt().solve(-g);
      Eigen::VectorXd trial = p + step;
      project(trial);
      step = trial - p;
      problem.residuals(trial, r_trial);
      const double trial_cost = r_trial.squaredNorm();
      if (std::isfinite(trial_cost) && trial_cost <= cost) {
        p = trial;
        r = r_trial;
        cost = trial_cost;
        lambda = std::max(lambda / 3.0, 1e-12);
        accepted = true;
        break;
      }
      lambda *= 4.0;
    }
    // No descent left at any damping: stationary point.
    if (!accepted || step.norm() <= opts.parameter_tolerance * (p.norm() + opts.parameter_tolerance)) {
      out.converged = true;
      break;
    }
  }

  problem.jacobian(p, J);
  const double dof = static_cast<double>(std::max<Eigen::Index>(1, m - n));
  const Eigen::MatrixXd JtJ = J.transpose() * J;
  out.covariance = JtJ.completeOrthogonalDecomposition().pseudoInverse() * (cost / dof);
  out.parameters = std::move(p);
  out.cost = cost;
  return out;
}

} // namespace levitate
