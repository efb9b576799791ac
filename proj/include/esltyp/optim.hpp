#pragma once

#include <cmath>
#include <cstddef>
#include <deque>
#include <vector>

#include "esltyp/util.hpp"

namespace esltyp {

enum class OptMethod { Lbfgs, GradientAscent };

struct OptOptions {
  OptMethod method = OptMethod::Lbfgs;
  double tolerance = 1e-6;  // on the infinity norm of the gradient
  int max_iters = 500;
  int memory = 10;          // curvature pairs kept by L-BFGS
  double armijo_c1 = 1e-4;
  double backtrack = 0.5;
  int max_backtracks = 60;
};

struct OptReport {
  std::vector<double> trace;  // objective at every accepted iterate, x0 first
  int iterations = 0;
  bool converged = false;
};

namespace detail {

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double inf_norm(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

inline void check_finite(double f, const std::vector<double>& g) {
  if (!std::isfinite(f)) throw DomainError("optimizer: objective is not finite");
  for (double x : g)
    if (!std::isfinite(x)) throw DomainError("optimizer: gradient is not finite");
}

}  // namespace detail

// Maximizes f via limited-memory quasi-Newton ascent (or plain gradient
// ascent) with a backtracking line search enforcing sufficient increase.
// `fg(x, grad)` must return f(x) and fill `grad` with the ascent gradient.
// The trace is non-decreasing by construction.
template <typename FG>
OptReport maximize(FG&& fg, std::vector<double>& x, const OptOptions& opts) {
  const size_t dim = x.size();
  std::vector<double> grad(dim, 0.0);
  double f = fg(x, grad);
  detail::check_finite(f, grad);

  OptReport report;
  report.trace.push_back(f);

  // Curvature history in minimization convention: y = -(grad_new - grad_old).
  std::deque<std::vector<double>> s_hist, y_hist;
  std::deque<double> rho_hist;

  std::vector<double> direction(dim), x_new(dim), grad_new(dim), q(dim);

  for (int iter = 0; iter < opts.max_iters; ++iter) {
    if (detail::inf_norm(grad) <= opts.tolerance) {
      report.converged = true;
      break;
    }

    // Search direction.
    if (opts.method == OptMethod::GradientAscent || s_hist.empty()) {
      direction = grad;
    } else {
      // Two-loop recursion on the negated gradient.
      for (size_t i = 0; i < dim; ++i) q[i] = -grad[i];
      const size_t m = s_hist.size();
      std::vector<double> alpha(m);
      for (size_t i = m; i-- > 0;) {
        alpha[i] = rho_hist[i] * detail::dot(s_hist[i], q);
        for (size_t j = 0; j < dim; ++j) q[j] -= alpha[i] * y_hist[i][j];
      }
      const double gamma =
          detail::dot(s_hist.back(), y_hist.back()) / detail::dot(y_hist.back(), y_hist.back());
      for (size_t j = 0; j < dim; ++j) q[j] *= gamma;
      for (size_t i = 0; i < m; ++i) {
        double beta = rho_hist[i] * detail::dot(y_hist[i], q);
        for (size_t j = 0; j < dim; ++j) q[j] += (alpha[i] - beta) * s_hist[i][j];
      }
      for (size_t j = 0; j < dim; ++j) direction[j] = -q[j];
    }

    double slope = detail::dot(grad, direction);
    if (slope <= 0.0) {
      // Quasi-Newton direction lost ascent; fall back to the raw gradient.
      direction = grad;
      slope = detail::dot(grad, grad);
      if (slope == 0.0) {
        report.converged = true;
        break;
      }
    }

    // Backtracking Armijo line search. The first step is scaled down so a
    // steep initial gradient does not start far outside the useful region.
    double step = iter == 0 ? 1.0 / std::max(1.0, detail::inf_norm(grad)) : 1.0;
    double f_new = f;
    bool accepted = false;
    for (int bt = 0; bt < opts.max_backtracks; ++bt) {
      for (size_t j = 0; j < dim; ++j) x_new[j] = x[j] + step * direction[j];
      f_new = fg(x_new, grad_new);
      detail::check_finite(f_new, grad_new);
      if (f_new >= f + opts.armijo_c1 * step * slope) {
        accepted = true;
        break;
      }
      step *= opts.backtrack;
    }
    if (!accepted) break;  // line search stalled; report non-convergence below

    if (opts.method == OptMethod::Lbfgs) {
      std::vector<double> s(dim), y(dim);
      for (size_t j = 0; j < dim; ++j) {
        s[j] = x_new[j] - x[j];
        y[j] = -(grad_new[j] - grad[j]);
      }
      double sy = detail::dot(s, y);
      if (sy > 1e-12 * std::sqrt(detail::dot(s, s)) * std::sqrt(detail::dot(y, y))) {
        s_hist.push_back(std::move(s));
        y_hist.push_back(std::move(y));
        rho_hist.push_back(1.0 / sy);
        if (static_cast<int>(s_hist.size()) > opts.memory) {
          s_hist.pop_front();
          y_hist.pop_front();
          rho_hist.pop_front();
        }
      }
    }

    x.swap(x_new);
    grad.swap(grad_new);
    f = f_new;
    report.trace.push_back(f);
    report.iterations = iter + 1;
  }

  if (!report.converged) {
    // max_iters exhausted or stalled line search: check the final gradient.
    report.converged = detail::inf_norm(grad) <= opts.tolerance;
  }
  return report;
}

}  // namespace esltyp
