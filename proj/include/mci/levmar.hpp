#pragma once

// Small dense Levenberg-Marquardt solver. The problem supplies residuals
// r = data - model and the Jacobian dr/dp; damping scales the diagonal of
// J^T J and adapts by a factor of 10 on success/failure.

#include <cmath>
#include <functional>
#include <vector>

#include "mci/common.hpp"

namespace mci::detail {

struct LmOptions {
  int max_iterations = 100;
  double tol = 1e-8;  // relative parameter change
  double lambda0 = 1e-3;
};

struct LmResult {
  bool converged = false;
  int iterations = 0;
  double rms = 0.0;  // final residual RMS
};

// Solves A x = b for symmetric positive definite A (n <= ~32), in place.
inline bool cholesky_solve(std::vector<double>& a, std::vector<double>& b, int n) {
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j <= i; ++j) {
      double sum = a[i * n + j];
      for (int k = 0; k < j; ++k) sum -= a[i * n + k] * a[j * n + k];
      if (i == j) {
        if (sum <= 0.0 || !std::isfinite(sum)) return false;
        a[i * n + i] = std::sqrt(sum);
      } else {
        a[i * n + j] = sum / a[j * n + j];
      }
    }
  }
  for (int i = 0; i < n; ++i) {
    double sum = b[i];
    for (int k = 0; k < i; ++k) sum -= a[i * n + k] * b[k];
    b[i] = sum / a[i * n + i];
  }
  for (int i = n - 1; i >= 0; --i) {
    double sum = b[i];
    for (int k = i + 1; k < n; ++k) sum -= a[k * n + i] * b[k];
    b[i] = sum / a[i * n + i];
  }
  return true;
}

// eval(params, residuals, jacobian): fills r (n_res) and J = dr/dp
// (n_res x n_par, row-major). clamp(params) keeps parameters in bounds;
// scale[i] is the floor used in the relative-change convergence test.
template <typename Eval, typename Clamp>
LmResult levenberg_marquardt(std::vector<double>& params, size_t n_res,
                             Eval&& eval, Clamp&& clamp,
                             const std::vector<double>& scale,
                             const LmOptions& opt = {}) {
  const int n_par = static_cast<int>(params.size());
  std::vector<double> r(n_res), r_try(n_res);
  std::vector<double> jac(n_res * n_par);
  std::vector<double> jtj(n_par * n_par), a(n_par * n_par);
  std::vector<double> g(n_par), step(n_par), trial(params.size());

  auto chi2 = [&](const std::vector<double>& res) {
    double s = 0.0;
    for (double v : res) s += v * v;
    return s;
  };

  eval(params, r, jac);
  double cost = chi2(r);
  double lambda = opt.lambda0;
  LmResult result;

  for (int iter = 0; iter < opt.max_iterations; ++iter) {
    result.iterations = iter + 1;
    for (int i = 0; i < n_par; ++i) {
      g[i] = 0.0;
      for (size_t m = 0; m < n_res; ++m) g[i] += jac[m * n_par + i] * r[m];
      for (int j = 0; j <= i; ++j) {
        double s = 0.0;
        for (size_t m = 0; m < n_res; ++m)
          s += jac[m * n_par + i] * jac[m * n_par + j];
        jtj[i * n_par + j] = s;
        jtj[j * n_par + i] = s;
      }
    }

    bool stepped = false;
    for (int attempt = 0; attempt < 30 && !stepped; ++attempt) {
      a = jtj;
      for (int i = 0; i < n_par; ++i)
        a[i * n_par + i] += lambda * std::max(jtj[i * n_par + i], 1e-300);
      step = g;
      for (auto& s : step) s = -s;  // descend: delta = -(J^T J + lD)^-1 J^T r
      if (!cholesky_solve(a, step, n_par)) {
        lambda *= 10.0;
        continue;
      }
      trial = params;
      for (int i = 0; i < n_par; ++i) trial[i] += step[i];
      clamp(trial);
      // jtj/g for this iteration are already formed, so jac may be
      // overwritten here; on acceptance it is valid at the new point.
      eval(trial, r_try, jac);
      const double cost_try = chi2(r_try);
      if (std::isfinite(cost_try) && cost_try <= cost) {
        bool small = true;
        for (int i = 0; i < n_par; ++i) {
          const double ref = std::max(std::abs(params[i]), scale[i]);
          if (std::abs(trial[i] - params[i]) > opt.tol * ref) small = false;
        }
        params = trial;
        cost = cost_try;
        r = r_try;
        lambda = std::max(lambda / 10.0, 1e-12);
        stepped = true;
        if (small) {
          result.converged = true;
          result.rms = std::sqrt(cost / static_cast<double>(n_res));
          return result;
        }
      } else {
        lambda *= 10.0;
        if (attempt == 29) {
          // damping exhausted; restore jacobian at the kept parameters
          eval(params, r, jac);
        }
      }
    }
    if (!stepped) break;
  }
  result.rms = std::sqrt(cost / static_cast<double>(n_res));
  return result;
}

}  // namespace mci::detail
