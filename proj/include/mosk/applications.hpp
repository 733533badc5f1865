#pragma once

#include <functional>
#include <optional>
#include <string>

#include <nlohmann/json_fwd.hpp>

#include "mosk/solvers.hpp"
#include "mosk/trace.hpp"

namespace mosk {

// ---- convex-concave minimax ----

// Scalar functions f, g entering the bilinear saddle problem
// min_z max_w f(z) + <Kz, w> - g(w), given through their prox maps.
struct ProxFn {
  std::string kind = "zero";  // zero | l1 | box
  double lambda = 0.0;
  Vec lo, hi;

  Vec prox(double t, const Vec& u) const;
  nlohmann::json to_json() const;
  static ProxFn from_json(const nlohmann::json& j);
};

struct MinimaxProblem {
  std::string id;
  bool bilinear = false;

  // smooth case: L(z,w) = 0.5 z'Az + z'Kw - 0.5 w'Dw (A, D PSD)
  Mat a, d;
  // both cases
  Mat k;
  // bilinear case
  ProxFn f, g;
  double tau = 0.0, sigma = 0.0;  // 0: defaults 0.99/||K||

  double L_lip = 0.0;  // joint Lipschitz constant of grad L, or ||K||
  Vec z0, w0;
  std::optional<Vec> saddle;  // (z*, w*) stacked, when known

  int dim_z() const { return static_cast<int>(k.cols()); }
  int dim_w() const { return static_cast<int>(k.rows()); }

  // Stacked monotone operator G(x) = (grad_z L, -grad_w L) for the smooth case.
  Operator stacked_operator() const;
};

struct MinimaxConfig {
  std::size_t max_iters = 1000;
  double tol = 1e-10;
  bool lyapunov = true;
  std::optional<double> eta0;  // default: theorem value for the case
  bool store_iterates = false;
};

// Anchored Popov on the stacked gradient operator; trace records ||grad L||.
IterationTrace solve_minimax_smooth(const MinimaxProblem& p, const MinimaxConfig& cfg);

// Anchored Popov on G_H in the H-metric (PDHG-like six-line recursion); trace
// records the H-norm residual, aux carries the Euclidean norm.
IterationTrace solve_minimax_bilinear(const MinimaxProblem& p, const MinimaxConfig& cfg);

// The H-metric machinery, exposed for tests.
struct HMetric {
  Mat h;          // [[I/tau, -K'], [-K, I/sigma]]
  double tau, sigma;
  Mat k;

  double norm(const Vec& v) const;
  double inner(const Vec& u, const Vec& v) const;
};
HMetric make_h_metric(const Mat& k, double tau, double sigma);  // throws MetricNotPositiveDefinite
// G_H(x) = x - (H+G)^{-1}(H x) via the prox formula.
Vec eval_gh(const MinimaxProblem& p, const HMetric& m, const Vec& x);

// ---- ADMM for  min f(z) + g(w)  s.t.  P z + Q w = r ----

// Subproblem classes with exact minimizers: quadratic (0.5 y'S y + q'y) and
// l1 (lambda ||y||_1, requiring the corresponding P or Q to satisfy
// M'M = diag > 0 so the prox is a coordinatewise soft-threshold).
struct SubproblemFn {
  std::string kind = "quadratic";  // quadratic | l1
  Mat s;
  Vec q;
  double lambda = 0.0;

  nlohmann::json to_json() const;
  static SubproblemFn from_json(const nlohmann::json& j);
};

struct AdmmProblem {
  std::string id;
  Mat p, q;
  Vec r;
  SubproblemFn f, g;
  double gamma = 1.0;
  Vec x0, w0;
  std::optional<Vec> kkt_solution;  // (z*, w*, x*) stacked, when known

  int n() const { return static_cast<int>(p.rows()); }
};

struct AdmmConfig {
  std::size_t max_iters = 1000;
  double tol = 1e-10;
  bool accelerated = true;
  std::optional<double> eta0;  // default 0.5 gamma
  bool dual_residual = true;   // probe ||G_gamma(x_k)|| of the dual inclusion
  bool store_iterates = false;
};

// Per-iteration record lives in the shared trace type: residual column holds
// the primal infeasibility ||P z_k + Q w_k - r||, aux holds the dual residual.
IterationTrace solve_admm(const AdmmProblem& p, const AdmmConfig& cfg);

// Dual-inclusion operators A(x) = P df*(P'x) - r, B(x) = Q dg*(Q'x) with
// resolvents obtained from the primal subproblem solvers.  Used by the
// equivalence oracle between accelerated ADMM and the accelerated DR scheme.
Operator admm_dual_a(const AdmmProblem& p);
Operator admm_dual_b(const AdmmProblem& p);

// Exact argmin_y { fn(y) - <x, M y> + (gamma/2)||M y + c||^2 }.
Vec solve_subproblem(const SubproblemFn& fn, const Mat& m, const Vec& x, const Vec& c, double gamma);

MinimaxProblem minimax_from_json(const nlohmann::json& j);
nlohmann::json minimax_to_json(const MinimaxProblem& p);
AdmmProblem admm_from_json(const nlohmann::json& j);
nlohmann::json admm_to_json(const AdmmProblem& p);

}  // namespace mosk
