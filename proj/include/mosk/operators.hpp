#pragma once

#include <atomic>
#include <functional>
#include <memory>
#include <optional>
#include <string>

#include <nlohmann/json_fwd.hpp>

#include "mosk/vec.hpp"

namespace mosk {

// Evaluation counters shared by an operator handle and everything wrapping it.
// Counting is atomic so concurrent solves on shared handles stay consistent.
struct EvalCounts {
  std::atomic<long long> forward{0};
  std::atomic<long long> resolvent{0};
};

/// A maximally monotone operator exposed through a forward map, a resolvent
/// map (gamma, x) -> J_{gamma T}(x), or both.  Immutable after construction.
class Operator {
 public:
  using ForwardFn = std::function<Vec(const Vec&)>;
  using ResolventFn = std::function<Vec(double, const Vec&)>;

  Operator() = default;
  Operator(std::string name, int dim, ForwardFn fwd, ResolventFn res, std::optional<double> lipschitz);

  bool has_forward() const { return static_cast<bool>(forward_); }
  bool has_resolvent() const { return static_cast<bool>(resolvent_); }
  std::optional<double> lipschitz() const { return lipschitz_; }
  int dim() const { return dim_; }
  const std::string& name() const { return name_; }

  Vec forward(const Vec& x) const;
  Vec resolvent(double gamma, const Vec& x) const;

  // Instrumentation probes: same evaluation, not counted.  Used by the trace
  // and Lyapunov machinery so per-iteration complexity claims stay assertable.
  Vec forward_uncounted(const Vec& x) const;
  Vec resolvent_uncounted(double gamma, const Vec& x) const;

  const EvalCounts& counts() const { return *counts_; }
  void reset_counts() const { counts_->forward = 0; counts_->resolvent = 0; }

  // The JSON fragment the operator was built from, when it came from a factory.
  std::shared_ptr<const nlohmann::json> spec() const { return spec_; }
  void set_spec(std::shared_ptr<const nlohmann::json> s) { spec_ = std::move(s); }

 private:
  Vec eval_forward(const Vec& x) const;
  Vec eval_resolvent(double gamma, const Vec& x) const;

  std::string name_;
  int dim_ = 0;
  ForwardFn forward_;
  ResolventFn resolvent_;
  std::optional<double> lipschitz_;
  std::shared_ptr<EvalCounts> counts_ = std::make_shared<EvalCounts>();
  std::shared_ptr<const nlohmann::json> spec_;
};

// Free-function spellings of the two evaluations.
inline Vec eval_forward(const Operator& op, const Vec& x) { return op.forward(x); }
inline Vec eval_resolvent(const Operator& op, double gamma, const Vec& x) { return op.resolvent(gamma, x); }

/// Forward-backward residual mapping G_gamma(x) = (1/gamma)(x - J_{gamma A}(x - gamma B(x)))
/// for the inclusion 0 in A(x) + B(x).  Vanishes exactly at zeros of A + B.
class ResidualMap {
 public:
  ResidualMap() = default;
  ResidualMap(Operator a, Operator b, double gamma);

  // Requires B forward-evaluable.
  Vec residual(const Vec& x) const;
  // Resolvent-only form (1/gamma)(x - J_{gamma A}(2x - u)); caller guarantees
  // x = J_{gamma B}(u).  The precondition is checked when MOSK_CHECKED is on.
  Vec residual_no_forward(const Vec& x, const Vec& u) const;

  Vec residual_uncounted(const Vec& x) const;
  Vec residual_no_forward_uncounted(const Vec& x, const Vec& u) const;

  double gamma() const { return gamma_; }
  const Operator& opA() const { return a_; }
  const Operator& opB() const { return b_; }
  long long evals() const { return evals_->load(); }
  void reset_evals() const { *evals_ = 0; }

 private:
  Vec impl_forward(const Vec& x, bool counted) const;
  Vec impl_no_forward(const Vec& x, const Vec& u, bool counted) const;

  Operator a_, b_;
  double gamma_ = 1.0;
  std::shared_ptr<std::atomic<long long>> evals_ = std::make_shared<std::atomic<long long>>(0);
};

// ---- operator factories (the JSON "kind" vocabulary) ----

// G(x) = M x + q.  Resolvent solves (I + gamma M) y = x - gamma q by dense LU,
// factored once per gamma and cached.
Operator make_affine_operator(const Mat& m, const Vec& q, std::optional<double> lipschitz = std::nullopt);
// G(x) = M x (affine with zero offset).
Operator make_linear_operator(const Mat& m, std::optional<double> lipschitz = std::nullopt);
// Block-diagonal 2x2 rotations scaled by `scale`; dim must be even.
Operator make_rotation_operator(int dim, double scale);
Operator make_zero_operator(int dim);
// A = d(lambda ||.||_1); resolvent is coordinatewise soft-thresholding.
Operator make_l1_prox_operator(int dim, double lambda);
// A = N_[lo,hi]; resolvent is the (gamma-independent) clamp projection.
Operator make_box_projection_operator(const Vec& lo, const Vec& hi);

double spectral_norm(const Mat& m);

// JSON (de)serialization for the problem schema.
Operator operator_from_json(const nlohmann::json& j);
nlohmann::json operator_to_json(const Operator& op);

}  // namespace mosk
