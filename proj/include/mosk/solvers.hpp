#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>

#include "mosk/operators.hpp"
#include "mosk/schedules.hpp"
#include "mosk/trace.hpp"

namespace mosk {

enum class Scheme {
  AnchoredPopov,
  AnchoredPopovReflected,
  SplitAEG,
  SplitAEGResolventOnly,
  SplitPopov,
  SplitPopovDR,
  AccelDR,
  AccelDRForward,
  VanillaDR,
  VanillaEG,
  VanillaPopov,
};

const char* scheme_name(Scheme s);
std::optional<Scheme> scheme_from_name(const std::string& name);
bool scheme_is_accelerated(Scheme s);

// The (beta_k, eta_k) sequences a stepper consumes.  Schedule-backed in normal
// use; tests swap in constants to exercise the reduction identities.
struct ParamSeq {
  std::function<double(std::size_t)> beta;
  std::function<double(std::size_t)> eta;
};

ParamSeq schedule_params(std::shared_ptr<StepSchedule> s);
ParamSeq constant_params(double beta, double eta);

/// Uniform stepping interface.  step() advances the scheme by one iteration;
/// after n steps x() is the scheme's iterate x_n.  residual_norm() and
/// lyapunov() are instrumentation probes (uncounted evaluations).
class Stepper {
 public:
  virtual ~Stepper() = default;
  virtual void step() = 0;
  virtual const Vec& x() const = 0;
  virtual std::size_t iter() const = 0;
  virtual double residual_norm() const = 0;
  virtual std::optional<double> lyapunov() const { return std::nullopt; }
  // Scheme-specific second quantity (||x_k - y_{k-1}||^2 for the Popov-type
  // schemes); feeds the secondary theorem-bound lines.
  virtual std::optional<double> aux() const { return std::nullopt; }
  virtual double eta_at(std::size_t k) const = 0;
  // G_gamma evaluations made through a residual map, when the scheme uses one.
  virtual long long gres_evals() const { return 0; }
};

// ---- monotone equation G(x) = 0, G forward-evaluable ----

// Two-line anchored Popov scheme; one G evaluation per step.
class AnchoredPopovSolver : public Stepper {
 public:
  AnchoredPopovSolver(Operator g, Vec x0, ParamSeq params, double lipschitz, bool reflected_form = false);

  void step() override;
  const Vec& x() const override { return x_; }
  std::size_t iter() const override { return k_; }
  double residual_norm() const override;
  std::optional<double> lyapunov() const override;
  std::optional<double> aux() const override;
  double eta_at(std::size_t k) const override { return params_.eta(k); }

  const Vec& y_prev() const { return y_prev_; }

 private:
  Operator g_;
  Vec x0_, x_, y_prev_, g_prev_;
  Vec x_prev_;  // reflected form only
  ParamSeq params_;
  double lipschitz_;
  bool reflected_;
  std::size_t k_ = 0;
};

class VanillaEGSolver : public Stepper {
 public:
  VanillaEGSolver(Operator g, Vec x0, double eta);
  void step() override;
  const Vec& x() const override { return x_; }
  std::size_t iter() const override { return k_; }
  double residual_norm() const override;
  double eta_at(std::size_t) const override { return eta_; }

 private:
  Operator g_;
  Vec x_;
  double eta_;
  std::size_t k_ = 0;
};

class VanillaPopovSolver : public Stepper {
 public:
  VanillaPopovSolver(Operator g, Vec x0, double eta);
  void step() override;
  const Vec& x() const override { return x_; }
  std::size_t iter() const override { return k_; }
  double residual_norm() const override;
  double eta_at(std::size_t) const override { return eta_; }

 private:
  Operator g_;
  Vec x_, g_prev_;
  double eta_;
  std::size_t k_ = 0;
};

// ---- inclusion 0 in A(x) + B(x) ----

// Four-line splitting anchored extra-gradient step; two G_gamma and two
// J_{gamma B} evaluations per iteration.
class SplitAEGSolver : public Stepper {
 public:
  SplitAEGSolver(ResidualMap rm, Vec x0, ParamSeq params);

  void step() override;
  const Vec& x() const override { return x_; }
  std::size_t iter() const override { return k_; }
  double residual_norm() const override;
  std::optional<double> lyapunov() const override;
  double eta_at(std::size_t k) const override { return params_.eta(k); }

  const Vec& u() const { return u_; }
  const Vec& u0() const { return u0_; }
  Vec residual_vec() const;  // uncounted G_gamma(x_k)
  long long gres_evals() const override { return rm_.evals(); }

 private:
  ResidualMap rm_;
  Vec u0_, u_, x_;
  ParamSeq params_;
  std::size_t k_ = 0;
};

// Six-line resolvent-only form of the same scheme (no forward B).
class SplitAEGResolventOnlySolver : public Stepper {
 public:
  SplitAEGResolventOnlySolver(Operator a, Operator b, double gamma, Vec x0, ParamSeq params,
                              std::optional<Vec> u0 = std::nullopt);

  void step() override;
  const Vec& x() const override { return x_; }
  std::size_t iter() const override { return k_; }
  double residual_norm() const override;
  std::optional<double> lyapunov() const override;
  double eta_at(std::size_t k) const override { return params_.eta(k); }

  const Vec& u() const { return u_; }

 private:
  Operator a_, b_;
  double gamma_;
  Vec u0_, u_, x_;
  ParamSeq params_;
  std::size_t k_ = 0;
};

// Three-line splitting anchored Popov step; one G_gamma and one J_{gamma B}
// per iteration (B(y_k) recovered from the resolvent identity, not evaluated).
class SplitPopovSolver : public Stepper {
 public:
  SplitPopovSolver(ResidualMap rm, Vec x0, ParamSeq params, double lipschitz);

  void step() override;
  const Vec& x() const override { return x_; }
  std::size_t iter() const override { return k_; }
  double residual_norm() const override;
  std::optional<double> lyapunov() const override;
  std::optional<double> aux() const override;
  double eta_at(std::size_t k) const override { return params_.eta(k); }
  long long gres_evals() const override { return rm_.evals(); }

  const Vec& y_prev() const { return y_prev_; }

 private:
  ResidualMap rm_;
  Vec u0_, x_, y_prev_, b_y_prev_, g_y_prev_;
  ParamSeq params_;
  double lipschitz_;
  std::size_t k_ = 0;
};

// Resolvent-only rewrite of the splitting anchored Popov scheme; produces the
// same x_k sequence with one J_{gamma A} and one J_{gamma B} per iteration.
class SplitPopovDRSolver : public Stepper {
 public:
  SplitPopovDRSolver(Operator a, Operator b, double gamma, Vec x0, ParamSeq params,
                     std::optional<Vec> u0 = std::nullopt);

  void step() override;
  const Vec& x() const override { return x_; }
  std::size_t iter() const override { return k_; }
  double residual_norm() const override;
  double eta_at(std::size_t k) const override { return params_.eta(k); }

 private:
  Operator a_, b_;
  double gamma_;
  Vec u0_, v_, v_prev_, y_prev_, w_prev_, x_;
  ParamSeq params_;
  std::size_t k_ = 0;
};

// Three-line accelerated Douglas-Rachford step.  The default form is
// resolvent-only; forward_form evaluates G_gamma through B instead (the
// conceptual scheme), producing identical iterates when B is single-valued.
class AccelDRSolver : public Stepper {
 public:
  AccelDRSolver(Operator a, Operator b, double gamma, Vec x0, ParamSeq params,
                std::optional<Vec> u0 = std::nullopt, bool forward_form = false);

  void step() override;
  const Vec& x() const override { return x_; }
  std::size_t iter() const override { return k_; }
  double residual_norm() const override;
  std::optional<double> lyapunov() const override;
  double eta_at(std::size_t k) const override { return params_.eta(k); }

  const Vec& u() const { return u_; }
  const Vec& u0() const { return u0_; }

 private:
  Operator a_, b_;
  double gamma_;
  Vec u0_, u_, x_;
  ParamSeq params_;
  bool forward_form_;
  std::size_t k_ = 0;
};

class VanillaDRSolver : public Stepper {
 public:
  VanillaDRSolver(Operator a, Operator b, double gamma, Vec x0, std::optional<Vec> u0 = std::nullopt);

  void step() override;
  const Vec& x() const override { return x_; }
  std::size_t iter() const override { return k_; }
  double residual_norm() const override;
  double eta_at(std::size_t) const override { return gamma_; }

  const Vec& u() const { return u_; }

 private:
  Operator a_, b_;
  double gamma_;
  Vec u_, x_;
  std::size_t k_ = 0;
};

// ---- uniform run interface ----

struct ProblemInstance;

struct SolverParams {
  double gamma = 0.0;           // 0: problem default
  std::optional<double> eta0;   // default: largest theorem-compliant value
  double theta = 1.0;           // anchored Popov M = 2L^2(1+theta)
  bool experimental_eta0 = false;
  std::optional<double> const_eta;  // vanilla EG/Popov stepsize; default 0.2/L
};

struct RunConfig {
  std::size_t max_iters = 1000;
  double tol = 1e-10;
  bool lyapunov = true;
  bool bound = true;  // record theorem-bound RHS when a solution is known
  bool store_iterates = false;
};

// Resolved schedule + constants for a (scheme, problem, params) triple.
struct ResolvedParams {
  std::shared_ptr<StepSchedule> schedule;  // null for vanilla schemes
  double gamma = 1.0;
  double eta0 = 0.0;
  double big_m = 0.0;  // M of the schedule recurrence (Popov kinds)
  double big_n = 0.0;  // N = (1+gamma L)^2/gamma^2 (split Popov)
  double const_eta = 0.0;
  double lipschitz = 0.0;
};

ResolvedParams resolve_params(Scheme s, const ProblemInstance& p, const SolverParams& sp);
std::unique_ptr<Stepper> make_stepper(Scheme s, const ProblemInstance& p, const ResolvedParams& rp);

// Iterates until residual <= tol or max_iters; always records the k = 0 row.
// A NonFiniteIterate aborts with the partial trace and a diagnostic message.
IterationTrace run(Scheme s, const ProblemInstance& p, const RunConfig& cfg, const SolverParams& sp = {});

}  // namespace mosk
