#include "mosk/solvers.hpp"

#include <cmath>
#include <limits>
#include <utility>

#include <nlohmann/json.hpp>

#include "mosk/problems.hpp"

namespace mosk {

const char* scheme_name(Scheme s) {
  switch (s) {
    case Scheme::AnchoredPopov: return "anchored_popov";
    case Scheme::AnchoredPopovReflected: return "anchored_popov_reflected";
    case Scheme::SplitAEG: return "split_aeg";
    case Scheme::SplitAEGResolventOnly: return "split_aeg_resolvent";
    case Scheme::SplitPopov: return "split_popov";
    case Scheme::SplitPopovDR: return "split_popov_dr";
    case Scheme::AccelDR: return "accel_dr";
    case Scheme::AccelDRForward: return "accel_dr_forward";
    case Scheme::VanillaDR: return "vanilla_dr";
    case Scheme::VanillaEG: return "vanilla_eg";
    case Scheme::VanillaPopov: return "vanilla_popov";
  }
  return "?";
}

std::optional<Scheme> scheme_from_name(const std::string& name) {
  for (Scheme s : {Scheme::AnchoredPopov, Scheme::AnchoredPopovReflected, Scheme::SplitAEG,
                   Scheme::SplitAEGResolventOnly, Scheme::SplitPopov, Scheme::SplitPopovDR,
                   Scheme::AccelDR, Scheme::AccelDRForward, Scheme::VanillaDR, Scheme::VanillaEG,
                   Scheme::VanillaPopov})
    if (name == scheme_name(s)) return s;
  return std::nullopt;
}

bool scheme_is_accelerated(Scheme s) {
  switch (s) {
    case Scheme::VanillaDR:
    case Scheme::VanillaEG:
    case Scheme::VanillaPopov: return false;
    default: return true;
  }
}

ParamSeq schedule_params(std::shared_ptr<StepSchedule> s) {
  return ParamSeq{[](std::size_t k) { return anchor_beta(k); },
                  [s](std::size_t k) { return s->eta(k); }};
}

ParamSeq constant_params(double beta, double eta) {
  return ParamSeq{[beta](std::size_t) { return beta; }, [eta](std::size_t) { return eta; }};
}

namespace {

// Lyapunov coefficients with b_0 = 1: b_k = k+1, a_k = b_k eta_k / (2 beta_k).
struct LyapCoeff {
  double a, b;
};

std::optional<LyapCoeff> lyap_coeff(std::size_t k, const ParamSeq& p) {
  const double beta = p.beta(k);
  if (!(beta > 0.0)) return std::nullopt;  // anchor-free runs have no potential
  const double b = static_cast<double>(k + 1);
  return LyapCoeff{b * p.eta(k) / (2.0 * beta), b};
}

}  // namespace

// ---------- anchored Popov ----------

AnchoredPopovSolver::AnchoredPopovSolver(Operator g, Vec x0, ParamSeq params, double lipschitz,
                                         bool reflected_form)
    : g_(std::move(g)), x0_(std::move(x0)), x_(x0_), y_prev_(x0_), params_(std::move(params)),
      lipschitz_(lipschitz), reflected_(reflected_form) {
  require_finite(x0_, "anchored Popov x0");
  g_prev_ = g_.forward(x0_);  // G(y_{-1}) with y_{-1} := x0; setup cost, once
  x_prev_ = x0_;
}

void AnchoredPopovSolver::step() {
  const double beta = params_.beta(k_);
  const double eta = params_.eta(k_);
  Vec y;
  if (!reflected_ || k_ == 0) {
    y = beta * x0_ + (1.0 - beta) * x_ - eta * g_prev_;
  } else {
    // y_k from (x_k, x_{k-1}) only; algebraically the same point
    const double beta_p = params_.beta(k_ - 1);
    const double eta_p = params_.eta(k_ - 1);
    const double ratio = eta / eta_p;
    y = (beta - beta_p * ratio) * x0_ + (1.0 - beta + ratio) * x_ -
        (1.0 - beta_p) * ratio * x_prev_;
  }
  Vec gy = g_.forward(y);  // the scheme's one evaluation per iteration
  Vec xn = beta * x0_ + (1.0 - beta) * x_ - eta * gy;
  require_finite(xn, "anchored Popov iterate");
  x_prev_ = std::move(x_);
  x_ = std::move(xn);
  y_prev_ = std::move(y);
  g_prev_ = std::move(gy);
  ++k_;
}

double AnchoredPopovSolver::residual_norm() const { return g_.forward_uncounted(x_).norm(); }

std::optional<double> AnchoredPopovSolver::lyapunov() const {
  auto c = lyap_coeff(k_, params_);
  if (!c) return std::nullopt;
  Vec gx = g_.forward_uncounted(x_);
  const double ck = c->a;  // c_k := a_k
  return c->a * gx.squaredNorm() + c->b * gx.dot(x_ - x0_) +
         ck * lipschitz_ * lipschitz_ * (x_ - y_prev_).squaredNorm();
}

std::optional<double> AnchoredPopovSolver::aux() const { return (x_ - y_prev_).squaredNorm(); }

// ---------- vanilla EG / Popov ----------

VanillaEGSolver::VanillaEGSolver(Operator g, Vec x0, double eta)
    : g_(std::move(g)), x_(std::move(x0)), eta_(eta) {}

void VanillaEGSolver::step() {
  Vec y = x_ - eta_ * g_.forward(x_);
  Vec xn = x_ - eta_ * g_.forward(y);
  require_finite(xn, "EG iterate");
  x_ = std::move(xn);
  ++k_;
}

double VanillaEGSolver::residual_norm() const { return g_.forward_uncounted(x_).norm(); }

VanillaPopovSolver::VanillaPopovSolver(Operator g, Vec x0, double eta)
    : g_(std::move(g)), x_(std::move(x0)), eta_(eta) {
  g_prev_ = g_.forward(x_);  // G(y_{-1}), y_{-1} := x0
}

void VanillaPopovSolver::step() {
  Vec y = x_ - eta_ * g_prev_;
  Vec gy = g_.forward(y);
  Vec xn = x_ - eta_ * gy;
  require_finite(xn, "Popov iterate");
  x_ = std::move(xn);
  g_prev_ = std::move(gy);
  ++k_;
}

double VanillaPopovSolver::residual_norm() const { return g_.forward_uncounted(x_).norm(); }

// ---------- splitting anchored extra-gradient ----------

SplitAEGSolver::SplitAEGSolver(ResidualMap rm, Vec x0, ParamSeq params)
    : rm_(std::move(rm)), params_(std::move(params)) {
  require_finite(x0, "split AEG x0");
  u0_ = x0 + rm_.gamma() * rm_.opB().forward(x0);
  u_ = u0_;
  x_ = x0;
}

void SplitAEGSolver::step() {
  const double beta = params_.beta(k_);
  const double eta = params_.eta(k_);
  Vec gx = rm_.residual(x_);
  Vec v = u_ + beta * (u0_ - u_) - eta * gx;
  Vec y = rm_.opB().resolvent(rm_.gamma(), v);
  Vec gy = rm_.residual(y);
  Vec un = u_ + beta * (u0_ - u_) - eta * gy;
  Vec xn = rm_.opB().resolvent(rm_.gamma(), un);
  require_finite(xn, "split AEG iterate");
  u_ = std::move(un);
  x_ = std::move(xn);
  ++k_;
}

Vec SplitAEGSolver::residual_vec() const { return rm_.residual_no_forward_uncounted(x_, u_); }

double SplitAEGSolver::residual_norm() const { return residual_vec().norm(); }

std::optional<double> SplitAEGSolver::lyapunov() const {
  auto c = lyap_coeff(k_, params_);
  if (!c) return std::nullopt;
  Vec gx = residual_vec();
  return c->a * gx.squaredNorm() + c->b * gx.dot(u_ - u0_);  // u_k = x_k + gamma B(x_k)
}

SplitAEGResolventOnlySolver::SplitAEGResolventOnlySolver(Operator a, Operator b, double gamma, Vec x0,
                                                         ParamSeq params, std::optional<Vec> u0)
    : a_(std::move(a)), b_(std::move(b)), gamma_(gamma), params_(std::move(params)) {
  if (!(gamma_ > 0.0)) fail(ErrorCode::NonPositiveGamma, "split AEG needs gamma > 0");
  if (u0) {
    u0_ = std::move(*u0);
    x_ = b_.resolvent(gamma_, u0_);
  } else {
    u0_ = x0 + gamma_ * b_.forward(x0);
    x_ = std::move(x0);
  }
  u_ = u0_;
}

void SplitAEGResolventOnlySolver::step() {
  const double beta = params_.beta(k_);
  const double r = params_.eta(k_) / gamma_;
  Vec vhat = a_.resolvent(gamma_, 2.0 * x_ - u_);
  Vec v = u_ + beta * (u0_ - u_) - r * (x_ - vhat);
  Vec y = b_.resolvent(gamma_, v);
  Vec uhat = a_.resolvent(gamma_, 2.0 * y - v);
  Vec un = u_ + beta * (u0_ - u_) - r * (y - uhat);
  Vec xn = b_.resolvent(gamma_, un);
  require_finite(xn, "split AEG iterate");
  u_ = std::move(un);
  x_ = std::move(xn);
  ++k_;
}

double SplitAEGResolventOnlySolver::residual_norm() const {
  return (x_ - a_.resolvent_uncounted(gamma_, 2.0 * x_ - u_)).norm() / gamma_;
}

std::optional<double> SplitAEGResolventOnlySolver::lyapunov() const {
  auto c = lyap_coeff(k_, params_);
  if (!c) return std::nullopt;
  Vec gx = (x_ - a_.resolvent_uncounted(gamma_, 2.0 * x_ - u_)) / gamma_;
  return c->a * gx.squaredNorm() + c->b * gx.dot(u_ - u0_);
}

// ---------- splitting anchored Popov ----------

SplitPopovSolver::SplitPopovSolver(ResidualMap rm, Vec x0, ParamSeq params, double lipschitz)
    : rm_(std::move(rm)), params_(std::move(params)), lipschitz_(lipschitz) {
  require_finite(x0, "split Popov x0");
  // y_{-1} := x0, u0 := x0 + gamma B(x0); setup evaluations, once
  b_y_prev_ = rm_.opB().forward(x0);
  u0_ = x0 + rm_.gamma() * b_y_prev_;
  g_y_prev_ = rm_.residual_no_forward(x0, u0_);
  x_ = std::move(x0);
  y_prev_ = x_;
}

void SplitPopovSolver::step() {
  const double beta = params_.beta(k_);
  const double eta = params_.eta(k_);
  const double gamma = rm_.gamma();
  Vec v = x_ + beta * (u0_ - x_) - eta * g_y_prev_ + gamma * (1.0 - beta) * b_y_prev_;
  Vec y = rm_.opB().resolvent(gamma, v);     // the scheme's one J_{gamma B}
  Vec by = (v - y) / gamma;                  // gamma B(y) = v - y, no forward call
  Vec gy = rm_.residual_no_forward(y, v);    // the scheme's one G_gamma
  Vec xn = x_ + beta * (u0_ - x_) - eta * gy - gamma * by + gamma * (1.0 - beta) * b_y_prev_;
  require_finite(xn, "split Popov iterate");
  x_ = std::move(xn);
  y_prev_ = std::move(y);
  b_y_prev_ = std::move(by);
  g_y_prev_ = std::move(gy);
  ++k_;
}

double SplitPopovSolver::residual_norm() const { return rm_.residual_uncounted(x_).norm(); }

std::optional<double> SplitPopovSolver::lyapunov() const {
  auto c = lyap_coeff(k_, params_);
  if (!c) return std::nullopt;
  const double gamma = rm_.gamma();
  const double t = 1.0 + gamma * lipschitz_;
  const double n = t * t / (gamma * gamma);
  const double ck = (c->b / (2.0 * params_.beta(k_))) *
                    (gamma * lipschitz_ * lipschitz_ + n * params_.eta(k_));
  Vec gx = rm_.residual_uncounted(x_);
  return c->a * gx.squaredNorm() + c->b * gx.dot(x_ + gamma * b_y_prev_ - u0_) +
         ck * (x_ - y_prev_).squaredNorm();
}

std::optional<double> SplitPopovSolver::aux() const { return (x_ - y_prev_).squaredNorm(); }

// ---------- splitting anchored Popov, resolvent-only rewrite ----------

SplitPopovDRSolver::SplitPopovDRSolver(Operator a, Operator b, double gamma, Vec x0, ParamSeq params,
                                       std::optional<Vec> u0)
    : a_(std::move(a)), b_(std::move(b)), gamma_(gamma), params_(std::move(params)) {
  if (!(gamma_ > 0.0)) fail(ErrorCode::NonPositiveGamma, "split Popov DR form needs gamma > 0");
  if (u0) {
    u0_ = std::move(*u0);
    x_ = b_.resolvent(gamma_, u0_);
  } else {
    u0_ = x0 + gamma_ * b_.forward(x0);
    x_ = std::move(x0);
  }
  // v_{-1} = u0, y_{-1} = J_{gamma B}(u0) = x0, w_{-1} = gamma G_gamma(x0)
  y_prev_ = x_;
  w_prev_ = x_ - a_.resolvent(gamma_, 2.0 * x_ - u0_);
  v_prev_ = u0_;
  v_ = u0_ - (params_.eta(0) / gamma_) * w_prev_;
}

void SplitPopovDRSolver::step() {
  const double beta1 = params_.beta(k_ + 1);
  const double eta = params_.eta(k_);
  const double eta1 = params_.eta(k_ + 1);
  Vec y = b_.resolvent(gamma_, v_);
  Vec z = a_.resolvent(gamma_, 2.0 * y - v_);
  Vec w = y - z;
  Vec vn = beta1 * u0_ + (1.0 - beta1) * v_ -
           (eta1 * w + (1.0 - beta1) * eta * (w - w_prev_)) / gamma_;
  // shadow iterate x_{k+1} recovered from the driving sequence
  Vec xn = y - v_ + (vn - beta1 * u0_ + (eta1 / gamma_) * w) / (1.0 - beta1);
  require_finite(xn, "split Popov DR iterate");
  x_ = std::move(xn);
  v_prev_ = std::move(v_);
  v_ = std::move(vn);
  y_prev_ = std::move(y);
  w_prev_ = std::move(w);
  ++k_;
}

double SplitPopovDRSolver::residual_norm() const {
  if (b_.has_forward()) {
    Vec bx = b_.forward_uncounted(x_);
    return (x_ - a_.resolvent_uncounted(gamma_, x_ - gamma_ * bx)).norm() / gamma_;
  }
  // without forward B the shadow residual is not directly observable; report
  // the driving-sequence displacement instead
  return (x_ - y_prev_).norm() / gamma_;
}

// ---------- accelerated Douglas-Rachford ----------

AccelDRSolver::AccelDRSolver(Operator a, Operator b, double gamma, Vec x0, ParamSeq params,
                             std::optional<Vec> u0, bool forward_form)
    : a_(std::move(a)), b_(std::move(b)), gamma_(gamma), params_(std::move(params)),
      forward_form_(forward_form) {
  if (!(gamma_ > 0.0)) fail(ErrorCode::NonPositiveGamma, "accelerated DR needs gamma > 0");
  if (u0) {
    u0_ = std::move(*u0);
    x_ = b_.resolvent(gamma_, u0_);
  } else {
    u0_ = x0 + gamma_ * b_.forward(x0);
    x_ = std::move(x0);
  }
  u_ = u0_;
}

void AccelDRSolver::step() {
  const double beta = params_.beta(k_);
  const double eta = params_.eta(k_);
  Vec un;
  if (forward_form_) {
    Vec bx = b_.forward(x_);
    Vec gx = (x_ - a_.resolvent(gamma_, x_ - gamma_ * bx)) / gamma_;
    un = u_ + beta * (u0_ - u_) - eta * gx;
  } else {
    Vec v = a_.resolvent(gamma_, 2.0 * x_ - u_);
    un = beta * u0_ + (1.0 - beta) * u_ + (eta / gamma_) * (v - x_);
  }
  Vec xn = b_.resolvent(gamma_, un);
  require_finite(xn, "accelerated DR iterate");
  u_ = std::move(un);
  x_ = std::move(xn);
  ++k_;
}

double AccelDRSolver::residual_norm() const {
  return (x_ - a_.resolvent_uncounted(gamma_, 2.0 * x_ - u_)).norm() / gamma_;
}

std::optional<double> AccelDRSolver::lyapunov() const {
  auto c = lyap_coeff(k_, params_);
  if (!c) return std::nullopt;
  Vec gx = (x_ - a_.resolvent_uncounted(gamma_, 2.0 * x_ - u_)) / gamma_;
  return c->a * gx.squaredNorm() + c->b * gx.dot(u_ - u0_);
}

// ---------- vanilla Douglas-Rachford ----------

VanillaDRSolver::VanillaDRSolver(Operator a, Operator b, double gamma, Vec x0, std::optional<Vec> u0)
    : a_(std::move(a)), b_(std::move(b)), gamma_(gamma) {
  if (!(gamma_ > 0.0)) fail(ErrorCode::NonPositiveGamma, "DR needs gamma > 0");
  if (u0) {
    u_ = std::move(*u0);
    x_ = b_.resolvent(gamma_, u_);
  } else {
    u_ = x0 + gamma_ * b_.forward(x0);
    x_ = std::move(x0);
  }
}

void VanillaDRSolver::step() {
  Vec vhat = a_.resolvent(gamma_, 2.0 * x_ - u_);
  Vec un = u_ + vhat - x_;
  Vec xn = b_.resolvent(gamma_, un);
  require_finite(xn, "DR iterate");
  u_ = std::move(un);
  x_ = std::move(xn);
  ++k_;
}

double VanillaDRSolver::residual_norm() const {
  return (x_ - a_.resolvent_uncounted(gamma_, 2.0 * x_ - u_)).norm() / gamma_;
}

// ---------- uniform run interface ----------

namespace {

bool is_equation_scheme(Scheme s) {
  switch (s) {
    case Scheme::AnchoredPopov:
    case Scheme::AnchoredPopovReflected:
    case Scheme::VanillaEG:
    case Scheme::VanillaPopov: return true;
    default: return false;
  }
}

}  // namespace

ResolvedParams resolve_params(Scheme s, const ProblemInstance& p, const SolverParams& sp) {
  ResolvedParams rp;
  rp.gamma = sp.gamma > 0.0 ? sp.gamma : p.gamma_default;
  rp.lipschitz = p.lipschitz;

  if (is_equation_scheme(s)) {
    if (p.kind != ProblemKind::MonotoneEquation)
      fail(ErrorCode::Config, std::string(scheme_name(s)) + " needs a monotone-equation problem");
  } else {
    if (p.kind != ProblemKind::Inclusion)
      fail(ErrorCode::Config, std::string(scheme_name(s)) + " needs an inclusion problem");
  }

  ScheduleConstants sc;
  sc.L = p.lipschitz;
  sc.gamma = rp.gamma;
  sc.theta = sp.theta;

  auto finish = [&](ScheduleKind kind, double m_or_gamma) {
    rp.eta0 = sp.eta0 ? *sp.eta0 : default_eta0(kind, sc);
    Eta0Report rep = validate_eta0(kind, rp.eta0, sc);
    if (!rep.ok && !sp.experimental_eta0)
      fail(ErrorCode::Config, std::string("eta0 = ") + std::to_string(rp.eta0) +
                                  " outside the guaranteed range (cap " + std::to_string(rep.cap) +
                                  "); pass experimental_eta0 to run anyway");
    rp.schedule = std::make_shared<StepSchedule>(kind, m_or_gamma, rp.eta0);
  };

  const double t = 1.0 + rp.gamma * p.lipschitz;
  rp.big_n = t * t / (rp.gamma * rp.gamma);
  switch (s) {
    case Scheme::AnchoredPopov:
    case Scheme::AnchoredPopovReflected:
      rp.big_m = 2.0 * p.lipschitz * p.lipschitz * (1.0 + sp.theta);
      sc.m = rp.big_m;
      finish(ScheduleKind::PopovEG, rp.big_m);
      break;
    case Scheme::SplitAEG:
    case Scheme::SplitAEGResolventOnly:
      rp.big_m = rp.big_n;
      sc.m = rp.big_m;
      finish(ScheduleKind::PopovEG, rp.big_m);
      break;
    case Scheme::SplitPopov:
    case Scheme::SplitPopovDR:
      rp.big_m = 4.0 * rp.big_n;
      finish(ScheduleKind::SplitPopov, rp.big_m);
      break;
    case Scheme::AccelDR:
    case Scheme::AccelDRForward:
      finish(ScheduleKind::AccelDR, rp.gamma);
      break;
    case Scheme::VanillaDR:
      break;
    case Scheme::VanillaEG:
    case Scheme::VanillaPopov:
      rp.const_eta = sp.const_eta ? *sp.const_eta
                                  : (p.lipschitz > 0.0 ? 0.2 / p.lipschitz : 0.2);
      break;
  }
  return rp;
}

std::unique_ptr<Stepper> make_stepper(Scheme s, const ProblemInstance& p, const ResolvedParams& rp) {
  ParamSeq ps = rp.schedule ? schedule_params(rp.schedule) : ParamSeq{};
  switch (s) {
    case Scheme::AnchoredPopov:
      return std::make_unique<AnchoredPopovSolver>(p.g, p.x0, ps, p.lipschitz, false);
    case Scheme::AnchoredPopovReflected:
      return std::make_unique<AnchoredPopovSolver>(p.g, p.x0, ps, p.lipschitz, true);
    case Scheme::VanillaEG:
      return std::make_unique<VanillaEGSolver>(p.g, p.x0, rp.const_eta);
    case Scheme::VanillaPopov:
      return std::make_unique<VanillaPopovSolver>(p.g, p.x0, rp.const_eta);
    case Scheme::SplitAEG:
      return std::make_unique<SplitAEGSolver>(ResidualMap(p.a, p.b, rp.gamma), p.x0, ps);
    case Scheme::SplitAEGResolventOnly:
      return std::make_unique<SplitAEGResolventOnlySolver>(p.a, p.b, rp.gamma, p.x0, ps);
    case Scheme::SplitPopov:
      return std::make_unique<SplitPopovSolver>(ResidualMap(p.a, p.b, rp.gamma), p.x0, ps, p.lipschitz);
    case Scheme::SplitPopovDR:
      return std::make_unique<SplitPopovDRSolver>(p.a, p.b, rp.gamma, p.x0, ps);
    case Scheme::AccelDR:
      return std::make_unique<AccelDRSolver>(p.a, p.b, rp.gamma, p.x0, ps, std::nullopt, false);
    case Scheme::AccelDRForward:
      return std::make_unique<AccelDRSolver>(p.a, p.b, rp.gamma, p.x0, ps, std::nullopt, true);
    case Scheme::VanillaDR:
      return std::make_unique<VanillaDRSolver>(p.a, p.b, rp.gamma, p.x0);
  }
  fail(ErrorCode::Config, "unknown scheme");
}

namespace {

// Theorem right-hand sides, with eta_* the numerically converged schedule limit.
class BoundRhs {
 public:
  BoundRhs(Scheme s, const ProblemInstance& p, const ResolvedParams& rp) {
    if (!p.known_solution || !rp.schedule) return;
    present_ = scheme_is_accelerated(s);
    const double d2 = (p.x0 - *p.known_solution).squaredNorm();
    const double eta_star = rp.schedule->limit();
    const double eta0 = rp.eta0;
    const double gamma = rp.gamma;
    const double lip = p.lipschitz;
    switch (s) {
      case Scheme::AnchoredPopov:
      case Scheme::AnchoredPopovReflected: {
        const double g0 = p.g.forward_uncounted(p.x0).squaredNorm();
        scale_ = (4.0 / eta_star) * (eta0 * g0 + d2 / eta_star);
        break;
      }
      case Scheme::SplitAEG:
      case Scheme::SplitAEGResolventOnly: {
        const double m = rp.big_m;
        scale_ = 4.0 * m * (eta0 * eta_star + gamma * gamma) / (eta_star * eta_star) * d2;
        break;
      }
      case Scheme::SplitPopov:
      case Scheme::SplitPopovDR: {
        const double n = rp.big_n;
        const double cstar = n * (eta0 * eta_star * gamma * gamma + 1.0) / (gamma * gamma * eta_star);
        scale_ = 4.0 * cstar * d2 / eta_star;
        break;
      }
      case Scheme::AccelDR:
      case Scheme::AccelDRForward: {
        const double t = 1.0 + gamma * lip;
        scale_ = 4.0 * t * t * (eta0 * eta_star + gamma * gamma) /
                 (eta_star * eta_star * gamma * gamma) * d2;
        break;
      }
      default: break;
    }
  }

  std::optional<double> at(std::size_t k) const {
    if (!present_) return std::nullopt;
    return scale_ / (static_cast<double>(k + 1) * static_cast<double>(k + 2));
  }

 private:
  bool present_ = false;
  double scale_ = 0.0;
};

}  // namespace

IterationTrace run(Scheme s, const ProblemInstance& p, const RunConfig& cfg, const SolverParams& sp) {
  ResolvedParams rp = resolve_params(s, p, sp);
  // baselines so rows report this run's evaluations even on shared instances
  const long long base_fwd = (p.kind == ProblemKind::Inclusion ? p.b : p.g).counts().forward.load();
  const long long base_ra = p.kind == ProblemKind::Inclusion ? p.a.counts().resolvent.load() : 0;
  const long long base_rb = p.kind == ProblemKind::Inclusion ? p.b.counts().resolvent.load() : 0;
  auto stepper = make_stepper(s, p, rp);
  BoundRhs bound(s, p, rp);

  IterationTrace tr;
  tr.scheme = scheme_name(s);
  tr.problem = p.id;
  tr.store_iterates = cfg.store_iterates;
  tr.constants["gamma"] = rp.gamma;
  tr.constants["L"] = p.lipschitz;
  if (rp.schedule) {
    tr.constants["eta0"] = rp.eta0;
    tr.constants["eta_star"] = rp.schedule->limit();
    if (auto lb = rp.schedule->lower_bound()) tr.constants["eta_lower_bound"] = *lb;
    if (rp.big_m > 0.0) tr.constants["M"] = rp.big_m;
    if (rp.big_n > 0.0) tr.constants["N"] = rp.big_n;
  }
  if (p.known_solution) tr.constants["x0_dist_sq"] = (p.x0 - *p.known_solution).squaredNorm();

  auto record = [&](std::size_t k) {
    TraceRow row;
    row.k = static_cast<long>(k);
    row.residual = stepper->residual_norm();
    if (cfg.lyapunov) row.lyapunov = stepper->lyapunov();
    row.eta = rp.schedule ? rp.schedule->eta(k) : rp.const_eta;
    if (cfg.bound) row.bound_rhs = bound.at(k);
    row.aux = stepper->aux();
    row.gres_evals = stepper->gres_evals();
    if (p.kind == ProblemKind::Inclusion) {
      row.forward_evals = p.b.counts().forward.load() - base_fwd;
      row.resolvent_a_evals = p.a.counts().resolvent.load() - base_ra;
      row.resolvent_b_evals = p.b.counts().resolvent.load() - base_rb;
    } else {
      row.forward_evals = p.g.counts().forward.load() - base_fwd;
    }
    if (cfg.store_iterates) {
      const Vec& x = stepper->x();
      row.iterate.assign(x.data(), x.data() + x.size());
    }
    tr.rows.push_back(std::move(row));
    return tr.rows.back().residual;
  };

  // an infinite tolerance disables the residual stop entirely
  const double tol = std::isinf(cfg.tol) ? -std::numeric_limits<double>::infinity() : cfg.tol;
  try {
    double res = record(0);
    for (std::size_t k = 0; k < cfg.max_iters && res > tol; ++k) {
      stepper->step();
      res = record(k + 1);
    }
  } catch (const Error& e) {
    if (e.code() != ErrorCode::NonFiniteIterate) throw;
    tr.diagnostic = e.what();
  }
  return tr;
}

}  // namespace mosk
