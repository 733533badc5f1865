#include "mosk/schedules.hpp"

#include <cmath>

#include "mosk/errors.hpp"

namespace mosk {

const char* schedule_kind_name(ScheduleKind k) {
  switch (k) {
    case ScheduleKind::PopovEG: return "popov_eg";
    case ScheduleKind::SplitPopov: return "split_popov";
    case ScheduleKind::AccelDR: return "accel_dr";
  }
  return "?";
}

double next_eta_popov(double eta_k, std::size_t k, double m) {
  const double me2 = m * eta_k * eta_k;
  if (!(me2 < 1.0))
    fail(ErrorCode::ScheduleDomain, "eta recurrence left its domain: M*eta^2 >= 1");
  const double bk = anchor_beta(k);
  const double bk1 = anchor_beta(k + 1);
  return bk1 * (1.0 - bk * bk - me2) / (bk * (1.0 - bk) * (1.0 - me2)) * eta_k;
}

double next_eta_dr(double eta_k, std::size_t k, double gamma) {
  if (!(eta_k < 2.0 * gamma))
    fail(ErrorCode::ScheduleDomain, "eta recurrence left its domain: eta >= 2*gamma");
  const double bk = anchor_beta(k);
  const double bk1 = anchor_beta(k + 1);
  return bk1 * (2.0 * gamma * (1.0 - bk * bk) - eta_k) * eta_k / (bk * (1.0 - bk) * (2.0 * gamma - eta_k));
}

std::optional<double> eta_lower_bound(ScheduleKind kind, double eta0, double m_or_gamma) {
  if (kind == ScheduleKind::AccelDR) {
    const double gamma = m_or_gamma;
    const double ehat0 = eta0 / (2.0 * gamma);
    if (!(ehat0 > 0.0 && ehat0 < 0.5)) return std::nullopt;
    // bound on the scaled limit etahat_*; the etahat0 factor keeps it below
    // the nonincreasing sequence's starting value
    return ehat0 * (1.0 - 2.0 * ehat0) / (1.0 - ehat0);
  }
  const double m = m_or_gamma;
  if (!(eta0 > 0.0) || !(m * eta0 * eta0 < 0.5)) return std::nullopt;  // needs eta0 < 1/sqrt(2M)
  return eta0 * (1.0 - 2.0 * m * eta0 * eta0) / (1.0 - m * eta0 * eta0);
}

namespace {

double split_popov_n(const ScheduleConstants& c) {
  const double t = 1.0 + c.gamma * c.L;
  return t * t / (c.gamma * c.gamma);
}

}  // namespace

double default_eta0(ScheduleKind kind, const ScheduleConstants& c) {
  switch (kind) {
    case ScheduleKind::PopovEG: {
      // anchored Popov: 1/(2L sqrt(3)) when M = 4L^2, i.e. 1/sqrt(3M) in general
      const double m = c.m > 0.0 ? c.m : 2.0 * c.L * c.L * (1.0 + c.theta);
      return 1.0 / std::sqrt(3.0 * m);
    }
    case ScheduleKind::SplitPopov: {
      const double n = split_popov_n(c);
      const double ebar = 1.0 / (2.0 * (4.0 * c.gamma * c.L * c.L +
                                        std::sqrt(16.0 * c.gamma * c.gamma * c.L * c.L * c.L * c.L + 3.0 * n)));
      return std::min(ebar, 1.0 / (2.0 * std::sqrt(3.0 * n)));
    }
    case ScheduleKind::AccelDR:
      return 0.5 * c.gamma;
  }
  return 0.0;
}

Eta0Report validate_eta0(ScheduleKind kind, double eta0, const ScheduleConstants& c) {
  Eta0Report rep;
  rep.cap = default_eta0(kind, c);
  switch (kind) {
    case ScheduleKind::PopovEG:
      rep.ok = eta0 > 0.0 && eta0 <= rep.cap;
      rep.detail = rep.ok ? "eta0 within 1/sqrt(3M)" : "eta0 outside (0, 1/sqrt(3M)]";
      break;
    case ScheduleKind::SplitPopov:
      rep.ok = eta0 > 0.0 && eta0 <= rep.cap;
      rep.detail = rep.ok ? "eta0 within min(eta0_bar, 1/(2 sqrt(3N)))"
                          : "eta0 outside (0, min(eta0_bar, 1/(2 sqrt(3N)))]";
      break;
    case ScheduleKind::AccelDR:
      rep.cap = c.gamma;
      rep.ok = eta0 > 0.0 && eta0 < c.gamma;
      rep.detail = rep.ok ? "eta0 inside (0, gamma)" : "eta0 outside (0, gamma)";
      break;
  }
  return rep;
}

StepSchedule::StepSchedule(ScheduleKind kind, double m_or_gamma, double eta0)
    : kind_(kind), m_or_gamma_(m_or_gamma), eta0_(eta0) {
  if (!(eta0 >= 0.0)) fail(ErrorCode::ScheduleDomain, "eta0 must be nonnegative");
  if (!(m_or_gamma > 0.0)) fail(ErrorCode::ScheduleDomain, "schedule constant must be positive");
  etas_.push_back(eta0);
}

double StepSchedule::eta(std::size_t k) const {
  {
    std::lock_guard<std::mutex> lock(mutex_);
    if (k < etas_.size()) return etas_[k];
  }
  extend(k);
  std::lock_guard<std::mutex> lock(mutex_);
  return etas_[k];
}

void StepSchedule::extend(std::size_t k) const {
  std::lock_guard<std::mutex> lock(mutex_);
  while (etas_.size() <= k) {
    const std::size_t i = etas_.size() - 1;
    const double e = etas_.back();
    if (e == 0.0) {  // zero is a fixed point of both recurrences
      etas_.push_back(0.0);
      continue;
    }
    etas_.push_back(kind_ == ScheduleKind::AccelDR ? next_eta_dr(e, i, m_or_gamma_)
                                                   : next_eta_popov(e, i, m_or_gamma_));
  }
}

double StepSchedule::limit(std::size_t iters) const {
  if (iters == 1000000) {
    std::lock_guard<std::mutex> lock(mutex_);
    if (limit_) return *limit_;
  }
  double e = eta0_;
  if (e == 0.0) return 0.0;
  for (std::size_t k = 0; k < iters; ++k)
    e = kind_ == ScheduleKind::AccelDR ? next_eta_dr(e, k, m_or_gamma_) : next_eta_popov(e, k, m_or_gamma_);
  if (iters == 1000000) {
    std::lock_guard<std::mutex> lock(mutex_);
    limit_ = e;
  }
  return e;
}

}  // namespace mosk
