#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

namespace mosk {

// Anchor coefficient beta_k = 1/(k+2), shared by every scheme.
inline double anchor_beta(std::size_t k) { return 1.0 / static_cast<double>(k + 2); }

enum class ScheduleKind {
  PopovEG,     // eta_{k+1} = b_{k+1}(1 - b_k^2 - M eta_k^2) eta_k / (b_k(1-b_k)(1 - M eta_k^2))
  SplitPopov,  // same recurrence with M = 4N; different eta0 admissibility cap
  AccelDR,     // eta_{k+1} = b_{k+1}(2 gamma (1 - b_k^2) - eta_k) eta_k / (b_k(1-b_k)(2 gamma - eta_k))
};

const char* schedule_kind_name(ScheduleKind k);

// One recurrence step.  Throws ScheduleDomain when the iterate leaves the
// admissible region (M eta^2 >= 1, resp. eta >= 2 gamma).
double next_eta_popov(double eta_k, std::size_t k, double m);
double next_eta_dr(double eta_k, std::size_t k, double gamma);

// Analytic lower bound on the limit.  PopovEG/SplitPopov: eta0(1-2M eta0^2)/(1-M eta0^2),
// valid for eta0 < 1/sqrt(2M).  AccelDR: returned in the scaled variable
// etahat = eta/(2 gamma): (1-2 etahat0)/(1-etahat0), valid for etahat0 < 1/2.
// nullopt means the bound gives no guarantee for this eta0.
std::optional<double> eta_lower_bound(ScheduleKind kind, double eta0, double m_or_gamma);

// Constants a schedule validation may need; fill the ones the kind reads.
struct ScheduleConstants {
  double L = 0.0;
  double gamma = 1.0;
  double theta = 1.0;
  // Recurrence constant M when the caller has already resolved it; 0 means
  // "derive the anchored-Popov value 2 L^2 (1 + theta)".
  double m = 0.0;
};

struct Eta0Report {
  bool ok = false;
  double cap = 0.0;   // largest eta0 with the full theorem guarantee
  std::string detail;
};

// Checks the theorem precondition for the guaranteed O(1/k) rate.  A report,
// not an exception: out-of-range eta0 is allowed in experimental mode.
Eta0Report validate_eta0(ScheduleKind kind, double eta0, const ScheduleConstants& c);

// Largest eta0 with full guarantees (the project default).
double default_eta0(ScheduleKind kind, const ScheduleConstants& c);

/// Memoized (beta_k, eta_k) sequence.  The prefix extends lazily under a lock;
/// reads of already-computed entries are plain vector reads, so a schedule can
/// be shared across runs once warmed (or each run owns its own copy).
class StepSchedule {
 public:
  StepSchedule(ScheduleKind kind, double m_or_gamma, double eta0);

  ScheduleKind kind() const { return kind_; }
  double m_or_gamma() const { return m_or_gamma_; }
  double eta0() const { return eta0_; }

  double beta(std::size_t k) const { return anchor_beta(k); }
  double eta(std::size_t k) const;

  // eta after `iters` recurrence steps, computed without memoizing; the
  // default 1e6 is converged to well past every tolerance used here.
  double limit(std::size_t iters = 1000000) const;

  std::optional<double> lower_bound() const { return eta_lower_bound(kind_, eta0_, m_or_gamma_); }

 private:
  void extend(std::size_t k) const;

  ScheduleKind kind_;
  double m_or_gamma_;
  double eta0_;
  mutable std::vector<double> etas_;
  mutable std::mutex mutex_;
  mutable std::optional<double> limit_;
};

}  // namespace mosk
