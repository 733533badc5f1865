#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mosk/vec.hpp"

namespace mosk {

struct TraceRow {
  long k = 0;
  double residual = 0.0;
  std::optional<double> lyapunov;
  double eta = 0.0;
  std::optional<double> bound_rhs;
  long long forward_evals = 0;    // forward evaluations (G or B)
  long long resolvent_a_evals = 0;
  long long resolvent_b_evals = 0;
  long long gres_evals = 0;       // G_gamma evaluations through the residual map
  std::optional<double> aux;      // scheme-specific second tracked quantity
  std::vector<double> iterate;    // filled only with store_iterates
};

/// One experiment's persistence unit: a JSON header echoing the configuration
/// and resolved constants, plus one row per iteration.
struct IterationTrace {
  // header fields
  std::string scheme;
  std::string problem;
  std::string config_echo;              // compact JSON of the effective config
  std::map<std::string, double> constants;  // resolved M/N/eta0/eta_lb/eta_star/L/gamma/...
  std::string timestamp;
  bool store_iterates = false;
  std::string diagnostic;               // non-empty when the run aborted early

  std::vector<TraceRow> rows;

  void validate() const;  // strict k ordering, nondecreasing eval counts

  std::string to_csv() const;
  static IterationTrace from_csv(const std::string& text);

  void save(const std::string& path) const;
  static IterationTrace load(const std::string& path);
};

}  // namespace mosk
