#pragma once

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "mosk/trace.hpp"

namespace mosk {

struct RateFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
  long k_min = 0, k_max = 0;  // window actually used (after truncation)
};

// Least-squares fit of log10(residual) against log10(k) over [k_min, k_max].
// The window is truncated at the first residual at or below `floor`.
RateFit fit_rate(const IterationTrace& trace, long k_min, long k_max, double floor = 0.0);

struct BoundReport {
  std::string theorem_id;
  bool passed = false;
  long checked = 0;
  long violations = 0;
  long worst_k = -1;
  double max_rel_violation = 0.0;
};

// Pointwise residual^2 <= bound RHS with 1e-9 relative slack.  theorem_id:
//   "scheme"      - the RHS column recorded in the trace
//   "envelope90"  - the closed-form 90 L^2 ||x0-x*||^2 / ((k+1)(k+2)) envelope
BoundReport check_bound(const IterationTrace& trace, const std::string& theorem_id);

// ---- experiment configs ----

struct ExperimentConfig {
  std::string problem_ref;  // registered name, or "" when the problem is inline
  std::string scheme;
  double gamma = 0.0;
  std::optional<double> eta0;
  double theta = 1.0;
  double tau = 0.0, sigma = 0.0;
  std::size_t max_iters = 1000;
  double tol = 1e-10;
  bool lyapunov = true;
  bool bound = true;
  bool store_iterates = false;
  bool experimental_eta0 = false;
  unsigned long seed = 0;
  std::string output;
};

// Parses and validates a config JSON; throws Error(Config) on anything off.
ExperimentConfig parse_config(const nlohmann::json& j);
nlohmann::json load_config_file(const std::string& path);

struct RunOverrides {
  std::optional<long> max_iters;
  std::optional<double> tol;
  std::optional<bool> store_iterates;
  std::optional<bool> experimental_eta0;
  std::optional<unsigned long> seed;
};

// Executes one experiment.  Deterministic given config + seed.  The trace is
// persisted to `output` (resolved against out_dir) when a path is configured.
IterationTrace run_experiment(const nlohmann::json& config, const RunOverrides& ov = {},
                              const std::string& out_dir = "");

struct CompareRow {
  std::string scheme;
  std::string problem;
  double final_residual = 0.0;
  double slope = 0.0;
  long long forward_evals = 0;
  long long resolvent_evals = 0;
  long long gres_evals = 0;
  long iters = 0;
};

// Runs >= 2 configs (share-nothing, in parallel) and tabulates the results.
std::vector<CompareRow> compare(const std::vector<nlohmann::json>& configs, const RunOverrides& ov = {});
std::string compare_csv(const std::vector<CompareRow>& rows);

}  // namespace mosk
