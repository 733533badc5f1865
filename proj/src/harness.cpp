#include "mosk/harness.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <future>
#include <sstream>

#include <nlohmann/json.hpp>

#include "mosk/applications.hpp"
#include "mosk/problems.hpp"
#include "mosk/solvers.hpp"

namespace mosk {

using nlohmann::json;

RateFit fit_rate(const IterationTrace& trace, long k_min, long k_max, double floor) {
  if (trace.rows.empty()) fail(ErrorCode::WindowError, "empty trace");
  const long last = trace.rows.back().k;
  if (k_min < 1 || k_max < k_min || k_max > last)
    fail(ErrorCode::WindowError, "rate window [" + std::to_string(k_min) + ", " +
                                     std::to_string(k_max) + "] not inside trace (last k = " +
                                     std::to_string(last) + ")");
  std::vector<double> xs, ys;
  long used_max = k_min - 1;
  for (long k = k_min; k <= k_max; ++k) {
    const double r = trace.rows[static_cast<std::size_t>(k)].residual;
    if (r <= floor) break;  // truncate at the first sub-tolerance residual
    xs.push_back(std::log10(static_cast<double>(k)));
    ys.push_back(std::log10(r));
    used_max = k;
  }
  if (xs.empty())
    fail(ErrorCode::NonPositiveResidual, "no positive residuals in the rate window");
  if (xs.size() < 2)
    fail(ErrorCode::WindowError, "rate window has fewer than two usable points");

  const double n = static_cast<double>(xs.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sx += xs[i];
    sy += ys[i];
    sxx += xs[i] * xs[i];
    sxy += xs[i] * ys[i];
    syy += ys[i] * ys[i];
  }
  const double denom = n * sxx - sx * sx;
  RateFit fit;
  fit.slope = (n * sxy - sx * sy) / denom;
  fit.intercept = (sy - fit.slope * sx) / n;
  const double ss_tot = syy - sy * sy / n;
  double ss_res = 0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double e = ys[i] - (fit.slope * xs[i] + fit.intercept);
    ss_res += e * e;
  }
  fit.r_squared = ss_tot > 0 ? 1.0 - ss_res / ss_tot : 1.0;
  fit.k_min = k_min;
  fit.k_max = used_max;
  return fit;
}

BoundReport check_bound(const IterationTrace& trace, const std::string& theorem_id) {
  BoundReport rep;
  rep.theorem_id = theorem_id;
  const double slack = 1e-9;
  auto get = [&](const char* name) -> double {
    auto it = trace.constants.find(name);
    if (it == trace.constants.end())
      fail(ErrorCode::MissingSolution, std::string("trace header lacks constant '") + name + "'");
    return it->second;
  };

  const bool popov_like = trace.scheme == "anchored_popov" || trace.scheme == "anchored_popov_reflected";

  for (const auto& row : trace.rows) {
    std::optional<double> rhs;
    double lhs = row.residual * row.residual;
    if (theorem_id == "scheme") {
      rhs = row.bound_rhs;
      // the anchored-Popov theorem bounds the combined quantity
      if (popov_like && row.aux) lhs += 2.0 * get("L") * get("L") * *row.aux;
    } else if (theorem_id == "envelope90") {
      const double l = get("L");
      const double d2 = get("x0_dist_sq");
      rhs = 90.0 * l * l * d2 /
            (static_cast<double>(row.k + 1) * static_cast<double>(row.k + 2));
      if (row.aux) lhs += 2.0 * l * l * *row.aux;
    } else if (theorem_id == "split_popov_line2") {
      if (!row.aux) continue;
      const double l = get("L"), g = get("gamma"), n = get("N");
      const double eta_star = get("eta_star"), eta0 = get("eta0"), d2 = get("x0_dist_sq");
      const double cstar = n * (eta0 * eta_star * g * g + 1.0) / (g * g * eta_star);
      const double den =
          (2.0 * (g * l * l + n * eta_star) * static_cast<double>(row.k + 2) - g) *
          static_cast<double>(row.k + 1);
      lhs = *row.aux;
      rhs = 4.0 * cstar * d2 / den;
    } else {
      fail(ErrorCode::Config, "unknown theorem id '" + theorem_id + "'");
    }
    if (!rhs) continue;
    ++rep.checked;
    if (lhs > *rhs * (1.0 + slack)) {
      ++rep.violations;
      const double rel = lhs / *rhs - 1.0;
      if (rel > rep.max_rel_violation) {
        rep.max_rel_violation = rel;
        rep.worst_k = row.k;
      }
    }
  }
  if (rep.checked == 0)
    fail(ErrorCode::MissingSolution, "trace has no rows with the requested bound data");
  rep.passed = rep.violations == 0;
  return rep;
}

// ---------- configs ----------

json load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Io, "cannot open config '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    fail(ErrorCode::Config, "config parse error in '" + path + "': " + e.what());
  }
  return j;
}

ExperimentConfig parse_config(const json& j) {
  ExperimentConfig c;
  try {
    if (!j.contains("problem")) fail(ErrorCode::Config, "config needs a 'problem'");
    if (j.at("problem").is_string()) {
      c.problem_ref = j.at("problem").get<std::string>();
      if (!is_registered_problem(c.problem_ref))
        fail(ErrorCode::Config, "unknown problem '" + c.problem_ref + "'");
    } else if (!j.at("problem").is_object()) {
      fail(ErrorCode::Config, "'problem' must be a name or an object");
    }
    c.scheme = j.at("scheme").get<std::string>();
    if (j.contains("params")) {
      const auto& p = j.at("params");
      c.gamma = p.value("gamma", 0.0);
      if (p.contains("eta0") && !p.at("eta0").is_null()) c.eta0 = p.at("eta0").get<double>();
      c.theta = p.value("theta", 1.0);
      c.tau = p.value("tau", 0.0);
      c.sigma = p.value("sigma", 0.0);
    }
    if (j.contains("run")) {
      const auto& r = j.at("run");
      const long mi = r.value("max_iters", 1000L);
      if (mi < 0) fail(ErrorCode::Config, "max_iters must be >= 0");
      c.max_iters = static_cast<std::size_t>(mi);
      c.tol = r.value("tol", 1e-10);
      c.lyapunov = r.value("lyapunov", true);
      c.bound = r.value("bound", true);
      c.store_iterates = r.value("store_iterates", false);
    }
    c.experimental_eta0 = j.value("experimental_eta0", false);
    c.seed = j.value("seed", 0UL);
    c.output = j.value("output", "");
  } catch (const json::exception& e) {
    fail(ErrorCode::Config, std::string("config error: ") + e.what());
  }
  return c;
}

namespace {

std::string now_iso8601() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char buf[32];
  std::strftime(buf, sizeof(buf), "%FT%TZ", std::gmtime(&t));
  return buf;
}

json problem_json_of(const json& config) {
  const auto& p = config.at("problem");
  return p.is_string() ? registered_problem_json(p.get<std::string>()) : p;
}

}  // namespace

IterationTrace run_experiment(const json& config, const RunOverrides& ov, const std::string& out_dir) {
  ExperimentConfig c = parse_config(config);
  if (ov.max_iters) c.max_iters = static_cast<std::size_t>(*ov.max_iters);
  if (ov.tol) c.tol = *ov.tol;
  if (ov.store_iterates) c.store_iterates = *ov.store_iterates;
  if (ov.experimental_eta0) c.experimental_eta0 = *ov.experimental_eta0;
  if (ov.seed) c.seed = *ov.seed;

  json pj = problem_json_of(config);
  IterationTrace tr;
  try {
    const std::string pkind = pj.at("kind").get<std::string>();
    if (pkind == "equation" || pkind == "inclusion") {
      auto scheme = scheme_from_name(c.scheme);
      if (!scheme) fail(ErrorCode::Config, "unknown scheme '" + c.scheme + "'");
      ProblemInstance inst = problem_from_json(pj);
      RunConfig rc;
      rc.max_iters = c.max_iters;
      rc.tol = c.tol;
      rc.lyapunov = c.lyapunov;
      rc.bound = c.bound;
      rc.store_iterates = c.store_iterates;
      SolverParams sp;
      sp.gamma = c.gamma;
      sp.eta0 = c.eta0;
      sp.theta = c.theta;
      sp.experimental_eta0 = c.experimental_eta0;
      tr = run(*scheme, inst, rc, sp);
    } else if (pkind == "minimax_smooth" || pkind == "minimax_bilinear") {
      if (c.scheme != pkind)
        fail(ErrorCode::Config, "problem kind '" + pkind + "' requires scheme '" + pkind + "'");
      MinimaxProblem mp = minimax_from_json(pj);
      if (c.tau > 0.0) mp.tau = c.tau;
      if (c.sigma > 0.0) mp.sigma = c.sigma;
      MinimaxConfig mc;
      mc.max_iters = c.max_iters;
      mc.tol = c.tol;
      mc.lyapunov = c.lyapunov;
      mc.eta0 = c.eta0;
      mc.store_iterates = c.store_iterates;
      tr = pkind == "minimax_smooth" ? solve_minimax_smooth(mp, mc) : solve_minimax_bilinear(mp, mc);
    } else if (pkind == "admm") {
      if (c.scheme != "admm_accel" && c.scheme != "admm_vanilla")
        fail(ErrorCode::Config, "ADMM problems take scheme 'admm_accel' or 'admm_vanilla'");
      AdmmProblem ap = admm_from_json(pj);
      if (c.gamma > 0.0) ap.gamma = c.gamma;
      AdmmConfig ac;
      ac.max_iters = c.max_iters;
      ac.tol = c.tol;
      ac.accelerated = c.scheme == "admm_accel";
      ac.eta0 = c.eta0;
      ac.store_iterates = c.store_iterates;
      tr = solve_admm(ap, ac);
    } else {
      fail(ErrorCode::Config, "unknown problem kind '" + pkind + "'");
    }
  } catch (const json::exception& e) {
    fail(ErrorCode::Config, std::string("malformed problem description: ") + e.what());
  }

  // echo the effective configuration (overrides applied) so the trace is
  // reproducible from its header alone
  json echo = config;
  echo["problem"] = pj;
  echo["scheme"] = c.scheme;
  echo["run"] = {{"max_iters", c.max_iters}, {"tol", c.tol},        {"lyapunov", c.lyapunov},
                 {"bound", c.bound},         {"store_iterates", c.store_iterates}};
  echo["experimental_eta0"] = c.experimental_eta0;
  echo["seed"] = c.seed;
  echo.erase("output");
  tr.config_echo = echo.dump();
  tr.timestamp = now_iso8601();
  tr.validate();

  if (!c.output.empty()) {
    std::filesystem::path out = c.output;
    if (!out_dir.empty() && out.is_relative()) out = std::filesystem::path(out_dir) / out;
    if (out.has_parent_path()) std::filesystem::create_directories(out.parent_path());
    tr.save(out.string());
  }
  if (!tr.diagnostic.empty())
    fail(ErrorCode::NonFiniteIterate, tr.diagnostic + " (partial trace flushed)");
  return tr;
}

// ---------- compare ----------

std::vector<CompareRow> compare(const std::vector<json>& configs, const RunOverrides& ov) {
  if (configs.size() < 2) fail(ErrorCode::Config, "compare needs at least two configs");
  std::vector<std::future<IterationTrace>> futs;
  futs.reserve(configs.size());
  for (const auto& cfg : configs)
    futs.push_back(std::async(std::launch::async, [cfg, ov] { return run_experiment(cfg, ov); }));

  std::vector<CompareRow> rows;
  for (std::size_t i = 0; i < configs.size(); ++i) {
    IterationTrace tr = futs[i].get();
    CompareRow row;
    row.scheme = tr.scheme;
    row.problem = tr.problem;
    row.iters = tr.rows.empty() ? 0 : tr.rows.back().k;
    row.final_residual = tr.rows.empty() ? 0.0 : tr.rows.back().residual;
    if (!tr.rows.empty()) {
      row.forward_evals = tr.rows.back().forward_evals;
      row.resolvent_evals = tr.rows.back().resolvent_a_evals + tr.rows.back().resolvent_b_evals;
      row.gres_evals = tr.rows.back().gres_evals;
    }
    const long last = row.iters;
    if (last >= 20) {
      try {
        RateFit fit = fit_rate(tr, std::max(2L, last / 10), last, 0.0);
        row.slope = fit.slope;
      } catch (const Error&) {
        row.slope = std::numeric_limits<double>::quiet_NaN();
      }
    } else {
      row.slope = std::numeric_limits<double>::quiet_NaN();
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string compare_csv(const std::vector<CompareRow>& rows) {
  std::ostringstream out;
  out << "scheme,problem,final_residual,slope,fwd_evals,resolvent_evals,gres_evals,iters\n";
  for (const auto& r : rows) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", r.final_residual);
    out << r.scheme << ',' << r.problem << ',' << buf << ',';
    std::snprintf(buf, sizeof(buf), "%.6g", r.slope);
    out << buf << ',' << r.forward_evals << ',' << r.resolvent_evals << ',' << r.gres_evals << ','
        << r.iters << "\n";
  }
  return out.str();
}

}  // namespace mosk
