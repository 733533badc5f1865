#include "mosk.h"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <string>

#include <nlohmann/json.hpp>

#include "mosk/errors.hpp"
#include "mosk/harness.hpp"
#include "mosk/problems.hpp"
#include "mosk/trace.hpp"

struct mosk_trace {
  mosk::IterationTrace tr;
};

namespace {

thread_local std::string g_last_error = "";

mosk_status status_of(const mosk::Error& e) {
  using mosk::ErrorCode;
  switch (e.code()) {
    case ErrorCode::Config: return MOSK_ERR_CONFIG;
    case ErrorCode::Io: return MOSK_ERR_IO;
    case ErrorCode::NonFiniteIterate:
    case ErrorCode::SubproblemFailure: return MOSK_ERR_NUMERIC;
    default: return MOSK_ERR_DOMAIN;
  }
}

template <typename Fn>
mosk_status guarded(Fn&& fn) {
  try {
    fn();
    return MOSK_OK;
  } catch (const mosk::Error& e) {
    g_last_error = e.what();
    return status_of(e);
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return MOSK_ERR_NUMERIC;
  }
}

mosk::RunOverrides overrides_of(const mosk_run_options* opts) {
  mosk::RunOverrides ov;
  if (!opts) return ov;
  if (opts->max_iters >= 0) ov.max_iters = opts->max_iters;
  if (opts->tol >= 0.0) ov.tol = opts->tol;
  if (opts->store_iterates >= 0) ov.store_iterates = opts->store_iterates != 0;
  if (opts->experimental_eta0 >= 0) ov.experimental_eta0 = opts->experimental_eta0 != 0;
  if (opts->seed >= 0) ov.seed = static_cast<unsigned long>(opts->seed);
  return ov;
}

mosk_status run_json(const nlohmann::json& cfg, const char* out_dir, const mosk_run_options* opts,
                     mosk_trace** out_trace) {
  if (!out_trace) {
    g_last_error = "out_trace must not be NULL";
    return MOSK_ERR_INVALID_ARG;
  }
  *out_trace = nullptr;
  return guarded([&] {
    auto tr = mosk::run_experiment(cfg, overrides_of(opts), out_dir ? out_dir : "");
    *out_trace = new mosk_trace{std::move(tr)};
  });
}

}  // namespace

extern "C" {

void mosk_run_options_init(mosk_run_options* opts) {
  if (!opts) return;
  opts->max_iters = -1;
  opts->tol = -1.0;
  opts->store_iterates = -1;
  opts->experimental_eta0 = -1;
  opts->seed = -1;
}

mosk_status mosk_run_config_file(const char* config_path, const char* out_dir,
                                 const mosk_run_options* opts, mosk_trace** out_trace) {
  if (!config_path) {
    g_last_error = "config_path must not be NULL";
    return MOSK_ERR_INVALID_ARG;
  }
  nlohmann::json cfg;
  mosk_status st = guarded([&] { cfg = mosk::load_config_file(config_path); });
  if (st != MOSK_OK) return st;
  return run_json(cfg, out_dir, opts, out_trace);
}

mosk_status mosk_run_config_string(const char* config_json, const char* out_dir,
                                   const mosk_run_options* opts, mosk_trace** out_trace) {
  if (!config_json) {
    g_last_error = "config_json must not be NULL";
    return MOSK_ERR_INVALID_ARG;
  }
  nlohmann::json cfg = nlohmann::json::parse(config_json, nullptr, false);
  if (cfg.is_discarded()) {
    g_last_error = "config string is not valid JSON";
    return MOSK_ERR_CONFIG;
  }
  return run_json(cfg, out_dir, opts, out_trace);
}

mosk_status mosk_trace_open(const char* path, mosk_trace** out_trace) {
  if (!path || !out_trace) {
    g_last_error = "path and out_trace must not be NULL";
    return MOSK_ERR_INVALID_ARG;
  }
  *out_trace = nullptr;
  return guarded([&] { *out_trace = new mosk_trace{mosk::IterationTrace::load(path)}; });
}

mosk_status mosk_trace_write(const mosk_trace* trace, const char* path) {
  if (!trace || !path) {
    g_last_error = "trace and path must not be NULL";
    return MOSK_ERR_INVALID_ARG;
  }
  return guarded([&] { trace->tr.save(path); });
}

void mosk_trace_release(mosk_trace* trace) { delete trace; }

long mosk_trace_num_rows(const mosk_trace* trace) {
  return trace ? static_cast<long>(trace->tr.rows.size()) : 0;
}

mosk_status mosk_trace_row(const mosk_trace* trace, long index, long* k, double* residual,
                           double* lyapunov, double* eta, double* bound_rhs) {
  if (!trace || index < 0 || index >= static_cast<long>(trace->tr.rows.size())) {
    g_last_error = "row index out of range";
    return MOSK_ERR_INVALID_ARG;
  }
  const auto& r = trace->tr.rows[static_cast<std::size_t>(index)];
  const double nan = std::nan("");
  if (k) *k = r.k;
  if (residual) *residual = r.residual;
  if (lyapunov) *lyapunov = r.lyapunov.value_or(nan);
  if (eta) *eta = r.eta;
  if (bound_rhs) *bound_rhs = r.bound_rhs.value_or(nan);
  return MOSK_OK;
}

mosk_status mosk_trace_constant(const mosk_trace* trace, const char* name, double* value) {
  if (!trace || !name || !value) {
    g_last_error = "trace, name and value must not be NULL";
    return MOSK_ERR_INVALID_ARG;
  }
  auto it = trace->tr.constants.find(name);
  if (it == trace->tr.constants.end()) {
    g_last_error = std::string("no constant '") + name + "' in trace header";
    return MOSK_ERR_INVALID_ARG;
  }
  *value = it->second;
  return MOSK_OK;
}

mosk_status mosk_fit_rate(const mosk_trace* trace, long k_min, long k_max, double floor,
                          mosk_rate_fit* out) {
  if (!trace || !out) {
    g_last_error = "trace and out must not be NULL";
    return MOSK_ERR_INVALID_ARG;
  }
  return guarded([&] {
    mosk::RateFit fit = mosk::fit_rate(trace->tr, k_min, k_max, floor);
    out->slope = fit.slope;
    out->intercept = fit.intercept;
    out->r_squared = fit.r_squared;
    out->k_min = fit.k_min;
    out->k_max = fit.k_max;
  });
}

mosk_status mosk_check_bound(const mosk_trace* trace, const char* theorem_id,
                             mosk_bound_report* out) {
  if (!trace || !theorem_id || !out) {
    g_last_error = "trace, theorem_id and out must not be NULL";
    return MOSK_ERR_INVALID_ARG;
  }
  return guarded([&] {
    mosk::BoundReport rep = mosk::check_bound(trace->tr, theorem_id);
    out->passed = rep.passed ? 1 : 0;
    out->checked = rep.checked;
    out->violations = rep.violations;
    out->worst_k = rep.worst_k;
    out->max_rel_violation = rep.max_rel_violation;
  });
}

mosk_status mosk_compare(const char* const* config_paths, size_t n_configs,
                         const mosk_run_options* opts, const char* out_csv_path) {
  if (!config_paths || !out_csv_path) {
    g_last_error = "config_paths and out_csv_path must not be NULL";
    return MOSK_ERR_INVALID_ARG;
  }
  return guarded([&] {
    std::vector<nlohmann::json> cfgs;
    cfgs.reserve(n_configs);
    for (size_t i = 0; i < n_configs; ++i) cfgs.push_back(mosk::load_config_file(config_paths[i]));
    auto rows = mosk::compare(cfgs, overrides_of(opts));
    std::string csv = mosk::compare_csv(rows);
    FILE* f = std::fopen(out_csv_path, "wb");
    if (!f) mosk::fail(mosk::ErrorCode::Io, std::string("cannot open '") + out_csv_path + "'");
    std::fwrite(csv.data(), 1, csv.size(), f);
    std::fclose(f);
  });
}

size_t mosk_list_problems(char* buffer, size_t size) {
  std::string all;
  for (const auto& name : mosk::list_problems()) {
    all += name;
    all += '\n';
  }
  const size_t needed = all.size() + 1;
  if (buffer && size > 0) {
    const size_t n = std::min(size - 1, all.size());
    std::memcpy(buffer, all.data(), n);
    buffer[n] = '\0';
  }
  return needed;
}

const char* mosk_last_error(void) { return g_last_error.c_str(); }

const char* mosk_version(void) { return "0.1.0"; }

}  // extern "C"
