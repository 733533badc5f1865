// mosk command-line driver.  Talks to the library exclusively through the
// C API in mosk.h.

#include <cstdio>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mosk.h"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitCheckFailed = 1;
constexpr int kExitConfigError = 2;

struct CommonOpts {
  std::string config;
  std::string out_dir;
  long seed = -1;
  long max_iters = -1;
  double tol = -1.0;
  bool store_iterates = false;
  bool experimental_eta0 = false;
};

void add_common(CLI::App* cmd, CommonOpts& o, bool config_required = true) {
  auto* c = cmd->add_option("--config", o.config, "experiment config (JSON)");
  if (config_required) c->required();
  cmd->add_option("--out", o.out_dir, "output directory for traces/tables");
  cmd->add_option("--seed", o.seed, "seed echoed into the trace header");
  cmd->add_option("--max-iters", o.max_iters, "override the config iteration budget");
  cmd->add_option("--tol", o.tol, "override the config stopping tolerance");
  cmd->add_flag("--store-iterates", o.store_iterates, "persist iterates in the trace");
  cmd->add_flag("--experimental-eta0", o.experimental_eta0,
                "allow eta0 outside the guaranteed range");
}

mosk_run_options options_of(const CommonOpts& o) {
  mosk_run_options opts;
  mosk_run_options_init(&opts);
  opts.max_iters = o.max_iters;
  opts.tol = o.tol;
  if (o.store_iterates) opts.store_iterates = 1;
  if (o.experimental_eta0) opts.experimental_eta0 = 1;
  opts.seed = o.seed;
  return opts;
}

int report_error(mosk_status st) {
  std::fprintf(stderr, "error: %s\n", mosk_last_error());
  return st == MOSK_ERR_NUMERIC ? kExitCheckFailed : kExitConfigError;
}

int run_one(const CommonOpts& o, mosk_trace** out) {
  mosk_run_options opts = options_of(o);
  mosk_status st = mosk_run_config_file(o.config.c_str(), o.out_dir.empty() ? nullptr : o.out_dir.c_str(),
                                        &opts, out);
  if (st != MOSK_OK) return report_error(st);
  return kExitOk;
}

int open_or_run(const CommonOpts& o, const std::string& trace_path, mosk_trace** out) {
  if (!trace_path.empty()) {
    mosk_status st = mosk_trace_open(trace_path.c_str(), out);
    if (st != MOSK_OK) return report_error(st);
    return kExitOk;
  }
  if (o.config.empty()) {
    std::fprintf(stderr, "error: pass --config or --trace\n");
    return kExitConfigError;
  }
  return run_one(o, out);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mosk — monotone-operator splitting experiment harness"};
  app.require_subcommand(1);

  // run
  CommonOpts run_o;
  auto* cmd_run = app.add_subcommand("run", "run one experiment and persist its trace");
  add_common(cmd_run, run_o);

  // rates
  CommonOpts rates_o;
  std::string rates_trace;
  long kmin = 100, kmax = 10000;
  double floor = 0.0, threshold = -0.9;
  bool report_only = false;
  auto* cmd_rates = app.add_subcommand("rates", "fit the log-log residual slope");
  add_common(cmd_rates, rates_o, false);
  cmd_rates->add_option("--trace", rates_trace, "existing trace file (skips running)");
  cmd_rates->add_option("--kmin", kmin, "window lower end (default 100)");
  cmd_rates->add_option("--kmax", kmax, "window upper end (default 10000)");
  cmd_rates->add_option("--floor", floor, "truncate window at this residual");
  cmd_rates->add_option("--threshold", threshold, "pass when slope <= threshold (default -0.9)");
  cmd_rates->add_flag("--report-only", report_only, "never fail, just print the fit");

  // bounds
  CommonOpts bounds_o;
  std::string bounds_trace, theorem = "scheme";
  auto* cmd_bounds = app.add_subcommand("bounds", "check residual^2 against the theorem RHS");
  add_common(cmd_bounds, bounds_o, false);
  cmd_bounds->add_option("--trace", bounds_trace, "existing trace file (skips running)");
  cmd_bounds->add_option("--theorem", theorem, "scheme | envelope90 | split_popov_line2");

  // compare
  CommonOpts cmp_o;
  std::vector<std::string> cmp_configs;
  std::string cmp_out = "compare.csv";
  auto* cmd_cmp = app.add_subcommand("compare", "run several configs and tabulate");
  cmd_cmp->add_option("--config", cmp_configs, "config files (repeat; >= 2)")->required();
  cmd_cmp->add_option("--out", cmp_out, "output CSV path (default compare.csv)");
  cmd_cmp->add_option("--max-iters", cmp_o.max_iters, "override iteration budget");
  cmd_cmp->add_option("--tol", cmp_o.tol, "override stopping tolerance");
  cmd_cmp->add_flag("--experimental-eta0", cmp_o.experimental_eta0,
                    "allow eta0 outside the guaranteed range");

  // list-problems
  auto* cmd_list = app.add_subcommand("list-problems", "print the registered problem zoo");

  CLI11_PARSE(app, argc, argv);

  if (cmd_run->parsed()) {
    mosk_trace* tr = nullptr;
    int rc = run_one(run_o, &tr);
    if (rc != kExitOk) return rc;
    long rows = mosk_trace_num_rows(tr);
    long k = 0;
    double res = 0;
    mosk_trace_row(tr, rows - 1, &k, &res, nullptr, nullptr, nullptr);
    std::printf("rows=%ld final_k=%ld final_residual=%.6e\n", rows, k, res);
    mosk_trace_release(tr);
    return kExitOk;
  }

  if (cmd_rates->parsed()) {
    mosk_trace* tr = nullptr;
    int rc = open_or_run(rates_o, rates_trace, &tr);
    if (rc != kExitOk) return rc;
    long rows = mosk_trace_num_rows(tr);
    long last = 0;
    mosk_trace_row(tr, rows - 1, &last, nullptr, nullptr, nullptr, nullptr);
    if (kmax > last) kmax = last;
    mosk_rate_fit fit;
    mosk_status st = mosk_fit_rate(tr, kmin, kmax, floor, &fit);
    mosk_trace_release(tr);
    if (st != MOSK_OK) return report_error(st);
    bool pass = fit.slope <= threshold;
    std::printf("slope=%.6f intercept=%.6f r2=%.6f window=[%ld,%ld] %s\n", fit.slope, fit.intercept,
                fit.r_squared, fit.k_min, fit.k_max,
                report_only ? "(reported)" : (pass ? "PASS" : "FAIL"));
    if (report_only) return kExitOk;
    return pass ? kExitOk : kExitCheckFailed;
  }

  if (cmd_bounds->parsed()) {
    mosk_trace* tr = nullptr;
    int rc = open_or_run(bounds_o, bounds_trace, &tr);
    if (rc != kExitOk) return rc;
    mosk_bound_report rep;
    mosk_status st = mosk_check_bound(tr, theorem.c_str(), &rep);
    mosk_trace_release(tr);
    if (st != MOSK_OK) return report_error(st);
    std::printf("theorem=%s checked=%ld violations=%ld worst_k=%ld max_rel_violation=%.3e %s\n",
                theorem.c_str(), rep.checked, rep.violations, rep.worst_k, rep.max_rel_violation,
                rep.passed ? "PASS" : "FAIL");
    return rep.passed ? kExitOk : kExitCheckFailed;
  }

  if (cmd_cmp->parsed()) {
    std::vector<const char*> paths;
    paths.reserve(cmp_configs.size());
    for (const auto& p : cmp_configs) paths.push_back(p.c_str());
    mosk_run_options opts = options_of(cmp_o);
    mosk_status st = mosk_compare(paths.data(), paths.size(), &opts, cmp_out.c_str());
    if (st != MOSK_OK) return report_error(st);
    FILE* f = std::fopen(cmp_out.c_str(), "rb");
    if (f) {
      char buf[4096];
      size_t n;
      while ((n = std::fread(buf, 1, sizeof(buf), f)) > 0) std::fwrite(buf, 1, n, stdout);
      std::fclose(f);
    }
    return kExitOk;
  }

  if (cmd_list->parsed()) {
    size_t need = mosk_list_problems(nullptr, 0);
    std::string buf(need, '\0');
    mosk_list_problems(buf.data(), buf.size());
    std::fputs(buf.c_str(), stdout);
    return kExitOk;
  }

  return kExitConfigError;
}
