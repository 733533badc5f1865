#include "mosk/trace.hpp"

#include <cinttypes>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "mosk/errors.hpp"

namespace mosk {

using nlohmann::json;

namespace {

std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

void IterationTrace::validate() const {
  long prev_k = -1;
  long long fwd = -1, ra = -1, rb = -1, gr = -1;
  for (const auto& r : rows) {
    if (r.k != prev_k + 1) fail(ErrorCode::Io, "trace rows must be consecutive in k");
    if (r.forward_evals < fwd || r.resolvent_a_evals < ra || r.resolvent_b_evals < rb ||
        r.gres_evals < gr)
      fail(ErrorCode::Io, "trace eval counts must be nondecreasing");
    prev_k = r.k;
    fwd = r.forward_evals;
    ra = r.resolvent_a_evals;
    rb = r.resolvent_b_evals;
    gr = r.gres_evals;
  }
}

std::string IterationTrace::to_csv() const {
  json header;
  header["scheme"] = scheme;
  header["problem"] = problem;
  if (!config_echo.empty()) header["config"] = json::parse(config_echo);
  header["constants"] = constants;
  header["store_iterates"] = store_iterates;
  if (!diagnostic.empty()) header["diagnostic"] = diagnostic;
  if (!timestamp.empty()) header["timestamp"] = timestamp;

  std::ostringstream out;
  out << "# " << header.dump() << "\n";
  out << "k,residual,lyapunov,eta,bound_rhs,aux,fwd_evals,resA_evals,resB_evals,gres_evals";
  if (store_iterates && !rows.empty())
    for (std::size_t i = 0; i < rows.front().iterate.size(); ++i) out << ",x" << i;
  out << "\n";
  for (const auto& r : rows) {
    out << r.k << ',' << fmt_double(r.residual) << ',';
    if (r.lyapunov) out << fmt_double(*r.lyapunov);
    out << ',' << fmt_double(r.eta) << ',';
    if (r.bound_rhs) out << fmt_double(*r.bound_rhs);
    out << ',';
    if (r.aux) out << fmt_double(*r.aux);
    out << ',' << r.forward_evals << ',' << r.resolvent_a_evals << ',' << r.resolvent_b_evals << ','
        << r.gres_evals;
    if (store_iterates)
      for (double v : r.iterate) out << ',' << fmt_double(v);
    out << "\n";
  }
  return out.str();
}

IterationTrace IterationTrace::from_csv(const std::string& text) try {
  IterationTrace tr;
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line.size() < 2 || line[0] != '#')
    fail(ErrorCode::Io, "trace missing JSON header line");
  json header = json::parse(line.substr(1));
  tr.scheme = header.value("scheme", "");
  tr.problem = header.value("problem", "");
  if (header.contains("config")) tr.config_echo = header["config"].dump();
  if (header.contains("constants"))
    for (auto& [k, v] : header["constants"].items()) tr.constants[k] = v.get<double>();
  tr.store_iterates = header.value("store_iterates", false);
  tr.diagnostic = header.value("diagnostic", "");
  tr.timestamp = header.value("timestamp", "");

  if (!std::getline(in, line)) fail(ErrorCode::Io, "trace missing column header");
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    TraceRow r;
    std::istringstream ls(line);
    std::string cell;
    auto next = [&]() -> std::string {
      if (!std::getline(ls, cell, ',')) cell.clear();
      return cell;
    };
    r.k = std::stol(next());
    r.residual = std::stod(next());
    std::string ly = next();
    if (!ly.empty()) r.lyapunov = std::stod(ly);
    r.eta = std::stod(next());
    std::string br = next();
    if (!br.empty()) r.bound_rhs = std::stod(br);
    std::string ax = next();
    if (!ax.empty()) r.aux = std::stod(ax);
    r.forward_evals = std::stoll(next());
    r.resolvent_a_evals = std::stoll(next());
    r.resolvent_b_evals = std::stoll(next());
    r.gres_evals = std::stoll(next());
    if (tr.store_iterates) {
      std::string v;
      while (std::getline(ls, v, ',')) r.iterate.push_back(std::stod(v));
    }
    tr.rows.push_back(std::move(r));
  }
  tr.validate();
  return tr;
} catch (const Error&) {
  throw;
} catch (const std::exception& e) {
  fail(ErrorCode::Io, std::string("malformed trace: ") + e.what());
}

void IterationTrace::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::Io, "cannot open '" + path + "' for writing");
  out << to_csv();
  if (!out) fail(ErrorCode::Io, "short write to '" + path + "'");
}

IterationTrace IterationTrace::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::Io, "cannot open '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return from_csv(buf.str());
}

}  // namespace mosk
