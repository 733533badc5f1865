#include "mosk/applications.hpp"

#include <cmath>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "mosk/problems.hpp"

namespace mosk {

using nlohmann::json;

namespace {

json vec_to_json(const Vec& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

Vec vec_from_json(const json& j) {
  Vec v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i) v(i) = j.at(i).get<double>();
  return v;
}

json mat_to_json(const Mat& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(row);
  }
  return rows;
}

Mat mat_from_json(const json& j) {
  const auto rows = j.size();
  const auto cols = rows ? j.at(0).size() : 0;
  Mat m(rows, cols);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t c = 0; c < cols; ++c) m(i, c) = j.at(i).at(c).get<double>();
  return m;
}

Vec stack(const Vec& a, const Vec& b) {
  Vec out(a.size() + b.size());
  out << a, b;
  return out;
}

}  // namespace

// ---------- prox vocabulary ----------

Vec ProxFn::prox(double t, const Vec& u) const {
  if (kind == "zero") return u;
  if (kind == "l1") {
    Vec y(u.size());
    const double thr = t * lambda;
    for (Eigen::Index i = 0; i < u.size(); ++i) {
      double a = std::abs(u(i)) - thr;
      y(i) = a > 0.0 ? (u(i) > 0.0 ? a : -a) : 0.0;
    }
    return y;
  }
  if (kind == "box") return u.cwiseMax(lo).cwiseMin(hi);
  fail(ErrorCode::Config, "unknown prox kind '" + kind + "'");
}

json ProxFn::to_json() const {
  json j = {{"kind", kind}};
  if (kind == "l1") j["lambda"] = lambda;
  if (kind == "box") {
    j["lo"] = vec_to_json(lo);
    j["hi"] = vec_to_json(hi);
  }
  return j;
}

ProxFn ProxFn::from_json(const json& j) {
  ProxFn f;
  f.kind = j.at("kind").get<std::string>();
  if (f.kind == "l1") f.lambda = j.at("lambda").get<double>();
  if (f.kind == "box") {
    f.lo = vec_from_json(j.at("lo"));
    f.hi = vec_from_json(j.at("hi"));
  }
  return f;
}

// ---------- smooth minimax ----------

Operator MinimaxProblem::stacked_operator() const {
  const int p = dim_z(), n = dim_w();
  Mat block(p + n, p + n);
  block.topLeftCorner(p, p) = a;
  block.topRightCorner(p, n) = k.transpose();
  block.bottomLeftCorner(n, p) = -k;
  block.bottomRightCorner(n, n) = d;
  return make_linear_operator(block);
}

IterationTrace solve_minimax_smooth(const MinimaxProblem& p, const MinimaxConfig& cfg) {
  ProblemInstance inst;
  inst.id = p.id.empty() ? "minimax_smooth" : p.id;
  inst.kind = ProblemKind::MonotoneEquation;
  inst.dim = p.dim_z() + p.dim_w();
  inst.g = p.stacked_operator();
  inst.lipschitz = p.L_lip;
  inst.x0 = stack(p.z0, p.w0);
  if (p.saddle) {
    inst.known_solution = *p.saddle;
    inst.certification = "analytic";
  }
  RunConfig rc;
  rc.max_iters = cfg.max_iters;
  rc.tol = cfg.tol;
  rc.lyapunov = cfg.lyapunov;
  rc.store_iterates = cfg.store_iterates;
  SolverParams sp;
  sp.eta0 = cfg.eta0;
  IterationTrace tr = run(Scheme::AnchoredPopov, inst, rc, sp);
  tr.scheme = "minimax_smooth";
  return tr;
}

// ---------- bilinear minimax in the H metric ----------

HMetric make_h_metric(const Mat& k, double tau, double sigma) {
  const double knorm = spectral_norm(k);
  if (tau <= 0.0) tau = 0.99 / (knorm > 0.0 ? knorm : 1.0);
  if (sigma <= 0.0) sigma = 0.99 / (knorm > 0.0 ? knorm : 1.0);
  if (!(tau * sigma * knorm * knorm < 1.0))
    fail(ErrorCode::MetricNotPositiveDefinite,
         "tau*sigma*||K||^2 must be < 1 for the H metric to be positive definite");
  const int p = static_cast<int>(k.cols()), n = static_cast<int>(k.rows());
  HMetric m;
  m.tau = tau;
  m.sigma = sigma;
  m.k = k;
  m.h = Mat::Zero(p + n, p + n);
  m.h.topLeftCorner(p, p) = Mat::Identity(p, p) / tau;
  m.h.topRightCorner(p, n) = -k.transpose();
  m.h.bottomLeftCorner(n, p) = -k;
  m.h.bottomRightCorner(n, n) = Mat::Identity(n, n) / sigma;
  return m;
}

double HMetric::norm(const Vec& v) const { return std::sqrt(v.dot(h * v)); }
double HMetric::inner(const Vec& u, const Vec& v) const { return u.dot(h * v); }

Vec eval_gh(const MinimaxProblem& p, const HMetric& m, const Vec& x) {
  const int pz = p.dim_z();
  Vec z = x.head(pz), w = x.tail(p.dim_w());
  // (H+G)^{-1}(Hx) componentwise via the prox formula
  Vec s = p.f.prox(m.tau, z - m.tau * (p.k.transpose() * w));
  Vec r = p.g.prox(m.sigma, w + m.sigma * (2.0 * (p.k * s) - p.k * z));
  Vec out(x.size());
  out << z - s, w - r;
  return out;
}

IterationTrace solve_minimax_bilinear(const MinimaxProblem& p, const MinimaxConfig& cfg) {
  HMetric metric = make_h_metric(p.k, p.tau, p.sigma);
  const int dim = p.dim_z() + p.dim_w();
  MinimaxProblem prob = p;  // capture with resolved tau/sigma
  prob.tau = metric.tau;
  prob.sigma = metric.sigma;

  // G_H is monotone and 1-Lipschitz w.r.t. the H inner product.
  const double lips = 1.0;
  Operator gh("g_h", dim, [prob, metric](const Vec& x) -> Vec { return eval_gh(prob, metric, x); },
              nullptr, lips);

  const double big_m = 4.0 * lips * lips;
  const double eta0 = cfg.eta0 ? *cfg.eta0 : 1.0 / (2.0 * lips * std::sqrt(3.0));
  auto sched = std::make_shared<StepSchedule>(ScheduleKind::PopovEG, big_m, eta0);
  Vec x0 = stack(p.z0, p.w0);
  AnchoredPopovSolver solver(gh, x0, schedule_params(sched), lips);

  IterationTrace tr;
  tr.scheme = "minimax_bilinear";
  tr.problem = p.id.empty() ? "minimax_bilinear" : p.id;
  tr.constants["tau"] = metric.tau;
  tr.constants["sigma"] = metric.sigma;
  tr.constants["eta0"] = eta0;
  tr.constants["eta_star"] = sched->limit();
  tr.constants["L"] = lips;
  tr.store_iterates = cfg.store_iterates;

  double bound_scale = 0.0;
  if (p.saddle) {
    const Vec d = x0 - *p.saddle;
    const double d2h = d.dot(metric.h * d);
    const double g0h = [&] {
      Vec g0 = eval_gh(prob, metric, x0);
      return g0.dot(metric.h * g0);
    }();
    const double eta_star = sched->limit();
    bound_scale = (4.0 / eta_star) * (eta0 * g0h + d2h / eta_star);
    tr.constants["x0_dist_sq"] = d2h;
  }

  auto record = [&](std::size_t k) {
    TraceRow row;
    row.k = static_cast<long>(k);
    Vec g = eval_gh(prob, metric, solver.x());
    row.residual = metric.norm(g);
    row.aux = g.norm();  // Euclidean norm alongside the theorem-relevant H norm
    row.eta = sched->eta(k);
    if (cfg.lyapunov) {
      const double beta = anchor_beta(k);
      const double b = static_cast<double>(k + 1);
      const double a = b * sched->eta(k) / (2.0 * beta);
      row.lyapunov = a * metric.inner(g, g) + b * metric.inner(g, solver.x() - x0) +
                     a * lips * lips * metric.inner(solver.x() - solver.y_prev(),
                                                    solver.x() - solver.y_prev());
    }
    if (bound_scale > 0.0)
      row.bound_rhs = bound_scale / (static_cast<double>(k + 1) * static_cast<double>(k + 2));
    if (cfg.store_iterates) {
      const Vec& x = solver.x();
      row.iterate.assign(x.data(), x.data() + x.size());
    }
    const double res = row.residual;
    tr.rows.push_back(std::move(row));
    return res;
  };

  try {
    double res = record(0);
    for (std::size_t k = 0; k < cfg.max_iters && res > cfg.tol; ++k) {
      solver.step();
      res = record(k + 1);
    }
  } catch (const Error& e) {
    if (e.code() != ErrorCode::NonFiniteIterate) throw;
    tr.diagnostic = e.what();
  }
  return tr;
}

// ---------- ADMM ----------

Vec solve_subproblem(const SubproblemFn& fn, const Mat& m, const Vec& x, const Vec& c, double gamma) {
  if (fn.kind == "quadratic") {
    Mat sys = fn.s + gamma * m.transpose() * m;
    Vec rhs = -fn.q + m.transpose() * x - gamma * m.transpose() * c;
    Eigen::PartialPivLU<Mat> lu(sys);
    return lu.solve(rhs);
  }
  if (fn.kind == "l1") {
    // requires M'M diagonal so the prox stays coordinatewise
    Mat mtm = m.transpose() * m;
    Mat off = mtm - Mat(mtm.diagonal().asDiagonal());
    if (off.cwiseAbs().maxCoeff() > 1e-12)
      fail(ErrorCode::SubproblemFailure, "l1 subproblem needs M'M diagonal");
    Vec d = mtm.diagonal();
    if (d.minCoeff() <= 0.0) fail(ErrorCode::SubproblemFailure, "l1 subproblem needs M'M > 0");
    Vec lin = m.transpose() * x - gamma * (m.transpose() * c);
    Vec y(d.size());
    for (Eigen::Index i = 0; i < d.size(); ++i) {
      const double center = lin(i) / (gamma * d(i));
      const double thr = fn.lambda / (gamma * d(i));
      double a = std::abs(center) - thr;
      y(i) = a > 0.0 ? (center > 0.0 ? a : -a) : 0.0;
    }
    return y;
  }
  fail(ErrorCode::SubproblemFailure, "unknown subproblem kind '" + fn.kind + "'");
}

namespace {

void validate_admm(const AdmmProblem& p) {
  if (p.p.rows() != p.q.rows() || p.p.rows() != p.r.size())
    fail(ErrorCode::DimensionMismatch, "ADMM: P, Q, r row dimensions disagree");
  if (p.x0.size() != p.r.size() || p.w0.size() != p.q.cols())
    fail(ErrorCode::DimensionMismatch, "ADMM: x0 must match r, w0 must match Q columns");
  if (!(p.gamma > 0.0)) fail(ErrorCode::NonPositiveGamma, "ADMM penalty must be positive");
}

}  // namespace

Operator admm_dual_a(const AdmmProblem& p) {
  AdmmProblem prob = p;
  return Operator(
      "admm_dual_a", static_cast<int>(p.r.size()), nullptr,
      [prob](double gamma, const Vec& xi) -> Vec {
        Vec z = solve_subproblem(prob.f, prob.p, Vec::Zero(xi.size()), -prob.r - xi / gamma, gamma);
        return xi - gamma * (prob.p * z - prob.r);
      },
      std::nullopt);
}

Operator admm_dual_b(const AdmmProblem& p) {
  AdmmProblem prob = p;
  Operator::ForwardFn fwd;
  if (p.g.kind == "quadratic") {
    Eigen::FullPivLU<Mat> lu(p.g.s);
    if (lu.isInvertible()) {
      Mat sinv = lu.inverse();
      fwd = [prob, sinv](const Vec& x) -> Vec {
        return prob.q * (sinv * (prob.q.transpose() * x - prob.g.q));
      };
    }
  }
  return Operator(
      "admm_dual_b", static_cast<int>(p.r.size()), fwd,
      [prob](double gamma, const Vec& xi) -> Vec {
        Vec w = solve_subproblem(prob.g, prob.q, Vec::Zero(xi.size()), -xi / gamma, gamma);
        return xi - gamma * (prob.q * w);
      },
      std::nullopt);
}

IterationTrace solve_admm(const AdmmProblem& p, const AdmmConfig& cfg) {
  validate_admm(p);
  const double gamma = p.gamma;
  const double eta0 = cfg.eta0 ? *cfg.eta0 : 0.5 * gamma;
  std::shared_ptr<StepSchedule> sched;
  if (cfg.accelerated) sched = std::make_shared<StepSchedule>(ScheduleKind::AccelDR, gamma, eta0);

  // Prefactored subproblem solvers (quadratic case) keep long runs cheap.
  auto make_solver = [gamma](const SubproblemFn& fn, const Mat& m) {
    std::function<Vec(const Vec&, const Vec&)> solve;  // (x, c) -> argmin
    if (fn.kind == "quadratic") {
      Mat sys = fn.s + gamma * m.transpose() * m;
      auto lu = std::make_shared<Eigen::PartialPivLU<Mat>>(sys);
      Mat mt = m.transpose();
      Vec q = fn.q;
      solve = [lu, mt, q, gamma](const Vec& x, const Vec& c) -> Vec {
        return lu->solve(-q + mt * x - gamma * (mt * c));
      };
    } else {
      SubproblemFn f = fn;
      Mat mm = m;
      solve = [f, mm, gamma](const Vec& x, const Vec& c) -> Vec {
        return solve_subproblem(f, mm, x, c, gamma);
      };
    }
    return solve;
  };
  auto solve_f = make_solver(p.f, p.p);
  auto solve_g = make_solver(p.g, p.q);
  Operator dual_a = admm_dual_a(p);

  Vec x = p.x0, w = p.w0;
  const Vec u0 = p.x0 + gamma * (p.q * p.w0);

  IterationTrace tr;
  tr.scheme = cfg.accelerated ? "admm_accel" : "admm_vanilla";
  tr.problem = p.id.empty() ? "admm" : p.id;
  tr.constants["gamma"] = gamma;
  if (sched) {
    tr.constants["eta0"] = eta0;
    tr.constants["eta_star"] = sched->limit();
  }
  // the guaranteed rate is on the dual residual; the primal column is empirical
  tr.constants["primal_feasibility_empirical"] = 1.0;

  try {
    for (std::size_t k = 0; k < cfg.max_iters; ++k) {
      const double beta = cfg.accelerated ? anchor_beta(k) : 0.0;
      const double eta = cfg.accelerated ? sched->eta(k) : gamma;
      Vec z1 = solve_f(x, p.q * w - p.r);
      Vec pz_r = p.p * z1 - p.r;
      Vec xt = beta * u0 + (1.0 - beta) * x - (eta - gamma) * pz_r +
               ((1.0 - beta) * gamma - eta) * (p.q * w);
      Vec w1 = solve_g(xt, pz_r);
      Vec xn = xt - gamma * (pz_r + p.q * w1);
      require_finite(xn, "ADMM iterate");

      TraceRow row;
      row.k = static_cast<long>(k);
      row.residual = (p.p * z1 + p.q * w1 - p.r).norm();  // primal infeasibility
      row.eta = eta;
      if (cfg.dual_residual) {
        // dual forward-backward residual; gamma B(x_{k+1}) = gamma Q w_{k+1}
        Vec gx = (xn - dual_a.resolvent_uncounted(gamma, xn - gamma * (p.q * w1))) / gamma;
        row.aux = gx.norm();
      }
      x = std::move(xn);
      w = std::move(w1);
      if (cfg.store_iterates) row.iterate.assign(x.data(), x.data() + x.size());
      tr.rows.push_back(std::move(row));
      if (tr.rows.back().residual <= cfg.tol) break;
    }
  } catch (const Error& e) {
    if (e.code() != ErrorCode::NonFiniteIterate) throw;
    tr.diagnostic = e.what();
  }
  return tr;
}

// ---------- JSON ----------

MinimaxProblem minimax_from_json(const json& j) {
  MinimaxProblem p;
  p.id = j.value("id", "minimax");
  const std::string kind = j.at("kind").get<std::string>();
  p.k = mat_from_json(j.at("K"));
  const int pz = static_cast<int>(p.k.cols()), n = static_cast<int>(p.k.rows());
  if (kind == "minimax_smooth") {
    p.bilinear = false;
    p.a = j.contains("A") ? mat_from_json(j.at("A")) : Mat(Mat::Zero(pz, pz));
    p.d = j.contains("D") ? mat_from_json(j.at("D")) : Mat(Mat::Zero(n, n));
    Mat block(pz + n, pz + n);
    block.topLeftCorner(pz, pz) = p.a;
    block.topRightCorner(pz, n) = p.k.transpose();
    block.bottomLeftCorner(n, pz) = -p.k;
    block.bottomRightCorner(n, n) = p.d;
    p.L_lip = j.contains("L") ? j.at("L").get<double>() : spectral_norm(block);
  } else if (kind == "minimax_bilinear") {
    p.bilinear = true;
    p.a = Mat::Zero(pz, pz);
    p.d = Mat::Zero(n, n);
    p.f = ProxFn::from_json(j.at("f"));
    p.g = ProxFn::from_json(j.at("g"));
    p.tau = j.value("tau", 0.0);
    p.sigma = j.value("sigma", 0.0);
    p.L_lip = spectral_norm(p.k);
  } else {
    fail(ErrorCode::Config, "unknown minimax kind '" + kind + "'");
  }
  p.z0 = vec_from_json(j.at("z0"));
  p.w0 = vec_from_json(j.at("w0"));
  if (j.contains("saddle")) p.saddle = vec_from_json(j.at("saddle"));
  return p;
}

json minimax_to_json(const MinimaxProblem& p) {
  json j;
  j["id"] = p.id;
  j["kind"] = p.bilinear ? "minimax_bilinear" : "minimax_smooth";
  j["K"] = mat_to_json(p.k);
  if (!p.bilinear) {
    j["A"] = mat_to_json(p.a);
    j["D"] = mat_to_json(p.d);
  } else {
    j["f"] = p.f.to_json();
    j["g"] = p.g.to_json();
    if (p.tau > 0.0) j["tau"] = p.tau;
    if (p.sigma > 0.0) j["sigma"] = p.sigma;
  }
  j["z0"] = vec_to_json(p.z0);
  j["w0"] = vec_to_json(p.w0);
  if (p.saddle) j["saddle"] = vec_to_json(*p.saddle);
  return j;
}

AdmmProblem admm_from_json(const json& j) {
  AdmmProblem p;
  p.id = j.value("id", "admm");
  p.p = mat_from_json(j.at("P"));
  p.q = mat_from_json(j.at("Q"));
  p.r = vec_from_json(j.at("r"));
  p.f = SubproblemFn::from_json(j.at("f"));
  p.g = SubproblemFn::from_json(j.at("g"));
  p.gamma = j.value("gamma", 1.0);
  p.x0 = j.contains("x0") ? vec_from_json(j.at("x0")) : Vec(Vec::Zero(p.r.size()));
  p.w0 = j.contains("w0") ? vec_from_json(j.at("w0")) : Vec(Vec::Zero(p.q.cols()));
  if (j.contains("kkt")) p.kkt_solution = vec_from_json(j.at("kkt"));
  validate_admm(p);
  return p;
}

json admm_to_json(const AdmmProblem& p) {
  json j;
  j["id"] = p.id;
  j["kind"] = "admm";
  j["P"] = mat_to_json(p.p);
  j["Q"] = mat_to_json(p.q);
  j["r"] = vec_to_json(p.r);
  j["f"] = p.f.to_json();
  j["g"] = p.g.to_json();
  j["gamma"] = p.gamma;
  j["x0"] = vec_to_json(p.x0);
  j["w0"] = vec_to_json(p.w0);
  if (p.kkt_solution) j["kkt"] = vec_to_json(*p.kkt_solution);
  return j;
}

json SubproblemFn::to_json() const {
  json j = {{"kind", kind}};
  if (kind == "quadratic") {
    j["S"] = mat_to_json(s);
    j["q"] = vec_to_json(q);
  } else if (kind == "l1") {
    j["lambda"] = lambda;
  }
  return j;
}

SubproblemFn SubproblemFn::from_json(const json& j) {
  SubproblemFn f;
  f.kind = j.at("kind").get<std::string>();
  if (f.kind == "quadratic") {
    f.s = mat_from_json(j.at("S"));
    f.q = vec_from_json(j.at("q"));
  } else if (f.kind == "l1") {
    f.lambda = j.at("lambda").get<double>();
  } else {
    fail(ErrorCode::Config, "unknown subproblem kind '" + f.kind + "'");
  }
  return f;
}

}  // namespace mosk
