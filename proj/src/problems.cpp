#include "mosk/problems.hpp"

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>

#include <Eigen/Eigenvalues>
#include <nlohmann/json.hpp>

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

double min_symmetric_eigenvalue(const Mat& m) {
  Mat sym = 0.5 * (m + m.transpose());
  Eigen::SelfAdjointEigenSolver<Mat> es(sym);
  return es.eigenvalues().minCoeff();
}

void require_monotone(const Mat& m, const char* where) {
  if (min_symmetric_eigenvalue(m) < -1e-10)
    fail(ErrorCode::NotMonotone, std::string(where) + ": symmetric part has a negative eigenvalue");
}

void certify(ProblemInstance& p) {
  if (!p.known_solution) return;
  const double r = p.residual_at(*p.known_solution, p.gamma_default);
  if (r > 1e-10)
    fail(ErrorCode::Config, "instance '" + p.id + "' failed self-certification: residual " +
                                std::to_string(r) + " at the declared solution");
}

}  // namespace

double ProblemInstance::residual_at(const Vec& x, double gamma) const {
  if (kind == ProblemKind::MonotoneEquation) return g.forward_uncounted(x).norm();
  if (kind == ProblemKind::Inclusion) {
    Vec bx = b.forward_uncounted(x);
    return (x - a.resolvent_uncounted(gamma, x - gamma * bx)).norm() / gamma;
  }
  fail(ErrorCode::Config, "residual_at supports equation and inclusion instances");
}

ProblemInstance make_rotation(int dim, double scale) {
  ProblemInstance p;
  p.id = "rotation" + std::to_string(dim);
  p.kind = ProblemKind::MonotoneEquation;
  p.dim = dim;
  p.g = make_rotation_operator(dim, scale);
  p.lipschitz = scale;
  p.known_solution = Vec::Zero(dim);
  p.certification = "analytic";
  p.x0 = Vec::Zero(dim);
  p.x0(0) = 1.0;
  certify(p);
  return p;
}

ProblemInstance make_affine_monotone(const Mat& m, const Vec& q) {
  if (m.rows() > kLinearSolveDimCap) fail(ErrorCode::Config, "affine instance above desk-scale cap");
  require_monotone(m, "make_affine_monotone");
  ProblemInstance p;
  p.id = "affine" + std::to_string(m.rows());
  p.kind = ProblemKind::MonotoneEquation;
  p.dim = static_cast<int>(m.rows());
  p.g = make_affine_operator(m, q);
  p.lipschitz = spectral_norm(m);
  Eigen::FullPivLU<Mat> lu(m);
  if (lu.isInvertible()) {
    p.known_solution = lu.solve(-q);
    p.certification = "linear-solve";
  }
  p.x0 = Vec::Zero(p.dim);
  certify(p);
  return p;
}

std::optional<Vec> solve_box_complementarity(const Vec& lo, const Vec& hi, const Mat& m, const Vec& q) {
  const int d = static_cast<int>(lo.size());
  if (d > kEnumDimCap) fail(ErrorCode::Config, "active-set enumeration capped at dim 6");
  const double tol = 1e-11;
  std::vector<int> st(d, 0);  // 0 free, 1 lower, 2 upper
  const long total = static_cast<long>(std::pow(3.0, d));
  for (long code = 0; code < total; ++code) {
    long c = code;
    for (int i = 0; i < d; ++i) {
      st[i] = static_cast<int>(c % 3);
      c /= 3;
    }
    Vec x(d);
    std::vector<int> free;
    for (int i = 0; i < d; ++i) {
      if (st[i] == 0) {
        free.push_back(i);
        x(i) = 0.0;
      } else {
        x(i) = st[i] == 1 ? lo(i) : hi(i);
      }
    }
    if (!free.empty()) {
      const int nf = static_cast<int>(free.size());
      Mat a(nf, nf);
      Vec rhs(nf);
      for (int r = 0; r < nf; ++r) {
        double fixed = q(free[r]);
        for (int i = 0; i < d; ++i)
          if (st[i] != 0) fixed += m(free[r], i) * x(i);
        rhs(r) = -fixed;
        for (int ccol = 0; ccol < nf; ++ccol) a(r, ccol) = m(free[r], free[ccol]);
      }
      Eigen::FullPivLU<Mat> lu(a);
      if (!lu.isInvertible()) continue;
      Vec xf = lu.solve(rhs);
      for (int r = 0; r < nf; ++r) x(free[r]) = xf(r);
    }
    Vec res = m * x + q;
    bool ok = true;
    for (int i = 0; i < d && ok; ++i) {
      switch (st[i]) {
        case 0: ok = x(i) >= lo(i) - tol && x(i) <= hi(i) + tol && std::abs(res(i)) <= tol; break;
        case 1: ok = res(i) >= -tol; break;
        case 2: ok = res(i) <= tol; break;
      }
    }
    if (ok) return x;
  }
  return std::nullopt;
}

std::optional<Vec> solve_l1_subgradient(double lambda, const Mat& m, const Vec& q) {
  const int d = static_cast<int>(q.size());
  if (d > kEnumDimCap) fail(ErrorCode::Config, "subgradient enumeration capped at dim 6");
  const double tol = 1e-11;
  std::vector<int> sg(d, 0);  // -1, 0, +1
  const long total = static_cast<long>(std::pow(3.0, d));
  for (long code = 0; code < total; ++code) {
    long c = code;
    for (int i = 0; i < d; ++i) {
      sg[i] = static_cast<int>(c % 3) - 1;
      c /= 3;
    }
    Vec x = Vec::Zero(d);
    std::vector<int> supp;
    for (int i = 0; i < d; ++i)
      if (sg[i] != 0) supp.push_back(i);
    if (!supp.empty()) {
      const int ns = static_cast<int>(supp.size());
      Mat a(ns, ns);
      Vec rhs(ns);
      for (int r = 0; r < ns; ++r) {
        rhs(r) = -q(supp[r]) - lambda * sg[supp[r]];
        for (int ccol = 0; ccol < ns; ++ccol) a(r, ccol) = m(supp[r], supp[ccol]);
      }
      Eigen::FullPivLU<Mat> lu(a);
      if (!lu.isInvertible()) continue;
      Vec xs = lu.solve(rhs);
      bool sign_ok = true;
      for (int r = 0; r < ns; ++r) {
        x(supp[r]) = xs(r);
        if (xs(r) * sg[supp[r]] < tol) sign_ok = false;  // strict sign match
      }
      if (!sign_ok) continue;
    }
    Vec res = m * x + q;
    bool ok = true;
    for (int i = 0; i < d && ok; ++i) {
      if (sg[i] == 0)
        ok = std::abs(res(i)) <= lambda + tol;
      else
        ok = std::abs(res(i) + lambda * sg[i]) <= 1e-9;
    }
    if (ok) return x;
  }
  return std::nullopt;
}

ProblemInstance make_box_inclusion(const Vec& lo, const Vec& hi, const Mat& m, const Vec& q,
                                   double gamma_default) {
  require_monotone(m, "make_box_inclusion");
  ProblemInstance p;
  p.id = "box" + std::to_string(lo.size());
  p.kind = ProblemKind::Inclusion;
  p.dim = static_cast<int>(lo.size());
  p.a = make_box_projection_operator(lo, hi);
  p.b = make_affine_operator(m, q);
  p.lipschitz = spectral_norm(m);
  p.gamma_default = gamma_default;
  if (p.dim <= kEnumDimCap) {
    if (auto x = solve_box_complementarity(lo, hi, m, q)) {
      p.known_solution = *x;
      p.certification = "active-set";
    }
  }
  p.x0 = 0.5 * (lo + hi);
  certify(p);
  return p;
}

ProblemInstance make_l1_quadratic(double lambda, const Mat& m, const Vec& q, double gamma_default) {
  require_monotone(m, "make_l1_quadratic");
  ProblemInstance p;
  p.id = "l1q" + std::to_string(q.size());
  p.kind = ProblemKind::Inclusion;
  p.dim = static_cast<int>(q.size());
  p.a = make_l1_prox_operator(p.dim, lambda);
  p.b = make_affine_operator(m, q);
  p.lipschitz = spectral_norm(m);
  p.gamma_default = gamma_default;
  if (p.dim <= kEnumDimCap) {
    if (auto x = solve_l1_subgradient(lambda, m, q)) {
      p.known_solution = *x;
      p.certification = "subgradient";
    }
  }
  p.x0 = Vec::Zero(p.dim);
  certify(p);
  return p;
}

// ---- JSON ----

ProblemInstance problem_from_json(const json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  ProblemInstance p;
  p.id = j.value("id", "inline");
  p.dim = j.at("dim").get<int>();
  if (kind == "equation") {
    p.kind = ProblemKind::MonotoneEquation;
    p.g = operator_from_json(j.at("G"));
    p.lipschitz = j.contains("L") ? j.at("L").get<double>() : p.g.lipschitz().value_or(0.0);
  } else if (kind == "inclusion") {
    p.kind = ProblemKind::Inclusion;
    p.a = operator_from_json(j.at("A"));
    p.b = operator_from_json(j.at("B"));
    p.lipschitz = j.contains("L") ? j.at("L").get<double>() : p.b.lipschitz().value_or(0.0);
  } else {
    fail(ErrorCode::Config, "problem_from_json handles 'equation' and 'inclusion' kinds");
  }
  p.gamma_default = j.value("gamma", 1.0);
  p.x0 = j.contains("x0") ? vec_from_json(j.at("x0")) : Vec(Vec::Zero(p.dim));
  if (j.contains("solution")) {
    p.known_solution = vec_from_json(j.at("solution").at("x"));
    p.certification = j.at("solution").value("method", "declared");
  }
  certify(p);
  return p;
}

json problem_to_json(const ProblemInstance& p) {
  json j;
  j["id"] = p.id;
  j["dim"] = p.dim;
  j["L"] = p.lipschitz;
  j["gamma"] = p.gamma_default;
  j["x0"] = vec_to_json(p.x0);
  if (p.kind == ProblemKind::MonotoneEquation) {
    j["kind"] = "equation";
    j["G"] = operator_to_json(p.g);
  } else if (p.kind == ProblemKind::Inclusion) {
    j["kind"] = "inclusion";
    j["A"] = operator_to_json(p.a);
    j["B"] = operator_to_json(p.b);
  }
  if (p.known_solution)
    j["solution"] = {{"x", vec_to_json(*p.known_solution)}, {"method", p.certification}};
  return j;
}

// ---- registry ----

namespace {

// Portable deterministic uniforms in [-1, 1] (raw splitmix64 bits).
struct DetRng {
  std::uint64_t state;
  explicit DetRng(std::uint64_t seed) : state(seed) {}
  double next() {
    state += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    z ^= z >> 31;
    return 2.0 * std::ldexp(static_cast<double>(z >> 11), -53) - 1.0;
  }
};

json rotation_json(int dim, double scale, const Vec& x0) {
  json j = {{"id", "rotation" + std::to_string(dim)},
            {"kind", "equation"},
            {"dim", dim},
            {"G", {{"kind", "rotation"}, {"dim", dim}, {"scale", scale}}},
            {"L", scale},
            {"gamma", 1.0},
            {"x0", vec_to_json(x0)},
            {"solution", {{"x", vec_to_json(Vec::Zero(dim))}, {"method", "analytic"}}}};
  return j;
}

json instance_json(const ProblemInstance& p) { return problem_to_json(p); }

std::map<std::string, std::function<json()>> registry() {
  std::map<std::string, std::function<json()>> reg;
  reg["rotation2"] = [] {
    Vec x0(2);
    x0 << 1.0, 0.0;
    return rotation_json(2, 1.0, x0);
  };
  reg["rotation4"] = [] {
    Vec x0(4);
    x0 << 1.0, 0.0, -1.0, 0.5;
    return rotation_json(4, 0.7, x0);
  };
  reg["affine2"] = [] {
    Mat m = Mat::Identity(2, 2);
    Vec q(2);
    q << -1.0, -1.0;
    ProblemInstance p = make_affine_monotone(m, q);
    p.id = "affine2";
    return instance_json(p);
  };
  reg["affine2_skew"] = [] {
    Mat m(2, 2);
    m << 0.1, 1.0, -1.0, 0.1;
    DetRng rng(7);
    Vec q(2);
    q << rng.next(), rng.next();
    ProblemInstance p = make_affine_monotone(m, q);
    p.id = "affine2_skew";
    return instance_json(p);
  };
  reg["affine3"] = [] {
    DetRng rng(11);
    Mat a(3, 3);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) a(i, j) = rng.next();
    Mat sym = a * a.transpose() / 3.0;
    Mat skew(3, 3);
    skew << 0, 1, -0.5, -1, 0, 0.8, 0.5, -0.8, 0;
    Vec q(3);
    q << rng.next(), rng.next(), rng.next();
    ProblemInstance p = make_affine_monotone(sym + skew, q);
    p.id = "affine3";
    return instance_json(p);
  };
  reg["box1d"] = [] {
    Vec lo(1), hi(1), q(1);
    lo << 0.0;
    hi << 1.0;
    q << -2.0;
    ProblemInstance p = make_box_inclusion(lo, hi, Mat::Identity(1, 1), q, 0.5);
    p.id = "box1d";
    p.x0 = Vec::Zero(1);
    return instance_json(p);
  };
  reg["box2"] = [] {
    Vec lo = Vec::Zero(2), hi = Vec::Ones(2), q(2);
    Mat s(2, 2);
    s << 0.0, 1.0, -1.0, 0.0;
    q << -2.0, -0.5;
    ProblemInstance p = make_box_inclusion(lo, hi, s, q, 0.05);
    p.id = "box2";
    Vec x0(2);
    x0 << 0.25, 0.4;
    p.x0 = x0;
    return instance_json(p);
  };
  reg["box2_interior"] = [] {
    Vec lo = -Vec::Ones(2), hi = Vec::Ones(2);
    ProblemInstance p = make_box_inclusion(lo, hi, Mat::Identity(2, 2), Vec::Zero(2), 1.0);
    p.id = "box2_interior";
    Vec x0(2);
    x0 << 0.5, -0.25;
    p.x0 = x0;
    return instance_json(p);
  };
  reg["l1q1"] = [] {
    Vec q(1);
    q << -3.0;
    ProblemInstance p = make_l1_quadratic(1.0, Mat::Identity(1, 1), q, 0.5);
    p.id = "l1q1";
    return instance_json(p);
  };
  reg["l1q2"] = [] {
    Mat s(2, 2);
    s << 0.0, 1.0, -1.0, 0.0;
    Vec q(2);
    q << -3.0, 0.5;
    ProblemInstance p = make_l1_quadratic(1.0, s, q, 0.02);
    p.id = "l1q2";
    Vec x0(2);
    x0 << 1.0, 1.0;
    p.x0 = x0;
    return instance_json(p);
  };
  reg["l1q_zero"] = [] {
    Vec q(1);
    q << -3.0;
    ProblemInstance p = make_l1_quadratic(5.0, Mat::Identity(1, 1), q, 0.5);
    p.id = "l1q_zero";
    return instance_json(p);
  };
  reg["minimax_zw"] = [] {
    return json{{"id", "minimax_zw"},     {"kind", "minimax_smooth"},
                {"A", json::array({json::array({0.0})})},
                {"K", json::array({json::array({1.0})})},
                {"D", json::array({json::array({0.0})})},
                {"z0", json::array({1.0})}, {"w0", json::array({0.0})},
                {"saddle", json::array({0.0, 0.0})}};
  };
  reg["minimax_quad"] = [] {
    return json{{"id", "minimax_quad"},   {"kind", "minimax_smooth"},
                {"A", json::array({json::array({1.0})})},
                {"K", json::array({json::array({1.0})})},
                {"D", json::array({json::array({1.0})})},
                {"z0", json::array({1.0})}, {"w0", json::array({-2.0})},
                {"saddle", json::array({0.0, 0.0})}};
  };
  reg["minimax_l1box"] = [] {
    return json{{"id", "minimax_l1box"},  {"kind", "minimax_bilinear"},
                {"K", json::array({json::array({1.0})})},
                {"f", {{"kind", "l1"}, {"lambda", 1.0}}},
                {"g", {{"kind", "box"}, {"lo", json::array({-1.0})}, {"hi", json::array({1.0})}}},
                {"z0", json::array({0.7})}, {"w0", json::array({-0.3})},
                {"saddle", json::array({0.0, 0.0})}};
  };
  reg["admm_quad"] = [] {
    json eye = json::array({json::array({1.0, 0.0}), json::array({0.0, 1.0})});
    return json{{"id", "admm_quad"}, {"kind", "admm"},
                {"P", eye}, {"Q", eye}, {"r", json::array({2.0, 2.0})},
                {"f", {{"kind", "quadratic"}, {"S", eye}, {"q", json::array({0.0, 0.0})}}},
                {"g", {{"kind", "quadratic"}, {"S", eye}, {"q", json::array({0.0, 0.0})}}},
                {"gamma", 1.0},
                {"x0", json::array({0.0, 0.0})}, {"w0", json::array({0.0, 0.0})},
                {"kkt", json::array({1.0, 1.0, 1.0, 1.0, 1.0, 1.0})}};
  };
  reg["admm_l1"] = [] {
    json eye = json::array({json::array({1.0, 0.0}), json::array({0.0, 1.0})});
    return json{{"id", "admm_l1"}, {"kind", "admm"},
                {"P", eye}, {"Q", eye}, {"r", json::array({2.0, 2.0})},
                {"f", {{"kind", "l1"}, {"lambda", 1.0}}},
                {"g", {{"kind", "quadratic"}, {"S", eye}, {"q", json::array({0.0, 0.0})}}},
                {"gamma", 1.0},
                {"x0", json::array({0.0, 0.0})}, {"w0", json::array({0.0, 0.0})},
                {"kkt", json::array({1.0, 1.0, 1.0, 1.0, 1.0, 1.0})}};
  };
  return reg;
}

}  // namespace

std::vector<std::string> list_problems() {
  std::vector<std::string> names;
  for (const auto& [name, _] : registry()) names.push_back(name);
  return names;
}

bool is_registered_problem(const std::string& id) { return registry().count(id) > 0; }

json registered_problem_json(const std::string& id) {
  auto reg = registry();
  auto it = reg.find(id);
  if (it == reg.end()) fail(ErrorCode::Config, "unknown problem '" + id + "'");
  return it->second();
}

}  // namespace mosk
