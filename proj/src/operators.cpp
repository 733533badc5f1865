#include "mosk/operators.hpp"

#include <cmath>
#include <map>
#include <mutex>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <nlohmann/json.hpp>

namespace mosk {

using nlohmann::json;

#ifndef NDEBUG
#define MOSK_CHECKED 1
#else
#define MOSK_CHECKED 0
#endif

Operator::Operator(std::string name, int dim, ForwardFn fwd, ResolventFn res,
                   std::optional<double> lipschitz)
    : name_(std::move(name)), dim_(dim), forward_(std::move(fwd)), resolvent_(std::move(res)),
      lipschitz_(lipschitz) {
  if (!forward_ && !resolvent_)
    fail(ErrorCode::Config, "operator '" + name_ + "' needs a forward map or a resolvent");
}

Vec Operator::eval_forward(const Vec& x) const {
  if (!forward_) fail(ErrorCode::MissingForward, "operator '" + name_ + "' has no forward map");
  if (dim_ > 0 && x.size() != dim_) require_same_dim(x, Vec::Zero(dim_), name_.c_str());
  Vec out = forward_(x);
  require_finite(out, name_.c_str());
  return out;
}

Vec Operator::eval_resolvent(double gamma, const Vec& x) const {
  if (!resolvent_) fail(ErrorCode::MissingResolvent, "operator '" + name_ + "' has no resolvent");
  if (!(gamma > 0.0)) fail(ErrorCode::NonPositiveGamma, "resolvent stepsize must be positive");
  if (dim_ > 0 && x.size() != dim_) require_same_dim(x, Vec::Zero(dim_), name_.c_str());
  Vec out = resolvent_(gamma, x);
  require_finite(out, name_.c_str());
  return out;
}

Vec Operator::forward(const Vec& x) const {
  counts_->forward.fetch_add(1, std::memory_order_relaxed);
  return eval_forward(x);
}

Vec Operator::resolvent(double gamma, const Vec& x) const {
  counts_->resolvent.fetch_add(1, std::memory_order_relaxed);
  return eval_resolvent(gamma, x);
}

Vec Operator::forward_uncounted(const Vec& x) const { return eval_forward(x); }
Vec Operator::resolvent_uncounted(double gamma, const Vec& x) const { return eval_resolvent(gamma, x); }

ResidualMap::ResidualMap(Operator a, Operator b, double gamma)
    : a_(std::move(a)), b_(std::move(b)), gamma_(gamma) {
  if (!(gamma_ > 0.0)) fail(ErrorCode::NonPositiveGamma, "residual map needs gamma > 0");
  if (!a_.has_resolvent()) fail(ErrorCode::MissingResolvent, "residual map needs the resolvent of A");
  if (!b_.has_forward()) fail(ErrorCode::MissingForward, "residual map needs forward-evaluable B");
}

Vec ResidualMap::impl_forward(const Vec& x, bool counted) const {
  Vec bx = counted ? b_.forward(x) : b_.forward_uncounted(x);
  Vec j = counted ? a_.resolvent(gamma_, x - gamma_ * bx) : a_.resolvent_uncounted(gamma_, x - gamma_ * bx);
  return (x - j) / gamma_;
}

Vec ResidualMap::impl_no_forward(const Vec& x, const Vec& u, bool counted) const {
  require_same_dim(x, u, "residual_no_forward");
#if MOSK_CHECKED
  if (b_.has_resolvent()) {
    Vec xr = b_.resolvent_uncounted(gamma_, u);
    if ((xr - x).norm() > 1e-8 * (1.0 + x.norm()))
      fail(ErrorCode::PreconditionViolation, "residual_no_forward: x != J_{gamma B}(u)");
  }
#endif
  Vec j = counted ? a_.resolvent(gamma_, 2.0 * x - u) : a_.resolvent_uncounted(gamma_, 2.0 * x - u);
  return (x - j) / gamma_;
}

Vec ResidualMap::residual(const Vec& x) const {
  evals_->fetch_add(1, std::memory_order_relaxed);
  return impl_forward(x, true);
}

Vec ResidualMap::residual_no_forward(const Vec& x, const Vec& u) const {
  evals_->fetch_add(1, std::memory_order_relaxed);
  return impl_no_forward(x, u, true);
}

Vec ResidualMap::residual_uncounted(const Vec& x) const { return impl_forward(x, false); }

Vec ResidualMap::residual_no_forward_uncounted(const Vec& x, const Vec& u) const {
  return impl_no_forward(x, u, false);
}

double spectral_norm(const Mat& m) {
  return m.jacobiSvd().singularValues()(0);
}

namespace {

// Resolvent of an affine map T(x) = M x + q: solves (I + gamma M) y = x - gamma q.
// The LU factorization is cached per gamma.
struct AffineResolventCache {
  Mat m;
  Vec q;
  std::map<double, Eigen::PartialPivLU<Mat>> lus;
  std::mutex mutex;

  Vec solve(double gamma, const Vec& x) {
    std::lock_guard<std::mutex> lock(mutex);
    auto it = lus.find(gamma);
    if (it == lus.end()) {
      Mat sys = Mat::Identity(m.rows(), m.cols()) + gamma * m;
      it = lus.emplace(gamma, Eigen::PartialPivLU<Mat>(sys)).first;
    }
    return it->second.solve(x - gamma * q);
  }
};

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
  if (rows == 0) return Mat(0, 0);
  const auto cols = j.at(0).size();
  Mat m(rows, cols);
  for (std::size_t i = 0; i < rows; ++i) {
    if (j.at(i).size() != cols) fail(ErrorCode::Config, "ragged matrix in operator spec");
    for (std::size_t c = 0; c < cols; ++c) m(i, c) = j.at(i).at(c).get<double>();
  }
  return m;
}

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

Operator with_spec(Operator op, json spec) {
  op.set_spec(std::make_shared<const json>(std::move(spec)));
  return op;
}

}  // namespace

Operator make_affine_operator(const Mat& m, const Vec& q, std::optional<double> lipschitz) {
  if (m.rows() != m.cols() || m.rows() != q.size())
    fail(ErrorCode::DimensionMismatch, "affine operator needs square M matching q");
  auto cache = std::make_shared<AffineResolventCache>();
  cache->m = m;
  cache->q = q;
  double lip = lipschitz ? *lipschitz : spectral_norm(m);
  Operator op("affine", static_cast<int>(m.rows()),
              [m, q](const Vec& x) -> Vec { return m * x + q; },
              [cache](double gamma, const Vec& x) -> Vec { return cache->solve(gamma, x); }, lip);
  json spec = {{"kind", q.isZero(0.0) ? "linear" : "affine"}, {"matrix", mat_to_json(m)}, {"lipschitz", lip}};
  if (!q.isZero(0.0)) spec["offset"] = vec_to_json(q);
  return with_spec(std::move(op), std::move(spec));
}

Operator make_linear_operator(const Mat& m, std::optional<double> lipschitz) {
  return make_affine_operator(m, Vec::Zero(m.rows()), lipschitz);
}

Operator make_rotation_operator(int dim, double scale) {
  if (dim <= 0 || dim % 2 != 0) fail(ErrorCode::Config, "rotation operator needs positive even dim");
  if (!(scale > 0.0)) fail(ErrorCode::Config, "rotation operator needs scale > 0");
  Mat s = Mat::Zero(dim, dim);
  for (int i = 0; i + 1 < dim; i += 2) {
    s(i, i + 1) = scale;
    s(i + 1, i) = -scale;
  }
  Operator op = make_linear_operator(s, scale);
  return with_spec(std::move(op), json{{"kind", "rotation"}, {"dim", dim}, {"scale", scale}});
}

Operator make_zero_operator(int dim) {
  Operator op("zero", dim, [](const Vec& x) -> Vec { return Vec::Zero(x.size()); },
              [](double, const Vec& x) -> Vec { return x; }, 0.0);
  return with_spec(std::move(op), json{{"kind", "zero"}, {"dim", dim}});
}

Operator make_l1_prox_operator(int dim, double lambda) {
  if (lambda < 0.0) fail(ErrorCode::Config, "l1 prox needs lambda >= 0");
  Operator op("l1_prox", dim, nullptr,
              [lambda](double gamma, const Vec& x) -> Vec {
                const double t = gamma * lambda;
                Vec y(x.size());
                for (Eigen::Index i = 0; i < x.size(); ++i) {
                  double a = std::abs(x(i)) - t;
                  y(i) = a > 0.0 ? (x(i) > 0.0 ? a : -a) : 0.0;
                }
                return y;
              },
              std::nullopt);
  return with_spec(std::move(op), json{{"kind", "l1_prox"}, {"dim", dim}, {"lambda", lambda}});
}

Operator make_box_projection_operator(const Vec& lo, const Vec& hi) {
  require_same_dim(lo, hi, "box projection");
  for (Eigen::Index i = 0; i < lo.size(); ++i)
    if (lo(i) > hi(i)) fail(ErrorCode::Config, "box projection needs lo <= hi");
  Operator op("box_projection", static_cast<int>(lo.size()), nullptr,
              // the projection does not depend on gamma
              [lo, hi](double, const Vec& x) -> Vec { return x.cwiseMax(lo).cwiseMin(hi); },
              std::nullopt);
  return with_spec(std::move(op),
                   json{{"kind", "box_projection"}, {"lo", vec_to_json(lo)}, {"hi", vec_to_json(hi)}});
}

Operator operator_from_json(const json& j) {
  const std::string kind = j.at("kind").get<std::string>();
  std::optional<double> lip;
  if (j.contains("lipschitz")) lip = j.at("lipschitz").get<double>();
  if (kind == "linear") return make_affine_operator(mat_from_json(j.at("matrix")), Vec::Zero(j.at("matrix").size()), lip);
  if (kind == "affine") {
    Mat m = mat_from_json(j.at("matrix"));
    Vec q = j.contains("offset") ? vec_from_json(j.at("offset")) : Vec(Vec::Zero(m.rows()));
    return make_affine_operator(m, q, lip);
  }
  if (kind == "rotation") return make_rotation_operator(j.at("dim").get<int>(), j.at("scale").get<double>());
  if (kind == "zero") return make_zero_operator(j.at("dim").get<int>());
  if (kind == "l1_prox") return make_l1_prox_operator(j.at("dim").get<int>(), j.at("lambda").get<double>());
  if (kind == "box_projection")
    return make_box_projection_operator(vec_from_json(j.at("lo")), vec_from_json(j.at("hi")));
  fail(ErrorCode::Config, "unknown operator kind '" + kind + "'");
}

json operator_to_json(const Operator& op) {
  if (!op.spec()) fail(ErrorCode::Config, "operator '" + op.name() + "' has no serializable spec");
  return *op.spec();
}

}  // namespace mosk
