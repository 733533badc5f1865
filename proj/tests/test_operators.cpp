#include <doctest.h>

#include <cmath>
#include <random>

#include <nlohmann/json.hpp>

#include "mosk/operators.hpp"
#include "mosk/problems.hpp"

using namespace mosk;

namespace {

Vec v2(double a, double b) {
  Vec v(2);
  v << a, b;
  return v;
}

Vec v1(double a) {
  Vec v(1);
  v << a;
  return v;
}

// deterministic uniforms in [-2, 2]
struct Rng {
  std::mt19937_64 gen;
  explicit Rng(unsigned long seed) : gen(seed) {}
  double operator()() { return 4.0 * std::ldexp(static_cast<double>(gen() >> 11), -53) - 2.0; }
  Vec vec(int d) {
    Vec v(d);
    for (int i = 0; i < d; ++i) v(i) = (*this)();
    return v;
  }
};

}  // namespace

TEST_CASE("forward evaluation") {
  Operator scale2 = make_linear_operator(2.0 * Mat::Identity(2, 2));
  CHECK(eval_forward(scale2, v2(1, -3)).isApprox(v2(2, -6)));

  Operator zero = make_zero_operator(3);
  CHECK(zero.forward(Vec::Ones(3)).norm() == 0.0);

  Operator rot = make_rotation_operator(2, 1.0);
  CHECK(rot.forward(v2(1, 0)).isApprox(v2(0, -1)));

  Operator l1 = make_l1_prox_operator(2, 1.0);
  CHECK_THROWS_AS((void)l1.forward(v2(1, 1)), Error);
  CHECK_THROWS_AS((void)scale2.forward(Vec::Ones(3)), Error);
}

TEST_CASE("resolvent evaluation") {
  Operator ident = make_linear_operator(Mat::Identity(1, 1));
  CHECK(eval_resolvent(ident, 1.0, v1(2.0))(0) == doctest::Approx(1.0).epsilon(1e-14));

  Operator l1 = make_l1_prox_operator(1, 1.0);
  CHECK(l1.resolvent(1.0, v1(2.0))(0) == doctest::Approx(1.0).epsilon(1e-14));
  CHECK(l1.resolvent(1.0, v1(-0.5))(0) == 0.0);

  Mat m(2, 2);
  m << 2, 0, 0, 3;
  Operator lin = make_linear_operator(m);
  // oracle: direct solve of (I + 0.5 M) y = x
  Mat sys = Mat::Identity(2, 2) + 0.5 * m;
  Vec expect = sys.lu().solve(v2(2, 2));
  Vec got = lin.resolvent(0.5, v2(2, 2));
  CHECK((got - expect).norm() < 1e-14);
  CHECK(got.isApprox(v2(1.0, 0.8)));

  CHECK_THROWS_AS((void)lin.resolvent(0.0, v2(1, 1)), Error);
  CHECK_THROWS_AS((void)lin.resolvent(-1.0, v2(1, 1)), Error);
  Operator fwd_only("fwd", 1, [](const Vec& x) { return x; }, nullptr, 1.0);
  CHECK_THROWS_AS((void)fwd_only.resolvent(1.0, v1(1)), Error);
}

TEST_CASE("box projection resolvent is gamma-independent") {
  Operator box = make_box_projection_operator(Vec::Zero(1), Vec::Ones(1));
  for (double g : {0.1, 1.0, 7.5}) CHECK(box.resolvent(g, v1(1.5))(0) == 1.0);
}

TEST_CASE("forward/resolvent consistency of paired operators") {
  Mat m(2, 2);
  m << 1.0, 2.0, -2.0, 0.5;
  Vec q = v2(0.3, -0.7);
  Operator aff = make_affine_operator(m, q);
  Rng rng(42);
  for (int i = 0; i < 100; ++i) {
    Vec x = rng.vec(2);
    for (double g : {0.5, 1.0}) {
      Vec back = aff.resolvent(g, x + g * aff.forward(x));
      CHECK((back - x).norm() <= 1e-10 * (1.0 + x.norm()));
    }
  }
}

TEST_CASE("residual map formula and special cases") {
  // A = 0 collapses the formula to B(x)
  Mat m(2, 2);
  m << 0.0, 1.0, -1.0, 0.0;
  Vec q = v2(-2.0, -0.5);
  Operator b = make_affine_operator(m, q);
  ResidualMap rm0(make_zero_operator(2), b, 0.7);
  Rng rng(3);
  for (int i = 0; i < 20; ++i) {
    Vec x = rng.vec(2);
    CHECK((rm0.residual(x) - b.forward_uncounted(x)).norm() < 1e-12);
  }

  // box projection hand-check: A = N_[0,1], B(x) = x - 2, gamma = 1
  Operator box = make_box_projection_operator(Vec::Zero(1), Vec::Ones(1));
  Operator bb = make_affine_operator(Mat::Identity(1, 1), v1(-2.0));
  ResidualMap rm(box, bb, 1.0);
  CHECK(rm.residual(v1(1.0)).norm() == doctest::Approx(0.0));  // x* = 1
  CHECK(rm.residual(v1(0.0))(0) == doctest::Approx(-1.0));     // J(0 + 2) = 1

  // residual vanishes exactly at certified zoo solutions
  for (const char* name : {"box1d", "box2", "l1q1", "l1q2"}) {
    ProblemInstance p = problem_from_json(registered_problem_json(name));
    REQUIRE(p.known_solution.has_value());
    ResidualMap r(p.a, p.b, p.gamma_default);
    CHECK(r.residual(*p.known_solution).norm() <= 1e-10);
  }
}

TEST_CASE("residual_no_forward agrees with the forward form") {
  ProblemInstance p = problem_from_json(registered_problem_json("box2"));
  ResidualMap rm(p.a, p.b, p.gamma_default);
  Rng rng(7);
  for (int i = 0; i < 100; ++i) {
    Vec x = rng.vec(2);
    Vec u = x + rm.gamma() * p.b.forward_uncounted(x);
    CHECK((rm.residual_no_forward(x, u) - rm.residual(x)).norm() <= 1e-10);
  }
  // A = 0: (1/g)(x - (2x - u)) = (u - x)/g = B(x)
  ResidualMap rm0(make_zero_operator(2), p.b, 0.5);
  Vec x = v2(0.25, -1.5);
  Vec u = x + 0.5 * p.b.forward_uncounted(x);
  CHECK((rm0.residual_no_forward(x, u) - p.b.forward_uncounted(x)).norm() < 1e-12);
#ifndef NDEBUG
  CHECK_THROWS_AS((void)rm.residual_no_forward(x, x + Vec::Ones(2)), Error);
#endif
}

TEST_CASE("firm nonexpansiveness of every registered resolvent") {
  struct Entry {
    Operator op;
    int dim;
  };
  std::vector<Entry> ops;
  ops.push_back({make_l1_prox_operator(3, 0.8), 3});
  ops.push_back({make_box_projection_operator(-Vec::Ones(2), Vec::Ones(2)), 2});
  Mat m(2, 2);
  m << 0.3, 1.0, -1.0, 0.6;
  ops.push_back({make_affine_operator(m, v2(0.1, -0.2)), 2});
  ops.push_back({make_rotation_operator(4, 1.3), 4});
  ops.push_back({make_zero_operator(2), 2});

  Rng rng(11);
  for (auto& e : ops) {
    for (int i = 0; i < 100; ++i) {
      Vec x = rng.vec(e.dim), y = rng.vec(e.dim);
      for (double g : {0.25, 1.0}) {
        Vec jx = e.op.resolvent_uncounted(g, x), jy = e.op.resolvent_uncounted(g, y);
        CHECK((jx - jy).dot(x - y) >= (jx - jy).squaredNorm() - 1e-10);
      }
    }
  }
}

TEST_CASE("residual-map coercivity inequality on random pairs") {
  for (const char* name : {"box2", "l1q2", "box1d"}) {
    ProblemInstance p = problem_from_json(registered_problem_json(name));
    const double g = p.gamma_default;
    ResidualMap rm(p.a, p.b, g);
    Rng rng(5);
    for (int i = 0; i < 100; ++i) {
      Vec x = rng.vec(p.dim), y = rng.vec(p.dim);
      Vec gx = rm.residual_uncounted(x), gy = rm.residual_uncounted(y);
      Vec bx = p.b.forward_uncounted(x), by = p.b.forward_uncounted(y);
      const double lhs = (gx - gy).dot(x - y) + g * (gx - gy).dot(bx - by);
      CHECK(lhs >= g * (gx - gy).squaredNorm() - 1e-10);
    }
  }
}

TEST_CASE("residual map is (1+gamma L)/gamma Lipschitz") {
  for (const char* name : {"box2", "l1q2"}) {
    ProblemInstance p = problem_from_json(registered_problem_json(name));
    const double g = p.gamma_default;
    const double lip = (1.0 + g * p.lipschitz) / g;
    ResidualMap rm(p.a, p.b, g);
    Rng rng(9);
    for (int i = 0; i < 100; ++i) {
      Vec x = rng.vec(p.dim), y = rng.vec(p.dim);
      Vec gx = rm.residual_uncounted(x), gy = rm.residual_uncounted(y);
      CHECK((gx - gy).norm() <= lip * (x - y).norm() + 1e-10);
    }
  }
}

TEST_CASE("non-finite evaluations abort") {
  Operator bad("bad", 1, [](const Vec& x) { return Vec(x.array() / 0.0); }, nullptr, 1.0);
  try {
    (void)bad.forward(v1(1.0));
    FAIL("expected NonFiniteIterate");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::NonFiniteIterate);
  }
}

TEST_CASE("evaluation counters count, probes do not") {
  Operator rot = make_rotation_operator(2, 1.0);
  rot.reset_counts();
  (void)rot.forward(v2(1, 0));
  (void)rot.forward_uncounted(v2(1, 0));
  (void)rot.resolvent(1.0, v2(1, 0));
  (void)rot.resolvent_uncounted(1.0, v2(1, 0));
  CHECK(rot.counts().forward.load() == 1);
  CHECK(rot.counts().resolvent.load() == 1);

  ProblemInstance p = problem_from_json(registered_problem_json("box2"));
  ResidualMap rm(p.a, p.b, 1.0);
  rm.reset_evals();
  (void)rm.residual(v2(0, 0));
  (void)rm.residual_uncounted(v2(0, 0));
  CHECK(rm.evals() == 1);
}

TEST_CASE("operator JSON round trip") {
  Rng rng(13);
  for (const char* spec :
       {R"({"kind":"rotation","dim":4,"scale":0.7})",
        R"({"kind":"l1_prox","dim":2,"lambda":1.5})",
        R"({"kind":"box_projection","lo":[0.0,-1.0],"hi":[1.0,2.0]})",
        R"({"kind":"affine","matrix":[[0.0,1.0],[-1.0,0.0]],"offset":[-2.0,-0.5]})"}) {
    auto j = nlohmann::json::parse(spec);
    Operator op = operator_from_json(j);
    Operator back = operator_from_json(operator_to_json(op));
    for (int i = 0; i < 10; ++i) {
      Vec x = rng.vec(op.dim());
      if (op.has_forward()) CHECK((op.forward_uncounted(x) - back.forward_uncounted(x)).norm() == 0.0);
      if (op.has_resolvent())
        CHECK((op.resolvent_uncounted(0.5, x) - back.resolvent_uncounted(0.5, x)).norm() == 0.0);
    }
  }
}

TEST_CASE("residual map construction enforces its operator contract") {
  Operator box = make_box_projection_operator(Vec::Zero(2), Vec::Ones(2));
  Operator aff = make_affine_operator(Mat::Identity(2, 2), Vec::Zero(2));
  // set-valued/resolvent-only B is out of scope: forward required
  CHECK_THROWS_AS(ResidualMap(aff, box, 1.0), Error);
  // A must expose a resolvent
  Operator fwd_only("fwd", 2, [](const Vec& x) { return x; }, nullptr, 1.0);
  CHECK_THROWS_AS(ResidualMap(fwd_only, aff, 1.0), Error);
  CHECK_THROWS_AS(ResidualMap(box, aff, 0.0), Error);
  CHECK_NOTHROW(ResidualMap(box, aff, 1.0));
}
