#include <doctest.h>

#include <cmath>

#include "mosk/errors.hpp"
#include "mosk/schedules.hpp"

using namespace mosk;

TEST_CASE("anchor coefficient") {
  CHECK(anchor_beta(0) == 0.5);
  CHECK(anchor_beta(2) == 0.25);
  CHECK(anchor_beta(998) == doctest::Approx(0.001).epsilon(1e-15));
}

TEST_CASE("popov recurrence, scaled form (M = 1)") {
  // zero is a fixed point
  StepSchedule zero(ScheduleKind::PopovEG, 1.0, 0.0);
  CHECK(zero.eta(1) == 0.0);
  CHECK(zero.eta(10) == 0.0);

  // one exact step from 0.65: (4/3)(1 - 1/(4*(1 - 0.65^2))) * 0.65
  CHECK(next_eta_popov(0.65, 0, 1.0) == doctest::Approx(0.49148629148629147).epsilon(1e-15));

  StepSchedule s(ScheduleKind::PopovEG, 1.0, 0.65);
  CHECK(s.eta(1) == doctest::Approx(0.49148629148629147).epsilon(1e-15));
}

TEST_CASE("popov schedule long-run values from 0.65") {
  StepSchedule s(ScheduleKind::PopovEG, 1.0, 0.65);
  // value after 1e4 steps, the iterate that rounds to 0.4370579
  CHECK(s.limit(10000) == doctest::Approx(0.43705794389765301).epsilon(1e-9));
  CHECK(s.limit(10000) >= 0.4370579);
  // converged value at 1e6 steps sits lower
  CHECK(s.limit() == doctest::Approx(0.43704772907423503).epsilon(1e-9));
}

TEST_CASE("dr recurrence") {
  StepSchedule zero(ScheduleKind::AccelDR, 1.0, 0.0);
  CHECK(zero.eta(5) == 0.0);

  // gamma = 1, eta0 = 0.5: eta1 = (1/3)(2*(3/4) - 1/2)(1/2) / ((1/2)(1/2)(3/2)) = 4/9
  CHECK(next_eta_dr(0.5, 0, 1.0) == doctest::Approx(4.0 / 9.0).epsilon(1e-15));

  // scaled sequence etahat = eta/(2 gamma): run with gamma = 1/2 so eta == etahat
  StepSchedule s(ScheduleKind::AccelDR, 0.5, 0.5);
  CHECK(s.limit(5000) == doctest::Approx(0.276314355842637).epsilon(1e-12));
  CHECK(s.limit() == doctest::Approx(0.27629336935208622).epsilon(1e-9));
}

TEST_CASE("recurrences leave their domain loudly") {
  CHECK_THROWS_AS((void)next_eta_popov(1.1, 0, 1.0), Error);
  CHECK_THROWS_AS((void)next_eta_dr(2.5, 0, 1.0), Error);
}

TEST_CASE("analytic lower bounds") {
  // inside (0, 1/sqrt(2)) the scaled bound is 0.65 (1 - 2*0.4225)/(1 - 0.4225) = 0.1745...
  auto at65 = eta_lower_bound(ScheduleKind::PopovEG, 0.65, 1.0);
  REQUIRE(at65.has_value());
  CHECK(*at65 == doctest::Approx(0.1745).epsilon(1e-3));
  // beyond 1/sqrt(2): no guarantee
  CHECK(!eta_lower_bound(ScheduleKind::PopovEG, 0.72, 1.0).has_value());
  // dr with etahat0 = 0.25 (eta0 = 0.5, gamma = 1): 0.25 (1 - 0.5)/(1 - 0.25) = 1/6
  auto dr = eta_lower_bound(ScheduleKind::AccelDR, 0.5, 1.0);
  REQUIRE(dr.has_value());
  CHECK(*dr == doctest::Approx(1.0 / 6.0).epsilon(1e-15));
  CHECK(!eta_lower_bound(ScheduleKind::AccelDR, 1.5, 1.0).has_value());
  // popov with eta0 = 0.1, M = 4: 0.1 (1 - 0.08)/(1 - 0.04)
  auto pv = eta_lower_bound(ScheduleKind::PopovEG, 0.1, 4.0);
  REQUIRE(pv.has_value());
  CHECK(*pv == doctest::Approx(0.1 * 0.92 / 0.96).epsilon(1e-15));
}

TEST_CASE("eta0 validation per kind") {
  ScheduleConstants c;
  c.L = 1.0;
  c.theta = 1.0;
  c.gamma = 1.0;

  // anchored Popov: cap 1/(2 L sqrt(3))
  CHECK(validate_eta0(ScheduleKind::PopovEG, 1.0 / (2.0 * std::sqrt(3.0)), c).ok);
  CHECK(!validate_eta0(ScheduleKind::PopovEG, 1.0, c).ok);

  // split Popov at gamma = L = 1: N = 4, cap = min(eta0_bar, 1/(2 sqrt(12)))
  const double n = 4.0;
  const double ebar = 1.0 / (2.0 * (4.0 + std::sqrt(16.0 + 3.0 * n)));
  Eta0Report rep = validate_eta0(ScheduleKind::SplitPopov, 0.1, c);
  CHECK(rep.cap == doctest::Approx(std::min(ebar, 1.0 / (2.0 * std::sqrt(3.0 * n)))).epsilon(1e-14));
  CHECK(ebar < 1.0 / (2.0 * std::sqrt(3.0 * n)));
  // 0.1 sits strictly between the two candidate caps: violation against the smaller
  CHECK(0.1 > ebar);
  CHECK(0.1 < 1.0 / (2.0 * std::sqrt(3.0 * n)));
  CHECK(!rep.ok);
  CHECK(validate_eta0(ScheduleKind::SplitPopov, ebar, c).ok);

  // accelerated DR: (0, gamma)
  CHECK(validate_eta0(ScheduleKind::AccelDR, 0.5, c).ok);
  CHECK(!validate_eta0(ScheduleKind::AccelDR, 1.0, c).ok);  // boundary excluded
  CHECK(!validate_eta0(ScheduleKind::AccelDR, 0.0, c).ok);
}

TEST_CASE("monotone nonincreasing with vanishing increments") {
  struct Case {
    ScheduleKind kind;
    double m_or_gamma, eta0;
  };
  for (const Case& c : {Case{ScheduleKind::PopovEG, 1.0, 0.65}, Case{ScheduleKind::PopovEG, 4.0, 0.2},
                        Case{ScheduleKind::SplitPopov, 16.0, 0.05},
                        Case{ScheduleKind::AccelDR, 1.0, 0.5}}) {
    double e = c.eta0;
    double last_delta = 0.0;
    for (std::size_t k = 0; k < 1000000; ++k) {
      const double en = c.kind == ScheduleKind::AccelDR ? next_eta_dr(e, k, c.m_or_gamma)
                                                        : next_eta_popov(e, k, c.m_or_gamma);
      REQUIRE(en <= e * (1.0 + 1e-15));
      last_delta = e - en;
      e = en;
    }
    CHECK(last_delta < 1e-12);
    CHECK(e > 0.0);
    // when the eta0 precondition holds, the numerical limit beats the bound
    auto lb = eta_lower_bound(c.kind, c.eta0, c.m_or_gamma);
    if (lb) {
      const double limit_value = c.kind == ScheduleKind::AccelDR ? e / (2.0 * c.m_or_gamma) : e;
      CHECK(limit_value > *lb);
    }
  }
}

TEST_CASE("scale equivalence of the popov recurrence") {
  const double m = 7.3, eta0 = 0.3 / std::sqrt(m);
  StepSchedule raw(ScheduleKind::PopovEG, m, eta0);
  StepSchedule scaled(ScheduleKind::PopovEG, 1.0, std::sqrt(m) * eta0);
  for (std::size_t k = 0; k <= 10000; k += 97) {
    const double a = raw.eta(k);
    const double b = scaled.eta(k) / std::sqrt(m);
    CHECK(std::abs(a - b) <= 1e-12 * std::abs(a));
  }
}

TEST_CASE("memoized random access matches sequential evaluation") {
  StepSchedule s(ScheduleKind::PopovEG, 4.0, 0.2);
  const double at500 = s.eta(500);  // extends the prefix in one jump
  double e = 0.2;
  for (std::size_t k = 0; k < 123; ++k) e = next_eta_popov(e, k, 4.0);
  CHECK(s.eta(123) == e);
  for (std::size_t k = 123; k < 500; ++k) e = next_eta_popov(e, k, 4.0);
  CHECK(at500 == e);
}

TEST_CASE("default eta0 values are the guaranteed caps") {
  ScheduleConstants c;
  c.L = 2.0;
  c.gamma = 0.5;
  c.theta = 1.0;
  CHECK(default_eta0(ScheduleKind::PopovEG, c) ==
        doctest::Approx(1.0 / (2.0 * c.L * std::sqrt(3.0))).epsilon(1e-14));
  CHECK(default_eta0(ScheduleKind::AccelDR, c) == doctest::Approx(0.5 * c.gamma).epsilon(1e-15));
  CHECK(validate_eta0(ScheduleKind::SplitPopov, default_eta0(ScheduleKind::SplitPopov, c), c).ok);
}
