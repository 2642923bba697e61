#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "pdac/errors.hpp"
#include "pdac/stats.hpp"

using namespace pdac;

TEST_CASE("log_sum_exp basics") {
  CHECK(log_sum_exp({0.0}) == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(log_sum_exp({std::log(2.0), std::log(3.0)}) ==
        doctest::Approx(std::log(5.0)).epsilon(1e-12));
  // Shift invariance where the naive sum would overflow.
  CHECK(log_sum_exp({1000.0, 1000.0}) == doctest::Approx(1000.0 + std::log(2.0)).epsilon(1e-12));
  CHECK(log_sum_exp({-1e9, 0.0}) == doctest::Approx(0.0).epsilon(1e-12));
  const double ninf = -std::numeric_limits<double>::infinity();
  CHECK(log_sum_exp({ninf, ninf}) == ninf);
  CHECK(log_sum_exp({ninf, std::log(4.0)}) == doctest::Approx(std::log(4.0)).epsilon(1e-12));
}

TEST_CASE("mean and sem") {
  CHECK(mean({1.0, 2.0, 3.0, 4.0}) == doctest::Approx(2.5).epsilon(1e-15));
  CHECK(sem({5.0}) == 0.0);
  // sample std of {1,2,3,4} is sqrt(5/3); sem divides by sqrt(4)
  CHECK(sem({1.0, 2.0, 3.0, 4.0}) ==
        doctest::Approx(std::sqrt(5.0 / 3.0) / 2.0).epsilon(1e-12));
}

TEST_CASE("incomplete beta against reference values") {
  CHECK(incomplete_beta(0.5, 0.5, 0.5) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(incomplete_beta(1.0, 1.0, 0.37) == doctest::Approx(0.37).epsilon(1e-12));
  CHECK(incomplete_beta(2.0, 3.0, 0.25) == doctest::Approx(0.26171875).epsilon(1e-12));
  CHECK(incomplete_beta(5.0, 2.0, 0.8) == doctest::Approx(0.65536).epsilon(1e-12));
  CHECK(incomplete_beta(0.5, 1.5, 0.3) ==
        doctest::Approx(0.6607459491435457).epsilon(1e-10));
  CHECK(incomplete_beta(2.0, 3.0, 0.0) == 0.0);
  CHECK(incomplete_beta(2.0, 3.0, 1.0) == 1.0);
}

TEST_CASE("student t two-sided tail against reference values") {
  CHECK(student_t_two_sided_p(2.0, 10.0) ==
        doctest::Approx(0.07338803477074039).epsilon(1e-10));
  CHECK(student_t_two_sided_p(0.5, 30.0) ==
        doctest::Approx(0.6207230048851273).epsilon(1e-10));
  CHECK(student_t_two_sided_p(5.0, 8.0) ==
        doctest::Approx(0.001052825793366539).epsilon(1e-9));
  CHECK(student_t_two_sided_p(-2.0, 10.0) ==
        doctest::Approx(student_t_two_sided_p(2.0, 10.0)).epsilon(1e-15));
  CHECK(student_t_two_sided_p(0.0, 12.0) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("spearman matches the rank correlation reference") {
  SUBCASE("single swapped pair") {
    const SpearmanResult r = spearman({1, 2, 3, 4, 5}, {2, 1, 4, 3, 5});
    CHECK(r.rho == doctest::Approx(0.8).epsilon(1e-12));
    CHECK(r.p_value == doctest::Approx(0.10408803866182788).epsilon(1e-9));
    CHECK(r.n == 5);
  }
  SUBCASE("ties use average ranks") {
    const SpearmanResult r =
        spearman({1.0, 2.0, 2.0, 3.0, 4.0, 5.0}, {1.5, 1.0, 3.0, 2.0, 5.0, 4.0});
    CHECK(r.rho == doctest::Approx(0.753702346348183).epsilon(1e-12));
    CHECK(r.p_value == doctest::Approx(0.0835232813732598).epsilon(1e-9));
  }
  SUBCASE("negative trend") {
    const SpearmanResult r =
        spearman({0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7}, {9.0, 7.5, 8.0, 5.0, 4.0, 4.5, 1.0});
    CHECK(r.rho == doctest::Approx(-0.9285714285714288).epsilon(1e-12));
    CHECK(r.p_value == doctest::Approx(0.0025194724037946874).epsilon(1e-9));
  }
  SUBCASE("perfect monotone") {
    const SpearmanResult r = spearman({1, 2, 3, 4}, {10, 20, 30, 40});
    CHECK(r.rho == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(r.p_value == 0.0);
  }
  SUBCASE("too few points") {
    CHECK_THROWS_AS(spearman({1.0, 2.0}, {1.0, 2.0}), Error);
  }
  SUBCASE("length mismatch") {
    CHECK_THROWS_AS(spearman({1.0, 2.0, 3.0}, {1.0, 2.0}), Error);
  }
}

TEST_CASE("quartiles use linear interpolation") {
  const QuartileSummary q = quartiles({3.0, 1.0, 4.0, 1.5, 9.0, 2.6, 5.3});
  CHECK(q.min == doctest::Approx(1.0));
  CHECK(q.q1 == doctest::Approx(2.05).epsilon(1e-12));
  CHECK(q.median == doctest::Approx(3.0).epsilon(1e-12));
  CHECK(q.q3 == doctest::Approx(4.65).epsilon(1e-12));
  CHECK(q.max == doctest::Approx(9.0));
  CHECK(q.count == 7);

  const QuartileSummary single = quartiles({42.0});
  CHECK(single.min == 42.0);
  CHECK(single.q1 == 42.0);
  CHECK(single.median == 42.0);
  CHECK(single.q3 == 42.0);
  CHECK(single.max == 42.0);

  CHECK_THROWS_AS(quartiles({}), Error);
}
