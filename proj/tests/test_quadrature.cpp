#include <doctest.h>

#include <cmath>

#include "fragrate/quadrature.hpp"
#include "fragrate/roots.hpp"

using namespace fragrate;

TEST_CASE("adaptive quadrature on smooth and singular integrands") {
    CHECK(integrate([](double x) { return std::sin(x); }, 0.0, M_PI) ==
          doctest::Approx(2.0).epsilon(1e-12));
    CHECK(integrate([](double x) { return std::exp(-x); }, 0.0, 40.0) ==
          doctest::Approx(1.0).epsilon(1e-11));
    // integrable endpoint singularity x^{-1/2}
    CHECK(integrate([](double x) { return 1.0 / std::sqrt(x); }, 0.0, 1.0, 1e-10, 0.0,
                    100000) == doctest::Approx(2.0).epsilon(1e-9));
    // oscillatory
    CHECK(integrate([](double x) { return std::cos(10.0 * x); }, 0.0, 1.0) ==
          doctest::Approx(std::sin(10.0) / 10.0).epsilon(1e-11));
}

TEST_CASE("quadrature failure is reported, not silently accepted") {
    // x^{-0.999} needs far more refinement than a 12-interval budget allows
    CHECK_THROWS_AS(integrate([](double x) { return std::pow(x, -0.999); }, 0.0, 1.0, 1e-10,
                              0.0, 12),
                    QuadratureError);
}

TEST_CASE("bisection and expanding bracket") {
    const auto f = [](double x) { return x * x - 2.0; };
    CHECK(bisect(f, 0.0, 2.0) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-13));
    CHECK(find_root_expanding_up(f, 0.0, 0.25, 100.0) ==
          doctest::Approx(std::sqrt(2.0)).epsilon(1e-13));
    CHECK_THROWS_AS(bisect(f, 3.0, 4.0), RootBracketError);
    CHECK_THROWS_AS(find_root_expanding_up([](double) { return 1.0; }, 0.0, 1.0, 50.0),
                    RootBracketError);
}
