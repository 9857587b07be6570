#include <doctest.h>

#include <cmath>
#include <functional>
#include <numbers>

#include "hhls/errors.hpp"
#include "hhls/special.hpp"

using namespace hhls;

namespace {

// Adaptive Simpson quadrature: an oracle independent of the closed forms under test.
double simpson(const std::function<double(double)>& f, double a, double b, double fa, double fm, double fb,
               double whole, double tol, int depth) {
    const double m = 0.5 * (a + b), lm = 0.5 * (a + m), rm = 0.5 * (m + b);
    const double flm = f(lm), frm = f(rm);
    const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    if (depth <= 0 || std::abs(left + right - whole) <= 15.0 * tol) return left + right + (left + right - whole) / 15.0;
    return simpson(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1) +
           simpson(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1);
}

// Relative tolerance `rel`, scaled by a composite-Simpson estimate of the magnitude.
double integrate(const std::function<double(double)>& f, double a, double b, double rel = 1e-13) {
    const int k = 2000;
    double rough = 0.0;
    for (int i = 0; i < k; ++i) {
        const double l = a + (b - a) * i / k, r = a + (b - a) * (i + 1) / k;
        rough += (r - l) / 6.0 * (std::abs(f(l)) + 4.0 * std::abs(f(0.5 * (l + r))) + std::abs(f(r)));
    }
    const double fa = f(a), fb = f(b), fm = f(0.5 * (a + b));
    return simpson(f, a, b, fa, fm, fb, (b - a) / 6.0 * (fa + 4.0 * fm + fb), rel * rough, 40);
}

}  // namespace

TEST_CASE("gamma exact values") {
    CHECK(gamma_fn(1.0) == 1.0);
    CHECK(gamma_fn(5.0) == 24.0);
    CHECK(gamma_fn(0.5) == doctest::Approx(std::sqrt(std::numbers::pi)).epsilon(1e-15));
    CHECK(gamma_fn(1.5) == doctest::Approx(0.5 * std::sqrt(std::numbers::pi)).epsilon(1e-15));
    CHECK(gamma_fn(20.0) == doctest::Approx(121645100408832000.0).epsilon(1e-15));
}

TEST_CASE("gamma against high-precision references") {
    // Values computed with mpmath at 25 significant digits.
    const struct {
        double x, value;
    } ref[] = {
        {0.25, 3.625609908221908311930685},  {1.25, 0.9064024770554770779826713},
        {0.1, 9.513507698668731836292487},   {7.3, 1271.423633663909273057994},
        {23.7, 1.004614182758536763178625e22}, {49.5, 8.667601843135272345284354e+61},
        {50.0, 6.082818640342675608722522e+62},
    };
    for (const auto& r : ref) {
        CAPTURE(r.x);
        CHECK(std::abs(gamma_fn(r.x) - r.value) <= 1e-13 * r.value);
    }
}

TEST_CASE("gamma agrees with the C library on (0, 50]") {
    for (double x = 0.013; x <= 50.0; x += 0.0731) {
        CAPTURE(x);
        const double ref = std::tgamma(x);
        CHECK(std::abs(gamma_fn(x) - ref) <= 1e-12 * ref);
    }
}

TEST_CASE("gamma rejects non-positive arguments") {
    CHECK_THROWS_AS(gamma_fn(0.0), UsageError);
    CHECK_THROWS_AS(gamma_fn(-1.5), UsageError);
    CHECK_THROWS_AS(gamma_fn(std::nan("")), UsageError);
}

TEST_CASE("Gauss-Legendre rules") {
    for (int m : {1, 2, 5, 12, 24}) {
        const GaussRule g = gauss_legendre(m);
        REQUIRE(g.nodes.size() == static_cast<std::size_t>(m));
        double sum = 0.0;
        for (double w : g.weights) {
            CHECK(w > 0.0);
            sum += w;
        }
        CHECK(sum == doctest::Approx(2.0).epsilon(1e-14));
        // Exact for polynomials of degree 2m - 1.
        for (int k = 0; k <= 2 * m - 1; ++k) {
            double q = 0.0;
            for (int i = 0; i < m; ++i) q += g.weights[i] * std::pow(g.nodes[i], k);
            const double exact = (k % 2 == 1) ? 0.0 : 2.0 / (k + 1);
            CHECK(q == doctest::Approx(exact).epsilon(1e-13).scale(1.0));
        }
        for (int i = 1; i < m; ++i) CHECK(g.nodes[i] > g.nodes[i - 1]);
    }
    CHECK_THROWS_AS(gauss_legendre(0), UsageError);
}

TEST_CASE("power primitive") {
    CHECK(power_primitive(0.75, 0.0) == 0.0);
    CHECK(power_primitive(0.75, 3.0) == doctest::Approx(1.485630472160835668600726).epsilon(1e-13));
    CHECK(power_primitive(1.0, 2.0) == doctest::Approx(std::atan(2.0)).epsilon(1e-14));
    CHECK(power_primitive(1.3, -1.7) == doctest::Approx(-power_primitive(1.3, 1.7)).epsilon(1e-15));
    for (double p : {0.2, 0.5, 0.75, 1.25, 2.5, 4.0}) {
        for (double x : {0.01, 0.4, 1.0, 1.05, 3.0, 25.0}) {
            CAPTURE(p);
            CAPTURE(x);
            const double ref = integrate([p](double v) { return std::pow(1.0 + v * v, -p); }, 0.0, x);
            CHECK(power_primitive(p, x) == doctest::Approx(ref).epsilon(1e-10));
        }
    }
    // Large-argument limit for p > 1/2: F_{5/2}(inf) = 2/3.
    CHECK(power_primitive(2.5, 1e8) == doctest::Approx(2.0 / 3.0).epsilon(1e-14));
    CHECK_THROWS_AS(power_primitive(0.0, 1.0), UsageError);
}

TEST_CASE("power window") {
    CHECK(power_window(1.5, 0.3, -0.2, 0.9) == doctest::Approx(3.990797888207555976899578).epsilon(1e-12));
    CHECK(power_window(1.25, 0.0, 0.5, 2.0) == doctest::Approx(1.649915822768610890268637).epsilon(1e-12));
    CHECK(power_window(1.0, 1.0, 1.0, 1.0) == 0.0);
    for (double p : {0.25, 0.75, 1.5, 2.75}) {
        for (double A : {1e-3, 0.2, 1.0, 40.0}) {
            CAPTURE(p);
            CAPTURE(A);
            const double lo = -0.7, hi = 1.9;
            const double ref = integrate([p, A](double u) { return std::pow(A + u * u, -p); }, lo, hi, 1e-14);
            CHECK(power_window(p, A, lo, hi) == doctest::Approx(ref).epsilon(1e-9));
        }
    }
    CHECK_THROWS_AS(power_window(0.0, 1.0, 0.0, 1.0), UsageError);
    CHECK_THROWS_AS(power_window(1.0, -1.0, 0.0, 1.0), UsageError);
    CHECK_THROWS_AS(power_window(1.0, 1.0, 1.0, 0.0), UsageError);
}
