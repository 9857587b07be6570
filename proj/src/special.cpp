#include "hhls/special.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "hhls/errors.hpp"

namespace hhls {

namespace {

constexpr double kPi = std::numbers::pi;

// Lanczos coefficients for g = 7, n = 9.
constexpr double kLanczosG = 7.0;
constexpr double kLanczos[9] = {0.99999999999980993,  676.5203681218851,     -1259.1392167224028,
                                 771.32342877765313,   -176.61502916214059,   12.507343278686905,
                                 -0.13857109526572012, 9.9843695780195716e-6, 1.5056327351493116e-7};

double lanczos_gamma(double x) {
    if (x < 0.5) return kPi / (std::sin(kPi * x) * lanczos_gamma(1.0 - x));
    x -= 1.0;
    double a = kLanczos[0];
    const double t = x + kLanczosG + 0.5;
    for (int i = 1; i < 9; ++i) a += kLanczos[i] / (x + i);
    // Split the power so that t^(x+1/2) does not overflow before exp(-t) is applied.
    const double half = std::pow(t, 0.5 * (x + 0.5));
    return std::sqrt(2.0 * kPi) * half * (a * std::exp(-t)) * half;
}

// Sum of the series sum_k c_k w^k driven by the term ratio r(k) = c_{k+1}/c_k.
template <class Ratio>
double ratio_series(double w, Ratio ratio) {
    double term = 1.0, sum = 1.0;
    for (int k = 0; k < 400; ++k) {
        term *= ratio(k) * w;
        sum += term;
        if (std::abs(term) <= 1e-17 * std::abs(sum)) break;
    }
    return sum;
}

// For a = p - 1/2 != 0: S(s) = 1/a + sum_{k>=1} e_k s^k / (a + k), e_k = (1/2)_k / k!.
// Then s^a S(s) is a primitive of (1/2)^{-1} s^{a-1} (1-s)^{-1/2}.
double shifted_series(double a, double s) {
    double e = 1.0, pw = 1.0, sum = 0.0;
    for (int k = 1; k < 400; ++k) {
        e *= (k - 0.5) / k;
        pw *= s;
        const double term = e * pw / (a + k);
        sum += term;
        if (term <= 1e-17 * std::abs(sum + 1.0 / a)) break;
    }
    return sum;
}

// G(s1) - G(s0) with G(s) = s^a (1/a + sum_k e_k s^k/(a+k)), evaluated without the
// 1/a cancellation so that a -> 0 is harmless. Requires 0 < s0 <= s1 <= 1/2.
double primitive_difference(double a, double s0, double s1) {
    const double lr = std::log(s1 / s0);
    const double lead = (a == 0.0) ? lr : std::pow(s0, a) * std::expm1(a * lr) / a;
    double e = 1.0, p0 = std::pow(s0, a), p1 = std::pow(s1, a), sum = 0.0;
    for (int k = 1; k < 400; ++k) {
        e *= (k - 0.5) / k;
        p0 *= s0;
        p1 *= s1;
        const double term = e * (p1 - p0) / (a + k);
        sum += term;
        if (std::abs(term) <= 1e-17 * std::abs(sum + lead)) break;
    }
    return lead + sum;
}

// F_p(x) for 0 <= x <= 1 via the Pfaff-transformed hypergeometric series in w = x^2/(1+x^2) <= 1/2.
double primitive_small(double p, double x) {
    const double w = x * x / (1.0 + x * x);
    const double b = 1.5 - p;
    const double s = ratio_series(w, [b](int k) { return (b + k) * (0.5 + k) / ((1.5 + k) * (1.0 + k)); });
    return x / std::sqrt(1.0 + x * x) * s;
}

double primitive_at_infinity(double p) {
    return std::sqrt(kPi) * gamma_fn(p - 0.5) / (2.0 * gamma_fn(p));
}

// G(s) = s^a (1/a + sum_k e_k s^k / (a + k)) for a != 0.
double shifted_primitive(double a, double s) { return std::pow(s, a) * (1.0 / a + shifted_series(a, s)); }

// p-dependent constants of the primitives, cached per thread for the most recent p.
struct PowerConstants {
    double p = -1.0;
    double f_one = 0.0;     // F_p(1)
    double g_half = 0.0;    // G(1/2), a = p - 1/2
    double f_inf = 0.0;     // F_p(inf) for p > 1/2
};

const PowerConstants& power_constants(double p) {
    thread_local PowerConstants c;
    if (c.p != p) {
        c.p = p;
        c.f_one = primitive_small(p, 1.0);
        const double a = p - 0.5;
        c.g_half = a != 0.0 ? shifted_primitive(a, 0.5) : 0.0;
        c.f_inf = p > 0.5 ? primitive_at_infinity(p) : 0.0;
    }
    return c;
}

// Below this |p - 1/2| the difference G(1/2) - G(s) is formed without the 1/a cancellation.
constexpr double kSmallShift = 0.05;

// int_u^inf (A + v^2)^(-p) dv for p > 1/2, u >= 0.
double power_tail(double p, double A, double u) {
    const double a = p - 0.5;
    if (A == 0.0) return std::pow(u, -2.0 * a) / (2.0 * a);
    const double s = A / (A + u * u);
    if (s <= 0.5) {
        return 0.5 * std::pow(A + u * u, -a) * (1.0 / a + shifted_series(a, s));
    }
    return std::pow(A, -a) * (power_constants(p).f_inf - power_primitive(p, u / std::sqrt(A)));
}

// Phi(u) = int_0^u (A + v^2)^(-p) dv for u >= 0.
double power_partial(double p, double A, double u) {
    if (A == 0.0) {
        if (p >= 0.5) return std::numeric_limits<double>::infinity();
        return std::pow(u, 1.0 - 2.0 * p) / (1.0 - 2.0 * p);
    }
    const double r = std::sqrt(A);
    if (p == 0.5) return std::asinh(u / r);
    return std::pow(A, 0.5 - p) * power_primitive(p, u / r);
}

}  // namespace

double gamma_fn(double x) {
    if (!(x > 0.0) || !std::isfinite(x)) {
        throw UsageError("gamma_fn: argument must be a positive finite real, got " + std::to_string(x));
    }
    if (x <= 171.0 && x == std::floor(x)) {
        double r = 1.0;
        for (int k = 2; k < static_cast<int>(x); ++k) r *= k;
        return r;
    }
    const double twice = 2.0 * x;
    if (x <= 171.0 && twice == std::floor(twice)) {
        double r = std::sqrt(kPi);
        for (double k = 0.5; k < x; k += 1.0) r *= k;
        return r;
    }
    return lanczos_gamma(x);
}

GaussRule gauss_legendre(int m) {
    if (m < 1) throw UsageError("gauss_legendre: m must be >= 1");
    GaussRule rule;
    rule.nodes.resize(static_cast<std::size_t>(m));
    rule.weights.resize(static_cast<std::size_t>(m));
    for (int i = 0; i < (m + 1) / 2; ++i) {
        double z = std::cos(kPi * (i + 0.75) / (m + 0.5));
        double dp = 0.0;
        for (int it = 0; it < 100; ++it) {
            double p0 = 1.0, p1 = 0.0;
            for (int k = 1; k <= m; ++k) {
                const double p2 = p1;
                p1 = p0;
                p0 = ((2.0 * k - 1.0) * z * p1 - (k - 1.0) * p2) / k;
            }
            dp = m * (z * p0 - p1) / (z * z - 1.0);
            const double dz = p0 / dp;
            z -= dz;
            if (std::abs(dz) < 1e-16) break;
        }
        const double w = 2.0 / ((1.0 - z * z) * dp * dp);
        rule.nodes[static_cast<std::size_t>(i)] = -z;
        rule.nodes[static_cast<std::size_t>(m - 1 - i)] = z;
        rule.weights[static_cast<std::size_t>(i)] = w;
        rule.weights[static_cast<std::size_t>(m - 1 - i)] = w;
    }
    if (m % 2 == 1) rule.nodes[static_cast<std::size_t>(m / 2)] = 0.0;
    return rule;
}

double power_primitive(double p, double x) {
    if (!(p > 0.0)) throw UsageError("power_primitive: p must be positive");
    if (x < 0.0) return -power_primitive(p, -x);
    if (p == 0.5) return std::asinh(x);
    if (x <= 1.0) return primitive_small(p, x);
    // Tail beyond v = 1 written with s = 1/(1 + v^2) in [s_x, 1/2].
    const double a = p - 0.5;
    const double sx = 1.0 / (1.0 + x * x);
    const PowerConstants& c = power_constants(p);
    if (std::abs(a) < kSmallShift) return c.f_one + 0.5 * primitive_difference(a, sx, 0.5);
    return c.f_one + 0.5 * (c.g_half - shifted_primitive(a, sx));
}

double power_window(double p, double A, double lo, double hi) {
    if (!(p > 0.0)) throw UsageError("power_window: p must be positive");
    if (A < 0.0) throw UsageError("power_window: A must be nonnegative");
    if (hi < lo) throw UsageError("power_window: empty interval");
    if (hi == lo) return 0.0;
    if (lo < 0.0 && hi > 0.0) return power_partial(p, A, hi) + power_partial(p, A, -lo);
    if (hi <= 0.0) return power_window(p, A, -hi, -lo);
    // Now 0 <= lo < hi.
    if (p > 0.5) {
        if (A == 0.0 && lo == 0.0) return std::numeric_limits<double>::infinity();
        return power_tail(p, A, lo) - power_tail(p, A, hi);
    }
    if (A == 0.0) {
        if (p == 0.5) return std::log(hi / lo);
        return (std::pow(hi, 1.0 - 2.0 * p) - std::pow(lo, 1.0 - 2.0 * p)) / (1.0 - 2.0 * p);
    }
    if (p == 0.5) {
        const double r = std::sqrt(A);
        return std::asinh(hi / r) - std::asinh(lo / r);
    }
    return power_partial(p, A, hi) - power_partial(p, A, lo);
}

}  // namespace hhls
