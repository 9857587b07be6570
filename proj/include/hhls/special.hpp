#pragma once

// Special functions and one-dimensional quadrature used by the kernel module.

#include <vector>

namespace hhls {

// Euler Gamma for x > 0. Exact products at integers and half-integers,
// Lanczos (g = 7, 9 terms) elsewhere; relative error below 1e-13 on (0, 50].
double gamma_fn(double x);

struct GaussRule {
    std::vector<double> nodes;    // on [-1, 1], ascending
    std::vector<double> weights;  // positive, sum to 2
};

// m-point Gauss-Legendre rule on [-1, 1] (Newton iteration on P_m).
GaussRule gauss_legendre(int m);

// F_p(x) = int_0^x (1 + v^2)^(-p) dv, odd in x, for p > 0.
double power_primitive(double p, double x);

// W_p(A; lo, hi) = int_lo^hi (A + u^2)^(-p) du for A >= 0, lo <= hi, p > 0.
// A = 0 is allowed only when the interval does not contain 0 (or p < 1/2).
// This is the exact integral of the gauge kernel |(w, u)|^(-4p) along a
// t-segment at fixed z-offset with |w|^4 = A.
double power_window(double p, double A, double lo, double hi);

}  // namespace hhls
