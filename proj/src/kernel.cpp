#include "hhls/kernel.hpp"

#include <cmath>
#include <numbers>
#include <string>
#include <utility>

#include "hhls/errors.hpp"
#include "hhls/special.hpp"

namespace hhls {

KernelSpec::KernelSpec(int n_, double alpha_, int shift_, double lambda_)
    : n(n_), alpha(alpha_), shift(shift_), lambda(lambda_) {
    validate();
}

void KernelSpec::validate() const {
    if (n < 1) throw UsageError("kernel.n: must be a positive integer");
    if (!(alpha > 0.0) || !(alpha < Q())) {
        throw UsageError("kernel.alpha: must lie in (0, Q) with Q = 2n+2 = " + std::to_string(Q()));
    }
    if (shift != 0 && shift != 1) throw UsageError("kernel.shift: must be 0 or 1");
    if (shift == 1 && !(alpha + 1.0 < Q())) throw UsageError("kernel.alpha: shift 1 requires alpha + 1 < Q");
    if (!std::isfinite(lambda)) throw UsageError("kernel.lambda: must be finite");
    if (lambda != 0.0 && !(alpha + 1.0 < Q())) {
        throw UsageError("kernel.lambda: a nonzero lambda requires alpha + 1 < Q");
    }
}

GridFunction::GridFunction(std::shared_ptr<const Grid> g, std::vector<double> v)
    : grid(std::move(g)), values(std::move(v)) {
    if (!grid) throw UsageError("GridFunction: grid is null");
    if (values.size() != grid->size()) throw UsageError("GridFunction: values length must equal the cell count");
    for (double x : values) {
        if (!std::isfinite(x)) throw UsageError("GridFunction: values must be finite");
    }
}

GridFunction::GridFunction(std::shared_ptr<const Grid> g, double constant)
    : GridFunction(g, std::vector<double>(g ? g->size() : 0, constant)) {}

double pairing(const GridFunction& f, const GridFunction& g) {
    if (f.grid != g.grid) throw UsageError("pairing: functions live on different grids");
    double s = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) s += f.values[i] * g.values[i];
    return f.grid->cell_volume() * s;
}

double lq_norm(const GridFunction& f, double q) {
    if (!(q > 0.0)) throw UsageError("lq_norm: q must be positive");
    double s = 0.0;
    for (double v : f.values) s += std::pow(std::abs(v), q);
    return std::pow(f.grid->cell_volume() * s, 1.0 / q);
}

GridFunction sample(const std::shared_ptr<const Grid>& grid, const std::function<double(const HPoint&)>& fn) {
    std::vector<double> v(grid->size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = fn(grid->center(i));
    return GridFunction(grid, std::move(v));
}

double sharp_constant(int n, double alpha) {
    if (n < 1) throw UsageError("sharp_constant: n must be a positive integer");
    const double Q = 2.0 * n + 2.0;
    if (!(alpha > 0.0) || !(alpha < Q)) throw UsageError("sharp_constant: alpha must lie in (0, Q)");
    const double pi = std::numbers::pi;
    const double nfact = gamma_fn(n + 1.0);
    const double base = std::pow(pi, n + 1.0) / (std::pow(2.0, n - 1.0) * nfact);
    const double g = gamma_fn((Q + alpha) / 4.0);
    return std::pow(base, (Q - alpha) / Q) * nfact * gamma_fn(alpha / 2.0) / (g * g);
}

double extremal_H(const HPoint& p, const KernelSpec& spec) {
    if (p.n() != spec.n) throw UsageError("extremal_H: dimension mismatch");
    const double a = 1.0 + p.z_norm2();
    return std::pow(a * a + p.t() * p.t(), -(spec.Q() + spec.alpha) / 4.0);
}

double conformal_family(const HPoint& p, double eps, const HPoint& zeta, const KernelSpec& spec) {
    if (!(eps > 0.0)) throw UsageError("conformal_family: eps must be positive");
    const HPoint q = dilate(1.0 / eps, mul(inv(zeta), p));
    return std::pow(eps, -(spec.Q() + spec.alpha) / 2.0) * extremal_H(q, spec);
}

double gauge_ball_volume(int n) {
    if (n < 1) throw UsageError("gauge_ball_volume: n must be a positive integer");
    // |B_1| = 2 |S^{2n-1}| int_0^1 rho^{2n-1} sqrt(1 - rho^4) d rho = (pi^n / Gamma(n)) B(n/2, 3/2).
    const double half = n / 2.0;
    return std::pow(std::numbers::pi, n) * gamma_fn(half) * gamma_fn(1.5) / (gamma_fn(n) * gamma_fn(half + 1.5));
}

double gauge_ball_kernel_integral(int n, double beta, double r) {
    if (!(beta > 0.0)) throw UsageError("gauge_ball_kernel_integral: beta must be positive");
    const double Q = 2.0 * n + 2.0;
    return gauge_ball_volume(n) * Q * std::pow(r, beta) / beta;
}

GridFunction potential(const GridFunction& f, const KernelSpec& spec, OperatorOptions opts) {
    spec.validate();
    return KernelOperator::riesz(f.grid, spec, spec.shift, opts).apply(f);
}

double hls_energy(const GridFunction& f, const KernelSpec& spec, OperatorOptions opts) {
    spec.validate();
    return KernelOperator::hls(f.grid, spec, opts).energy(f.values);
}

double energy_quotient(const KernelOperator& op, const GridFunction& f, double q) {
    if (!(q > 1.0)) throw UsageError("energy_quotient: q must exceed 1");
    const double norm = lq_norm(f, q);
    if (!(norm > 0.0)) throw UsageError("energy_quotient: f is identically zero");
    return op.energy(f.values) / (norm * norm);
}

double energy_quotient(const GridFunction& f, const KernelSpec& spec, double q, OperatorOptions opts) {
    spec.validate();
    if (!(q > 1.0)) throw UsageError("energy_quotient: q must exceed 1");
    if (!(lq_norm(f, q) > 0.0)) throw UsageError("energy_quotient: f is identically zero");
    return energy_quotient(KernelOperator::hls(f.grid, spec, opts), f, q);
}

}  // namespace hhls
