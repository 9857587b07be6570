#include "hhls/solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <utility>

#include "hhls/errors.hpp"

namespace hhls {

namespace {

// Consecutive residual increases that trigger the damping fallback.
constexpr int kOscillationSteps = 3;
// Energy decreases (beyond 10 tol_energy) tolerated before aborting.
constexpr int kMaxMonotonicityViolations = 20;
constexpr double kFallbackDamping = 0.5;

void normalize(std::vector<double>& v, double volume, double q) {
    double s = 0.0;
    for (double x : v) s += std::pow(x, q);
    const double norm = std::pow(volume * s, 1.0 / q);
    for (double& x : v) x /= norm;
}

double residual_from(const std::vector<double>& f, const std::vector<double>& u, double mu, double q) {
    // Uniform cell weights cancel in the ratio of weighted 2-norms.
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) {
        const double r = mu * std::pow(f[i], q - 1.0) - u[i];
        num += r * r;
        den += u[i] * u[i];
    }
    if (den == 0.0) return num == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
    return std::sqrt(num / den);
}

double sup_norm(const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

// The normalized fixed-point iteration on a prebuilt operator; no exponent range
// checks (callers validate).
SolveReport iterate(const KernelOperator& op, const GridFunction& init, double q, const SolverConfig& cfg) {
    const Grid& grid = op.grid();
    const double V = grid.cell_volume();
    SolveReport rep;
    rep.q = q;
    rep.spec = cfg.spec;
    for (double v : init.values) {
        if (!(v > 0.0)) throw UsageError("solver.init: initial guess must be strictly positive on the grid");
    }
    std::vector<double> f = init.values;
    normalize(f, V, q);

    double theta = cfg.damping;
    int rising = 0, violations = 0;
    double prev_res = std::numeric_limits<double>::infinity();
    double energy = 0.0, res = std::numeric_limits<double>::infinity();
    const double expo = 1.0 / (q - 1.0);
    std::vector<double> u;
    int it = 0;
    for (; it < cfg.max_iter; ++it) {
        u = op.apply(f);
        bool positive = true;
        for (double v : u) positive = positive && v > 0.0;
        if (!positive) {
            rep.diagnostic = "kernel not positivity-preserving: potential is non-positive at some cell";
            break;
        }
        double s = 0.0;
        for (std::size_t i = 0; i < f.size(); ++i) s += f[i] * u[i];
        energy = V * s;
        res = residual_from(f, u, energy, q);
        if (!rep.energy_trace.empty()) {
            const double prev = rep.energy_trace.back();
            if (energy - prev < -10.0 * cfg.tol_energy * std::abs(prev)) {
                ++violations;
                if (theta > kFallbackDamping) theta = kFallbackDamping;
            }
        }
        rep.energy_trace.push_back(energy);
        if (violations > kMaxMonotonicityViolations) {
            rep.diagnostic = "energy trace not monotone: aborted after repeated decreases";
            break;
        }
        const std::size_t m = rep.energy_trace.size();
        const double rel_change =
            m > 1 ? std::abs(energy - rep.energy_trace[m - 2]) / std::abs(energy) : std::numeric_limits<double>::infinity();
        if (rel_change < cfg.tol_energy && res < cfg.tol_residual) {
            rep.converged = true;
            break;
        }
        rising = res > prev_res ? rising + 1 : 0;
        prev_res = res;
        if (rising >= kOscillationSteps && theta > kFallbackDamping) {
            theta = kFallbackDamping;
            rising = 0;
        }
        for (std::size_t i = 0; i < f.size(); ++i) {
            const double next = std::pow(u[i], expo);
            f[i] = theta == 1.0 ? next : std::pow(f[i], 1.0 - theta) * std::pow(next, theta);
        }
        normalize(f, V, q);
    }
    rep.iterations = static_cast<int>(rep.energy_trace.size());
    if (!rep.converged && rep.diagnostic.empty()) rep.diagnostic = "not converged within max_iter";
    rep.solution = GridFunction(op.grid_ptr(), std::move(f));
    rep.multiplier = energy;
    rep.el_residual = res;
    rep.damping_used = theta;
    rep.extensions["monotonicity_violations"] = violations;
    return rep;
}

void check_subcritical_range(double q, const KernelSpec& spec, const char* what) {
    if (!(q > spec.q_alpha()) || !(q < 2.0)) {
        std::ostringstream os;
        os << what << ": q must lie in (q_alpha, 2) = (" << spec.q_alpha() << ", 2)";
        throw UsageError(os.str());
    }
}

std::size_t argmax_lowest(const std::vector<double>& v) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < v.size(); ++i) {
        if (v[i] > v[best]) best = i;
    }
    return best;
}

}  // namespace

void SolverConfig::validate() const {
    spec.validate();
    if (!(q > 1.0) || !std::isfinite(q)) throw UsageError("solver.q: must exceed 1");
    if (!(tol_residual > 0.0)) throw UsageError("solver.tol_residual: must be positive");
    if (!(tol_energy > 0.0)) throw UsageError("solver.tol_energy: must be positive");
    if (max_iter < 1) throw UsageError("solver.max_iter: must be a positive integer");
    if (!(damping > 0.0) || !(damping <= 1.0)) throw UsageError("solver.damping: must lie in (0, 1]");
    if (!(init_scale >= 0.0) || !std::isfinite(init_scale)) throw UsageError("solver.init_scale: must be nonnegative");
    if (init == Init::custom && !custom_init) throw UsageError("solver.init: custom init requires a grid function");
}

const char* init_name(SolverConfig::Init init) {
    switch (init) {
        case SolverConfig::Init::constant: return "constant";
        case SolverConfig::Init::truncated_H: return "truncated_H";
        case SolverConfig::Init::custom: return "custom";
    }
    return "constant";
}

SolverConfig::Init parse_init(const std::string& s) {
    if (s == "constant") return SolverConfig::Init::constant;
    if (s == "truncated_H") return SolverConfig::Init::truncated_H;
    if (s == "custom") return SolverConfig::Init::custom;
    throw UsageError("solver.init: must be one of constant, truncated_H, custom");
}

GridFunction initial_guess(const std::shared_ptr<const Grid>& grid, const SolverConfig& cfg) {
    if (!grid) throw UsageError("solver: grid is null");
    switch (cfg.init) {
        case SolverConfig::Init::constant:
            return GridFunction(grid, cfg.init_scale);
        case SolverConfig::Init::truncated_H: {
            const KernelSpec spec = cfg.spec;
            const double c = cfg.init_scale;
            return sample(grid, [&](const HPoint& p) { return c * extremal_H(p, spec); });
        }
        case SolverConfig::Init::custom:
            if (!cfg.custom_init || cfg.custom_init->grid != grid) {
                throw UsageError("solver.init: custom initial guess must live on the solver grid");
            }
            return GridFunction(grid, cfg.custom_init->values);
    }
    return GridFunction(grid, cfg.init_scale);
}

SolveReport solve_subcritical(const std::shared_ptr<const Grid>& grid, const SolverConfig& cfg) {
    cfg.validate();
    check_subcritical_range(cfg.q, cfg.spec, "solver.q");
    if (!grid) throw UsageError("solver: grid is null");
    if (grid->n() != cfg.spec.n) throw UsageError("solver: grid and kernel dimension differ");
    const KernelOperator op = KernelOperator::hls(grid, cfg.spec, cfg.op);
    return iterate(op, initial_guess(grid, cfg), cfg.q, cfg);
}

double el_residual(const KernelOperator& op, const GridFunction& f, double mu, double q) {
    if (f.grid != op.grid_ptr()) throw UsageError("el_residual: function and operator live on different grids");
    for (double v : f.values) {
        if (v < 0.0) throw UsageError("el_residual: f must be nonnegative");
    }
    return residual_from(f.values, op.apply(f.values), mu, q);
}

double el_residual(const GridFunction& f, double mu, const SolverConfig& cfg) {
    cfg.spec.validate();
    return el_residual(KernelOperator::hls(f.grid, cfg.spec, cfg.op), f, mu, cfg.q);
}

double pohozaev_coefficient(int n, double alpha, double p) {
    if (p == 0.0) throw UsageError("pohozaev: p must be nonzero");
    const double Q = 2.0 * n + 2.0;
    return Q / p + (alpha - Q) / 2.0;
}

double conjugate_exponent(double q) {
    if (!(q > 1.0)) throw UsageError("conjugate_exponent: q must exceed 1");
    return q / (q - 1.0);
}

GridFunction to_pohozaev_form(const GridFunction& g, double mu, double q) {
    const double p = conjugate_exponent(q);
    if (p == 2.0) throw UsageError("to_pohozaev_form: q = 2 has no rescaling to the multiplier-free form");
    if (!(mu > 0.0)) throw UsageError("to_pohozaev_form: multiplier must be positive");
    const double c = std::pow(mu, 1.0 / (2.0 - p));
    std::vector<double> F(g.size());
    for (std::size_t i = 0; i < F.size(); ++i) F[i] = c * std::pow(std::max(g.values[i], 0.0), q - 1.0);
    return GridFunction(g.grid, std::move(F));
}

PohozaevTerms pohozaev_residual(const GridFunction& f, double p, const KernelSpec& spec,
                                const std::vector<BoundaryNode>& boundary, BoundaryValues values,
                                OperatorOptions opts) {
    spec.validate();
    if (p == 0.0) throw UsageError("pohozaev: p must be nonzero");
    if (!f.grid) throw UsageError("pohozaev: function has no grid");
    if (f.grid->n() != spec.n) throw UsageError("pohozaev: grid and kernel dimension differ");
    const Grid& grid = *f.grid;
    auto fp = [p](double v) { return v > 0.0 ? std::pow(v, p) : 0.0; };

    PohozaevTerms r;
    double s = 0.0;
    for (double v : f.values) s += fp(v);
    r.lhs = pohozaev_coefficient(spec.n, spec.alpha, p) * grid.cell_volume() * s;

    if (spec.lambda != 0.0 && sup_norm(f.values) > 0.0) {
        std::vector<double> g(f.size());
        for (std::size_t i = 0; i < g.size(); ++i) g[i] = f.values[i] > 0.0 ? std::pow(f.values[i], p - 1.0) : 0.0;
        const KernelOperator op = KernelOperator::riesz(f.grid, spec, 1, opts);
        r.rhs_bulk = -0.5 * spec.lambda * op.energy(g);
    }

    std::optional<KernelOperator> rhs_op;
    std::vector<double> rhs_density;
    if (values == BoundaryValues::integral_extension && !boundary.empty()) {
        rhs_op.emplace(KernelOperator::hls(f.grid, spec, opts));
        rhs_density.resize(f.size());
        for (std::size_t i = 0; i < f.size(); ++i) {
            rhs_density[i] = f.values[i] > 0.0 ? std::pow(f.values[i], p - 1.0) : 0.0;
        }
    }
    double b = 0.0;
    for (const auto& node : boundary) {
        if (node.point.n() != spec.n) throw UsageError("pohozaev: boundary node dimension differs");
        const std::vector<double> E = euler_field(node.point);
        double en = 0.0;
        for (std::size_t a = 0; a < E.size(); ++a) en += E[a] * node.normal[a];
        const double value = rhs_op ? rhs_op->apply_at_point(node.point, rhs_density)
                                    : f.values[grid.nearest_cell(node.point)];
        b += node.weight * en * fp(value);
    }
    r.rhs_boundary = b / p;

    const double scale =
        std::max({std::abs(r.lhs), std::abs(r.rhs_boundary), std::numeric_limits<double>::epsilon()});
    r.rel_residual = std::abs(r.lhs - r.rhs_bulk - r.rhs_boundary) / scale;
    if (r.lhs == 0.0 && r.rhs_bulk == 0.0 && r.rhs_boundary == 0.0) r.rel_residual = 0.0;
    return r;
}

const char* verdict_name(ProbeResult::Verdict v) {
    switch (v) {
        case ProbeResult::Verdict::decayed: return "decayed";
        case ProbeResult::Verdict::non_convergent: return "non_convergent";
        case ProbeResult::Verdict::converged_nontrivial: return "converged_nontrivial";
    }
    return "non_convergent";
}

ProbeResult nonexistence_probe(const std::shared_ptr<const Grid>& grid, const KernelSpec& spec, double q,
                               const SolverConfig& cfg) {
    spec.validate();
    if (!grid) throw UsageError("probe: grid is null");
    if (grid->n() != spec.n) throw UsageError("probe: grid and kernel dimension differ");
    if (!(spec.lambda <= 0.0)) throw UsageError("probe.lambda: must be <= 0");
    if (!(q > 1.0) || !(q <= spec.q_alpha() * (1.0 + 1e-12))) throw UsageError("probe.q: must lie in (1, q_alpha]");
    SolverConfig c = cfg;
    c.spec = spec;
    c.q = q;
    c.validate();

    constexpr double kDecayed = 1e-10;
    constexpr double kDiverged = 1e150;
    ProbeResult out;
    out.starshaped = is_delta_starshaped(grid->domain(), 2000, 16);
    if (!out.starshaped) out.warning = "domain failed the delta-starshape sampling check";

    const KernelOperator op = KernelOperator::hls(grid, spec, cfg.op);
    std::vector<double> f = initial_guess(grid, c).values;
    for (double& v : f) v = std::max(v, 0.0);
    const double expo = 1.0 / (q - 1.0);
    double sup = sup_norm(f);
    out.sup_norm_trace.push_back(sup);
    if (sup < kDecayed) {
        out.verdict = ProbeResult::Verdict::decayed;
        return out;
    }
    std::vector<double> next(f.size());
    for (int it = 0; it < cfg.max_iter; ++it) {
        const std::vector<double> u = op.apply(f);
        for (std::size_t i = 0; i < f.size(); ++i) next[i] = u[i] > 0.0 ? std::pow(u[i], expo) : 0.0;
        double diff = 0.0;
        for (std::size_t i = 0; i < f.size(); ++i) diff = std::max(diff, std::abs(next[i] - f[i]));
        out.el_residual = residual_from(f, u, 1.0, q);
        f.swap(next);
        sup = sup_norm(f);
        out.sup_norm_trace.push_back(sup);
        out.iterations = it + 1;
        if (!std::isfinite(sup) || sup > kDiverged) {
            out.verdict = ProbeResult::Verdict::non_convergent;
            return out;
        }
        if (sup < kDecayed) {
            out.verdict = ProbeResult::Verdict::decayed;
            return out;
        }
        if (diff <= cfg.tol_energy * sup && out.el_residual < cfg.tol_residual) {
            out.verdict = ProbeResult::Verdict::converged_nontrivial;
            return out;
        }
    }
    out.verdict = ProbeResult::Verdict::non_convergent;
    return out;
}

RescaleResult blowup_rescale(const GridFunction& f, double q, const KernelSpec& spec) {
    spec.validate();
    if (!f.grid || f.size() == 0) throw UsageError("rescale: function has no cells");
    if (!(q > 1.0) || !(q < 2.0)) throw UsageError("rescale.q: must lie in (1, 2)");
    const std::size_t k = argmax_lowest(f.values);
    const double peak_value = f.values[k];
    if (!(peak_value > 0.0)) throw DegenerateInputError("rescale: f has no positive maximum");

    RescaleResult r;
    if (*std::min_element(f.values.begin(), f.values.end()) == peak_value) {
        r.warning = "f is constant: peak ill-defined, first cell chosen";
    }
    r.peak_index = k;
    r.peak = f.grid->center(k);
    r.peak_value = peak_value;
    r.mu = std::pow(peak_value, -(2.0 - q) / spec.alpha);

    const GaugeDomain& d = f.grid->domain();
    const HPoint peak = r.peak;
    const double mu = r.mu;
    if (d.kind() == GaugeDomain::Kind::cylinder) {
        // zeta o Sigma_R(0) maps to (delta_{1/mu}(peak^{-1} zeta)) o Sigma_{R/mu}(0).
        r.domain_map = GaugeDomain::cylinder(dilate(1.0 / mu, mul(inv(peak), d.center())), d.radius() / mu);
    } else {
        // Conservative box: z' = (z - z_p)/mu, t' = (t - t_p - twist(peak, xi))/mu^2.
        const auto D = static_cast<std::size_t>(2 * d.n());
        const Box& b = d.bbox();
        Box nb;
        nb.lo.resize(D + 1);
        nb.hi.resize(D + 1);
        const std::vector<double> pc = peak.coords();
        double tw = 0.0;
        for (std::size_t a = 0; a < D; ++a) {
            nb.lo[a] = (b.lo[a] - pc[a]) / mu;
            nb.hi[a] = (b.hi[a] - pc[a]) / mu;
            tw += 2.0 * std::abs(pc[a < D / 2 ? a + D / 2 : a - D / 2]) * std::max(std::abs(b.lo[a]), std::abs(b.hi[a]));
        }
        nb.lo[D] = (b.lo[D] - pc[D] - tw) / (mu * mu);
        nb.hi[D] = (b.hi[D] - pc[D] + tw) / (mu * mu);
        r.domain_map = GaugeDomain::indicator(
            d.n(), [d, peak, mu](const HPoint& s) { return d.contains(mul(peak, dilate(mu, s))); }, nb,
            "rescaled " + d.description());
    }
    std::ostringstream os;
    os.precision(17);
    os << "delta_{1/mu}(peak^{-1} Omega) = " << r.domain_map->description() << ", mu = " << mu;
    r.description = os.str();

    const std::shared_ptr<const Grid> grid = f.grid;
    const std::vector<double> values = f.values;
    r.g = [grid, values, peak, mu, peak_value](const HPoint& s) {
        const HPoint xi = mul(peak, dilate(mu, s));
        if (!grid->domain().contains(xi)) return 0.0;
        return values[grid->nearest_cell(xi)] / peak_value;
    };
    return r;
}

LambdaTermDiagnostic lambda_term_diagnostic(const KernelOperator& op0, const KernelOperator& op1,
                                            const GridFunction& f, double lambda, double q, double delta) {
    if (!(delta > 0.0)) throw UsageError("lambda_term.delta: must be positive");
    if (!(q > 1.0)) throw UsageError("lambda_term.q: must exceed 1");
    if (!std::isfinite(lambda)) throw UsageError("lambda_term.lambda: must be finite");
    if (!f.grid || f.size() == 0) throw UsageError("lambda_term: function has no cells");
    if (f.grid != op0.grid_ptr() || f.grid != op1.grid_ptr()) {
        throw UsageError("lambda_term: function and operators live on different grids");
    }
    LambdaTermDiagnostic r;
    r.peak_index = argmax_lowest(f.values);
    const double peak = f.values[r.peak_index];
    if (!(peak > 0.0)) throw DegenerateInputError("lambda_term: f has no positive maximum");
    if (lambda == 0.0) return r;
    const double i0 = op0.apply_at(r.peak_index, f.values);
    const double i1 = op1.apply_at(r.peak_index, f.values);
    r.peak_ratio = lambda * i1 / i0;
    r.bound = std::abs(lambda) * std::pow(peak, -delta) * std::pow(lq_norm(f, q), 2.0 - q + delta);
    return r;
}

LambdaTermDiagnostic lambda_term_diagnostic(const GridFunction& f, const KernelSpec& spec, double q, double delta,
                                            OperatorOptions opts) {
    spec.validate();
    if (!f.grid) throw UsageError("lambda_term: function has no grid");
    if (spec.lambda == 0.0) {
        // No kernel evaluation needed; still validate the arguments.
        if (!(delta > 0.0)) throw UsageError("lambda_term.delta: must be positive");
        if (!(q > 1.0)) throw UsageError("lambda_term.q: must exceed 1");
        LambdaTermDiagnostic r;
        r.peak_index = argmax_lowest(f.values);
        if (!(f.values[r.peak_index] > 0.0)) throw DegenerateInputError("lambda_term: f has no positive maximum");
        return r;
    }
    const KernelOperator op0 = KernelOperator::riesz(f.grid, spec, 0, opts);
    const KernelOperator op1 = KernelOperator::riesz(f.grid, spec, 1, opts);
    return lambda_term_diagnostic(op0, op1, f, spec.lambda, q, delta);
}

double lambda_term_magnitude(const GridFunction& f, const KernelSpec& spec, double q, double delta,
                             OperatorOptions opts) {
    return lambda_term_diagnostic(f, spec, q, delta, opts).peak_ratio;
}

SolveReport solve_critical_via_limit(const std::shared_ptr<const Grid>& grid, const KernelSpec& spec,
                                     const std::vector<double>& schedule, const SolverConfig& cfg) {
    spec.validate();
    if (!grid) throw UsageError("critical: grid is null");
    if (grid->n() != spec.n) throw UsageError("critical: grid and kernel dimension differ");
    if (!(spec.lambda > 0.0)) throw UsageError("critical.lambda: must be positive");
    if (schedule.empty()) throw UsageError("critical.schedule: must be nonempty");
    for (std::size_t k = 0; k < schedule.size(); ++k) {
        if (!(schedule[k] > 1.0) || !(schedule[k] < 2.0)) throw UsageError("critical.schedule: entries must lie in (1, 2)");
        if (k > 0 && !(schedule[k] < schedule[k - 1])) throw UsageError("critical.schedule: must be strictly decreasing");
    }
    const double qa = spec.q_alpha();
    if (std::abs(schedule.back() - qa) > 1e-12 * qa) throw UsageError("critical.schedule: last entry must equal q_alpha");
    if (!(schedule.front() >= qa)) throw UsageError("critical.schedule: entries must not lie below q_alpha");

    SolverConfig c = cfg;
    c.spec = spec;
    c.q = schedule.front();
    c.validate();
    const KernelOperator op = KernelOperator::hls(grid, spec, cfg.op);

    GridFunction current = initial_guess(grid, c);
    SolveReport rep;
    std::vector<double> stage_q, stage_mult;
    double max_jump = 0.0, last_sup_change = 0.0;
    int total_iterations = 0;
    for (std::size_t k = 0; k < schedule.size(); ++k) {
        c.q = schedule[k];
        SolveReport stage = iterate(op, current, c.q, c);
        total_iterations += stage.iterations;
        stage_q.push_back(c.q);
        stage_mult.push_back(stage.multiplier);
        if (k > 0) {
            const double prev = stage_mult[k - 1];
            max_jump = std::max(max_jump, std::abs(stage.multiplier - prev) / std::abs(prev));
            double d = 0.0;
            for (std::size_t i = 0; i < current.size(); ++i) {
                d = std::max(d, std::abs(stage.solution.values[i] - current.values[i]));
            }
            last_sup_change = d;
        }
        current = stage.solution;
        rep = std::move(stage);
        if (!rep.converged) {
            rep.failed_stage = static_cast<int>(k);
            rep.diagnostic = "stage " + std::to_string(k) + " (q = " + std::to_string(c.q) + "): " + rep.diagnostic;
            break;
        }
    }
    rep.stage_q = std::move(stage_q);
    rep.stage_multipliers = std::move(stage_mult);
    rep.iterations = total_iterations;
    const double D = sharp_constant(spec.n, spec.alpha);
    rep.extensions["sharp_constant"] = D;
    rep.extensions["multiplier_exceeds_sharp_constant"] = rep.converged && rep.multiplier > D ? 1.0 : 0.0;
    rep.extensions["max_adjacent_multiplier_jump"] = max_jump;
    rep.extensions["last_stage_sup_change"] = last_sup_change;
    if (rep.converged) {
        // The peak ratio does not depend on delta; only the bound surrogate does.
        rep.extensions["lambda_term_ratio"] = lambda_term_magnitude(rep.solution, spec, rep.q, 1.0, cfg.op);
    }
    return rep;
}

}  // namespace hhls
