#pragma once

// Normalized fixed-point iteration for the Euler-Lagrange integral equation
//   mu f^{q-1} = I_alpha f + lambda I_{alpha+1} f,   ||f||_q = 1,
// its residual, the Pohozaev identity check, the nonexistence diagnostic, the
// critical-limit continuation, and blow-up rescaling diagnostics.

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "hhls/domain.hpp"
#include "hhls/hgroup.hpp"
#include "hhls/kernel.hpp"

namespace hhls {

struct SolverConfig {
    enum class Init { constant, truncated_H, custom };

    double q = 1.8;
    KernelSpec spec{};
    double tol_residual = 1e-8;
    double tol_energy = 1e-12;
    int max_iter = 500;
    double damping = 1.0;  // theta in (0, 1]
    Init init = Init::constant;
    std::optional<GridFunction> custom_init;
    // Amplitude of the constant / truncated-H initial guess (used unnormalized by
    // the nonexistence probe).
    double init_scale = 1.0;
    OperatorOptions op{};

    // Range checks independent of the operation (q > 1, tolerances, damping, ...).
    void validate() const;
};

const char* init_name(SolverConfig::Init init);
SolverConfig::Init parse_init(const std::string& s);

struct SolveReport {
    GridFunction solution;   // normalized, ||f||_q = 1
    double multiplier = 0.0; // E_lambda[solution]
    std::vector<double> energy_trace;
    double el_residual = 0.0;
    int iterations = 0;
    bool converged = false;

    double q = 0.0;
    KernelSpec spec{};
    double damping_used = 1.0;
    std::string diagnostic;  // empty on clean convergence
    // Additional scalar diagnostics (stage data, monotonicity violations, ...).
    std::map<std::string, double> extensions;
    // Continuation only: multiplier per stage and the first failing stage (-1 if none).
    std::vector<double> stage_q;
    std::vector<double> stage_multipliers;
    int failed_stage = -1;
};

// Initial guess per cfg.init, scaled by cfg.init_scale.
GridFunction initial_guess(const std::shared_ptr<const Grid>& grid, const SolverConfig& cfg);

// Requires q_alpha < cfg.q < 2.
SolveReport solve_subcritical(const std::shared_ptr<const Grid>& grid, const SolverConfig& cfg);

// ||mu f^{q-1} - P f|| / ||P f|| in the weighted 2-norm, P the lambda-operator of cfg.spec.
double el_residual(const GridFunction& f, double mu, const SolverConfig& cfg);
double el_residual(const KernelOperator& op, const GridFunction& f, double mu, double q);

struct PohozaevTerms {
    double lhs = 0.0;
    double rhs_bulk = 0.0;
    double rhs_boundary = 0.0;
    double rel_residual = 0.0;
};

// How f is evaluated at boundary quadrature points.
enum class BoundaryValues {
    nearest_cell,        // value of the nearest grid cell
    integral_extension,  // right-hand side of the integral equation evaluated at the point
};

// Terms of the Pohozaev identity for a solution f of f = I_alpha f^{p-1} + lambda I_{alpha+1} f^{p-1}.
// The lambda double integral uses the kernel exponent Q - alpha - 1.
PohozaevTerms pohozaev_residual(const GridFunction& f, double p, const KernelSpec& spec,
                                const std::vector<BoundaryNode>& boundary,
                                BoundaryValues values = BoundaryValues::integral_extension, OperatorOptions opts = {});

// Q/p + (alpha - Q)/2.
double pohozaev_coefficient(int n, double alpha, double p);

// Maps a solution g of mu g^{q-1} = P g to the solution F = mu^{1/(2-p)} g^{q-1}
// of F = P F^{p-1}, with p = q/(q-1).
GridFunction to_pohozaev_form(const GridFunction& g, double mu, double q);
double conjugate_exponent(double q);

struct ProbeResult {
    enum class Verdict { decayed, non_convergent, converged_nontrivial };
    std::vector<double> sup_norm_trace;
    Verdict verdict = Verdict::non_convergent;
    int iterations = 0;
    double el_residual = 0.0;  // fixed-point residual of the final iterate (mu = 1)
    bool starshaped = true;
    std::string warning;
};

const char* verdict_name(ProbeResult::Verdict v);

// Classifies the trajectory of the un-normalized map f <- (P f)_+^{1/(q-1)} from
// the initial guess of cfg. Requires spec.lambda <= 0 and 1 < q <= q_alpha.
ProbeResult nonexistence_probe(const std::shared_ptr<const Grid>& grid, const KernelSpec& spec, double q,
                               const SolverConfig& cfg);

struct RescaleResult {
    double mu = 0.0;
    std::size_t peak_index = 0;
    HPoint peak;
    double peak_value = 0.0;
    // g(s) = f(peak . delta_mu(s)) / f(peak), nearest-cell lookup; 0 outside the domain.
    std::function<double(const HPoint&)> g;
    // Rescaled domain delta_{1/mu}(peak^{-1} Omega).
    std::optional<GaugeDomain> domain_map;
    std::string description;
    std::string warning;
};

RescaleResult blowup_rescale(const GridFunction& f, double q, const KernelSpec& spec);

struct LambdaTermDiagnostic {
    double peak_ratio = 0.0;  // lambda (I_{alpha+1} f)(peak) / (I_alpha f)(peak)
    double bound = 0.0;       // |lambda| f(peak)^{-delta} ||f||_q^{2-q+delta}
    std::size_t peak_index = 0;
};

LambdaTermDiagnostic lambda_term_diagnostic(const GridFunction& f, const KernelSpec& spec, double q, double delta,
                                            OperatorOptions opts = {});
// Same with prebuilt operators for the kernel exponents Q - alpha (op0) and Q - alpha - 1 (op1).
LambdaTermDiagnostic lambda_term_diagnostic(const KernelOperator& op0, const KernelOperator& op1,
                                            const GridFunction& f, double lambda, double q, double delta);
// The peak ratio of lambda_term_diagnostic.
double lambda_term_magnitude(const GridFunction& f, const KernelSpec& spec, double q, double delta,
                             OperatorOptions opts = {});

// Solves along a strictly decreasing q-schedule ending at q_alpha (lambda > 0),
// warm-starting every stage from the previous solution.
SolveReport solve_critical_via_limit(const std::shared_ptr<const Grid>& grid, const KernelSpec& spec,
                                     const std::vector<double>& schedule, const SolverConfig& cfg);

}  // namespace hhls
