#pragma once

// Riesz-type kernels |eta^{-1} xi|^{-(Q - alpha - s)} on grids, HLS energies and
// quotients, the sharp constant D_{n,alpha}, the extremal H and its conformal family.

#include <cstddef>
#include <cstdint>
#include <memory>
#include <vector>

#include "hhls/domain.hpp"
#include "hhls/hgroup.hpp"

namespace hhls {

struct KernelSpec {
    int n = 1;
    double alpha = 2.0;
    int shift = 0;  // s in {0, 1}
    double lambda = 0.0;

    KernelSpec() = default;
    KernelSpec(int n_, double alpha_, int shift_ = 0, double lambda_ = 0.0);

    int Q() const { return 2 * n + 2; }
    // Exponent Q - alpha - s of the kernel with shift s.
    double exponent(int s) const { return Q() - alpha - s; }
    double q_alpha() const { return 2.0 * Q() / (Q() + alpha); }
    double p_alpha() const { return 2.0 * Q() / (Q() - alpha); }
    // Throws UsageError naming the offending field.
    void validate() const;
};

struct GridFunction {
    std::shared_ptr<const Grid> grid;
    std::vector<double> values;

    GridFunction() = default;
    GridFunction(std::shared_ptr<const Grid> g, std::vector<double> v);
    GridFunction(std::shared_ptr<const Grid> g, double constant);

    std::size_t size() const { return values.size(); }
};

// Weighted grid pairing sum_i w_i f_i g_i.
double pairing(const GridFunction& f, const GridFunction& g);
// (sum_i w_i |f_i|^q)^(1/q).
double lq_norm(const GridFunction& f, double q);
// Samples a function at every cell center.
GridFunction sample(const std::shared_ptr<const Grid>& grid, const std::function<double(const HPoint&)>& fn);

double sharp_constant(int n, double alpha);
double extremal_H(const HPoint& p, const KernelSpec& spec);
// f_eps(xi) = eps^{-(Q+alpha)/2} H(delta_{1/eps}(zeta^{-1} xi)).
double conformal_family(const HPoint& p, double eps, const HPoint& zeta, const KernelSpec& spec);
// Lebesgue volume c_Q of the unit gauge ball; |B_r| = c_Q r^Q.
double gauge_ball_volume(int n);
// int_{B_r} |eta|^{-(Q - beta)} d eta = c_Q Q r^beta / beta for 0 < beta.
double gauge_ball_kernel_integral(int n, double beta, double r);

// One term coeff * |.|^{-gamma} of a kernel.
struct KernelTerm {
    double coeff = 1.0;
    double gamma = 2.0;
};

struct OperatorOptions {
    // Pairs (i, j) with max(|z_i - z_j|^2, |t-part of xi_j^{-1} xi_i|) <= near_factor * max(h_t, h^2)
    // (and all pairs in adjacent columns within that t-band) are integrated over the
    // source cell instead of sampled at its center.
    double near_factor = 3.0;
    // Degree of parallelism for apply(); ignored when deterministic.
    int threads = 1;
    // Sequential, fixed-order summation: bitwise reproducible results.
    bool deterministic = true;
};

// Discrete integral operator (P f)_i = sum_j W_ij f_j for a kernel sum_m coeff_m |eta^{-1}xi|^{-gamma_m}.
//
// W_ij is the cell-center (midpoint) value w_j K(xi_j^{-1} xi_i) for well separated
// pairs. For near pairs W_ij is the symmetrized integral of the kernel over the
// source cell (exact in t, Gauss in z) and the self weight W_ii is the exact
// integral over the cell's own box (Duffy-type radial rule around the center).
// All weights depend only on the column pair and the t-index difference, so they
// are tabulated per column. W is exactly symmetric.
class KernelOperator {
public:
    KernelOperator(std::shared_ptr<const Grid> grid, std::vector<KernelTerm> terms, OperatorOptions opts = {});

    // Kernel |.|^{-(Q - alpha - s)}.
    static KernelOperator riesz(std::shared_ptr<const Grid> grid, const KernelSpec& spec, int s,
                                OperatorOptions opts = {});
    // Kernel |.|^{-(Q - alpha)} + lambda |.|^{-(Q - alpha - 1)}.
    static KernelOperator hls(std::shared_ptr<const Grid> grid, const KernelSpec& spec, OperatorOptions opts = {});

    const Grid& grid() const { return *grid_; }
    const std::shared_ptr<const Grid>& grid_ptr() const { return grid_; }
    const std::vector<KernelTerm>& terms() const { return terms_; }

    std::vector<double> apply(const std::vector<double>& f) const;
    GridFunction apply(const GridFunction& f) const;
    // (P f)_i for a single cell, O(N).
    double apply_at(std::size_t i, const std::vector<double>& f) const;
    // Quadrature of the kernel integral at an arbitrary point p (e.g. on the boundary):
    // cell-integrated near p, midpoint elsewhere. O(N).
    double apply_at_point(const HPoint& p, const std::vector<double>& f) const;
    // sum_i w_i f_i (P f)_i.
    double energy(const std::vector<double>& f) const;

    // Reference value of W_ij (used by tests and for auditing).
    double pair_weight(std::size_t i, std::size_t j) const;
    double self_weight(std::size_t i) const;
    // Midpoint kernel value K(xi_j^{-1} xi_i) (without the cell weight); 0 for i == j.
    double kernel_value(std::size_t i, std::size_t j) const;
    std::size_t near_entry_count() const { return near_entries_.size(); }

private:
    struct NearEntry {
        std::int32_t column;  // source column
        std::int32_t dk;      // k_target - k_source
        double correction;    // W_ij - w_j K_mid
    };

    void build_coordinates();
    void build_near_tables();
    double kernel_from_g4(double g4) const;
    double cell_integral(std::size_t target_col, std::size_t source_col, int dk, bool own) const;
    double point_cell_integral(const double* zp, double tp, std::size_t source_cell) const;
    double near_correction_sum(std::size_t i, const std::vector<double>& f) const;
    void apply_far_symmetric(const std::vector<double>& f, std::vector<double>& acc) const;
    void apply_far_rows(const std::vector<double>& f, std::vector<double>& acc, std::size_t begin,
                        std::size_t end) const;
    double apply_far_row(std::size_t i, const std::vector<double>& f) const;

    std::shared_ptr<const Grid> grid_;
    std::vector<KernelTerm> terms_;
    OperatorOptions opts_;
    // SoA coordinates: zc_[a * N + i] for a in [0, 2n), tc_[i].
    std::vector<double> zc_;
    std::vector<double> tc_;
    std::vector<double> self_;                 // per column
    std::vector<std::size_t> near_offsets_;   // CSR over columns
    std::vector<NearEntry> near_entries_;
};

// Discrete I f with kernel exponent Q - alpha - spec.shift.
GridFunction potential(const GridFunction& f, const KernelSpec& spec, OperatorOptions opts = {});
// E_lambda[f] = <f, I_{s=0} f> + lambda <f, I_{s=1} f>.
double hls_energy(const GridFunction& f, const KernelSpec& spec, OperatorOptions opts = {});
// E_lambda[f] / ||f||_q^2.
double energy_quotient(const GridFunction& f, const KernelSpec& spec, double q, OperatorOptions opts = {});
double energy_quotient(const KernelOperator& op, const GridFunction& f, double q);

}  // namespace hhls
