#include <algorithm>
#include <cmath>
#include <thread>
#include <utility>

#include "hhls/errors.hpp"
#include "hhls/kernel.hpp"
#include "hhls/special.hpp"

namespace hhls {

namespace {

constexpr std::size_t kTile = 512;

bool is_integer(double v) { return v == std::floor(v) && std::abs(v) < 64.0; }

// Tensor-product Gauss rule on [-1,1]^d, flattened (d coordinates per node).
struct CubeRule {
    std::vector<double> nodes;
    std::vector<double> weights;
};

CubeRule tensor_rule(std::size_t d, int m, int sub) {
    const GaussRule g = gauss_legendre(m);
    // Composite 1-D rule with `sub` equal panels.
    std::vector<double> x1, w1;
    for (int s = 0; s < sub; ++s) {
        const double a = -1.0 + 2.0 * s / sub, b = -1.0 + 2.0 * (s + 1) / sub;
        for (std::size_t k = 0; k < g.nodes.size(); ++k) {
            x1.push_back(0.5 * (a + b) + 0.5 * (b - a) * g.nodes[k]);
            w1.push_back(0.5 * (b - a) * g.weights[k]);
        }
    }
    CubeRule r;
    const std::size_t m1 = x1.size();
    std::size_t total = 1;
    for (std::size_t a = 0; a < d; ++a) total *= m1;
    r.nodes.resize(total * d);
    r.weights.resize(total);
    std::vector<std::size_t> idx(d, 0);
    for (std::size_t flat = 0; flat < total; ++flat) {
        std::size_t rem = flat;
        double w = 1.0;
        for (std::size_t a = 0; a < d; ++a) {
            idx[a] = rem % m1;
            rem /= m1;
            r.nodes[flat * d + a] = x1[idx[a]];
            w *= w1[idx[a]];
        }
        r.weights[flat] = w;
    }
    return r;
}

// Rule on [-1,1]^d for integrands with an integrable point singularity at the
// center: the cube is split into 2d pyramids (one per facet) and each pyramid is
// parametrized by r * facet point, r = u^2, which removes the r^{d-1} Jacobian
// degeneracy and smooths power singularities in r.
CubeRule duffy_rule(std::size_t d, int m_face, int m_radial) {
    const GaussRule gr = gauss_legendre(m_radial);
    const CubeRule face = d > 1 ? tensor_rule(d - 1, m_face, 1) : CubeRule{{}, {1.0}};
    CubeRule r;
    for (std::size_t axis = 0; axis < d; ++axis) {
        for (int sign = -1; sign <= 1; sign += 2) {
            for (std::size_t fnode = 0; fnode < face.weights.size(); ++fnode) {
                for (std::size_t k = 0; k < gr.nodes.size(); ++k) {
                    const double u = 0.5 * (gr.nodes[k] + 1.0);
                    const double rad = u * u;
                    const double jac = 0.5 * gr.weights[k] * 2.0 * u * std::pow(rad, static_cast<double>(d) - 1.0);
                    std::size_t fa = 0;
                    for (std::size_t a = 0; a < d; ++a) {
                        const double coord = (a == axis) ? static_cast<double>(sign) : face.nodes[fnode * (d - 1) + fa++];
                        r.nodes.push_back(rad * coord);
                    }
                    r.weights.push_back(jac * face.weights[fnode]);
                }
            }
        }
    }
    return r;
}

}  // namespace

KernelOperator::KernelOperator(std::shared_ptr<const Grid> grid, std::vector<KernelTerm> terms, OperatorOptions opts)
    : grid_(std::move(grid)), terms_(std::move(terms)), opts_(opts) {
    if (!grid_) throw UsageError("KernelOperator: grid is null");
    if (terms_.empty()) throw UsageError("KernelOperator: at least one kernel term is required");
    const double Q = 2.0 * grid_->n() + 2.0;
    for (const auto& term : terms_) {
        if (!(term.gamma > 0.0) || !(term.gamma < Q)) {
            throw UsageError("KernelOperator: kernel exponent must lie in (0, Q)");
        }
    }
    if (!(opts_.near_factor >= 0.0)) throw UsageError("KernelOperator: near_factor must be nonnegative");
    build_coordinates();
    build_near_tables();
}

KernelOperator KernelOperator::riesz(std::shared_ptr<const Grid> grid, const KernelSpec& spec, int s,
                                     OperatorOptions opts) {
    spec.validate();
    if (grid && grid->n() != spec.n) throw UsageError("KernelOperator: grid and kernel dimension differ");
    return KernelOperator(std::move(grid), {{1.0, spec.exponent(s)}}, opts);
}

KernelOperator KernelOperator::hls(std::shared_ptr<const Grid> grid, const KernelSpec& spec, OperatorOptions opts) {
    spec.validate();
    if (grid && grid->n() != spec.n) throw UsageError("KernelOperator: grid and kernel dimension differ");
    std::vector<KernelTerm> terms{{1.0, spec.exponent(0)}};
    if (spec.lambda != 0.0) terms.push_back({spec.lambda, spec.exponent(1)});
    return KernelOperator(std::move(grid), std::move(terms), opts);
}

void KernelOperator::build_coordinates() {
    const Grid& g = *grid_;
    const std::size_t N = g.size();
    const std::size_t D = static_cast<std::size_t>(2 * g.n());
    zc_.resize(D * N);
    tc_.resize(N);
    for (std::size_t i = 0; i < N; ++i) {
        const auto& col = g.columns()[static_cast<std::size_t>(g.column_of(i))];
        for (std::size_t a = 0; a < D; ++a) zc_[a * N + i] = col.z[a];
        tc_[i] = g.t_of(i);
    }
}

double KernelOperator::kernel_from_g4(double g4) const {
    double k = 0.0;
    for (const auto& term : terms_) k += term.coeff * std::pow(g4, -term.gamma / 4.0);
    return k;
}

double KernelOperator::kernel_value(std::size_t i, std::size_t j) const {
    if (i == j) return 0.0;
    const std::size_t N = grid_->size();
    const auto n = static_cast<std::size_t>(grid_->n());
    double r2 = 0.0, tw = 0.0;
    for (std::size_t a = 0; a < n; ++a) {
        const double xi = zc_[a * N + i], yi = zc_[(n + a) * N + i];
        const double xj = zc_[a * N + j], yj = zc_[(n + a) * N + j];
        r2 += (xi - xj) * (xi - xj) + (yi - yj) * (yi - yj);
        tw += yi * xj - xi * yj;
    }
    const double dt = tc_[i] - tc_[j] + 2.0 * tw;
    return kernel_from_g4(r2 * r2 + dt * dt);
}

// Integral over the source cell (column sc, t-index k_target - dk) of the kernel
// centered at the target cell center (column tc). The t-direction is integrated in
// closed form; the z-box is integrated by a Gauss rule (own column: Duffy rule).
double KernelOperator::cell_integral(std::size_t tc, std::size_t sc, int dk, bool own) const {
    const Grid& g = *grid_;
    const auto n = static_cast<std::size_t>(g.n());
    const std::size_t D = 2 * n;
    const double h = g.h(), ht = g.ht(), half = 0.5 * h;
    const auto& zt = g.columns()[tc].z;
    const auto& zs = g.columns()[sc].z;

    auto integrand = [&](const double* node) {
        double r2 = 0.0, tw = 0.0;
        for (std::size_t a = 0; a < n; ++a) {
            const double wx = zs[a] + half * node[a], wy = zs[n + a] + half * node[n + a];
            const double dx = zt[a] - wx, dy = zt[n + a] - wy;
            r2 += dx * dx + dy * dy;
            tw += zt[n + a] * wx - zt[a] * wy;
        }
        const double A = r2 * r2;
        const double c = dk * ht + 2.0 * tw;
        double v = 0.0;
        for (const auto& term : terms_) v += term.coeff * power_window(term.gamma / 4.0, A, c - 0.5 * ht, c + 0.5 * ht);
        return v;
    };

    // The t-twist shears the source box as seen from the target by 2|z_t| per unit z;
    // subdivide so each panel's shear stays below one t-step.
    double zt2 = 0.0;
    for (double v : zt) zt2 += v * v;
    const double shear_steps = 2.0 * std::sqrt(zt2) * h / ht;

    const CubeRule* rule = nullptr;
    static const CubeRule duffy2 = duffy_rule(2, 10, 14);
    static const CubeRule duffy4 = duffy_rule(4, 5, 12);
    if (own) {
        if (D == 2) {
            rule = &duffy2;
        } else if (D == 4) {
            rule = &duffy4;
        } else {
            static const CubeRule duffy_hi = duffy_rule(D, 3, 10);
            rule = &duffy_hi;
        }
    }
    CubeRule local;
    if (!own) {
        int cheb = 0;
        const auto& lt = g.columns()[tc].lattice;
        const auto& ls = g.columns()[sc].lattice;
        for (std::size_t a = 0; a < D; ++a) cheb = std::max(cheb, std::abs(lt[a] - ls[a]));
        int m = cheb <= 1 ? 6 : (cheb <= 2 ? 4 : 3);
        int sub = std::clamp(static_cast<int>(std::ceil(shear_steps)), 1, 4);
        if (D > 2) {
            m = std::min(m, 4);
            sub = 1;
        }
        local = tensor_rule(D, m, sub);
        rule = &local;
    }
    double sum = 0.0;
    const std::size_t count = rule->weights.size();
    for (std::size_t k = 0; k < count; ++k) sum += rule->weights[k] * integrand(&rule->nodes[k * D]);
    return sum * std::pow(half, static_cast<double>(D));
}

void KernelOperator::build_near_tables() {
    const Grid& g = *grid_;
    const std::size_t ncol = g.columns().size();
    const std::size_t D = static_cast<std::size_t>(2 * g.n());
    const auto n = static_cast<std::size_t>(g.n());
    const double h = g.h(), ht = g.ht(), V = g.cell_volume();
    // Pairs exactly on the band edge are common on symmetric lattices; the relative
    // slack makes their classification independent of rounding, so lattice
    // automorphisms map near pairs to near pairs.
    const double band = opts_.near_factor * std::max(ht, h * h) * (1.0 + 1e-9);
    const int nt = g.nt();

    // Lattice offsets o = lattice(target) - lattice(source) in the near zone.
    const int reach = std::max(1, static_cast<int>(std::floor(std::sqrt(band) / h)));
    std::vector<std::vector<int>> offsets;
    {
        std::vector<int> o(D, -reach);
        while (true) {
            long long o2 = 0;
            int cheb = 0;
            for (int v : o) {
                o2 += static_cast<long long>(v) * v;
                cheb = std::max(cheb, std::abs(v));
            }
            if (static_cast<double>(o2) * h * h <= band || cheb <= 1) offsets.push_back(o);
            std::size_t a = 0;
            while (a < D && ++o[a] > reach) o[a++] = -reach;
            if (a == D) break;
        }
    }

    self_.assign(ncol, 0.0);
    near_offsets_.assign(ncol + 1, 0);
    near_entries_.clear();
    std::vector<int> lat(D);
    // Self-cell weights depend on the column only through the twist,
    // and own-column weights are even in dk.
    for (std::size_t c = 0; c < ncol; ++c) {
        const auto& col = g.columns()[c];
        for (const auto& o : offsets) {
            for (std::size_t a = 0; a < D; ++a) lat[a] = col.lattice[a] - o[a];
            const std::int32_t src = g.column_at(lat);
            if (src < 0) continue;
            const auto sc = static_cast<std::size_t>(src);
            const auto& scol = g.columns()[sc];
            const bool own = sc == c;
            double r2 = 0.0, tw = 0.0;
            for (std::size_t a = 0; a < n; ++a) {
                const double dx = col.z[a] - scol.z[a], dy = col.z[n + a] - scol.z[n + a];
                r2 += dx * dx + dy * dy;
                tw += col.z[n + a] * scol.z[a] - col.z[a] * scol.z[n + a];
            }
            tw *= 2.0;
            const int k_lo = std::max(-(nt - 1), static_cast<int>(std::ceil((-band - tw) / ht)));
            const int k_hi = std::min(nt - 1, static_cast<int>(std::floor((band - tw) / ht)));
            for (int dk = k_lo; dk <= k_hi; ++dk) {
                if (own && dk == 0) {
                    self_[c] = cell_integral(c, c, 0, true);
                    continue;
                }
                const double forward = cell_integral(c, sc, dk, own);
                const double reverse = cell_integral(sc, c, -dk, own);
                const double dt = dk * ht + tw;
                const double mid = V * kernel_from_g4(r2 * r2 + dt * dt);
                near_entries_.push_back({src, dk, 0.5 * (forward + reverse) - mid});
            }
        }
        near_offsets_[c + 1] = near_entries_.size();
    }
}

namespace {

// K(g4) over a buffer for a list of terms, vectorization-friendly.
void eval_kernel_buffer(const std::vector<KernelTerm>& terms, bool integer_terms, const double* g4, double* out,
                        double* scratch_a, double* scratch_b, std::size_t m) {
    for (std::size_t q = 0; q < m; ++q) out[q] = 0.0;
    if (integer_terms) {
        // scratch_a = |.|^{-2}, scratch_b = |.|^{-1}
        for (std::size_t q = 0; q < m; ++q) scratch_a[q] = 1.0 / std::sqrt(g4[q]);
        bool need_odd = false;
        for (const auto& t : terms) need_odd = need_odd || (static_cast<int>(t.gamma) % 2 == 1);
        if (need_odd) {
            for (std::size_t q = 0; q < m; ++q) scratch_b[q] = std::sqrt(scratch_a[q]);
        }
        for (const auto& t : terms) {
            const int gi = static_cast<int>(t.gamma);
            const int evens = gi / 2;
            const bool odd = gi % 2 == 1;
            const double c = t.coeff;
            if (evens == 1 && !odd) {
                for (std::size_t q = 0; q < m; ++q) out[q] += c * scratch_a[q];
            } else if (evens == 0 && odd) {
                for (std::size_t q = 0; q < m; ++q) out[q] += c * scratch_b[q];
            } else {
                for (std::size_t q = 0; q < m; ++q) {
                    double v = odd ? scratch_b[q] : 1.0;
                    for (int e = 0; e < evens; ++e) v *= scratch_a[q];
                    out[q] += c * v;
                }
            }
        }
        return;
    }
    for (std::size_t q = 0; q < m; ++q) scratch_a[q] = std::log(g4[q]);
    for (const auto& t : terms) {
        const double e = -t.gamma / 4.0;
        for (std::size_t q = 0; q < m; ++q) out[q] += t.coeff * std::exp(e * scratch_a[q]);
    }
}

// g4 = |z_i - z_j|^4 + (t_i - t_j + 2 sum(y_i x_j - x_i y_j))^2 for j in [jb, jb + m).
void gauge4_buffer(std::size_t n, std::size_t N, const double* zc, const double* tc, std::size_t i, std::size_t jb,
                   std::size_t m, double* r2, double* tw, double* g4) {
    for (std::size_t q = 0; q < m; ++q) {
        r2[q] = 0.0;
        tw[q] = 0.0;
    }
    for (std::size_t a = 0; a < n; ++a) {
        const double xa = zc[a * N + i], ya = zc[(n + a) * N + i];
        const double* X = zc + a * N + jb;
        const double* Y = zc + (n + a) * N + jb;
#pragma omp simd
        for (std::size_t q = 0; q < m; ++q) {
            const double dx = xa - X[q], dy = ya - Y[q];
            r2[q] += dx * dx + dy * dy;
            tw[q] += ya * X[q] - xa * Y[q];
        }
    }
    const double ti = tc[i];
    const double* T = tc + jb;
#pragma omp simd
    for (std::size_t q = 0; q < m; ++q) {
        const double dt = ti - T[q] + 2.0 * tw[q];
        g4[q] = r2[q] * r2[q] + dt * dt;
    }
}

bool all_integer(const std::vector<KernelTerm>& terms) {
    for (const auto& t : terms) {
        if (!is_integer(t.gamma)) return false;
    }
    return true;
}

// |.|^{-G} from rs = |.|^{-2} and rq = |.|^{-1}, for G in {1, 2, 3}.
template <int G>
inline double gauge_power(double rs, double rq) {
    if constexpr (G == 1) return rq;
    if constexpr (G == 2) return rs;
    if constexpr (G == 3) return rs * rq;
    return 0.0;
}

// K = c0 |.|^{-G0} + c1 |.|^{-G1} (G1 = 0: single term).
template <int G0, int G1>
struct FusedKernel {
    double c0, c1;
    inline double operator()(double g4) const {
        const double rs = 1.0 / std::sqrt(g4);
        constexpr bool need_rq = (G0 % 2 == 1) || (G1 % 2 == 1);
        const double rq = need_rq ? std::sqrt(rs) : 0.0;
        double k = c0 * gauge_power<G0>(rs, rq);
        if constexpr (G1 != 0) k += c1 * gauge_power<G1>(rs, rq);
        return k;
    }
};

// n = 1 single-pass loops. Each unordered pair is evaluated once in the symmetric form.
template <class K>
void fused_symmetric_n1(const K& kern, std::size_t N, const double* X, const double* Y, const double* T,
                        const double* f, double* acc) {
    for (std::size_t I0 = 0; I0 < N; I0 += kTile) {
        const std::size_t I1 = std::min(N, I0 + kTile);
        for (std::size_t J0 = I0; J0 < N; J0 += kTile) {
            const std::size_t J1 = std::min(N, J0 + kTile);
            for (std::size_t i = I0; i < I1; ++i) {
                const std::size_t jb = (J0 == I0) ? i + 1 : J0;
                if (jb >= J1) continue;
                const double xi = X[i], yi = Y[i], ti = T[i], fi = f[i];
                double s = 0.0;
#pragma omp simd reduction(+ : s)
                for (std::size_t j = jb; j < J1; ++j) {
                    const double dx = xi - X[j], dy = yi - Y[j];
                    const double r2 = dx * dx + dy * dy;
                    const double dt = ti - T[j] + 2.0 * (yi * X[j] - xi * Y[j]);
                    const double k = kern(r2 * r2 + dt * dt);
                    s += k * f[j];
                    acc[j] += k * fi;
                }
                acc[i] += s;
            }
        }
    }
}

template <class K>
double fused_row_n1(const K& kern, std::size_t i, std::size_t N, const double* X, const double* Y, const double* T,
                    const double* f) {
    const double xi = X[i], yi = Y[i], ti = T[i];
    double s = 0.0;
    // Split at i so that the diagonal is skipped without a branch in the loop.
    for (int part = 0; part < 2; ++part) {
        const std::size_t b = part == 0 ? 0 : i + 1;
        const std::size_t e = part == 0 ? i : N;
#pragma omp simd reduction(+ : s)
        for (std::size_t j = b; j < e; ++j) {
            const double dx = xi - X[j], dy = yi - Y[j];
            const double r2 = dx * dx + dy * dy;
            const double dt = ti - T[j] + 2.0 * (yi * X[j] - xi * Y[j]);
            s += kern(r2 * r2 + dt * dt) * f[j];
        }
    }
    return s;
}

// Calls fn(kernel) with a fused kernel matching the terms; false if no fused form exists.
template <class Fn>
bool with_fused_kernel(const std::vector<KernelTerm>& terms, Fn&& fn) {
    auto g = [&](std::size_t m) { return static_cast<int>(terms[m].gamma); };
    for (const auto& t : terms) {
        if (!is_integer(t.gamma)) return false;
    }
    if (terms.size() == 1) {
        const double c = terms[0].coeff;
        switch (g(0)) {
            case 1: fn(FusedKernel<1, 0>{c, 0.0}); return true;
            case 2: fn(FusedKernel<2, 0>{c, 0.0}); return true;
            case 3: fn(FusedKernel<3, 0>{c, 0.0}); return true;
            default: return false;
        }
    }
    if (terms.size() == 2) {
        const double c0 = terms[0].coeff, c1 = terms[1].coeff;
        if (g(0) == 2 && g(1) == 1) { fn(FusedKernel<2, 1>{c0, c1}); return true; }
        if (g(0) == 3 && g(1) == 2) { fn(FusedKernel<3, 2>{c0, c1}); return true; }
    }
    return false;
}

}  // namespace

void KernelOperator::apply_far_symmetric(const std::vector<double>& f, std::vector<double>& acc) const {
    const std::size_t N = grid_->size();
    const auto n = static_cast<std::size_t>(grid_->n());
    if (n == 1 && with_fused_kernel(terms_, [&](const auto& kern) {
            fused_symmetric_n1(kern, N, zc_.data(), zc_.data() + N, tc_.data(), f.data(), acc.data());
        })) {
        return;
    }
    const bool integer_terms = all_integer(terms_);
    std::vector<double> buf(5 * kTile);
    double* r2 = buf.data();
    double* tw = r2 + kTile;
    double* g4 = tw + kTile;
    double* kv = g4 + kTile;
    double* sc = kv + kTile;
    for (std::size_t I0 = 0; I0 < N; I0 += kTile) {
        const std::size_t I1 = std::min(N, I0 + kTile);
        for (std::size_t J0 = I0; J0 < N; J0 += kTile) {
            const std::size_t J1 = std::min(N, J0 + kTile);
            for (std::size_t i = I0; i < I1; ++i) {
                const std::size_t jb = (J0 == I0) ? i + 1 : J0;
                if (jb >= J1) continue;
                const std::size_t m = J1 - jb;
                gauge4_buffer(n, N, zc_.data(), tc_.data(), i, jb, m, r2, tw, g4);
                eval_kernel_buffer(terms_, integer_terms, g4, kv, sc, r2, m);
                const double fi = f[i];
                const double* fj = f.data() + jb;
                double* aj = acc.data() + jb;
                double s = 0.0;
#pragma omp simd reduction(+ : s)
                for (std::size_t q = 0; q < m; ++q) {
                    s += kv[q] * fj[q];
                    aj[q] += kv[q] * fi;
                }
                acc[i] += s;
            }
        }
    }
}

double KernelOperator::apply_far_row(std::size_t i, const std::vector<double>& f) const {
    const std::size_t N = grid_->size();
    const auto n = static_cast<std::size_t>(grid_->n());
    double fused = 0.0;
    if (n == 1 && with_fused_kernel(terms_, [&](const auto& kern) {
            fused = fused_row_n1(kern, i, N, zc_.data(), zc_.data() + N, tc_.data(), f.data());
        })) {
        return fused;
    }
    const bool integer_terms = all_integer(terms_);
    std::vector<double> buf(5 * kTile);
    double* r2 = buf.data();
    double* tw = r2 + kTile;
    double* g4 = tw + kTile;
    double* kv = g4 + kTile;
    double* sc = kv + kTile;
    double total = 0.0;
    for (std::size_t J0 = 0; J0 < N; J0 += kTile) {
        const std::size_t m = std::min(N, J0 + kTile) - J0;
        gauge4_buffer(n, N, zc_.data(), tc_.data(), i, J0, m, r2, tw, g4);
        eval_kernel_buffer(terms_, integer_terms, g4, kv, sc, r2, m);
        if (i >= J0 && i < J0 + m) kv[i - J0] = 0.0;
        const double* fj = f.data() + J0;
        double s = 0.0;
#pragma omp simd reduction(+ : s)
        for (std::size_t q = 0; q < m; ++q) s += kv[q] * fj[q];
        total += s;
    }
    return total;
}

void KernelOperator::apply_far_rows(const std::vector<double>& f, std::vector<double>& acc, std::size_t begin,
                                    std::size_t end) const {
    for (std::size_t i = begin; i < end; ++i) acc[i] = apply_far_row(i, f);
}

double KernelOperator::near_correction_sum(std::size_t i, const std::vector<double>& f) const {
    const Grid& g = *grid_;
    const auto c = static_cast<std::size_t>(g.column_of(i));
    const int k = g.k_of(i);
    const int nt = g.nt();
    double s = 0.0;
    for (std::size_t e = near_offsets_[c]; e < near_offsets_[c + 1]; ++e) {
        const NearEntry& entry = near_entries_[e];
        const int ks = k - entry.dk;
        if (ks < 0 || ks >= nt) continue;
        const std::int32_t j = g.columns()[static_cast<std::size_t>(entry.column)].cell[static_cast<std::size_t>(ks)];
        if (j >= 0) s += entry.correction * f[static_cast<std::size_t>(j)];
    }
    return s;
}

std::vector<double> KernelOperator::apply(const std::vector<double>& f) const {
    const Grid& g = *grid_;
    const std::size_t N = g.size();
    if (f.size() != N) throw UsageError("KernelOperator::apply: function length does not match the grid");
    std::vector<double> acc(N, 0.0);
    const int threads = opts_.deterministic ? 1 : std::max(1, opts_.threads);
    if (threads == 1) {
        apply_far_symmetric(f, acc);
    } else {
        std::vector<std::thread> pool;
        const std::size_t chunk = (N + static_cast<std::size_t>(threads) - 1) / static_cast<std::size_t>(threads);
        for (int t = 0; t < threads; ++t) {
            const std::size_t b = std::min(N, static_cast<std::size_t>(t) * chunk);
            const std::size_t e = std::min(N, b + chunk);
            pool.emplace_back([this, &f, &acc, b, e] { apply_far_rows(f, acc, b, e); });
        }
        for (auto& th : pool) th.join();
    }
    const double V = g.cell_volume();
    std::vector<double> out(N);
    for (std::size_t i = 0; i < N; ++i) {
        out[i] = V * acc[i] + self_[static_cast<std::size_t>(g.column_of(i))] * f[i] + near_correction_sum(i, f);
    }
    return out;
}

GridFunction KernelOperator::apply(const GridFunction& f) const {
    if (f.grid != grid_ && (f.grid == nullptr || f.grid.get() != grid_.get())) {
        throw UsageError("KernelOperator::apply: function lives on a different grid");
    }
    return GridFunction(grid_, apply(f.values));
}

double KernelOperator::apply_at(std::size_t i, const std::vector<double>& f) const {
    const Grid& g = *grid_;
    if (f.size() != g.size()) throw UsageError("KernelOperator::apply_at: function length does not match the grid");
    if (i >= g.size()) throw UsageError("KernelOperator::apply_at: cell index out of range");
    return g.cell_volume() * apply_far_row(i, f) + self_[static_cast<std::size_t>(g.column_of(i))] * f[i] +
           near_correction_sum(i, f);
}

double KernelOperator::point_cell_integral(const double* zp, double tp, std::size_t j) const {
    const Grid& g = *grid_;
    const auto n = static_cast<std::size_t>(g.n());
    const std::size_t D = 2 * n;
    const double h = g.h(), ht = g.ht(), half = 0.5 * h;
    const auto& zs = g.columns()[static_cast<std::size_t>(g.column_of(j))].z;
    const double dt0 = tp - g.t_of(j);

    double cheb = 0.0, zp2 = 0.0;
    for (std::size_t a = 0; a < D; ++a) {
        cheb = std::max(cheb, std::abs(zp[a] - zs[a]) / h);
        zp2 += zp[a] * zp[a];
    }
    const bool inside = cheb <= 0.5;
    int m = cheb <= 1.5 ? 6 : (cheb <= 2.5 ? 4 : 3);
    int sub = std::clamp(static_cast<int>(std::ceil(2.0 * std::sqrt(zp2) * h / ht)), 1, 4);
    // A target inside the source box makes the z-integrand weakly singular; refine.
    if (inside) sub = 4;
    if (D > 2) {
        m = std::min(m, 4);
        sub = std::min(sub, 2);
    }
    const CubeRule rule = tensor_rule(D, m, sub);
    double sum = 0.0;
    for (std::size_t k = 0; k < rule.weights.size(); ++k) {
        const double* node = &rule.nodes[k * D];
        double r2 = 0.0, tw = 0.0;
        for (std::size_t a = 0; a < n; ++a) {
            const double wx = zs[a] + half * node[a], wy = zs[n + a] + half * node[n + a];
            const double dx = zp[a] - wx, dy = zp[n + a] - wy;
            r2 += dx * dx + dy * dy;
            tw += zp[n + a] * wx - zp[a] * wy;
        }
        const double A = r2 * r2;
        const double c = dt0 + 2.0 * tw;
        double v = 0.0;
        for (const auto& term : terms_) v += term.coeff * power_window(term.gamma / 4.0, A, c - 0.5 * ht, c + 0.5 * ht);
        sum += rule.weights[k] * v;
    }
    return sum * std::pow(half, static_cast<double>(D));
}

double KernelOperator::apply_at_point(const HPoint& p, const std::vector<double>& f) const {
    const Grid& g = *grid_;
    if (f.size() != g.size()) throw UsageError("KernelOperator::apply_at_point: function length does not match the grid");
    if (p.n() != g.n()) throw UsageError("KernelOperator::apply_at_point: point dimension differs from the grid");
    const auto n = static_cast<std::size_t>(g.n());
    const std::size_t N = g.size();
    const std::vector<double> pc = p.coords();
    const double* zp = pc.data();
    const double tp = pc[2 * n];
    const double h = g.h(), ht = g.ht(), V = g.cell_volume();
    // Pairs exactly on the band edge are common on symmetric lattices; the relative
    // slack makes their classification independent of rounding, so lattice
    // automorphisms map near pairs to near pairs.
    const double band = opts_.near_factor * std::max(ht, h * h) * (1.0 + 1e-9);
    double sum = 0.0;
    for (std::size_t j = 0; j < N; ++j) {
        double r2 = 0.0, tw = 0.0, cheb = 0.0;
        for (std::size_t a = 0; a < n; ++a) {
            const double xj = zc_[a * N + j], yj = zc_[(n + a) * N + j];
            const double dx = zp[a] - xj, dy = zp[n + a] - yj;
            r2 += dx * dx + dy * dy;
            tw += zp[n + a] * xj - zp[a] * yj;
            cheb = std::max({cheb, std::abs(dx), std::abs(dy)});
        }
        const double dt = tp - tc_[j] + 2.0 * tw;
        const bool near = (r2 <= band || cheb <= 1.5 * h) && std::abs(dt) <= band + ht;
        sum += f[j] * (near ? point_cell_integral(zp, tp, j) : V * kernel_from_g4(r2 * r2 + dt * dt));
    }
    return sum;
}

double KernelOperator::energy(const std::vector<double>& f) const {
    const std::vector<double> pf = apply(f);
    double s = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) s += f[i] * pf[i];
    return grid_->cell_volume() * s;
}

double KernelOperator::self_weight(std::size_t i) const {
    return self_[static_cast<std::size_t>(grid_->column_of(i))];
}

double KernelOperator::pair_weight(std::size_t i, std::size_t j) const {
    const Grid& g = *grid_;
    if (i >= g.size() || j >= g.size()) throw UsageError("pair_weight: cell index out of range");
    if (i == j) return self_weight(i);
    double w = g.cell_volume() * kernel_value(i, j);
    const auto c = static_cast<std::size_t>(g.column_of(i));
    const std::int32_t sc = g.column_of(j);
    const int dk = g.k_of(i) - g.k_of(j);
    for (std::size_t e = near_offsets_[c]; e < near_offsets_[c + 1]; ++e) {
        if (near_entries_[e].column == sc && near_entries_[e].dk == dk) {
            w += near_entries_[e].correction;
            break;
        }
    }
    return w;
}

}  // namespace hhls
