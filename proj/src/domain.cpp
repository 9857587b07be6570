#include "hhls/domain.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>
#include <utility>

#include "hhls/errors.hpp"
#include "hhls/special.hpp"

namespace hhls {

// ---------------------------------------------------------------- GaugeDomain

GaugeDomain GaugeDomain::cylinder(const HPoint& center, double R) {
    if (!(R > 0.0) || !std::isfinite(R)) throw UsageError("cylinder: radius R must be a positive finite real");
    GaugeDomain d;
    d.kind_ = Kind::cylinder;
    d.n_ = center.n();
    d.center_ = center;
    d.radius_ = R;
    const auto n = static_cast<std::size_t>(d.n_);
    d.bbox_.lo.resize(2 * n + 1);
    d.bbox_.hi.resize(2 * n + 1);
    // Left translation is affine: z -> zeta_z + z, t -> zeta_t + t + 2 sum(zeta_y x - zeta_x y).
    // The hull of the translated box [-R,R]^{2n} x [-R^2,R^2] is therefore exact per axis.
    double shear = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        d.bbox_.lo[j] = center.x()[j] - R;
        d.bbox_.hi[j] = center.x()[j] + R;
        d.bbox_.lo[n + j] = center.y()[j] - R;
        d.bbox_.hi[n + j] = center.y()[j] + R;
        shear += 2.0 * R * (std::abs(center.x()[j]) + std::abs(center.y()[j]));
    }
    d.bbox_.lo[2 * n] = center.t() - R * R - shear;
    d.bbox_.hi[2 * n] = center.t() + R * R + shear;
    d.description_ = "cylinder";
    return d;
}

GaugeDomain GaugeDomain::indicator(int n, Predicate predicate, Box bbox, std::string description) {
    if (n < 1) throw UsageError("indicator: n must be >= 1");
    const auto dim = static_cast<std::size_t>(2 * n + 1);
    if (bbox.lo.size() != dim || bbox.hi.size() != dim) throw UsageError("indicator: bbox must have 2n+1 axes");
    for (std::size_t a = 0; a < dim; ++a) {
        if (!(bbox.hi[a] > bbox.lo[a])) throw UsageError("indicator: bbox must have positive extent on every axis");
    }
    if (!predicate) throw UsageError("indicator: predicate is empty");
    GaugeDomain d;
    d.kind_ = Kind::indicator;
    d.n_ = n;
    d.center_ = HPoint(n);
    d.predicate_ = std::move(predicate);
    d.bbox_ = std::move(bbox);
    d.description_ = std::move(description);
    return d;
}

const HPoint& GaugeDomain::center() const {
    if (kind_ != Kind::cylinder) throw UnsupportedOperationError("center: only cylinders have a center");
    return center_;
}

double GaugeDomain::radius() const {
    if (kind_ != Kind::cylinder) throw UnsupportedOperationError("radius: only cylinders have a radius");
    return radius_;
}

bool GaugeDomain::origin_centered() const {
    return kind_ == Kind::cylinder && center_ == HPoint(n_);
}

bool GaugeDomain::contains_coords(const double* c) const {
    const auto n = static_cast<std::size_t>(n_);
    if (kind_ == Kind::indicator) {
        return predicate_(HPoint(std::vector<double>(c, c + n), std::vector<double>(c + n, c + 2 * n), c[2 * n]));
    }
    // zeta^{-1} p = (z - w, t - s + 2 Im(-w . conj z)) with zeta = (w, s).
    double r2 = 0.0, tw = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        const double u = center_.x()[j], v = center_.y()[j];
        const double dx = c[j] - u, dy = c[n + j] - v;
        r2 += dx * dx + dy * dy;
        tw += v * c[j] - u * c[n + j];
    }
    const double t = c[2 * n] - center_.t() - 2.0 * tw;
    return r2 < radius_ * radius_ && std::abs(t) < radius_ * radius_;
}

bool GaugeDomain::contains(const HPoint& p) const {
    if (p.n() != n_) throw UsageError("contains: dimension mismatch");
    if (kind_ == Kind::indicator) return predicate_(p);
    const std::vector<double> c = p.coords();
    return contains_coords(c.data());
}

bool contains(const GaugeDomain& d, const HPoint& p) { return d.contains(p); }

bool is_delta_starshaped(const GaugeDomain& d, int samples, int lambda_steps) {
    if (samples < 1 || lambda_steps < 1) throw UsageError("is_delta_starshaped: counts must be positive");
    const int n = d.n();
    if (!d.contains(HPoint(n))) return false;
    const Box& box = d.bbox();
    const std::size_t dim = box.lo.size();
    std::mt19937_64 rng(0x5eedULL);
    std::uniform_real_distribution<double> unif(0.0, 1.0);
    std::vector<double> c(dim);
    int found = 0;
    const long long max_attempts = 1000LL * samples;
    for (long long attempt = 0; attempt < max_attempts && found < samples; ++attempt) {
        for (std::size_t a = 0; a < dim; ++a) c[a] = box.lo[a] + unif(rng) * box.extent(a);
        if (!d.contains_coords(c.data())) continue;
        ++found;
        const HPoint xi = HPoint::from_coords(c);
        for (int k = 0; k < lambda_steps; ++k) {
            const double lambda = static_cast<double>(k) / lambda_steps;
            const HPoint p = (k == 0) ? HPoint(n) : dilate(lambda, xi);
            if (!d.contains(p)) return false;
        }
    }
    return true;
}

// ----------------------------------------------------------------------- Grid

HPoint Grid::center(std::size_t i) const {
    const Column& col = columns_[static_cast<std::size_t>(cell_column_[i])];
    const auto n = static_cast<std::size_t>(n_);
    return HPoint(std::vector<double>(col.z.begin(), col.z.begin() + static_cast<std::ptrdiff_t>(n)),
                  std::vector<double>(col.z.begin() + static_cast<std::ptrdiff_t>(n), col.z.end()), t_of(i));
}

std::int32_t Grid::column_at(const std::vector<int>& lattice) const {
    std::size_t flat = 0;
    for (std::size_t a = 0; a < counts_.size(); ++a) {
        if (lattice[a] < 0 || lattice[a] >= counts_[a]) return -1;
        flat = flat * static_cast<std::size_t>(counts_[a]) + static_cast<std::size_t>(lattice[a]);
    }
    return column_lookup_[flat];
}

std::size_t Grid::nearest_cell(const HPoint& p) const {
    if (p.n() != n_) throw UsageError("nearest_cell: dimension mismatch");
    const std::vector<double> c = p.coords();
    const std::size_t d = counts_.size();
    std::vector<int> lattice(d);
    for (std::size_t a = 0; a < d; ++a) {
        const int idx = static_cast<int>(std::floor((c[a] - base_[a]) / h_));
        lattice[a] = std::clamp(idx, 0, counts_[a] - 1);
    }
    const int k = std::clamp(static_cast<int>(std::floor((c[d] - t_base_) / ht_)), 0, nt_ - 1);
    const std::int32_t col = column_at(lattice);
    bool inside_box = true;
    for (std::size_t a = 0; a < d; ++a) {
        const double u = (c[a] - base_[a]) / h_;
        inside_box = inside_box && u >= 0.0 && u < counts_[a];
    }
    const double ut = (c[d] - t_base_) / ht_;
    inside_box = inside_box && ut >= 0.0 && ut < nt_;
    if (inside_box && col >= 0) {
        const std::int32_t cell = columns_[static_cast<std::size_t>(col)].cell[static_cast<std::size_t>(k)];
        if (cell >= 0) return static_cast<std::size_t>(cell);
    }
    // Fallback: exhaustive Euclidean search (used for points on or outside the boundary).
    double best = std::numeric_limits<double>::infinity();
    std::size_t best_i = 0;
    for (std::size_t i = 0; i < size(); ++i) {
        const Column& cc = columns_[static_cast<std::size_t>(cell_column_[i])];
        double r2 = 0.0;
        for (std::size_t a = 0; a < d; ++a) r2 += (c[a] - cc.z[a]) * (c[a] - cc.z[a]);
        const double dt = c[d] - t_of(i);
        r2 += dt * dt;
        if (r2 < best) {
            best = r2;
            best_i = i;
        }
    }
    return best_i;
}

std::shared_ptr<const Grid> build_grid(const GaugeDomain& d, double h, const GridOptions& opts) {
    if (!(h > 0.0) || !std::isfinite(h)) throw UsageError("build_grid: h must be a positive finite real");
    const Box& box = d.bbox();
    const std::size_t dz = static_cast<std::size_t>(2 * d.n());
    double max_xy = 0.0;
    for (std::size_t a = 0; a < dz + 1; ++a) {
        if (!(h < box.extent(a)) && a < dz) throw UsageError("build_grid: h must be smaller than every bbox extent");
        if (a < dz) max_xy = std::max(max_xy, box.extent(a));
    }
    const double ht = opts.t_spacing.value_or(h * box.extent(dz) / max_xy);
    if (!(ht > 0.0) || !std::isfinite(ht) || !(ht < box.extent(dz))) {
        throw UsageError("build_grid: t spacing must be positive and smaller than the t extent");
    }

    auto grid = std::shared_ptr<Grid>(new Grid(d));
    Grid& g = *grid;
    g.n_ = d.n();
    g.h_ = h;
    g.ht_ = ht;
    g.volume_ = std::pow(h, static_cast<double>(dz)) * ht;
    g.base_.resize(dz);
    g.counts_.resize(dz);
    std::size_t lattice_size = 1;
    for (std::size_t a = 0; a < dz; ++a) {
        // Lattice of exact spacing h, centered on the bbox.
        const int count = std::max(1, static_cast<int>(std::ceil(box.extent(a) / h - 1e-9)));
        g.counts_[a] = count;
        g.base_[a] = 0.5 * (box.lo[a] + box.hi[a]) - 0.5 * count * h;
        lattice_size *= static_cast<std::size_t>(count);
    }
    g.nt_ = std::max(1, static_cast<int>(std::ceil(box.extent(dz) / ht - 1e-9)));
    g.t_base_ = 0.5 * (box.lo[dz] + box.hi[dz]) - 0.5 * g.nt_ * ht;
    g.column_lookup_.assign(lattice_size, -1);

    std::vector<int> idx(dz, 0);
    std::vector<double> c(dz + 1);
    for (std::size_t flat = 0; flat < lattice_size; ++flat) {
        // Decode the flat index (last axis fastest).
        std::size_t rem = flat;
        for (std::size_t a = dz; a-- > 0;) {
            idx[a] = static_cast<int>(rem % static_cast<std::size_t>(g.counts_[a]));
            rem /= static_cast<std::size_t>(g.counts_[a]);
        }
        for (std::size_t a = 0; a < dz; ++a) c[a] = g.base_[a] + (idx[a] + 0.5) * h;
        Grid::Column col;
        col.z.assign(c.begin(), c.begin() + static_cast<std::ptrdiff_t>(dz));
        col.lattice = idx;
        col.cell.assign(static_cast<std::size_t>(g.nt_), -1);
        const auto column_index = static_cast<std::int32_t>(g.columns_.size());
        bool any = false;
        for (int k = 0; k < g.nt_; ++k) {
            c[dz] = g.t_center(k);
            if (!d.contains_coords(c.data())) continue;
            col.cell[static_cast<std::size_t>(k)] = static_cast<std::int32_t>(g.cell_k_.size());
            g.cell_k_.push_back(k);
            g.cell_column_.push_back(column_index);
            any = true;
        }
        if (any) {
            g.column_lookup_[flat] = column_index;
            g.columns_.push_back(std::move(col));
        }
    }
    if (g.cell_k_.empty()) throw DegenerateInputError("build_grid: no lattice cell center lies inside the domain");
    return grid;
}

// ------------------------------------------------------- boundary quadrature

namespace {

struct SphereNode {
    std::vector<double> u;  // unit vector in R^d
    double weight;          // surface measure on S^{d-1}
};

// Product rule on S^{d-1} in hyperspherical angles: Gauss-Legendre in cos(phi_k)
// handles the sin^{d-1-k} weights, the last angle is equispaced.
std::vector<SphereNode> sphere_rule(std::size_t d, int m) {
    const double two_pi = 2.0 * std::numbers::pi;
    const int naz = std::max(8, 4 * m);
    std::vector<SphereNode> out;
    if (d == 1) {
        out.push_back({{1.0}, 1.0});
        out.push_back({{-1.0}, 1.0});
        return out;
    }
    if (d == 2) {
        for (int k = 0; k < naz; ++k) {
            const double th = two_pi * (k + 0.5) / naz;
            out.push_back({{std::cos(th), std::sin(th)}, two_pi / naz});
        }
        return out;
    }
    // Recursive: u = (cos phi, sin phi * v), v in S^{d-2}; measure sin^{d-2}phi dphi dv.
    // With c = cos phi: sin^{d-2}phi dphi = (1 - c^2)^{(d-3)/2} dc.
    const GaussRule gl = gauss_legendre(m);
    const auto sub = sphere_rule(d - 1, m);
    for (std::size_t i = 0; i < gl.nodes.size(); ++i) {
        const double cphi = gl.nodes[i];
        const double sphi = std::sqrt(1.0 - cphi * cphi);
        const double w = gl.weights[i] * std::pow(sphi, static_cast<double>(d) - 3.0);
        for (const auto& s : sub) {
            SphereNode node;
            node.u.resize(d);
            node.u[0] = cphi;
            for (std::size_t a = 1; a < d; ++a) node.u[a] = sphi * s.u[a - 1];
            node.weight = w * s.weight;
            out.push_back(std::move(node));
        }
    }
    return out;
}

}  // namespace

std::vector<BoundaryNode> boundary_quadrature(const GaugeDomain& d, int m) {
    if (d.kind() != GaugeDomain::Kind::cylinder) {
        throw UnsupportedOperationError("boundary_quadrature: only cylinder domains have an analytic boundary");
    }
    if (!d.origin_centered()) {
        throw UnsupportedOperationError("boundary_quadrature: only origin-centered cylinders are supported");
    }
    if (m < 1) throw UsageError("boundary_quadrature: m must be >= 1");
    const int n = d.n();
    const auto dz = static_cast<std::size_t>(2 * n);
    const double R = d.radius();
    const double T = R * R;
    const GaussRule gl = gauss_legendre(m);
    const auto sphere = sphere_rule(dz, m);
    std::vector<BoundaryNode> out;

    auto make_point = [&](const std::vector<double>& z, double t) {
        std::vector<double> c(z);
        c.push_back(t);
        return HPoint::from_coords(c);
    };

    // Lateral wall: R S^{2n-1} x (-T, T); dsigma = R^{2n-1} dS dt.
    const double lateral_scale = std::pow(R, static_cast<double>(dz) - 1.0);
    for (const auto& s : sphere) {
        std::vector<double> z(dz);
        for (std::size_t a = 0; a < dz; ++a) z[a] = R * s.u[a];
        for (std::size_t i = 0; i < gl.nodes.size(); ++i) {
            BoundaryNode node;
            node.point = make_point(z, T * gl.nodes[i]);
            node.normal = s.u;
            node.normal.push_back(0.0);
            node.weight = lateral_scale * s.weight * T * gl.weights[i];
            node.piece = BoundaryNode::Piece::lateral;
            out.push_back(std::move(node));
        }
    }
    // Flat faces t = +-T: ball of radius R in R^{2n}, polar rule r^{2n-1} dr dS.
    for (int side = 0; side < 2; ++side) {
        const double sign = side == 0 ? 1.0 : -1.0;
        for (std::size_t i = 0; i < gl.nodes.size(); ++i) {
            const double r = 0.5 * R * (gl.nodes[i] + 1.0);
            const double wr = 0.5 * R * gl.weights[i] * std::pow(r, static_cast<double>(dz) - 1.0);
            for (const auto& s : sphere) {
                std::vector<double> z(dz);
                for (std::size_t a = 0; a < dz; ++a) z[a] = r * s.u[a];
                BoundaryNode node;
                node.point = make_point(z, sign * T);
                node.normal.assign(dz + 1, 0.0);
                node.normal[dz] = sign;
                node.weight = wr * s.weight;
                node.piece = side == 0 ? BoundaryNode::Piece::top : BoundaryNode::Piece::bottom;
                out.push_back(std::move(node));
            }
        }
    }
    return out;
}

}  // namespace hhls
