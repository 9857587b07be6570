#pragma once

// Bounded domains of H^n, uniform cell-centered quadrature grids, and the
// analytic boundary parametrization of origin-centered cylinders.

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "hhls/hgroup.hpp"

namespace hhls {

// Axis-aligned box in the flattened coordinates (x_1..x_n, y_1..y_n, t).
struct Box {
    std::vector<double> lo;
    std::vector<double> hi;

    double extent(std::size_t axis) const { return hi[axis] - lo[axis]; }
};

class GaugeDomain {
public:
    enum class Kind { cylinder, indicator };
    using Predicate = std::function<bool(const HPoint&)>;

    // Sigma_R(zeta) = zeta o {|z| < R, |t| < R^2}.
    static GaugeDomain cylinder(const HPoint& center, double R);
    static GaugeDomain cylinder(int n, double R) { return cylinder(HPoint(n), R); }
    // Arbitrary set given by a membership predicate; bbox must contain the set.
    static GaugeDomain indicator(int n, Predicate predicate, Box bbox, std::string description = "indicator");

    Kind kind() const { return kind_; }
    int n() const { return n_; }
    const Box& bbox() const { return bbox_; }
    const std::string& description() const { return description_; }
    // Cylinder parameters; UnsupportedOperationError for indicator domains.
    const HPoint& center() const;
    double radius() const;
    bool origin_centered() const;

    bool contains(const HPoint& p) const;
    // Same test on flattened coordinates (2n+1 values), without allocation for cylinders.
    bool contains_coords(const double* c) const;

private:
    GaugeDomain() = default;

    Kind kind_ = Kind::cylinder;
    int n_ = 1;
    HPoint center_;
    double radius_ = 0.0;
    Predicate predicate_;
    Box bbox_;
    std::string description_;
};

bool contains(const GaugeDomain& d, const HPoint& p);

// Sampling-based falsifier of delta-starshapedness: draws `samples` interior points
// (deterministic seed) and checks delta_lambda(xi) in the domain for lambda on a
// uniform grid of [0, 1] with `lambda_steps` intervals. A true result is evidence,
// not proof. Returns false if the origin is not in the domain.
bool is_delta_starshaped(const GaugeDomain& d, int samples, int lambda_steps);

struct GridOptions {
    // Spacing in t. Default: h scaled by (t-extent / largest xy-extent) of the bbox,
    // i.e. the same number of lattice steps along t as along the widest xy axis.
    std::optional<double> t_spacing;
};

class Grid {
public:
    struct Column {
        std::vector<double> z;           // x_1..x_n, y_1..y_n of the column center
        std::vector<std::int32_t> cell;  // cell index by t-lattice index k, -1 if outside
        std::vector<int> lattice;        // 2n integer lattice coordinates
    };

    int n() const { return n_; }
    double h() const { return h_; }
    double ht() const { return ht_; }
    double cell_volume() const { return volume_; }
    std::size_t size() const { return cell_column_.size(); }
    const GaugeDomain& domain() const { return domain_; }

    HPoint center(std::size_t i) const;
    double weight(std::size_t /*i*/) const { return volume_; }
    double t_of(std::size_t i) const { return t_center(cell_k_[i]); }
    double t_center(int k) const { return t_base_ + (k + 0.5) * ht_; }
    int nt() const { return nt_; }

    std::int32_t column_of(std::size_t i) const { return cell_column_[i]; }
    std::int32_t k_of(std::size_t i) const { return cell_k_[i]; }
    const std::vector<Column>& columns() const { return columns_; }
    // Column index at integer xy-lattice coordinates, -1 if none.
    std::int32_t column_at(const std::vector<int>& lattice) const;
    const std::vector<int>& lattice_counts() const { return counts_; }
    double lattice_base(std::size_t axis) const { return base_[axis]; }

    // Sum of weights.
    double volume() const { return volume_ * static_cast<double>(size()); }

    // Index of the cell whose lattice box contains p (nearest cell center in the
    // lattice metric); if that lattice box is not a grid cell, the nearest cell by
    // Euclidean distance among the cells of the nearest column segment is returned.
    std::size_t nearest_cell(const HPoint& p) const;

private:
    friend std::shared_ptr<const Grid> build_grid(const GaugeDomain&, double, const GridOptions&);

    explicit Grid(GaugeDomain d) : domain_(std::move(d)) {}

    GaugeDomain domain_;
    int n_ = 1;
    double h_ = 0.0, ht_ = 0.0, volume_ = 0.0;
    std::vector<double> base_;  // lower lattice corner per xy axis
    std::vector<int> counts_;   // lattice counts per xy axis
    double t_base_ = 0.0;
    int nt_ = 0;
    std::vector<Column> columns_;
    std::vector<std::int32_t> column_lookup_;  // dense over the xy lattice
    std::vector<std::int32_t> cell_column_;
    std::vector<std::int32_t> cell_k_;
};

// Uniform cell-centered lattice over the bbox; keeps cells whose centers lie in d.
std::shared_ptr<const Grid> build_grid(const GaugeDomain& d, double h, const GridOptions& opts = {});

struct BoundaryNode {
    enum class Piece { lateral, top, bottom };
    HPoint point;
    std::vector<double> normal;  // Euclidean outward unit normal, 2n+1 entries
    double weight = 0.0;         // Euclidean surface measure
    Piece piece = Piece::lateral;
};

// Product Gauss rules on the lateral wall and the two flat faces of an
// origin-centered cylinder; m controls the number of nodes per direction.
std::vector<BoundaryNode> boundary_quadrature(const GaugeDomain& d, int m);

}  // namespace hhls
