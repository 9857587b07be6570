#pragma once

// Heisenberg group H^n in real coordinates xi = (x, y, t), x, y in R^n.
//
//   (z, t)(z', t') = (z + z', t + t' + 2 Im(z . conj(z')))
//   Im(z . conj(z')) = sum_j (y_j x'_j - x_j y'_j)
//
// Gauge |xi| = (|z|^4 + t^2)^(1/4), dilations delta_r(z, t) = (r z, r^2 t),
// homogeneous dimension Q = 2n + 2.

#include <cstddef>
#include <vector>

namespace hhls {

struct GroupDim {
    int n = 1;
    int Q = 4;

    explicit GroupDim(int n_);
};

class HPoint {
public:
    // The identity element e = (0, 0, 0) of H^n.
    explicit HPoint(int n = 1);
    HPoint(std::vector<double> x, std::vector<double> y, double t);

    // Convenience for n = 1.
    static HPoint of(double x, double y, double t);
    static HPoint identity(int n) { return HPoint(n); }

    int n() const { return static_cast<int>(x_.size()); }
    const std::vector<double>& x() const { return x_; }
    const std::vector<double>& y() const { return y_; }
    double x(int j) const { return x_[static_cast<std::size_t>(j)]; }
    double y(int j) const { return y_[static_cast<std::size_t>(j)]; }
    double t() const { return t_; }

    // |z|^2 = sum_j x_j^2 + y_j^2.
    double z_norm2() const;

    // Coordinates flattened as (x_1..x_n, y_1..y_n, t).
    std::vector<double> coords() const;
    static HPoint from_coords(const std::vector<double>& c);

    bool operator==(const HPoint& o) const = default;

private:
    std::vector<double> x_;
    std::vector<double> y_;
    double t_ = 0.0;
};

HPoint mul(const HPoint& a, const HPoint& b);
HPoint inv(const HPoint& a);
double gauge_norm(const HPoint& a);
HPoint dilate(double r, const HPoint& a);
// Left-invariant gauge distance |b^{-1} a|.
double dist(const HPoint& a, const HPoint& b);
// Coefficients (x, y, 2t) of E = x d/dx + y d/dy + 2t d/dt at a.
std::vector<double> euler_field(const HPoint& a);
// Plain Euclidean norm of the coordinate vector (x, y, t).
double euclidean_norm(const HPoint& a);

// 2 Im(z_a . conj(z_b)) = 2 sum_j (a.y_j b.x_j - a.x_j b.y_j), the t-twist of mul.
double twist(const HPoint& a, const HPoint& b);

}  // namespace hhls
