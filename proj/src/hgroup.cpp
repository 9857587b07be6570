#include "hhls/hgroup.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>

#include "hhls/errors.hpp"

namespace hhls {

namespace {

void require_same_dim(const HPoint& a, const HPoint& b, const char* op) {
    if (a.n() != b.n()) {
        throw UsageError(std::string(op) + ": dimension mismatch (n=" + std::to_string(a.n()) +
                         " vs n=" + std::to_string(b.n()) + ")");
    }
}

}  // namespace

GroupDim::GroupDim(int n_) : n(n_), Q(2 * n_ + 2) {
    if (n_ < 1) throw UsageError("GroupDim: n must be >= 1");
}

HPoint::HPoint(int n) : x_(static_cast<std::size_t>(n), 0.0), y_(static_cast<std::size_t>(n), 0.0) {
    if (n < 1) throw UsageError("HPoint: n must be >= 1");
}

HPoint::HPoint(std::vector<double> x, std::vector<double> y, double t)
    : x_(std::move(x)), y_(std::move(y)), t_(t) {
    if (x_.empty() || x_.size() != y_.size()) {
        throw UsageError("HPoint: x and y must have equal length n >= 1");
    }
    bool finite = std::isfinite(t_);
    for (std::size_t j = 0; j < x_.size(); ++j) finite = finite && std::isfinite(x_[j]) && std::isfinite(y_[j]);
    if (!finite) throw UsageError("HPoint: coordinates must be finite");
}

HPoint HPoint::of(double x, double y, double t) { return HPoint({x}, {y}, t); }

double HPoint::z_norm2() const {
    double s = 0.0;
    for (std::size_t j = 0; j < x_.size(); ++j) s += x_[j] * x_[j] + y_[j] * y_[j];
    return s;
}

std::vector<double> HPoint::coords() const {
    std::vector<double> c;
    c.reserve(2 * x_.size() + 1);
    c.insert(c.end(), x_.begin(), x_.end());
    c.insert(c.end(), y_.begin(), y_.end());
    c.push_back(t_);
    return c;
}

HPoint HPoint::from_coords(const std::vector<double>& c) {
    if (c.size() < 3 || c.size() % 2 == 0) {
        throw UsageError("HPoint::from_coords: expected 2n+1 coordinates");
    }
    const std::size_t n = (c.size() - 1) / 2;
    return HPoint(std::vector<double>(c.begin(), c.begin() + static_cast<std::ptrdiff_t>(n)),
                  std::vector<double>(c.begin() + static_cast<std::ptrdiff_t>(n),
                                      c.begin() + static_cast<std::ptrdiff_t>(2 * n)),
                  c.back());
}

double twist(const HPoint& a, const HPoint& b) {
    require_same_dim(a, b, "twist");
    double s = 0.0;
    for (int j = 0; j < a.n(); ++j) s += a.y(j) * b.x(j) - a.x(j) * b.y(j);
    return 2.0 * s;
}

HPoint mul(const HPoint& a, const HPoint& b) {
    require_same_dim(a, b, "mul");
    const auto n = static_cast<std::size_t>(a.n());
    std::vector<double> x(n), y(n);
    for (std::size_t j = 0; j < n; ++j) {
        x[j] = a.x()[j] + b.x()[j];
        y[j] = a.y()[j] + b.y()[j];
    }
    return HPoint(std::move(x), std::move(y), a.t() + b.t() + twist(a, b));
}

HPoint inv(const HPoint& a) {
    std::vector<double> x(a.x()), y(a.y());
    for (auto& v : x) v = -v;
    for (auto& v : y) v = -v;
    return HPoint(std::move(x), std::move(y), -a.t());
}

double gauge_norm(const HPoint& a) {
    const double r2 = a.z_norm2();
    // (r2^2 + t^2)^{1/4} = sqrt(hypot(r2, t)); hypot avoids overflow of r2^2.
    if (r2 < 1e300) return std::sqrt(std::hypot(r2, a.t()));
    // |z|^2 itself overflows: scale z by s = max |z_j| first.
    double s = 0.0;
    for (double v : a.x()) s = std::max(s, std::abs(v));
    for (double v : a.y()) s = std::max(s, std::abs(v));
    double w2 = 0.0;
    for (double v : a.x()) w2 += (v / s) * (v / s);
    for (double v : a.y()) w2 += (v / s) * (v / s);
    // |a| = s (w^4 + (t/s^2)^2)^{1/4}.
    return s * std::sqrt(std::hypot(w2, a.t() / s / s));
}

HPoint dilate(double r, const HPoint& a) {
    if (!(r > 0.0) || !std::isfinite(r)) throw UsageError("dilate: r must be a positive finite real");
    std::vector<double> x(a.x()), y(a.y());
    for (auto& v : x) v *= r;
    for (auto& v : y) v *= r;
    return HPoint(std::move(x), std::move(y), r * r * a.t());
}

double dist(const HPoint& a, const HPoint& b) {
    require_same_dim(a, b, "dist");
    return gauge_norm(mul(inv(b), a));
}

std::vector<double> euler_field(const HPoint& a) {
    std::vector<double> e = a.coords();
    e.back() *= 2.0;
    return e;
}

double euclidean_norm(const HPoint& a) { return std::sqrt(a.z_norm2() + a.t() * a.t()); }

}  // namespace hhls
