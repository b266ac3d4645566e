#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "errors.hpp"
#include "parallel.hpp"
#include "symexpr.hpp"

namespace lcs {

enum class CoordinateKind { Linear, Angular };

struct Coordinate {
    std::string name;
    CoordinateKind kind = CoordinateKind::Linear;
    double lo = -1.0; // sampling window for linear coordinates
    double hi = 1.0;

    static Coordinate linear(std::string n, double lo, double hi) { return {std::move(n), CoordinateKind::Linear, lo, hi}; }
    // Angular coordinates have period 1 and sample in [0, 1).
    static Coordinate angular(std::string n) { return {std::move(n), CoordinateKind::Angular, 0.0, 1.0}; }

    friend bool operator==(const Coordinate &, const Coordinate &) = default;
};

// Optional extra window: sum of squares of the listed linear coordinates stays
// below `radius2`. Graph charts over a ball use this.
struct BallConstraint {
    std::vector<int> indices;
    double radius2 = 1.0;

    friend bool operator==(const BallConstraint &, const BallConstraint &) = default;
};

// A named coordinate chart. Dimension is the number of coordinates; names are
// unique.
class CoordinateDomain {
public:
    CoordinateDomain(std::string name, std::vector<Coordinate> coords) : name_(std::move(name)), coords_(std::move(coords))
    {
        if (coords_.size() > 64) {
            throw InputError("domain '" + name_ + "': at most 64 coordinates are supported");
        }
        for (std::size_t i = 0; i < coords_.size(); ++i) {
            names_.push_back(coords_[i].name);
            if (coords_[i].kind == CoordinateKind::Linear && !(coords_[i].lo < coords_[i].hi)) {
                throw InputError("domain '" + name_ + "': empty range for '" + coords_[i].name + "'");
            }
            for (std::size_t j = 0; j < i; ++j) {
                if (coords_[j].name == coords_[i].name) {
                    throw InputError("domain '" + name_ + "': duplicate coordinate '" + coords_[i].name + "'");
                }
            }
        }
    }

    CoordinateDomain(std::string name, std::vector<Coordinate> coords, BallConstraint ball)
        : CoordinateDomain(std::move(name), std::move(coords))
    {
        for (int i : ball.indices) {
            if (i < 0 || i >= dim() || coords_[static_cast<std::size_t>(i)].kind != CoordinateKind::Linear) {
                throw InputError("domain '" + name_ + "': ball constraint needs linear coordinates");
            }
        }
        if (!(ball.radius2 > 0.0)) {
            throw InputError("domain '" + name_ + "': ball radius must be positive");
        }
        ball_ = std::move(ball);
    }

    [[nodiscard]] const std::string &name() const { return name_; }
    [[nodiscard]] const std::optional<BallConstraint> &ball() const { return ball_; }
    [[nodiscard]] int dim() const { return static_cast<int>(coords_.size()); }
    [[nodiscard]] const std::vector<Coordinate> &coordinates() const { return coords_; }
    [[nodiscard]] const Coordinate &coordinate(int i) const { return coords_.at(static_cast<std::size_t>(i)); }
    [[nodiscard]] const std::vector<std::string> &names() const { return names_; }

    [[nodiscard]] int index_of(const std::string &coord) const
    {
        auto it = std::find(names_.begin(), names_.end(), coord);
        if (it == names_.end()) {
            throw InputError("unknown coordinate '" + coord + "' on domain '" + name_ + "'");
        }
        return static_cast<int>(it - names_.begin());
    }
    [[nodiscard]] bool has(const std::string &coord) const
    {
        return std::find(names_.begin(), names_.end(), coord) != names_.end();
    }
    [[nodiscard]] Expr var(const std::string &coord) const
    {
        (void)index_of(coord);
        return Expr::variable(coord);
    }
    [[nodiscard]] Expr var(int i) const { return Expr::variable(coords_.at(static_cast<std::size_t>(i)).name); }

    // Whether a point lies in the sampling window (angular coordinates always do).
    [[nodiscard]] bool contains(const Eigen::VectorXd &p, double slack = 0.0) const
    {
        for (int i = 0; i < dim(); ++i) {
            const auto &c = coords_[static_cast<std::size_t>(i)];
            if (c.kind == CoordinateKind::Linear && (p[i] < c.lo - slack || p[i] > c.hi + slack)) {
                return false;
            }
        }
        if (ball_) {
            double r2 = 0.0;
            for (int i : ball_->indices) {
                r2 += p[i] * p[i];
            }
            if (r2 > ball_->radius2 + slack) {
                return false;
            }
        }
        return true;
    }

    friend bool operator==(const CoordinateDomain &a, const CoordinateDomain &b)
    {
        return a.coords_ == b.coords_ && a.ball_ == b.ball_;
    }

private:
    std::string name_;
    std::vector<Coordinate> coords_;
    std::vector<std::string> names_;
    std::optional<BallConstraint> ball_;
};

using DomainPtr = std::shared_ptr<const CoordinateDomain>;

inline DomainPtr make_domain(std::string name, std::vector<Coordinate> coords)
{
    return std::make_shared<const CoordinateDomain>(std::move(name), std::move(coords));
}

inline DomainPtr make_domain(std::string name, std::vector<Coordinate> coords, BallConstraint ball)
{
    return std::make_shared<const CoordinateDomain>(std::move(name), std::move(coords), std::move(ball));
}

inline bool same_domain(const DomainPtr &a, const DomainPtr &b) { return a == b || (a && b && *a == *b); }

// Domain-checked derivative: `x` must be a declared coordinate.
inline Expr diff(const Expr &e, const std::string &x, const CoordinateDomain &domain)
{
    (void)domain.index_of(x);
    return diff(e, x);
}

// Deterministic uniform variates in [0,1) built directly from mt19937_64 bits
// so sample sets are identical across standard library implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
    std::uint64_t bits() { return gen_(); }

private:
    std::mt19937_64 gen_;
};

// Rows are points.
using SampleSet = Eigen::MatrixXd;

inline SampleSet sample_points(const CoordinateDomain &domain, std::size_t count, std::uint64_t seed)
{
    Rng rng(seed);
    SampleSet pts(static_cast<Eigen::Index>(count), domain.dim());
    for (Eigen::Index r = 0; r < pts.rows(); ++r) {
        // rejection against the ball window; the box must meet the ball
        for (int attempt = 0;; ++attempt) {
            for (int c = 0; c < domain.dim(); ++c) {
                const auto &co = domain.coordinate(c);
                pts(r, c) = co.kind == CoordinateKind::Angular ? rng.uniform() : rng.uniform(co.lo, co.hi);
            }
            if (!domain.ball() || domain.contains(pts.row(r).transpose())) {
                break;
            }
            if (attempt > 100000) {
                throw InputError("domain '" + domain.name() + "': ball window has negligible volume");
            }
        }
    }
    return pts;
}

inline std::string format_point(const CoordinateDomain &domain, const Eigen::VectorXd &p)
{
    std::string s = "(";
    for (int i = 0; i < domain.dim(); ++i) {
        if (i) {
            s += ", ";
        }
        s += domain.coordinate(i).name + "=" + detail::format_double(p[i]);
    }
    return s + ")";
}

struct ZeroTest {
    bool zero = false;
    double max_residual = 0.0;
    Eigen::VectorXd worst_point;
};

// Multi-point numeric zero test. Evaluation failures are reported with the
// offending point.
inline ZeroTest is_zero(const Expr &e, const CoordinateDomain &domain, std::size_t samples, double tol,
                        std::uint64_t seed)
{
    if (samples < 1) {
        throw InputError("is_zero: need at least one sample");
    }
    if (!(tol > 0.0)) {
        throw InputError("is_zero: tolerance must be positive");
    }
    const SampleSet pts = sample_points(domain, samples, seed);
    Tape tape(std::span<const Expr>(&e, 1), domain.names());
    std::vector<double> vals(samples);
    parallel_for(samples, [&](std::size_t i) {
        Eigen::VectorXd p = pts.row(static_cast<Eigen::Index>(i)).transpose();
        try {
            tape.evaluate(std::span<const double>(p.data(), static_cast<std::size_t>(p.size())),
                          std::span<double>(&vals[i], 1));
        } catch (const EvaluationError &err) {
            throw EvaluationError(std::string(err.what()) + " at " + format_point(domain, p));
        }
    });
    ZeroTest out;
    out.worst_point = pts.row(0).transpose();
    for (std::size_t i = 0; i < samples; ++i) {
        const double a = std::abs(vals[i]);
        if (a > out.max_residual) {
            out.max_residual = a;
            out.worst_point = pts.row(static_cast<Eigen::Index>(i)).transpose();
        }
    }
    out.zero = out.max_residual < tol;
    return out;
}

} // namespace lcs
