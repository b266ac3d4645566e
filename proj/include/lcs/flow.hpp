#pragma once

// Numeric flows of symbolic vector fields: adaptive RK4 (step doubling) on the
// state augmented with the variational equations, so flow Jacobians come out
// at integration accuracy instead of from finite differences.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "errors.hpp"
#include "forms.hpp"
#include "numeric.hpp"

namespace lcs {

struct FlowOptions {
    double tol = 1e-9;       // per-step absolute error bound
    double initial_step = 0.05;
    double min_step = 1e-10;
    std::size_t max_steps = 200000;
    double escape_slack = 0.0; // allowed excursion beyond linear coordinate ranges
};

struct FlowResult {
    Vec point;
    Mat jacobian; // d(point)/d(start); empty unless requested
    std::size_t steps = 0;
};

class EscapeError : public EvaluationError {
public:
    using EvaluationError::EvaluationError;
};

class Flow {
public:
    explicit Flow(const VectorField &X, FlowOptions opts = {}) : domain_(X.domain_ptr()), opts_(opts)
    {
        const auto &names = domain_->names();
        field_ = Tape(X.components(), names);
        std::vector<Expr> entries;
        for (const auto &c : X.components()) {
            for (const auto &n : names) {
                entries.push_back(diff(c, n));
            }
        }
        jac_ = Tape(entries, names);
    }

    [[nodiscard]] const CoordinateDomain &domain() const { return *domain_; }

    [[nodiscard]] Vec field(const Vec &x) const
    {
        Vec out(domain_->dim());
        field_.evaluate(as_span(x), {out.data(), static_cast<std::size_t>(out.size())});
        return out;
    }

    [[nodiscard]] Mat field_jacobian(const Vec &x) const
    {
        const int n = domain_->dim();
        std::vector<double> v(static_cast<std::size_t>(n * n));
        jac_.evaluate(as_span(x), v);
        Mat J(n, n);
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < n; ++j) {
                J(i, j) = v[static_cast<std::size_t>(i * n + j)];
            }
        }
        return J;
    }

    // Flow for time t starting at x. Throws EscapeError when a linear
    // coordinate leaves its declared range.
    [[nodiscard]] FlowResult run(const Vec &x, double t, bool with_jacobian = false) const
    {
        const int n = domain_->dim();
        State y{x, with_jacobian ? Mat(Mat::Identity(n, n)) : Mat()};
        FlowResult out;
        if (t == 0.0) {
            out.point = x;
            out.jacobian = y.J;
            return out;
        }
        const double dir = t > 0 ? 1.0 : -1.0;
        double done = 0.0;
        double h = std::min(opts_.initial_step, std::abs(t));
        while (done < std::abs(t)) {
            if (out.steps++ >= opts_.max_steps) {
                throw EvaluationError("flow: step budget exhausted");
            }
            h = std::min(h, std::abs(t) - done);
            const State full = rk4(y, dir * h);
            const State half = rk4(rk4(y, dir * h / 2), dir * h / 2);
            double err = (half.x - full.x).lpNorm<Eigen::Infinity>();
            if (with_jacobian) {
                err = std::max(err, (half.J - full.J).lpNorm<Eigen::Infinity>());
            }
            err /= 15.0;
            if (err <= opts_.tol || h <= opts_.min_step) {
                y.x = half.x + (half.x - full.x) / 15.0;
                if (with_jacobian) {
                    y.J = half.J + (half.J - full.J) / 15.0;
                }
                done += h;
                check_inside(y.x);
                const double grow = err > 0 ? 0.9 * std::pow(opts_.tol / err, 0.2) : 4.0;
                h *= std::clamp(grow, 0.2, 4.0);
            } else {
                h *= std::max(0.2, 0.9 * std::pow(opts_.tol / err, 0.2));
            }
        }
        out.point = y.x;
        out.jacobian = y.J;
        return out;
    }

private:
    struct State {
        Vec x;
        Mat J;
    };

    [[nodiscard]] State deriv(const State &s) const
    {
        State d{field(s.x), Mat()};
        if (s.J.size() != 0) {
            d.J = field_jacobian(s.x) * s.J;
        }
        return d;
    }

    [[nodiscard]] State rk4(const State &s, double h) const
    {
        const bool J = s.J.size() != 0;
        auto step = [&](const State &base, const State &k, double c) {
            State r{base.x + c * k.x, J ? Mat(base.J + c * k.J) : Mat()};
            return r;
        };
        const State k1 = deriv(s);
        const State k2 = deriv(step(s, k1, h / 2));
        const State k3 = deriv(step(s, k2, h / 2));
        const State k4 = deriv(step(s, k3, h));
        State out{s.x + (h / 6) * (k1.x + 2 * k2.x + 2 * k3.x + k4.x), Mat()};
        if (J) {
            out.J = s.J + (h / 6) * (k1.J + 2 * k2.J + 2 * k3.J + k4.J);
        }
        return out;
    }

    void check_inside(const Vec &x) const
    {
        for (int i = 0; i < domain_->dim(); ++i) {
            const auto &c = domain_->coordinate(i);
            if (c.kind == CoordinateKind::Linear &&
                (x[i] < c.lo - opts_.escape_slack || x[i] > c.hi + opts_.escape_slack)) {
                throw EscapeError("flow escapes chart window through coordinate " + c.name + " at " +
                                  format_point(*domain_, x));
            }
        }
    }

    DomainPtr domain_;
    FlowOptions opts_;
    Tape field_;
    Tape jac_;
};

} // namespace lcs
