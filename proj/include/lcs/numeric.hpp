#pragma once

// Pointwise numeric evaluation of forms, fields and maps, the residual
// certification loop used throughout, and the numeric musical maps.

#include <cmath>
#include <functional>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "domain.hpp"
#include "errors.hpp"
#include "forms.hpp"
#include "parallel.hpp"
#include "symexpr.hpp"

namespace lcs {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

inline std::span<const double> as_span(const Vec &v) { return {v.data(), static_cast<std::size_t>(v.size())}; }

// Compiled coefficients of a form.
class FormEvaluator {
public:
    explicit FormEvaluator(const DifferentialForm &form) : domain_(form.domain_ptr()), degree_(form.degree())
    {
        std::vector<Expr> coeffs;
        for (const auto &[m, c] : form.terms()) {
            masks_.push_back(m);
            coeffs.push_back(c);
        }
        tape_ = Tape(coeffs, domain_->names());
    }

    [[nodiscard]] int degree() const { return degree_; }
    [[nodiscard]] const std::vector<Mask> &masks() const { return masks_; }

    [[nodiscard]] std::vector<double> values(const Vec &p) const
    {
        std::vector<double> out(masks_.size());
        try {
            tape_.evaluate(as_span(p), out);
        } catch (const EvaluationError &e) {
            throw EvaluationError(std::string(e.what()) + " at " + format_point(*domain_, p));
        }
        return out;
    }

    [[nodiscard]] double max_abs(const Vec &p) const
    {
        double m = 0.0;
        for (double v : values(p)) {
            m = std::max(m, std::abs(v));
        }
        return m;
    }

    // 0-form value.
    [[nodiscard]] double scalar(const Vec &p) const
    {
        auto v = values(p);
        return v.empty() ? 0.0 : v.front();
    }

    // Components a(d/dx_i) of a 1-form.
    [[nodiscard]] Vec one_form(const Vec &p) const
    {
        Vec out = Vec::Zero(domain_->dim());
        auto v = values(p);
        for (std::size_t k = 0; k < masks_.size(); ++k) {
            out[std::countr_zero(masks_[k])] = v[k];
        }
        return out;
    }

    // Skew matrix A_ij = Phi(d/dx_i, d/dx_j) of a 2-form.
    [[nodiscard]] Mat two_form(const Vec &p) const
    {
        const int n = domain_->dim();
        Mat A = Mat::Zero(n, n);
        auto v = values(p);
        for (std::size_t k = 0; k < masks_.size(); ++k) {
            const auto idx = indices_of(masks_[k]);
            A(idx[0], idx[1]) = v[k];
            A(idx[1], idx[0]) = -v[k];
        }
        return A;
    }

private:
    DomainPtr domain_;
    int degree_;
    std::vector<Mask> masks_;
    Tape tape_;
};

class FieldEvaluator {
public:
    explicit FieldEvaluator(const VectorField &X) : domain_(X.domain_ptr()), tape_(X.components(), X.domain().names()) {}

    [[nodiscard]] Vec operator()(const Vec &p) const
    {
        Vec out(domain_->dim());
        try {
            tape_.evaluate(as_span(p), {out.data(), static_cast<std::size_t>(out.size())});
        } catch (const EvaluationError &e) {
            throw EvaluationError(std::string(e.what()) + " at " + format_point(*domain_, p));
        }
        return out;
    }

private:
    DomainPtr domain_;
    Tape tape_;
};

struct Residual {
    double max = 0.0;
    Vec worst;
    std::size_t samples = 0;

    [[nodiscard]] bool below(double tol) const { return max < tol; }
};

// Max |coefficient| of a form over a sample set.
inline Residual max_abs(const DifferentialForm &form, const SampleSet &pts)
{
    Residual r;
    r.samples = static_cast<std::size_t>(pts.rows());
    r.worst = pts.rows() > 0 ? Vec(pts.row(0).transpose()) : Vec();
    if (form.is_structurally_zero() || pts.rows() == 0) {
        return r;
    }
    const FormEvaluator ev(form);
    std::vector<double> vals(r.samples);
    parallel_for(r.samples, [&](std::size_t i) { vals[i] = ev.max_abs(pts.row(static_cast<Eigen::Index>(i)).transpose()); });
    for (std::size_t i = 0; i < r.samples; ++i) {
        if (vals[i] > r.max) {
            r.max = vals[i];
            r.worst = pts.row(static_cast<Eigen::Index>(i)).transpose();
        }
    }
    return r;
}

inline Residual max_abs(const Expr &e, const DomainPtr &domain, const SampleSet &pts)
{
    return max_abs(DifferentialForm::function(domain, e), pts);
}

inline Residual max_abs(const VectorField &X, const SampleSet &pts)
{
    Residual r;
    r.samples = static_cast<std::size_t>(pts.rows());
    r.worst = pts.rows() > 0 ? Vec(pts.row(0).transpose()) : Vec();
    const FieldEvaluator ev(X);
    std::vector<double> vals(r.samples);
    parallel_for(r.samples, [&](std::size_t i) {
        vals[i] = ev(pts.row(static_cast<Eigen::Index>(i)).transpose()).cwiseAbs().maxCoeff();
    });
    for (std::size_t i = 0; i < r.samples; ++i) {
        if (vals[i] > r.max) {
            r.max = vals[i];
            r.worst = pts.row(static_cast<Eigen::Index>(i)).transpose();
        }
    }
    return r;
}

// Numerical rank with singular values above rel_tol * sigma_max.
inline int numerical_rank(const Mat &A, double rel_tol = 1e-10)
{
    if (A.size() == 0) {
        return 0;
    }
    Eigen::JacobiSVD<Mat> svd(A);
    const auto &s = svd.singularValues();
    if (s.size() == 0 || s[0] == 0.0) {
        return 0;
    }
    int r = 0;
    for (Eigen::Index i = 0; i < s.size(); ++i) {
        if (s[i] > rel_tol * s[0]) {
            ++r;
        }
    }
    return r;
}

// Orthonormal basis of the null space (columns).
inline Mat null_space(const Mat &A, double rel_tol = 1e-10)
{
    const Eigen::Index n = A.cols();
    if (A.rows() == 0) {
        return Mat::Identity(n, n);
    }
    Eigen::JacobiSVD<Mat> svd(A, Eigen::ComputeFullV);
    const auto &s = svd.singularValues();
    const double top = s.size() > 0 ? s[0] : 0.0;
    Eigen::Index r = 0;
    for (Eigen::Index i = 0; i < s.size(); ++i) {
        if (top > 0.0 && s[i] > rel_tol * top) {
            ++r;
        }
    }
    return svd.matrixV().rightCols(n - r);
}

// Pullback of k-form values through a Jacobian J (target x source):
// (F*a)_I = sum_J a_J det J[J, I].
inline std::vector<std::pair<Mask, double>> pullback_values(const std::vector<Mask> &masks, const std::vector<double> &vals,
                                                            const Mat &J, int degree)
{
    std::vector<std::pair<Mask, double>> out;
    const auto src_dim = static_cast<int>(J.cols());
    for (Mask I : masks_of_degree(src_dim, degree)) {
        const auto cols = indices_of(I);
        double acc = 0.0;
        for (std::size_t k = 0; k < masks.size(); ++k) {
            if (vals[k] == 0.0) {
                continue;
            }
            const auto rows = indices_of(masks[k]);
            Mat sub(degree, degree);
            for (int a = 0; a < degree; ++a) {
                for (int b = 0; b < degree; ++b) {
                    sub(a, b) = J(rows[static_cast<std::size_t>(a)], cols[static_cast<std::size_t>(b)]);
                }
            }
            acc += vals[k] * (degree == 0 ? 1.0 : sub.determinant());
        }
        out.emplace_back(I, acc);
    }
    return out;
}

// sharp: solve i_v Phi = a at a point. Throws RankError when Phi is singular.
inline Vec sharp(const DifferentialForm &phi, const DifferentialForm &a, const Vec &point, double rel_tol = 1e-10)
{
    if (phi.degree() != 2 || a.degree() != 1) {
        throw InputError("sharp: expects a 2-form and a 1-form");
    }
    require_same_domain(phi.domain_ptr(), a.domain_ptr(), "sharp");
    const Mat A = FormEvaluator(phi).two_form(point);
    const Vec rhs = FormEvaluator(a).one_form(point);
    const int rank = numerical_rank(A, rel_tol);
    if (rank < phi.domain().dim()) {
        throw RankError("sharp: 2-form is degenerate at " + format_point(phi.domain(), point) + " (rank " +
                        std::to_string(rank) + " of " + std::to_string(phi.domain().dim()) + ")");
    }
    // (i_v Phi)_j = sum_i v_i A_ij, i.e. A^T v = a.
    return A.transpose().fullPivLu().solve(rhs);
}

struct RankReport {
    int min_rank = 0;
    int max_rank = 0;
    Vec worst;
};

inline RankReport nondegeneracy_rank(const DifferentialForm &phi, const SampleSet &pts, double rel_tol = 1e-10)
{
    if (phi.degree() != 2) {
        throw InputError("nondegeneracy_rank: expects a 2-form");
    }
    const FormEvaluator ev(phi);
    std::vector<int> ranks(static_cast<std::size_t>(pts.rows()));
    parallel_for(ranks.size(), [&](std::size_t i) {
        ranks[i] = numerical_rank(ev.two_form(pts.row(static_cast<Eigen::Index>(i)).transpose()), rel_tol);
    });
    RankReport r{phi.domain().dim(), 0, pts.rows() ? Vec(pts.row(0).transpose()) : Vec()};
    for (std::size_t i = 0; i < ranks.size(); ++i) {
        if (ranks[i] < r.min_rank) {
            r.min_rank = ranks[i];
            r.worst = pts.row(static_cast<Eigen::Index>(i)).transpose();
        }
        r.max_rank = std::max(r.max_rank, ranks[i]);
    }
    if (ranks.empty()) {
        r.min_rank = 0;
    }
    return r;
}

inline RankReport nondegeneracy_rank(const DifferentialForm &phi, std::size_t samples, std::uint64_t seed,
                                     double rel_tol = 1e-10)
{
    return nondegeneracy_rank(phi, sample_points(phi.domain(), samples, seed), rel_tol);
}

// |Pf(A)| = sqrt|det A|: magnitude of the top wedge power coefficient of a
// 2-form up to the factor n!.
inline double pfaffian_magnitude(const Mat &A) { return std::sqrt(std::abs(A.determinant())); }

// ---------------------------------------------------------------------------
// Maps evaluated numerically: symbolic maps compiled to tapes, compositions,
// and maps defined by code (flows). Used wherever a construction is not
// available in closed form.

class NumericMap {
public:
    virtual ~NumericMap() = default;
    [[nodiscard]] virtual int source_dim() const = 0;
    [[nodiscard]] virtual int target_dim() const = 0;
    [[nodiscard]] virtual Vec value(const Vec &x) const = 0;

    // Central differences unless overridden.
    [[nodiscard]] virtual Mat jacobian(const Vec &x) const
    {
        Mat J(target_dim(), source_dim());
        for (int j = 0; j < source_dim(); ++j) {
            const double h = 1e-6 * std::max(1.0, std::abs(x[j]));
            Vec xp = x, xm = x;
            xp[j] += h;
            xm[j] -= h;
            J.col(j) = (value(xp) - value(xm)) / (2.0 * h);
        }
        return J;
    }
};

using NumericMapPtr = std::shared_ptr<const NumericMap>;

class SymbolicMap final : public NumericMap {
public:
    explicit SymbolicMap(const SmoothMap &F) : map_(F), value_(F.components(), F.source()->names())
    {
        std::vector<Expr> entries;
        for (const auto &row : F.jacobian()) {
            entries.insert(entries.end(), row.begin(), row.end());
        }
        jac_ = Tape(entries, F.source()->names());
    }

    [[nodiscard]] int source_dim() const override { return map_.source()->dim(); }
    [[nodiscard]] int target_dim() const override { return map_.target()->dim(); }
    [[nodiscard]] const SmoothMap &map() const { return map_; }

    [[nodiscard]] Vec value(const Vec &x) const override
    {
        Vec out(target_dim());
        try {
            value_.evaluate(as_span(x), {out.data(), static_cast<std::size_t>(out.size())});
        } catch (const EvaluationError &e) {
            throw EvaluationError(std::string(e.what()) + " at " + format_point(*map_.source(), x));
        }
        return out;
    }

    [[nodiscard]] Mat jacobian(const Vec &x) const override
    {
        std::vector<double> v(static_cast<std::size_t>(target_dim() * source_dim()));
        try {
            jac_.evaluate(as_span(x), v);
        } catch (const EvaluationError &e) {
            throw EvaluationError(std::string(e.what()) + " at " + format_point(*map_.source(), x));
        }
        Mat J(target_dim(), source_dim());
        for (int i = 0; i < target_dim(); ++i) {
            for (int j = 0; j < source_dim(); ++j) {
                J(i, j) = v[static_cast<std::size_t>(i * source_dim() + j)];
            }
        }
        return J;
    }

private:
    SmoothMap map_;
    Tape value_;
    Tape jac_;
};

class ComposedMap final : public NumericMap {
public:
    ComposedMap(NumericMapPtr outer, NumericMapPtr inner) : outer_(std::move(outer)), inner_(std::move(inner))
    {
        if (outer_->source_dim() != inner_->target_dim()) {
            throw InputError("ComposedMap: dimension mismatch");
        }
    }
    [[nodiscard]] int source_dim() const override { return inner_->source_dim(); }
    [[nodiscard]] int target_dim() const override { return outer_->target_dim(); }
    [[nodiscard]] Vec value(const Vec &x) const override { return outer_->value(inner_->value(x)); }
    [[nodiscard]] Mat jacobian(const Vec &x) const override
    {
        return outer_->jacobian(inner_->value(x)) * inner_->jacobian(x);
    }

private:
    NumericMapPtr outer_;
    NumericMapPtr inner_;
};

class FunctionMap final : public NumericMap {
public:
    using ValueFn = std::function<Vec(const Vec &)>;
    using JacobianFn = std::function<Mat(const Vec &)>;

    FunctionMap(int source_dim, int target_dim, ValueFn value, JacobianFn jacobian = {})
        : n_(source_dim), m_(target_dim), value_(std::move(value)), jacobian_(std::move(jacobian))
    {
    }
    [[nodiscard]] int source_dim() const override { return n_; }
    [[nodiscard]] int target_dim() const override { return m_; }
    [[nodiscard]] Vec value(const Vec &x) const override { return value_(x); }
    [[nodiscard]] Mat jacobian(const Vec &x) const override
    {
        return jacobian_ ? jacobian_(x) : NumericMap::jacobian(x);
    }

private:
    int n_;
    int m_;
    ValueFn value_;
    JacobianFn jacobian_;
};

inline NumericMapPtr numeric(const SmoothMap &F) { return std::make_shared<const SymbolicMap>(F); }

inline NumericMapPtr compose(NumericMapPtr outer, NumericMapPtr inner)
{
    return std::make_shared<const ComposedMap>(std::move(outer), std::move(inner));
}

// Difference of two points of a domain with angular coordinates reduced to
// the nearest representative modulo 1.
inline Vec chart_difference(const CoordinateDomain &d, const Vec &a, const Vec &b)
{
    Vec diff = a - b;
    for (int i = 0; i < d.dim(); ++i) {
        if (d.coordinate(i).kind == CoordinateKind::Angular) {
            diff[i] -= std::round(diff[i]);
        }
    }
    return diff;
}

// max |G*a - b| over source points, G*a formed from the Jacobian of G. `a`
// lives on G's target, `b` on its source.
inline Residual pullback_residual(const NumericMap &G, const DifferentialForm &a, const DifferentialForm &b,
                                  const SampleSet &pts)
{
    if (a.degree() != b.degree()) {
        throw InputError("pullback_residual: degree mismatch");
    }
    if (G.target_dim() != a.domain().dim() || G.source_dim() != b.domain().dim()) {
        throw InputError("pullback_residual: map dimensions do not match the forms");
    }
    const FormEvaluator ea(a), eb(b);
    Residual r;
    r.samples = static_cast<std::size_t>(pts.rows());
    r.worst = pts.rows() > 0 ? Vec(pts.row(0).transpose()) : Vec();
    std::vector<double> vals(r.samples);
    parallel_for(r.samples, [&](std::size_t i) {
        const Vec p = pts.row(static_cast<Eigen::Index>(i)).transpose();
        auto pulled = pullback_values(ea.masks(), ea.values(G.value(p)), G.jacobian(p), a.degree());
        const auto bv = eb.values(p);
        for (std::size_t k = 0; k < bv.size(); ++k) {
            for (auto &[m, v] : pulled) {
                if (m == eb.masks()[k]) {
                    v -= bv[k];
                }
            }
        }
        double worst = 0.0;
        for (const auto &mv : pulled) {
            worst = std::max(worst, std::abs(mv.second));
        }
        vals[i] = worst;
    });
    for (std::size_t i = 0; i < r.samples; ++i) {
        if (std::isnan(vals[i]) || vals[i] > r.max) {
            r.max = vals[i];
            r.worst = pts.row(static_cast<Eigen::Index>(i)).transpose();
            if (std::isnan(vals[i])) {
                break;
            }
        }
    }
    return r;
}

} // namespace lcs
