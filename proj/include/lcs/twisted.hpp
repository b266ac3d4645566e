#pragma once

// Twisted de Rham calculus: d_w, the conformal action, Lee form extraction,
// period lattices and morphism classification.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "errors.hpp"
#include "forms.hpp"
#include "numeric.hpp"

namespace lcs {

inline DifferentialForm d_twisted(const DifferentialForm &omega, const DifferentialForm &a)
{
    require_same_domain(omega.domain_ptr(), a.domain_ptr(), "d_twisted");
    if (omega.degree() != 1) {
        throw InputError("d_twisted: twisting form must have degree 1");
    }
    return ext_d(a) - wedge(omega, a);
}

struct Rescaled {
    DifferentialForm form;
    DifferentialForm omega;
};

// (a, w) -> (e^f a, w + df): intertwines d_w and d_{w+df}.
inline Rescaled conformal_rescale(const Expr &f, const DifferentialForm &a, const DifferentialForm &omega)
{
    require_same_domain(omega.domain_ptr(), a.domain_ptr(), "conformal_rescale");
    return {exp(f) * a, omega + d_of(omega.domain_ptr(), f)};
}

// ---------------------------------------------------------------------------
// Period lattices.

struct PeriodLattice {
    std::vector<double> periods;
    int rank = 0;
    std::vector<double> basis;
    bool integral = false;
};

namespace detail {

inline long long ipow_budget(long long budget, int r)
{
    // largest B with B * (2B+1)^(r-1) <= budget
    long long B = 1;
    while (true) {
        const long long n = B + 1;
        double cost = static_cast<double>(n);
        for (int i = 1; i < r; ++i) {
            cost *= static_cast<double>(2 * n + 1);
        }
        if (cost > static_cast<double>(budget)) {
            return B;
        }
        B = n;
    }
}

// Enumerates c[0..r-2] in [-B,B] and solves the last coordinate by rounding.
// Calls test(c) for every candidate; stops when it returns true.
template <class Test>
bool enumerate_coefficients(const std::vector<double> &basis, double target, long long B, Test &&test)
{
    const int r = static_cast<int>(basis.size());
    std::vector<long long> c(static_cast<std::size_t>(r), 0);
    if (r == 0) {
        return test(c);
    }
    for (int i = 0; i + 1 < r; ++i) {
        c[static_cast<std::size_t>(i)] = -B;
    }
    while (true) {
        double partial = target;
        for (int i = 0; i + 1 < r; ++i) {
            partial -= static_cast<double>(c[static_cast<std::size_t>(i)]) * basis[static_cast<std::size_t>(i)];
        }
        c.back() = std::llround(partial / basis.back());
        if (test(c)) {
            return true;
        }
        int i = 0;
        for (; i + 1 < r; ++i) {
            if (++c[static_cast<std::size_t>(i)] <= B) {
                break;
            }
            c[static_cast<std::size_t>(i)] = -B;
        }
        if (i + 1 >= r) {
            return false;
        }
    }
}

} // namespace detail

struct IntegerRelation {
    long long c0 = 0;                // multiplier of the tested value
    std::vector<long long> coeffs;   // multipliers of the basis
};

// Bounded search for c0*x = sum c_j b_j with 1 <= c0 <= bound, |c_j| <= bound,
// absolute tolerance tol. For more than one basis element the per-coordinate
// bound shrinks so the whole enumeration stays within `budget` candidates.
inline std::optional<IntegerRelation> integer_relation(double x, const std::vector<double> &basis, double tol,
                                                       long long bound = 1000000, long long budget = 10000000)
{
    if (basis.empty()) {
        if (std::abs(x) < tol) {
            return IntegerRelation{1, {}};
        }
        return std::nullopt;
    }
    const int r = static_cast<int>(basis.size());
    const long long B = r == 1 ? bound : std::min(bound, detail::ipow_budget(budget, r));
    std::optional<IntegerRelation> found;
    for (long long c0 = 1; c0 <= B && !found; ++c0) {
        const double target = static_cast<double>(c0) * x;
        detail::enumerate_coefficients(basis, target, r == 1 ? 0 : B, [&](const std::vector<long long> &c) {
            if (std::llabs(c.back()) > bound) {
                return false;
            }
            double s = target;
            for (int i = 0; i < r; ++i) {
                s -= static_cast<double>(c[static_cast<std::size_t>(i)]) * basis[static_cast<std::size_t>(i)];
            }
            if (std::abs(s) < tol) {
                found = IntegerRelation{c0, c};
                return true;
            }
            return false;
        });
    }
    return found;
}

// Whether x is an integer combination of the basis (c0 = 1).
inline bool in_lattice(double x, const std::vector<double> &basis, double tol, long long bound = 1000000,
                       long long budget = 10000000)
{
    if (basis.empty()) {
        return std::abs(x) < tol;
    }
    const int r = static_cast<int>(basis.size());
    const long long B = r == 1 ? 0 : std::min(bound, detail::ipow_budget(budget, r));
    return detail::enumerate_coefficients(basis, x, B, [&](const std::vector<long long> &c) {
        double s = x;
        for (int i = 0; i < r; ++i) {
            s -= static_cast<double>(c[static_cast<std::size_t>(i)]) * basis[static_cast<std::size_t>(i)];
        }
        return std::abs(s) < tol;
    });
}

inline PeriodLattice lattice_from_periods(const std::vector<double> &periods, double tol, long long bound = 1000000)
{
    PeriodLattice L;
    L.periods = periods;
    struct Rel {
        long long num;
        long long den;
    };
    std::vector<Rel> rank1; // p_i = num/den * basis[0]
    for (double p : periods) {
        if (std::abs(p) < tol) {
            continue;
        }
        const auto rel = integer_relation(p, L.basis, tol, bound);
        if (!rel) {
            L.basis.push_back(p);
            rank1.push_back({1, 1});
            continue;
        }
        if (L.basis.size() == 1) {
            const long long g = std::gcd(rel->c0, rel->coeffs[0]);
            rank1.push_back({rel->coeffs[0] / g, rel->c0 / g});
        }
    }
    L.rank = static_cast<int>(L.basis.size());
    if (L.rank == 1) {
        // generator = b * gcd(numerators) / lcm(denominators)
        long long num = 0, den = 1;
        bool overflow = false;
        for (const auto &r : rank1) {
            num = std::gcd(num, std::llabs(r.num));
            const long long l = std::lcm(den, r.den);
            if (l <= 0 || l > 1000000000000LL) {
                overflow = true;
                break;
            }
            den = l;
        }
        if (!overflow && num > 0) {
            L.basis[0] = std::abs(L.basis[0]) * static_cast<double>(num) / static_cast<double>(den);
        } else {
            L.basis[0] = std::abs(L.basis[0]);
        }
        L.integral = std::abs(L.basis[0] - 1.0) < tol;
    }
    return L;
}

// Lambda_a subset of Lambda_b.
inline bool lattice_contained(const PeriodLattice &a, const PeriodLattice &b, double tol, long long bound = 1000000)
{
    for (double x : a.basis) {
        if (!in_lattice(x, b.basis, tol, bound)) {
            return false;
        }
    }
    return true;
}

// Integral of a 1-form over a loop [0,1] -> domain.
inline double loop_period(const DifferentialForm &omega, const SmoothMap &loop, double tol)
{
    if (omega.degree() != 1) {
        throw InputError("loop_period: need a 1-form");
    }
    if (loop.source()->dim() != 1) {
        throw InputError("loop_period: loop must have a one-dimensional source");
    }
    require_same_domain(loop.target(), omega.domain_ptr(), "loop_period");
    const auto F = numeric(loop);
    Vec a(1), b(1);
    a << 0.0;
    b << 1.0;
    const double gap = chart_difference(*loop.target(), F->value(a), F->value(b)).lpNorm<Eigen::Infinity>();
    if (gap >= tol) {
        throw InputError("loop_period: curve is not closed (endpoint gap " + detail::format_double(gap) + ")");
    }
    const auto pb = pullback(loop, omega);
    const Expr integrand = pb.coefficient(Mask{1});
    const std::vector<std::string> vars = loop.source()->names();
    Tape tape(std::span<const Expr>(&integrand, 1), vars);
    auto f = [&](double t) {
        double v = 0.0;
        tape.evaluate(std::span<const double>(&t, 1), std::span<double>(&v, 1));
        return v;
    };
    double err = 0.0;
    const double I = boost::math::quadrature::gauss_kronrod<double, 61>::integrate(f, 0.0, 1.0, 15, 1e-14, &err);
    if (!(err <= std::max(tol, 1e-12 * std::abs(I)))) {
        throw EvaluationError("loop_period: quadrature did not converge (error estimate " + detail::format_double(err) +
                              ")");
    }
    return I;
}

inline PeriodLattice period_lattice(const DifferentialForm &omega, const std::vector<SmoothMap> &loops, double tol,
                                    long long bound = 1000000)
{
    std::vector<double> periods;
    for (const auto &l : loops) {
        periods.push_back(loop_period(omega, l, tol));
    }
    return lattice_from_periods(periods, tol, bound);
}

// ---------------------------------------------------------------------------
// Lee form extraction.

struct LeeData {
    std::optional<DifferentialForm> omega; // present when an ansatz was fitted
    std::vector<double> coefficients;      // ansatz coefficients
    Mat pointwise;                         // least-squares nu per sample (rows)
    SampleSet samples;
    double fit_residual = 0.0;        // max |dPhi - nu ^ Phi|
    double closedness_residual = 0.0; // max |d omega|
    Vec worst_point;
    PeriodLattice lattice;
};

struct LeeOptions {
    std::size_t samples = 100;
    std::uint64_t seed = 1;
    double tol = 1e-8;
    double closed_tol = 1e-6; // finite-difference closedness test in pointwise mode
    double rank_tol = 1e-10;
};

namespace detail {

struct WedgeSystem {
    std::vector<Mask> masks3;
    std::vector<FormEvaluator> columns; // basis_i ^ Phi
    FormEvaluator dphi;

    static std::vector<double> dense(const FormEvaluator &ev, const std::vector<Mask> &masks, const Vec &p)
    {
        const auto v = ev.values(p);
        std::vector<double> out(masks.size(), 0.0);
        for (std::size_t t = 0; t < ev.masks().size(); ++t) {
            const auto it = std::lower_bound(masks.begin(), masks.end(), ev.masks()[t]);
            out[static_cast<std::size_t>(it - masks.begin())] = v[t];
        }
        return out;
    }

    [[nodiscard]] Mat matrix(const Vec &p) const
    {
        Mat A(static_cast<Eigen::Index>(masks3.size()), static_cast<Eigen::Index>(columns.size()));
        for (std::size_t j = 0; j < columns.size(); ++j) {
            const auto col = dense(columns[j], masks3, p);
            for (std::size_t i = 0; i < col.size(); ++i) {
                A(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = col[i];
            }
        }
        return A;
    }

    [[nodiscard]] Vec rhs(const Vec &p) const
    {
        const auto v = dense(dphi, masks3, p);
        return Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size()));
    }
};

inline WedgeSystem wedge_system(const DifferentialForm &phi, const std::vector<DifferentialForm> &basis)
{
    auto masks = masks_of_degree(phi.domain().dim(), 3);
    std::sort(masks.begin(), masks.end());
    std::vector<FormEvaluator> cols;
    for (const auto &b : basis) {
        cols.emplace_back(wedge(b, phi));
    }
    return {std::move(masks), std::move(cols), FormEvaluator(ext_d(phi))};
}

} // namespace detail

// Solves dPhi = nu ^ Phi for nu by least squares: pointwise over all
// coordinate 1-forms, or globally over the span of `ansatz` when given.
inline LeeData extract_lee(const DifferentialForm &phi, const std::vector<DifferentialForm> &ansatz = {},
                           const LeeOptions &opts = {})
{
    if (phi.degree() != 2) {
        throw InputError("extract_lee: need a 2-form");
    }
    const auto &D = phi.domain_ptr();
    const int n = D->dim();
    if (n < 4) {
        throw InputError("extract_lee: the Lee form is only determined in dimension >= 4");
    }
    LeeData out;
    out.samples = sample_points(*D, opts.samples, opts.seed);
    const auto N = static_cast<std::size_t>(out.samples.rows());

    std::vector<DifferentialForm> coords;
    for (int i = 0; i < n; ++i) {
        coords.push_back(DifferentialForm::basis(D, {D->names()[static_cast<std::size_t>(i)]}));
    }
    const auto pointwise_sys = detail::wedge_system(phi, coords);

    auto solve_at = [&](const Vec &p) {
        const Mat A = pointwise_sys.matrix(p);
        const int rank = numerical_rank(A, opts.rank_tol);
        if (rank < n) {
            throw RankError("extract_lee: nu -> nu^Phi has rank " + std::to_string(rank) + " < " + std::to_string(n) +
                            " at " + format_point(*D, p));
        }
        const Vec b = pointwise_sys.rhs(p);
        const Vec nu = A.colPivHouseholderQr().solve(b);
        return std::pair<Vec, double>{nu, (A * nu - b).lpNorm<Eigen::Infinity>()};
    };

    out.pointwise.resize(static_cast<Eigen::Index>(N), n);
    std::vector<double> res(N), closed(N, 0.0);
    parallel_for(N, [&](std::size_t i) {
        const Vec p = out.samples.row(static_cast<Eigen::Index>(i)).transpose();
        auto [nu, r] = solve_at(p);
        out.pointwise.row(static_cast<Eigen::Index>(i)) = nu.transpose();
        res[i] = r;
        if (ansatz.empty()) {
            // antisymmetric part of the finite-difference Jacobian of nu
            const double h = 1e-5;
            Mat Jn(n, n);
            for (int j = 0; j < n; ++j) {
                Vec pp = p, pm = p;
                pp[j] += h;
                pm[j] -= h;
                Jn.col(j) = (solve_at(pp).first - solve_at(pm).first) / (2 * h);
            }
            closed[i] = (Jn - Jn.transpose()).lpNorm<Eigen::Infinity>();
        }
    });

    if (!ansatz.empty()) {
        for (const auto &b : ansatz) {
            require_same_domain(b.domain_ptr(), D, "extract_lee ansatz");
            if (b.degree() != 1) {
                throw InputError("extract_lee: ansatz forms must have degree 1");
            }
        }
        const auto sys = detail::wedge_system(phi, ansatz);
        const auto rows = static_cast<Eigen::Index>(sys.masks3.size());
        Mat A(rows * static_cast<Eigen::Index>(N), static_cast<Eigen::Index>(ansatz.size()));
        Vec b(rows * static_cast<Eigen::Index>(N));
        parallel_for(N, [&](std::size_t i) {
            const Vec p = out.samples.row(static_cast<Eigen::Index>(i)).transpose();
            A.middleRows(static_cast<Eigen::Index>(i) * rows, rows) = sys.matrix(p);
            b.segment(static_cast<Eigen::Index>(i) * rows, rows) = sys.rhs(p);
        });
        const Vec c = A.colPivHouseholderQr().solve(b);
        DifferentialForm omega(D, 1);
        for (std::size_t a = 0; a < ansatz.size(); ++a) {
            out.coefficients.push_back(c[static_cast<Eigen::Index>(a)]);
            if (c[static_cast<Eigen::Index>(a)] != 0.0) {
                omega += Expr(c[static_cast<Eigen::Index>(a)]) * ansatz[a];
            }
        }
        const Vec r = A * c - b;
        for (std::size_t i = 0; i < N; ++i) {
            res[i] = r.segment(static_cast<Eigen::Index>(i) * rows, rows).lpNorm<Eigen::Infinity>();
        }
        out.closedness_residual = n >= 2 ? max_abs(ext_d(omega), out.samples).max : 0.0;
        out.omega = std::move(omega);
    } else {
        out.closedness_residual = *std::max_element(closed.begin(), closed.end());
    }

    std::size_t worst = 0;
    for (std::size_t i = 0; i < N; ++i) {
        if (res[i] > res[worst]) {
            worst = i;
        }
    }
    out.fit_residual = res[worst];
    out.worst_point = out.samples.row(static_cast<Eigen::Index>(worst)).transpose();
    if (!(out.fit_residual < opts.tol)) {
        throw CertificationError("extract_lee: not l.c.s., dPhi - nu^Phi residual " +
                                 detail::format_double(out.fit_residual) + " at " + format_point(*D, out.worst_point));
    }
    // in dimension 4 nu always exists pointwise; closedness is the real test
    const double ctol = ansatz.empty() ? opts.closed_tol : opts.tol;
    if (!(out.closedness_residual < ctol)) {
        throw CertificationError("extract_lee: not l.c.s., Lee form candidate is not closed (residual " +
                                 detail::format_double(out.closedness_residual) + ")");
    }
    return out;
}

// ---------------------------------------------------------------------------
// Morphisms.

struct MorphismOptions {
    std::size_t samples = 200;
    std::uint64_t seed = 1;
    double tol = 1e-9;
    double scaling_tol = 1e-8;
    long long bound = 1000000;
};

struct MorphismReport {
    bool strict = false;
    double strict_residual = 0.0;   // max |F*w' - w|
    bool conformal = false;
    double period_residual = 0.0;   // max |period of F*w' - w| over source loops
    double scaling_residual = 0.0;  // path dependence of the recovered scaling function
    bool full = false;
    PeriodLattice source;
    PeriodLattice target;
    bool source_in_target = false;
    int rank_decrease = 0; // target rank - source rank
};

namespace detail {

// Integral of a 1-form along the straight segment a -> b in chart coordinates.
inline double segment_integral(const FormEvaluator &ev, const Vec &a, const Vec &b)
{
    const Vec d = b - a;
    auto f = [&](double t) {
        const Vec p = a + t * d;
        return ev.one_form(p).dot(d);
    };
    return boost::math::quadrature::gauss_kronrod<double, 31>::integrate(f, 0.0, 1.0, 10, 1e-13);
}

} // namespace detail

// Scaling function f with df = delta recovered by line integration from a
// basepoint (f(base) = 0) along the straight segment.
inline double scaling_value(const DifferentialForm &delta, const Vec &base, const Vec &p)
{
    return detail::segment_integral(FormEvaluator(delta), base, p);
}

inline MorphismReport classify_morphism(const SmoothMap &F, const DifferentialForm &omega,
                                        const DifferentialForm &omega_t, const std::vector<SmoothMap> &source_loops,
                                        const std::vector<SmoothMap> &target_loops, const MorphismOptions &opts = {})
{
    require_same_domain(F.source(), omega.domain_ptr(), "classify_morphism (source)");
    require_same_domain(F.target(), omega_t.domain_ptr(), "classify_morphism (target)");
    MorphismReport R;
    const auto &D = F.source();
    const auto pts = sample_points(*D, opts.samples, opts.seed);
    const DifferentialForm delta = pullback(F, omega_t) - omega;
    R.strict_residual = max_abs(delta, pts).max;
    R.strict = R.strict_residual < opts.tol;

    for (const auto &l : source_loops) {
        R.period_residual = std::max(R.period_residual, std::abs(loop_period(delta, l, opts.tol)));
    }
    // path independence: straight segment versus the axis-wise staircase
    const FormEvaluator ev(delta);
    Vec base(D->dim());
    for (int i = 0; i < D->dim(); ++i) {
        const auto &c = D->coordinate(i);
        base[i] = c.kind == CoordinateKind::Angular ? 0.5 : 0.5 * (c.lo + c.hi);
    }
    const std::size_t m = std::min<std::size_t>(opts.samples, 50);
    std::vector<double> dep(m);
    parallel_for(m, [&](std::size_t s) {
        const Vec p = pts.row(static_cast<Eigen::Index>(s)).transpose();
        const double straight = detail::segment_integral(ev, base, p);
        double stair = 0.0;
        Vec cur = base;
        for (int i = 0; i < D->dim(); ++i) {
            Vec next = cur;
            next[i] = p[i];
            stair += detail::segment_integral(ev, cur, next);
            cur = next;
        }
        dep[s] = std::abs(straight - stair);
    });
    R.scaling_residual = m ? *std::max_element(dep.begin(), dep.end()) : 0.0;
    R.conformal = R.strict || (R.period_residual < opts.tol && R.scaling_residual < opts.scaling_tol);

    R.source = period_lattice(omega, source_loops, opts.tol, opts.bound);
    R.target = period_lattice(omega_t, target_loops, opts.tol, opts.bound);
    R.source_in_target = lattice_contained(R.source, R.target, opts.tol, opts.bound);
    R.full = R.source_in_target && R.source.rank == R.target.rank &&
             lattice_contained(R.target, R.source, opts.tol, opts.bound);
    R.rank_decrease = R.target.rank - R.source.rank;
    return R;
}

// beta' -> e^{-f} F*beta', after certifying F*w' = w + df at samples.
inline DifferentialForm twisted_pullback(const SmoothMap &F, const Expr &f, const DifferentialForm &beta,
                                         const DifferentialForm &omega, const DifferentialForm &omega_t,
                                         std::size_t samples = 200, std::uint64_t seed = 1, double tol = 1e-9)
{
    const auto &D = F.source();
    const auto pts = sample_points(*D, samples, seed);
    const DifferentialForm defect = pullback(F, omega_t) - omega - d_of(D, f);
    const auto r = max_abs(defect, pts);
    if (!r.below(tol)) {
        throw CertificationError("twisted_pullback: F*w' - w - df residual " + detail::format_double(r.max) + " at " +
                                 format_point(*D, r.worst));
    }
    return exp(-f) * pullback(F, beta);
}

} // namespace lcs
