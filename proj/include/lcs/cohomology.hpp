#pragma once

// Discrete twisted cohomology of flat tori. T^n is cubulated as the grid
// (Z/m)^n; a k-cell is a vertex v together with a set S of k axes. The
// coboundary of a (k)-cochain a is
//
//   (D a)(v, S) = sum_{j in S} (-1)^{pos(j, S)} (w_j(v_j) a(v + e_j, S - j) - a(v, S - j))
//
// where w_j(i) is the weight of the axis-j edge leaving layer i. The product
// of the weights along axis j is the holonomy e^{-mu_j} of the local system.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/IterativeLinearSolvers>
#include <Eigen/Sparse>
#include <Eigen/SparseQR>

#include "check.hpp"
#include "domain.hpp"
#include "errors.hpp"

namespace lcs {

using SpMat = Eigen::SparseMatrix<double, Eigen::ColMajor, int>;

struct TwistedCochainComplex {
    int n = 0;
    int m = 0;
    std::vector<double> mu;
    std::vector<std::vector<double>> weights; // weights[j][i], axis j, layer i
    std::vector<std::vector<unsigned>> subsets; // axis sets of size k, bitmasks
    std::vector<SpMat> D;                       // D[k]: C^k -> C^{k+1}, k = 0..n-1

    [[nodiscard]] std::size_t vertices() const
    {
        std::size_t v = 1;
        for (int j = 0; j < n; ++j) {
            v *= static_cast<std::size_t>(m);
        }
        return v;
    }
    [[nodiscard]] std::size_t cells(int k) const { return subsets.at(static_cast<std::size_t>(k)).size() * vertices(); }
    [[nodiscard]] bool trivial() const
    {
        for (const auto &w : weights) {
            for (double x : w) {
                if (x != 1.0) {
                    return false;
                }
            }
        }
        return true;
    }
    [[nodiscard]] std::size_t subset_index(int k, unsigned S) const
    {
        const auto &L = subsets.at(static_cast<std::size_t>(k));
        return static_cast<std::size_t>(std::lower_bound(L.begin(), L.end(), S) - L.begin());
    }
    // Position of cell (v, S) among k-cells.
    [[nodiscard]] std::size_t cell(int k, unsigned S, std::size_t v) const { return subset_index(k, S) * vertices() + v; }
};

struct ComplexOptions {
    std::size_t max_cells = std::size_t{1} << 20; // 2^4 * 16^4
};

namespace detail {

inline std::vector<std::vector<unsigned>> axis_subsets(int n)
{
    std::vector<std::vector<unsigned>> out(static_cast<std::size_t>(n + 1));
    for (unsigned S = 0; S < (1u << n); ++S) {
        out[static_cast<std::size_t>(std::popcount(S))].push_back(S);
    }
    return out;
}

} // namespace detail

// General weights: weights[j] has m positive entries.
inline TwistedCochainComplex build_weighted_torus_complex(int n, int m, std::vector<std::vector<double>> weights,
                                                          const ComplexOptions &o = {})
{
    if (n < 1 || m < 2) {
        throw InputError("build_torus_complex: need n >= 1 and m >= 2");
    }
    if (static_cast<int>(weights.size()) != n) {
        throw InputError("build_torus_complex: need one weight vector per axis");
    }
    TwistedCochainComplex C;
    C.n = n;
    C.m = m;
    for (auto &w : weights) {
        if (static_cast<int>(w.size()) != m) {
            throw InputError("build_torus_complex: need m weights per axis");
        }
        double hol = 0.0;
        for (double x : w) {
            if (!(x > 0.0) || !std::isfinite(x)) {
                throw InputError("build_torus_complex: weights must be positive and finite");
            }
            hol += std::log(x);
        }
        C.mu.push_back(-hol);
    }
    C.weights = std::move(weights);
    C.subsets = detail::axis_subsets(n);
    if (C.vertices() > o.max_cells >> n) {
        throw ResourceError("build_torus_complex: " + std::to_string(C.vertices() << n) +
                            " cells exceed the budget of " + std::to_string(o.max_cells) + "; use a smaller m");
    }
    const std::size_t V = C.vertices();
    std::vector<std::size_t> stride(static_cast<std::size_t>(n));
    std::size_t s = 1;
    for (int j = 0; j < n; ++j) {
        stride[static_cast<std::size_t>(j)] = s;
        s *= static_cast<std::size_t>(m);
    }
    auto coord = [&](std::size_t v, int j) { return static_cast<int>((v / stride[static_cast<std::size_t>(j)]) % m); };
    auto shift = [&](std::size_t v, int j) {
        return coord(v, j) == m - 1 ? v - static_cast<std::size_t>(m - 1) * stride[static_cast<std::size_t>(j)]
                                    : v + stride[static_cast<std::size_t>(j)];
    };
    for (int k = 0; k < n; ++k) {
        std::vector<Eigen::Triplet<double, int>> trip;
        for (unsigned S : C.subsets[static_cast<std::size_t>(k + 1)]) {
            int pos = 0;
            for (int j = 0; j < n; ++j) {
                if (!(S & (1u << j))) {
                    continue;
                }
                const double sign = (pos++ % 2 == 0) ? 1.0 : -1.0;
                const unsigned T = S & ~(1u << j);
                for (std::size_t v = 0; v < V; ++v) {
                    const auto row = static_cast<int>(C.cell(k + 1, S, v));
                    const double w = C.weights[static_cast<std::size_t>(j)][static_cast<std::size_t>(coord(v, j))];
                    trip.emplace_back(row, static_cast<int>(C.cell(k, T, shift(v, j))), sign * w);
                    trip.emplace_back(row, static_cast<int>(C.cell(k, T, v)), -sign);
                }
            }
        }
        SpMat D(static_cast<int>(C.cells(k + 1)), static_cast<int>(C.cells(k)));
        D.setFromTriplets(trip.begin(), trip.end());
        C.D.push_back(std::move(D));
    }
    return C;
}

// Holonomy e^{-mu_j} placed on the edges leaving layer cut[j] (default m - 1).
inline TwistedCochainComplex build_torus_complex(int n, int m, const std::vector<double> &mu,
                                                 std::vector<int> cut = {}, const ComplexOptions &o = {})
{
    if (static_cast<int>(mu.size()) != n) {
        throw InputError("build_torus_complex: mu must have n entries");
    }
    if (n < 1 || m < 2) {
        throw InputError("build_torus_complex: need n >= 1 and m >= 2");
    }
    if (cut.empty()) {
        cut.assign(static_cast<std::size_t>(n), m - 1);
    }
    if (static_cast<int>(cut.size()) != n) {
        throw InputError("build_torus_complex: need one cut position per axis");
    }
    std::vector<std::vector<double>> w(static_cast<std::size_t>(n), std::vector<double>(static_cast<std::size_t>(m), 1.0));
    for (int j = 0; j < n; ++j) {
        const int c = cut[static_cast<std::size_t>(j)];
        if (c < 0 || c >= m) {
            throw InputError("build_torus_complex: cut position out of range");
        }
        w[static_cast<std::size_t>(j)][static_cast<std::size_t>(c)] = std::exp(-mu[static_cast<std::size_t>(j)]);
    }
    auto C = build_weighted_torus_complex(n, m, std::move(w), o);
    C.mu = mu;
    return C;
}

// Gauge transform by g_j(i) > 0 per axis: w_j(i) -> w_j(i) g_j(i+1) / g_j(i).
// Holonomies are unchanged; the complexes are conjugate by a diagonal map.
inline TwistedCochainComplex gauge_transform(const TwistedCochainComplex &C, const std::vector<std::vector<double>> &g,
                                             const ComplexOptions &o = {})
{
    auto w = C.weights;
    for (std::size_t j = 0; j < w.size(); ++j) {
        const auto &gj = g.at(j);
        if (static_cast<int>(gj.size()) != C.m) {
            throw InputError("gauge_transform: need m values per axis");
        }
        for (int i = 0; i < C.m; ++i) {
            w[j][static_cast<std::size_t>(i)] *=
                gj[static_cast<std::size_t>((i + 1) % C.m)] / gj[static_cast<std::size_t>(i)];
        }
    }
    auto out = build_weighted_torus_complex(C.n, C.m, std::move(w), o);
    out.mu = C.mu;
    return out;
}

// max |D_{k+1} D_k|; exactly zero by construction.
inline double d_squared_residual(const TwistedCochainComplex &C)
{
    double r = 0.0;
    for (std::size_t k = 0; k + 1 < C.D.size(); ++k) {
        const SpMat P = (C.D[k + 1] * C.D[k]).pruned(0.0, 0.0);
        for (int c = 0; c < P.outerSize(); ++c) {
            for (SpMat::InnerIterator it(P, c); it; ++it) {
                r = std::max(r, std::abs(it.value()));
            }
        }
    }
    return r;
}

// Rank by column-pivoted sparse QR with a relative pivot threshold.
inline int sparse_rank(const SpMat &A, double rel_tol = 1e-10)
{
    if (A.rows() == 0 || A.cols() == 0 || A.nonZeros() == 0) {
        return 0;
    }
    double scale = 0.0;
    for (int c = 0; c < A.outerSize(); ++c) {
        scale = std::max(scale, A.col(c).norm());
    }
    Eigen::SparseQR<SpMat, Eigen::COLAMDOrdering<int>> qr;
    qr.setPivotThreshold(rel_tol * scale);
    qr.compute(A);
    if (qr.info() != Eigen::Success) {
        throw EvaluationError("sparse_rank: QR factorization failed");
    }
    return static_cast<int>(qr.rank());
}

struct Betti {
    std::vector<int> b;    // b^0 .. b^n
    std::vector<int> rank; // rank D_0 .. D_{n-1}

    [[nodiscard]] int euler() const
    {
        int e = 0;
        for (std::size_t k = 0; k < b.size(); ++k) {
            e += (k % 2 == 0 ? 1 : -1) * b[k];
        }
        return e;
    }
};

inline Betti twisted_betti(const TwistedCochainComplex &C, double rel_tol = 1e-10)
{
    Betti out;
    for (const auto &D : C.D) {
        out.rank.push_back(sparse_rank(D, rel_tol));
    }
    for (int k = 0; k <= C.n; ++k) {
        const int out_rank = k < C.n ? out.rank[static_cast<std::size_t>(k)] : 0;
        const int in_rank = k > 0 ? out.rank[static_cast<std::size_t>(k - 1)] : 0;
        out.b.push_back(static_cast<int>(C.cells(k)) - out_rank - in_rank);
    }
    return out;
}

// Euler characteristic of the twisted complex against the untwisted one.
inline bool euler_characteristic_check(const TwistedCochainComplex &C, double rel_tol = 1e-10)
{
    const auto untwisted = build_torus_complex(C.n, C.m, std::vector<double>(static_cast<std::size_t>(C.n), 0.0));
    return twisted_betti(C, rel_tol).euler() == twisted_betti(untwisted, rel_tol).euler();
}

// Average of a k-cochain over the m^n grid translations (trivial weights only).
inline Eigen::VectorXd average_cochain(const TwistedCochainComplex &C, int k, const Eigen::VectorXd &a)
{
    if (!C.trivial()) {
        throw InputError("average_cochain: translations do not act on a complex with nontrivial weights");
    }
    if (k < 0 || k > C.n || a.size() != static_cast<Eigen::Index>(C.cells(k))) {
        throw InputError("average_cochain: cochain size does not match degree " + std::to_string(k));
    }
    const auto V = static_cast<Eigen::Index>(C.vertices());
    Eigen::VectorXd out(a.size());
    for (Eigen::Index s = 0; s < a.size() / V; ++s) {
        out.segment(s * V, V).setConstant(a.segment(s * V, V).mean());
    }
    return out;
}

// Basis of translation-invariant k-cochains: one per axis set.
inline std::vector<Eigen::VectorXd> invariant_cochains(const TwistedCochainComplex &C, int k)
{
    const auto V = static_cast<Eigen::Index>(C.vertices());
    std::vector<Eigen::VectorXd> out;
    for (std::size_t s = 0; s < C.subsets.at(static_cast<std::size_t>(k)).size(); ++s) {
        Eigen::VectorXd e = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(C.cells(k)));
        e.segment(static_cast<Eigen::Index>(s) * V, V).setOnes();
        out.push_back(std::move(e));
    }
    return out;
}

struct CochainRepair {
    double distance = 0.0; // |c - P c| / |c|, P the projection onto im D
    int iterations = 0;
};

// Normalized distance of c from the image of D, by least squares.
inline CochainRepair distance_from_image(const SpMat &D, const Eigen::VectorXd &c, double tol = 1e-12)
{
    if (c.norm() == 0.0) {
        throw InputError("distance_from_image: zero cochain");
    }
    Eigen::LeastSquaresConjugateGradient<SpMat> ls;
    ls.setTolerance(tol);
    ls.setMaxIterations(std::max<Eigen::Index>(1000, 4 * D.cols()));
    ls.compute(D);
    const Eigen::VectorXd x = ls.solve(c);
    return {(c - D * x).norm() / c.norm(), static_cast<int>(ls.iterations())};
}

struct ObstructionReport {
    int n = 0, m = 0;
    double distance = 0.0;       // of the area cochain from im D_1
    double invariant_max = 0.0;  // max |D_1 a| over invariant 1-cochains
    std::vector<Check> checks;

    [[nodiscard]] bool passed() const { return all_passed(checks); }
};

// Check that holds only with an exactly zero residual.
inline Check exact_check(std::string name, std::string anchor, double residual)
{
    auto c = make_flag(std::move(name), std::move(anchor), residual == 0.0);
    c.residual = residual;
    c.tolerance = 0.0;
    return c;
}

// Averaging on the trivial system: idempotent, fixes invariant cochains and
// commutes with D, on seeded random cochains of every degree.
inline std::vector<Check> averaging_checks(int n, int m, std::uint64_t seed = 1, const ComplexOptions &o = {})
{
    const auto C = build_torus_complex(n, m, std::vector<double>(static_cast<std::size_t>(n), 0.0), {}, o);
    Rng rng(seed);
    double idem = 0.0, fixed = 0.0, chain = 0.0, image = 0.0;
    for (int k = 0; k <= n; ++k) {
        Eigen::VectorXd a(static_cast<Eigen::Index>(C.cells(k)));
        for (Eigen::Index i = 0; i < a.size(); ++i) {
            a[i] = rng.uniform(-1, 1);
        }
        const auto A = average_cochain(C, k, a);
        idem = std::max(idem, (average_cochain(C, k, A) - A).cwiseAbs().maxCoeff());
        for (const auto &e : invariant_cochains(C, k)) {
            fixed = std::max(fixed, (average_cochain(C, k, e) - e).cwiseAbs().maxCoeff());
        }
        if (k < n) {
            const auto &D = C.D[static_cast<std::size_t>(k)];
            const Eigen::VectorXd lhs = D * A;
            chain = std::max(chain, (lhs - average_cochain(C, k + 1, D * a)).cwiseAbs().maxCoeff());
            image = std::max(image, lhs.cwiseAbs().maxCoeff());
        }
    }
    return {make_check("averaging/idempotent", "A A = A", idem, 1e-14),
            exact_check("averaging/fixes_invariant", "A e = e for invariant e", fixed),
            make_check("averaging/chain_map", "D A = A D", chain, 1e-14),
            exact_check("averaging/closed_image", "D A = 0", image)};
}

// Skeleton of the non-exactness argument on the fibre torus: the area
// 2-cochain on axes (0, 1) is not a coboundary, while every invariant
// 1-cochain is closed, so it has no invariant primitive.
inline ObstructionReport ot_obstruction_check(int n, int m, const ComplexOptions &o = {})
{
    if (n < 2) {
        throw InputError("ot_obstruction_check: need n >= 2");
    }
    const auto C = build_torus_complex(n, m, std::vector<double>(static_cast<std::size_t>(n), 0.0), {}, o);
    ObstructionReport R{n, m, 0.0, 0.0, {}};
    Eigen::VectorXd c = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(C.cells(2)));
    const auto V = static_cast<Eigen::Index>(C.vertices());
    const double h = 1.0 / m;
    c.segment(static_cast<Eigen::Index>(C.subset_index(2, 0b11u)) * V, V).setConstant(h * h);
    R.distance = distance_from_image(C.D[1], c).distance;
    for (const auto &a : invariant_cochains(C, 1)) {
        R.invariant_max = std::max(R.invariant_max, (C.D[1] * a).cwiseAbs().maxCoeff());
    }
    auto d = make_flag("class_nonzero", "area cochain not in im D_1 (normalized distance > 0.1)", R.distance > 0.1);
    d.data["distance"] = R.distance;
    R.checks.push_back(d);
    R.checks.push_back(exact_check("invariant_closed", "D_1 a = 0 for invariant a", R.invariant_max));
    R.checks.push_back(make_flag("no_invariant_primitive", "no invariant a with D_1 a = area",
                                 R.distance > 0.1 && R.invariant_max == 0.0));
    return R;
}

struct CohomologyReport {
    int n = 0, m = 0;
    std::vector<double> mu;
    Betti betti;
    Betti refined; // at 2m, when requested
    std::vector<Check> checks;

    [[nodiscard]] bool passed() const { return all_passed(checks); }
};

inline int binomial(int n, int k)
{
    int r = 1;
    for (int i = 1; i <= k; ++i) {
        r = r * (n - k + i) / i;
    }
    return r;
}

inline CohomologyReport cohomology_report(int n, int m, const std::vector<double> &mu, bool refine = true,
                                          const std::vector<int> &expected = {}, const ComplexOptions &o = {})
{
    const auto C = build_torus_complex(n, m, mu, {}, o);
    CohomologyReport R{n, m, mu, twisted_betti(C), {}, {}};
    R.checks.push_back(exact_check("d_squared", "D_{k+1} D_k = 0", d_squared_residual(C)));
    const auto C0 = build_torus_complex(n, m, std::vector<double>(static_cast<std::size_t>(n), 0.0), {}, o);
    auto e = make_flag("euler", "twisted and untwisted Euler characteristics agree",
                       R.betti.euler() == twisted_betti(C0).euler());
    e.data["euler"] = R.betti.euler();
    R.checks.push_back(e);
    const bool zero = std::all_of(mu.begin(), mu.end(), [](double x) { return x == 0.0; });
    if (zero) {
        bool ok = true;
        for (int k = 0; k <= n; ++k) {
            ok = ok && R.betti.b[static_cast<std::size_t>(k)] == binomial(n, k);
        }
        R.checks.push_back(make_flag("binomial", "b^k = C(n, k) for the trivial system", ok));
    } else {
        R.checks.push_back(make_flag("vanishing", "b^0 = b^n = 0 for a nontrivial system",
                                     R.betti.b.front() == 0 && R.betti.b.back() == 0));
    }
    if (refine) {
        R.refined = twisted_betti(build_torus_complex(n, 2 * m, mu, {}, o));
        R.checks.push_back(make_flag("refinement", "Betti numbers agree at m and 2m", R.refined.b == R.betti.b));
    }
    if (!expected.empty()) {
        R.checks.push_back(make_flag("expected", "Betti numbers match the expected list", expected == R.betti.b));
    }
    for (std::size_t k = 0; k < R.betti.b.size(); ++k) {
        R.checks.front().data["b" + std::to_string(k)] = R.betti.b[k];
    }
    return R;
}

} // namespace lcs
