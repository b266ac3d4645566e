#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "lcs/cohomology.hpp"

using namespace lcs;

namespace {

int dense_rank(const SpMat &A)
{
    if (A.rows() == 0 || A.cols() == 0) {
        return 0;
    }
    const Eigen::MatrixXd M(A);
    Eigen::BDCSVD<Eigen::MatrixXd> svd(M);
    const auto &s = svd.singularValues();
    int r = 0;
    for (Eigen::Index i = 0; i < s.size(); ++i) {
        if (s[i] > 1e-10 * s[0]) {
            ++r;
        }
    }
    return r;
}

std::vector<int> dense_betti(const TwistedCochainComplex &C)
{
    std::vector<int> r;
    for (const auto &D : C.D) {
        r.push_back(dense_rank(D));
    }
    std::vector<int> b;
    for (int k = 0; k <= C.n; ++k) {
        b.push_back(static_cast<int>(C.cells(k)) - (k < C.n ? r[static_cast<std::size_t>(k)] : 0) -
                    (k > 0 ? r[static_cast<std::size_t>(k - 1)] : 0));
    }
    return b;
}

Eigen::VectorXd random_cochain(std::size_t n, unsigned seed)
{
    std::mt19937 g(seed);
    std::uniform_real_distribution<double> u(-1, 1);
    Eigen::VectorXd v(static_cast<Eigen::Index>(n));
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        v[i] = u(g);
    }
    return v;
}

} // namespace

TEST(Cohomology, TrivialSystemGivesBinomials)
{
    for (int n = 1; n <= 3; ++n) {
        const auto C = build_torus_complex(n, 4, std::vector<double>(static_cast<std::size_t>(n), 0.0));
        const auto b = twisted_betti(C).b;
        for (int k = 0; k <= n; ++k) {
            EXPECT_EQ(b[static_cast<std::size_t>(k)], binomial(n, k)) << n << " " << k;
        }
    }
}

TEST(Cohomology, CircleWithHolonomyIsAcyclic)
{
    const auto C = build_torus_complex(1, 8, {1.0});
    EXPECT_EQ(dense_rank(C.D[0]), 8);
    EXPECT_EQ(twisted_betti(C).rank[0], 8);
    EXPECT_EQ(twisted_betti(C).b, (std::vector<int>{0, 0}));
    // the only weighted edge leaves layer 7
    const Eigen::MatrixXd D(C.D[0]);
    EXPECT_DOUBLE_EQ(D(7, 0), std::exp(-1.0));
    EXPECT_DOUBLE_EQ(D(7, 7), -1.0);
    EXPECT_DOUBLE_EQ(D(3, 4), 1.0);
}

TEST(Cohomology, CoboundarySquaresToZeroExactly)
{
    EXPECT_EQ(d_squared_residual(build_torus_complex(2, 4, {1.0, std::sqrt(2.0)})), 0.0);
    EXPECT_EQ(d_squared_residual(build_torus_complex(3, 3, {0.3, -1.0, 2.0})), 0.0);
    EXPECT_EQ(d_squared_residual(build_torus_complex(4, 2, {0.3, -1.0, 2.0, 0.5})), 0.0);
    const auto C = build_torus_complex(3, 4, {0.7, 0.0, -0.2});
    std::vector<std::vector<double>> g(3);
    std::mt19937 rng(4);
    std::uniform_real_distribution<double> u(0.2, 3.0);
    for (auto &gj : g) {
        for (int i = 0; i < 4; ++i) {
            gj.push_back(u(rng));
        }
    }
    EXPECT_EQ(d_squared_residual(gauge_transform(C, g)), 0.0);
}

TEST(Cohomology, TorusBettiAgainstDenseOracle)
{
    const auto C0 = build_torus_complex(2, 8, {0.0, 0.0});
    EXPECT_EQ(twisted_betti(C0).b, (std::vector<int>{1, 2, 1}));
    EXPECT_EQ(dense_betti(C0), (std::vector<int>{1, 2, 1}));
    const auto C1 = build_torus_complex(2, 8, {1.0, 0.0});
    EXPECT_EQ(twisted_betti(C1).b, (std::vector<int>{0, 0, 0}));
    EXPECT_EQ(dense_betti(C1), (std::vector<int>{0, 0, 0}));
    const auto C3 = build_torus_complex(3, 6, {std::sqrt(2.0), 0.0, 0.0});
    EXPECT_EQ(twisted_betti(C3).b, (std::vector<int>{0, 0, 0, 0}));
    EXPECT_EQ(dense_betti(C3), (std::vector<int>{0, 0, 0, 0}));
}

TEST(Cohomology, EulerCharacteristicIsUntwisted)
{
    for (const auto &mu : std::vector<std::vector<double>>{{0.0, 0.0}, {1.0, 0.0}, {0.3, -2.0}}) {
        const auto C = build_torus_complex(2, 6, mu);
        EXPECT_TRUE(euler_characteristic_check(C));
        EXPECT_EQ(twisted_betti(C).euler(), 0);
    }
    EXPECT_TRUE(euler_characteristic_check(build_torus_complex(3, 4, {1.0, 1.0, 1.0})));
    EXPECT_EQ(twisted_betti(build_torus_complex(3, 4, {1.0, 1.0, 1.0})).euler(), 0);
    EXPECT_TRUE(euler_characteristic_check(build_torus_complex(1, 8, {0.5})));
}

TEST(Cohomology, NontrivialSystemsHaveNoTopOrBottomClasses)
{
    const std::vector<std::vector<double>> cases{{1.0, 0.0}, {0.0, -0.5}, {std::sqrt(2.0), 1.0}, {1e-3, 0.0}};
    for (const auto &mu : cases) {
        const auto b = twisted_betti(build_torus_complex(2, 8, mu)).b;
        EXPECT_EQ(b.front(), 0);
        EXPECT_EQ(b.back(), 0);
    }
    const auto b3 = twisted_betti(build_torus_complex(3, 4, {0.0, 0.0, 2.0})).b;
    EXPECT_EQ(b3.front(), 0);
    EXPECT_EQ(b3.back(), 0);
}

TEST(Cohomology, GridRefinementIsStable)
{
    for (const auto &mu : std::vector<std::vector<double>>{{0.0, 0.0}, {1.0, 0.0}}) {
        const auto R = cohomology_report(2, 8, mu);
        EXPECT_TRUE(R.passed());
        EXPECT_EQ(R.betti.b, R.refined.b);
    }
    const auto R = cohomology_report(2, 8, {0.0, 0.0}, false, {1, 2, 1});
    EXPECT_TRUE(find_check(R.checks, "expected")->passed);
    const auto W = cohomology_report(2, 8, {1.0, 0.0}, false, {1, 2, 1});
    EXPECT_FALSE(W.passed());
}

TEST(Cohomology, GaugeAndCutInvariance)
{
    const std::vector<double> mu{0.8, 0.0};
    const auto C = build_torus_complex(2, 6, mu);
    const auto ref = twisted_betti(C).b;
    // spread the holonomy evenly over every edge
    std::vector<std::vector<double>> g(2);
    for (int j = 0; j < 2; ++j) {
        for (int i = 0; i < 6; ++i) {
            g[static_cast<std::size_t>(j)].push_back(std::exp(-mu[static_cast<std::size_t>(j)] * i / 6.0));
        }
    }
    const auto G = gauge_transform(C, g);
    EXPECT_NEAR(G.weights[0][0], std::exp(-0.8 / 6), 1e-14);
    EXPECT_NEAR(G.weights[0][5], std::exp(-0.8 / 6), 1e-14);
    EXPECT_NEAR(G.mu[0], 0.8, 1e-14);
    EXPECT_EQ(twisted_betti(G).b, ref);
    EXPECT_EQ(dense_betti(G), ref);
    for (int c : {0, 2, 5}) {
        EXPECT_EQ(twisted_betti(build_torus_complex(2, 6, mu, {c, 3})).b, ref);
    }
    // a gauge on the untwisted torus keeps the ordinary Betti numbers
    const auto T = build_torus_complex(2, 6, {0.0, 0.0});
    EXPECT_EQ(twisted_betti(gauge_transform(T, g)).b, (std::vector<int>{1, 2, 1}));
}

TEST(Cohomology, AveragingIsAnIdempotentChainMap)
{
    const auto C = build_torus_complex(2, 8, {0.0, 0.0});
    for (int k = 0; k <= 2; ++k) {
        const auto a = random_cochain(C.cells(k), 10 + static_cast<unsigned>(k));
        const auto A = average_cochain(C, k, a);
        EXPECT_LT((average_cochain(C, k, A) - A).cwiseAbs().maxCoeff(), 1e-15);
        for (const auto &e : invariant_cochains(C, k)) {
            EXPECT_EQ((average_cochain(C, k, e) - e).cwiseAbs().maxCoeff(), 0.0);
        }
        if (k < 2) {
            const Eigen::VectorXd lhs = C.D[static_cast<std::size_t>(k)] * A;
            const Eigen::VectorXd rhs = average_cochain(C, k + 1, C.D[static_cast<std::size_t>(k)] * a);
            EXPECT_LT((lhs - rhs).cwiseAbs().maxCoeff(), 1e-14);
            EXPECT_EQ(lhs.cwiseAbs().maxCoeff(), 0.0);
        }
    }
    EXPECT_THROW((void)average_cochain(build_torus_complex(2, 4, {1.0, 0.0}), 1, Eigen::VectorXd::Zero(32)),
                 InputError);
    EXPECT_THROW((void)average_cochain(C, 1, Eigen::VectorXd::Zero(3)), InputError);
}

TEST(Cohomology, ObstructionSkeleton)
{
    for (const auto &[n, m] : std::vector<std::pair<int, int>>{{2, 8}, {3, 6}}) {
        const auto R = ot_obstruction_check(n, m);
        EXPECT_TRUE(R.passed()) << n;
        EXPECT_GT(R.distance, 0.1);
        EXPECT_EQ(R.invariant_max, 0.0);
        // least-squares oracle through a dense pseudo-inverse
        const auto C = build_torus_complex(n, m, std::vector<double>(static_cast<std::size_t>(n), 0.0));
        const Eigen::MatrixXd D(C.D[1]);
        Eigen::VectorXd c = Eigen::VectorXd::Zero(D.rows());
        const auto V = static_cast<Eigen::Index>(C.vertices());
        c.segment(static_cast<Eigen::Index>(C.subset_index(2, 0b11u)) * V, V).setConstant(1.0);
        const Eigen::VectorXd x = D.completeOrthogonalDecomposition().solve(c);
        EXPECT_NEAR(R.distance, (c - D * x).norm() / c.norm(), 1e-8);
    }
    // an exact 2-cochain sits at distance 0
    const auto C = build_torus_complex(2, 6, {0.0, 0.0});
    const Eigen::VectorXd exact = C.D[1] * random_cochain(C.cells(1), 3);
    EXPECT_LT(distance_from_image(C.D[1], exact).distance, 1e-8);
    EXPECT_THROW((void)ot_obstruction_check(1, 8), InputError);
}

TEST(Cohomology, BudgetAndInputErrors)
{
    EXPECT_THROW((void)build_torus_complex(4, 20, {0, 0, 0, 0}), ResourceError);
    EXPECT_THROW((void)build_torus_complex(2, 1, {0, 0}), InputError);
    EXPECT_THROW((void)build_torus_complex(2, 4, {0}), InputError);
    EXPECT_THROW((void)build_weighted_torus_complex(1, 3, {{1.0, -1.0, 1.0}}), InputError);
}
