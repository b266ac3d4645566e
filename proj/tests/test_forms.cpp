#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include <gtest/gtest.h>

#include "lcs/forms.hpp"
#include "lcs/numeric.hpp"

using namespace lcs;

namespace {

DomainPtr r4()
{
    return make_domain("R4", {Coordinate::linear("a", -1, 1), Coordinate::linear("b", -1, 1),
                              Coordinate::linear("c", -1, 1), Coordinate::linear("d", -1, 1)});
}

Expr random_coeff(Rng &rng)
{
    const Expr a = var("a"), b = var("b"), c = var("c"), d = var("d");
    const double k1 = rng.uniform(-1, 1), k2 = rng.uniform(-1, 1), k3 = rng.uniform(-1, 1);
    switch (rng.bits() % 4) {
    case 0:
        return Expr(k1) * a * b + Expr(k2) * sin(c) + Expr(k3);
    case 1:
        return exp(Expr(k1) * d) * cos(Expr(k2) * a + b);
    case 2:
        return Expr(k1) * c * c - Expr(k2) * d + Expr(k3) * a * b * c;
    default:
        return sin(Expr(k1) * a + Expr(k2) * d) + Expr(k3) * b;
    }
}

DifferentialForm random_form(const DomainPtr &D, int k, Rng &rng)
{
    DifferentialForm f(D, k);
    for (Mask m : masks_of_degree(D->dim(), k)) {
        if (rng.uniform() < 0.7) {
            f.add(m, random_coeff(rng));
        }
    }
    return f;
}

VectorField random_field(const DomainPtr &D, Rng &rng)
{
    std::vector<Expr> c;
    for (int i = 0; i < D->dim(); ++i) {
        c.push_back(random_coeff(rng));
    }
    return VectorField(D, c);
}

// Dense oracle: evaluate a k-form on k vectors by determinant expansion.
double eval_on(const DifferentialForm &f, const Vec &p, const std::vector<Vec> &vs)
{
    FormEvaluator ev(f);
    const auto vals = ev.values(p);
    double total = 0;
    const int k = f.degree();
    for (std::size_t t = 0; t < ev.masks().size(); ++t) {
        const auto idx = indices_of(ev.masks()[t]);
        Mat M(k, k);
        for (int r = 0; r < k; ++r) {
            for (int s = 0; s < k; ++s) {
                M(r, s) = vs[static_cast<std::size_t>(s)](idx[static_cast<std::size_t>(r)]);
            }
        }
        total += vals[t] * (k == 0 ? 1.0 : M.determinant());
    }
    return total;
}

int perm_sign(const std::vector<int> &p)
{
    int s = 1;
    for (std::size_t i = 0; i < p.size(); ++i) {
        for (std::size_t j = i + 1; j < p.size(); ++j) {
            if (p[i] > p[j]) {
                s = -s;
            }
        }
    }
    return s;
}

double factorial(int n) { return n <= 1 ? 1.0 : n * factorial(n - 1); }

// Alternating-sum definition of the wedge product.
double wedge_oracle(const DifferentialForm &a, const DifferentialForm &b, const Vec &p, const std::vector<Vec> &vs)
{
    const int k = a.degree(), l = b.degree();
    std::vector<int> perm(static_cast<std::size_t>(k + l));
    std::iota(perm.begin(), perm.end(), 0);
    double total = 0;
    do {
        std::vector<Vec> va, vb;
        for (int i = 0; i < k; ++i) {
            va.push_back(vs[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])]);
        }
        for (int i = k; i < k + l; ++i) {
            vb.push_back(vs[static_cast<std::size_t>(perm[static_cast<std::size_t>(i)])]);
        }
        total += perm_sign(perm) * eval_on(a, p, va) * eval_on(b, p, vb);
    } while (std::next_permutation(perm.begin(), perm.end()));
    return total / (factorial(k) * factorial(l));
}

// d via constant vector fields: d a(v0..vk) = sum_i (-1)^i D_{v_i} a(v0..^vi..vk).
double d_oracle(const DifferentialForm &a, const Vec &p, const std::vector<Vec> &vs)
{
    const double h = 1e-5;
    double total = 0;
    for (std::size_t i = 0; i < vs.size(); ++i) {
        std::vector<Vec> rest;
        for (std::size_t j = 0; j < vs.size(); ++j) {
            if (j != i) {
                rest.push_back(vs[j]);
            }
        }
        const double deriv = (eval_on(a, p + h * vs[i], rest) - eval_on(a, p - h * vs[i], rest)) / (2 * h);
        total += (i % 2 == 0 ? 1.0 : -1.0) * deriv;
    }
    return total;
}

std::vector<Vec> random_vectors(Rng &rng, int count, int dim)
{
    std::vector<Vec> out;
    for (int i = 0; i < count; ++i) {
        Vec v(dim);
        for (int j = 0; j < dim; ++j) {
            v(j) = rng.uniform(-1, 1);
        }
        out.push_back(v);
    }
    return out;
}

Vec random_point(Rng &rng, int dim) { return 0.8 * random_vectors(rng, 1, dim)[0]; }

} // namespace

TEST(Forms, BasisSignConvention)
{
    auto D = r4();
    const auto ab = DifferentialForm::basis(D, {"a", "b"});
    const auto ba = DifferentialForm::basis(D, {"b", "a"});
    EXPECT_TRUE((ab + ba).is_structurally_zero());
    EXPECT_TRUE(DifferentialForm::basis(D, {"a", "a"}).is_structurally_zero());
    EXPECT_TRUE(ab.coefficient({"b", "a"}).is_constant(-1.0));
}

TEST(Forms, WedgeMatchesAlternatingSumOracle)
{
    auto D = r4();
    Rng rng(5);
    for (int trial = 0; trial < 30; ++trial) {
        const int k = static_cast<int>(rng.bits() % 3);
        const int l = static_cast<int>(rng.bits() % (5 - k));
        const auto a = random_form(D, k, rng);
        const auto b = random_form(D, l, rng);
        const auto w = wedge(a, b);
        const Vec p = random_point(rng, 4);
        const auto vs = random_vectors(rng, k + l, 4);
        EXPECT_NEAR(eval_on(w, p, vs), wedge_oracle(a, b, p, vs), 1e-12);
    }
}

TEST(Forms, GradedCommutativity)
{
    auto D = r4();
    Rng rng(6);
    const auto pts = sample_points(*D, 50, 1);
    for (int trial = 0; trial < 20; ++trial) {
        const int k = 1 + static_cast<int>(rng.bits() % 2);
        const int l = 1 + static_cast<int>(rng.bits() % 2);
        const auto a = random_form(D, k, rng);
        const auto b = random_form(D, l, rng);
        const double s = ((k * l) % 2 == 0) ? 1.0 : -1.0;
        EXPECT_LT(max_abs(wedge(a, b) - s * wedge(b, a), pts).max, 1e-12);
    }
}

TEST(Forms, ExteriorDerivativeMatchesFiniteDifferenceOracle)
{
    auto D = r4();
    Rng rng(8);
    for (int trial = 0; trial < 30; ++trial) {
        const int k = static_cast<int>(rng.bits() % 3);
        const auto a = random_form(D, k, rng);
        const Vec p = random_point(rng, 4);
        const auto vs = random_vectors(rng, k + 1, 4);
        EXPECT_NEAR(eval_on(ext_d(a), p, vs), d_oracle(a, p, vs), 1e-7);
    }
}

TEST(Forms, ExteriorDerivativeOfTopDegreeIsRejected)
{
    auto D = r4();
    EXPECT_THROW(ext_d(DifferentialForm::basis(D, {"a", "b", "c", "d"})), InputError);
}

TEST(FormsProperty, DSquaredVanishesAndLeibniz)
{
    auto D = r4();
    Rng rng(9);
    const auto pts = sample_points(*D, 100, 2);
    for (int trial = 0; trial < 20; ++trial) {
        const int k = static_cast<int>(rng.bits() % 2);
        const int l = static_cast<int>(rng.bits() % 2);
        const auto a = random_form(D, k, rng);
        const auto b = random_form(D, l, rng);
        EXPECT_LT(max_abs(ext_d(ext_d(a)), pts).max, 1e-9);
        const double s = (k % 2 == 0) ? 1.0 : -1.0;
        const auto lhs = ext_d(wedge(a, b));
        const auto rhs = wedge(ext_d(a), b) + s * wedge(a, ext_d(b));
        EXPECT_LT(max_abs(lhs - rhs, pts).max, 1e-10);
    }
}

TEST(FormsProperty, InteriorProductIsAntiderivation)
{
    auto D = r4();
    Rng rng(10);
    const auto pts = sample_points(*D, 60, 3);
    for (int trial = 0; trial < 20; ++trial) {
        const auto X = random_field(D, rng);
        const auto a = random_form(D, 1, rng);
        const auto b = random_form(D, 2, rng);
        const auto lhs = interior(X, wedge(a, b));
        const auto rhs = wedge(interior(X, a), b) - wedge(a, interior(X, b));
        EXPECT_LT(max_abs(lhs - rhs, pts).max, 1e-11);
        EXPECT_LT(max_abs(interior(X, interior(X, b)), pts).max, 1e-12);
    }
}

TEST(FormsProperty, InteriorMatchesEvaluationOracle)
{
    auto D = r4();
    Rng rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        const auto X = random_field(D, rng);
        const auto b = random_form(D, 2, rng);
        const Vec p = random_point(rng, 4);
        const Vec xv = FieldEvaluator(X)(p);
        const auto vs = random_vectors(rng, 1, 4);
        EXPECT_NEAR(eval_on(interior(X, b), p, vs), eval_on(b, p, {xv, vs[0]}), 1e-12);
    }
}

// Component formula for the Lie derivative of a 1-form.
TEST(FormsProperty, LieDerivativeOfOneFormMatchesComponentFormula)
{
    auto D = r4();
    Rng rng(12);
    const auto pts = sample_points(*D, 60, 4);
    const auto names = D->names();
    for (int trial = 0; trial < 10; ++trial) {
        const auto X = random_field(D, rng);
        const auto a = random_form(D, 1, rng);
        DifferentialForm oracle(D, 1);
        for (int j = 0; j < 4; ++j) {
            std::vector<Expr> terms;
            for (int i = 0; i < 4; ++i) {
                terms.push_back(X[i] * diff(a.coefficient(bit(j)), names[static_cast<std::size_t>(i)]));
                terms.push_back(a.coefficient(bit(i)) * diff(X[i], names[static_cast<std::size_t>(j)]));
            }
            oracle.add(bit(j), sum(std::move(terms)));
        }
        EXPECT_LT(max_abs(lie_derivative(X, a) - oracle, pts).max, 1e-10);
    }
}

TEST(FormsProperty, BracketIsLieDerivativeCommutator)
{
    auto D = r4();
    Rng rng(13);
    const auto pts = sample_points(*D, 40, 5);
    for (int trial = 0; trial < 10; ++trial) {
        const auto X = random_field(D, rng);
        const auto Y = random_field(D, rng);
        const auto a = random_form(D, 1, rng);
        const auto lhs = lie_derivative(bracket(X, Y), a);
        const auto rhs = lie_derivative(X, lie_derivative(Y, a)) - lie_derivative(Y, lie_derivative(X, a));
        EXPECT_LT(max_abs(lhs - rhs, pts).max, 1e-8);
    }
}

TEST(FormsProperty, PullbackCommutesWithDAndWedge)
{
    auto D = r4();
    auto S = make_domain("S3", {Coordinate::linear("u", -1, 1), Coordinate::linear("v", -1, 1),
                                Coordinate::linear("w", -1, 1)});
    const Expr u = var("u"), v = var("v"), w = var("w");
    const SmoothMap F(S, D, {u * v, sin(w) + u, v * v - w, exp(Expr(0.5) * u) * w});
    Rng rng(14);
    const auto pts = sample_points(*S, 80, 6);
    for (int trial = 0; trial < 10; ++trial) {
        const auto a = random_form(D, 1, rng);
        const auto b = random_form(D, 1, rng);
        EXPECT_LT(max_abs(pullback(F, ext_d(a)) - ext_d(pullback(F, a)), pts).max, 1e-10);
        EXPECT_LT(max_abs(pullback(F, wedge(a, b)) - wedge(pullback(F, a), pullback(F, b)), pts).max, 1e-10);
    }
}

TEST(Forms, PullbackMatchesJacobianOracle)
{
    auto D = r4();
    auto S = make_domain("S2", {Coordinate::linear("u", -1, 1), Coordinate::linear("v", -1, 1)});
    const Expr u = var("u"), v = var("v");
    const SmoothMap F(S, D, {u * v, sin(v) + u, v * v - u, cos(u)});
    Rng rng(15);
    const auto b = random_form(D, 2, rng);
    const auto pb = pullback(F, b);
    const auto Fn = numeric(F);
    for (int trial = 0; trial < 10; ++trial) {
        const Vec p = random_point(rng, 2);
        const Mat J = Fn->jacobian(p);
        const auto vs = random_vectors(rng, 2, 2);
        EXPECT_NEAR(eval_on(pb, p, vs), eval_on(b, Fn->value(p), {J * vs[0], J * vs[1]}), 1e-12);
    }
}

TEST(Forms, DomainMismatchIsRejected)
{
    auto D = r4();
    auto E = make_domain("other", {Coordinate::linear("x", -1, 1), Coordinate::linear("y", -1, 1)});
    EXPECT_THROW(wedge(DifferentialForm::basis(D, {"a"}), DifferentialForm::basis(E, {"x"})), DomainMismatch);
}

TEST(Numeric, NondegeneracyRankOfStandardSymplecticForm)
{
    auto D = r4();
    const auto om = DifferentialForm::basis(D, {"a", "b"}) + DifferentialForm::basis(D, {"c", "d"});
    const auto r = nondegeneracy_rank(om, 20, 1);
    EXPECT_EQ(r.min_rank, 4);
    const auto degenerate = DifferentialForm::basis(D, {"a", "b"});
    EXPECT_EQ(nondegeneracy_rank(degenerate, 20, 1).max_rank, 2);
    const Vec p = Vec::Zero(4);
    EXPECT_THROW((void)sharp(degenerate, DifferentialForm::basis(D, {"a"}), p), RankError);
    const Vec s = sharp(om, DifferentialForm::basis(D, {"b"}), p);
    // i_v om = db  =>  v = d/da
    EXPECT_NEAR(s(0), 1.0, 1e-14);
    EXPECT_NEAR(s.tail(3).norm(), 0.0, 1e-14);
}
