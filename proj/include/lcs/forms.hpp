#pragma once

// Differential forms, vector fields and smooth maps on coordinate domains, with
// the Cartan calculus: wedge, exterior derivative, interior product, Lie
// derivative and pullback. Coefficients are symbolic expressions.
//
// A k-form stores one coefficient per strictly increasing index tuple; tuples
// are bit masks over the domain's coordinates, so antisymmetry is structural.

#include <bit>
#include <cstdint>
#include <initializer_list>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "domain.hpp"
#include "errors.hpp"
#include "symexpr.hpp"

namespace lcs {

using Mask = std::uint64_t;

inline int degree_of(Mask m) { return std::popcount(m); }
inline Mask bit(int i) { return Mask{1} << i; }

// Sign of sorting the concatenation (I, J) of two disjoint index sets.
inline int merge_sign(Mask I, Mask J)
{
    int swaps = 0;
    for (Mask rest = J; rest != 0; rest &= rest - 1) {
        const int j = std::countr_zero(rest);
        const Mask above = (j >= 63) ? Mask{0} : ~((Mask{1} << (j + 1)) - 1);
        swaps += std::popcount(I & above);
    }
    return (swaps % 2 == 0) ? 1 : -1;
}

inline std::vector<int> indices_of(Mask m)
{
    std::vector<int> out;
    for (; m != 0; m &= m - 1) {
        out.push_back(std::countr_zero(m));
    }
    return out;
}

// All masks over `dim` bits with exactly `k` bits, in increasing numeric order
// of their lexicographic index tuples.
inline std::vector<Mask> masks_of_degree(int dim, int k)
{
    std::vector<Mask> out;
    if (k < 0 || k > dim) {
        return out;
    }
    std::vector<int> idx(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) {
        idx[static_cast<std::size_t>(i)] = i;
    }
    for (;;) {
        Mask m = 0;
        for (int i : idx) {
            m |= bit(i);
        }
        out.push_back(m);
        int p = k - 1;
        while (p >= 0 && idx[static_cast<std::size_t>(p)] == dim - k + p) {
            --p;
        }
        if (p < 0) {
            break;
        }
        ++idx[static_cast<std::size_t>(p)];
        for (int q = p + 1; q < k; ++q) {
            idx[static_cast<std::size_t>(q)] = idx[static_cast<std::size_t>(q - 1)] + 1;
        }
    }
    return out;
}

inline void require_same_domain(const DomainPtr &a, const DomainPtr &b, const char *op)
{
    if (!same_domain(a, b)) {
        throw DomainMismatch(std::string(op) + ": operands live on different domains ('" + (a ? a->name() : "?") +
                             "' vs '" + (b ? b->name() : "?") + "')");
    }
}

class DifferentialForm {
public:
    DifferentialForm(DomainPtr domain, int degree) : domain_(std::move(domain)), degree_(degree)
    {
        if (!domain_) {
            throw InputError("DifferentialForm: null domain");
        }
        if (degree_ < 0 || degree_ > domain_->dim()) {
            throw InputError("DifferentialForm: degree " + std::to_string(degree_) + " exceeds dimension " +
                             std::to_string(domain_->dim()));
        }
    }

    static DifferentialForm function(DomainPtr domain, const Expr &f)
    {
        DifferentialForm out(std::move(domain), 0);
        out.add(0, f);
        return out;
    }

    // dx_{c1} ^ ... ^ dx_{ck} for the named coordinates, in the given order.
    static DifferentialForm basis(DomainPtr domain, std::initializer_list<std::string> coords)
    {
        return basis(std::move(domain), std::vector<std::string>(coords));
    }
    static DifferentialForm basis(DomainPtr domain, const std::vector<std::string> &coords)
    {
        Mask m = 0;
        int sign = 1;
        for (const auto &c : coords) {
            const int i = domain->index_of(c);
            if (m & bit(i)) {
                return DifferentialForm(std::move(domain), static_cast<int>(coords.size()));
            }
            sign *= merge_sign(m, bit(i));
            m |= bit(i);
        }
        DifferentialForm out(std::move(domain), static_cast<int>(coords.size()));
        out.add(m, Expr(static_cast<double>(sign)));
        return out;
    }

    [[nodiscard]] const DomainPtr &domain_ptr() const { return domain_; }
    [[nodiscard]] const CoordinateDomain &domain() const { return *domain_; }
    [[nodiscard]] int degree() const { return degree_; }
    [[nodiscard]] const std::map<Mask, Expr> &terms() const { return terms_; }
    [[nodiscard]] bool is_structurally_zero() const { return terms_.empty(); }

    [[nodiscard]] Expr coefficient(Mask m) const
    {
        auto it = terms_.find(m);
        return it == terms_.end() ? Expr(0.0) : it->second;
    }

    // Coefficient of dx_{c1}^...^dx_{ck} with the sign of the given ordering.
    [[nodiscard]] Expr coefficient(const std::vector<std::string> &coords) const
    {
        Mask m = 0;
        int sign = 1;
        for (const auto &c : coords) {
            const int i = domain_->index_of(c);
            if (m & bit(i)) {
                return Expr(0.0);
            }
            sign *= merge_sign(m, bit(i));
            m |= bit(i);
        }
        return sign > 0 ? coefficient(m) : -coefficient(m);
    }

    // Scalar of a 0-form.
    [[nodiscard]] Expr scalar() const
    {
        if (degree_ != 0) {
            throw InputError("scalar(): form has degree " + std::to_string(degree_));
        }
        return coefficient(0);
    }

    void add(Mask m, const Expr &c)
    {
        if (degree_of(m) != degree_) {
            throw InputError("DifferentialForm::add: index tuple of wrong degree");
        }
        if (m >> domain_->dim() != 0) {
            throw InputError("DifferentialForm::add: index out of range");
        }
        if (c.is_zero()) {
            return;
        }
        auto it = terms_.find(m);
        if (it == terms_.end()) {
            terms_.emplace(m, c);
        } else {
            Expr s = it->second + c;
            if (s.is_zero()) {
                terms_.erase(it);
            } else {
                it->second = s;
            }
        }
    }

    DifferentialForm &operator+=(const DifferentialForm &o)
    {
        require_same_domain(domain_, o.domain_, "form addition");
        if (o.degree_ != degree_) {
            throw InputError("form addition: degrees differ");
        }
        for (const auto &[m, c] : o.terms_) {
            add(m, c);
        }
        return *this;
    }

    template <class Fn>
    [[nodiscard]] DifferentialForm map_coefficients(Fn &&fn) const
    {
        DifferentialForm out(domain_, degree_);
        for (const auto &[m, c] : terms_) {
            out.add(m, fn(c));
        }
        return out;
    }

private:
    DomainPtr domain_;
    int degree_;
    std::map<Mask, Expr> terms_;
};

inline DifferentialForm operator+(DifferentialForm a, const DifferentialForm &b)
{
    a += b;
    return a;
}
inline DifferentialForm operator-(const DifferentialForm &a)
{
    return a.map_coefficients([](const Expr &c) { return -c; });
}
inline DifferentialForm operator-(DifferentialForm a, const DifferentialForm &b)
{
    a += -b;
    return a;
}
inline DifferentialForm operator*(const Expr &f, const DifferentialForm &a)
{
    return a.map_coefficients([&](const Expr &c) { return f * c; });
}
inline DifferentialForm operator*(const DifferentialForm &a, const Expr &f) { return f * a; }

// Wedge product; graded commutative.
inline DifferentialForm wedge(const DifferentialForm &a, const DifferentialForm &b)
{
    require_same_domain(a.domain_ptr(), b.domain_ptr(), "wedge");
    if (a.degree() + b.degree() > a.domain().dim()) {
        throw InputError("wedge: total degree exceeds dimension");
    }
    DifferentialForm out(a.domain_ptr(), a.degree() + b.degree());
    for (const auto &[I, ca] : a.terms()) {
        for (const auto &[J, cb] : b.terms()) {
            if (I & J) {
                continue;
            }
            const Expr c = ca * cb;
            out.add(I | J, merge_sign(I, J) > 0 ? c : -c);
        }
    }
    return out;
}

inline DifferentialForm ext_d(const DifferentialForm &a)
{
    const int n = a.domain().dim();
    if (a.degree() >= n) {
        throw InputError("ext_d: degree " + std::to_string(a.degree()) + " is not below the dimension");
    }
    DifferentialForm out(a.domain_ptr(), a.degree() + 1);
    const auto &names = a.domain().names();
    std::vector<Differentiator> d;
    d.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        d.emplace_back(names[static_cast<std::size_t>(i)]);
    }
    for (const auto &[I, c] : a.terms()) {
        for (int i = 0; i < n; ++i) {
            if (I & bit(i)) {
                continue;
            }
            Expr dc = d[static_cast<std::size_t>(i)](c);
            if (dc.is_zero()) {
                continue;
            }
            out.add(I | bit(i), merge_sign(bit(i), I) > 0 ? dc : -dc);
        }
    }
    return out;
}

class VectorField {
public:
    VectorField(DomainPtr domain, std::vector<Expr> components)
        : domain_(std::move(domain)), components_(std::move(components))
    {
        if (!domain_ || static_cast<int>(components_.size()) != domain_->dim()) {
            throw InputError("VectorField: component count must equal the dimension");
        }
    }

    static VectorField zero(DomainPtr domain)
    {
        const auto n = static_cast<std::size_t>(domain->dim());
        return VectorField(std::move(domain), std::vector<Expr>(n, Expr(0.0)));
    }

    // The coordinate field d/d(coord).
    static VectorField coordinate(DomainPtr domain, const std::string &coord)
    {
        VectorField v = zero(domain);
        v.components_[static_cast<std::size_t>(domain->index_of(coord))] = Expr(1.0);
        return v;
    }

    [[nodiscard]] const DomainPtr &domain_ptr() const { return domain_; }
    [[nodiscard]] const CoordinateDomain &domain() const { return *domain_; }
    [[nodiscard]] const std::vector<Expr> &components() const { return components_; }
    [[nodiscard]] const Expr &operator[](int i) const { return components_.at(static_cast<std::size_t>(i)); }
    [[nodiscard]] const Expr &component(const std::string &coord) const { return (*this)[domain_->index_of(coord)]; }

    // Directional derivative X(f).
    [[nodiscard]] Expr apply(const Expr &f) const
    {
        std::vector<Expr> terms;
        for (int i = 0; i < domain_->dim(); ++i) {
            if (components_[static_cast<std::size_t>(i)].is_zero()) {
                continue;
            }
            terms.push_back(components_[static_cast<std::size_t>(i)] * diff(f, domain_->names()[static_cast<std::size_t>(i)]));
        }
        return sum(std::move(terms));
    }

    template <class Fn>
    [[nodiscard]] VectorField map_components(Fn &&fn) const
    {
        std::vector<Expr> c;
        for (const auto &e : components_) {
            c.push_back(fn(e));
        }
        return VectorField(domain_, std::move(c));
    }

private:
    DomainPtr domain_;
    std::vector<Expr> components_;
};

inline VectorField operator+(const VectorField &a, const VectorField &b)
{
    require_same_domain(a.domain_ptr(), b.domain_ptr(), "vector field addition");
    std::vector<Expr> c;
    for (int i = 0; i < a.domain().dim(); ++i) {
        c.push_back(a[i] + b[i]);
    }
    return VectorField(a.domain_ptr(), std::move(c));
}
inline VectorField operator-(const VectorField &a)
{
    return a.map_components([](const Expr &e) { return -e; });
}
inline VectorField operator-(const VectorField &a, const VectorField &b) { return a + (-b); }
inline VectorField operator*(const Expr &f, const VectorField &a)
{
    return a.map_components([&](const Expr &e) { return f * e; });
}

// Lie bracket [X, Y]^i = X(Y^i) - Y(X^i).
inline VectorField bracket(const VectorField &X, const VectorField &Y)
{
    require_same_domain(X.domain_ptr(), Y.domain_ptr(), "bracket");
    std::vector<Expr> c;
    for (int i = 0; i < X.domain().dim(); ++i) {
        c.push_back(X.apply(Y[i]) - Y.apply(X[i]));
    }
    return VectorField(X.domain_ptr(), std::move(c));
}

// Interior product i_X a; lowers the degree by one.
inline DifferentialForm interior(const VectorField &X, const DifferentialForm &a)
{
    require_same_domain(X.domain_ptr(), a.domain_ptr(), "interior");
    if (a.degree() < 1) {
        throw InputError("interior: form must have degree at least 1");
    }
    DifferentialForm out(a.domain_ptr(), a.degree() - 1);
    for (const auto &[I, c] : a.terms()) {
        int position = 0;
        for (Mask rest = I; rest != 0; rest &= rest - 1, ++position) {
            const int i = std::countr_zero(rest);
            const Expr &xi = X[i];
            if (xi.is_zero()) {
                continue;
            }
            const Expr t = xi * c;
            out.add(I & ~bit(i), position % 2 == 0 ? t : -t);
        }
    }
    return out;
}

// a(X) for a 1-form a, as a scalar expression.
inline Expr contract(const DifferentialForm &a, const VectorField &X)
{
    if (a.degree() != 1) {
        throw InputError("contract: expects a 1-form");
    }
    return interior(X, a).scalar();
}

// Cartan's formula L_X = i_X d + d i_X.
inline DifferentialForm lie_derivative(const VectorField &X, const DifferentialForm &a)
{
    require_same_domain(X.domain_ptr(), a.domain_ptr(), "lie_derivative");
    if (a.degree() == 0) {
        return DifferentialForm::function(a.domain_ptr(), X.apply(a.scalar()));
    }
    DifferentialForm out = ext_d(interior(X, a));
    if (a.degree() < a.domain().dim()) {
        out += interior(X, ext_d(a));
    }
    return out;
}

inline DifferentialForm d_of(const DomainPtr &domain, const Expr &f)
{
    return ext_d(DifferentialForm::function(domain, f));
}

// ---------------------------------------------------------------------------

// A map between coordinate domains given by one expression (in the source
// coordinates) per target coordinate. Angular target coordinates are read
// modulo 1.
class SmoothMap {
public:
    SmoothMap(DomainPtr source, DomainPtr target, std::vector<Expr> components)
        : source_(std::move(source)), target_(std::move(target)), components_(std::move(components))
    {
        if (!source_ || !target_ || static_cast<int>(components_.size()) != target_->dim()) {
            throw InputError("SmoothMap: need one component per target coordinate");
        }
    }

    static SmoothMap identity(const DomainPtr &d)
    {
        std::vector<Expr> c;
        for (int i = 0; i < d->dim(); ++i) {
            c.push_back(d->var(i));
        }
        return SmoothMap(d, d, std::move(c));
    }

    [[nodiscard]] const DomainPtr &source() const { return source_; }
    [[nodiscard]] const DomainPtr &target() const { return target_; }
    [[nodiscard]] const std::vector<Expr> &components() const { return components_; }
    [[nodiscard]] const Expr &operator[](int i) const { return components_.at(static_cast<std::size_t>(i)); }

    [[nodiscard]] std::unordered_map<std::string, Expr> bindings() const
    {
        std::unordered_map<std::string, Expr> b;
        for (int i = 0; i < target_->dim(); ++i) {
            b.emplace(target_->names()[static_cast<std::size_t>(i)], components_[static_cast<std::size_t>(i)]);
        }
        return b;
    }

    // Jacobian entries dF_i/dx_j, row-major over (target, source).
    [[nodiscard]] std::vector<std::vector<Expr>> jacobian() const
    {
        std::vector<std::vector<Expr>> J(components_.size());
        for (int j = 0; j < source_->dim(); ++j) {
            Differentiator d(source_->names()[static_cast<std::size_t>(j)]);
            for (std::size_t i = 0; i < components_.size(); ++i) {
                J[i].push_back(d(components_[i]));
            }
        }
        return J;
    }

private:
    DomainPtr source_;
    DomainPtr target_;
    std::vector<Expr> components_;
};

// outer o inner.
inline SmoothMap compose(const SmoothMap &outer, const SmoothMap &inner)
{
    require_same_domain(outer.source(), inner.target(), "compose");
    Substituter sub(inner.bindings());
    std::vector<Expr> c;
    for (const auto &e : outer.components()) {
        c.push_back(sub(e));
    }
    return SmoothMap(inner.source(), outer.target(), std::move(c));
}

// Pullback of a form on F's target to F's source.
inline DifferentialForm pullback(const SmoothMap &F, const DifferentialForm &a)
{
    require_same_domain(F.target(), a.domain_ptr(), "pullback");
    Substituter sub(F.bindings());
    const auto &src = F.source();
    const int m = src->dim();
    std::vector<std::optional<DifferentialForm>> dy(static_cast<std::size_t>(F.target()->dim()));
    std::vector<Differentiator> d;
    for (int j = 0; j < m; ++j) {
        d.emplace_back(src->names()[static_cast<std::size_t>(j)]);
    }
    auto pulled_dy = [&](int i) -> const DifferentialForm & {
        auto &slot = dy[static_cast<std::size_t>(i)];
        if (!slot) {
            DifferentialForm f(src, 1);
            for (int j = 0; j < m; ++j) {
                f.add(bit(j), d[static_cast<std::size_t>(j)](F[i]));
            }
            slot = std::move(f);
        }
        return *slot;
    };
    if (a.degree() > m) {
        throw InputError("pullback: degree exceeds source dimension");
    }
    DifferentialForm out(src, a.degree());
    for (const auto &[J, c] : a.terms()) {
        const Expr cs = sub(c);
        if (cs.is_zero()) {
            continue;
        }
        DifferentialForm term = DifferentialForm::function(src, cs);
        for (int i : indices_of(J)) {
            term = wedge(term, pulled_dy(i));
            if (term.is_structurally_zero()) {
                break;
            }
        }
        out += term;
    }
    return out;
}

// Pushforward of a function: f o F.
inline Expr pullback(const SmoothMap &F, const Expr &f) { return substitute(f, F.bindings()); }

// flat_Phi(X) = i_X Phi.
inline DifferentialForm flat(const DifferentialForm &phi, const VectorField &X)
{
    if (phi.degree() != 2) {
        throw InputError("flat: expects a 2-form");
    }
    return interior(X, phi);
}

} // namespace lcs
