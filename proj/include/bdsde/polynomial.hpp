#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <vector>

#include "bdsde/error.hpp"

namespace bdsde {

/// Exponent of each variable in a monomial; size equals the number of variables.
using Exponents = std::vector<int>;

/// Sparse multivariate polynomial with coefficients of type Scalar.
///
/// Terms are kept in lexicographic exponent order so iteration, and therefore
/// every arithmetic result, is reproducible. Terms whose coefficient becomes
/// exactly zero are dropped.
template <typename Scalar>
class Polynomial {
public:
    using Terms = std::map<Exponents, Scalar>;
    using VectorType = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
    using MatrixType = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

    Polynomial() = default;
    explicit Polynomial(int num_vars) : num_vars_(num_vars) {
        if (num_vars < 0) fail(ErrorKind::invalid_argument, "polynomial: negative variable count");
    }

    static Polynomial constant(int num_vars, Scalar c) {
        Polynomial p(num_vars);
        p.add_term(Exponents(static_cast<std::size_t>(num_vars), 0), c);
        return p;
    }

    static Polynomial variable(int num_vars, int k) {
        if (k < 0 || k >= num_vars) fail(ErrorKind::index, "polynomial: variable index out of range");
        Polynomial p(num_vars);
        Exponents e(static_cast<std::size_t>(num_vars), 0);
        e[static_cast<std::size_t>(k)] = 1;
        p.add_term(e, Scalar(1));
        return p;
    }

    /// Univariate polynomial from ascending coefficients c0 + c1 x + c2 x^2 + ...
    static Polynomial univariate(const std::vector<Scalar>& ascending) {
        Polynomial p(1);
        for (std::size_t k = 0; k < ascending.size(); ++k) p.add_term({static_cast<int>(k)}, ascending[k]);
        return p;
    }

    int num_vars() const noexcept { return num_vars_; }
    const Terms& terms() const noexcept { return terms_; }
    bool is_zero() const noexcept { return terms_.empty(); }

    int degree() const {
        int deg = 0;
        for (const auto& [e, c] : terms_) {
            int total = 0;
            for (int k : e) total += k;
            deg = std::max(deg, total);
        }
        return deg;
    }

    Scalar coefficient(const Exponents& e) const {
        auto it = terms_.find(e);
        return it == terms_.end() ? Scalar(0) : it->second;
    }

    void add_term(const Exponents& e, Scalar c) {
        if (static_cast<int>(e.size()) != num_vars_)
            fail(ErrorKind::invalid_argument, "polynomial: exponent arity mismatch");
        if (c == Scalar(0)) return;
        auto [it, inserted] = terms_.try_emplace(e, c);
        if (!inserted) {
            it->second += c;
            if (it->second == Scalar(0)) terms_.erase(it);
        }
    }

    Scalar max_abs_coefficient() const {
        Scalar m(0);
        for (const auto& [e, c] : terms_) m = std::max(m, Scalar(std::abs(c)));
        return m;
    }

    template <typename Derived>
    Scalar operator()(const Eigen::MatrixBase<Derived>& x) const {
        if (x.size() != num_vars_) fail(ErrorKind::invalid_argument, "polynomial: point has wrong dimension");
        Scalar acc(0);
        for (const auto& [e, c] : terms_) {
            Scalar term = c;
            for (int k = 0; k < num_vars_; ++k) {
                for (int p = 0; p < e[static_cast<std::size_t>(k)]; ++p) term *= x(k);
            }
            acc += term;
        }
        return acc;
    }

    /// Evaluates at every row of `points`.
    VectorType evaluate_rows(const MatrixType& points) const {
        if (points.cols() != num_vars_) fail(ErrorKind::invalid_argument, "polynomial: points have wrong dimension");
        const int deg = degree();
        VectorType out(points.rows());
        std::vector<Scalar> powers(static_cast<std::size_t>(num_vars_ * (deg + 1)));
        for (Eigen::Index r = 0; r < points.rows(); ++r) {
            for (int k = 0; k < num_vars_; ++k) {
                Scalar v(1);
                for (int p = 0; p <= deg; ++p) {
                    powers[static_cast<std::size_t>(k * (deg + 1) + p)] = v;
                    v *= points(r, k);
                }
            }
            Scalar acc(0);
            for (const auto& [e, c] : terms_) {
                Scalar term = c;
                for (int k = 0; k < num_vars_; ++k)
                    term *= powers[static_cast<std::size_t>(k * (deg + 1) + e[static_cast<std::size_t>(k)])];
                acc += term;
            }
            out(r) = acc;
        }
        return out;
    }

    Polynomial& operator+=(const Polynomial& o) {
        check_arity(o);
        for (const auto& [e, c] : o.terms_) add_term(e, c);
        return *this;
    }

    Polynomial& operator-=(const Polynomial& o) {
        check_arity(o);
        for (const auto& [e, c] : o.terms_) add_term(e, -c);
        return *this;
    }

    Polynomial& operator*=(Scalar s) {
        if (s == Scalar(0)) {
            terms_.clear();
            return *this;
        }
        for (auto& [e, c] : terms_) c *= s;
        return *this;
    }

    friend Polynomial operator+(Polynomial a, const Polynomial& b) { return a += b; }
    friend Polynomial operator-(Polynomial a, const Polynomial& b) { return a -= b; }
    friend Polynomial operator*(Polynomial a, Scalar s) { return a *= s; }
    friend Polynomial operator*(Scalar s, Polynomial a) { return a *= s; }

    friend Polynomial operator*(const Polynomial& a, const Polynomial& b) {
        a.check_arity(b);
        Polynomial out(a.num_vars_);
        Exponents e(static_cast<std::size_t>(a.num_vars_));
        for (const auto& [ea, ca] : a.terms_) {
            for (const auto& [eb, cb] : b.terms_) {
                for (std::size_t k = 0; k < e.size(); ++k) e[k] = ea[k] + eb[k];
                out.add_term(e, ca * cb);
            }
        }
        return out;
    }

    Polynomial pow(int k) const {
        if (k < 0) fail(ErrorKind::invalid_argument, "polynomial: negative power");
        Polynomial out = constant(num_vars_, Scalar(1));
        for (int p = 0; p < k; ++p) out = out * *this;
        return out;
    }

    /// Substitutes variable k of *this by replacements[k]; all replacements
    /// must share one arity, which becomes the arity of the result.
    Polynomial substitute(const std::vector<Polynomial>& replacements) const {
        if (static_cast<int>(replacements.size()) != num_vars_)
            fail(ErrorKind::invalid_argument, "polynomial: substitution arity mismatch");
        const int out_vars = replacements.empty() ? 0 : replacements.front().num_vars();
        std::vector<std::vector<Polynomial>> power_cache(replacements.size());
        Polynomial out(out_vars);
        for (const auto& [e, c] : terms_) {
            Polynomial term = constant(out_vars, c);
            for (std::size_t k = 0; k < e.size(); ++k) {
                auto& cache = power_cache[k];
                if (cache.empty()) cache.push_back(constant(out_vars, Scalar(1)));
                while (static_cast<int>(cache.size()) <= e[k]) cache.push_back(cache.back() * replacements[k]);
                if (e[k] > 0) term = term * cache[static_cast<std::size_t>(e[k])];
            }
            out += term;
        }
        return out;
    }

    friend bool operator==(const Polynomial& a, const Polynomial& b) {
        return a.num_vars_ == b.num_vars_ && a.terms_ == b.terms_;
    }

private:
    void check_arity(const Polynomial& o) const {
        if (o.num_vars_ != num_vars_) fail(ErrorKind::invalid_argument, "polynomial: arity mismatch");
    }

    int num_vars_ = 0;
    Terms terms_;
};

/// Largest coefficient-wise distance between two polynomials of equal arity.
template <typename Scalar>
Scalar max_abs_difference(const Polynomial<Scalar>& a, const Polynomial<Scalar>& b) {
    return (a - b).max_abs_coefficient();
}

/// All exponent vectors in `num_vars` variables with total degree <= `degree`,
/// graded by degree, lexicographic within a degree.
std::vector<Exponents> graded_monomials(int num_vars, int degree);

using Poly = Polynomial<double>;

}  // namespace bdsde
