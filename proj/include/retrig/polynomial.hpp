#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace retrig {

/// Sparse multivariate polynomial with double coefficients.
///
/// Terms are keyed by exponent vectors (length = number of variables) in a
/// sorted map, so iteration order, printing and comparisons are
/// deterministic. Coefficients with magnitude below prune_tol() are dropped
/// after every arithmetic operation.
class Polynomial {
public:
    using ExponentVec = std::vector<int>;
    using TermMap = std::map<ExponentVec, double>;

    explicit Polynomial(int nvars);

    static Polynomial zero(int nvars) { return Polynomial(nvars); }
    static Polynomial constant(int nvars, double c);
    static Polynomial variable(int nvars, int index);  // 0-based

    /// Parses terms like "3.5*x1^2*x3 - x2". Variables are x1..xn, '^' for
    /// powers, '*' optional between coefficient and monomial.
    static Polynomial parse(int nvars, const std::string& text);

    static constexpr double prune_tol() { return 1e-12; }

    int nvars() const { return nvars_; }
    const TermMap& terms() const { return terms_; }
    bool is_zero() const { return terms_.empty(); }
    int degree() const;  // -1 for the zero polynomial

    /// True when every term has total degree exactly one (linear form,
    /// no constant part). The zero polynomial counts as a linear form.
    bool is_linear_form() const;

    /// Coefficient row of a linear form (throws otherwise).
    Eigen::RowVectorXd linear_coefficients() const;

    void add_term(const ExponentVec& exps, double coef);

    double eval(const Eigen::VectorXd& x) const;
    Polynomial derivative(int var) const;
    Polynomial pow(int k) const;

    /// Substitutes subs[j] for variable j; all subs share a common variable
    /// count, which becomes the variable count of the result.
    Polynomial substitute(std::span<const Polynomial> subs) const;

    Polynomial operator+(const Polynomial& o) const;
    Polynomial operator-(const Polynomial& o) const;
    Polynomial operator*(const Polynomial& o) const;
    Polynomial operator*(double s) const;
    Polynomial operator-() const;

    /// Max |coefficient difference| against another polynomial.
    double coeff_distance(const Polynomial& o) const;

    std::string str() const;

private:
    void prune();

    int nvars_;
    TermMap terms_;
};

inline Polynomial operator*(double s, const Polynomial& p) { return p * s; }

/// Vector field with polynomial components over a shared variable set.
struct PolyVectorField {
    std::vector<Polynomial> components;

    explicit PolyVectorField(std::vector<Polynomial> comps);

    int dim() const { return static_cast<int>(components.size()); }
    int nvars() const { return components.empty() ? 0 : components.front().nvars(); }

    Eigen::VectorXd eval(const Eigen::VectorXd& x) const;
};

/// L_F h = grad(h) . F
Polynomial lie_derivative(const Polynomial& h, const PolyVectorField& F);

/// j-fold Lie derivative; j = 0 returns h.
Polynomial repeated_lie(const Polynomial& h, const PolyVectorField& F, int j);

}  // namespace retrig
