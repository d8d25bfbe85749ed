#include "retrig/polynomial.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <stdexcept>

namespace retrig {

Polynomial::Polynomial(int nvars) : nvars_(nvars) {
    if (nvars < 0) throw std::invalid_argument("Polynomial: negative variable count");
}

Polynomial Polynomial::constant(int nvars, double c) {
    Polynomial p(nvars);
    p.add_term(ExponentVec(nvars, 0), c);
    return p;
}

Polynomial Polynomial::variable(int nvars, int index) {
    if (index < 0 || index >= nvars)
        throw std::invalid_argument("Polynomial::variable: index out of range");
    Polynomial p(nvars);
    ExponentVec e(nvars, 0);
    e[index] = 1;
    p.add_term(e, 1.0);
    return p;
}

void Polynomial::add_term(const ExponentVec& exps, double coef) {
    if (static_cast<int>(exps.size()) != nvars_)
        throw std::invalid_argument("Polynomial::add_term: exponent vector length mismatch");
    auto it = terms_.find(exps);
    if (it == terms_.end()) {
        if (std::abs(coef) >= prune_tol()) terms_.emplace(exps, coef);
    } else {
        it->second += coef;
        if (std::abs(it->second) < prune_tol()) terms_.erase(it);
    }
}

int Polynomial::degree() const {
    int d = -1;
    for (const auto& [e, c] : terms_)
        d = std::max(d, std::accumulate(e.begin(), e.end(), 0));
    return d;
}

bool Polynomial::is_linear_form() const {
    for (const auto& [e, c] : terms_)
        if (std::accumulate(e.begin(), e.end(), 0) != 1) return false;
    return true;
}

Eigen::RowVectorXd Polynomial::linear_coefficients() const {
    if (!is_linear_form())
        throw std::logic_error("linear_coefficients: polynomial is not a linear form");
    Eigen::RowVectorXd row = Eigen::RowVectorXd::Zero(nvars_);
    for (const auto& [e, c] : terms_)
        for (int j = 0; j < nvars_; ++j)
            if (e[j] == 1) row(j) = c;
    return row;
}

double Polynomial::eval(const Eigen::VectorXd& x) const {
    if (x.size() != nvars_)
        throw std::invalid_argument("Polynomial::eval: dimension mismatch");
    double acc = 0.0;
    for (const auto& [e, c] : terms_) {
        double m = c;
        for (int j = 0; j < nvars_; ++j) {
            for (int k = 0; k < e[j]; ++k) m *= x(j);
        }
        acc += m;
    }
    return acc;
}

Polynomial Polynomial::derivative(int var) const {
    if (var < 0 || var >= nvars_)
        throw std::invalid_argument("Polynomial::derivative: variable index out of range");
    Polynomial out(nvars_);
    for (const auto& [e, c] : terms_) {
        if (e[var] == 0) continue;
        ExponentVec d = e;
        d[var] -= 1;
        out.add_term(d, c * e[var]);
    }
    return out;
}

Polynomial Polynomial::pow(int k) const {
    if (k < 0) throw std::invalid_argument("Polynomial::pow: negative exponent");
    Polynomial out = constant(nvars_, 1.0);
    for (int i = 0; i < k; ++i) out = out * *this;
    return out;
}

Polynomial Polynomial::substitute(std::span<const Polynomial> subs) const {
    if (static_cast<int>(subs.size()) != nvars_)
        throw std::invalid_argument("Polynomial::substitute: substitution count mismatch");
    const int target_vars = subs.empty() ? 0 : subs.front().nvars();
    for (const auto& s : subs)
        if (s.nvars() != target_vars)
            throw std::invalid_argument("Polynomial::substitute: mixed variable counts");
    Polynomial out(target_vars);
    for (const auto& [e, c] : terms_) {
        Polynomial term = Polynomial::constant(target_vars, c);
        for (int j = 0; j < nvars_; ++j)
            if (e[j] > 0) term = term * subs[j].pow(e[j]);
        out = out + term;
    }
    return out;
}

Polynomial Polynomial::operator+(const Polynomial& o) const {
    if (o.nvars_ != nvars_) throw std::invalid_argument("Polynomial+: dimension mismatch");
    Polynomial out = *this;
    for (const auto& [e, c] : o.terms_) out.add_term(e, c);
    out.prune();
    return out;
}

Polynomial Polynomial::operator-(const Polynomial& o) const { return *this + (-o); }

Polynomial Polynomial::operator-() const { return *this * -1.0; }

Polynomial Polynomial::operator*(const Polynomial& o) const {
    if (o.nvars_ != nvars_) throw std::invalid_argument("Polynomial*: dimension mismatch");
    Polynomial out(nvars_);
    for (const auto& [ea, ca] : terms_) {
        for (const auto& [eb, cb] : o.terms_) {
            ExponentVec e(nvars_);
            for (int j = 0; j < nvars_; ++j) e[j] = ea[j] + eb[j];
            out.add_term(e, ca * cb);
        }
    }
    out.prune();
    return out;
}

Polynomial Polynomial::operator*(double s) const {
    Polynomial out(nvars_);
    for (const auto& [e, c] : terms_) out.add_term(e, c * s);
    out.prune();
    return out;
}

double Polynomial::coeff_distance(const Polynomial& o) const {
    if (o.nvars_ != nvars_) throw std::invalid_argument("coeff_distance: dimension mismatch");
    double d = 0.0;
    for (const auto& [e, c] : terms_) {
        auto it = o.terms_.find(e);
        d = std::max(d, std::abs(c - (it == o.terms_.end() ? 0.0 : it->second)));
    }
    for (const auto& [e, c] : o.terms_)
        if (!terms_.count(e)) d = std::max(d, std::abs(c));
    return d;
}

void Polynomial::prune() {
    for (auto it = terms_.begin(); it != terms_.end();) {
        if (std::abs(it->second) < prune_tol()) it = terms_.erase(it);
        else ++it;
    }
}

namespace {

struct Scanner {
    const std::string& s;
    size_t i = 0;

    void skip_ws() { while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i; }
    bool done() { skip_ws(); return i >= s.size(); }
    char peek() { skip_ws(); return i < s.size() ? s[i] : '\0'; }

    double number() {
        skip_ws();
        size_t end = 0;
        double v = std::stod(s.substr(i), &end);
        i += end;
        return v;
    }

    int integer() {
        skip_ws();
        size_t end = 0;
        int v = std::stoi(s.substr(i), &end);
        i += end;
        return v;
    }
};

}  // namespace

Polynomial Polynomial::parse(int nvars, const std::string& text) {
    Polynomial out(nvars);
    Scanner sc{text};
    bool first = true;
    while (!sc.done()) {
        double sign = 1.0;
        char c = sc.peek();
        if (c == '+' || c == '-') {
            sign = (c == '-') ? -1.0 : 1.0;
            ++sc.i;
        } else if (!first) {
            throw std::invalid_argument("Polynomial::parse: expected '+' or '-' near position " +
                                        std::to_string(sc.i));
        }
        first = false;

        double coef = sign;
        ExponentVec exps(nvars, 0);
        bool saw_factor = false;
        // optional leading numeric coefficient
        c = sc.peek();
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
            coef *= sc.number();
            saw_factor = true;
        }
        for (;;) {
            c = sc.peek();
            if (c == '*') {
                ++sc.i;
                c = sc.peek();
            } else if (saw_factor && c != 'x') {
                break;
            }
            if (c == 'x') {
                ++sc.i;
                int idx = sc.integer();
                if (idx < 1 || idx > nvars)
                    throw std::invalid_argument("Polynomial::parse: variable x" +
                                                std::to_string(idx) + " out of range");
                int p = 1;
                if (sc.peek() == '^') {
                    ++sc.i;
                    p = sc.integer();
                    if (p < 0) throw std::invalid_argument("Polynomial::parse: negative power");
                }
                exps[idx - 1] += p;
                saw_factor = true;
            } else if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
                coef *= sc.number();
                saw_factor = true;
            } else {
                break;
            }
        }
        if (!saw_factor)
            throw std::invalid_argument("Polynomial::parse: empty term near position " +
                                        std::to_string(sc.i));
        out.add_term(exps, coef);
    }
    return out;
}

std::string Polynomial::str() const {
    if (terms_.empty()) return "0";
    std::string out;
    for (const auto& [e, c] : terms_) {
        const bool has_vars = std::accumulate(e.begin(), e.end(), 0) > 0;
        double mag = std::abs(c);
        if (out.empty()) {
            if (c < 0) out += "-";
        } else {
            out += (c < 0) ? " - " : " + ";
        }
        char buf[32];
        std::snprintf(buf, sizeof buf, "%.17g", mag);
        bool wrote_coef = false;
        if (!has_vars || mag != 1.0) {
            out += buf;
            wrote_coef = true;
        }
        bool first_var = true;
        for (int j = 0; j < nvars_; ++j) {
            if (e[j] == 0) continue;
            if (wrote_coef || !first_var) out += "*";
            out += "x" + std::to_string(j + 1);
            if (e[j] > 1) out += "^" + std::to_string(e[j]);
            first_var = false;
        }
    }
    return out;
}

PolyVectorField::PolyVectorField(std::vector<Polynomial> comps) : components(std::move(comps)) {
    for (const auto& p : components)
        if (p.nvars() != nvars())
            throw std::invalid_argument("PolyVectorField: components over different variable sets");
}

Eigen::VectorXd PolyVectorField::eval(const Eigen::VectorXd& x) const {
    Eigen::VectorXd out(dim());
    for (int j = 0; j < dim(); ++j) out(j) = components[j].eval(x);
    return out;
}

Polynomial lie_derivative(const Polynomial& h, const PolyVectorField& F) {
    if (h.nvars() != F.nvars() || F.dim() != F.nvars())
        throw std::invalid_argument("lie_derivative: dimension mismatch");
    Polynomial out(h.nvars());
    for (int j = 0; j < h.nvars(); ++j)
        out = out + h.derivative(j) * F.components[j];
    return out;
}

Polynomial repeated_lie(const Polynomial& h, const PolyVectorField& F, int j) {
    if (j < 0) throw std::invalid_argument("repeated_lie: negative order");
    Polynomial out = h;
    for (int k = 0; k < j; ++k) out = lie_derivative(out, F);
    return out;
}

}  // namespace retrig
