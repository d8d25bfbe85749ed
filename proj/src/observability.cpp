#include "retrig/observability.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

namespace retrig {

void PolyPlant::validate() const {
    if (n <= 0 || m < 0 || l <= 0) throw std::invalid_argument("PolyPlant: bad dimensions");
    if (static_cast<int>(f.size()) != n) throw std::invalid_argument("PolyPlant: f size != n");
    if (static_cast<int>(g.size()) != l || static_cast<int>(rows.size()) != l)
        throw std::invalid_argument("PolyPlant: g/rows size != l");
    if (static_cast<int>(k.size()) != m) throw std::invalid_argument("PolyPlant: k size != m");
    for (const auto& p : f)
        if (p.nvars() != n + m) throw std::invalid_argument("PolyPlant: f over wrong variables");
    for (const auto& p : g)
        if (p.nvars() != n + m) throw std::invalid_argument("PolyPlant: g over wrong variables");
    for (const auto& p : k)
        if (p.nvars() != l + n) throw std::invalid_argument("PolyPlant: k over wrong variables");
    for (int i = 0; i < l; ++i) {
        if (rows[i] < 0 || rows[i] >= n) throw std::invalid_argument("PolyPlant: row out of range");
        for (int j = 0; j < i; ++j)
            if (rows[i] == rows[j])
                throw std::invalid_argument("PolyPlant: parameter rows not distinct");
    }
}

namespace {

// Substitution list sending (x, u) with u = k(z, x) into polynomials over x.
std::vector<Polynomial> feedback_substitution(const PolyPlant& pp, const Eigen::VectorXd& z) {
    // k components at numeric z: substitute z constants into the first l slots.
    std::vector<Polynomial> k_sub;
    k_sub.reserve(pp.l + pp.n);
    for (int i = 0; i < pp.l; ++i) k_sub.push_back(Polynomial::constant(pp.n, z(i)));
    for (int j = 0; j < pp.n; ++j) k_sub.push_back(Polynomial::variable(pp.n, j));

    std::vector<Polynomial> subs;
    subs.reserve(pp.n + pp.m);
    for (int j = 0; j < pp.n; ++j) subs.push_back(Polynomial::variable(pp.n, j));
    for (int j = 0; j < pp.m; ++j) subs.push_back(pp.k[j].substitute(k_sub));
    return subs;
}

}  // namespace

Polynomial PolyPlant::g_comp(int i, const Eigen::VectorXd& z) const {
    if (i < 0 || i >= l) throw std::invalid_argument("PolyPlant::g_comp: index out of range");
    const auto subs = feedback_substitution(*this, z);
    return g[i].substitute(subs);
}

PolyVectorField PolyPlant::closed_loop(const Eigen::VectorXd& z,
                                       const Eigen::VectorXd& theta) const {
    if (z.size() != l || theta.size() != l)
        throw std::invalid_argument("PolyPlant::closed_loop: parameter dimension mismatch");
    const auto subs = feedback_substitution(*this, z);
    std::vector<Polynomial> comps;
    comps.reserve(n);
    for (int j = 0; j < n; ++j) comps.push_back(f[j].substitute(subs));
    for (int i = 0; i < l; ++i)
        comps[rows[i]] = comps[rows[i]] + g[i].substitute(subs) * theta(i);
    return PolyVectorField(std::move(comps));
}

PolyPlant poly_example_4_2(double c, double k1, double k2) {
    PolyPlant pp;
    pp.n = 2;
    pp.m = 1;
    pp.l = 1;
    // variables of f, g: x1, x2, u=x3
    pp.f = {Polynomial::parse(3, "x2"), Polynomial::parse(3, "x3")};
    Polynomial g1(3);
    g1.add_term({1, 0, 0}, 1.0);
    g1.add_term({0, 1, 0}, c);
    pp.g = {g1};
    pp.rows = {1};
    // variables of k: z1=x1, x1=x2, x2=x3
    Polynomial k0(3);
    k0.add_term({0, 1, 0}, -k1);
    k0.add_term({0, 0, 1}, -k2);
    k0.add_term({1, 1, 0}, -1.0);
    k0.add_term({1, 0, 1}, -c);
    pp.k = {k0};
    pp.validate();
    return pp;
}

PolyPlant poly_example_4_3(double k1, double k2, double k3) {
    PolyPlant pp;
    pp.n = 3;
    pp.m = 1;
    pp.l = 2;
    // variables of f, g: x1..x3, u=x4
    pp.f = {Polynomial::parse(4, "x2"), Polynomial::parse(4, "x1^2 + x3"),
            Polynomial::parse(4, "x4")};
    pp.g = {Polynomial::parse(4, "x2"), Polynomial::parse(4, "x1^2")};
    pp.rows = {1, 2};
    // variables of k: z1, z2, then x1, x2, x3 as x3, x4, x5
    // k = -k1 x1 - k2 x2 - 2 x1 x2 - (z1 + k3)(x1^2 + z1 x2 + x3) - z2 x1^2
    const int N = 5;
    Polynomial xi3(N);  // x1^2 + z1 x2 + x3
    xi3.add_term({0, 0, 2, 0, 0}, 1.0);
    xi3.add_term({1, 0, 0, 1, 0}, 1.0);
    xi3.add_term({0, 0, 0, 0, 1}, 1.0);
    Polynomial z1k3(N);
    z1k3.add_term({1, 0, 0, 0, 0}, 1.0);
    z1k3 = z1k3 + Polynomial::constant(N, k3);
    Polynomial kpoly(N);
    kpoly.add_term({0, 0, 1, 0, 0}, -k1);
    kpoly.add_term({0, 0, 0, 1, 0}, -k2);
    kpoly.add_term({0, 0, 1, 1, 0}, -2.0);
    kpoly.add_term({0, 1, 2, 0, 0}, -1.0);  // -z2 x1^2
    kpoly = kpoly - z1k3 * xi3;
    pp.k = {kpoly};
    pp.validate();
    return pp;
}

namespace {

struct GaussNewtonResult {
    Eigen::VectorXd x;
    double max_residual;
};

GaussNewtonResult minimize_residual(const std::vector<Polynomial>& h,
                                    const std::vector<std::vector<Polynomial>>& grads,
                                    Eigen::VectorXd x) {
    const int n = static_cast<int>(x.size());
    const int m = static_cast<int>(h.size());
    double lambda = 1e-3;
    auto sumsq = [&](const Eigen::VectorXd& p) {
        double s = 0.0;
        for (const auto& hj : h) {
            const double v = hj.eval(p);
            s += v * v;
        }
        return s;
    };
    double cost = sumsq(x);
    for (int iter = 0; iter < 200; ++iter) {
        Eigen::VectorXd r(m);
        Eigen::MatrixXd J(m, n);
        for (int j = 0; j < m; ++j) {
            r(j) = h[j].eval(x);
            for (int c = 0; c < n; ++c) J(j, c) = grads[j][c].eval(x);
        }
        const Eigen::MatrixXd JtJ = J.transpose() * J;
        const Eigen::VectorXd Jtr = J.transpose() * r;
        bool moved = false;
        for (int damp = 0; damp < 12; ++damp) {
            const Eigen::MatrixXd H =
                JtJ + lambda * Eigen::MatrixXd::Identity(n, n);
            const Eigen::VectorXd step = H.ldlt().solve(-Jtr);
            const Eigen::VectorXd cand = x + step;
            const double cand_cost = sumsq(cand);
            if (cand_cost < cost) {
                x = cand;
                cost = cand_cost;
                lambda = std::max(lambda * 0.3, 1e-14);
                moved = true;
                break;
            }
            lambda *= 10.0;
        }
        if (!moved || cost < 1e-26) break;
    }
    double maxr = 0.0;
    for (const auto& hj : h) maxr = std::max(maxr, std::abs(hj.eval(x)));
    return {x, maxr};
}

}  // namespace

ZeroSetCertificate zero_set_certify(const std::vector<Polynomial>& h_list, int order_used,
                                    const ZeroSetSettings& settings) {
    if (h_list.empty()) throw std::invalid_argument("zero_set_certify: empty polynomial list");
    const int n = h_list.front().nvars();
    for (const auto& h : h_list)
        if (h.nvars() != n)
            throw std::invalid_argument("zero_set_certify: mixed variable counts");

    ZeroSetCertificate cert;
    cert.order_used = order_used;

    std::vector<const Polynomial*> nonzero;
    for (const auto& h : h_list)
        if (!h.is_zero()) nonzero.push_back(&h);

    if (nonzero.empty()) {
        cert.verdict = ZeroSetVerdict::Inconclusive;
        cert.backend = ZeroSetBackend::NumericalSearch;
        Eigen::VectorXd wtn = Eigen::VectorXd::Zero(n);
        wtn(0) = 1.0;
        cert.witness = wtn;
        cert.witness_residual = 0.0;
        return cert;
    }

    const bool all_linear = std::all_of(nonzero.begin(), nonzero.end(),
                                        [](const Polynomial* p) { return p->is_linear_form(); });
    if (all_linear) {
        Eigen::MatrixXd M(static_cast<int>(nonzero.size()), n);
        for (size_t j = 0; j < nonzero.size(); ++j)
            M.row(static_cast<int>(j)) = nonzero[j]->linear_coefficients();
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(M, Eigen::ComputeFullV);
        const double smax = svd.singularValues()(0);
        int rank = 0;
        for (int i = 0; i < svd.singularValues().size(); ++i)
            if (svd.singularValues()(i) > 1e-9 * smax) ++rank;
        cert.backend = ZeroSetBackend::LinearRank;
        if (rank == n) {
            cert.verdict = ZeroSetVerdict::Holds;
            cert.certifying = true;
        } else {
            cert.verdict = ZeroSetVerdict::Inconclusive;
            Eigen::VectorXd wtn = svd.matrixV().col(n - 1);
            wtn.normalize();
            cert.witness = wtn;
            double maxr = 0.0;
            for (const auto* p : nonzero) maxr = std::max(maxr, std::abs(p->eval(wtn)));
            cert.witness_residual = maxr;
        }
        return cert;
    }

    // NumericalSearch: multi-start damped Gauss-Newton over the annulus.
    cert.backend = ZeroSetBackend::NumericalSearch;
    std::vector<Polynomial> h;
    h.reserve(nonzero.size());
    for (const auto* p : nonzero) h.push_back(*p);
    std::vector<std::vector<Polynomial>> grads;
    for (const auto& hj : h) {
        std::vector<Polynomial> gj;
        for (int c = 0; c < n; ++c) gj.push_back(hj.derivative(c));
        grads.push_back(std::move(gj));
    }

    for (int start = 0; start < settings.n_starts; ++start) {
        std::mt19937_64 rng(settings.seed + 0x9e3779b97f4a7c15ULL * (start + 1));
        std::normal_distribution<double> gauss;
        std::uniform_real_distribution<double> unif(0.0, 1.0);
        Eigen::VectorXd dir(n);
        for (int i = 0; i < n; ++i) dir(i) = gauss(rng);
        dir.normalize();
        const double lo = std::log(settings.r_min), hi = std::log(settings.r_max);
        const double radius = std::exp(lo + (hi - lo) * unif(rng));
        const auto res = minimize_residual(h, grads, radius * dir);
        const double norm = res.x.norm();
        if (res.max_residual < settings.witness_tol && norm >= settings.r_min &&
            norm <= settings.r_max) {
            cert.verdict = ZeroSetVerdict::Inconclusive;
            cert.witness = res.x;
            cert.witness_residual = res.max_residual;
            return cert;
        }
    }
    cert.verdict = ZeroSetVerdict::Holds;
    cert.certifying = false;  // search-based, not a proof
    return cert;
}

ObservabilityReport run_observability_algorithm(const PolyPlant& plant,
                                                const Eigen::VectorXd& theta,
                                                const std::vector<Eigen::VectorXd>& thetahats,
                                                int J, const ZeroSetSettings& settings) {
    plant.validate();
    if (J < 1) throw std::invalid_argument("run_observability_algorithm: J must be >= 1");
    if (theta.size() != plant.l)
        throw std::invalid_argument("run_observability_algorithm: theta dimension mismatch");
    if (static_cast<int>(thetahats.size()) != plant.l)
        throw std::invalid_argument("run_observability_algorithm: need l estimate vectors");

    ObservabilityReport report;
    std::vector<bool> covered(plant.l, false);

    for (int s = 0; s < plant.l; ++s) {
        ObservabilityStep step;
        step.step = s + 1;
        Eigen::VectorXd z = thetahats[s];
        if (z.size() != plant.l)
            throw std::invalid_argument("run_observability_algorithm: thetahat dimension mismatch");
        for (int i = 0; i < plant.l; ++i) {
            if (covered[i]) {
                z(i) = theta(i);
                step.pinned.push_back(i);
            }
        }
        step.z = z;

        const PolyVectorField Fz = plant.closed_loop(z, theta);
        for (int i = 0; i < plant.l; ++i) {
            std::vector<Polynomial> chain;
            Polynomial gi = plant.g_comp(i, z);
            chain.push_back(gi);
            for (int j = 1; j <= J; ++j) {
                gi = lie_derivative(gi, Fz);
                chain.push_back(gi);
            }
            ZeroSetCertificate cert = zero_set_certify(chain, J, settings);
            if (cert.verdict == ZeroSetVerdict::Holds) step.holds.push_back(i);
            step.certificates.push_back(std::move(cert));
        }
        for (int i : step.holds) covered[i] = true;
        report.steps.push_back(std::move(step));
    }

    for (int i = 0; i < plant.l; ++i) {
        if (covered[i]) report.covered.push_back(i);
        else if (!report.first_uncovered) report.first_uncovered = i;
    }
    report.certified = static_cast<int>(report.covered.size()) == plant.l;
    report.N = report.certified ? plant.l : 0;
    return report;
}

bool kalman_observability(const Eigen::MatrixXd& A, const Eigen::MatrixXd& C) {
    if (A.rows() != A.cols() || C.cols() != A.rows() || C.rows() != A.rows())
        throw std::invalid_argument("kalman_observability: dimension mismatch");
    const int n = static_cast<int>(A.rows());
    Eigen::MatrixXd O(n * n, n);
    Eigen::MatrixXd block = C;
    for (int i = 0; i < n; ++i) {
        O.middleRows(i * n, n) = block;
        block = block * A;
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(O);
    const double smax = svd.singularValues()(0);
    if (smax == 0.0) return false;
    int rank = 0;
    for (int i = 0; i < svd.singularValues().size(); ++i)
        if (svd.singularValues()(i) > 1e-9 * smax) ++rank;
    return rank == n;
}

std::string to_string(ZeroSetVerdict v) {
    return v == ZeroSetVerdict::Holds ? "holds" : "inconclusive";
}

std::string to_string(ZeroSetBackend b) {
    return b == ZeroSetBackend::LinearRank ? "linear-rank" : "numerical-search";
}

}  // namespace retrig
