#include "retrig/models.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

#include <unsupported/Eigen/MatrixFunctions>

namespace retrig {

namespace {
constexpr double kZeroTol = 1e-12;

Eigen::VectorXd random_vector(int n, std::mt19937_64& rng) {
    std::normal_distribution<double> gauss;
    Eigen::VectorXd v(n);
    for (int i = 0; i < n; ++i) v(i) = gauss(rng);
    return v;
}
}  // namespace

void PlantModel::validate() const {
    if (n <= 0 || m < 0 || l < 0) throw std::invalid_argument("PlantModel: bad dimensions");
    const Eigen::VectorXd x0 = Eigen::VectorXd::Zero(n);
    const Eigen::VectorXd u0 = Eigen::VectorXd::Zero(m);
    if (f(x0, u0).lpNorm<Eigen::Infinity>() > kZeroTol)
        throw std::invalid_argument("PlantModel: f(0,0) != 0");
    if (l > 0 && g(x0, u0).lpNorm<Eigen::Infinity>() > kZeroTol)
        throw std::invalid_argument("PlantModel: g(0,0) != 0");
    if (structure_rows) {
        if (static_cast<int>(structure_rows->size()) != l)
            throw std::invalid_argument("PlantModel: structure row count != l");
        for (int i = 0; i < l; ++i)
            for (int j = 0; j < i; ++j)
                if ((*structure_rows)[i] == (*structure_rows)[j])
                    throw std::invalid_argument("PlantModel: structure rows not distinct");
        std::mt19937_64 rng(41);
        for (int trial = 0; trial < 20; ++trial) {
            const Eigen::VectorXd x = random_vector(n, rng);
            const Eigen::VectorXd u = random_vector(m, rng);
            const Eigen::MatrixXd G = g(x, u);
            for (int i = 0; i < l; ++i)
                for (int r = 0; r < n; ++r)
                    if (r != (*structure_rows)[i] && std::abs(G(r, i)) > kZeroTol)
                        throw std::invalid_argument(
                            "PlantModel: regressor column supported off its tagged row");
        }
    }
}

void ControllerFamily::spot_check(int l, int n) const {
    std::mt19937_64 rng(42);
    const Eigen::VectorXd x0 = Eigen::VectorXd::Zero(n);
    for (int trial = 0; trial < 20; ++trial) {
        const Eigen::VectorXd th = random_vector(l, rng);
        if (k(th, x0).lpNorm<Eigen::Infinity>() > kZeroTol)
            throw std::invalid_argument("ControllerFamily: k(theta, 0) != 0");
        if (std::abs(V(th, x0)) > kZeroTol || std::abs(Q(th, x0)) > kZeroTol)
            throw std::invalid_argument("ControllerFamily: V or Q nonzero at origin");
        const Eigen::VectorXd x = random_vector(n, rng);
        const double v = V(th, x), q = Q(th, x);
        if (v <= 0.0 || q <= 0.0)
            throw std::invalid_argument("ControllerFamily: V or Q not positive at sampled x");
        if (v > q * (1.0 + 1e-12) + kZeroTol)
            throw std::invalid_argument("ControllerFamily: V > Q at sampled point");
    }
}

void TriggerParams::validate() const {
    if (T <= 0.0) throw std::invalid_argument("TriggerParams: T must be positive");
    if (a_coeff <= 0.0) throw std::invalid_argument("TriggerParams: a_coeff must be positive");
    if (Ntilde < 1) throw std::invalid_argument("TriggerParams: Ntilde must be >= 1");
}

double spectral_abscissa(const Eigen::MatrixXd& A) {
    Eigen::EigenSolver<Eigen::MatrixXd> es(A);
    return es.eigenvalues().real().maxCoeff();
}

Eigen::MatrixXd lyapunov_solve(const Eigen::MatrixXd& A, const Eigen::MatrixXd& Q) {
    const int n = static_cast<int>(A.rows());
    // vec(A'P + P A) = (I (x) A' + A' (x) I) vec(P)
    Eigen::MatrixXd M = Eigen::MatrixXd::Zero(n * n, n * n);
    const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n, n);
    const Eigen::MatrixXd At = A.transpose();
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            for (int p = 0; p < n; ++p)
                for (int q = 0; q < n; ++q)
                    M(i + n * j, p + n * q) = I(j, q) * At(i, p) + At(j, q) * I(i, p);
    Eigen::VectorXd rhs(n * n);
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) rhs(i + n * j) = -Q(i, j);
    const Eigen::VectorXd vp = M.fullPivLu().solve(rhs);
    Eigen::MatrixXd P(n, n);
    for (int j = 0; j < n; ++j)
        for (int i = 0; i < n; ++i) P(i, j) = vp(i + n * j);
    return 0.5 * (P + P.transpose());
}

double estimate_exp_bound(const Eigen::MatrixXd& Acl, double omega, double horizon,
                          int grid_points) {
    if (omega <= 0.0) throw std::invalid_argument("estimate_exp_bound: omega must be positive");
    const double abscissa = spectral_abscissa(Acl);
    if (abscissa >= -omega)
        throw std::invalid_argument("estimate_exp_bound: spectral abscissa " +
                                    std::to_string(abscissa) + " violates rate -" +
                                    std::to_string(omega));
    if (horizon <= 0.0) horizon = 50.0 / omega;
    if (grid_points <= 0) grid_points = 2000;
    const double dt = horizon / grid_points;
    const Eigen::MatrixXd step = (dt * Acl).exp();
    Eigen::MatrixXd E = Eigen::MatrixXd::Identity(Acl.rows(), Acl.cols());
    double best = 1.0;
    for (int k = 1; k <= grid_points; ++k) {
        E = step * E;
        best = std::max(best, E.operatorNorm() * std::exp(omega * k * dt));
    }
    return best;
}

std::function<Eigen::VectorXd(const Eigen::VectorXd&)> closed_loop_field(
    const PlantModel& plant, const ControllerFamily& ctrl, const Eigen::VectorXd& theta_true,
    const Eigen::VectorXd& thetahat) {
    if (theta_true.size() != plant.l || thetahat.size() != plant.l)
        throw std::invalid_argument("closed_loop_field: parameter dimension mismatch");
    return [plant, ctrl, theta_true, thetahat](const Eigen::VectorXd& x) -> Eigen::VectorXd {
        const Eigen::VectorXd u = ctrl.k(thetahat, x);
        if (plant.l == 0) return plant.f(x, u);
        return plant.f(x, u) + plant.g(x, u) * theta_true;
    };
}

BuiltinModel example_4_2(double c, double k1, double k2) {
    if (k1 <= 0.0 || k2 <= 0.0)
        throw std::invalid_argument("example_4_2: gains must satisfy k1, k2 > 0");
    PlantModel plant;
    plant.n = 2;
    plant.m = 1;
    plant.l = 1;
    plant.f = [](const Eigen::VectorXd& x, const Eigen::VectorXd& u) {
        return Eigen::Vector2d(x(1), u(0));
    };
    plant.g = [c](const Eigen::VectorXd& x, const Eigen::VectorXd&) {
        Eigen::MatrixXd G = Eigen::MatrixXd::Zero(2, 1);
        G(1, 0) = x(0) + c * x(1);
        return G;
    };
    plant.structure_rows = std::vector<int>{1};
    plant.validate();

    Eigen::Matrix2d Acl;
    Acl << 0.0, 1.0, -k1, -k2;
    const Eigen::MatrixXd P = lyapunov_solve(Acl, Eigen::Matrix2d::Identity());

    ControllerFamily ctrl;
    ctrl.k = [c, k1, k2](const Eigen::VectorXd& th, const Eigen::VectorXd& x) {
        Eigen::VectorXd u(1);
        u(0) = -k1 * x(0) - k2 * x(1) - th(0) * (x(0) + c * x(1));
        return u;
    };
    auto quad = [P](const Eigen::VectorXd&, const Eigen::VectorXd& x) {
        return x.dot(P * x);
    };
    ctrl.V = quad;
    ctrl.Q = quad;
    ctrl.spot_check(plant.l, plant.n);
    return {plant, ctrl};
}

BuiltinModel example_4_3(double k1, double k2, double k3) {
    if (k1 <= 0.0 || k2 <= 0.0 || k3 <= 0.0 || k2 * k3 <= k1)
        throw std::invalid_argument(
            "example_4_3: gains must satisfy k1,k2,k3 > 0 and k2*k3 > k1");
    PlantModel plant;
    plant.n = 3;
    plant.m = 1;
    plant.l = 2;
    plant.f = [](const Eigen::VectorXd& x, const Eigen::VectorXd& u) {
        return Eigen::Vector3d(x(1), x(0) * x(0) + x(2), u(0));
    };
    plant.g = [](const Eigen::VectorXd& x, const Eigen::VectorXd&) {
        Eigen::MatrixXd G = Eigen::MatrixXd::Zero(3, 2);
        G(1, 0) = x(1);
        G(2, 1) = x(0) * x(0);
        return G;
    };
    plant.structure_rows = std::vector<int>{1, 2};
    plant.validate();

    Eigen::Matrix3d comp;
    comp << 0, 1, 0, 0, 0, 1, -k1, -k2, -k3;
    const Eigen::MatrixXd P = lyapunov_solve(comp, Eigen::Matrix3d::Identity());

    ControllerFamily ctrl;
    ctrl.k = [k1, k2, k3](const Eigen::VectorXd& th, const Eigen::VectorXd& x) {
        const double xi3 = x(0) * x(0) + th(0) * x(1) + x(2);
        Eigen::VectorXd u(1);
        u(0) = -k1 * x(0) - k2 * x(1) - 2.0 * x(0) * x(1) - (th(0) + k3) * xi3 -
               th(1) * x(0) * x(0);
        return u;
    };
    auto quad = [P](const Eigen::VectorXd& th, const Eigen::VectorXd& x) {
        const Eigen::Vector3d xi(x(0), x(1), x(0) * x(0) + th(0) * x(1) + x(2));
        return xi.dot(P * xi);
    };
    ctrl.V = quad;
    ctrl.Q = quad;
    ctrl.spot_check(plant.l, plant.n);
    return {plant, ctrl};
}

Eigen::MatrixXd LinearPlant::gain(const Eigen::VectorXd& theta) const {
    Eigen::MatrixXd K = K0;
    for (int i = 0; i < l(); ++i) K += theta(i) * Kpar[i];
    return K;
}

Eigen::MatrixXd LinearPlant::closed_loop(const Eigen::VectorXd& theta) const {
    Eigen::MatrixXd Acl = A + B * gain(theta);
    for (int i = 0; i < l(); ++i) Acl += theta(i) * C[i];
    return Acl;
}

double LinearPlant::omega(const Eigen::VectorXd& theta) const {
    if (omega_fixed) return *omega_fixed;
    const double abscissa = spectral_abscissa(closed_loop(theta));
    if (abscissa >= 0.0)
        throw std::invalid_argument("LinearPlant: closed loop unstable at requested theta");
    return 0.9 * (-abscissa);
}

double LinearPlant::exp_bound(const Eigen::VectorXd& theta) const {
    std::vector<double> key(theta.data(), theta.data() + theta.size());
    auto it = bound_cache_->find(key);
    if (it != bound_cache_->end()) return it->second;
    const double M = estimate_exp_bound(closed_loop(theta), omega(theta));
    bound_cache_->emplace(std::move(key), M);
    return M;
}

PlantModel LinearPlant::as_plant() const {
    PlantModel p;
    p.n = n();
    p.m = m();
    p.l = l();
    const Eigen::MatrixXd A_ = A, B_ = B;
    const std::vector<Eigen::MatrixXd> C_ = C;
    p.f = [A_, B_](const Eigen::VectorXd& x, const Eigen::VectorXd& u) -> Eigen::VectorXd {
        return A_ * x + B_ * u;
    };
    p.g = [C_](const Eigen::VectorXd& x, const Eigen::VectorXd&) {
        Eigen::MatrixXd G(x.size(), static_cast<int>(C_.size()));
        for (size_t i = 0; i < C_.size(); ++i) G.col(static_cast<int>(i)) = C_[i] * x;
        return G;
    };
    p.validate();
    return p;
}

ControllerFamily LinearPlant::controller() const {
    ControllerFamily ctrl;
    LinearPlant self = *this;  // shares the bound cache
    ctrl.k = [self](const Eigen::VectorXd& th, const Eigen::VectorXd& x) -> Eigen::VectorXd {
        return self.gain(th) * x;
    };
    ctrl.V = [](const Eigen::VectorXd&, const Eigen::VectorXd& x) { return x.squaredNorm(); };
    ctrl.Q = [self](const Eigen::VectorXd& th, const Eigen::VectorXd& x) {
        const double M = self.exp_bound(th);
        return M * M * x.squaredNorm();
    };
    return ctrl;
}

void LinearPlant::validate() const {
    if (A.rows() != A.cols() || B.rows() != A.rows())
        throw std::invalid_argument("LinearPlant: inconsistent A/B shapes");
    for (const auto& Ci : C)
        if (Ci.rows() != A.rows() || Ci.cols() != A.cols())
            throw std::invalid_argument("LinearPlant: C_i shape mismatch");
    if (K0.rows() != B.cols() || K0.cols() != A.rows())
        throw std::invalid_argument("LinearPlant: K0 shape mismatch");
    if (Kpar.size() != C.size())
        throw std::invalid_argument("LinearPlant: gain schedule length != parameter count");
    for (const auto& Ki : Kpar)
        if (Ki.rows() != K0.rows() || Ki.cols() != K0.cols())
            throw std::invalid_argument("LinearPlant: K_i shape mismatch");
}

}  // namespace retrig
