#pragma once

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <vector>

#include <Eigen/Dense>

namespace retrig {

/// Plant  xdot = f(x,u) + g(x,u) theta  with n states, m inputs, l parameters.
///
/// structure_rows, when present, tags the one-parameter-per-equation form:
/// column i of g is supported only on row structure_rows[i] (0-based), and
/// the rows are pairwise distinct.
struct PlantModel {
    int n = 0, m = 0, l = 0;
    std::function<Eigen::VectorXd(const Eigen::VectorXd&, const Eigen::VectorXd&)> f;
    std::function<Eigen::MatrixXd(const Eigen::VectorXd&, const Eigen::VectorXd&)> g;
    std::optional<std::vector<int>> structure_rows;

    /// Checks f(0,0)=0, g(0,0)=0 (tol 1e-12) and, when tagged, the
    /// structured-support condition at sampled points. Throws on violation.
    void validate() const;
};

/// Nominal feedback plus the Lyapunov pair (V, Q) it is certified with.
struct ControllerFamily {
    std::function<Eigen::VectorXd(const Eigen::VectorXd&, const Eigen::VectorXd&)> k;
    std::function<double(const Eigen::VectorXd&, const Eigen::VectorXd&)> V;
    std::function<double(const Eigen::VectorXd&, const Eigen::VectorXd&)> Q;

    /// Spot-checks k(v,0)=0, V(v,0)=Q(v,0)=0, positivity and V<=Q at sampled
    /// points for the given parameter dimension. Throws on violation.
    void spot_check(int l, int n) const;
};

/// Event-trigger tuning: dwell cap T, gain of a(x)=a_coeff*|x|^2, window
/// length Ntilde, zero-state tolerance.
struct TriggerParams {
    double T = 1.0;
    double a_coeff = 0.1;
    int Ntilde = 2;
    double eps_zero = 1e-12;

    void validate() const;
};

struct BuiltinModel {
    PlantModel plant;
    ControllerFamily ctrl;
};

/// Planar plant x1dot = x2, x2dot = theta*(x1 + c*x2) + u with feedback
/// k(v,x) = -k1*x1 - k2*x2 - v*(x1 + c*x2). V = Q = x'Px, P from
/// Acl'P + P*Acl = -I with Acl = [[0,1],[-k1,-k2]]. Requires k1, k2 > 0.
BuiltinModel example_4_2(double c, double k1, double k2);

/// Third-order plant x1dot = x2, x2dot = x1^2 + theta1*x2 + x3,
/// x3dot = theta2*x1^2 + u with the feedback-linearizing controller.
/// V = Q = xi'P xi in coordinates xi = (x1, x2, x1^2 + v1*x2 + x3).
/// Requires k1, k2, k3 > 0 and k2*k3 > k1.
BuiltinModel example_4_3(double k1, double k2, double k3);

/// Linear plant xdot = (A + sum theta_i C_i) x + B u with affine gain
/// schedule K_theta = K0 + sum theta_i Kpar[i]. V = |x|^2, Q = M^2(theta)|x|^2
/// with M estimated on a time grid.
struct LinearPlant {
    Eigen::MatrixXd A, B;
    std::vector<Eigen::MatrixXd> C;
    Eigen::MatrixXd K0;
    std::vector<Eigen::MatrixXd> Kpar;
    std::optional<double> omega_fixed;  // decay rate; default 0.9 * stability margin

    int n() const { return static_cast<int>(A.rows()); }
    int m() const { return static_cast<int>(B.cols()); }
    int l() const { return static_cast<int>(C.size()); }

    Eigen::MatrixXd gain(const Eigen::VectorXd& theta) const;
    Eigen::MatrixXd closed_loop(const Eigen::VectorXd& theta) const;
    double omega(const Eigen::VectorXd& theta) const;

    /// M(theta) >= 1 for |exp(t Acl)| <= M exp(-omega t); cached per theta.
    double exp_bound(const Eigen::VectorXd& theta) const;

    PlantModel as_plant() const;
    ControllerFamily controller() const;
    void validate() const;

private:
    mutable std::shared_ptr<std::map<std::vector<double>, double>> bound_cache_ =
        std::make_shared<std::map<std::vector<double>, double>>();
};

/// Real part of the rightmost eigenvalue.
double spectral_abscissa(const Eigen::MatrixXd& A);

/// Solves A'P + PA = -Q (Q symmetric positive definite) by vectorization.
Eigen::MatrixXd lyapunov_solve(const Eigen::MatrixXd& A, const Eigen::MatrixXd& Q);

/// max over a time grid of ||exp(t*Acl)|| * exp(omega*t), clamped below by 1.
/// Throws when the spectral abscissa of Acl is not < -omega. horizon <= 0 or
/// grid_points <= 0 select the defaults 50/omega and 2000.
double estimate_exp_bound(const Eigen::MatrixXd& Acl, double omega, double horizon = 0.0,
                          int grid_points = 0);

/// x -> f(x, k(thetahat, x)) + g(x, k(thetahat, x)) * theta_true
std::function<Eigen::VectorXd(const Eigen::VectorXd&)> closed_loop_field(
    const PlantModel& plant, const ControllerFamily& ctrl, const Eigen::VectorXd& theta_true,
    const Eigen::VectorXd& thetahat);

}  // namespace retrig
