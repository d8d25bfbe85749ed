#pragma once

#include <vector>

#include <Eigen/Dense>

#include "retrig/integrator.hpp"

namespace retrig {

/// Normal-equation pair (G, Z) of the estimation window [mu, tau]:
/// G = int int q'(t,s) q(t,s) ds dt,  Z = int int q'(t,s) p(t,s) ds dt,
/// with p(t,s) = x(t) - x(s) - (F(t) - F(s)) and q(t,s) = Gam(t) - Gam(s).
/// Along a true trajectory Z = G*theta holds exactly.
struct GramSystem {
    Eigen::MatrixXd G;
    Eigen::VectorXd Z;
    double mu = 0.0;
    double tau = 0.0;

    /// Symmetrizes G and checks eigenvalues >= -1e-10*(1 + lambda_max).
    static GramSystem make(Eigen::MatrixXd G, Eigen::VectorXd Z, double mu, double tau);
};

struct EstimateUpdate {
    Eigen::VectorXd thetahat_prev;
    Eigen::VectorXd thetahat_new;
    int rank = 0;
    double mu = 0.0;
    double tau = 0.0;

    double distance() const { return (thetahat_new - thetahat_prev).norm(); }
};

/// Window anchor: smallest listed event time >= tau_next - Ntilde*T.
/// Throws std::logic_error when no event qualifies (dwell-cap violation
/// upstream).
double compute_mu(const std::vector<double>& event_times, double tau_next, int Ntilde, double T);

/// 2-D trapezoid quadrature of (G, Z) on the log grid restricted to
/// [mu, tau]^2, exploiting the (t,s)-swap symmetry (triangle t > s doubled;
/// the diagonal vanishes). Parallel over rows when OpenMP is enabled, with a
/// deterministic ordered reduction.
GramSystem gram_pair(const TrajectoryLog& log, double mu, double tau);

/// Serial reference implementation of gram_pair; same contract, kept for
/// testing and benchmarking.
GramSystem gram_pair_serial(const TrajectoryLog& log, double mu, double tau);

/// Filter-realization Gram of the linear specialization: y = x - A z - B w in
/// place of p, and L*(z(t)-z(s)) with (L*v)_{.,i} = C_i v in place of q.
/// Requires a log with filter states.
GramSystem linear_filter_gram(const TrajectoryLog& log, double mu, double tau,
                              const std::vector<Eigen::MatrixXd>& C, const Eigen::MatrixXd& A,
                              const Eigen::MatrixXd& B);

/// Minimum-distance least-squares update: thetahat_new =
/// thetahat_prev + pinv(G) (Z - G thetahat_prev), with eigenvalues below
/// rank_tol * lambda_max treated as zero. Unexcited directions keep the
/// previous estimate component.
EstimateUpdate ls_update(const GramSystem& gs, const Eigen::VectorXd& thetahat_prev,
                         double rank_tol = 1e-9);

}  // namespace retrig
