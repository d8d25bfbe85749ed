#include "retrig/estimator.hpp"

#include <cmath>
#include <stdexcept>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace retrig {

GramSystem GramSystem::make(Eigen::MatrixXd G, Eigen::VectorXd Z, double mu, double tau) {
    if (mu > tau) throw std::invalid_argument("GramSystem: mu > tau");
    G = 0.5 * (G + G.transpose()).eval();
    if (G.size() > 0) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(G);
        const double lmax = es.eigenvalues().maxCoeff();
        if (es.eigenvalues().minCoeff() < -1e-10 * (1.0 + std::max(lmax, 0.0)))
            throw std::logic_error("GramSystem: G has a significantly negative eigenvalue");
    }
    return {std::move(G), std::move(Z), mu, tau};
}

double compute_mu(const std::vector<double>& event_times, double tau_next, int Ntilde, double T) {
    if (event_times.empty() || event_times.front() != 0.0)
        throw std::invalid_argument("compute_mu: event list must start at 0");
    if (Ntilde < 1 || T <= 0.0) throw std::invalid_argument("compute_mu: bad Ntilde or T");
    const double threshold = tau_next - Ntilde * T;
    for (double tj : event_times) {
        if (tj >= tau_next) break;
        if (tj >= threshold - 1e-12 * std::max(1.0, std::abs(tau_next))) return tj;
    }
    throw std::logic_error("compute_mu: no event time in the window (dwell cap violated?)");
}

namespace {

// Trapezoid weights for a (possibly non-uniform) node subsequence.
std::vector<double> trapezoid_weights(const std::vector<double>& t, std::size_t i0,
                                      std::size_t i1) {
    const std::size_t K = i1 - i0 + 1;
    std::vector<double> w(K, 0.0);
    for (std::size_t k = 0; k + 1 < K; ++k) {
        const double half = 0.5 * (t[i0 + k + 1] - t[i0 + k]);
        w[k] += half;
        w[k + 1] += half;
    }
    return w;
}

/// Shared quadrature core: nodes carry Qm[j] (n x l) and Pv[j] (n); the
/// integrands are q_jk = Qm[j]-Qm[k], p_jk = Pv[j]-Pv[k].
struct QuadInput {
    const std::vector<Eigen::MatrixXd>& Qm;
    const std::vector<Eigen::VectorXd>& Pv;
    const std::vector<double>& w;
};

void quad_row(const QuadInput& in, std::size_t j, Eigen::MatrixXd& G, Eigen::VectorXd& Z) {
    for (std::size_t k = 0; k < j; ++k) {
        const Eigen::MatrixXd q = in.Qm[j] - in.Qm[k];
        const Eigen::VectorXd p = in.Pv[j] - in.Pv[k];
        const double w2 = 2.0 * in.w[j] * in.w[k];
        G.noalias() += w2 * (q.transpose() * q);
        Z.noalias() += w2 * (q.transpose() * p);
    }
}

GramSystem quad_serial(const QuadInput& in, int l, double mu, double tau) {
    // per-row partials summed in order, mirroring the parallel reduction so
    // both paths produce bitwise-identical results
    Eigen::MatrixXd G = Eigen::MatrixXd::Zero(l, l);
    Eigen::VectorXd Z = Eigen::VectorXd::Zero(l);
    Eigen::MatrixXd Gj(l, l);
    Eigen::VectorXd Zj(l);
    for (std::size_t j = 1; j < in.Qm.size(); ++j) {
        Gj.setZero();
        Zj.setZero();
        quad_row(in, j, Gj, Zj);
        G += Gj;
        Z += Zj;
    }
    return GramSystem::make(std::move(G), std::move(Z), mu, tau);
}

GramSystem quad_parallel(const QuadInput& in, int l, double mu, double tau) {
#ifdef _OPENMP
    const std::size_t K = in.Qm.size();
    std::vector<Eigen::MatrixXd> Gs(K, Eigen::MatrixXd::Zero(l, l));
    std::vector<Eigen::VectorXd> Zs(K, Eigen::VectorXd::Zero(l));
#pragma omp parallel for schedule(dynamic, 16)
    for (std::size_t j = 1; j < K; ++j) quad_row(in, j, Gs[j], Zs[j]);
    // ordered reduction keeps the result independent of the thread count
    Eigen::MatrixXd G = Eigen::MatrixXd::Zero(l, l);
    Eigen::VectorXd Z = Eigen::VectorXd::Zero(l);
    for (std::size_t j = 1; j < K; ++j) {
        G += Gs[j];
        Z += Zs[j];
    }
    return GramSystem::make(std::move(G), std::move(Z), mu, tau);
#else
    return quad_serial(in, l, mu, tau);
#endif
}

struct Window {
    std::size_t i0, i1;
};

Window window_indices(const TrajectoryLog& log, double mu, double tau) {
    if (mu > tau) throw std::invalid_argument("gram window: mu > tau");
    return {log.index_of_time(mu), log.index_of_time(tau)};
}

void generic_nodes(const TrajectoryLog& log, const Window& win,
                   std::vector<Eigen::MatrixXd>& Qm, std::vector<Eigen::VectorXd>& Pv) {
    for (std::size_t i = win.i0; i <= win.i1; ++i) {
        Qm.push_back(log.Gam[i]);
        Pv.push_back(log.x[i] - log.F[i]);
    }
}

}  // namespace

GramSystem gram_pair_serial(const TrajectoryLog& log, double mu, double tau) {
    const Window win = window_indices(log, mu, tau);
    std::vector<Eigen::MatrixXd> Qm;
    std::vector<Eigen::VectorXd> Pv;
    generic_nodes(log, win, Qm, Pv);
    const auto w = trapezoid_weights(log.t, win.i0, win.i1);
    return quad_serial({Qm, Pv, w}, log.l, mu, tau);
}

GramSystem gram_pair(const TrajectoryLog& log, double mu, double tau) {
    const Window win = window_indices(log, mu, tau);
    std::vector<Eigen::MatrixXd> Qm;
    std::vector<Eigen::VectorXd> Pv;
    generic_nodes(log, win, Qm, Pv);
    const auto w = trapezoid_weights(log.t, win.i0, win.i1);
    return quad_parallel({Qm, Pv, w}, log.l, mu, tau);
}

GramSystem linear_filter_gram(const TrajectoryLog& log, double mu, double tau,
                              const std::vector<Eigen::MatrixXd>& C, const Eigen::MatrixXd& A,
                              const Eigen::MatrixXd& B) {
    if (!log.has_filter)
        throw std::invalid_argument("linear_filter_gram: log carries no filter states");
    const Window win = window_indices(log, mu, tau);
    const int l = static_cast<int>(C.size());
    std::vector<Eigen::MatrixXd> Qm;
    std::vector<Eigen::VectorXd> Pv;
    for (std::size_t i = win.i0; i <= win.i1; ++i) {
        Eigen::MatrixXd Lz(log.n, l);
        for (int j = 0; j < l; ++j) Lz.col(j) = C[j] * log.z[i];
        Qm.push_back(std::move(Lz));
        Pv.push_back(log.x[i] - A * log.z[i] - B * log.w[i]);  // y(t); differences cancel x(0)
    }
    const auto w = trapezoid_weights(log.t, win.i0, win.i1);
    return quad_parallel({Qm, Pv, w}, l, mu, tau);
}

EstimateUpdate ls_update(const GramSystem& gs, const Eigen::VectorXd& thetahat_prev,
                         double rank_tol) {
    const int l = static_cast<int>(gs.Z.size());
    if (thetahat_prev.size() != l) throw std::invalid_argument("ls_update: dimension mismatch");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gs.G);
    const Eigen::VectorXd lam = es.eigenvalues();
    const double lmax = lam.size() > 0 ? lam.maxCoeff() : 0.0;
    EstimateUpdate upd;
    upd.thetahat_prev = thetahat_prev;
    upd.mu = gs.mu;
    upd.tau = gs.tau;
    if (lmax <= 0.0) {
        upd.thetahat_new = thetahat_prev;
        upd.rank = 0;
        return upd;
    }
    const Eigen::VectorXd r = gs.Z - gs.G * thetahat_prev;
    Eigen::VectorXd delta = Eigen::VectorXd::Zero(l);
    int rank = 0;
    for (int i = 0; i < l; ++i) {
        if (lam(i) > rank_tol * lmax) {
            delta += (es.eigenvectors().col(i).dot(r) / lam(i)) * es.eigenvectors().col(i);
            ++rank;
        }
    }
    upd.thetahat_new = thetahat_prev + delta;
    upd.rank = rank;
    return upd;
}

}  // namespace retrig
