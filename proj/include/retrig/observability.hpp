#pragma once

#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "retrig/polynomial.hpp"

namespace retrig {

/// Polynomial rendering of a plant in the one-parameter-per-equation form,
/// plus a polynomial feedback law. f and g are over the n+m variables
/// (x1..xn, then u as x_{n+1}..x_{n+m}); k components are over the l+n
/// variables (z1..zl as x1..xl, then x as x_{l+1}..x_{l+n}).
struct PolyPlant {
    int n = 0, m = 0, l = 0;
    std::vector<Polynomial> f;       // n components
    std::vector<Polynomial> g;       // l scalar regressors g_i
    std::vector<int> rows;           // row index N_i of each g_i (0-based)
    std::vector<Polynomial> k;       // m components

    void validate() const;

    /// Scalar g_i composed with u = k(z, x) at numeric z: polynomial in x.
    Polynomial g_comp(int i, const Eigen::VectorXd& z) const;

    /// Closed-loop field F_z(x) = f(x,k(z,x)) + sum g_i(x,k(z,x)) theta_i e_{N_i}.
    PolyVectorField closed_loop(const Eigen::VectorXd& z, const Eigen::VectorXd& theta) const;
};

PolyPlant poly_example_4_2(double c, double k1, double k2);
PolyPlant poly_example_4_3(double k1, double k2, double k3);

enum class ZeroSetVerdict { Holds, Inconclusive };
enum class ZeroSetBackend { LinearRank, NumericalSearch };

struct ZeroSetSettings {
    double r_min = 1e-3;
    double r_max = 1e3;
    int n_starts = 64;
    double witness_tol = 1e-10;
    std::uint64_t seed = 2024;
};

/// Verdict on whether a polynomial list vanishes simultaneously only at the
/// origin. Holds from LinearRank is exact; Holds from NumericalSearch only
/// reports that no witness was found (certifying = false).
struct ZeroSetCertificate {
    ZeroSetVerdict verdict = ZeroSetVerdict::Inconclusive;
    ZeroSetBackend backend = ZeroSetBackend::NumericalSearch;
    bool certifying = false;
    int order_used = 0;
    std::optional<Eigen::VectorXd> witness;
    double witness_residual = 0.0;  // max |h_j(x*)| at the witness
};

ZeroSetCertificate zero_set_certify(const std::vector<Polynomial>& h_list, int order_used,
                                    const ZeroSetSettings& settings = {});

struct ObservabilityStep {
    int step = 0;                     // 1-based
    Eigen::VectorXd z;                // after pinning
    std::vector<int> pinned;          // indices pinned to theta (0-based)
    std::vector<int> holds;           // I_s (0-based)
    std::vector<ZeroSetCertificate> certificates;  // one per index 0..l-1
};

struct ObservabilityReport {
    bool certified = false;
    int N = 0;  // = l when certified
    std::vector<ObservabilityStep> steps;
    std::vector<int> covered;  // union of I_s (0-based)
    std::optional<int> first_uncovered;
};

/// The step-wise index-set algorithm: step s pins z_i = theta_i for the
/// indices covered so far, sets the rest of z from thetahats[s-1], and tests
/// each index with the Lie chain {g_i, L^j g_i : j = 1..J}.
ObservabilityReport run_observability_algorithm(const PolyPlant& plant,
                                                const Eigen::VectorXd& theta,
                                                const std::vector<Eigen::VectorXd>& thetahats,
                                                int J, const ZeroSetSettings& settings = {});

/// Kalman rank test: rank [C; CA; ...; CA^{n-1}] == n (SVD threshold 1e-9
/// relative).
bool kalman_observability(const Eigen::MatrixXd& A, const Eigen::MatrixXd& C);

std::string to_string(ZeroSetVerdict v);
std::string to_string(ZeroSetBackend b);

}  // namespace retrig
