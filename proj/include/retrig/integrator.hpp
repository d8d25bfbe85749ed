#pragma once

#include <functional>
#include <optional>
#include <vector>

#include <Eigen/Dense>

namespace retrig {

struct IntegratorSettings {
    double rtol = 1e-10;
    double atol = 1e-12;
    double dt_log = 0.005;
    double tol_event = 1e-10;  // scaled by max(1, t0) inside integrate_segment
};

/// Dense closed-loop trajectory samples with the running integrals
/// F(t) = int_0^t f(x,u) ds and Gam(t) = int_0^t g(x,u) ds carried as
/// augmented states. z, w hold the filter states of the linear variant when
/// enabled. Event times are recorded as anchors and always coincide with
/// sample times.
struct TrajectoryLog {
    int n = 0, m = 0, l = 0;
    bool has_filter = false;

    std::vector<double> t;
    std::vector<Eigen::VectorXd> x;
    std::vector<Eigen::VectorXd> u;
    std::vector<Eigen::VectorXd> F;
    std::vector<Eigen::MatrixXd> Gam;
    std::vector<Eigen::VectorXd> z;
    std::vector<Eigen::VectorXd> w;
    std::vector<double> event_times;

    std::size_t size() const { return t.size(); }

    /// Index of a sample matching time s (tol 1e-9 absolute+relative);
    /// throws std::invalid_argument when s is not on the grid.
    std::size_t index_of_time(double s) const;
};

enum class StopKind { GuardCrossed, HorizonReached, StateNonFinite };

struct StopReason {
    StopKind kind;
    double t_stop;
};

/// Augmented integration state threaded through consecutive segments.
struct AugState {
    Eigen::VectorXd x;
    Eigen::VectorXd F;
    Eigen::MatrixXd Gam;
    Eigen::VectorXd z;  // empty unless the filter is enabled
    Eigen::VectorXd w;

    static AugState initial(int n, int m, int l, const Eigen::VectorXd& x0, bool with_filter);
};

/// Right-hand side bundle for one inter-event segment. The x-equation is
/// f(x,u) + g(x,u)*theta with u = control(x); drift and regressor feed the
/// same stage evaluations into the F and Gam integrals.
struct SegmentDynamics {
    int n = 0, m = 0, l = 0;
    Eigen::VectorXd theta;
    std::function<Eigen::VectorXd(const Eigen::VectorXd&)> control;  // u(x)
    std::function<Eigen::VectorXd(const Eigen::VectorXd&, const Eigen::VectorXd&)> drift;
    std::function<Eigen::MatrixXd(const Eigen::VectorXd&, const Eigen::VectorXd&)> regressor;
    bool with_filter = false;
    Eigen::MatrixXd filter_A, filter_B;  // zdot = x, wdot = u bookkeeping uses these at readout

    /// Plain ODE xdot = field(x), no inputs or parameters.
    static SegmentDynamics plain(int n, std::function<Eigen::VectorXd(const Eigen::VectorXd&)> field);
};

using GuardFn = std::function<double(double, const Eigen::VectorXd&)>;

/// Integrates one segment with a Dormand-Prince 5(4) stepper, appending
/// samples to `log` (spacing at most dt_log; every accepted step endpoint is
/// logged). A supplied guard must be negative at the start; a sign change is
/// localized by bisection with re-integration to within
/// tol_event*max(1, t0) and the segment ends exactly at the located time.
StopReason integrate_segment(const SegmentDynamics& dyn, AugState& state, double t0,
                             double horizon, const GuardFn* guard,
                             const IntegratorSettings& settings, TrajectoryLog& log);

}  // namespace retrig
