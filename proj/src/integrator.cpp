#include "retrig/integrator.hpp"

#include <cmath>
#include <stdexcept>

namespace retrig {

std::size_t TrajectoryLog::index_of_time(double s) const {
    const double tol = 1e-9 * std::max(1.0, std::abs(s));
    auto lo = std::lower_bound(t.begin(), t.end(), s - tol);
    if (lo != t.end() && std::abs(*lo - s) <= tol)
        return static_cast<std::size_t>(lo - t.begin());
    throw std::invalid_argument("TrajectoryLog: time " + std::to_string(s) +
                                " is not a sample time");
}

AugState AugState::initial(int n, int m, int l, const Eigen::VectorXd& x0, bool with_filter) {
    AugState s;
    s.x = x0;
    s.F = Eigen::VectorXd::Zero(n);
    s.Gam = Eigen::MatrixXd::Zero(n, l);
    if (with_filter) {
        s.z = Eigen::VectorXd::Zero(n);
        s.w = Eigen::VectorXd::Zero(m);
    }
    return s;
}

SegmentDynamics SegmentDynamics::plain(
    int n, std::function<Eigen::VectorXd(const Eigen::VectorXd&)> field) {
    SegmentDynamics d;
    d.n = n;
    d.m = 0;
    d.l = 0;
    d.theta = Eigen::VectorXd::Zero(0);
    d.control = [](const Eigen::VectorXd&) { return Eigen::VectorXd::Zero(0); };
    d.drift = [field](const Eigen::VectorXd& x, const Eigen::VectorXd&) { return field(x); };
    d.regressor = [n](const Eigen::VectorXd&, const Eigen::VectorXd&) {
        return Eigen::MatrixXd::Zero(n, 0);
    };
    return d;
}

namespace {

// Dormand-Prince 5(4) coefficients.
constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                 a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247,
                 a64 = 49.0 / 176, a65 = -5103.0 / 18656;
constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784,
                 b6 = 11.0 / 84;
constexpr double e1 = 35.0 / 384 - 5179.0 / 57600, e3 = 500.0 / 1113 - 7571.0 / 16695,
                 e4 = 125.0 / 192 - 393.0 / 640, e5 = -2187.0 / 6784 + 92097.0 / 339200,
                 e6 = 11.0 / 84 - 187.0 / 2100, e7 = -1.0 / 40;

struct Packer {
    int n, m, l;
    bool filter;
    int size() const { return n + n + n * l + (filter ? n + m : 0); }

    Eigen::VectorXd pack(const AugState& s) const {
        Eigen::VectorXd y(size());
        y.segment(0, n) = s.x;
        y.segment(n, n) = s.F;
        for (int j = 0; j < l; ++j) y.segment(2 * n + j * n, n) = s.Gam.col(j);
        if (filter) {
            y.segment(2 * n + l * n, n) = s.z;
            y.segment(3 * n + l * n, m) = s.w;
        }
        return y;
    }

    AugState unpack(const Eigen::VectorXd& y) const {
        AugState s;
        s.x = y.segment(0, n);
        s.F = y.segment(n, n);
        s.Gam.resize(n, l);
        for (int j = 0; j < l; ++j) s.Gam.col(j) = y.segment(2 * n + j * n, n);
        if (filter) {
            s.z = y.segment(2 * n + l * n, n);
            s.w = y.segment(3 * n + l * n, m);
        }
        return s;
    }
};

class Stepper {
public:
    Stepper(const SegmentDynamics& dyn, const IntegratorSettings& st)
        : dyn_(dyn), st_(st), pk_{dyn.n, dyn.m, dyn.l, dyn.with_filter} {}

    const Packer& packer() const { return pk_; }

    Eigen::VectorXd rhs(const Eigen::VectorXd& y) const {
        const Eigen::VectorXd x = y.segment(0, dyn_.n);
        const Eigen::VectorXd u = dyn_.control(x);
        const Eigen::VectorXd f = dyn_.drift(x, u);
        Eigen::VectorXd dy = Eigen::VectorXd::Zero(y.size());
        Eigen::VectorXd xdot = f;
        if (dyn_.l > 0) {
            const Eigen::MatrixXd G = dyn_.regressor(x, u);
            xdot += G * dyn_.theta;
            for (int j = 0; j < dyn_.l; ++j)
                dy.segment(2 * dyn_.n + j * dyn_.n, dyn_.n) = G.col(j);
        }
        dy.segment(0, dyn_.n) = xdot;
        dy.segment(dyn_.n, dyn_.n) = f;
        if (dyn_.with_filter) {
            dy.segment(2 * dyn_.n + dyn_.l * dyn_.n, dyn_.n) = x;
            dy.segment(3 * dyn_.n + dyn_.l * dyn_.n, dyn_.m) = u;
        }
        return dy;
    }

    /// One embedded step; returns the scaled error norm.
    double step(const Eigen::VectorXd& y, double h, Eigen::VectorXd& y_out) const {
        const Eigen::VectorXd k1 = rhs(y);
        const Eigen::VectorXd k2 = rhs(y + h * (a21 * k1));
        const Eigen::VectorXd k3 = rhs(y + h * (a31 * k1 + a32 * k2));
        const Eigen::VectorXd k4 = rhs(y + h * (a41 * k1 + a42 * k2 + a43 * k3));
        const Eigen::VectorXd k5 = rhs(y + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4));
        const Eigen::VectorXd k6 =
            rhs(y + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5));
        y_out = y + h * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
        const Eigen::VectorXd k7 = rhs(y_out);
        const Eigen::VectorXd err =
            h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);
        double acc = 0.0;
        for (Eigen::Index i = 0; i < y.size(); ++i) {
            const double sc = st_.atol + st_.rtol * std::max(std::abs(y(i)), std::abs(y_out(i)));
            const double r = err(i) / sc;
            acc += r * r;
        }
        return std::sqrt(acc / static_cast<double>(y.size()));
    }

    /// Adaptive integration from (t0,y0) to t1 with no logging. Returns false
    /// on a non-finite state or step underflow.
    bool advance(double t0, const Eigen::VectorXd& y0, double t1, Eigen::VectorXd& y_out) const {
        double t = t0;
        Eigen::VectorXd y = y0;
        double h = std::min(st_.dt_log, t1 - t0);
        while (t < t1 - 1e-15 * std::max(1.0, std::abs(t1))) {
            h = std::min(h, t1 - t);
            Eigen::VectorXd ynew;
            const double err = step(y, h, ynew);
            if (!ynew.allFinite()) return false;
            if (err <= 1.0) {
                t += h;
                y = ynew;
            }
            h *= std::clamp(0.9 * std::pow(std::max(err, 1e-16), -0.2), 0.2, 5.0);
            if (h < 1e-14 * std::max(1.0, std::abs(t))) return false;
        }
        y_out = y;
        return true;
    }

private:
    const SegmentDynamics& dyn_;
    const IntegratorSettings& st_;
    Packer pk_;
};

}  // namespace

StopReason integrate_segment(const SegmentDynamics& dyn, AugState& state, double t0,
                             double horizon, const GuardFn* guard,
                             const IntegratorSettings& settings, TrajectoryLog& log) {
    if (horizon <= 0.0) throw std::invalid_argument("integrate_segment: horizon must be positive");
    Stepper stepper(dyn, settings);
    const Packer& pk = stepper.packer();

    if (log.size() == 0) {
        log.n = dyn.n;
        log.m = dyn.m;
        log.l = dyn.l;
        log.has_filter = dyn.with_filter;
    }

    auto push_sample = [&](double t, const Eigen::VectorXd& y) {
        const AugState s = pk.unpack(y);
        log.t.push_back(t);
        log.x.push_back(s.x);
        log.u.push_back(dyn.control(s.x));
        log.F.push_back(s.F);
        log.Gam.push_back(s.Gam);
        if (dyn.with_filter) {
            log.z.push_back(s.z);
            log.w.push_back(s.w);
        }
    };

    const double t_end = t0 + horizon;
    double t = t0;
    Eigen::VectorXd y = pk.pack(state);

    if (log.size() == 0) push_sample(t0, y);  // boundary sample otherwise shared with caller

    if (guard && (*guard)(t0, state.x) >= 0.0)
        throw std::invalid_argument("integrate_segment: guard must be negative at segment start");

    const double event_tol = settings.tol_event * std::max(1.0, std::abs(t0));
    double h = std::min(settings.dt_log, horizon);
    double next_log = t0 + settings.dt_log;

    while (t < t_end - 1e-15 * std::max(1.0, t_end)) {
        double h_try = std::min({h, t_end - t, std::max(next_log - t, 1e-14)});
        // absorb a log point that would land within rounding of the segment end
        if (t_end - (t + h_try) < 1e-12 * std::max(1.0, std::abs(t_end))) h_try = t_end - t;
        Eigen::VectorXd ynew;
        const double err = stepper.step(y, h_try, ynew);
        if (!ynew.allFinite()) {
            state = pk.unpack(y);
            return {StopKind::StateNonFinite, t};
        }
        if (err <= 1.0) {
            double t_new = t + h_try;
            if (t_end - t_new < 1e-14 * std::max(1.0, std::abs(t_end))) t_new = t_end;
            const Eigen::VectorXd x_new = ynew.segment(0, dyn.n);
            if (guard && (*guard)(t_new, x_new) >= 0.0) {
                // Localize the crossing by bisection, re-integrating from the
                // step start each time the bracket's left end moves.
                double lo = t, hi = t_new;
                Eigen::VectorXd y_lo = y;
                while (hi - lo > event_tol) {
                    const double mid = 0.5 * (lo + hi);
                    Eigen::VectorXd y_mid;
                    if (!stepper.advance(lo, y_lo, mid, y_mid)) {
                        state = pk.unpack(y_lo);
                        return {StopKind::StateNonFinite, lo};
                    }
                    if ((*guard)(mid, y_mid.segment(0, dyn.n)) >= 0.0) {
                        hi = mid;
                    } else {
                        lo = mid;
                        y_lo = y_mid;
                    }
                }
                Eigen::VectorXd y_star;
                if (!stepper.advance(lo, y_lo, hi, y_star)) {
                    state = pk.unpack(y_lo);
                    return {StopKind::StateNonFinite, lo};
                }
                push_sample(hi, y_star);
                log.event_times.push_back(hi);
                state = pk.unpack(y_star);
                return {StopKind::GuardCrossed, hi};
            }
            t = t_new;
            y = ynew;
            push_sample(t, y);
            if (t >= next_log - 1e-12) next_log += settings.dt_log;
        }
        h = h_try * std::clamp(0.9 * std::pow(std::max(err, 1e-16), -0.2), 0.2, 5.0);
        if (h < 1e-14 * std::max(1.0, std::abs(t))) {
            state = pk.unpack(y);
            return {StopKind::StateNonFinite, t};
        }
    }
    state = pk.unpack(y);
    return {StopKind::HorizonReached, t_end};
}

}  // namespace retrig
