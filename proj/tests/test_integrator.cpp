#include <cmath>

#include <Eigen/Dense>

#include "doctest.h"
#include "retrig/integrator.hpp"
#include "retrig/models.hpp"

using namespace retrig;

namespace {

SegmentDynamics decay_dynamics() {
    return SegmentDynamics::plain(1, [](const Eigen::VectorXd& x) -> Eigen::VectorXd {
        return -x;
    });
}

TrajectoryLog fresh_log(int n, int m, int l) {
    TrajectoryLog log;
    log.n = n;
    log.m = m;
    log.l = l;
    return log;
}

}  // namespace

TEST_CASE("exponential decay hits e^{-1}") {
    SegmentDynamics dyn = decay_dynamics();
    AugState st = AugState::initial(1, 1, 1, Eigen::VectorXd::Ones(1), false);
    TrajectoryLog log = fresh_log(1, 1, 1);
    IntegratorSettings settings;
    StopReason stop = integrate_segment(dyn, st, 0.0, 1.0, nullptr, settings, log);
    CHECK(stop.kind == StopKind::HorizonReached);
    CHECK(stop.t_stop == 1.0);  // end time is exact, not merely close
    CHECK(std::abs(st.x(0) - std::exp(-1.0)) <= 10.0 * settings.rtol);
}

TEST_CASE("guard crossing at ln 2") {
    SegmentDynamics dyn = decay_dynamics();
    AugState st = AugState::initial(1, 1, 1, Eigen::VectorXd::Ones(1), false);
    TrajectoryLog log = fresh_log(1, 1, 1);
    IntegratorSettings settings;
    GuardFn guard = [](double, const Eigen::VectorXd& x) { return 0.5 - x(0); };
    StopReason stop = integrate_segment(dyn, st, 0.0, 5.0, &guard, settings, log);
    CHECK(stop.kind == StopKind::GuardCrossed);
    CHECK(std::abs(stop.t_stop - std::log(2.0)) <= settings.tol_event);
    CHECK(std::abs(st.x(0) - 0.5) <= 1e-9);
    CHECK(log.t.back() == stop.t_stop);  // segment ends exactly at the located time

    // guard that never crosses -> plain horizon end
    AugState st2 = AugState::initial(1, 1, 1, Eigen::VectorXd::Ones(1), false);
    TrajectoryLog log2 = fresh_log(1, 1, 1);
    GuardFn never = [](double, const Eigen::VectorXd& x) { return x(0) - 2.0; };
    StopReason stop2 = integrate_segment(dyn, st2, 0.0, 0.5, &never, settings, log2);
    CHECK(stop2.kind == StopKind::HorizonReached);
    CHECK(stop2.t_stop == 0.5);

    // guard must start negative
    GuardFn bad = [](double, const Eigen::VectorXd&) { return 1.0; };
    AugState st3 = AugState::initial(1, 1, 1, Eigen::VectorXd::Ones(1), false);
    TrajectoryLog log3 = fresh_log(1, 1, 1);
    CHECK_THROWS(integrate_segment(dyn, st3, 0.0, 1.0, &bad, settings, log3));
}

TEST_CASE("halving tol_event tightens the located crossing") {
    SegmentDynamics dyn = decay_dynamics();
    GuardFn guard = [](double, const Eigen::VectorXd& x) { return 0.5 - x(0); };
    IntegratorSettings settings;
    settings.tol_event = 1e-6;
    double prev_t = 0.0, prev_tol = 0.0;
    for (int pass = 0; pass < 8; ++pass) {
        AugState st = AugState::initial(1, 1, 1, Eigen::VectorXd::Ones(1), false);
        TrajectoryLog log = fresh_log(1, 1, 1);
        StopReason stop = integrate_segment(dyn, st, 0.0, 5.0, &guard, settings, log);
        if (pass > 0) CHECK(std::abs(stop.t_stop - prev_t) <= prev_tol);
        prev_t = stop.t_stop;
        prev_tol = settings.tol_event;
        settings.tol_event *= 0.5;
    }
}

TEST_CASE("log spacing and index lookup") {
    SegmentDynamics dyn = decay_dynamics();
    AugState st = AugState::initial(1, 1, 1, Eigen::VectorXd::Ones(1), false);
    TrajectoryLog log = fresh_log(1, 1, 1);
    IntegratorSettings settings;
    settings.dt_log = 0.01;
    integrate_segment(dyn, st, 0.0, 1.0, nullptr, settings, log);

    CHECK(log.t.front() == 0.0);
    CHECK(log.t.back() == 1.0);
    for (std::size_t i = 1; i < log.size(); ++i) {
        CHECK(log.t[i] - log.t[i - 1] <= settings.dt_log + 1e-12);
        CHECK(log.t[i] > log.t[i - 1]);
    }
    CHECK(log.index_of_time(0.0) == 0);
    CHECK(log.index_of_time(1.0) == log.size() - 1);
    CHECK_THROWS(log.index_of_time(0.123456));
}

TEST_CASE("cumulative integrals satisfy the window identity") {
    // Planar adaptive loop with a frozen wrong estimate: the logged x, F, Gam
    // must satisfy x(t) - x(0) = F(t) + Gam(t)*theta at every sample.
    BuiltinModel mdl = example_4_2(1.0, 1.0, 3.0);
    Eigen::VectorXd theta(1), thetahat(1);
    theta << 2.0;
    thetahat << 0.0;

    SegmentDynamics dyn;
    dyn.n = 2;
    dyn.m = 1;
    dyn.l = 1;
    dyn.theta = theta;
    dyn.control = [&](const Eigen::VectorXd& x) { return mdl.ctrl.k(thetahat, x); };
    dyn.drift = mdl.plant.f;
    dyn.regressor = mdl.plant.g;

    Eigen::VectorXd x0(2);
    x0 << 1.0, 1.0;
    AugState st = AugState::initial(2, 1, 1, x0, false);
    TrajectoryLog log = fresh_log(2, 1, 1);
    IntegratorSettings settings;
    integrate_segment(dyn, st, 0.0, 2.0, nullptr, settings, log);

    for (std::size_t i = 0; i < log.size(); ++i) {
        Eigen::VectorXd resid = log.x[i] - x0 - log.F[i] - log.Gam[i] * theta;
        CHECK(resid.norm() <= 1e-8 * (1.0 + log.x[i].norm()));
    }
    // u column logs the held feedback
    CHECK((log.u[0] - mdl.ctrl.k(thetahat, x0)).norm() <= 1e-14);
}

TEST_CASE("integration is deterministic") {
    auto run = []() {
        SegmentDynamics dyn = SegmentDynamics::plain(2, [](const Eigen::VectorXd& x) {
            Eigen::VectorXd d(2);
            d << x(1), -std::sin(x(0)) - 0.3 * x(1);
            return d;
        });
        AugState st = AugState::initial(2, 1, 1, Eigen::VectorXd::Ones(2), false);
        TrajectoryLog log;
        log.n = 2;
        log.m = 1;
        log.l = 1;
        IntegratorSettings settings;
        integrate_segment(dyn, st, 0.0, 3.0, nullptr, settings, log);
        return log;
    };
    TrajectoryLog a = run(), b = run();
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a.t[i] == b.t[i]);
        CHECK(a.x[i] == b.x[i]);  // bitwise
    }
}

TEST_CASE("finite-time blowup reports StateNonFinite") {
    SegmentDynamics dyn = SegmentDynamics::plain(1, [](const Eigen::VectorXd& x) -> Eigen::VectorXd {
        return x.array().square().matrix();
    });
    AugState st = AugState::initial(1, 1, 1, Eigen::VectorXd::Ones(1), false);
    TrajectoryLog log = fresh_log(1, 1, 1);
    IntegratorSettings settings;
    StopReason stop = integrate_segment(dyn, st, 0.0, 2.0, nullptr, settings, log);
    CHECK(stop.kind == StopKind::StateNonFinite);
    CHECK(stop.t_stop < 2.0);
    CHECK(log.size() >= 1);  // last good sample retained
}
