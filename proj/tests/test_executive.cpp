#include <cstdio>
#include <fstream>
#include <sstream>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "doctest.h"
#include "retrig/executive.hpp"

using namespace retrig;

namespace {

nlohmann::json planar_doc(double t_final = 4.0) {
    return {{"model", {{"name", "example_4_2"}, {"c", 1.0}, {"k1", 1.0}, {"k2", 3.0}}},
            {"theta_true", {2.0}},
            {"thetahat0", {0.0}},
            {"x0", {1.0, 1.0}},
            {"T", 1.0},
            {"a_coeff", 0.1},
            {"Ntilde", 2},
            {"t_final", t_final}};
}

}  // namespace

TEST_CASE("trigger threshold oracle at (1, 0)") {
    Scenario s = scenario_from_config(planar_doc());
    Eigen::MatrixXd Acl(2, 2);
    Acl << 0, 1, -1, -3;
    Eigen::MatrixXd P = lyapunov_solve(Acl, Eigen::MatrixXd::Identity(2, 2));
    Eigen::VectorXd xi(2), th(1);
    xi << 1.0, 0.0;
    th << 2.0;
    CHECK(trigger_threshold(s.ctrl, 0.1, th, xi) == doctest::Approx(P(0, 0) + 0.1).epsilon(1e-12));
}

TEST_CASE("planar run identifies at the first event") {
    SimulationResult r = run_closed_loop(scenario_from_config(planar_doc()));
    CHECK_FALSE(r.aborted);
    REQUIRE(r.events.size() >= 2);
    CHECK(r.events[0].cause == TriggerCause::Initial);
    CHECK(r.events[1].tau <= 1.0);
    CHECK((r.events[1].thetahat - Eigen::VectorXd::Constant(1, 2.0)).norm() <= 1e-6);
    REQUIRE(r.t_id.has_value());
    CHECK(*r.t_id == doctest::Approx(r.events[1].tau));
    CHECK(r.all_pass());
    for (const Verdict& v : r.verdicts) {
        INFO(v.name, ": ", v.detail);
        CHECK(v.pass);
    }
    // post-identification events are dwell-cap events exactly T apart
    for (std::size_t i = 2; i < r.events.size(); ++i) {
        CHECK(r.events[i].cause == TriggerCause::DwellCap);
        CHECK(std::abs(r.events[i].tau - r.events[i - 1].tau - 1.0) <= 1e-9);
    }
}

TEST_CASE("matched initial estimate produces zero updates") {
    nlohmann::json doc = planar_doc(10.5);
    doc["thetahat0"] = {2.0};
    SimulationResult r = run_closed_loop(scenario_from_config(doc));
    CHECK(r.events.size() >= 10);
    for (const EventRecord& ev : r.events) {
        CHECK((ev.thetahat - Eigen::VectorXd::Constant(1, 2.0)).norm() <= 1e-10);
        CHECK(ev.update_distance <= 1e-10);
    }
    CHECK(r.all_pass());
}

TEST_CASE("zero initial state rides the zero-state branch") {
    nlohmann::json doc = planar_doc(3.5);
    doc["x0"] = {0.0, 0.0};
    SimulationResult r = run_closed_loop(scenario_from_config(doc));
    CHECK_FALSE(r.aborted);
    for (const EventRecord& ev : r.events) {
        CHECK(ev.x.norm() <= 1e-9);
        if (ev.index > 0) {
            CHECK(ev.cause == TriggerCause::ZeroState);
            CHECK(ev.update_distance <= 1e-9);  // nothing to learn from rest
        }
    }
    // zero-state intervals carry no guard
    for (const IntervalInfo& iv : r.intervals) CHECK_FALSE(iv.guarded);
    CHECK(r.all_pass());
}

TEST_CASE("config parsing: defaults and rejections") {
    Scenario s = scenario_from_config(planar_doc());
    CHECK(s.solver.rtol == doctest::Approx(1e-10));
    CHECK(s.solver.dt_log == doctest::Approx(1.0 / 200));  // T/200
    CHECK(s.variant == Variant::Generic);
    CHECK(s.model_name == "example_4_2");

    nlohmann::json bad = planar_doc();
    bad["T"] = -1.0;
    CHECK_THROWS_WITH_AS(Scenario{scenario_from_config(bad)}, doctest::Contains("$.T"),
                         std::invalid_argument);

    bad = planar_doc();
    bad["theta_true"] = {2.0, 1.0};  // wrong parameter dimension
    CHECK_THROWS_AS(scenario_from_config(bad), std::invalid_argument);

    bad = planar_doc();
    bad["model"]["name"] = "nonsense";
    CHECK_THROWS_AS(scenario_from_config(bad), std::invalid_argument);

    bad = planar_doc();
    bad.erase("x0");
    CHECK_THROWS_AS(scenario_from_config(bad), std::invalid_argument);
}

TEST_CASE("verify_invariants flags a corrupted estimate sequence") {
    Scenario s = scenario_from_config(planar_doc());
    SimulationResult r = run_closed_loop(s);
    REQUIRE(r.events.size() >= 2);
    r.events[1].thetahat(0) = 50.0;  // impossible jump
    std::vector<Verdict> sheet = verify_invariants(r, s);
    bool some_fail = false;
    for (const Verdict& v : sheet) some_fail |= !v.pass;
    CHECK(some_fail);
}

TEST_CASE("fit_decay on an analytic trajectory") {
    // synthetic result with |x(t)| = e^{-t}
    SimulationResult r;
    r.log.n = 1;
    r.log.m = 1;
    r.log.l = 1;
    for (int i = 0; i <= 400; ++i) {
        double t = 0.01 * i;
        r.log.t.push_back(t);
        r.log.x.push_back(Eigen::VectorXd::Constant(1, std::exp(-t)));
        r.log.u.push_back(Eigen::VectorXd::Zero(1));
        r.log.F.push_back(Eigen::VectorXd::Zero(1));
        r.log.Gam.push_back(Eigen::MatrixXd::Zero(1, 1));
    }
    DecayFit fit = fit_decay(r, 0.0);
    CHECK(fit.omega == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(fit.M == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("csv writers produce the documented layout") {
    Scenario s = scenario_from_config(planar_doc(2.5));
    s.trajectory_csv = "test_traj_tmp.csv";
    s.events_csv = "test_events_tmp.csv";
    SimulationResult r = run_closed_loop(s);
    write_trajectory_csv(r, s, s.trajectory_csv);
    write_events_csv(r, s.events_csv);

    std::ifstream traj(s.trajectory_csv);
    REQUIRE(traj.good());
    std::string header;
    std::getline(traj, header);
    CHECK(header == "t,x_1,x_2,u_1,thetahat_1,V,threshold,event_flag");

    std::size_t rows = 0, flagged = 0;
    std::string line;
    while (std::getline(traj, line)) {
        ++rows;
        CHECK(std::count(line.begin(), line.end(), ',') == 7);
        if (line.size() >= 2 && line.substr(line.size() - 2) == ",1") ++flagged;
    }
    CHECK(rows == r.log.size());
    CHECK(flagged == r.events.size());

    std::ifstream ev(s.events_csv);
    REQUIRE(ev.good());
    std::getline(ev, header);
    CHECK(header.find("index,tau,cause") == 0);
    CHECK(header.find("G_1_1") != std::string::npos);
    CHECK(header.find("Z_1") != std::string::npos);
    std::size_t evrows = 0;
    while (std::getline(ev, line)) ++evrows;
    CHECK(evrows == r.events.size());

    std::remove(s.trajectory_csv.c_str());
    std::remove(s.events_csv.c_str());
}

TEST_CASE("linear variant scenario from config") {
    nlohmann::json doc = {
        {"model",
         {{"name", "linear"},
          {"A", {{0.0, 1.0}, {0.0, 0.0}}},
          {"B", {{0.0}, {1.0}}},
          {"C", {{{0.0, 0.0}, {1.0, 1.0}}}},
          {"gain_table", {{"K0", {{-1.0, -3.0}}}, {"K", {{{-1.0, -1.0}}}}}}}},
        {"theta_true", {0.5}},
        {"thetahat0", {0.0}},
        {"x0", {1.0, -0.5}},
        {"T", 1.0},
        {"a_coeff", 0.1},
        {"Ntilde", 2},
        {"t_final", 3.0},
        {"variant", "linear_filter"}};
    Scenario s = scenario_from_config(doc);
    REQUIRE(s.linear.has_value());
    CHECK(s.variant == Variant::LinearFilter);

    SimulationResult r = run_closed_loop(s);
    CHECK_FALSE(r.aborted);
    CHECK(r.log.has_filter);
    REQUIRE(r.events.size() >= 2);
    CHECK((r.events[1].thetahat - Eigen::VectorXd::Constant(1, 0.5)).norm() <= 1e-6);
    CHECK(r.all_pass());
}
