#pragma once

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "retrig/estimator.hpp"
#include "retrig/integrator.hpp"
#include "retrig/models.hpp"

namespace retrig {

enum class Variant { Generic, LinearFilter };

enum class TriggerCause { Initial, DwellCap, ThresholdHit, ZeroState };
std::string to_string(TriggerCause c);

struct Scenario {
    std::string model_name;
    PlantModel plant;
    ControllerFamily ctrl;
    std::optional<LinearPlant> linear;  // required for the LinearFilter variant
    TriggerParams trigger;
    Eigen::VectorXd theta_true;
    Eigen::VectorXd thetahat0;
    Eigen::VectorXd x0;
    double t_final = 10.0;
    IntegratorSettings solver;
    Variant variant = Variant::Generic;

    std::string trajectory_csv, events_csv, plot_svg;  // optional outputs

    void validate() const;
};

struct EventRecord {
    int index = 0;
    double tau = 0.0;
    Eigen::VectorXd x;
    Eigen::VectorXd thetahat;  // value in force from tau onward
    TriggerCause cause = TriggerCause::Initial;
    double mu = 0.0;
    int gram_rank = 0;
    double update_distance = 0.0;
    std::optional<GramSystem> gram;  // absent for the initial record
};

/// Per-interval bookkeeping: log rows [first_idx, last_idx] flowed under the
/// frozen estimate with the stated threshold (guarded == false on the
/// zero-state branch).
struct IntervalInfo {
    std::size_t first_idx = 0, last_idx = 0;
    Eigen::VectorXd thetahat;
    double threshold = 0.0;
    bool guarded = false;
};

struct Verdict {
    std::string name;
    bool pass = false;
    double margin = 0.0;  // worst signed margin; <= 0 means satisfied
    std::string detail;
};

struct SimulationResult {
    TrajectoryLog log;
    std::vector<EventRecord> events;
    std::vector<IntervalInfo> intervals;
    std::vector<Verdict> verdicts;
    std::optional<double> t_id;  // first event time with |thetahat - theta| <= eps_id
    bool aborted = false;

    bool all_pass() const;
};

/// Q(thetahat, x_i) + a(x_i); the segment guard compares V against this.
double trigger_threshold(const ControllerFamily& ctrl, double a_coeff,
                         const Eigen::VectorXd& thetahat, const Eigen::VectorXd& x_i);

/// Runs the hybrid closed loop: freeze the estimate, integrate to the dwell
/// cap or the Lyapunov threshold, update the estimate from the Gram system of
/// the window [mu, tau], repeat until t_final. The verdict sheet is filled by
/// verify_invariants.
SimulationResult run_closed_loop(const Scenario& s);

/// Fills r.verdicts: inter-event Lyapunov bound, estimate jump and growth
/// bounds, post-identification spacing and constancy, Gram consistency, and
/// the dwell cap. Returns the sheet.
std::vector<Verdict> verify_invariants(SimulationResult& r, const Scenario& s);

struct DecayFit {
    double M = 1.0;
    double omega = 0.0;
};

/// Least-squares fit of log|x(t)| ~ intercept - omega*t over log points with
/// |x| > 1e-12 and t >= t_start. M = exp(intercept)/|x0| clamped below by 1.
DecayFit fit_decay(const SimulationResult& r, double t_start);

/// Parses and validates a scenario config document; throws
/// std::invalid_argument with a field-path message on schema violations.
Scenario scenario_from_config(const nlohmann::json& doc);
Scenario scenario_from_file(const std::string& path);

void write_trajectory_csv(const SimulationResult& r, const Scenario& s, const std::string& path);
void write_events_csv(const SimulationResult& r, const std::string& path);

}  // namespace retrig
