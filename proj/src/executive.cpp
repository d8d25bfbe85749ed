#include "retrig/executive.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace retrig {

using nlohmann::json;

std::string to_string(TriggerCause c) {
    switch (c) {
        case TriggerCause::Initial: return "initial";
        case TriggerCause::DwellCap: return "dwell_cap";
        case TriggerCause::ThresholdHit: return "threshold_hit";
        case TriggerCause::ZeroState: return "zero_state";
    }
    return "?";
}

void Scenario::validate() const {
    if (t_final <= 0.0) throw std::invalid_argument("Scenario: t_final must be positive");
    trigger.validate();
    if (theta_true.size() != plant.l || thetahat0.size() != plant.l)
        throw std::invalid_argument("Scenario: parameter dimension mismatch");
    if (x0.size() != plant.n) throw std::invalid_argument("Scenario: x0 dimension mismatch");
    if (variant == Variant::LinearFilter && !linear)
        throw std::invalid_argument("Scenario: linear_filter variant requires a linear model");
}

bool SimulationResult::all_pass() const {
    for (const auto& v : verdicts)
        if (!v.pass) return false;
    return !aborted;
}

double trigger_threshold(const ControllerFamily& ctrl, double a_coeff,
                         const Eigen::VectorXd& thetahat, const Eigen::VectorXd& x_i) {
    return ctrl.Q(thetahat, x_i) + a_coeff * x_i.squaredNorm();
}

namespace {

SegmentDynamics make_dynamics(const Scenario& s, const Eigen::VectorXd& thetahat) {
    SegmentDynamics dyn;
    dyn.n = s.plant.n;
    dyn.m = s.plant.m;
    dyn.l = s.plant.l;
    dyn.theta = s.theta_true;
    const auto k = s.ctrl.k;
    dyn.control = [k, thetahat](const Eigen::VectorXd& x) { return k(thetahat, x); };
    dyn.drift = s.plant.f;
    dyn.regressor = s.plant.g;
    if (s.variant == Variant::LinearFilter) {
        dyn.with_filter = true;
        dyn.filter_A = s.linear->A;
        dyn.filter_B = s.linear->B;
    }
    return dyn;
}

}  // namespace

SimulationResult run_closed_loop(const Scenario& s) {
    s.validate();
    SimulationResult res;
    const double eps_id = 1e-6 * (1.0 + s.theta_true.norm());

    Eigen::VectorXd thetahat = s.thetahat0;
    AugState state = AugState::initial(s.plant.n, s.plant.m, s.plant.l, s.x0,
                                       s.variant == Variant::LinearFilter);
    double tau = 0.0;
    std::vector<double> event_times{0.0};

    EventRecord rec0;
    rec0.index = 0;
    rec0.tau = 0.0;
    rec0.x = s.x0;
    rec0.thetahat = thetahat;
    rec0.cause = TriggerCause::Initial;
    res.events.push_back(rec0);
    res.log.event_times.push_back(0.0);
    if ((thetahat - s.theta_true).norm() <= eps_id) res.t_id = 0.0;

    int i = 0;
    while (tau < s.t_final - 1e-12 * std::max(1.0, s.t_final)) {
        const SegmentDynamics dyn = make_dynamics(s, thetahat);
        // control is right-continuous at events: refresh u at the boundary row
        if (res.log.size() > 0) res.log.u.back() = dyn.control(state.x);

        const bool zero_state = state.x.norm() <= s.trigger.eps_zero;
        double threshold = trigger_threshold(s.ctrl, s.trigger.a_coeff, thetahat, state.x);
        GuardFn guard;
        if (!zero_state) {
            if (s.variant == Variant::LinearFilter) {
                // radius trigger of the linear specialization
                const double M = s.linear->exp_bound(thetahat);
                const double radius = state.x.norm() * std::sqrt(s.trigger.a_coeff + M * M);
                guard = [radius](double, const Eigen::VectorXd& x) { return x.norm() - radius; };
            } else {
                const auto V = s.ctrl.V;
                const Eigen::VectorXd th = thetahat;
                const double thr = threshold;
                guard = [V, th, thr](double, const Eigen::VectorXd& x) { return V(th, x) - thr; };
            }
        }

        const double cap = std::min(tau + s.trigger.T, s.t_final);
        const std::size_t first_idx = res.log.size() == 0 ? 0 : res.log.size() - 1;
        const StopReason stop = integrate_segment(dyn, state, tau, cap - tau,
                                                  guard ? &guard : nullptr, s.solver, res.log);

        IntervalInfo interval;
        interval.first_idx = first_idx;
        interval.last_idx = res.log.size() - 1;
        interval.thetahat = thetahat;
        interval.threshold = threshold;
        interval.guarded = static_cast<bool>(guard);
        res.intervals.push_back(interval);

        if (stop.kind == StopKind::StateNonFinite) {
            res.aborted = true;
            break;
        }
        const double tau_next = stop.t_stop;
        if (stop.kind == StopKind::HorizonReached) {
            const bool dwell_event =
                tau + s.trigger.T <= s.t_final + 1e-12 * std::max(1.0, s.t_final);
            if (!dwell_event) break;  // ran out of horizon before the dwell cap
            res.log.event_times.push_back(tau_next);
        }

        // estimator update at the event
        const double mu = compute_mu(event_times, tau_next, s.trigger.Ntilde, s.trigger.T);
        GramSystem gs = (s.variant == Variant::LinearFilter)
                            ? linear_filter_gram(res.log, mu, tau_next, s.linear->C, s.linear->A,
                                                 s.linear->B)
                            : gram_pair(res.log, mu, tau_next);
        const EstimateUpdate upd = ls_update(gs, thetahat);
        thetahat = upd.thetahat_new;

        ++i;
        EventRecord rec;
        rec.index = i;
        rec.tau = tau_next;
        rec.x = state.x;
        rec.thetahat = thetahat;
        rec.cause = stop.kind == StopKind::GuardCrossed
                        ? TriggerCause::ThresholdHit
                        : (zero_state ? TriggerCause::ZeroState : TriggerCause::DwellCap);
        rec.mu = mu;
        rec.gram_rank = upd.rank;
        rec.update_distance = upd.distance();
        rec.gram = std::move(gs);
        res.events.push_back(std::move(rec));

        event_times.push_back(tau_next);
        tau = tau_next;
        if (!res.t_id && (thetahat - s.theta_true).norm() <= eps_id) res.t_id = tau_next;
    }

    verify_invariants(res, s);
    return res;
}

std::vector<Verdict> verify_invariants(SimulationResult& r, const Scenario& s) {
    std::vector<Verdict> sheet;
    const double theta_norm = s.theta_true.norm();
    const double eps_id = 1e-6 * (1.0 + theta_norm);
    const double jump_tol = 1e-8 * (1.0 + theta_norm);

    // (3.8): V stays below the frozen threshold on every guarded interval.
    {
        Verdict v{"lyapunov_bound_3_8", true, -1e300, ""};
        for (const auto& iv : r.intervals) {
            if (!iv.guarded) continue;
            const double tol = 1e-8 * (1.0 + iv.threshold);
            for (std::size_t k = iv.first_idx; k <= iv.last_idx; ++k) {
                const double margin = s.ctrl.V(iv.thetahat, r.log.x[k]) - iv.threshold - tol;
                v.margin = std::max(v.margin, margin);
                if (margin > 0.0) v.pass = false;
            }
        }
        if (v.margin == -1e300) v.margin = 0.0;
        sheet.push_back(v);
    }

    // (3.14): |th(i+1) - th(i)| <= |theta - th(i)| + tol
    // (3.15): |theta - th(i+1)| <= 2 |theta - th(i)| + tol
    {
        Verdict vj{"estimate_jump_bound_3_14", true, -1e300, ""};
        Verdict vg{"error_growth_bound_3_15", true, -1e300, ""};
        for (std::size_t k = 1; k < r.events.size(); ++k) {
            const Eigen::VectorXd& prev = r.events[k - 1].thetahat;
            const Eigen::VectorXd& next = r.events[k].thetahat;
            const double err_prev = (s.theta_true - prev).norm();
            const double mj = (next - prev).norm() - err_prev - jump_tol;
            const double mg = (s.theta_true - next).norm() - 2.0 * err_prev - jump_tol;
            vj.margin = std::max(vj.margin, mj);
            vg.margin = std::max(vg.margin, mg);
            if (mj > 0.0) vj.pass = false;
            if (mg > 0.0) vg.pass = false;
        }
        if (vj.margin == -1e300) vj.margin = 0.0;
        if (vg.margin == -1e300) vg.margin = 0.0;
        sheet.push_back(vj);
        sheet.push_back(vg);
    }

    // Claim 2: once identified, gaps equal T and the estimate is frozen.
    {
        Verdict v{"post_identification_claim_2", true, 0.0, ""};
        std::size_t id_idx = r.events.size();
        for (std::size_t k = 0; k < r.events.size(); ++k) {
            if ((r.events[k].thetahat - s.theta_true).norm() <= eps_id) {
                id_idx = k;
                break;
            }
        }
        for (std::size_t k = id_idx + 1; k < r.events.size(); ++k) {
            const double gap = r.events[k].tau - r.events[k - 1].tau;
            const double mgap = std::abs(gap - s.trigger.T) - 1e-9;
            const double mconst =
                (r.events[k].thetahat - r.events[id_idx].thetahat).norm() - 1e-10;
            v.margin = std::max({v.margin, mgap, mconst});
            if (mgap > 0.0 || mconst > 0.0) v.pass = false;
        }
        sheet.push_back(v);
    }

    // (2.10): Gram consistency at every event.
    {
        Verdict v{"gram_consistency_2_10", true, -1e300, ""};
        for (const auto& ev : r.events) {
            if (!ev.gram) continue;
            const double resid = (ev.gram->G * s.theta_true - ev.gram->Z).norm();
            const double margin = resid - 1e-6 * (1.0 + ev.gram->Z.norm());
            v.margin = std::max(v.margin, margin);
            if (margin > 0.0) v.pass = false;
        }
        if (v.margin == -1e300) v.margin = 0.0;
        sheet.push_back(v);
    }

    // (2.4): dwell cap.
    {
        Verdict v{"dwell_cap_2_4", true, -1e300, ""};
        for (std::size_t k = 1; k < r.events.size(); ++k) {
            const double gap = r.events[k].tau - r.events[k - 1].tau;
            const double margin = gap - s.trigger.T - s.solver.tol_event * 10.0 - 1e-9;
            v.margin = std::max(v.margin, margin);
            if (margin > 0.0) v.pass = false;
        }
        if (v.margin == -1e300) v.margin = 0.0;
        sheet.push_back(v);
    }

    if (r.aborted)
        sheet.push_back({"integration_completed", false, 1.0, "state became non-finite"});

    r.verdicts = sheet;
    return sheet;
}

DecayFit fit_decay(const SimulationResult& r, double t_start) {
    double sw = 0, st = 0, sy = 0, stt = 0, sty = 0;
    for (std::size_t k = 0; k < r.log.size(); ++k) {
        const double t = r.log.t[k];
        const double nx = r.log.x[k].norm();
        if (t < t_start || nx <= 1e-12) continue;
        const double y = std::log(nx);
        sw += 1;
        st += t;
        sy += y;
        stt += t * t;
        sty += t * y;
    }
    if (sw < 2) throw std::invalid_argument("fit_decay: nothing to fit after t_start");
    const double det = sw * stt - st * st;
    if (std::abs(det) < 1e-300) throw std::invalid_argument("fit_decay: degenerate time span");
    const double slope = (sw * sty - st * sy) / det;
    const double intercept = (stt * sy - st * sty) / det;
    DecayFit fit;
    fit.omega = -slope;
    const double x0n = r.log.x.front().norm();
    fit.M = std::max(1.0, std::exp(intercept) / std::max(x0n, 1e-300));
    return fit;
}

namespace {

[[noreturn]] void config_error(const std::string& path, const std::string& msg) {
    throw std::invalid_argument("config: " + path + ": " + msg);
}

const json& require(const json& j, const std::string& key, const std::string& path) {
    if (!j.contains(key)) config_error(path + "." + key, "missing field");
    return j.at(key);
}

double number_at(const json& j, const std::string& key, const std::string& path) {
    const json& v = require(j, key, path);
    if (!v.is_number()) config_error(path + "." + key, "expected a number");
    return v.get<double>();
}

Eigen::VectorXd vector_at(const json& j, const std::string& key, const std::string& path) {
    const json& v = require(j, key, path);
    if (!v.is_array()) config_error(path + "." + key, "expected an array of numbers");
    Eigen::VectorXd out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (!v[i].is_number()) config_error(path + "." + key, "expected numeric entries");
        out(i) = v[i].get<double>();
    }
    return out;
}

Eigen::MatrixXd matrix_at(const json& v, const std::string& path) {
    if (!v.is_array() || v.empty() || !v[0].is_array())
        config_error(path, "expected a row-major matrix (array of arrays)");
    const std::size_t rows = v.size(), cols = v[0].size();
    Eigen::MatrixXd out(rows, cols);
    for (std::size_t i = 0; i < rows; ++i) {
        if (!v[i].is_array() || v[i].size() != cols) config_error(path, "ragged matrix rows");
        for (std::size_t j = 0; j < cols; ++j) {
            if (!v[i][j].is_number()) config_error(path, "expected numeric entries");
            out(i, j) = v[i][j].get<double>();
        }
    }
    return out;
}

}  // namespace

Scenario scenario_from_config(const json& doc) {
    Scenario s;
    const json& model = require(doc, "model", "$");
    const std::string name = require(model, "name", "$.model").get<std::string>();
    s.model_name = name;

    if (name == "example_4_2") {
        const BuiltinModel bm = example_4_2(number_at(model, "c", "$.model"),
                                            number_at(model, "k1", "$.model"),
                                            number_at(model, "k2", "$.model"));
        s.plant = bm.plant;
        s.ctrl = bm.ctrl;
    } else if (name == "example_4_3") {
        const BuiltinModel bm = example_4_3(number_at(model, "k1", "$.model"),
                                            number_at(model, "k2", "$.model"),
                                            number_at(model, "k3", "$.model"));
        s.plant = bm.plant;
        s.ctrl = bm.ctrl;
    } else if (name == "linear") {
        LinearPlant lp;
        lp.A = matrix_at(require(model, "A", "$.model"), "$.model.A");
        lp.B = matrix_at(require(model, "B", "$.model"), "$.model.B");
        for (const auto& Ci : require(model, "C", "$.model"))
            lp.C.push_back(matrix_at(Ci, "$.model.C[]"));
        const json& gt = require(model, "gain_table", "$.model");
        lp.K0 = matrix_at(require(gt, "K0", "$.model.gain_table"), "$.model.gain_table.K0");
        for (const auto& Ki : require(gt, "K", "$.model.gain_table"))
            lp.Kpar.push_back(matrix_at(Ki, "$.model.gain_table.K[]"));
        if (model.contains("omega")) lp.omega_fixed = number_at(model, "omega", "$.model");
        lp.validate();
        s.plant = lp.as_plant();
        s.ctrl = lp.controller();
        s.linear = lp;
    } else {
        config_error("$.model.name", "unknown model '" + name + "'");
    }

    s.theta_true = vector_at(doc, "theta_true", "$");
    s.thetahat0 = vector_at(doc, "thetahat0", "$");
    s.x0 = vector_at(doc, "x0", "$");
    if (s.theta_true.size() != s.plant.l)
        config_error("$.theta_true", "dimension " + std::to_string(s.theta_true.size()) +
                                         " != plant parameter count " + std::to_string(s.plant.l));
    if (s.thetahat0.size() != s.plant.l)
        config_error("$.thetahat0", "dimension mismatch with plant parameter count");
    if (s.x0.size() != s.plant.n) config_error("$.x0", "dimension mismatch with state count");

    s.trigger.T = number_at(doc, "T", "$");
    if (s.trigger.T <= 0.0) config_error("$.T", "must be positive");
    s.trigger.a_coeff = number_at(doc, "a_coeff", "$");
    if (s.trigger.a_coeff <= 0.0) config_error("$.a_coeff", "must be positive");
    const double Ntilde = number_at(doc, "Ntilde", "$");
    if (Ntilde < 1.0 || Ntilde != std::floor(Ntilde))
        config_error("$.Ntilde", "must be a positive integer");
    s.trigger.Ntilde = static_cast<int>(Ntilde);
    s.t_final = number_at(doc, "t_final", "$");
    if (s.t_final <= 0.0) config_error("$.t_final", "must be positive");

    s.solver.dt_log = s.trigger.T / 200.0;
    if (doc.contains("solver")) {
        const json& sv = doc.at("solver");
        if (sv.contains("rtol")) s.solver.rtol = number_at(sv, "rtol", "$.solver");
        if (sv.contains("atol")) s.solver.atol = number_at(sv, "atol", "$.solver");
        if (sv.contains("dt_log")) s.solver.dt_log = number_at(sv, "dt_log", "$.solver");
        if (sv.contains("tol_event")) s.solver.tol_event = number_at(sv, "tol_event", "$.solver");
        if (sv.contains("eps_zero")) s.trigger.eps_zero = number_at(sv, "eps_zero", "$.solver");
    }

    if (doc.contains("variant")) {
        const std::string v = doc.at("variant").get<std::string>();
        if (v == "generic") s.variant = Variant::Generic;
        else if (v == "linear_filter") s.variant = Variant::LinearFilter;
        else config_error("$.variant", "expected 'generic' or 'linear_filter'");
    }
    if (s.variant == Variant::LinearFilter && !s.linear)
        config_error("$.variant", "linear_filter requires model 'linear'");

    if (doc.contains("output")) {
        const json& out = doc.at("output");
        if (out.contains("trajectory_csv")) s.trajectory_csv = out.at("trajectory_csv");
        if (out.contains("events_csv")) s.events_csv = out.at("events_csv");
        if (out.contains("plot_svg")) s.plot_svg = out.at("plot_svg");
    }

    s.validate();
    return s;
}

Scenario scenario_from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open config file: " + path);
    json doc;
    in >> doc;
    return scenario_from_config(doc);
}

void write_trajectory_csv(const SimulationResult& r, const Scenario& s, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::invalid_argument("cannot open " + path + " for writing");
    out << std::setprecision(17);
    out << "t";
    for (int j = 1; j <= r.log.n; ++j) out << ",x_" << j;
    for (int j = 1; j <= r.log.m; ++j) out << ",u_" << j;
    for (int j = 1; j <= r.log.l; ++j) out << ",thetahat_" << j;
    out << ",V,threshold,event_flag\n";

    std::size_t iv = 0;
    for (std::size_t k = 0; k < r.log.size(); ++k) {
        while (iv + 1 < r.intervals.size() && k > r.intervals[iv].last_idx) ++iv;
        const IntervalInfo& info = r.intervals[iv];
        bool is_event = false;
        for (double te : r.log.event_times)
            if (std::abs(te - r.log.t[k]) <= 1e-12 * std::max(1.0, std::abs(te))) is_event = true;
        out << r.log.t[k];
        for (int j = 0; j < r.log.n; ++j) out << "," << r.log.x[k](j);
        for (int j = 0; j < r.log.m; ++j) out << "," << r.log.u[k](j);
        // the estimate in force at this sample (right-continuous)
        const Eigen::VectorXd& th =
            (k == info.last_idx && iv + 1 < r.intervals.size()) ? r.intervals[iv + 1].thetahat
                                                                : info.thetahat;
        for (int j = 0; j < r.log.l; ++j) out << "," << th(j);
        out << "," << s.ctrl.V(info.thetahat, r.log.x[k]) << "," << info.threshold << ","
            << (is_event ? 1 : 0) << "\n";
    }
}

void write_events_csv(const SimulationResult& r, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::invalid_argument("cannot open " + path + " for writing");
    out << std::setprecision(17);
    const int n = r.log.n, l = r.log.l;
    out << "index,tau,cause,mu,gram_rank,update_distance";
    for (int j = 1; j <= n; ++j) out << ",x_" << j;
    for (int j = 1; j <= l; ++j) out << ",thetahat_" << j;
    for (int a = 1; a <= l; ++a)
        for (int b = 1; b <= l; ++b) out << ",G_" << a << "_" << b;
    for (int j = 1; j <= l; ++j) out << ",Z_" << j;
    out << "\n";
    for (const auto& ev : r.events) {
        out << ev.index << "," << ev.tau << "," << to_string(ev.cause) << "," << ev.mu << ","
            << ev.gram_rank << "," << ev.update_distance;
        for (int j = 0; j < n; ++j) out << "," << ev.x(j);
        for (int j = 0; j < l; ++j) out << "," << ev.thetahat(j);
        for (int a = 0; a < l; ++a)
            for (int b = 0; b < l; ++b) out << "," << (ev.gram ? ev.gram->G(a, b) : 0.0);
        for (int j = 0; j < l; ++j) out << "," << (ev.gram ? ev.gram->Z(j) : 0.0);
        out << "\n";
    }
}

}  // namespace retrig
