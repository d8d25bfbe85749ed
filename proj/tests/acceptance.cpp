// Acceptance suite: one line of output per criterion, nonzero exit when any
// criterion fails. Each criterion is self-contained and states its measured
// margins in the detail column.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "retrig/estimator.hpp"
#include "retrig/executive.hpp"
#include "retrig/observability.hpp"
#include "retrig/polynomial.hpp"

using namespace retrig;

namespace {

struct Line {
    int id;
    std::string name;
    bool pass;
    std::string detail;
};

std::vector<Line> lines;

void report(int id, const std::string& name, bool pass, const std::string& detail) {
    lines.push_back({id, name, pass, detail});
}

double now_seconds() {
    using clk = std::chrono::steady_clock;
    static const clk::time_point t0 = clk::now();
    return std::chrono::duration<double>(clk::now() - t0).count();
}

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    return buf;
}

nlohmann::json planar_doc(double t_final, double dt_log = 0.0) {
    nlohmann::json doc = {
        {"model", {{"name", "example_4_2"}, {"c", 1.0}, {"k1", 1.0}, {"k2", 3.0}}},
        {"theta_true", {2.0}},
        {"thetahat0", {0.0}},
        {"x0", {1.0, 1.0}},
        {"T", 1.0},
        {"a_coeff", 0.1},
        {"Ntilde", 2},
        {"t_final", t_final}};
    if (dt_log > 0.0) doc["solver"] = {{"dt_log", dt_log}};
    return doc;
}

nlohmann::json linear_doc(double theta, double thetahat0, const Eigen::Vector2d& x0,
                          double t_final, const std::string& variant) {
    return {{"model",
             {{"name", "linear"},
              {"A", {{0.0, 1.0}, {0.0, 0.0}}},
              {"B", {{0.0}, {1.0}}},
              {"C", {{{0.0, 0.0}, {1.0, 1.0}}}},
              {"gain_table", {{"K0", {{-1.0, -3.0}}}, {"K", {{{-1.0, -1.0}}}}}}}},
            {"theta_true", {theta}},
            {"thetahat0", {thetahat0}},
            {"x0", {x0(0), x0(1)}},
            {"T", 1.0},
            {"a_coeff", 0.1},
            {"Ntilde", 2},
            {"t_final", t_final},
            {"variant", variant}};
}

double max_residual(const SimulationResult& r, double theta) {
    double worst = 0.0;
    for (const EventRecord& ev : r.events) {
        if (!ev.gram) continue;
        Eigen::VectorXd th(1);
        th << theta;
        double rel = (ev.gram->G * th - ev.gram->Z).norm() / (1.0 + ev.gram->Z.norm());
        worst = std::max(worst, rel);
    }
    return worst;
}

const Verdict* find_verdict(const SimulationResult& r, const std::string& name) {
    for (const Verdict& v : r.verdicts)
        if (v.name == name) return &v;
    return nullptr;
}

void criterion_1_2_3_10() {
    const double t_start = now_seconds();
    SimulationResult base = run_closed_loop(scenario_from_config(planar_doc(11.0)));
    const double elapsed = now_seconds() - t_start;

    // 1: finite-time identification at the first event
    {
        bool ok = base.events.size() >= 2;
        double tau1 = ok ? base.events[1].tau : -1.0;
        double err = ok ? std::abs(base.events[1].thetahat(0) - 2.0) : 1e300;
        ok = ok && tau1 <= 1.0 && err <= 1e-6 && elapsed < 5.0;
        report(1, "finite-time identification", ok,
               "tau1=" + fmt(tau1) + " |thetahat-theta|=" + fmt(err) + " wall=" + fmt(elapsed) +
                   "s");
    }

    // 2: post-identification gaps of exactly T, estimate constant; matched
    // start produces zero updates over 10 events
    {
        bool ok = base.t_id.has_value();
        double worst_gap = 0.0, worst_drift = 0.0;
        if (ok) {
            std::size_t id_idx = 1;
            for (std::size_t i = 2; i < base.events.size(); ++i) {
                if (base.events[i].tau <= *base.t_id) id_idx = i;
            }
            for (std::size_t i = id_idx + 1; i < base.events.size(); ++i) {
                worst_gap = std::max(
                    worst_gap, std::abs(base.events[i].tau - base.events[i - 1].tau - 1.0));
                worst_drift = std::max(
                    worst_drift, (base.events[i].thetahat - base.events[id_idx].thetahat).norm());
            }
            ok = worst_gap <= 1e-9 && worst_drift <= 1e-10;
        }
        nlohmann::json matched = planar_doc(10.5);
        matched["thetahat0"] = {2.0};
        SimulationResult mr = run_closed_loop(scenario_from_config(matched));
        double worst_update = 0.0;
        for (const EventRecord& ev : mr.events) worst_update = std::max(worst_update, ev.update_distance);
        ok = ok && mr.events.size() >= 10 && worst_update <= 1e-10;
        report(2, "post-identification behavior", ok,
               "gap dev=" + fmt(worst_gap) + " drift=" + fmt(worst_drift) +
                   " matched-run update=" + fmt(worst_update) + " over " +
                   std::to_string(mr.events.size()) + " events");
    }

    // 3: Gram identity residual bound, plus the dt_log halving ratio
    {
        double r1 = max_residual(base, 2.0);
        SimulationResult half = run_closed_loop(scenario_from_config(planar_doc(11.0, 0.0025)));
        double r2 = max_residual(half, 2.0);
        double ratio = r2 > 0.0 ? r1 / r2 : 0.0;
        bool bound_ok = r1 <= 1e-6;
        bool ratio_ok = ratio >= 3.5 && ratio <= 4.5;
        report(3, "gram identity residual", bound_ok && ratio_ok,
               "max|G*theta-Z|/(1+|Z|)=" + fmt(r1) + " (bound " +
                   (bound_ok ? "ok" : "VIOLATED") + "), halving ratio=" + fmt(ratio) +
                   " want [3.5,4.5]" +
                   (ratio_ok ? ""
                             : " -- residual sits at rounding level because the augmented-state "
                               "integrals keep the identity exact per log node, so no dt^2 "
                               "scaling is observable"));
    }

    // 10: empirical decay-rate fit
    {
        DecayFit fit = fit_decay(base, base.t_id.value_or(1.0));
        const double slow = (3.0 - std::sqrt(5.0)) / 2.0;  // 0.38197
        bool ok = std::abs(fit.omega - slow) <= 0.1 * slow;

        SimulationResult analytic;
        analytic.log.n = 1;
        analytic.log.m = 1;
        analytic.log.l = 1;
        for (int i = 0; i <= 1000; ++i) {
            double t = 0.005 * i;
            analytic.log.t.push_back(t);
            analytic.log.x.push_back(Eigen::VectorXd::Constant(1, std::exp(-t)));
            analytic.log.u.push_back(Eigen::VectorXd::Zero(1));
            analytic.log.F.push_back(Eigen::VectorXd::Zero(1));
            analytic.log.Gam.push_back(Eigen::MatrixXd::Zero(1, 1));
        }
        DecayFit unit = fit_decay(analytic, 0.0);
        ok = ok && std::abs(unit.omega - 1.0) <= 1e-6;
        report(10, "exponential regulation", ok,
               "fitted omega=" + fmt(fit.omega) + " target=" + fmt(slow) +
                   ", analytic oracle omega=" + fmt(unit.omega));
    }
}

void criterion_4() {
    // the projection example, exactly
    Eigen::MatrixXd Gp = Eigen::MatrixXd::Zero(2, 2);
    Gp(0, 0) = 1.0;
    Eigen::VectorXd Zp(2), prevp(2);
    Zp << 2.0, 0.0;
    prevp << 5.0, 7.0;
    EstimateUpdate ex = ls_update(GramSystem::make(Gp, Zp, 0.0, 1.0), prevp);
    bool ok = std::abs(ex.thetahat_new(0) - 2.0) == 0.0 && std::abs(ex.thetahat_new(1) - 7.0) == 0.0;

    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> coef(-2.0, 2.0);
    std::uniform_int_distribution<int> dim_pick(1, 3);
    double worst = 0.0;
    for (int rep = 0; rep < 200 && ok; ++rep) {
        int l = dim_pick(rng);
        int rank = static_cast<int>(rng() % (l + 1));
        // resample until the nonzero spectrum sits well away from the rank
        // threshold: near-threshold directions amplify rounding in both the
        // estimator and the oracle and test conditioning, not optimality
        Eigen::MatrixXd G;
        for (;;) {
            Eigen::MatrixXd H = Eigen::MatrixXd::Zero(std::max(rank, 1), l);
            for (int i = 0; i < rank; ++i)
                for (int j = 0; j < l; ++j) H(i, j) = coef(rng);
            G = H.transpose() * H;
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(G);
            bool good = true;
            for (int j = 0; j < l; ++j) {
                double lam = es.eigenvalues()(j), lmax = es.eigenvalues()(l - 1);
                if (lam > 1e-12 * lmax && lam < 1e-4 * lmax) good = false;
            }
            if (good) break;
        }
        Eigen::VectorXd truth(l), prev(l);
        for (int j = 0; j < l; ++j) {
            truth(j) = coef(rng);
            prev(j) = coef(rng);
        }
        GramSystem gs = GramSystem::make(G, G * truth, 0.0, 1.0);
        EstimateUpdate up = ls_update(gs, prev);

        // brute force: walk the feasible set {particular + nullspace combo} on
        // a shrinking grid and keep the closest point to prev
        Eigen::JacobiSVD<Eigen::MatrixXd> svd(G, Eigen::ComputeFullU | Eigen::ComputeFullV);
        Eigen::VectorXd sv = svd.singularValues();
        double smax = sv.size() ? sv(0) : 0.0;
        Eigen::VectorXd xp = Eigen::VectorXd::Zero(l);
        std::vector<Eigen::VectorXd> null_basis;
        for (int j = 0; j < sv.size(); ++j) {
            if (smax > 0.0 && sv(j) > 1e-9 * smax)
                xp += svd.matrixV().col(j) * (svd.matrixU().col(j).dot(gs.Z) / sv(j));
            else
                null_basis.push_back(svd.matrixV().col(j));
        }
        const int nb = static_cast<int>(null_basis.size());
        Eigen::VectorXd center = Eigen::VectorXd::Zero(std::max(1, nb));
        double span = 8.0;
        for (int pass = 0; pass < 40 && nb > 0; ++pass) {
            const int steps = 9;
            std::vector<int> idx(nb, 0);
            Eigen::VectorXd best_center = center;
            long double best_d = 1e300L;
            bool done = false;
            while (!done) {
                Eigen::VectorXd cc(nb);
                for (int b = 0; b < nb; ++b)
                    cc(b) = center(b) + span * (idx[b] - steps / 2) / double(steps / 2);
                // extended precision keeps the comparison meaningful once the
                // valley is flatter than double rounding
                long double d = 0.0L;
                for (int c = 0; c < l; ++c) {
                    long double cand_c = xp(c);
                    for (int b = 0; b < nb; ++b)
                        cand_c += (long double)cc(b) * (long double)null_basis[b](c);
                    long double dd = cand_c - (long double)prev(c);
                    d += dd * dd;
                }
                if (d < best_d) {
                    best_d = d;
                    best_center = cc;
                }
                int b = 0;
                for (; b < nb; ++b) {
                    if (++idx[b] < steps) break;
                    idx[b] = 0;
                }
                done = (b == nb);
            }
            center = best_center;
            span /= 2.0;
        }
        Eigen::VectorXd best = xp;
        for (int b = 0; b < nb; ++b) best += center(b) * null_basis[b];
        worst = std::max(worst, (up.thetahat_new - best).norm());
    }
    ok = ok && worst <= 1e-8;
    report(4, "update optimality", ok,
           "projection example exact, worst |update - brute force|=" + fmt(worst) +
               " over 200 instances");
}

void criteria_5_6() {
    std::mt19937_64 rng(77);
    std::uniform_real_distribution<double> u01(0.0, 1.0);
    double worst_jump = 0.0, worst_growth = 0.0, worst_lyap = 0.0;
    int violations = 0, ran = 0;
    for (int rep = 0; rep < 20; ++rep) {
        SimulationResult r;
        if (rep % 2 == 0) {
            nlohmann::json doc = {
                {"model",
                 {{"name", "example_4_2"},
                  {"c", 0.5 + u01(rng)},
                  {"k1", 0.5 + 1.5 * u01(rng)},
                  {"k2", 2.0 + 2.0 * u01(rng)}}},
                {"theta_true", {-2.0 + 4.0 * u01(rng)}},
                {"thetahat0", {-1.0 + 2.0 * u01(rng)}},
                {"x0", {-2.0 + 4.0 * u01(rng), -2.0 + 4.0 * u01(rng)}},
                {"T", 1.0},
                {"a_coeff", 0.05 + 0.2 * u01(rng)},
                {"Ntilde", 2},
                {"t_final", 5.0}};
            r = run_closed_loop(scenario_from_config(doc));
        } else {
            Eigen::Vector2d x0(-2.0 + 4.0 * u01(rng), -2.0 + 4.0 * u01(rng));
            std::string variant = (rep % 4 == 1) ? "generic" : "linear_filter";
            r = run_closed_loop(scenario_from_config(linear_doc(
                -1.5 + 3.0 * u01(rng), -1.0 + 2.0 * u01(rng), x0, 5.0, variant)));
        }
        ++ran;
        const Verdict* jump = find_verdict(r, "estimate_jump_bound_3_14");
        const Verdict* growth = find_verdict(r, "error_growth_bound_3_15");
        const Verdict* lyap = find_verdict(r, "lyapunov_bound_3_8");
        if (!jump || !growth || !lyap || !jump->pass || !growth->pass || !lyap->pass) ++violations;
        if (jump) worst_jump = std::max(worst_jump, jump->margin);
        if (growth) worst_growth = std::max(worst_growth, growth->margin);
        if (lyap) worst_lyap = std::max(worst_lyap, lyap->margin);
    }
    report(5, "jump bounds on batch", violations == 0,
           std::to_string(ran) + " scenarios, worst jump margin=" + fmt(worst_jump) +
               ", worst growth margin=" + fmt(worst_growth));
    report(6, "inter-event lyapunov bound", violations == 0 && worst_lyap <= 0.0,
           "worst margin=" + fmt(worst_lyap) + " across the same batch");
}

void criterion_7() {
    Eigen::VectorXd theta(1), z(1);
    theta << 2.0;
    z << 0.4;

    double t0 = now_seconds();
    ObservabilityReport good =
        run_observability_algorithm(poly_example_4_2(1.0, 1.0, 3.0), theta, {z}, 3, {});
    double t_good = now_seconds() - t0;

    t0 = now_seconds();
    ObservabilityReport bad =
        run_observability_algorithm(poly_example_4_2(1.0, 1.0, 2.0), theta, {z}, 3, {});
    double t_bad = now_seconds() - t0;

    bool ok = good.certified && !bad.certified && t_good < 2.0 && t_bad < 2.0;
    double line_dev = 1e300, resid = 1e300;
    if (!bad.certified && !bad.steps.empty() && !bad.steps[0].certificates.empty()) {
        const ZeroSetCertificate& c = bad.steps[0].certificates[0];
        if (c.witness) {
            const Eigen::VectorXd& w = *c.witness;
            line_dev = std::abs(w(0) + 1.0 * w(1)) / w.norm();  // x1 = -c x2 with c = 1
            resid = c.witness_residual;
        }
    }
    ok = ok && line_dev <= 1e-8 && resid < 1e-10;
    report(7, "observability gain boundary", ok,
           "(1,1,3) certified, (1,1,2) refused, witness on x1=-c*x2 (dev=" + fmt(line_dev) +
               ", resid=" + fmt(resid) + "), " + fmt(std::max(t_good, t_bad)) + "s/verdict");
}

void criterion_8() {
    PolyPlant plant = poly_example_4_3(1.0, 2.0, 3.0);
    std::mt19937_64 rng(4242);
    std::uniform_real_distribution<double> par(-2.0, 2.0);
    Eigen::VectorXd theta(2);
    theta << 0.8, -0.6;
    int good_draws = 0;
    bool ok = true;
    while (good_draws < 16) {
        Eigen::VectorXd z1(2), z2(2);
        z1 << par(rng), par(rng);
        z2 << par(rng), par(rng);
        if (std::abs(z1(1) - theta(1)) < 1e-2) continue;  // need z2 != theta2
        ++good_draws;
        ObservabilityReport rep = run_observability_algorithm(plant, theta, {z1, z2}, 5, {});
        bool step1 = rep.steps.size() >= 1 && rep.steps[0].holds == std::vector<int>{1};
        bool step2 = false;
        if (rep.steps.size() >= 2)
            for (int i : rep.steps[1].holds) step2 |= (i == 0);
        ok = ok && step1 && step2 && rep.certified;
    }

    // the Lie chain of the second parameter against the closed-form display
    Eigen::VectorXd z(2);
    z << theta(0), 1.1;
    PolyVectorField F = plant.closed_loop(z, theta);
    Polynomial g2 = plant.g_comp(1, z);
    double d0 = g2.coeff_distance(Polynomial::parse(3, "x1^2"));
    double d1 = repeated_lie(g2, F, 1).coeff_distance(Polynomial::parse(3, "2*x1*x2"));
    Polynomial expect2 = Polynomial::parse(3, "2*x2^2 + 2*x1^3 + 2*x1*x3") +
                         2.0 * theta(0) * Polynomial::parse(3, "x1*x2");
    double d2 = repeated_lie(g2, F, 2).coeff_distance(expect2);
    double chain_dev = std::max({d0, d1, d2});
    ok = ok && chain_dev <= 1e-10;
    report(8, "stepwise index sets", ok,
           "16 draws give I1={2} and step 2 covers index 1; chain coefficient dev=" +
               fmt(chain_dev));
}

void criterion_9() {
    Eigen::Vector2d x0(1.0, -0.5);
    Scenario filt = scenario_from_config(linear_doc(0.8, -0.5, x0, 3.0, "linear_filter"));
    SimulationResult rf = run_closed_loop(filt);

    // (a) generic vs filter Gram on the identical log and window
    double gram_dev = 1e300;
    if (rf.events.size() >= 2 && rf.events[1].gram) {
        const GramSystem& a = *rf.events[1].gram;
        GramSystem b = gram_pair(rf.log, a.mu, a.tau);
        double scale = std::max(a.G.norm(), b.G.norm()) + std::max(a.Z.norm(), b.Z.norm());
        gram_dev = ((a.G - b.G).norm() + (a.Z - b.Z).norm()) / scale;
    }

    // (b) generic Lyapunov guard vs radius guard locate the same event
    SimulationResult rg =
        run_closed_loop(scenario_from_config(linear_doc(0.8, -0.5, x0, 3.0, "generic")));
    double event_dev = 1e300;
    if (rf.events.size() >= 2 && rg.events.size() >= 2)
        event_dev = std::abs(rf.events[1].tau - rg.events[1].tau);

    // (c) identification no later than T
    double id_err = 1e300;
    for (const EventRecord& ev : rf.events)
        if (ev.index > 0 && ev.tau <= 1.0 + 1e-9)
            id_err = std::min(id_err, std::abs(ev.thetahat(0) - 0.8));

    IntegratorSettings def;
    bool ok = gram_dev <= 1e-6 && event_dev <= 2.0 * def.tol_event && id_err <= 1e-6 * (1.0 + 0.8);
    report(9, "linear specialization", ok,
           "filter/generic gram dev=" + fmt(gram_dev) + ", event time dev=" + fmt(event_dev) +
               ", |thetahat-theta| at T=" + fmt(id_err));
}

void criterion_11() {
    SegmentDynamics dyn = SegmentDynamics::plain(1, [](const Eigen::VectorXd& x) -> Eigen::VectorXd {
        return -x;
    });
    IntegratorSettings settings;
    settings.rtol = 1e-12;
    GuardFn guard = [](double, const Eigen::VectorXd& x) { return 0.5 - x(0); };
    AugState st = AugState::initial(1, 1, 1, Eigen::VectorXd::Ones(1), false);
    TrajectoryLog log;
    log.n = 1;
    log.m = 1;
    log.l = 1;
    StopReason stop = integrate_segment(dyn, st, 0.0, 5.0, &guard, settings, log);
    double cross_err = std::abs(stop.t_stop - std::log(2.0));

    // cumulative-integral fidelity on an adaptive planar segment
    SimulationResult base = run_closed_loop(scenario_from_config(planar_doc(3.0)));
    Eigen::VectorXd th(1), x0(2);
    th << 2.0;
    x0 << 1.0, 1.0;
    double worst = 0.0;
    for (std::size_t i = 0; i < base.log.size(); ++i) {
        double resid =
            (base.log.x[i] - x0 - base.log.F[i] - base.log.Gam[i] * th).norm() /
            (1.0 + base.log.x[i].norm());
        worst = std::max(worst, resid);
    }
    bool ok = stop.kind == StopKind::GuardCrossed && cross_err <= 1e-10 && worst <= 1e-8;
    report(11, "integrator oracle", ok,
           "|t*-ln2|=" + fmt(cross_err) + ", worst integral residual=" + fmt(worst));
}

}  // namespace

int main() {
    criterion_1_2_3_10();
    criterion_4();
    criteria_5_6();
    criterion_7();
    criterion_8();
    criterion_9();
    criterion_11();

    std::stable_sort(lines.begin(), lines.end(),
                     [](const Line& a, const Line& b) { return a.id < b.id; });
    int failures = 0;
    for (const Line& ln : lines) {
        if (!ln.pass) ++failures;
        std::printf("criterion %2d %-32s %s  (%s)\n", ln.id, ln.name.c_str(),
                    ln.pass ? "PASS" : "FAIL", ln.detail.c_str());
    }
    std::printf("%zu criteria, %d failed\n", lines.size(), failures);
    return failures == 0 ? 0 : 1;
}
