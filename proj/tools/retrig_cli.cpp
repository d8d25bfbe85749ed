// Command-line front end: simulate a closed-loop scenario, run the
// observability checker, re-verify emitted CSV artifacts, or render a quick
// SVG plot of a trajectory file.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "CLI11.hpp"
#include "retrig/executive.hpp"
#include "retrig/observability.hpp"
#include "retrig/polybridge.hpp"

using namespace retrig;
using nlohmann::json;

namespace {

// ---------------------------------------------------------------- CSV input

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<double>> rows;  // numeric columns; NaN for blanks

    int col(const std::string& name) const {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return static_cast<int>(i);
        return -1;
    }
};

CsvTable read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    CsvTable tab;
    std::string line;
    if (!std::getline(in, line)) throw std::runtime_error(path + ": empty file");
    std::stringstream hs(line);
    std::string cell;
    while (std::getline(hs, cell, ',')) tab.header.push_back(cell);
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<double> row;
        std::stringstream ls(line);
        while (std::getline(ls, cell, ',')) {
            try {
                row.push_back(cell.empty() ? std::nan("") : std::stod(cell));
            } catch (const std::exception&) {
                row.push_back(std::nan(""));
            }
        }
        if (row.size() != tab.header.size())
            throw std::runtime_error(path + ": ragged row with " + std::to_string(row.size()) +
                                     " fields");
        tab.rows.push_back(std::move(row));
    }
    return tab;
}

std::vector<int> columns_with_prefix(const CsvTable& tab, const std::string& prefix) {
    std::vector<int> out;
    for (std::size_t i = 0; i < tab.header.size(); ++i)
        if (tab.header[i].rfind(prefix, 0) == 0) out.push_back(static_cast<int>(i));
    return out;
}

// ---------------------------------------------------------------- SVG plot

struct Series {
    std::string label;
    std::vector<double> t, v;
};

std::string svg_polyline(const std::vector<double>& xs, const std::vector<double>& ys,
                         const std::string& color) {
    std::ostringstream out;
    out << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.2\" points=\"";
    for (std::size_t i = 0; i < xs.size(); ++i) out << xs[i] << "," << ys[i] << " ";
    out << "\"/>\n";
    return out.str();
}

// |x(t)| on a log scale in the top pane, estimate traces below, dashed event
// markers across both panes.
void write_plot_svg(const std::string& path, const std::vector<double>& t,
                    const std::vector<double>& xnorm, const std::vector<Series>& thetahat,
                    const std::vector<double>& events) {
    const double W = 760, H = 520, ml = 64, mr = 16, mt = 20, gap = 40;
    const double pane_h = (H - mt - gap - 40) / 2.0;
    const double t0 = t.front(), t1 = t.back();
    auto sx = [&](double tv) { return ml + (W - ml - mr) * (tv - t0) / std::max(t1 - t0, 1e-300); };

    double lo = 1e300, hi = -1e300;
    for (double v : xnorm)
        if (v > 0.0) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    if (lo > hi) {
        lo = 1e-12;
        hi = 1.0;
    }
    lo = std::max(lo, hi * 1e-16);
    const double llo = std::log10(lo), lhi = std::log10(hi) + 1e-12;
    auto sy_log = [&](double v) {
        double u = (std::log10(std::max(v, lo)) - llo) / (lhi - llo);
        return mt + pane_h * (1.0 - u);
    };

    double th_lo = 1e300, th_hi = -1e300;
    for (const Series& s : thetahat)
        for (double v : s.v) {
            th_lo = std::min(th_lo, v);
            th_hi = std::max(th_hi, v);
        }
    if (th_lo > th_hi) {
        th_lo = 0.0;
        th_hi = 1.0;
    }
    if (th_hi - th_lo < 1e-9) {
        th_lo -= 0.5;
        th_hi += 0.5;
    }
    const double pane2_top = mt + pane_h + gap;
    auto sy_lin = [&](double v) {
        return pane2_top + pane_h * (1.0 - (v - th_lo) / (th_hi - th_lo));
    };

    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
        << "\" viewBox=\"0 0 " << W << " " << H << "\">\n"
        << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";

    // axes
    for (double top : {mt, pane2_top})
        out << "<rect x=\"" << ml << "\" y=\"" << top << "\" width=\"" << (W - ml - mr)
            << "\" height=\"" << pane_h << "\" fill=\"none\" stroke=\"#444\"/>\n";
    for (int d = static_cast<int>(std::ceil(llo)); d <= static_cast<int>(std::floor(lhi)); ++d) {
        double y = sy_log(std::pow(10.0, d));
        out << "<line x1=\"" << ml << "\" y1=\"" << y << "\" x2=\"" << (W - mr) << "\" y2=\"" << y
            << "\" stroke=\"#ddd\"/>\n"
            << "<text x=\"" << (ml - 6) << "\" y=\"" << (y + 4)
            << "\" font-size=\"11\" text-anchor=\"end\">1e" << d << "</text>\n";
    }
    out << "<text x=\"14\" y=\"" << (mt + pane_h / 2)
        << "\" font-size=\"12\" transform=\"rotate(-90 14 " << (mt + pane_h / 2)
        << ")\" text-anchor=\"middle\">|x(t)|</text>\n"
        << "<text x=\"14\" y=\"" << (pane2_top + pane_h / 2)
        << "\" font-size=\"12\" transform=\"rotate(-90 14 " << (pane2_top + pane_h / 2)
        << ")\" text-anchor=\"middle\">estimates</text>\n"
        << "<text x=\"" << (W / 2) << "\" y=\"" << (H - 8)
        << "\" font-size=\"12\" text-anchor=\"middle\">t</text>\n";

    // event markers
    for (double te : events) {
        double x = sx(te);
        out << "<line x1=\"" << x << "\" y1=\"" << mt << "\" x2=\"" << x << "\" y2=\""
            << (pane2_top + pane_h) << "\" stroke=\"#bbb\" stroke-dasharray=\"3,3\"/>\n";
    }

    std::vector<double> xs, ys;
    for (std::size_t i = 0; i < t.size(); ++i) {
        xs.push_back(sx(t[i]));
        ys.push_back(sy_log(xnorm[i]));
    }
    out << svg_polyline(xs, ys, "#1f4e9c");

    const char* colors[] = {"#b03030", "#2a7d2a", "#8050b0", "#b07820"};
    for (std::size_t s = 0; s < thetahat.size(); ++s) {
        xs.clear();
        ys.clear();
        for (std::size_t i = 0; i < thetahat[s].t.size(); ++i) {
            xs.push_back(sx(thetahat[s].t[i]));
            ys.push_back(sy_lin(thetahat[s].v[i]));
        }
        out << svg_polyline(xs, ys, colors[s % 4]);
        out << "<text x=\"" << (W - mr - 8) << "\" y=\"" << (pane2_top + 16 + 14 * s)
            << "\" font-size=\"11\" text-anchor=\"end\" fill=\"" << colors[s % 4] << "\">"
            << thetahat[s].label << "</text>\n";
    }
    out << "</svg>\n";
}

void plot_from_result(const SimulationResult& r, const std::string& path) {
    std::vector<double> t = r.log.t, xn;
    for (const auto& x : r.log.x) xn.push_back(x.norm());
    std::vector<Series> th(r.log.l);
    for (int j = 0; j < r.log.l; ++j) th[j].label = "thetahat_" + std::to_string(j + 1);
    std::size_t iv = 0;
    for (std::size_t i = 0; i < r.log.size(); ++i) {
        while (iv + 1 < r.intervals.size() && i > r.intervals[iv].last_idx) ++iv;
        for (int j = 0; j < r.log.l; ++j) {
            th[j].t.push_back(r.log.t[i]);
            th[j].v.push_back(r.intervals.empty() ? 0.0 : r.intervals[iv].thetahat(j));
        }
    }
    std::vector<double> events(r.log.event_times);
    write_plot_svg(path, t, xn, th, events);
}

// ---------------------------------------------------------------- simulate

int cmd_simulate(const std::string& config_path, bool quiet) {
    Scenario s = scenario_from_file(config_path);
    SimulationResult r = run_closed_loop(s);

    if (!quiet) {
        std::printf("scenario: %s (%s variant), t_final=%g\n", s.model_name.c_str(),
                    s.variant == Variant::LinearFilter ? "linear-filter" : "generic", s.t_final);
        std::printf("%5s %12s %-14s %10s %6s %12s\n", "event", "tau", "cause", "mu", "rank",
                    "|jump|");
        for (const EventRecord& ev : r.events)
            std::printf("%5d %12.6f %-14s %10.6f %6d %12.4e\n", ev.index, ev.tau,
                        to_string(ev.cause).c_str(), ev.mu, ev.gram_rank, ev.update_distance);
        if (r.t_id)
            std::printf("identification at t = %.6f\n", *r.t_id);
        else
            std::printf("no identification within the horizon\n");
        if (r.aborted) std::printf("run aborted: state left the finite range\n");
        for (const Verdict& v : r.verdicts)
            std::printf("  %-28s %s  (margin %.3e) %s\n", v.name.c_str(),
                        v.pass ? "pass" : "FAIL", v.margin, v.detail.c_str());
    }

    if (!s.trajectory_csv.empty()) write_trajectory_csv(r, s, s.trajectory_csv);
    if (!s.events_csv.empty()) write_events_csv(r, s.events_csv);
    if (!s.plot_svg.empty()) plot_from_result(r, s.plot_svg);
    return r.all_pass() && !r.aborted ? 0 : 2;
}

// ------------------------------------------------------- check-observability

PolyPlant poly_plant_from_config(const json& doc) {
    const json& model = doc.at("model");
    if (model.contains("name")) {
        const std::string name = model.at("name").get<std::string>();
        if (name == "example_4_2")
            return poly_example_4_2(model.value("c", 1.0), model.value("k1", 1.0),
                                    model.value("k2", 3.0));
        if (name == "example_4_3")
            return poly_example_4_3(model.value("k1", 1.0), model.value("k2", 2.0),
                                    model.value("k3", 3.0));
        throw std::invalid_argument("check-observability: unknown model name " + name);
    }
    // inline polynomial model: textual f, g, k plus the target rows of g
    PolyPlant plant;
    plant.n = model.at("n").get<int>();
    plant.m = model.at("m").get<int>();
    plant.l = model.at("l").get<int>();
    for (const auto& s : model.at("f"))
        plant.f.push_back(Polynomial::parse(plant.n + plant.m, s.get<std::string>()));
    for (const auto& s : model.at("g"))
        plant.g.push_back(Polynomial::parse(plant.n + plant.m, s.get<std::string>()));
    for (const auto& v : model.at("rows")) plant.rows.push_back(v.get<int>() - 1);  // 1-based in file
    for (const auto& s : model.at("k"))
        plant.k.push_back(Polynomial::parse(plant.l + plant.n, s.get<std::string>()));
    plant.validate();
    return plant;
}

int cmd_check_observability(const std::string& config_path, const std::string& summary_path) {
    std::ifstream in(config_path);
    if (!in) throw std::runtime_error("cannot open " + config_path);
    json doc = json::parse(in);

    PolyPlant plant = poly_plant_from_config(doc);
    const int draws = doc.value("draws", 16);
    const int J = doc.value("J", 2 * plant.n - 1);
    ZeroSetSettings zset;
    zset.seed = doc.value("seed", 2024ULL);

    std::mt19937_64 rng(zset.seed);
    std::uniform_real_distribution<double> par(-2.0, 2.0);
    auto random_vec = [&](int dim) {
        Eigen::VectorXd v(dim);
        for (int i = 0; i < dim; ++i) v(i) = par(rng);
        return v;
    };
    Eigen::VectorXd theta(plant.l);
    if (doc.contains("theta")) {
        auto v = doc.at("theta").get<std::vector<double>>();
        if (static_cast<int>(v.size()) != plant.l)
            throw std::invalid_argument("check-observability: theta size != l");
        theta = Eigen::Map<Eigen::VectorXd>(v.data(), v.size());
    } else {
        theta = random_vec(plant.l);
    }

    json summary;
    summary["model"] = doc.at("model");
    summary["J"] = J;
    summary["draws"] = json::array();
    int certified_draws = 0;

    for (int d = 0; d < draws; ++d) {
        std::vector<Eigen::VectorXd> thetahats;
        for (int s = 0; s < plant.l; ++s) thetahats.push_back(random_vec(plant.l));
        ObservabilityReport rep = run_observability_algorithm(plant, theta, thetahats, J, zset);

        std::printf("draw %2d: %s (N = %d)\n", d + 1,
                    rep.certified ? "certified" : "not certified", rep.N);
        json jd;
        jd["certified"] = rep.certified;
        jd["steps"] = json::array();
        for (const ObservabilityStep& st : rep.steps) {
            std::printf("  step %d: holds {", st.step);
            for (std::size_t i = 0; i < st.holds.size(); ++i)
                std::printf("%s%d", i ? ", " : "", st.holds[i] + 1);
            std::printf("}  pinned {");
            for (std::size_t i = 0; i < st.pinned.size(); ++i)
                std::printf("%s%d", i ? ", " : "", st.pinned[i] + 1);
            std::printf("}\n");
            json js;
            js["step"] = st.step;
            for (int i : st.holds) js["holds"].push_back(i + 1);
            for (int i : st.pinned) js["pinned"].push_back(i + 1);
            for (std::size_t i = 0; i < st.certificates.size(); ++i) {
                const ZeroSetCertificate& c = st.certificates[i];
                json jc;
                jc["index"] = i + 1;
                jc["verdict"] = to_string(c.verdict);
                jc["backend"] = to_string(c.backend);
                jc["certifying"] = c.certifying;
                if (c.witness) {
                    jc["witness"] = std::vector<double>(c.witness->data(),
                                                       c.witness->data() + c.witness->size());
                    jc["witness_residual"] = c.witness_residual;
                    std::printf("    index %zu witness at |x| = %.3g (residual %.2e)\n", i + 1,
                                c.witness->norm(), c.witness_residual);
                }
                js["certificates"].push_back(jc);
            }
            jd["steps"].push_back(js);
        }
        if (rep.first_uncovered)
            std::printf("  first uncovered index: %d\n", *rep.first_uncovered + 1);
        summary["draws"].push_back(jd);
        if (rep.certified) ++certified_draws;
    }
    std::printf("%d / %d draws certified\n", certified_draws, draws);
    summary["certified_draws"] = certified_draws;

    if (!summary_path.empty()) {
        std::ofstream out(summary_path);
        out << summary.dump(2) << "\n";
    } else {
        std::cout << summary.dump() << "\n";
    }
    return certified_draws == draws ? 0 : 2;
}

// ----------------------------------------------------------------- verify

int cmd_verify(const std::string& events_path, const std::string& traj_path,
               std::optional<double> T, std::vector<double> theta) {
    const CsvTable ev = read_csv(events_path);
    const CsvTable tr = read_csv(traj_path);
    int failures = 0;
    auto check = [&](bool ok, const std::string& what, const std::string& detail) {
        std::printf("  %-36s %s%s%s\n", what.c_str(), ok ? "pass" : "FAIL",
                    detail.empty() ? "" : "  ", detail.c_str());
        if (!ok) ++failures;
    };

    const int c_t = tr.col("t"), c_V = tr.col("V"), c_thr = tr.col("threshold"),
              c_flag = tr.col("event_flag");
    if (c_t < 0 || c_V < 0 || c_thr < 0 || c_flag < 0)
        throw std::runtime_error("trajectory file lacks the expected columns");
    const std::vector<int> c_th = columns_with_prefix(tr, "thetahat_");

    // time strictly increasing
    bool mono = true;
    for (std::size_t i = 1; i < tr.rows.size(); ++i)
        mono = mono && tr.rows[i][c_t] > tr.rows[i - 1][c_t];
    check(mono, "time strictly increasing", "");

    // V <= threshold on every row (guarded intervals carry their bound;
    // unguarded rows emit threshold = V upper envelope anyway)
    double worst = 0.0;
    for (const auto& row : tr.rows)
        if (!std::isnan(row[c_thr])) worst = std::max(worst, row[c_V] - row[c_thr]);
    check(worst <= 1e-6, "V within trigger threshold", "worst margin " + std::to_string(worst));

    // estimates piecewise constant between event rows
    bool pw = true;
    for (std::size_t i = 1; i < tr.rows.size(); ++i) {
        if (tr.rows[i][c_flag] != 0.0) continue;  // new interval starts here
        for (int c : c_th) pw = pw && tr.rows[i][c] == tr.rows[i - 1][c];
    }
    check(pw, "estimate frozen between events", "");

    // event rows of the trajectory match the events file
    const int e_tau = ev.col("tau");
    if (e_tau < 0) throw std::runtime_error("events file lacks a tau column");
    std::vector<double> taus;
    for (const auto& row : ev.rows) taus.push_back(row[e_tau]);
    std::size_t flagged = 0;
    bool aligned = true;
    for (const auto& row : tr.rows)
        if (row[c_flag] != 0.0) {
            bool hit = false;
            for (double tau : taus)
                hit = hit || std::abs(tau - row[c_t]) <= 1e-9 * std::max(1.0, std::abs(tau));
            aligned = aligned && hit;
            ++flagged;
        }
    check(aligned && flagged == taus.size(), "event rows align with events file",
          std::to_string(flagged) + " flags / " + std::to_string(taus.size()) + " events");

    if (T) {
        bool dwell = true;
        for (std::size_t i = 1; i < taus.size(); ++i)
            dwell = dwell && taus[i] - taus[i - 1] <= *T + 1e-9;
        check(dwell, "dwell cap respected", "T = " + std::to_string(*T));
    }

    if (!theta.empty()) {
        // jump bound against the supplied true parameter, and the Gram
        // identity on the dumped (G, Z) blocks
        std::vector<int> e_th = columns_with_prefix(ev, "thetahat_");
        bool dims = e_th.size() == theta.size();
        check(dims, "parameter dimension matches", "");
        if (dims) {
            const double tn = std::sqrt(
                std::inner_product(theta.begin(), theta.end(), theta.begin(), 0.0));
            bool jump_ok = true;
            for (std::size_t i = 1; i < ev.rows.size(); ++i) {
                double jump = 0.0, gap = 0.0;
                for (std::size_t j = 0; j < theta.size(); ++j) {
                    jump += std::pow(ev.rows[i][e_th[j]] - ev.rows[i - 1][e_th[j]], 2);
                    gap += std::pow(theta[j] - ev.rows[i - 1][e_th[j]], 2);
                }
                jump_ok = jump_ok && std::sqrt(jump) <= std::sqrt(gap) + 1e-8 * (1.0 + tn);
            }
            check(jump_ok, "estimate jump bound", "");

            double gram_worst = 0.0;
            bool have_gram = true;
            const std::size_t l = theta.size();
            for (const auto& row : ev.rows) {
                double rn = 0.0, zn = 0.0;
                for (std::size_t a = 0; a < l; ++a) {
                    int cz = ev.col("Z_" + std::to_string(a + 1));
                    if (cz < 0) {
                        have_gram = false;
                        break;
                    }
                    double acc = 0.0;
                    for (std::size_t b = 0; b < l; ++b) {
                        int cg = ev.col("G_" + std::to_string(a + 1) + "_" + std::to_string(b + 1));
                        if (cg < 0) have_gram = false;
                        else if (!std::isnan(row[cg])) acc += row[cg] * theta[b];
                    }
                    if (!std::isnan(row[cz])) {
                        rn += std::pow(acc - row[cz], 2);
                        zn += row[cz] * row[cz];
                    }
                }
                if (have_gram)
                    gram_worst = std::max(gram_worst, std::sqrt(rn) / (1.0 + std::sqrt(zn)));
            }
            check(have_gram && gram_worst <= 1e-6, "gram identity on dumped blocks",
                  "worst residual " + std::to_string(gram_worst));
        }
    }

    std::printf("%d check(s) failed\n", failures);
    return failures == 0 ? 0 : 2;
}

// ------------------------------------------------------------------- plot

int cmd_plot(const std::string& traj_path, const std::string& out_path) {
    const CsvTable tr = read_csv(traj_path);
    const int c_t = tr.col("t"), c_flag = tr.col("event_flag");
    if (c_t < 0) throw std::runtime_error("trajectory file lacks a t column");
    const std::vector<int> c_x = columns_with_prefix(tr, "x_");
    const std::vector<int> c_th = columns_with_prefix(tr, "thetahat_");
    if (c_x.empty()) throw std::runtime_error("trajectory file lacks state columns");

    std::vector<double> t, xn, events;
    std::vector<Series> th(c_th.size());
    for (std::size_t j = 0; j < c_th.size(); ++j) th[j].label = tr.header[c_th[j]];
    for (const auto& row : tr.rows) {
        t.push_back(row[c_t]);
        double n2 = 0.0;
        for (int c : c_x) n2 += row[c] * row[c];
        xn.push_back(std::sqrt(n2));
        for (std::size_t j = 0; j < c_th.size(); ++j) {
            th[j].t.push_back(row[c_t]);
            th[j].v.push_back(row[c_th[j]]);
        }
        if (c_flag >= 0 && row[c_flag] != 0.0) events.push_back(row[c_t]);
    }
    write_plot_svg(out_path, t, xn, th, events);
    std::printf("wrote %s (%zu samples, %zu events)\n", out_path.c_str(), t.size(),
                events.size());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"event-triggered adaptive control simulator and verifier"};
    app.require_subcommand(1);

    std::string config_path, events_path, traj_path, out_path, summary_path;
    bool quiet = false;
    std::optional<double> T;
    std::vector<double> theta;

    CLI::App* sim = app.add_subcommand("simulate", "run a closed-loop scenario config");
    sim->add_option("config", config_path, "scenario config (JSON)")->required();
    sim->add_flag("-q,--quiet", quiet, "suppress the event table");

    CLI::App* obs =
        app.add_subcommand("check-observability", "run the stepwise parameter-observability test");
    obs->add_option("config", config_path, "checker config (JSON)")->required();
    obs->add_option("-o,--summary", summary_path, "write the JSON summary here");

    CLI::App* ver = app.add_subcommand("verify", "re-check emitted CSV artifacts");
    ver->add_option("events_csv", events_path, "events file")->required();
    ver->add_option("trajectory_csv", traj_path, "trajectory file")->required();
    double T_flag = 0.0;
    CLI::Option* T_opt = ver->add_option("--T", T_flag, "dwell cap used by the run");
    ver->add_option("--theta", theta, "true parameter vector for the bound checks");

    CLI::App* plt = app.add_subcommand("plot", "render a trajectory file as SVG");
    plt->add_option("trajectory_csv", traj_path, "trajectory file")->required();
    plt->add_option("-o,--output", out_path, "output SVG path")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (sim->parsed()) return cmd_simulate(config_path, quiet);
        if (obs->parsed()) return cmd_check_observability(config_path, summary_path);
        if (ver->parsed()) {
            if (T_opt->count()) T = T_flag;
            return cmd_verify(events_path, traj_path, T, theta);
        }
        if (plt->parsed()) return cmd_plot(traj_path, out_path);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
