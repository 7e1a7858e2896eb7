#pragma once

// Batch experiment driver: a line-based key = value config (CLI flags
// override file keys), JSON reports embedding the config verbatim, and CSV
// series for plotting. One experiment per invocation.

#include <fstream>
#include <map>
#include <sstream>
#include <string>

#include <json.hpp>

#include "critlab/blowup.hpp"
#include "critlab/expr.hpp"
#include "critlab/functional.hpp"
#include "critlab/green.hpp"
#include "critlab/search.hpp"
#include "critlab/testfn.hpp"

namespace critlab {

struct ExperimentConfig {
    std::map<std::string, std::string> kv;
    std::string verbatim;  // the config as read, plus override lines

    bool has(const std::string& k) const { return kv.count(k) > 0; }
    std::string get(const std::string& k, const std::string& dflt = "") const {
        auto it = kv.find(k);
        return it == kv.end() ? dflt : it->second;
    }
    double num(const std::string& k, double dflt) const {
        auto it = kv.find(k);
        if (it == kv.end()) return dflt;
        try {
            return std::stod(it->second);
        } catch (...) {
            throw ConfigError("config key '" + k + "' is not a number: " + it->second);
        }
    }
    int integer(const std::string& k, int dflt) const {
        return static_cast<int>(num(k, dflt));
    }
    std::vector<double> list(const std::string& k, const std::string& dflt) const {
        std::vector<double> out;
        std::stringstream ss(get(k, dflt));
        std::string item;
        while (std::getline(ss, item, ',')) {
            if (item.empty()) continue;
            out.push_back(std::stod(item));
        }
        return out;
    }

    void set(const std::string& k, const std::string& v) {
        kv[k] = v;
        verbatim += k + " = " + v + "\n";
    }
};

inline ExperimentConfig load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file: " + path);
    ExperimentConfig cfg;
    std::string line;
    while (std::getline(in, line)) {
        cfg.verbatim += line + "\n";
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        auto trim = [](std::string s) {
            const auto a = s.find_first_not_of(" \t\r");
            if (a == std::string::npos) return std::string();
            const auto b = s.find_last_not_of(" \t\r");
            return s.substr(a, b - a + 1);
        };
        const std::string key = trim(line.substr(0, eq));
        const std::string val = trim(line.substr(eq + 1));
        if (!key.empty()) cfg.kv[key] = val;
    }
    return cfg;
}

namespace cli_detail {

inline ManifoldPtr make_manifold(const ExperimentConfig& cfg) {
    const std::string kind = cfg.get("manifold", "sphere");
    const int dim = cfg.integer("dim", 3);
    if (kind == "sphere") return ManifoldModel::sphere(dim, cfg.integer("nodes", 4096));
    if (kind == "ball")
        return ManifoldModel::ball(dim, cfg.num("radius", 1.0), cfg.integer("nodes", 4096));
    if (kind == "torus")
        return ManifoldModel::torus(dim, cfg.num("length", 2.0 * kPi),
                                    cfg.integer("nodes", 16));
    throw ConfigError("unknown manifold kind: " + kind);
}

inline Triple make_problem(const ExperimentConfig& cfg, const ManifoldPtr& m) {
    Field h = parse_field_expr(cfg.get("h", "const(1)"), m);
    Field f = parse_field_expr(cfg.get("f", "const(1)"), m);
    return make_triple(m, h, f);
}

inline ClassifyOptions classify_options(const ExperimentConfig& cfg) {
    ClassifyOptions opt;
    opt.solve.tol = cfg.num("tol", 1e-6);
    opt.solve.max_iterations = cfg.integer("max_iterations", 4000);
    opt.schedule.steps = cfg.integer("schedule_steps", 9);
    opt.schedule.q0 = cfg.num("schedule_q0", 2.2);
    opt.band_frac = cfg.num("band", 0.02);
    opt.tol_ceiling_frac = cfg.num("tol_ceiling", 0.04);
    return opt;
}

inline void write_csv(const std::string& path, const std::vector<std::string>& header,
                      const std::vector<std::vector<double>>& rows) {
    std::ofstream out(path);
    if (!out) throw ConfigError("cannot write CSV: " + path);
    for (std::size_t i = 0; i < header.size(); ++i)
        out << header[i] << (i + 1 < header.size() ? "," : "\n");
    out << std::setprecision(17);
    for (const auto& row : rows) {
        for (std::size_t i = 0; i < row.size(); ++i)
            out << row[i] << (i + 1 < row.size() ? "," : "\n");
    }
}

inline nlohmann::json base_report(const ExperimentConfig& cfg) {
    nlohmann::json j;
    j["config"] = cfg.verbatim;
    j["seed"] = cfg.integer("seed", 0);
    j["tolerances"] = {{"tol", cfg.num("tol", 1e-6)},
                       {"band", cfg.num("band", 0.02)},
                       {"tol_ceiling", cfg.num("tol_ceiling", 0.04)}};
    return j;
}

inline Point parse_point(const ExperimentConfig& cfg, const std::string& key,
                         const ManifoldPtr& m) {
    if (m->is_radial()) return Point::radial(cfg.num(key, 0.0));
    std::vector<double> c = cfg.list(key, "0");
    c.resize(m->dim, 0.0);
    return Point{c};
}

// --- experiment bodies ------------------------------------------------------

inline nlohmann::json run_classify(const ExperimentConfig& cfg, bool lambda_only) {
    auto m = make_manifold(cfg);
    Triple t = make_problem(cfg, m);
    nlohmann::json j = base_report(cfg);
    const ClassifyOptions opt = classify_options(cfg);
    Classification cls = classify(t, opt);
    j["lambda"] = cls.detail.lambda;
    j["lambda_raw"] = cls.detail.lambda_raw;
    j["ceiling"] = cls.detail.ceiling.value;
    j["K2"] = cls.detail.ceiling.K2;
    j["gap"] = cls.gap;
    j["band"] = cls.band;
    j["classification"] = to_string(cls.kind);
    j["residual"] = cls.detail.last.residual;
    if (lambda_only) j["iterations"] = cls.detail.last.iterations;
    std::vector<std::vector<double>> rows;
    for (auto& [q, lam] : cls.detail.trace) rows.push_back({q, lam});
    write_csv(cfg.get("out_csv", "critlab_series.csv"), {"q", "lambda"}, rows);
    return j;
}

inline nlohmann::json run_green(const ExperimentConfig& cfg) {
    auto m = make_manifold(cfg);
    Field h = parse_field_expr(cfg.get("h", "const(1)"), m);
    const Point pole = parse_point(cfg, "pole", m);
    const double delta = cfg.num("delta", 0.3 * m->injectivity_radius());
    GreenFunction gf = build_green(m, h, pole, delta, cfg.num("tol", 1e-10));
    nlohmann::json j = base_report(cfg);
    j["delta"] = delta;
    j["singular_prefactor"] = gf.singular_prefactor;
    if (m->is_radial()) {
        BoundsReport bounds = verify_bounds(gf, cfg.num("rho", 0.5));
        j["bounds"] = {{"c_low", bounds.c_low},
                       {"c_high", bounds.c_high},
                       {"grad_ratio_c", bounds.grad_ratio_c},
                       {"limit_defect", bounds.limit_defect},
                       {"min_G", bounds.min_G}};
        std::vector<std::vector<double>> rows;
        for (std::size_t i = 1; i < m->node_count(); ++i)
            rows.push_back({m->r_at(i), gf.G.v[i], gf.beta.v[i]});
        write_csv(cfg.get("out_csv", "critlab_series.csv"), {"r", "G", "beta"}, rows);
    }
    return j;
}

inline nlohmann::json run_mass(const ExperimentConfig& cfg) {
    auto m = make_manifold(cfg);
    if (m->dim != 3) throw ConfigError("mass experiment: dim must be 3");
    Field h = parse_field_expr(cfg.get("h", "const(0.75)"), m);
    const Point pole = parse_point(cfg, "pole", m);
    const double delta = cfg.num("delta", 0.3 * m->injectivity_radius());
    GreenFunction gf = build_green(m, h, pole, delta, cfg.num("tol", 1e-10));
    const double rmin = cfg.num("fit_rmin", 5.0 * m->spacing());
    const double rmax = cfg.num("fit_rmax", 0.1);
    MassFit fit = green_mass_fit(gf, rmin, rmax);
    nlohmann::json j = base_report(cfg);
    j["mass"] = fit.M;
    j["slope"] = fit.slope;
    j["stderr"] = fit.stderr_M;
    j["fit_window"] = {rmin, rmax};
    j["beta_at_pole"] = gf.beta.v[0];
    std::vector<std::vector<double>> rows;
    for (std::size_t i = 1; i < m->node_count(); ++i)
        rows.push_back({m->r_at(i), gf.G.v[i]});
    write_csv(cfg.get("out_csv", "critlab_series.csv"), {"r", "G"}, rows);
    return j;
}

inline FamilySchedule family_schedule(const ExperimentConfig& cfg) {
    FamilySchedule sched;
    const int members = cfg.integer("members", 8);
    const double d0 = cfg.num("d0", 0.3);
    const double ratio = cfg.num("d_ratio", 0.1);
    const std::string kind = cfg.get("schedule", "quadratic");
    for (int j = 0; j < members; ++j) {
        const double d = d0 * std::pow(ratio, j);
        sched.steps.push_back({d, kind == "quadratic" ? d * d : d});
    }
    return sched;
}

inline nlohmann::json run_counterexample(const ExperimentConfig& cfg, bool full_diagnostics) {
    ExperimentConfig c = cfg;
    if (!c.has("manifold")) c.kv["manifold"] = "sphere";
    auto m = make_manifold(c);
    if (m->kind != ManifoldKind::RoundSphere)
        throw ConfigError("counterexample experiment: sphere only");
    FamilySchedule sched = family_schedule(cfg);
    auto family = sphere_counterexample_family(m, sched);
    ConcentrationReport rep = concentration_diagnostics(
        family, cfg.list("R_list", "1,2,5,10"), cfg.list("delta_list", "0.3,0.5"));
    nlohmann::json j = base_report(cfg);
    j["members"] = family.size();
    j["lambda"] = family.front().lambda_t;
    j["h"] = m->dim * (m->dim - 2.0) / 4.0;
    nlohmann::json tables;
    tables["R_list"] = rep.R_list;
    tables["delta_list"] = rep.delta_list;
    tables["ball_mass"] = rep.ball_mass;
    tables["weak_sup"] = rep.weak_sup;
    tables["strong_sup"] = rep.strong_sup;
    if (m->dim >= 4) tables["l2_ratio"] = rep.l2_ratio;
    tables["second_ratio"] = rep.second_ratio;
    j["diagnostics"] = tables;
    std::vector<std::vector<double>> rows;
    for (std::size_t k = 0; k < family.size(); ++k) {
        std::vector<double> row = {static_cast<double>(k), family[k].dist_to_x0,
                                   family[k].mu_t, rep.second_ratio[k]};
        if (full_diagnostics) {
            row.push_back(rep.weak_sup[k]);
            row.push_back(rep.ball_mass[k].back());
        }
        rows.push_back(row);
    }
    std::vector<std::string> header = {"member", "d", "mu", "second_ratio"};
    if (full_diagnostics) {
        header.push_back("weak_sup");
        header.push_back("ball_mass_largest_R");
    }
    write_csv(cfg.get("out_csv", "critlab_series.csv"), header, rows);
    return j;
}

inline nlohmann::json run_testfn(const ExperimentConfig& cfg) {
    auto m = make_manifold(cfg);
    Triple t = make_problem(cfg, m);
    std::vector<double> sweep;
    const double lo = cfg.num("eps_lo", 0.02), hi = cfg.num("eps_hi", 0.1);
    const int count = cfg.integer("eps_count", 9);
    for (int i = 0; i < count; ++i)
        sweep.push_back(lo + (hi - lo) * i / std::max(1, count - 1));
    Dim3TestOptions opt;
    opt.classify = classify_options(cfg);
    MassSignReport rep =
        dim3_weakly_critical_test(t, parse_point(cfg, "x0", m), sweep, opt);
    nlohmann::json j = base_report(cfg);
    j["a0"] = rep.a0;
    j["a1"] = rep.a1;
    j["min_deficit"] = rep.min_deficit;
    j["beta_at_center"] = rep.beta_at_center;
    std::vector<std::vector<double>> rows;
    for (std::size_t i = 0; i < rep.eps.size(); ++i)
        rows.push_back({rep.eps[i], rep.deficit[i]});
    write_csv(cfg.get("out_csv", "critlab_series.csv"), {"eps", "deficit"}, rows);
    return j;
}

inline nlohmann::json run_bisect(const ExperimentConfig& cfg) {
    auto m = make_manifold(cfg);
    Triple base = make_problem(cfg, m);
    PathSpec path;
    path.base = base;
    const std::string kind = cfg.get("path", "h_minus_t_eta");
    if (kind == "h_minus_t_eta") path.kind = PathKind::HMinusTEta;
    else if (kind == "h_testfn") path.kind = PathKind::HTestFn;
    else if (kind == "f_linear_to_one") path.kind = PathKind::FLinearToOne;
    else if (kind == "f_linear_to_sup") path.kind = PathKind::FLinearToSup;
    else throw ConfigError("unknown path kind: " + kind);
    path.direction = parse_field_expr(cfg.get("direction", "const(1)"), m);
    path.alpha = cfg.num("alpha", 0.0);
    path.t_range = {cfg.num("t_lo", 0.0), cfg.num("t_hi", 1.0)};
    BisectOptions opt;
    opt.classify = classify_options(cfg);
    BisectReport rep = bisect_t0(path, cfg.num("tol_t", 1e-3), opt);
    nlohmann::json j = base_report(cfg);
    j["t0"] = rep.t0;
    j["status"] = rep.status == BisectStatus::Converged ? "Converged" : "BandLimited";
    j["bracket"] = {rep.bracket_lo, rep.bracket_hi};
    j["h_path_monotone"] = rep.h_path_monotone;
    j["witness_lambda"] = rep.witness.lambda;
    std::vector<std::vector<double>> rows;
    std::vector<std::pair<double, double>> tr = rep.lambda_trace;
    std::sort(tr.begin(), tr.end());
    for (auto& [t, lam] : tr) rows.push_back({t, lam});
    write_csv(cfg.get("out_csv", "critlab_series.csv"), {"t", "lambda"}, rows);
    return j;
}

inline nlohmann::json run_probe(const ExperimentConfig& cfg) {
    auto m = make_manifold(cfg);
    Triple base = make_problem(cfg, m);
    ClassifyOptions opt = classify_options(cfg);
    ProbeReport rep = laplacian_blowup_probe(base, cfg.list("t_list", "3.0,0.4,0.2,0.1"),
                                             parse_point(cfg, "x0", m), opt);
    nlohmann::json j = base_report(cfg);
    j["h_at_x0"] = rep.h_at_x0;
    j["rhs_flat"] = rep.rhs_flat;
    j["smallest_t_below"] = rep.smallest_t_below;
    std::vector<std::vector<double>> rows;
    for (const auto& e : rep.entries)
        rows.push_back({e.t, e.gap, e.rhs, e.lambda, e.lapf_over_f});
    write_csv(cfg.get("out_csv", "critlab_series.csv"),
              {"t", "gap", "rhs", "lambda", "lapf_over_f"}, rows);
    return j;
}

inline nlohmann::json run_solve(const ExperimentConfig& cfg) {
    auto m = make_manifold(cfg);
    Triple t = make_problem(cfg, m);
    nlohmann::json j = base_report(cfg);
    if (cfg.has("q")) {
        SolveOptions so;
        so.tol = cfg.num("tol", 1e-6);
        so.max_iterations = cfg.integer("max_iterations", 4000);
        MinimizeReport rep = solve_subcritical(t, cfg.num("q", 2.5), so);
        j["q"] = rep.q;
        j["lambda"] = rep.lambda;
        j["residual"] = rep.residual;
        j["iterations"] = rep.iterations;
        std::vector<std::vector<double>> rows;
        for (auto& [it, lam] : rep.trace) rows.push_back({static_cast<double>(it), lam});
        write_csv(cfg.get("out_csv", "critlab_series.csv"), {"iteration", "lambda"}, rows);
        return j;
    }
    return run_classify(cfg, true);
}

}  // namespace cli_detail

/// Run one experiment; writes the JSON report and CSV series. Returns the
/// CLI exit code: 0 success, 2 solver failure, 3 configuration failure.
inline int run(const ExperimentConfig& cfg) {
    try {
        const std::string exp = cfg.get("experiment", "classify");
        nlohmann::json j;
        if (exp == "classify") j = cli_detail::run_classify(cfg, false);
        else if (exp == "solve") j = cli_detail::run_solve(cfg);
        else if (exp == "bisect") j = cli_detail::run_bisect(cfg);
        else if (exp == "green") j = cli_detail::run_green(cfg);
        else if (exp == "mass") j = cli_detail::run_mass(cfg);
        else if (exp == "blowup") j = cli_detail::run_counterexample(cfg, true);
        else if (exp == "counterexample") j = cli_detail::run_counterexample(cfg, false);
        else if (exp == "testfn") j = cli_detail::run_testfn(cfg);
        else if (exp == "probe") j = cli_detail::run_probe(cfg);
        else throw ConfigError("unknown experiment: " + exp);
        j["experiment"] = exp;
        std::ofstream out(cfg.get("out_json", "critlab_report.json"));
        out << j.dump(2) << "\n";
        return 0;
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 3;
    } catch (const SolverError& e) {
        std::fprintf(stderr, "solver error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
}

}  // namespace critlab
