#pragma once

// Subcommands of the vecchia command-line tool. Each one reads the shared
// run configuration, validates every path before computing, and writes its
// outputs together with the resolved configuration and seed.

#include "config.hpp"

#include "vecchia/parallel.hpp"
#include "vecchia/random.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iostream>
#include <numbers>
#include <sstream>
#include <unordered_map>

namespace vecchia::cli {

struct RunContext {
    std::string command;
    json config;          // as loaded
    fs::path base;        // directory that relative paths refer to
    std::optional<std::uint64_t> seed;
    unsigned threads = 1;
    fs::path out = ".";
    bool verbose = false;

    void log(const std::string& msg) const {
        if (verbose) std::clog << "[vecchia " << command << "] " << msg << '\n';
    }
};

inline const std::vector<std::string>& commands() {
    static const std::vector<std::string> c{"simulate", "fit", "are", "score", "diag", "bench"};
    return c;
}

// A provenance record written by an earlier run is accepted as a config.
inline json load_config(const fs::path& path) {
    json j = read_json_file(path);
    if (j.is_object() && j.contains("config") && j.contains("provenance")) j = j.at("config");
    if (!j.is_object()) throw ConfigError(path.string() + ": the config must be a JSON object");
    check_keys(j, "config", {"seed", "threads", "sites", "model", "likelihood", "mvn", "simulate", "fit", "are",
                             "score", "diag", "bench"});
    return j;
}

inline void require_seed(const RunContext& ctx) {
    if (!ctx.seed) throw ConfigError(ctx.command + " is stochastic and needs an explicit seed (--seed or \"seed\")");
}

inline void require_input(const fs::path& p) {
    std::error_code ec;
    if (!fs::is_regular_file(p, ec)) throw IoError("input file '" + p.string() + "' does not exist");
    std::ifstream in(p);
    if (!in) throw IoError("input file '" + p.string() + "' is not readable");
}

inline void prepare_output_dir(const fs::path& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (!fs::is_directory(dir, ec)) throw IoError("cannot create output directory '" + dir.string() + "'");
    const fs::path probe = dir / ".vecchia_write_probe";
    {
        std::ofstream t(probe);
        if (!t) throw IoError("output directory '" + dir.string() + "' is not writable");
    }
    fs::remove(probe, ec);
}

inline fs::path input_path(const json& block, const std::string& where, const char* key, const fs::path& base) {
    return resolve_path(get_as<std::string>(need(block, where, key), where + "." + key), base);
}

// Shared blocks, resolved. Commands pick what they need.
struct Common {
    json resolved;  // full resolved config
    std::optional<SiteSet> sites;
    std::optional<AnyModel> model;
    std::optional<LikelihoodSpec> spec;
    NumericOptions numeric;
};

inline Common resolve_common(const RunContext& ctx, bool need_sites, bool need_model, bool need_spec) {
    Common c;
    const json& cfg = ctx.config;
    if (ctx.seed) c.resolved["seed"] = *ctx.seed;
    c.resolved["threads"] = ctx.threads;
    if (cfg.contains("sites")) {
        c.resolved["sites"] = resolve_sites(cfg.at("sites"), ctx.base);
        if (c.resolved["sites"].contains("file")) require_input(c.resolved["sites"]["file"].get<std::string>());
    } else if (need_sites) {
        throw ConfigError("missing 'sites' block");
    }
    if (cfg.contains("model")) {
        c.model = model_from_json(cfg.at("model"));
        c.resolved["model"] = model_to_json(*c.model);
    } else if (need_model) {
        throw ConfigError("missing 'model' block");
    }
    if (need_spec) {
        c.spec = spec_from_json(cfg.value("likelihood", json::object()), "likelihood", ctx.seed);
        c.resolved["likelihood"] = spec_to_json(*c.spec);
    }
    c.numeric = numeric_from_json(cfg.value("mvn", json::object()));
    c.resolved["mvn"] = numeric_to_json(c.numeric);
    return c;
}

inline json provenance(const RunContext& ctx, const std::vector<std::string>& outputs, double wall) {
    json p{{"version", kVersion}, {"command", ctx.command}, {"outputs", outputs}, {"wall_time_s", wall}};
    p["seed"] = ctx.seed ? json(*ctx.seed) : json(nullptr);
    return p;
}

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

inline std::string fmt(double v) { return detail::format_double(v); }
inline std::string fmt(const std::optional<double>& v) { return v ? detail::format_double(*v) : std::string(); }

inline json psi_object(const AnyModel& m) {
    json j = json::object();
    const auto names = param_names(m);
    const auto p = params(m);
    for (std::size_t i = 0; i < names.size(); ++i) j[names[i]] = p[i];
    return j;
}

// ---- simulate ---------------------------------------------------------------

inline int cmd_simulate(const RunContext& ctx) {
    const auto t0 = std::chrono::steady_clock::now();
    require_seed(ctx);
    Common c = resolve_common(ctx, true, true, false);
    const json block = ctx.config.value("simulate", json::object());
    check_keys(block, "simulate", {"n"});
    const long long n = value_or<long long>(block, "simulate", "n", 100);
    require(n >= 0, "simulate.n must be non-negative");
    c.resolved["simulate"] = {{"n", n}};
    prepare_output_dir(ctx.out);

    const SiteSet sites = load_sites(c.resolved["sites"]);
    ctx.log("simulating " + std::to_string(n) + " replicates at " + std::to_string(sites.size()) + " sites");
    const Eigen::MatrixXd x = n == 0 ? Eigen::MatrixXd(0, static_cast<Eigen::Index>(sites.size()))
                                     : simulate(*c.model, sites, static_cast<std::size_t>(n), *ctx.seed, ctx.threads);
    write_data((ctx.out / "data.csv").string(), x, sites);
    write_sites((ctx.out / "sites.csv").string(), sites);
    json rec{{"model", model_to_json(*c.model)},
             {"psi", psi_object(*c.model)},
             {"seed", *ctx.seed},
             {"generator", kVersion},
             {"n", n},
             {"D", sites.size()},
             {"config", c.resolved}};
    rec["provenance"] = provenance(ctx, {"data.csv", "sites.csv", "simulate.json"}, seconds_since(t0));
    write_json_file(ctx.out / "simulate.json", rec);
    return 0;
}

// ---- fit --------------------------------------------------------------------

inline json fit_result_json(const FitResult& f) {
    json j{{"model_name", f.model},
           {"names", f.names},
           {"psi_hat", f.psi_hat},
           {"fixed", f.fixed},
           {"loglik", f.loglik},
           {"std_err", f.std_err},
           {"vcov", matrix_to_json(f.vcov)},
           {"vcov_clipped", f.vcov_clipped},
           {"n_evals", f.n_evals},
           {"converged", f.converged},
           {"wall_time_s", f.wall_time_s}};
    return j;
}

inline int cmd_fit(const RunContext& ctx) {
    const auto t0 = std::chrono::steady_clock::now();
    Common c = resolve_common(ctx, true, false, true);
    const json block = need(ctx.config, "config", "fit");
    const std::string w = "fit";
    check_keys(block, w, {"data", "init", "fixed", "restarts", "restart_offset", "max_iter", "size_tol",
                          "initial_step", "vcov", "resample"});
    const fs::path data_path = input_path(block, w, "data", ctx.base);
    AnyModel init = block.contains("init") ? model_from_json(block.at("init"))
                    : c.model               ? *c.model
                                            : throw ConfigError("fit: give 'init' or a top-level 'model'");
    FitOptions fo;
    fo.restarts = value_or(block, w, "restarts", fo.restarts);
    fo.restart_offset = value_or(block, w, "restart_offset", fo.restart_offset);
    fo.optimizer.max_iter = value_or(block, w, "max_iter", fo.optimizer.max_iter);
    fo.optimizer.size_tol = value_or(block, w, "size_tol", fo.optimizer.size_tol);
    fo.optimizer.initial_step = value_or(block, w, "initial_step", fo.optimizer.initial_step);
    fo.compute_vcov = value_or(block, w, "vcov", true);
    fo.vcov_mvn = c.numeric.vcov_mvn;
    require(fo.restarts == 1 || fo.restarts == 3, "fit.restarts must be 1 or 3");
    require(fo.optimizer.max_iter >= 0 && fo.optimizer.size_tol > 0.0 && fo.optimizer.initial_step > 0.0,
            "fit: invalid optimiser settings");
    const auto names = param_names(init);
    std::vector<std::string> fixed_names = value_or(block, w, "fixed", std::vector<std::string>{});
    fo.fixed.assign(names.size(), false);
    for (const auto& f : fixed_names) {
        const auto it = std::find(names.begin(), names.end(), f);
        if (it == names.end()) throw ConfigError("fit.fixed: '" + f + "' is not a parameter of " + model_name(init));
        fo.fixed[static_cast<std::size_t>(it - names.begin())] = true;
    }
    std::optional<ResampleKind> rk;
    std::size_t b = 0;
    double level = 0.95;
    json resample_resolved;
    if (block.contains("resample")) {
        const json& r = block.at("resample");
        check_keys(r, "fit.resample", {"kind", "B", "level"});
        rk = parse_resample_kind(get_as<std::string>(need(r, "fit.resample", "kind"), "fit.resample.kind"));
        b = value_or<std::size_t>(r, "fit.resample", "B", rk == ResampleKind::jackknife ? 0 : 200);
        level = value_or(r, "fit.resample", "level", level);
        if (*rk == ResampleKind::parametric_bootstrap) require_seed(ctx);
        resample_resolved = {{"kind", *rk == ResampleKind::jackknife ? "jackknife" : "bootstrap"},
                             {"B", b},
                             {"level", level}};
    }
    json fit_resolved{{"data", data_path.string()},
                      {"init", model_to_json(init)},
                      {"fixed", fixed_names},
                      {"restarts", fo.restarts},
                      {"restart_offset", fo.restart_offset},
                      {"max_iter", fo.optimizer.max_iter},
                      {"size_tol", fo.optimizer.size_tol},
                      {"initial_step", fo.optimizer.initial_step},
                      {"vcov", fo.compute_vcov}};
    if (rk) fit_resolved["resample"] = resample_resolved;
    c.resolved["fit"] = fit_resolved;
    require_input(data_path);
    prepare_output_dir(ctx.out);

    const SiteSet sites = load_sites(c.resolved["sites"]);
    const Eigen::MatrixXd x = read_data(data_path.string(), sites);
    const EvalOptions eo{c.numeric.mvn, ctx.threads};
    const auto scheme = build_scheme(*c.spec, init, sites);
    ctx.log(std::to_string(x.rows()) + " replicates, " + std::to_string(scheme.size()) + " likelihood terms");
    const FitResult f = fit(init, x, sites, scheme, fo, eo);
    ctx.log("loglik " + fmt(f.loglik) + " after " + std::to_string(f.n_evals) + " evaluations");

    json out = fit_result_json(f);
    out["model"] = model_to_json(with_params(init, f.psi_hat));
    out["likelihood"] = spec_to_json(*c.spec);
    out["n_replicates"] = x.rows();
    out["n_terms"] = scheme.size();
    std::vector<std::string> outputs{"fit.json"};
    if (rk) {
        ctx.log("resampling");
        const auto rr = resample_ci(with_params(init, f.psi_hat), x, sites, scheme, *rk, b, ctx.seed.value_or(0),
                                    level, fo, eo);
        json iv = json::object();
        for (std::size_t k = 0; k < rr.names.size(); ++k)
            iv[rr.names[k]] = {rr.intervals[k].lower, rr.intervals[k].upper};
        out["intervals"] = {{"kind", resample_resolved["kind"]},
                            {"level", level},
                            {"bounds", iv},
                            {"attempted", rr.attempted},
                            {"failures", rr.failures}};
    }
    if (c.spec->method == Method::vecchia) {
        const auto plan = build_ordering(sites, c.spec->ordering, c.spec->seed, {}, c.spec->ties);
        write_ordering((ctx.out / "ordering.csv").string(), plan, sites);
        outputs.push_back("ordering.csv");
    }
    out["config"] = c.resolved;
    out["provenance"] = provenance(ctx, outputs, seconds_since(t0));
    write_json_file(ctx.out / "fit.json", out);
    return 0;
}

// A fit file written by cmd_fit: model, plus the sites of its config.
struct LoadedFit {
    AnyModel model;
    json config;
};

inline LoadedFit load_fit(const fs::path& p) {
    require_input(p);
    const json j = read_json_file(p);
    if (!j.contains("model")) throw ConfigError(p.string() + ": not a fit result (no 'model')");
    LoadedFit f{model_from_json(j.at("model")), j.value("config", json::object())};
    return f;
}

inline json sites_for(const RunContext& ctx, const LoadedFit& f) {
    if (ctx.config.contains("sites")) return resolve_sites(ctx.config.at("sites"), ctx.base);
    if (f.config.contains("sites")) return f.config.at("sites");
    throw ConfigError("no 'sites' block and the fit file does not record its sites");
}

// ---- are --------------------------------------------------------------------

inline std::string scheme_label(const LikelihoodSpec& s) {
    std::ostringstream o;
    o << to_string(s.method);
    if (s.method == Method::vecchia) o << '/' << to_string(s.ordering);
    if (s.method != Method::full) o << "/d=" << s.d;
    if (s.method == Method::composite) o << "/delta=" << fmt(s.delta);
    return o.str();
}

inline json are_json(const AREReport& r, const LikelihoodSpec& s, double wall) {
    std::vector<double> marg;
    for (double a : r.marginal_are) marg.push_back(100.0 * a);
    return {{"scheme", scheme_label(s)},
            {"likelihood", spec_to_json(s)},
            {"names", r.param_names},
            {"psi0", r.psi0},
            {"J", matrix_to_json(r.J)},
            {"K", matrix_to_json(r.K)},
            {"V", matrix_to_json(r.V)},
            {"V_full", matrix_to_json(r.V_full)},
            {"marginal_are", marg},
            {"overall_are", 100.0 * r.overall_are},
            {"term_count", r.term_count},
            {"wall_time_s", wall}};
}

inline int cmd_are(const RunContext& ctx) {
    const auto t0 = std::chrono::steady_clock::now();
    Common c = resolve_common(ctx, true, true, false);
    const auto* g = std::get_if<CorrelationModel>(&*c.model);
    if (!g) throw ConfigError("are: unsupported model " + model_name(*c.model) + "; efficiency reports need a Gaussian model");
    const json block = ctx.config.value("are", json::object());
    check_keys(block, "are", {"n", "schemes", "sweep"});
    const double n = value_or(block, "are", "n", 1.0);
    require(n > 0.0, "are.n must be positive");
    std::vector<LikelihoodSpec> specs;
    if (block.contains("schemes")) {
        const json& arr = block.at("schemes");
        if (!arr.is_array() || arr.empty()) throw ConfigError("are.schemes must be a non-empty array");
        for (std::size_t i = 0; i < arr.size(); ++i)
            specs.push_back(spec_from_json(arr[i], "are.schemes[" + std::to_string(i) + "]", ctx.seed));
    } else {
        specs.push_back(spec_from_json(ctx.config.value("likelihood", json::object()), "likelihood", ctx.seed));
    }
    json resolved_specs = json::array();
    for (const auto& s : specs) resolved_specs.push_back(spec_to_json(s));
    json are_resolved{{"n", n}, {"schemes", resolved_specs}};
    std::vector<double> grid;
    if (block.contains("sweep")) {
        const json& sw = block.at("sweep");
        check_keys(sw, "are.sweep", {"lambda_min", "lambda_max", "lambda_step"});
        const double lo = number(sw, "are.sweep", "lambda_min");
        const double hi = number(sw, "are.sweep", "lambda_max");
        const double st = number(sw, "are.sweep", "lambda_step");
        require(lo > 0.0 && hi >= lo && st > 0.0, "are.sweep needs 0 < lambda_min <= lambda_max and a positive step");
        const long steps = std::lround((hi - lo) / st);
        require(steps < 100000, "are.sweep has too many points");
        for (long k = 0; k <= steps; ++k) grid.push_back(lo + static_cast<double>(k) * st);
        are_resolved["sweep"] = {{"lambda_min", lo}, {"lambda_max", hi}, {"lambda_step", st}};
    }
    c.resolved["are"] = are_resolved;
    prepare_output_dir(ctx.out);

    const SiteSet sites = load_sites(c.resolved["sites"]);
    json reports = json::array();
    for (const auto& s : specs) {
        const auto ts = std::chrono::steady_clock::now();
        const auto scheme = build_scheme(s, *c.model, sites);
        const auto r = are(scheme, *g, sites, n, {}, ctx.threads);
        reports.push_back(are_json(r, s, seconds_since(ts)));
        ctx.log(scheme_label(s) + ": overall ARE " + fmt(100.0 * r.overall_are) + "%");
    }
    std::vector<std::string> outputs{"are.json"};
    if (!grid.empty()) {
        CsvTable t{{"scheme", "lambda", "asd", "are", "overall_are"}, {}};
        for (const auto& s : specs) {
            for (double lam : grid) {
                CorrelationModel m = *g;
                m.lambda = lam;
                const auto r = are(build_scheme(s, m, sites), m, sites, n, {}, ctx.threads);
                t.rows.push_back({scheme_label(s), fmt(lam), fmt(std::sqrt(r.V(0, 0))), fmt(100.0 * r.marginal_are[0]),
                                  fmt(100.0 * r.overall_are)});
            }
        }
        write_table((ctx.out / "are_sweep.csv").string(), t);
        outputs.push_back("are_sweep.csv");
    }
    json out{{"reports", reports}, {"config", c.resolved}};
    out["provenance"] = provenance(ctx, outputs, seconds_since(t0));
    write_json_file(ctx.out / "are.json", out);
    return 0;
}

// ---- score ------------------------------------------------------------------

inline int cmd_score(const RunContext& ctx) {
    const auto t0 = std::chrono::steady_clock::now();
    Common c = resolve_common(ctx, false, false, false);
    const json block = need(ctx.config, "config", "score");
    const std::string w = "score";
    check_keys(block, w, {"fit", "data", "validation", "neighbours"});
    const fs::path fit_path = input_path(block, w, "fit", ctx.base);
    const fs::path data_path = input_path(block, w, "data", ctx.base);
    const long long k = value_or<long long>(block, w, "neighbours", 4);
    require(k >= 0, "score.neighbours must be non-negative");
    require_input(data_path);
    const LoadedFit lf = load_fit(fit_path);
    c.resolved["sites"] = sites_for(ctx, lf);
    if (c.resolved["sites"].contains("file")) require_input(c.resolved["sites"]["file"].get<std::string>());
    const json vb = block.value("validation", json::object());
    check_keys(vb, "score.validation", {"fraction", "ordering_seed", "maxmin_ties", "ids"});
    if (vb.contains("ids") && (vb.contains("fraction") || vb.contains("ordering_seed") || vb.contains("maxmin_ties")))
        throw ConfigError("score.validation: 'ids' excludes the max-min selection keys");
    json val_resolved;
    std::vector<long long> ids;
    double fraction = 0.1;
    TieBreak ties = TieBreak::random;
    std::uint64_t vseed = 0;
    if (vb.contains("ids")) {
        ids = get_as<std::vector<long long>>(vb.at("ids"), "score.validation.ids");
        val_resolved = {{"ids", ids}};
    } else {
        fraction = value_or(vb, "score.validation", "fraction", fraction);
        ties = parse_tie_break(value_or<std::string>(vb, "score.validation", "maxmin_ties", "random"));
        if (vb.contains("ordering_seed")) {
            vseed = parse_seed(vb.at("ordering_seed"), "score.validation.ordering_seed");
        } else if (ties == TieBreak::random) {
            require_seed(ctx);
            vseed = *ctx.seed;
        }
        val_resolved = {{"fraction", fraction}, {"ordering_seed", vseed}, {"maxmin_ties", std::string(to_string(ties))}};
    }
    c.resolved["score"] = {{"fit", fit_path.string()}, {"data", data_path.string()}, {"validation", val_resolved},
                           {"neighbours", k}};
    prepare_output_dir(ctx.out);

    const SiteSet sites = load_sites(c.resolved["sites"]);
    std::vector<int> val;
    if (vb.contains("ids")) {
        std::unordered_map<long long, int> pos;
        for (std::size_t i = 0; i < sites.size(); ++i) pos.emplace(sites.ids()[i], static_cast<int>(i));
        for (long long id : ids) {
            const auto it = pos.find(id);
            if (it == pos.end()) throw ConfigError("score.validation.ids: unknown site id " + std::to_string(id));
            val.push_back(it->second);
        }
    } else {
        val = validation_sites(sites, fraction, vseed, ties);
    }
    const Eigen::MatrixXd x = read_data(data_path.string(), sites);
    const double s = cv_logscore(lf.model, x, sites, val, static_cast<std::size_t>(k), {c.numeric.mvn, ctx.threads});
    ctx.log("score " + fmt(s));
    std::vector<long long> val_ids;
    for (int v : val) val_ids.push_back(sites.ids()[static_cast<std::size_t>(v)]);
    json out{{"score", s},
             {"model", model_to_json(lf.model)},
             {"validation_ids", val_ids},
             {"neighbours", k},
             {"n_replicates", x.rows()},
             {"config", c.resolved}};
    out["provenance"] = provenance(ctx, {"score.json"}, seconds_since(t0));
    write_json_file(ctx.out / "score.json", out);
    return 0;
}

// ---- diag -------------------------------------------------------------------

inline double direction_theta(const AnyModel& m, double deg, double h) {
    const double r = deg * std::numbers::pi / 180.0;
    const Point o{0.0, 0.0}, q{h * std::cos(r), h * std::sin(r)};
    if (const auto* b = std::get_if<BrownResnickModel>(&m)) return extremal_coefficient(MaxStableModel{*b}, o, q);
    return extremal_coefficient(MaxStableModel{std::get<LogisticModel>(m)}, o, q);
}

inline std::vector<std::string> bin_row(const ExtremalBin& b) {
    return {fmt(b.lo), fmt(b.hi), std::to_string(b.count), fmt(b.q1), fmt(b.median), fmt(b.q3), fmt(b.mean)};
}

inline int cmd_diag(const RunContext& ctx) {
    const auto t0 = std::chrono::steady_clock::now();
    Common c = resolve_common(ctx, false, false, false);
    const json block = need(ctx.config, "config", "diag");
    const std::string w = "diag";
    check_keys(block, w, {"fit", "data", "distance_edges", "directions_deg", "half_width_deg", "curve_points"});
    const fs::path fit_path = input_path(block, w, "fit", ctx.base);
    const fs::path data_path = input_path(block, w, "data", ctx.base);
    require_input(data_path);
    const LoadedFit lf = load_fit(fit_path);
    if (is_gaussian(lf.model)) throw ConfigError("diag: extremal coefficients need a max-stable model");
    c.resolved["sites"] = sites_for(ctx, lf);
    if (c.resolved["sites"].contains("file")) require_input(c.resolved["sites"]["file"].get<std::string>());
    const auto dirs = value_or(block, w, "directions_deg", std::vector<double>{15, 45, 75, 105, 135, 165});
    const double hw = value_or(block, w, "half_width_deg", 15.0);
    const int curve_points = value_or(block, w, "curve_points", 50);
    require(hw > 0.0 && hw <= 90.0, "diag.half_width_deg must lie in (0, 90]");
    require(curve_points >= 2, "diag.curve_points must be at least 2");
    for (double d : dirs) require(d >= 0.0 && d < 180.0, "diag.directions_deg must lie in [0, 180)");
    const SiteSet sites = load_sites(c.resolved["sites"]);
    std::vector<double> edges;
    if (block.contains("distance_edges")) {
        edges = get_as<std::vector<double>>(block.at("distance_edges"), "diag.distance_edges");
        require(edges.size() >= 2 && std::is_sorted(edges.begin(), edges.end()) &&
                    std::adjacent_find(edges.begin(), edges.end()) == edges.end(),
                "diag.distance_edges must be strictly increasing with at least two entries");
    } else {
        double dmax = 0.0;
        for (std::size_t a = 0; a < sites.size(); ++a)
            for (std::size_t b = a + 1; b < sites.size(); ++b) dmax = std::max(dmax, sites.distance(a, b));
        for (int k = 0; k <= static_cast<int>(std::floor(dmax)) + 1; ++k) edges.push_back(k);
    }
    c.resolved["diag"] = {{"fit", fit_path.string()}, {"data", data_path.string()}, {"distance_edges", edges},
                          {"directions_deg", dirs},   {"half_width_deg", hw},       {"curve_points", curve_points}};
    prepare_output_dir(ctx.out);

    const Eigen::MatrixXd x = read_data(data_path.string(), sites);
    const auto pairs = pairwise_extremal(x, sites);
    const auto& m = lf.model;
    auto pair_theta = [&](const PairExtremal& p) {
        if (const auto* b = std::get_if<BrownResnickModel>(&m))
            return extremal_coefficient(*b, sites[p.j].x - sites[p.i].x, sites[p.j].y - sites[p.i].y);
        return extremal_coefficient(std::get<LogisticModel>(m));
    };

    CsvTable dist{{"lo", "hi", "count", "q1", "median", "q3", "mean", "model_theta"}, {}};
    const auto dbins = bin_by_distance(pairs, edges);
    for (std::size_t k = 0; k < dbins.size(); ++k) {
        auto row = bin_row(dbins[k]);
        double s = 0.0;
        std::size_t cnt = 0;
        for (const auto& p : pairs)
            if (p.distance >= edges[k] && p.distance < edges[k + 1]) {
                s += pair_theta(p);
                ++cnt;
            }
        row.push_back(cnt ? fmt(s / static_cast<double>(cnt)) : std::string());
        dist.rows.push_back(std::move(row));
    }
    CsvTable dir{{"direction", "lo", "hi", "count", "q1", "median", "q3", "mean", "model_theta"}, {}};
    CsvTable curve{{"direction", "h", "theta"}, {}};
    for (double dc : dirs) {
        std::vector<PairExtremal> sel;
        for (const auto& p : pairs)
            if (in_direction_bin(p.angle, dc, hw)) sel.push_back(p);
        for (const auto& b : bin_by_distance(sel, edges)) {
            auto row = bin_row(b);
            row.insert(row.begin(), fmt(dc));
            row.push_back(fmt(direction_theta(m, dc, 0.5 * (b.lo + b.hi))));
            dir.rows.push_back(std::move(row));
        }
        for (int k = 0; k < curve_points; ++k) {
            const double h = edges.back() * static_cast<double>(k) / static_cast<double>(curve_points - 1);
            curve.rows.push_back({fmt(dc), fmt(h), fmt(direction_theta(m, dc, h))});
        }
    }
    write_table((ctx.out / "diag_distance.csv").string(), dist);
    write_table((ctx.out / "diag_direction.csv").string(), dir);
    write_table((ctx.out / "diag_curve.csv").string(), curve);
    json rec{{"model", model_to_json(m)}, {"n_pairs", pairs.size()}, {"config", c.resolved}};
    rec["provenance"] =
        provenance(ctx, {"diag_distance.csv", "diag_direction.csv", "diag_curve.csv", "diag.json"}, seconds_since(t0));
    write_json_file(ctx.out / "diag.json", rec);
    return 0;
}

// ---- bench ------------------------------------------------------------------

// Independent replicates on the model's margins; objective cost does not
// depend on the dependence in the data.
inline Eigen::MatrixXd bench_data(const AnyModel& m, std::size_t n, std::size_t d, std::uint64_t seed) {
    Eigen::MatrixXd x(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d));
    Rng rng = make_rng(seed, 0xbe7c);
    for (Eigen::Index i = 0; i < x.rows(); ++i)
        for (Eigen::Index j = 0; j < x.cols(); ++j)
            x(i, j) = is_gaussian(m) ? standard_normal(rng) : 1.0 / standard_exponential(rng);
    return x;
}

inline int cmd_bench(const RunContext& ctx) {
    const auto t0 = std::chrono::steady_clock::now();
    require_seed(ctx);
    Common c = resolve_common(ctx, false, true, true);
    const json block = ctx.config.value("bench", json::object());
    const std::string w = "bench";
    check_keys(block, w, {"D", "d", "replicates", "repeats"});
    const auto ds = value_or(block, w, "D", std::vector<int>{256, 576, 1024});
    const auto orders = value_or(block, w, "d", std::vector<int>{c.spec->d});
    const int reps = value_or(block, w, "replicates", 10);
    const int repeats = value_or(block, w, "repeats", 3);
    require(!ds.empty() && !orders.empty(), "bench.D and bench.d must be non-empty");
    require(reps >= 1 && repeats >= 1, "bench.replicates and bench.repeats must be at least 1");
    for (int d : ds) {
        const int side = static_cast<int>(std::lround(std::sqrt(static_cast<double>(d))));
        require(d >= 1 && side * side == d, "bench.D entries must be perfect squares (square grids)");
    }
    c.resolved["bench"] = {{"D", ds}, {"d", orders}, {"replicates", reps}, {"repeats", repeats}};
    prepare_output_dir(ctx.out);

    CsvTable t{{"D", "d", "terms", "replicates", "repeats", "seconds_per_eval"}, {}};
    const EvalOptions eo{c.numeric.mvn, ctx.threads};
    for (int dd : ds) {
        const SiteSet sites = make_grid(static_cast<int>(std::lround(std::sqrt(static_cast<double>(dd)))));
        const Eigen::MatrixXd x = bench_data(*c.model, static_cast<std::size_t>(reps), sites.size(), *ctx.seed);
        for (int d : orders) {
            LikelihoodSpec s = *c.spec;
            s.d = d;
            const auto scheme = build_scheme(s, *c.model, sites);
            std::vector<double> times;
            for (int r = 0; r < repeats; ++r) {
                const auto ts = std::chrono::steady_clock::now();
                (void)loglik(*c.model, x, sites, scheme, eo);
                times.push_back(seconds_since(ts));
            }
            std::sort(times.begin(), times.end());
            const double med = times[times.size() / 2];
            ctx.log("D=" + std::to_string(dd) + " d=" + std::to_string(d) + ": " + fmt(med) + " s");
            t.rows.push_back({std::to_string(dd), std::to_string(d), std::to_string(scheme.size()), std::to_string(reps),
                              std::to_string(repeats), fmt(med)});
        }
    }
    write_table((ctx.out / "bench.csv").string(), t);
    json rec{{"config", c.resolved}};
    rec["provenance"] = provenance(ctx, {"bench.csv", "bench.json"}, seconds_since(t0));
    write_json_file(ctx.out / "bench.json", rec);
    return 0;
}

inline int dispatch(const RunContext& ctx) {
    if (ctx.command == "simulate") return cmd_simulate(ctx);
    if (ctx.command == "fit") return cmd_fit(ctx);
    if (ctx.command == "are") return cmd_are(ctx);
    if (ctx.command == "score") return cmd_score(ctx);
    if (ctx.command == "diag") return cmd_diag(ctx);
    if (ctx.command == "bench") return cmd_bench(ctx);
    throw ConfigError("unknown command '" + ctx.command + "'");
}

} // namespace vecchia::cli
