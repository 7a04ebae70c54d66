#pragma once

// JSON run configuration: parsing with strict key checking, resolution of
// defaults and paths, and serialisation of models, specs and results.

#include "vecchia/efficiency.hpp"
#include "vecchia/io.hpp"
#include "vecchia/likelihood.hpp"
#include "vecchia/models.hpp"

#include "json.hpp"

#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <limits>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace vecchia::cli {

using json = nlohmann::json;
namespace fs = std::filesystem;

inline constexpr const char* kVersion = "vecchia 1.0.0";

inline void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
    if (!j.is_object()) throw ConfigError(where + " must be a JSON object");
    const std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& [k, v] : j.items()) {
        (void)v;
        if (!ok.count(k)) throw ConfigError(where + ": unknown key '" + k + "'");
    }
}

inline const json& need(const json& j, const std::string& where, const char* key) {
    if (!j.contains(key)) throw ConfigError(where + ": missing key '" + key + "'");
    return j.at(key);
}

template <class T>
T get_as(const json& j, const std::string& where) {
    try {
        return j.get<T>();
    } catch (const json::exception&) {
        throw ConfigError(where + ": wrong value type");
    }
}

template <class T>
T value_or(const json& j, const std::string& where, const char* key, T fallback) {
    if (!j.contains(key)) return fallback;
    return get_as<T>(j.at(key), where + "." + key);
}

inline double number(const json& j, const std::string& where, const char* key) {
    const json& v = need(j, where, key);
    if (!v.is_number()) throw ConfigError(where + "." + key + " must be a number");
    return v.get<double>();
}

// Numbers, or the strings "inf" / "-inf".
inline double extended_number(const json& v, const std::string& where) {
    if (v.is_number()) return v.get<double>();
    if (v.is_string()) {
        const auto s = v.get<std::string>();
        if (s == "inf") return std::numeric_limits<double>::infinity();
        if (s == "-inf") return -std::numeric_limits<double>::infinity();
    }
    throw ConfigError(where + " must be a number or \"inf\"");
}

inline json extended_to_json(double x) {
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    return x;
}

inline std::uint64_t parse_seed(const json& v, const std::string& where) {
    if (v.is_number_unsigned()) return v.get<std::uint64_t>();
    if (v.is_number_integer() && v.get<long long>() >= 0) return static_cast<std::uint64_t>(v.get<long long>());
    throw ConfigError(where + " must be a non-negative integer");
}

// ---- models ---------------------------------------------------------------

inline AnyModel model_from_json(const json& j) {
    const std::string w = "model";
    const auto family = get_as<std::string>(need(j, w, "family"), w + ".family");
    AnyModel m;
    if (family == "gaussian") {
        check_keys(j, w, {"family", "correlation", "lambda", "kappa"});
        const auto cf = parse_correlation_family(value_or<std::string>(j, w, "correlation", "exponential"));
        if (cf == CorrelationFamily::exponential) {
            if (j.contains("kappa")) throw ConfigError("model: the exponential correlation has no kappa");
            m = CorrelationModel::exponential(number(j, w, "lambda"));
        } else {
            m = CorrelationModel::powered_exponential(number(j, w, "lambda"), number(j, w, "kappa"));
        }
    } else if (family == "brown_resnick") {
        check_keys(j, w, {"family", "variogram", "sigma", "lambda", "alpha", "theta", "a"});
        const auto vf = parse_variogram_family(get_as<std::string>(need(j, w, "variogram"), w + ".variogram"));
        if (vf == VariogramFamily::bounded) {
            for (const char* k : {"alpha", "theta", "a"})
                if (j.contains(k)) throw ConfigError(std::string("model: the bounded variogram has no ") + k);
            m = BrownResnickModel::bounded(number(j, w, "sigma"), number(j, w, "lambda"));
        } else {
            if (j.contains("sigma")) throw ConfigError("model: the power variogram has no sigma");
            m = BrownResnickModel::power(number(j, w, "lambda"), number(j, w, "alpha"),
                                         {value_or(j, w, "theta", 0.0), value_or(j, w, "a", 1.0)});
        }
    } else if (family == "logistic") {
        check_keys(j, w, {"family", "alpha"});
        m = LogisticModel{number(j, w, "alpha")};
    } else {
        throw ConfigError("model: unknown family '" + family + "' (gaussian, brown_resnick, logistic)");
    }
    validate(m);
    return m;
}

inline json model_to_json(const AnyModel& m) {
    json j;
    if (const auto* g = std::get_if<CorrelationModel>(&m)) {
        j["family"] = "gaussian";
        j["correlation"] = std::string(to_string(g->family));
    } else if (const auto* b = std::get_if<BrownResnickModel>(&m)) {
        j["family"] = "brown_resnick";
        j["variogram"] = std::string(to_string(b->family));
    } else {
        j["family"] = "logistic";
    }
    const auto names = param_names(m);
    const auto p = params(m);
    for (std::size_t i = 0; i < names.size(); ++i) j[names[i]] = p[i];
    return j;
}

// ---- likelihood and numerical options ---------------------------------------

inline LikelihoodSpec spec_from_json(const json& j, const std::string& w, std::optional<std::uint64_t> global_seed) {
    check_keys(j, w, {"method", "d", "delta", "ordering", "ordering_seed", "maxmin_ties", "omega"});
    LikelihoodSpec s;
    s.method = parse_method(value_or<std::string>(j, w, "method", "vecchia"));
    s.d = value_or(j, w, "d", s.d);
    if (j.contains("delta")) s.delta = extended_number(j.at("delta"), w + ".delta");
    s.ordering = parse_ordering(value_or<std::string>(j, w, "ordering", "max_min"));
    s.ties = parse_tie_break(value_or<std::string>(j, w, "maxmin_ties", "random"));
    s.omega = value_or(j, w, "omega", s.omega);
    const bool seeded = s.method == Method::vecchia &&
                        (s.ordering == OrderingKind::random ||
                         (s.ordering == OrderingKind::max_min && s.ties == TieBreak::random));
    if (j.contains("ordering_seed")) {
        s.seed = parse_seed(j.at("ordering_seed"), w + ".ordering_seed");
    } else if (seeded) {
        if (!global_seed) throw ConfigError(w + ": a randomised ordering needs ordering_seed or a global seed");
        s.seed = *global_seed;
    }
    s.validate();
    return s;
}

inline json spec_to_json(const LikelihoodSpec& s) {
    return {{"method", std::string(to_string(s.method))},
            {"d", s.d},
            {"delta", extended_to_json(s.delta)},
            {"ordering", std::string(to_string(s.ordering))},
            {"ordering_seed", s.seed},
            {"maxmin_ties", std::string(to_string(s.ties))},
            {"omega", s.omega}};
}

struct NumericOptions {
    MvnCdfOptions mvn;
    MvnCdfOptions vcov_mvn{1e-9};
};

inline NumericOptions numeric_from_json(const json& j) {
    const std::string w = "mvn";
    check_keys(j, w, {"abs_tol", "vcov_abs_tol", "max_points", "force_qmc"});
    NumericOptions o;
    o.mvn.abs_tol = value_or(j, w, "abs_tol", o.mvn.abs_tol);
    o.vcov_mvn.abs_tol = value_or(j, w, "vcov_abs_tol", o.vcov_mvn.abs_tol);
    o.mvn.max_points = value_or(j, w, "max_points", o.mvn.max_points);
    o.mvn.force_qmc = value_or(j, w, "force_qmc", false);
    require(o.mvn.abs_tol > 0.0 && o.vcov_mvn.abs_tol > 0.0, "mvn tolerances must be positive");
    o.vcov_mvn.max_points = o.mvn.max_points;
    o.vcov_mvn.force_qmc = o.mvn.force_qmc;
    return o;
}

inline json numeric_to_json(const NumericOptions& o) {
    return {{"abs_tol", o.mvn.abs_tol},
            {"vcov_abs_tol", o.vcov_mvn.abs_tol},
            {"max_points", o.mvn.max_points},
            {"force_qmc", o.mvn.force_qmc}};
}

// ---- sites ------------------------------------------------------------------

inline fs::path resolve_path(const std::string& p, const fs::path& base) {
    fs::path path(p);
    if (path.is_relative()) path = base / path;
    return path.lexically_normal();
}

// {"grid": side} or {"file": path}; file paths become absolute.
inline json resolve_sites(const json& j, const fs::path& base) {
    check_keys(j, "sites", {"grid", "file"});
    if (j.contains("grid") == j.contains("file")) throw ConfigError("sites: give exactly one of 'grid' or 'file'");
    if (j.contains("grid")) {
        const int side = get_as<int>(j.at("grid"), "sites.grid");
        require(side >= 1 && side <= 1000, "sites.grid must lie in [1, 1000]");
        return {{"grid", side}};
    }
    return {{"file", resolve_path(get_as<std::string>(j.at("file"), "sites.file"), base).string()}};
}

inline SiteSet load_sites(const json& resolved) {
    if (resolved.contains("grid")) return make_grid(resolved.at("grid").get<int>());
    return read_sites(resolved.at("file").get<std::string>());
}

inline json matrix_to_json(const Eigen::MatrixXd& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json r = json::array();
        for (Eigen::Index k = 0; k < m.cols(); ++k) r.push_back(m(i, k));
        rows.push_back(std::move(r));
    }
    return rows;
}

inline json read_json_file(const fs::path& p) {
    std::ifstream in(p);
    if (!in) throw IoError("cannot open '" + p.string() + "' for reading");
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError(p.string() + ": invalid JSON (" + e.what() + ")");
    }
}

inline void write_json_file(const fs::path& p, const json& j) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw IoError("cannot open '" + p.string() + "' for writing");
    out << j.dump(2) << '\n';
    out.flush();
    if (!out) throw IoError("write to '" + p.string() + "' failed");
}

} // namespace vecchia::cli
