#pragma once

// Composite, Vecchia and weighted-Vecchia objectives over replicated data,
// their maximisation, sandwich and resampling uncertainty, and the
// cross-validated log score.

#include "vecchia/efficiency.hpp"
#include "vecchia/error.hpp"
#include "vecchia/models.hpp"
#include "vecchia/optim.hpp"
#include "vecchia/parallel.hpp"
#include "vecchia/spatial.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

namespace vecchia {

enum class Method { full, composite, vecchia };

inline std::string_view to_string(Method m) {
    switch (m) {
    case Method::full: return "full";
    case Method::composite: return "composite";
    default: return "vecchia";
    }
}

inline Method parse_method(std::string_view s) {
    if (s == "full") return Method::full;
    if (s == "composite") return Method::composite;
    if (s == "vecchia") return Method::vecchia;
    throw ConfigError("unknown likelihood method '" + std::string(s) + "'");
}

struct LikelihoodSpec {
    Method method = Method::vecchia;
    int d = 3;
    double delta = std::numeric_limits<double>::infinity();  // composite cutoff
    OrderingKind ordering = OrderingKind::max_min;
    std::uint64_t seed = 0;
    TieBreak ties = TieBreak::random;
    double omega = -1.0;

    void validate() const {
        if (method == Method::full) return;
        require(d >= 2, "likelihood order d must be at least 2");
        if (method == Method::composite) require(delta > 0.0, "composite cutoff delta must be positive");
        if (method == Method::vecchia) require(std::isfinite(omega) && omega >= -1.0, "omega must lie in [-1, inf)");
    }
};

struct EvalOptions {
    MvnCdfOptions mvn;
    unsigned threads = 1;
};

inline WeightedScheme build_scheme(const LikelihoodSpec& spec, const AnyModel& model, const SiteSet& sites) {
    spec.validate();
    const int n = static_cast<int>(sites.size());
    switch (spec.method) {
    case Method::full:
        require(is_gaussian(model) || n <= kMaxPartitionSize,
                "full max-stable likelihood needs D <= " + std::to_string(kMaxPartitionSize));
        return full_scheme(sites.size());
    case Method::composite:
        require(spec.d <= n, "composite order d exceeds the number of sites");
        return composite_scheme(truncated_subsets(sites, spec.d, spec.delta));
    default: {
        require(spec.d <= n, "Vecchia order d exceeds the number of sites");
        const auto plan = build_ordering(sites, spec.ordering, spec.seed, {}, spec.ties);
        return vecchia_scheme(plan, conditioning_sets(sites, plan, spec.d), spec.d, spec.omega);
    }
    }
}

namespace detail {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

inline std::string term_label(const SiteSet& sites, const std::vector<int>& idx) {
    std::string s = "{";
    for (std::size_t i = 0; i < idx.size(); ++i) s += (i ? "," : "") + std::to_string(sites.ids()[idx[i]]);
    return s + "}";
}

inline void check_data(const AnyModel& model, const Eigen::MatrixXd& data, const SiteSet& sites) {
    require(data.cols() == static_cast<Eigen::Index>(sites.size()), "data has " + std::to_string(data.cols()) +
                                                                        " columns but there are " +
                                                                        std::to_string(sites.size()) + " sites");
    require(data.rows() >= 1, "data has no replicates");
    const bool frechet = !is_gaussian(model);
    for (Eigen::Index i = 0; i < data.rows(); ++i) {
        for (Eigen::Index j = 0; j < data.cols(); ++j) {
            const double v = data(i, j);
            if (!std::isfinite(v) || (frechet && v <= 0.0)) {
                throw ConfigError("data entry (replicate " + std::to_string(i) + ", site " +
                                  std::to_string(sites.ids()[j]) + ") is not a valid " +
                                  (frechet ? "unit Frechet value" : "real number"));
            }
        }
    }
}

} // namespace detail

// Per-replicate objective sum_terms w log f(z_{i,term}).
inline Eigen::VectorXd loglik_by_replicate(const AnyModel& model, const Eigen::MatrixXd& data, const SiteSet& sites,
                                           const WeightedScheme& scheme, const EvalOptions& opt = {}) {
    require(!scheme.terms.empty(), "likelihood scheme has no terms");
    validate(model);
    detail::check_data(model, data, sites);
    const detail::RowMatrix rows = data;
    const Eigen::Index n = rows.rows();
    const std::size_t t = scheme.terms.size();
    Eigen::MatrixXd contrib = Eigen::MatrixXd::Zero(n, static_cast<Eigen::Index>(t));
    parallel_for(t, opt.threads, [&](std::size_t k) {
        const auto& term = scheme.terms[k];
        if (term.weight == 0.0) return;
        std::optional<SubsetLogDensity> dens;
        try {
            dens.emplace(model, sites, term.sites, opt.mvn);
        } catch (const Error& e) {
            throw NumericError("term " + std::to_string(k) + " " + detail::term_label(sites, term.sites) + ": " +
                               e.what());
        }
        for (Eigen::Index i = 0; i < n; ++i) {
            double v;
            try {
                v = (*dens)(std::span<const double>(rows.row(i).data(), static_cast<std::size_t>(rows.cols())));
            } catch (const Error& e) {
                throw NumericError("replicate " + std::to_string(i) + ", term " + std::to_string(k) + " " +
                                   detail::term_label(sites, term.sites) + ": " + e.what());
            }
            contrib(i, static_cast<Eigen::Index>(k)) = term.weight * v;
        }
    });
    Eigen::VectorXd out(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        double s = 0.0;
        for (Eigen::Index k = 0; k < contrib.cols(); ++k) s += contrib(i, k);
        out(i) = s;
    }
    return out;
}

inline double loglik(const AnyModel& model, const Eigen::MatrixXd& data, const SiteSet& sites,
                     const WeightedScheme& scheme, const EvalOptions& opt = {}) {
    return loglik_by_replicate(model, data, sites, scheme, opt).sum();
}

inline double composite_loglik(const AnyModel& model, const Eigen::MatrixXd& data, const SiteSet& sites,
                               const SubsetPlan& plan, const EvalOptions& opt = {}) {
    return loglik(model, data, sites, composite_scheme(plan), opt);
}

inline double vecchia_loglik(const AnyModel& model, const Eigen::MatrixXd& data, const SiteSet& sites,
                             const OrderingPlan& plan, int d, double omega = -1.0, const EvalOptions& opt = {}) {
    require(std::isfinite(omega) && omega >= -1.0, "omega must lie in [-1, inf)");
    return loglik(model, data, sites, vecchia_scheme(plan, conditioning_sets(sites, plan, d), d, omega), opt);
}

struct FitOptions {
    std::vector<bool> fixed;  // empty: every parameter is free
    NelderMeadOptions optimizer;
    int restarts = 3;            // 1: user init only; 3: init and init -/+ offset on the transformed scale
    double restart_offset = 0.5;
    bool compute_vcov = true;
    MvnCdfOptions vcov_mvn{1e-9};  // tighter CDF tolerance for numerical derivatives
};

struct FitResult {
    std::string model;
    std::vector<std::string> names;
    std::vector<double> psi_hat;
    std::vector<bool> fixed;
    double loglik = 0.0;
    std::vector<double> std_err;
    Eigen::MatrixXd vcov;
    bool vcov_clipped = false;
    int n_evals = 0;
    bool converged = false;
    double wall_time_s = 0.0;
};

namespace detail {

struct FreeParams {
    AnyModel base;
    std::vector<ParamTransform> tr;
    std::vector<int> free;
    std::vector<double> psi;

    FreeParams(const AnyModel& m, const std::vector<bool>& fixed) : base(m), tr(param_transforms(m)), psi(params(m)) {
        require(fixed.empty() || fixed.size() == psi.size(), "fixed mask length does not match the parameters");
        for (std::size_t i = 0; i < psi.size(); ++i)
            if (fixed.empty() || !fixed[i]) free.push_back(static_cast<int>(i));
        require(!free.empty(), "every parameter is fixed; nothing to estimate");
    }

    Eigen::VectorXd to_t() const {
        Eigen::VectorXd t(free.size());
        for (std::size_t k = 0; k < free.size(); ++k) t(k) = tr[free[k]].forward(psi[free[k]]);
        return t;
    }
    AnyModel model(const Eigen::VectorXd& t) const {
        auto p = psi;
        for (std::size_t k = 0; k < free.size(); ++k) p[free[k]] = tr[free[k]].inverse(t(k));
        return with_params(base, p);
    }
};

inline bool usable(const AnyModel& m) {
    try {
        validate(m);
        return true;
    } catch (const ConfigError&) {
        return false;
    }
}

} // namespace detail

struct SandwichResult {
    Eigen::MatrixXd vcov;  // natural scale, zero rows/columns for fixed parameters
    Eigen::MatrixXd J;     // transformed scale, free parameters
    Eigen::MatrixXd K;
    bool clipped = false;
};

// Godambe sandwich from central-difference scores and Hessian on the
// transformed scale, mapped back by the delta method.
inline SandwichResult sandwich_vcov(const AnyModel& psi_hat, const Eigen::MatrixXd& data, const SiteSet& sites,
                                    const WeightedScheme& scheme, const std::vector<bool>& fixed = {},
                                    const EvalOptions& opt = {}) {
    const Eigen::Index n = data.rows();
    require(n >= 2, "sandwich covariance needs at least two replicates");
    const detail::FreeParams fp(psi_hat, fixed);
    const Eigen::VectorXd t0 = fp.to_t();
    const int m = static_cast<int>(t0.size());
    Eigen::VectorXd h(m);
    for (int k = 0; k < m; ++k) h(k) = 1e-4 * std::max(1.0, std::abs(t0(k)));
    auto at = [&](const Eigen::VectorXd& t) { return loglik_by_replicate(fp.model(t), data, sites, scheme, opt); };

    const Eigen::VectorXd l0 = at(t0);
    std::vector<Eigen::VectorXd> lp(m), lm(m);
    Eigen::MatrixXd scores(n, m);
    for (int k = 0; k < m; ++k) {
        Eigen::VectorXd t = t0;
        t(k) += h(k);
        lp[k] = at(t);
        t(k) = t0(k) - h(k);
        lm[k] = at(t);
        scores.col(k) = (lp[k] - lm[k]) / (2.0 * h(k));
    }
    Eigen::MatrixXd hess(m, m);
    for (int k = 0; k < m; ++k) {
        hess(k, k) = (lp[k].sum() - 2.0 * l0.sum() + lm[k].sum()) / (h(k) * h(k));
        for (int l = k + 1; l < m; ++l) {
            double s = 0.0;
            for (int a : {1, -1}) {
                for (int b : {1, -1}) {
                    Eigen::VectorXd t = t0;
                    t(k) += a * h(k);
                    t(l) += b * h(l);
                    s += a * b * at(t).sum();
                }
            }
            hess(k, l) = hess(l, k) = s / (4.0 * h(k) * h(l));
        }
    }
    SandwichResult res;
    const double nn = static_cast<double>(n);
    res.J = -hess / nn;
    res.K = scores.transpose() * scores / nn;

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(0.5 * (res.J + res.J.transpose()));
    Eigen::VectorXd ev = eig.eigenvalues();
    const double floor = 1e-8 * std::max(ev.cwiseAbs().maxCoeff(), 1e-300);
    for (int k = 0; k < m; ++k) {
        if (ev(k) < floor) {
            ev(k) = floor;
            res.clipped = true;
        }
    }
    const Eigen::MatrixXd jinv = eig.eigenvectors() * ev.cwiseInverse().asDiagonal() * eig.eigenvectors().transpose();
    const Eigen::MatrixXd vt = jinv * res.K * jinv / nn;

    Eigen::VectorXd g(m);
    for (int k = 0; k < m; ++k) g(k) = fp.tr[fp.free[k]].jacobian(t0(k));
    const Eigen::MatrixXd vn = g.asDiagonal() * vt * g.asDiagonal();
    const int p = static_cast<int>(fp.psi.size());
    res.vcov = Eigen::MatrixXd::Zero(p, p);
    for (int a = 0; a < m; ++a)
        for (int b = 0; b < m; ++b) res.vcov(fp.free[a], fp.free[b]) = vn(a, b);
    return res;
}

// Maximises the objective over the free parameters with Nelder-Mead on the
// transformed scale.
inline FitResult fit(const AnyModel& init, const Eigen::MatrixXd& data, const SiteSet& sites,
                     const WeightedScheme& scheme, const FitOptions& fo = {}, const EvalOptions& opt = {}) {
    const auto start = std::chrono::steady_clock::now();
    validate(init);
    detail::check_data(init, data, sites);
    require(fo.restarts == 1 || fo.restarts == 3, "restarts must be 1 or 3");
    const detail::FreeParams fp(init, fo.fixed);
    const double n = static_cast<double>(data.rows());

    int evals = 0;
    auto objective = [&](const Eigen::VectorXd& t) {
        const AnyModel m = fp.model(t);
        if (!detail::usable(m)) return std::numeric_limits<double>::infinity();
        try {
            return -loglik(m, data, sites, scheme, opt) / n;
        } catch (const NumericError&) {
            return std::numeric_limits<double>::infinity();
        }
    };

    const Eigen::VectorXd t0 = fp.to_t();
    std::vector<Eigen::VectorXd> starts{t0};
    if (fo.restarts == 3) {
        starts.push_back(t0.array() - fo.restart_offset);
        starts.push_back(t0.array() + fo.restart_offset);
    }
    NelderMeadResult best;
    bool have = false;
    for (const auto& s : starts) {
        auto r = nelder_mead(objective, s, fo.optimizer);
        evals += r.evals;
        if (!have || r.f < best.f) best = std::move(r), have = true;
    }

    FitResult res;
    const AnyModel hat = fp.model(best.x);
    res.model = model_name(hat);
    res.names = param_names(hat);
    res.psi_hat = params(hat);
    res.fixed = fo.fixed.empty() ? std::vector<bool>(res.psi_hat.size(), false) : fo.fixed;
    res.loglik = std::isfinite(best.f) && best.f < 1e99 ? -best.f * n : -std::numeric_limits<double>::infinity();
    res.n_evals = evals;
    res.converged = best.converged && std::isfinite(res.loglik);
    res.std_err.assign(res.psi_hat.size(), 0.0);
    res.vcov = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(res.psi_hat.size()),
                                     static_cast<Eigen::Index>(res.psi_hat.size()));
    if (fo.compute_vcov && data.rows() >= 2 && std::isfinite(res.loglik)) {
        EvalOptions vo = opt;
        vo.mvn = fo.vcov_mvn;
        const auto sw = sandwich_vcov(hat, data, sites, scheme, fo.fixed, vo);
        res.vcov = sw.vcov;
        res.vcov_clipped = sw.clipped;
        for (std::size_t k = 0; k < res.psi_hat.size(); ++k)
            res.std_err[k] = std::sqrt(std::max(sw.vcov(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(k)), 0.0));
    }
    res.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return res;
}

inline FitResult fit(const AnyModel& init, const Eigen::MatrixXd& data, const SiteSet& sites,
                     const LikelihoodSpec& spec, const FitOptions& fo = {}, const EvalOptions& opt = {}) {
    return fit(init, data, sites, build_scheme(spec, init, sites), fo, opt);
}

enum class ResampleKind { jackknife, parametric_bootstrap };

inline ResampleKind parse_resample_kind(std::string_view s) {
    if (s == "jackknife") return ResampleKind::jackknife;
    if (s == "bootstrap" || s == "parametric_bootstrap") return ResampleKind::parametric_bootstrap;
    throw ConfigError("unknown resampling scheme '" + std::string(s) + "'");
}

struct Interval {
    double lower = 0.0;
    double upper = 0.0;
};

struct ResampleResult {
    ResampleKind kind = ResampleKind::jackknife;
    double level = 0.95;
    std::vector<std::string> names;
    std::vector<Interval> intervals;
    std::vector<std::vector<double>> estimates;  // successful refits, natural scale
    std::size_t attempted = 0;
    std::size_t failures = 0;
};

// Jackknife: delete-one-replicate refits, normal interval from the jackknife
// variance. Parametric bootstrap: B refits on data simulated from psi_hat,
// percentile interval. Refits that fail to converge or run to the boundary
// of the transformed scale count as failures.
inline ResampleResult resample_ci(const AnyModel& psi_hat, const Eigen::MatrixXd& data, const SiteSet& sites,
                                  const WeightedScheme& scheme, ResampleKind kind, std::size_t b, std::uint64_t seed,
                                  double level, const FitOptions& fo = {}, const EvalOptions& opt = {}) {
    require(level > 0.0 && level < 1.0, "confidence level must lie in (0, 1)");
    const Eigen::Index n = data.rows();
    const std::size_t reps = kind == ResampleKind::jackknife ? static_cast<std::size_t>(n) : b;
    require(reps >= 2, "resampling needs at least two refits");
    if (kind == ResampleKind::jackknife) require(n >= 3, "jackknife needs at least three replicates");

    FitOptions rf = fo;
    rf.compute_vcov = false;
    rf.restarts = 1;
    EvalOptions inner = opt;
    inner.threads = 1;
    const detail::FreeParams fp(psi_hat, fo.fixed);

    std::vector<std::vector<double>> est(reps);
    std::vector<char> ok(reps, 0);
    parallel_for(reps, opt.threads, [&](std::size_t r) {
        Eigen::MatrixXd d;
        if (kind == ResampleKind::jackknife) {
            d.resize(n - 1, data.cols());
            for (Eigen::Index i = 0, k = 0; i < n; ++i)
                if (i != static_cast<Eigen::Index>(r)) d.row(k++) = data.row(i);
        } else {
            d = simulate(psi_hat, sites, static_cast<std::size_t>(n), stream_seed(seed, r));
        }
        try {
            const auto f = fit(psi_hat, d, sites, scheme, rf, inner);
            const detail::FreeParams refit(with_params(psi_hat, f.psi_hat), fo.fixed);
            const Eigen::VectorXd t = refit.to_t();
            if (f.converged && t.allFinite() && t.cwiseAbs().maxCoeff() <= 20.0) {
                est[r] = f.psi_hat;
                ok[r] = 1;
            }
        } catch (const Error&) {
        }
    });

    ResampleResult res;
    res.kind = kind;
    res.level = level;
    res.names = param_names(psi_hat);
    res.attempted = reps;
    for (std::size_t r = 0; r < reps; ++r) {
        if (ok[r]) res.estimates.push_back(est[r]);
        else ++res.failures;
    }
    if (res.failures * 10 > reps) {
        throw NumericError(std::to_string(res.failures) + " of " + std::to_string(reps) +
                           " refits failed (more than 10%); resampling aborted");
    }
    const auto centre = params(psi_hat);
    const std::size_t p = centre.size(), m = res.estimates.size();
    const double z = norm_ppf(0.5 + level / 2.0);
    for (std::size_t k = 0; k < p; ++k) {
        std::vector<double> v;
        for (const auto& e : res.estimates) v.push_back(e[k]);
        if (kind == ResampleKind::jackknife) {
            double mean = 0.0;
            for (double x : v) mean += x;
            mean /= static_cast<double>(m);
            double ss = 0.0;
            for (double x : v) ss += (x - mean) * (x - mean);
            const double se = std::sqrt(static_cast<double>(m - 1) / static_cast<double>(m) * ss);
            res.intervals.push_back({centre[k] - z * se, centre[k] + z * se});
        } else {
            std::sort(v.begin(), v.end());
            auto quantile = [&](double q) {
                const double pos = q * static_cast<double>(m - 1);
                const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
                const std::size_t hi = std::min(lo + 1, m - 1);
                return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
            };
            res.intervals.push_back({quantile(0.5 - level / 2.0), quantile(0.5 + level / 2.0)});
        }
    }
    return res;
}

// The last ceil(fraction * D) sites of the max-min ordering.
inline std::vector<int> validation_sites(const SiteSet& sites, double fraction = 0.1, std::uint64_t seed = 0,
                                         TieBreak ties = TieBreak::random) {
    require(fraction > 0.0 && fraction < 1.0, "validation fraction must lie in (0, 1)");
    const auto plan = build_ordering(sites, OrderingKind::max_min, seed, {}, ties);
    const std::size_t k = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(sites.size())));
    return {plan.perm.end() - static_cast<std::ptrdiff_t>(k), plan.perm.end()};
}

// S = -sum_i sum_{j in V} log f(z_ij | z_{i,T(j)}) with T(j) the k nearest
// training sites.
inline double cv_logscore(const AnyModel& model, const Eigen::MatrixXd& data, const SiteSet& sites,
                          const std::vector<int>& validation, std::size_t k_neighbors = 4,
                          const EvalOptions& opt = {}) {
    require(!validation.empty(), "validation set is empty");
    std::vector<char> is_val(sites.size(), 0);
    for (int v : validation) {
        require(v >= 0 && static_cast<std::size_t>(v) < sites.size(), "validation site out of range");
        require(!is_val[v], "validation site listed twice");
        is_val[v] = 1;
    }
    std::vector<int> training;
    for (std::size_t i = 0; i < sites.size(); ++i)
        if (!is_val[i]) training.push_back(static_cast<int>(i));
    require(training.size() >= k_neighbors, "fewer training sites than requested neighbours");
    WeightedScheme scheme;
    scheme.name = "cv";
    for (int v : validation) {
        const auto nb = nearest_among(sites, v, training, k_neighbors);
        std::vector<int> joint{v};
        joint.insert(joint.end(), nb.begin(), nb.end());
        scheme.terms.push_back({std::move(joint), 1.0});
        if (!nb.empty()) scheme.terms.push_back({nb, -1.0});
    }
    return -loglik(model, data, sites, scheme, opt);
}

} // namespace vecchia
