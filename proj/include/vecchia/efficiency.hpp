#pragma once

#include <cmath>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "vecchia/error.hpp"
#include "vecchia/gaussian.hpp"
#include "vecchia/parallel.hpp"
#include "vecchia/spatial.hpp"

namespace vecchia {

struct SchemeTerm {
    std::vector<int> sites;
    double weight = 1.0;
};

// Weighted collection of marginal log-densities.
struct WeightedScheme {
    std::string name;
    std::vector<SchemeTerm> terms;

    std::size_t size() const { return terms.size(); }
    std::size_t max_term_size() const {
        std::size_t m = 0;
        for (const auto& t : terms) m = std::max(m, t.sites.size());
        return m;
    }
};

inline WeightedScheme full_scheme(std::size_t n_sites) {
    SchemeTerm t;
    t.sites.resize(n_sites);
    std::iota(t.sites.begin(), t.sites.end(), 0);
    return {"full", {std::move(t)}};
}

inline WeightedScheme composite_scheme(const SubsetPlan& plan) {
    require(!plan.empty(), "composite scheme has no terms (cutoff too small for d = " + std::to_string(plan.d) + ")");
    WeightedScheme s;
    s.name = "composite(d=" + std::to_string(plan.d) + ", delta=" + std::to_string(plan.delta) + ")";
    s.terms.reserve(plan.size());
    for (const auto& sub : plan.subsets) s.terms.push_back({sub, 1.0});
    return s;
}

// Weight +1 on {p(j)} u S_{d-1}(j;p) and omega on S_{d-1}(j;p) (omega = -1 is Vecchia).
inline WeightedScheme vecchia_scheme(const OrderingPlan& plan, const ConditioningSets& sets, int d,
                                     double omega = -1.0) {
    require(std::isfinite(omega), "weight omega must be finite");
    require(sets.size() == plan.size(), "conditioning sets do not match the ordering");
    WeightedScheme s;
    s.name = "vecchia(d=" + std::to_string(d) + ", ordering=" + std::string(to_string(plan.kind)) + ")";
    for (std::size_t j = 0; j < plan.size(); ++j) {
        std::vector<int> joint{plan.perm[j]};
        joint.insert(joint.end(), sets[j].begin(), sets[j].end());
        s.terms.push_back({std::move(joint), 1.0});
        if (!sets[j].empty()) s.terms.push_back({sets[j], omega});
    }
    return s;
}

// Elementwise analytic derivatives of the correlation matrix.
struct CovarianceDerivatives {
    Eigen::MatrixXd sigma;
    std::vector<Eigen::MatrixXd> first;                // dSigma/dpsi_i
    std::vector<std::vector<Eigen::MatrixXd>> second;  // d2Sigma/dpsi_i dpsi_j (empty if order 1)
};

inline CovarianceDerivatives covariance_derivatives(const CorrelationModel& model, const SiteSet& sites, int order,
                                                    const Metric& metric = {}) {
    require(order == 1 || order == 2, "derivative order must be 1 or 2");
    model.validate();
    const int m = model.num_params();
    const auto n = static_cast<Eigen::Index>(sites.size());
    CovarianceDerivatives out;
    out.sigma = correlation_matrix(model, sites, metric);
    out.first.assign(m, Eigen::MatrixXd::Zero(n, n));
    if (order == 2) out.second.assign(m, std::vector<Eigen::MatrixXd>(m, Eigen::MatrixXd::Zero(n, n)));
    for (Eigen::Index a = 0; a < n; ++a) {
        for (Eigen::Index b = 0; b < a; ++b) {
            const double h = sites.distance(a, b, metric);
            for (int i = 0; i < m; ++i) {
                out.first[i](a, b) = out.first[i](b, a) = model.drho(h, i);
                if (order == 2)
                    for (int j = 0; j < m; ++j) out.second[i][j](a, b) = out.second[i][j](b, a) = model.d2rho(h, i, j);
            }
        }
    }
    return out;
}

namespace detail {

// Per-term quantities: the inverse and d(Sigma_S^{-1})/dpsi_i.
template <class Mat>
struct TermCache {
    std::vector<int> idx;
    double weight = 0.0;
    Mat inv;
    std::vector<Mat> dinv;
};

template <class Mat>
Mat cut(const Eigen::MatrixXd& a, const std::vector<int>& r, const std::vector<int>& c) {
    Mat out(r.size(), c.size());
    for (std::size_t i = 0; i < r.size(); ++i)
        for (std::size_t j = 0; j < c.size(); ++j) out(i, j) = a(r[i], c[j]);
    return out;
}

template <class Mat>
std::vector<TermCache<Mat>> term_caches(const WeightedScheme& scheme, const CovarianceDerivatives& cd,
                                        unsigned threads) {
    std::vector<TermCache<Mat>> out(scheme.size());
    const int m = static_cast<int>(cd.first.size());
    parallel_for(scheme.size(), threads, [&](std::size_t t) {
        const auto& term = scheme.terms[t];
        auto& c = out[t];
        c.idx = term.sites;
        c.weight = term.weight;
        const Mat s = cut<Mat>(cd.sigma, c.idx, c.idx);
        Eigen::LLT<Mat> llt(s);
        if (llt.info() != Eigen::Success) throw NumericError(scheme.name + ": singular term covariance");
        c.inv = llt.solve(Mat::Identity(s.rows(), s.cols()));
        c.dinv.resize(m);
        for (int i = 0; i < m; ++i) c.dinv[i] = -c.inv * cut<Mat>(cd.first[i], c.idx, c.idx) * c.inv;
    });
    return out;
}

} // namespace detail

// J_ij = 1/2 sum_S w_S [d2 log|Sigma_S| + tr(Sigma_S d2 Sigma_S^{-1})].
inline Eigen::MatrixXd sensitivity_J(const WeightedScheme& scheme, const CovarianceDerivatives& cd,
                                     unsigned threads = 1) {
    require(!cd.second.empty(), "sensitivity matrix needs second derivatives");
    const int m = static_cast<int>(cd.first.size());
    std::vector<Eigen::MatrixXd> part(scheme.size(), Eigen::MatrixXd::Zero(m, m));
    parallel_for(scheme.size(), threads, [&](std::size_t t) {
        const auto& term = scheme.terms[t];
        if (term.weight == 0.0) return;
        const auto& idx = term.sites;
        const Eigen::MatrixXd s = detail::cut<Eigen::MatrixXd>(cd.sigma, idx, idx);
        Eigen::LLT<Eigen::MatrixXd> llt(s);
        if (llt.info() != Eigen::Success) throw NumericError(scheme.name + ": singular term covariance");
        const Eigen::MatrixXd inv = llt.solve(Eigen::MatrixXd::Identity(s.rows(), s.cols()));
        std::vector<Eigen::MatrixXd> d1(m), a(m);
        for (int i = 0; i < m; ++i) {
            d1[i] = detail::cut<Eigen::MatrixXd>(cd.first[i], idx, idx);
            a[i] = inv * d1[i];
        }
        for (int i = 0; i < m; ++i) {
            for (int j = 0; j <= i; ++j) {
                const Eigen::MatrixXd d2 = detail::cut<Eigen::MatrixXd>(cd.second[i][j], idx, idx);
                // d2 log|S| = tr(S^-1 S_ij) - tr(S^-1 S_j S^-1 S_i)
                const double dlogdet = (inv * d2).trace() - (a[j] * a[i]).trace();
                // d2 S^-1 = S^-1 S_j S^-1 S_i S^-1 + S^-1 S_i S^-1 S_j S^-1 - S^-1 S_ij S^-1
                const Eigen::MatrixXd d2inv = a[j] * a[i] * inv + a[i] * a[j] * inv - inv * d2 * inv;
                const double v = 0.5 * term.weight * (dlogdet + (s * d2inv).trace());
                part[t](i, j) = v;
                part[t](j, i) = v;
            }
        }
    });
    Eigen::MatrixXd j = Eigen::MatrixXd::Zero(m, m);
    for (const auto& p : part) j += p;
    return j;
}

namespace detail {

template <class Mat>
Eigen::MatrixXd variability_pairs(const std::vector<TermCache<Mat>>& tc, const Eigen::MatrixXd& sigma, int m,
                                  unsigned threads) {
    const std::size_t nt = tc.size();
    std::vector<Eigen::MatrixXd> rows(nt, Eigen::MatrixXd::Zero(m, m));
    parallel_for(nt, threads, [&](std::size_t a) {
        const auto& t1 = tc[a];
        if (t1.weight == 0.0) return;
        Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(m, m);
        std::vector<Mat> left(m);
        for (std::size_t b = a; b < nt; ++b) {
            const auto& t2 = tc[b];
            if (t2.weight == 0.0) continue;
            const Mat c = cut<Mat>(sigma, t1.idx, t2.idx);
            // t_ij = tr(G1_i C G2_j C^T)
            for (int i = 0; i < m; ++i) left[i] = t1.dinv[i] * c;
            Eigen::MatrixXd t(m, m);
            for (int j = 0; j < m; ++j) {
                const Mat right = t2.dinv[j] * c.transpose();
                for (int i = 0; i < m; ++i) t(i, j) = (left[i].array() * right.transpose().array()).sum();
            }
            const double w = t1.weight * t2.weight;
            if (b == a) acc += w * t;
            else acc += w * (t + t.transpose());
        }
        rows[a] = 0.5 * acc;
    });
    Eigen::MatrixXd k = Eigen::MatrixXd::Zero(m, m);
    for (const auto& r : rows) k += r;
    return k;
}

} // namespace detail

// K_ij = 1/2 sum_{S1,S2} w1 w2 tr(dSigma_S1^{-1}/dpsi_i Sigma_{S1,S2} dSigma_S2^{-1}/dpsi_j Sigma_{S2,S1}).
inline Eigen::MatrixXd variability_K(const WeightedScheme& scheme, const CovarianceDerivatives& cd,
                                     unsigned threads = 1) {
    const int m = static_cast<int>(cd.first.size());
    if (scheme.max_term_size() <= 8) {
        using Small = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, 8, 8>;
        return detail::variability_pairs(detail::term_caches<Small>(scheme, cd, threads), cd.sigma, m, threads);
    }
    return detail::variability_pairs(detail::term_caches<Eigen::MatrixXd>(scheme, cd, threads), cd.sigma, m,
                                     threads);
}

// Same matrix through B_i = sum_S w_S embed(dSigma_S^{-1}/dpsi_i): K_ij = 1/2 tr(B_i Sigma B_j Sigma).
inline Eigen::MatrixXd variability_K_dense(const WeightedScheme& scheme, const CovarianceDerivatives& cd) {
    const int m = static_cast<int>(cd.first.size());
    const auto n = cd.sigma.rows();
    std::vector<Eigen::MatrixXd> b(m, Eigen::MatrixXd::Zero(n, n));
    for (const auto& c : detail::term_caches<Eigen::MatrixXd>(scheme, cd, 1)) {
        for (int i = 0; i < m; ++i)
            for (std::size_t r = 0; r < c.idx.size(); ++r)
                for (std::size_t s = 0; s < c.idx.size(); ++s) b[i](c.idx[r], c.idx[s]) += c.weight * c.dinv[i](r, s);
    }
    Eigen::MatrixXd k(m, m);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < m; ++j) k(i, j) = 0.5 * (b[i] * cd.sigma * b[j] * cd.sigma).trace();
    return k;
}

struct AREReport {
    std::string scheme;
    std::size_t term_count = 0;
    std::vector<std::string> param_names;
    std::vector<double> psi0;
    Eigen::MatrixXd J, K, V;
    Eigen::MatrixXd V_full;
    std::vector<double> marginal_are;  // fractions; 1 = full efficiency
    double overall_are = 0.0;
};

inline Eigen::MatrixXd sandwich(const Eigen::MatrixXd& j, const Eigen::MatrixXd& k, double n,
                                const std::string& name) {
    Eigen::FullPivLU<Eigen::MatrixXd> lu(j);
    if (!lu.isInvertible() || !std::isfinite(j.sum())) {
        throw NumericError(name + ": sensitivity matrix is singular (parameters not identifiable)");
    }
    const Eigen::MatrixXd ji = lu.inverse();
    Eigen::MatrixXd v = ji * k * ji / n;
    return 0.5 * (v + v.transpose());
}

inline AREReport are(const WeightedScheme& scheme, const CorrelationModel& model, const SiteSet& sites, double n,
                     const Metric& metric = {}, unsigned threads = 1) {
    require(n > 0.0, "number of replicates must be positive");
    require(!scheme.terms.empty(), scheme.name + ": scheme has no terms");
    const auto cd = covariance_derivatives(model, sites, 2, metric);
    AREReport r;
    r.scheme = scheme.name;
    r.term_count = scheme.size();
    r.param_names = model.param_names();
    r.psi0 = model.params();
    r.J = sensitivity_J(scheme, cd, threads);
    r.K = variability_K(scheme, cd, threads);
    r.V = sandwich(r.J, r.K, n, scheme.name);
    const auto full = full_scheme(sites.size());
    const Eigen::MatrixXd jf = sensitivity_J(full, cd, 1);
    r.V_full = sandwich(jf, jf, n, "full");
    const auto m = r.V.rows();
    for (Eigen::Index i = 0; i < m; ++i) r.marginal_are.push_back(std::sqrt(r.V_full(i, i) / r.V(i, i)));
    r.overall_are = std::pow(r.V_full.determinant() / r.V.determinant(), 1.0 / (2.0 * static_cast<double>(m)));
    return r;
}

} // namespace vecchia
