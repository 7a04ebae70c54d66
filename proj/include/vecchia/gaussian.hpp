#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "vecchia/error.hpp"
#include "vecchia/mvn.hpp"
#include "vecchia/random.hpp"
#include "vecchia/spatial.hpp"

namespace vecchia {

enum class CorrelationFamily { exponential, powered_exponential };

inline std::string_view to_string(CorrelationFamily f) {
    return f == CorrelationFamily::exponential ? "exponential" : "powered_exponential";
}

inline CorrelationFamily parse_correlation_family(std::string_view s) {
    if (s == "exponential") return CorrelationFamily::exponential;
    if (s == "powered_exponential" || s == "powered-exponential") return CorrelationFamily::powered_exponential;
    throw ConfigError("unknown correlation family '" + std::string(s) + "'");
}

// rho(h) = exp(-(h/lambda)^kappa); kappa is 1 for the exponential family.
struct CorrelationModel {
    CorrelationFamily family = CorrelationFamily::exponential;
    double lambda = 1.0;
    double kappa = 1.0;

    static CorrelationModel exponential(double lambda) { return {CorrelationFamily::exponential, lambda, 1.0}; }
    static CorrelationModel powered_exponential(double lambda, double kappa) {
        return {CorrelationFamily::powered_exponential, lambda, kappa};
    }

    void validate() const {
        require(std::isfinite(lambda) && lambda > 0.0, "correlation range lambda must be positive");
        if (family == CorrelationFamily::exponential) {
            require(kappa == 1.0, "exponential correlation has kappa fixed at 1");
        } else {
            require(std::isfinite(kappa) && kappa > 0.0 && kappa <= 2.0, "correlation shape kappa must lie in (0, 2]");
        }
    }

    // Parameters: lambda, then kappa for the powered family.
    int num_params() const { return family == CorrelationFamily::exponential ? 1 : 2; }
    std::vector<std::string> param_names() const {
        if (family == CorrelationFamily::exponential) return {"lambda"};
        return {"lambda", "kappa"};
    }
    std::vector<double> params() const {
        if (family == CorrelationFamily::exponential) return {lambda};
        return {lambda, kappa};
    }
    CorrelationModel with_params(const std::vector<double>& p) const {
        require(static_cast<int>(p.size()) == num_params(), "wrong number of correlation parameters");
        CorrelationModel m = *this;
        m.lambda = p[0];
        if (family == CorrelationFamily::powered_exponential) m.kappa = p[1];
        return m;
    }

    double rho(double h) const {
        if (h == 0.0) return 1.0;
        const double r = h / lambda;
        return std::exp(-(family == CorrelationFamily::exponential ? r : std::pow(r, kappa)));
    }

    // First derivative of rho(h) in parameter i.
    double drho(double h, int i) const {
        if (h == 0.0) return 0.0;
        const double p = rho(h);
        const double u = family == CorrelationFamily::exponential ? h / lambda : std::pow(h / lambda, kappa);
        if (i == 0) return p * kappa * u / lambda;
        return -p * u * std::log(h / lambda);
    }

    // Second derivative of rho(h) in parameters i and j.
    double d2rho(double h, int i, int j) const {
        if (h == 0.0) return 0.0;
        const double p = rho(h);
        const double u = family == CorrelationFamily::exponential ? h / lambda : std::pow(h / lambda, kappa);
        const double l = std::log(h / lambda);
        if (i == 0 && j == 0) return p * kappa * u * (kappa * u - kappa - 1.0) / (lambda * lambda);
        if (i == 1 && j == 1) return p * u * l * l * (u - 1.0);
        return p * u / lambda * (1.0 + kappa * l * (1.0 - u));
    }
};

namespace detail {

// Index of the first leading minor that is not positive definite, or -1.
inline int failing_minor(const Eigen::MatrixXd& a) {
    const Eigen::Index n = a.rows();
    Eigen::MatrixXd l = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        double s = a(i, i) - l.row(i).head(i).squaredNorm();
        if (!(s > 0.0)) return static_cast<int>(i) + 1;
        l(i, i) = std::sqrt(s);
        for (Eigen::Index j = i + 1; j < n; ++j) l(j, i) = (a(j, i) - l.row(j).head(i).dot(l.row(i).head(i))) / l(i, i);
    }
    return -1;
}

inline Eigen::LLT<Eigen::MatrixXd> checked_llt(const Eigen::MatrixXd& a, const char* what) {
    Eigen::LLT<Eigen::MatrixXd> llt(a);
    if (llt.info() != Eigen::Success) {
        throw NumericError(std::string(what) + ": matrix is not positive definite (leading minor " +
                           std::to_string(failing_minor(a)) + ")");
    }
    return llt;
}

inline Eigen::MatrixXd block(const Eigen::MatrixXd& a, std::span<const int> r, std::span<const int> c) {
    Eigen::MatrixXd out(r.size(), c.size());
    for (std::size_t i = 0; i < r.size(); ++i)
        for (std::size_t j = 0; j < c.size(); ++j) out(i, j) = a(r[i], c[j]);
    return out;
}

inline Eigen::VectorXd gather(const Eigen::VectorXd& z, std::span<const int> idx) {
    Eigen::VectorXd out(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) out(i) = z(idx[i]);
    return out;
}

inline double logdet(const Eigen::LLT<Eigen::MatrixXd>& llt) {
    return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

} // namespace detail

// Zero-mean Gaussian vector with covariance sigma; Cholesky factor cached.
class GaussianJoint {
public:
    explicit GaussianJoint(Eigen::MatrixXd sigma) : sigma_(std::move(sigma)) {
        require(sigma_.rows() == sigma_.cols() && sigma_.rows() >= 1, "covariance must be square and non-empty");
        require(sigma_.isApprox(sigma_.transpose(), 1e-12), "covariance must be symmetric");
        llt_ = detail::checked_llt(sigma_, "Gaussian covariance");
    }

    Eigen::Index dim() const { return sigma_.rows(); }
    const Eigen::MatrixXd& sigma() const { return sigma_; }
    const Eigen::LLT<Eigen::MatrixXd>& llt() const { return llt_; }
    double logdet() const { return detail::logdet(llt_); }

private:
    Eigen::MatrixXd sigma_;
    Eigen::LLT<Eigen::MatrixXd> llt_;
};

inline Eigen::MatrixXd correlation_matrix(const CorrelationModel& model, const SiteSet& sites,
                                          const Metric& metric = {}) {
    model.validate();
    const auto n = static_cast<Eigen::Index>(sites.size());
    Eigen::MatrixXd s(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        s(i, i) = 1.0;
        for (Eigen::Index j = 0; j < i; ++j) s(i, j) = s(j, i) = model.rho(sites.distance(i, j, metric));
    }
    return s;
}

inline GaussianJoint corr_matrix(const CorrelationModel& model, const SiteSet& sites, const Metric& metric = {}) {
    return GaussianJoint(correlation_matrix(model, sites, metric));
}

// log N(z; 0, sigma) for an explicit covariance.
inline double gauss_logpdf(const Eigen::MatrixXd& sigma, const Eigen::VectorXd& z) {
    require(sigma.rows() == z.size(), "dimension mismatch in Gaussian density");
    if (z.size() == 0) return 0.0;
    const auto llt = detail::checked_llt(sigma, "Gaussian density");
    const Eigen::VectorXd w = llt.matrixL().solve(z);
    return -0.5 * w.squaredNorm() - 0.5 * detail::logdet(llt) - static_cast<double>(z.size()) * kLogSqrt2Pi;
}

inline double mvn_logpdf(const GaussianJoint& joint, const Eigen::VectorXd& z) {
    require(z.size() == joint.dim(), "dimension mismatch in Gaussian density");
    const Eigen::VectorXd w = joint.llt().matrixL().solve(z);
    return -0.5 * w.squaredNorm() - 0.5 * joint.logdet() - static_cast<double>(z.size()) * kLogSqrt2Pi;
}

// Conditional mean and variance of component j given components S.
struct Conditional {
    double mean = 0.0;
    double var = 1.0;
};

inline Conditional conditional_moments(const Eigen::MatrixXd& sigma, int j, std::span<const int> s,
                                       const Eigen::VectorXd& z) {
    if (s.empty()) return {0.0, sigma(j, j)};
    const auto llt = detail::checked_llt(detail::block(sigma, s, s), "conditioning covariance");
    Eigen::VectorXd c(s.size());
    for (std::size_t k = 0; k < s.size(); ++k) c(k) = sigma(s[k], j);
    const Eigen::VectorXd a = llt.solve(c);
    const double var = sigma(j, j) - c.dot(a);
    if (!(var > 0.0)) throw NumericError("conditional variance is not positive");
    return {a.dot(detail::gather(z, s)), var};
}

inline double conditional_variance(const Eigen::MatrixXd& sigma, int j, std::span<const int> s) {
    return conditional_moments(sigma, j, s, Eigen::VectorXd::Zero(sigma.rows())).var;
}

inline double mvn_conditional_logpdf(const GaussianJoint& joint, int j, std::span<const int> s,
                                     const Eigen::VectorXd& z) {
    require(z.size() == joint.dim(), "dimension mismatch in conditional density");
    require(j >= 0 && j < joint.dim(), "conditional index out of range");
    for (int k : s) require(k != j && k >= 0 && k < joint.dim(), "conditioning set must exclude j and be in range");
    const auto c = conditional_moments(joint.sigma(), j, s, z);
    const double r = z(j) - c.mean;
    return -0.5 * r * r / c.var - 0.5 * std::log(c.var) - kLogSqrt2Pi;
}

inline double vecchia_gauss_logpdf(const GaussianJoint& joint, const OrderingPlan& plan,
                                   const ConditioningSets& sets, const Eigen::VectorXd& z) {
    require(static_cast<Eigen::Index>(plan.size()) == joint.dim(), "ordering plan does not match covariance");
    double total = 0.0;
    for (std::size_t j = 0; j < plan.size(); ++j) total += mvn_conditional_logpdf(joint, plan.perm[j], sets[j], z);
    return total;
}

inline double vecchia_gauss_logpdf(const CorrelationModel& model, const SiteSet& sites, const OrderingPlan& plan,
                                   int d, const Eigen::VectorXd& z, const Metric& metric = {}) {
    const auto joint = corr_matrix(model, sites, metric);
    return vecchia_gauss_logpdf(joint, plan, conditioning_sets(sites, plan, d, metric), z);
}

// KL(f || f_{V;d}) = 1/2 sum_j log(v_j^{(d)} / v_j^{full}).
inline double kl_vecchia(const GaussianJoint& joint, const OrderingPlan& plan, const ConditioningSets& sets) {
    const auto n = joint.dim();
    require(static_cast<Eigen::Index>(plan.size()) == n, "ordering plan does not match covariance");
    Eigen::MatrixXd p(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) p(i, j) = joint.sigma()(plan.perm[i], plan.perm[j]);
    const auto llt = detail::checked_llt(p, "ordered covariance");
    const auto& l = llt.matrixLLT();
    double kl = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
        const double vd = conditional_variance(joint.sigma(), plan.perm[j], sets[j]);
        kl += 0.5 * (std::log(vd) - 2.0 * std::log(l(j, j)));
    }
    return kl;
}

inline double kl_vecchia(const CorrelationModel& model, const SiteSet& sites, const OrderingPlan& plan, int d,
                         const Metric& metric = {}) {
    const auto joint = corr_matrix(model, sites, metric);
    return kl_vecchia(joint, plan, conditioning_sets(sites, plan, d, metric));
}

// n independent draws as rows; row i uses its own random stream.
inline Eigen::MatrixXd simulate_gauss(const GaussianJoint& joint, std::size_t n, std::uint64_t seed) {
    const auto dim = joint.dim();
    Eigen::MatrixXd out(static_cast<Eigen::Index>(n), dim);
    const Eigen::MatrixXd l = joint.llt().matrixL();
    Eigen::VectorXd e(dim);
    for (std::size_t i = 0; i < n; ++i) {
        Rng rng = make_rng(seed, i);
        for (Eigen::Index k = 0; k < dim; ++k) e(k) = standard_normal(rng);
        out.row(static_cast<Eigen::Index>(i)) = (l * e).transpose();
    }
    return out;
}

} // namespace vecchia
