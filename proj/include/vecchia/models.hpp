#pragma once

// Common interface over the Gaussian and max-stable models: parameter
// vectors and their optimisation transforms, subset log-densities and
// simulation.

#include "vecchia/error.hpp"
#include "vecchia/gaussian.hpp"
#include "vecchia/maxstable.hpp"
#include "vecchia/spatial.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace vecchia {

using AnyModel = std::variant<CorrelationModel, BrownResnickModel, LogisticModel>;

inline bool is_gaussian(const AnyModel& m) { return std::holds_alternative<CorrelationModel>(m); }

inline std::string model_name(const AnyModel& m) {
    if (const auto* g = std::get_if<CorrelationModel>(&m)) return "gaussian/" + std::string(to_string(g->family));
    if (const auto* b = std::get_if<BrownResnickModel>(&m)) return "brown_resnick/" + std::string(to_string(b->family));
    return "logistic";
}

inline void validate(const AnyModel& m) {
    std::visit([](const auto& v) { v.validate(); }, m);
}

inline std::vector<std::string> param_names(const AnyModel& m) {
    return std::visit([](const auto& v) { return v.param_names(); }, m);
}

inline std::vector<double> params(const AnyModel& m) {
    return std::visit([](const auto& v) { return v.params(); }, m);
}

inline AnyModel with_params(const AnyModel& m, const std::vector<double>& p) {
    return std::visit([&](const auto& v) -> AnyModel { return v.with_params(p); }, m);
}

// Map between a parameter and the unconstrained scale used by the optimiser:
// log for positive parameters, logit of (psi - lo) / (hi - lo) for intervals.
struct ParamTransform {
    bool interval = false;
    double lo = 0.0;
    double hi = 0.0;

    double forward(double psi) const {
        if (!interval) return std::log(psi);
        const double u = (psi - lo) / (hi - lo);
        return std::log(u) - std::log1p(-u);
    }
    double inverse(double t) const {
        if (!interval) return std::exp(t);
        return lo + (hi - lo) / (1.0 + std::exp(-t));
    }
    // d psi / d t
    double jacobian(double t) const {
        if (!interval) return std::exp(t);
        const double u = 1.0 / (1.0 + std::exp(-t));
        return (hi - lo) * u * (1.0 - u);
    }
};

inline std::vector<ParamTransform> param_transforms(const AnyModel& m) {
    std::vector<ParamTransform> out;
    for (const auto& name : param_names(m)) {
        if (name == "kappa") {
            out.push_back({true, 0.0, 2.0});
        } else if (name == "alpha") {
            out.push_back(std::holds_alternative<LogisticModel>(m) ? ParamTransform{true, 0.0, 1.0}
                                                                   : ParamTransform{true, 0.0, 2.0});
        } else if (name == "theta") {
            out.push_back({true, -std::numbers::pi / 2, std::numbers::pi / 2});
        } else {
            out.push_back({});
        }
    }
    return out;
}

// log f of the data restricted to one subset of sites, prepared once per
// parameter value and evaluated per replicate.
class SubsetLogDensity {
public:
    SubsetLogDensity(const AnyModel& model, const SiteSet& sites, std::span<const int> idx,
                     const MvnCdfOptions& opt = {})
        : idx_(idx.begin(), idx.end()) {
        require(!idx_.empty(), "a log-density term needs at least one site");
        if (const auto* g = std::get_if<CorrelationModel>(&model)) {
            g->validate();
            const int k = static_cast<int>(idx_.size());
            Eigen::MatrixXd r(k, k);
            for (int a = 0; a < k; ++a)
                for (int b = 0; b < k; ++b) r(a, b) = a == b ? 1.0 : g->rho(sites.distance(idx_[a], idx_[b]));
            llt_ = detail::checked_llt(r, "Gaussian term");
            constant_ = -0.5 * detail::logdet(*llt_) - k * kLogSqrt2Pi;
        } else if (const auto* b = std::get_if<BrownResnickModel>(&model)) {
            ms_.emplace(MaxStableModel{*b}, sites, idx_, opt);
        } else {
            ms_.emplace(MaxStableModel{std::get<LogisticModel>(model)}, sites, idx_, opt);
        }
    }

    const std::vector<int>& sites() const { return idx_; }

    // row holds one value per site of the full site set.
    double operator()(std::span<const double> row) const {
        std::vector<double> buf(idx_.size());
        for (std::size_t i = 0; i < idx_.size(); ++i) buf[i] = row[idx_[i]];
        if (ms_) return ms_->logpdf(buf);
        const Eigen::Map<const Eigen::VectorXd> z(buf.data(), static_cast<Eigen::Index>(buf.size()));
        return constant_ - 0.5 * z.dot(llt_->solve(z));
    }

private:
    std::vector<int> idx_;
    std::optional<Eigen::LLT<Eigen::MatrixXd>> llt_;
    double constant_ = 0.0;
    std::optional<SubsetDensity> ms_;
};

// n x D sample from the model at the given sites.
inline Eigen::MatrixXd simulate(const AnyModel& model, const SiteSet& sites, std::size_t n, std::uint64_t seed,
                                unsigned threads = 1) {
    validate(model);
    if (const auto* g = std::get_if<CorrelationModel>(&model)) return simulate_gauss(corr_matrix(*g, sites), n, seed);
    if (const auto* b = std::get_if<BrownResnickModel>(&model)) return simulate_brown_resnick(*b, sites, n, seed, threads);
    return simulate_logistic(std::get<LogisticModel>(model).alpha, static_cast<int>(sites.size()), n, seed, threads);
}

} // namespace vecchia
