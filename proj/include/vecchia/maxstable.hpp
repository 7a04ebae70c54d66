#pragma once

// Brown-Resnick and logistic max-stable models: exponent function, its partial
// derivatives, the joint density as a sum over set partitions, conditional
// densities, extremal coefficients and exact simulation.

#include "vecchia/error.hpp"
#include "vecchia/gaussian.hpp"
#include "vecchia/mvn.hpp"
#include "vecchia/parallel.hpp"
#include "vecchia/partitions.hpp"
#include "vecchia/random.hpp"
#include "vecchia/spatial.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace vecchia {

enum class VariogramFamily { bounded, power };

inline std::string_view to_string(VariogramFamily f) { return f == VariogramFamily::bounded ? "bounded" : "power"; }

inline VariogramFamily parse_variogram_family(std::string_view s) {
    if (s == "bounded") return VariogramFamily::bounded;
    if (s == "power" || s == "power_aniso") return VariogramFamily::power;
    throw ConfigError("unknown variogram family '" + std::string(s) + "'");
}

// bounded: Gamma(h) = 2 sigma^2 (1 - exp(-|h| / lambda))
// power:   Gamma(h) = 2 (|h|_A / lambda)^alpha with the anisotropic metric A
struct BrownResnickModel {
    VariogramFamily family = VariogramFamily::bounded;
    double sigma = 1.0;
    double lambda = 1.0;
    double alpha = 1.0;
    AnisotropyParams aniso;

    static BrownResnickModel bounded(double sigma, double lambda) {
        return {VariogramFamily::bounded, sigma, lambda, 1.0, {}};
    }
    static BrownResnickModel power(double lambda, double alpha, AnisotropyParams aniso = {}) {
        return {VariogramFamily::power, 1.0, lambda, alpha, aniso};
    }

    void validate() const {
        require(std::isfinite(lambda) && lambda > 0.0, "variogram range lambda must be positive");
        if (family == VariogramFamily::bounded) {
            require(std::isfinite(sigma) && sigma > 0.0, "variogram scale sigma must be positive");
        } else {
            require(std::isfinite(alpha) && alpha > 0.0 && alpha < 2.0, "variogram smoothness alpha must lie in (0, 2)");
            aniso.validate();
        }
    }

    // bounded: sigma, lambda; power: lambda, alpha, theta, a.
    std::vector<std::string> param_names() const {
        if (family == VariogramFamily::bounded) return {"sigma", "lambda"};
        return {"lambda", "alpha", "theta", "a"};
    }
    std::vector<double> params() const {
        if (family == VariogramFamily::bounded) return {sigma, lambda};
        return {lambda, alpha, aniso.theta, aniso.a};
    }
    BrownResnickModel with_params(const std::vector<double>& p) const {
        BrownResnickModel m = *this;
        if (family == VariogramFamily::bounded) {
            require(p.size() == 2, "bounded variogram takes 2 parameters");
            m.sigma = p[0];
            m.lambda = p[1];
        } else {
            require(p.size() == 4, "power variogram takes 4 parameters");
            m.lambda = p[0];
            m.alpha = p[1];
            m.aniso = {p[2], p[3]};
        }
        return m;
    }

    double gamma(double hx, double hy) const {
        if (family == VariogramFamily::bounded) {
            const double h = std::hypot(hx, hy);
            return -2.0 * sigma * sigma * std::expm1(-h / lambda);
        }
        const double h = Metric(aniso)(hx, hy);
        return h == 0.0 ? 0.0 : 2.0 * std::pow(h / lambda, alpha);
    }
    double gamma(const Point& p, const Point& q) const { return gamma(p.x - q.x, p.y - q.y); }
};

// V(z) = (sum z_i^(-1/alpha))^alpha, alpha in (0, 1].
struct LogisticModel {
    double alpha = 0.5;

    void validate() const {
        require(std::isfinite(alpha) && alpha > 0.0 && alpha <= 1.0, "logistic alpha must lie in (0, 1]");
    }
    std::vector<std::string> param_names() const { return {"alpha"}; }
    std::vector<double> params() const { return {alpha}; }
    LogisticModel with_params(const std::vector<double>& p) const {
        require(p.size() == 1, "logistic model takes 1 parameter");
        return {p[0]};
    }
};

using MaxStableModel = std::variant<BrownResnickModel, LogisticModel>;

inline void validate(const MaxStableModel& m) {
    std::visit([](const auto& v) { v.validate(); }, m);
}

inline std::vector<std::string> param_names(const MaxStableModel& m) {
    return std::visit([](const auto& v) { return v.param_names(); }, m);
}

inline std::vector<double> params(const MaxStableModel& m) {
    return std::visit([](const auto& v) { return v.params(); }, m);
}

inline MaxStableModel with_params(const MaxStableModel& m, const std::vector<double>& p) {
    return std::visit([&](const auto& v) -> MaxStableModel { return v.with_params(p); }, m);
}

// Variogram matrix of the selected sites; distinct sites must have Gamma > 0.
inline Eigen::MatrixXd gamma_matrix(const BrownResnickModel& model, const SiteSet& sites, std::span<const int> idx) {
    const int k = static_cast<int>(idx.size());
    Eigen::MatrixXd g = Eigen::MatrixXd::Zero(k, k);
    for (int a = 0; a < k; ++a) {
        for (int b = a + 1; b < k; ++b) {
            const double v = model.gamma(sites[idx[a]], sites[idx[b]]);
            if (!(v > 0.0) || !std::isfinite(v)) {
                throw NumericError("degenerate site pair (" + std::to_string(sites.ids()[idx[a]]) + ", " +
                                   std::to_string(sites.ids()[idx[b]]) + "): variogram is not positive");
            }
            g(a, b) = g(b, a) = v;
        }
    }
    return g;
}

inline std::vector<int> all_sites(const SiteSet& sites) {
    std::vector<int> idx(sites.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
    return idx;
}

namespace detail {

inline void check_frechet(std::span<const double> z) {
    for (double v : z) require(std::isfinite(v) && v > 0.0, "Frechet values must be positive and finite");
}

// V = sum_j z_j^-1 Phi_{k-1}(eta_j; Sigma_j) with
// eta_{j,i} = log(z_i/z_j)/sqrt(G_ij) + sqrt(G_ij)/2 and
// Sigma_j(a,b) = (G_aj + G_bj - G_ab) / (2 sqrt(G_aj G_bj)).
inline double br_exponent(const Eigen::MatrixXd& g, std::span<const double> z, const MvnCdfOptions& opt) {
    const int k = static_cast<int>(z.size());
    double v = 0.0;
    for (int j = 0; j < k; ++j) {
        if (k == 1) {
            v += 1.0 / z[j];
            continue;
        }
        std::vector<int> others;
        for (int i = 0; i < k; ++i)
            if (i != j) others.push_back(i);
        Eigen::VectorXd eta(k - 1);
        Eigen::MatrixXd s(k - 1, k - 1);
        for (int a = 0; a < k - 1; ++a) {
            const double ga = g(others[a], j);
            eta(a) = std::log(z[others[a]] / z[j]) / std::sqrt(ga) + std::sqrt(ga) / 2.0;
            for (int b = 0; b < k - 1; ++b) {
                const double gb = g(others[b], j);
                s(a, b) = a == b ? 1.0 : (ga + gb - g(others[a], others[b])) / (2.0 * std::sqrt(ga * gb));
            }
        }
        v += mvn_cdf(s, eta, opt).value / z[j];
    }
    return v;
}

inline double logistic_exponent(double alpha, std::span<const double> z) {
    double t = 0.0;
    for (double v : z) t += std::pow(v, -1.0 / alpha);
    return std::pow(t, alpha);
}

// log(-V_tau) for the logistic model.
inline double logistic_log_neg_partial(double alpha, std::span<const double> z, std::uint32_t tau) {
    double t = 0.0, slog = 0.0;
    int n = 0;
    for (std::size_t i = 0; i < z.size(); ++i) {
        t += std::pow(z[i], -1.0 / alpha);
        if (tau >> i & 1u) slog += std::log(z[i]), ++n;
    }
    double out = (alpha - n) * std::log(t) - (1.0 / alpha + 1.0) * slog - (n - 1) * std::log(alpha);
    for (int r = 1; r < n; ++r) out += std::log(r - alpha);
    return out;
}

struct TauCache {
    int ref = 0;
    std::vector<int> tp;  // tau without the reference
    std::vector<int> c;   // complement of tau
    Eigen::MatrixXd prec;  // Sigma_{tp,tp}^-1
    double logdet = 0.0;
    Eigen::MatrixXd reg;   // Sigma_{c,tp} Sigma_{tp,tp}^-1
    Eigen::MatrixXd cond;  // Sigma_{c,c} - reg Sigma_{tp,c}
};

} // namespace detail

// Dependence structure of one subset of sites, prepared for repeated
// evaluation at many Frechet vectors.
class SubsetDensity {
public:
    SubsetDensity(const MaxStableModel& model, const SiteSet& sites, std::span<const int> idx,
                  const MvnCdfOptions& opt = {})
        : k_(static_cast<int>(idx.size())), opt_(opt) {
        require(k_ >= 1, "a max-stable density needs at least one site");
        if (k_ > kMaxPartitionSize) {
            throw ConfigError("set partition capacity exceeded: subset of size " + std::to_string(k_));
        }
        validate(model);
        if (const auto* lg = std::get_if<LogisticModel>(&model)) {
            logistic_ = true;
            alpha_ = lg->alpha;
            return;
        }
        gamma_ = gamma_matrix(std::get<BrownResnickModel>(model), sites, idx);
        prepare();
    }

    // Logistic density of k exchangeable sites.
    SubsetDensity(const LogisticModel& model, int k) : k_(k), logistic_(true), alpha_(model.alpha) {
        model.validate();
        require(k >= 1 && k <= kMaxPartitionSize, "logistic subset size out of range");
    }

    int size() const { return k_; }
    bool is_logistic() const { return logistic_; }
    const Eigen::MatrixXd& gamma() const { return gamma_; }

    // Exponent function; the Brown-Resnick case integrates each reference
    // site's Gaussian CDF directly.
    double exponent(std::span<const double> z) const {
        check(z);
        if (logistic_) return detail::logistic_exponent(alpha_, z);
        return detail::br_exponent(gamma_, z, opt_);
    }

    // log(-V_tau) for one non-empty mask over the subset's local indices.
    double log_neg_partial(std::span<const double> z, std::uint32_t tau) const {
        check(z);
        require(tau != 0 && tau < (1u << k_), "partial derivative mask out of range");
        if (logistic_) return detail::logistic_log_neg_partial(alpha_, z, tau);
        return br_log_neg_partial(tau, logs(z));
    }

    // log(-V_tau) for every mask 1 .. 2^k - 1 (entry 0 unused).
    std::vector<double> log_neg_partials(std::span<const double> z) const {
        check(z);
        const std::uint32_t full = 1u << k_;
        std::vector<double> out(full, 0.0);
        if (logistic_) {
            for (std::uint32_t m = 1; m < full; ++m) out[m] = detail::logistic_log_neg_partial(alpha_, z, m);
            return out;
        }
        const auto lz = logs(z);
        for (std::uint32_t m = 1; m < full; ++m) out[m] = br_log_neg_partial(m, lz);
        return out;
    }

    // log f(z) = -V(z) + log sum_{partitions} prod_{blocks} (-V_tau).
    double logpdf(std::span<const double> z) const {
        const auto lp = log_neg_partials(z);
        double v = 0.0;
        for (int r = 0; r < k_; ++r) v += z[r] * std::exp(lp[1u << r]);
        double top = -std::numeric_limits<double>::infinity(), acc = 0.0;
        for (auto it = set_partitions(k_); !it.done(); it.next()) {
            double s = 0.0;
            for (std::uint32_t m : it.blocks()) s += lp[m];
            if (std::isnan(s)) throw NumericError("max-stable density: partial derivative is not a number");
            if (s == -std::numeric_limits<double>::infinity()) continue;
            if (s > top) {
                acc = acc * std::exp(top - s) + 1.0;
                top = s;
            } else {
                acc += std::exp(s - top);
            }
        }
        if (!(acc > 0.0)) throw NumericError("max-stable density underflow: every partition term vanished");
        return -v + top + std::log(acc);
    }

private:
    void check(std::span<const double> z) const {
        require(static_cast<int>(z.size()) == k_, "Frechet vector length does not match the subset");
        detail::check_frechet(z);
    }

    std::vector<double> logs(std::span<const double> z) const {
        std::vector<double> lz(z.size());
        for (std::size_t i = 0; i < z.size(); ++i) lz[i] = std::log(z[i]);
        return lz;
    }

    void prepare() {
        const std::uint32_t full = 1u << k_;
        cache_.resize(full);
        for (std::uint32_t m = 1; m < full; ++m) {
            auto& t = cache_[m];
            t.ref = std::countr_zero(m);
            for (int i = 0; i < k_; ++i) {
                if (i == t.ref) continue;
                (m >> i & 1u ? t.tp : t.c).push_back(i);
            }
            auto sig = [&](int a, int b) {
                return 0.5 * (gamma_(a, t.ref) + gamma_(b, t.ref) - gamma_(a, b));
            };
            auto blk = [&](const std::vector<int>& r, const std::vector<int>& c) {
                Eigen::MatrixXd out(r.size(), c.size());
                for (std::size_t i = 0; i < r.size(); ++i)
                    for (std::size_t j = 0; j < c.size(); ++j) out(i, j) = sig(r[i], c[j]);
                return out;
            };
            const Eigen::MatrixXd scc = blk(t.c, t.c);
            if (t.tp.empty()) {
                t.cond = scc;
                continue;
            }
            const Eigen::MatrixXd stt = blk(t.tp, t.tp);
            const auto llt = detail::checked_llt(stt, "Brown-Resnick partial derivative");
            t.prec = llt.solve(Eigen::MatrixXd::Identity(stt.rows(), stt.cols()));
            t.logdet = detail::logdet(llt);
            if (!t.c.empty()) {
                const Eigen::MatrixXd sct = blk(t.c, t.tp);
                t.reg = sct * t.prec;
                t.cond = scc - t.reg * sct.transpose();
                t.cond = 0.5 * (t.cond + t.cond.transpose()).eval();
            }
        }
    }

    // -V_tau = z_r^-2 prod_{tp} z_i^-1 phi(y_tp; Sigma_tp) Phi(y_c - reg y_tp; cond),
    // with y_i = log(z_i / z_r) + Gamma_ir / 2 relative to the reference r.
    double br_log_neg_partial(std::uint32_t m, const std::vector<double>& lz) const {
        const auto& t = cache_[m];
        const int r = t.ref;
        auto y = [&](int i) { return lz[i] - lz[r] + 0.5 * gamma_(i, r); };
        double out = -2.0 * lz[r];
        Eigen::VectorXd yt(t.tp.size());
        for (std::size_t a = 0; a < t.tp.size(); ++a) {
            yt(a) = y(t.tp[a]);
            out -= lz[t.tp[a]];
        }
        if (!t.tp.empty()) {
            const double q = yt.dot(t.prec * yt);
            out += -0.5 * q - 0.5 * t.logdet - static_cast<double>(t.tp.size()) * kLogSqrt2Pi;
        }
        if (!t.c.empty()) {
            Eigen::VectorXd lim(t.c.size());
            for (std::size_t a = 0; a < t.c.size(); ++a) lim(a) = y(t.c[a]);
            if (!t.tp.empty()) lim -= t.reg * yt;
            const double p = mvn_cdf(t.cond, lim, opt_).value;
            out += std::log(p);
        }
        return out;
    }

    int k_ = 0;
    bool logistic_ = false;
    double alpha_ = 1.0;
    Eigen::MatrixXd gamma_;
    MvnCdfOptions opt_;
    std::vector<detail::TauCache> cache_;
};

namespace detail {

inline std::vector<double> pick(std::span<const double> z, std::span<const int> idx) {
    std::vector<double> out(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) out[i] = z[idx[i]];
    return out;
}

} // namespace detail

// Free-function interface: z holds one value per site of `sites`, and idx
// selects the active subset.
inline double exponent_V(const MaxStableModel& model, const SiteSet& sites, std::span<const int> idx,
                         std::span<const double> z, const MvnCdfOptions& opt = {}) {
    return SubsetDensity(model, sites, idx, opt).exponent(detail::pick(z, idx));
}

// V_tau itself (negative); tau is a mask over positions in idx.
inline double exponent_V_partial(const MaxStableModel& model, const SiteSet& sites, std::span<const int> idx,
                                 std::span<const double> z, std::uint32_t tau, const MvnCdfOptions& opt = {}) {
    return -std::exp(SubsetDensity(model, sites, idx, opt).log_neg_partial(detail::pick(z, idx), tau));
}

inline double maxstable_logpdf(const MaxStableModel& model, const SiteSet& sites, std::span<const int> idx,
                               std::span<const double> z, const MvnCdfOptions& opt = {}) {
    return SubsetDensity(model, sites, idx, opt).logpdf(detail::pick(z, idx));
}

// log f(z_j | z_S) = log f(z_{j,S}) - log f(z_S).
inline double maxstable_conditional_logpdf(const MaxStableModel& model, const SiteSet& sites, int j,
                                           std::span<const int> s, std::span<const double> z,
                                           const MvnCdfOptions& opt = {}) {
    std::vector<int> js{j};
    js.insert(js.end(), s.begin(), s.end());
    const double joint = maxstable_logpdf(model, sites, js, z, opt);
    if (s.empty()) return joint;
    return joint - maxstable_logpdf(model, sites, s, z, opt);
}

// theta(h) = V(1, 1) = 2 Phi(sqrt(Gamma(h)) / 2), or 2^alpha for the logistic model.
inline double extremal_coefficient(const BrownResnickModel& model, double hx, double hy) {
    return 2.0 * norm_cdf(std::sqrt(model.gamma(hx, hy)) / 2.0);
}

inline double extremal_coefficient(const LogisticModel& model) { return std::pow(2.0, model.alpha); }

inline double extremal_coefficient(const MaxStableModel& model, const Point& p, const Point& q) {
    if (const auto* br = std::get_if<BrownResnickModel>(&model)) return extremal_coefficient(*br, p.x - q.x, p.y - q.y);
    return extremal_coefficient(std::get<LogisticModel>(model));
}

// Madogram estimate nu = mean |F(z1) - F(z2)| / 2 with F(z) = exp(-1/z),
// theta = (1 + 2 nu) / (1 - 2 nu).
inline double madogram_extremal_coefficient(std::span<const double> z1, std::span<const double> z2) {
    require(z1.size() == z2.size() && z1.size() >= 2, "madogram needs at least two paired replicates");
    double nu = 0.0;
    for (std::size_t i = 0; i < z1.size(); ++i) nu += std::abs(std::exp(-1.0 / z1[i]) - std::exp(-1.0 / z2[i]));
    nu /= 2.0 * static_cast<double>(z1.size());
    return (1.0 + 2.0 * nu) / (1.0 - 2.0 * nu);
}

struct PairExtremal {
    int i = 0;
    int j = 0;
    double distance = 0.0;
    double angle = 0.0;  // direction of s_j - s_i in degrees, [0, 180)
    double theta = 0.0;
};

// Empirical extremal coefficient of every site pair; data is n x D.
inline std::vector<PairExtremal> pairwise_extremal(const Eigen::MatrixXd& data, const SiteSet& sites,
                                                   const Metric& metric = {}) {
    require(data.cols() == static_cast<Eigen::Index>(sites.size()), "data columns do not match the sites");
    require(data.rows() >= 2, "empirical extremal coefficients need at least two replicates");
    const int d = static_cast<int>(sites.size());
    std::vector<std::vector<double>> cols(d);
    for (int c = 0; c < d; ++c) {
        cols[c].resize(data.rows());
        for (Eigen::Index r = 0; r < data.rows(); ++r) cols[c][r] = data(r, c);
        detail::check_frechet(cols[c]);
    }
    std::vector<PairExtremal> out;
    for (int a = 0; a < d; ++a) {
        for (int b = a + 1; b < d; ++b) {
            const double hx = sites[b].x - sites[a].x, hy = sites[b].y - sites[a].y;
            double ang = std::atan2(hy, hx) * 180.0 / std::numbers::pi;
            if (ang < 0.0) ang += 180.0;
            if (ang >= 180.0) ang -= 180.0;
            out.push_back({a, b, metric(hx, hy), ang, madogram_extremal_coefficient(cols[a], cols[b])});
        }
    }
    return out;
}

struct ExtremalBin {
    double lo = 0.0;
    double hi = 0.0;
    std::size_t count = 0;
    std::optional<double> mean;  // empty when no pair falls in the bin
    std::optional<double> median;
    std::optional<double> q1;
    std::optional<double> q3;
};

namespace detail {

inline ExtremalBin summarise_bin(double lo, double hi, std::vector<double> v) {
    ExtremalBin b{lo, hi, v.size(), std::nullopt, std::nullopt, std::nullopt, std::nullopt};
    if (v.empty()) return b;
    double s = 0.0;
    for (double x : v) s += x;
    b.mean = s / static_cast<double>(v.size());
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    b.median = n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
    // Linear interpolation between order statistics.
    auto quantile = [&](double q) {
        const double pos = q * static_cast<double>(n - 1);
        const std::size_t k = static_cast<std::size_t>(pos);
        const std::size_t k1 = std::min(k + 1, n - 1);
        return v[k] + (pos - static_cast<double>(k)) * (v[k1] - v[k]);
    };
    b.q1 = quantile(0.25);
    b.q3 = quantile(0.75);
    return b;
}

} // namespace detail

// Bins [edges[k], edges[k+1]) over pair distance.
inline std::vector<ExtremalBin> bin_by_distance(const std::vector<PairExtremal>& pairs,
                                                const std::vector<double>& edges) {
    require(edges.size() >= 2 && std::is_sorted(edges.begin(), edges.end()), "distance bin edges must be increasing");
    std::vector<std::vector<double>> vals(edges.size() - 1);
    for (const auto& p : pairs) {
        const auto it = std::upper_bound(edges.begin(), edges.end(), p.distance);
        if (it == edges.begin() || it == edges.end()) continue;
        vals[static_cast<std::size_t>(it - edges.begin()) - 1].push_back(p.theta);
    }
    std::vector<ExtremalBin> out;
    for (std::size_t k = 0; k + 1 < edges.size(); ++k)
        out.push_back(detail::summarise_bin(edges[k], edges[k + 1], std::move(vals[k])));
    return out;
}

// Axial angles in degrees; a pair on the upper boundary belongs to the next bin.
inline bool in_direction_bin(double angle, double centre, double half_width) {
    double diff = std::fmod(std::abs(angle - centre), 180.0);
    diff = std::min(diff, 180.0 - diff);
    return diff < half_width || (diff == half_width && angle < centre);
}

// Direction bins centred at each angle (degrees) with the given half width.
inline std::vector<ExtremalBin> bin_by_direction(const std::vector<PairExtremal>& pairs,
                                                 const std::vector<double>& centres, double half_width) {
    require(half_width > 0.0 && half_width <= 90.0, "direction half width must lie in (0, 90]");
    std::vector<ExtremalBin> out;
    for (double c : centres) {
        std::vector<double> v;
        for (const auto& p : pairs)
            if (in_direction_bin(p.angle, c, half_width)) v.push_back(p.theta);
        out.push_back(detail::summarise_bin(c - half_width, c + half_width, std::move(v)));
    }
    return out;
}

// Exact simulation by extremal functions: for each site j, Poisson points
// zeta = 1/(E_1 + E_2 + ...) are paired with spectral functions
// W(s) = exp(eps(s) - eps(s_j) - Gamma(s, s_j)/2) and kept when they do not
// exceed the current maximum at earlier sites.
inline Eigen::MatrixXd simulate_brown_resnick(const BrownResnickModel& model, const SiteSet& sites, std::size_t n,
                                              std::uint64_t seed, unsigned threads = 1) {
    model.validate();
    const int d = static_cast<int>(sites.size());
    Eigen::MatrixXd g = Eigen::MatrixXd::Zero(d, d);
    for (int a = 0; a < d; ++a)
        for (int b = a + 1; b < d; ++b) g(a, b) = g(b, a) = model.gamma(sites[a], sites[b]);

    // Gaussian field with variogram g: stationary for the bounded family,
    // increments from site 0 for the power family.
    Eigen::MatrixXd chol;
    const bool bounded = model.family == VariogramFamily::bounded;
    if (bounded) {
        Eigen::MatrixXd cov(d, d);
        for (int a = 0; a < d; ++a)
            for (int b = 0; b < d; ++b) cov(a, b) = model.sigma * model.sigma - 0.5 * g(a, b);
        chol = detail::checked_llt(cov, "Brown-Resnick simulation").matrixL();
    } else if (d > 1) {
        Eigen::MatrixXd cov(d - 1, d - 1);
        for (int a = 1; a < d; ++a)
            for (int b = 1; b < d; ++b) cov(a - 1, b - 1) = 0.5 * (g(a, 0) + g(b, 0) - g(a, b));
        chol = detail::checked_llt(cov, "Brown-Resnick simulation").matrixL();
    }

    Eigen::MatrixXd out(n, d);
    parallel_for(n, threads, [&](std::size_t row) {
        Rng rng = make_rng(seed, row);
        Eigen::VectorXd eps(d), w(d), zrow = Eigen::VectorXd::Zero(d);
        auto field = [&]() {
            if (bounded) {
                Eigen::VectorXd u(d);
                for (int i = 0; i < d; ++i) u(i) = standard_normal(rng);
                eps = chol * u;
            } else {
                eps(0) = 0.0;
                if (d > 1) {
                    Eigen::VectorXd u(d - 1);
                    for (int i = 0; i < d - 1; ++i) u(i) = standard_normal(rng);
                    eps.tail(d - 1) = chol * u;
                }
            }
        };
        for (int j = 0; j < d; ++j) {
            double e = standard_exponential(rng);
            double zeta = 1.0 / e;
            while (zeta > zrow(j)) {
                field();
                for (int i = 0; i < d; ++i) w(i) = std::exp(eps(i) - eps(j) - 0.5 * g(i, j));
                bool keep = true;
                for (int i = 0; i < j && keep; ++i) keep = zeta * w(i) < zrow(i);
                if (keep) zrow = zrow.cwiseMax(zeta * w);
                e += standard_exponential(rng);
                zeta = 1.0 / e;
            }
        }
        out.row(static_cast<Eigen::Index>(row)) = zrow.transpose();
    });
    return out;
}

// Positive stable variable with Laplace transform exp(-t^alpha) (Kanter).
inline double positive_stable(double alpha, Rng& rng) {
    if (alpha == 1.0) return 1.0;
    const double u = std::numbers::pi * uniform_open(rng);
    const double e = standard_exponential(rng);
    return std::sin(alpha * u) / std::pow(std::sin(u), 1.0 / alpha) *
           std::pow(std::sin((1.0 - alpha) * u) / e, (1.0 - alpha) / alpha);
}

// Z_i = (S / E_i)^alpha with S positive stable and E_i standard exponential.
inline Eigen::MatrixXd simulate_logistic(double alpha, int d, std::size_t n, std::uint64_t seed,
                                         unsigned threads = 1) {
    LogisticModel{alpha}.validate();
    require(d >= 1, "logistic simulation needs at least one site");
    Eigen::MatrixXd out(n, d);
    parallel_for(n, threads, [&](std::size_t row) {
        Rng rng = make_rng(seed, row);
        const double s = positive_stable(alpha, rng);
        for (int i = 0; i < d; ++i)
            out(static_cast<Eigen::Index>(row), i) = std::pow(s / standard_exponential(rng), alpha);
    });
    return out;
}

} // namespace vecchia
