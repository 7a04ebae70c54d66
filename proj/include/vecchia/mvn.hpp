#pragma once

// Univariate, bivariate and multivariate normal distribution functions.
//
//   dim 1  : erfc
//   dim 2  : Drezner-Wesolowsky / Genz Gauss-Legendre reduction (~1e-15)
//   dim 3-4: nested conditioning, adaptive Gauss-Kronrod over the least
//            correlated variable down to the bivariate CDF (~1e-9)
//   dim >=5: Genz separation-of-variables integrand on a randomly shifted
//            Richtmyer lattice with antithetic, tent-periodised points;
//            shifts are seeded from (call seed, matrix, limits) so repeated
//            calls with identical inputs return identical values. The lattice
//            rule is also available in dims 3-4 through force_qmc.

#include "vecchia/error.hpp"
#include "vecchia/random.hpp"

#include <Eigen/Dense>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>
#include <numbers>
#include <vector>

namespace vecchia {

inline constexpr double kLogSqrt2Pi = 0.91893853320467274178;  // log(sqrt(2 pi))

inline double norm_pdf(double x) { return std::exp(-0.5 * x * x - kLogSqrt2Pi); }

inline double norm_cdf(double x) { return 0.5 * std::erfc(-x * std::numbers::sqrt2 / 2.0); }

inline double log_norm_cdf(double x) {
    if (x > -30.0) return std::log(norm_cdf(x));
    // Asymptotic Mills-ratio expansion, accurate to ~1e-12 relative here.
    const double x2 = x * x;
    const double series = 1.0 - 1.0 / x2 + 3.0 / (x2 * x2) - 15.0 / (x2 * x2 * x2);
    return -0.5 * x2 - kLogSqrt2Pi - std::log(-x) + std::log(series);
}

// Acklam's rational approximation refined by one Halley step (~1e-15).
inline double norm_ppf(double p) {
    if (p <= 0.0) return -std::numeric_limits<double>::infinity();
    if (p >= 1.0) return std::numeric_limits<double>::infinity();
    static constexpr double a[6] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                                    1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
    static constexpr double b[5] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                                    6.680131188771972e+01,  -1.328068155288572e+01};
    static constexpr double c[6] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                                    -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
    static constexpr double d[4] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                                    3.754408661907416e+00};
    constexpr double plow = 0.02425;
    double x;
    if (p < plow) {
        const double q = std::sqrt(-2.0 * std::log(p));
        x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    } else if (p <= 1.0 - plow) {
        const double q = p - 0.5, r = q * q;
        x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
            (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
    } else {
        const double q = std::sqrt(-2.0 * std::log1p(-p));
        x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
            ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    // Halley step on the side where the CDF is small, to keep relative accuracy.
    if (x <= 0.0) {
        const double e = norm_cdf(x) - p;
        const double u = e * std::sqrt(2.0 * std::numbers::pi) * std::exp(0.5 * x * x);
        x -= u / (1.0 + 0.5 * x * u);
    } else {
        const double e = norm_cdf(-x) - (1.0 - p);
        const double u = -e * std::sqrt(2.0 * std::numbers::pi) * std::exp(0.5 * x * x);
        x -= u / (1.0 + 0.5 * x * u);
    }
    return x;
}

// P(X > h, Y > k) for a standard bivariate normal with correlation r.
inline double bvn_upper(double h, double k, double r) {
    constexpr double inf = std::numeric_limits<double>::infinity();
    if (h == inf || k == inf) return 0.0;
    if (h == -inf) return k == -inf ? 1.0 : norm_cdf(-k);
    if (k == -inf) return norm_cdf(-h);
    if (r == 0.0) return norm_cdf(-h) * norm_cdf(-k);

    static constexpr std::array<double, 3> w6{0.1713244923791705, 0.3607615730481384, 0.4679139345726904};
    static constexpr std::array<double, 3> x6{0.9324695142031522, 0.6612093864662647, 0.2386191860831970};
    static constexpr std::array<double, 6> w12{0.04717533638651177, 0.1069393259953183, 0.1600783285433464,
                                               0.2031674267230659,  0.2334925365383547, 0.2491470458134029};
    static constexpr std::array<double, 6> x12{0.9815606342467191, 0.9041172563704750, 0.7699026741943050,
                                               0.5873179542866171, 0.3678314989981802, 0.1252334085114692};
    static constexpr std::array<double, 10> w20{
        0.01761400713915212, 0.04060142980038694, 0.06267204833410906, 0.08327674157670475,
        0.1019301198172404,  0.1181945319615184,  0.1316886384491766,  0.1420961093183821,
        0.1491729864726037,  0.1527533871307259};
    static constexpr std::array<double, 10> x20{
        0.9931285991850949, 0.9639719272779138, 0.9122344282513259, 0.8391169718222188,
        0.7463319064601508, 0.6360536807265150, 0.5108670019508271, 0.3737060887154196,
        0.2277858511416451, 0.07652652113349733};

    const double* w;
    const double* x;
    int lg;
    if (std::abs(r) < 0.3) {
        w = w6.data(), x = x6.data(), lg = 3;
    } else if (std::abs(r) < 0.75) {
        w = w12.data(), x = x12.data(), lg = 6;
    } else {
        w = w20.data(), x = x20.data(), lg = 10;
    }

    constexpr double tp = 2.0 * std::numbers::pi;
    double hk = h * k;
    double bvn = 0.0;
    if (std::abs(r) < 0.925) {
        const double hs = (h * h + k * k) / 2.0;
        const double asr = std::asin(r) / 2.0;
        for (int i = 0; i < lg; ++i) {
            for (double sgn : {-1.0, 1.0}) {
                const double sn = std::sin(asr * (1.0 + sgn * x[i]));
                bvn += w[i] * std::exp((sn * hk - hs) / (1.0 - sn * sn));
            }
        }
        return std::clamp(bvn * asr / tp + norm_cdf(-h) * norm_cdf(-k), 0.0, 1.0);
    }

    if (r < 0.0) {
        k = -k;
        hk = -hk;
    }
    if (std::abs(r) < 1.0) {
        const double as = (1.0 - r) * (1.0 + r);
        double a = std::sqrt(as);
        const double bs = (h - k) * (h - k);
        const double c = (4.0 - hk) / 8.0;
        const double d = (12.0 - hk) / 80.0;
        double asr = -(bs / as + hk) / 2.0;
        if (asr > -100.0) bvn = a * std::exp(asr) * (1.0 - c * (bs - as) * (1.0 - d * bs) / 3.0 + c * d * as * as);
        if (hk > -100.0) {
            const double b = std::sqrt(bs);
            const double sp = std::sqrt(tp) * norm_cdf(-b / a);
            bvn -= std::exp(-hk / 2.0) * sp * b * (1.0 - c * bs * (1.0 - d * bs) / 3.0);
        }
        a /= 2.0;
        double acc = 0.0;
        for (int i = 0; i < lg; ++i) {
            for (double sgn : {-1.0, 1.0}) {
                const double xs = std::pow(a * (1.0 + sgn * x[i]), 2);
                const double asx = -(bs / xs + hk) / 2.0;
                if (asx > -100.0) {
                    const double sp = 1.0 + c * xs * (1.0 + 5.0 * d * xs);
                    const double rs = std::sqrt(1.0 - xs);
                    const double ep = std::exp(-(hk / 2.0) * xs / ((1.0 + rs) * (1.0 + rs))) / rs;
                    acc += w[i] * std::exp(asx) * (sp - ep);
                }
            }
        }
        bvn = (a * acc - bvn) / tp;
    }
    if (r > 0.0) {
        bvn += norm_cdf(-std::max(h, k));
    } else if (h >= k) {
        bvn = -bvn;
    } else {
        const double l = h < 0.0 ? norm_cdf(k) - norm_cdf(h) : norm_cdf(-h) - norm_cdf(-k);
        bvn = l - bvn;
    }
    return std::clamp(bvn, 0.0, 1.0);
}

namespace detail {

// Log-space quadrature of phi(x) Phi((k - r x)/s) over x <= h, used where the
// Gauss-Legendre reduction loses relative accuracy.
inline double bvn_cdf_tail(double h, double k, double r) {
    if (h > k) std::swap(h, k);
    const double s = std::sqrt((1.0 - r) * (1.0 + r));
    auto logg = [&](double x) { return -0.5 * x * x - kLogSqrt2Pi + log_norm_cdf((k - r * x) / s); };
    double lo = std::max(-40.0, h - 80.0), hi = h;
    if (std::abs(r) > 1e-12) {
        const double edge = (k + 40.0 * s) / r;
        if (r > 0.0) hi = std::min(hi, edge);
        else lo = std::max(lo, edge);
    }
    if (!(lo < hi)) return 0.0;
    constexpr int grid = 64;
    const double step = (hi - lo) / (grid - 1);
    std::array<double, grid> lg;
    double top = -std::numeric_limits<double>::infinity();
    for (int g = 0; g < grid; ++g) top = std::max(top, lg[g] = logg(lo + g * step));
    int first = grid, last = -1;
    for (int g = 0; g < grid; ++g)
        if (lg[g] >= top - 60.0) first = std::min(first, g), last = g;
    const double a = lo + std::max(first - 1, 0) * step;
    const double b = lo + std::min(last + 1, grid - 1) * step;
    auto f = [&](double x) { return std::exp(logg(x) - top); };
    const double v = boost::math::quadrature::gauss_kronrod<double, 15>::integrate(f, a, b, 20, 1e-12);
    return std::exp(std::log(v) + top);
}

} // namespace detail

// P(X <= h, Y <= k) for a standard bivariate normal with correlation r.
inline double bvn_cdf(double h, double k, double r) {
    const double v = bvn_upper(-h, -k, r);
    if (v < 1e-8 && std::abs(r) < 1.0 - 1e-12 && std::isfinite(h) && std::isfinite(k)) return detail::bvn_cdf_tail(h, k, r);
    return v;
}

struct MvnCdfOptions {
    double abs_tol = 1e-6;
    std::size_t max_points = std::size_t{1} << 22;  // total integrand evaluations for QMC
    std::uint64_t seed = 0;
    bool force_qmc = false;  // use the lattice rule in dimensions 3 and 4 too
};

struct MvnCdfResult {
    double value = 0.0;
    double error = 0.0;
    bool converged = true;
    std::size_t evaluations = 0;
};

namespace detail {

inline std::uint64_t hash_doubles(std::uint64_t h, const double* v, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        std::uint64_t bits;
        std::memcpy(&bits, &v[i], sizeof bits);
        h = mix64(h ^ bits);
    }
    return h;
}


// Condition on the variable least correlated with the rest and integrate the
// lower-dimensional conditional CDF against its density.
inline double nested_cdf(const Eigen::VectorXd& b, const Eigen::MatrixXd& r, double tol, double* err) {
    const int m = static_cast<int>(b.size());
    if (m == 1) {
        *err = 0.0;
        return norm_cdf(b(0));
    }
    if (m == 2) {
        *err = 0.0;
        return bvn_cdf(b(0), b(1), std::clamp(r(0, 1), -1.0, 1.0));
    }
    int c = 0;
    double best = 2.0;
    for (int i = 0; i < m; ++i) {
        double mx = 0.0;
        for (int j = 0; j < m; ++j)
            if (j != i) mx = std::max(mx, std::abs(r(i, j)));
        if (mx < best) best = mx, c = i;
    }
    std::vector<int> rest;
    for (int i = 0; i < m; ++i)
        if (i != c) rest.push_back(i);
    const int k = m - 1;
    Eigen::VectorXd rc(k), sd(k), lim(k);
    Eigen::MatrixXd cr(k, k);
    for (int i = 0; i < k; ++i) {
        rc(i) = r(rest[i], c);
        sd(i) = std::sqrt((1.0 - rc(i)) * (1.0 + rc(i)));
    }
    for (int i = 0; i < k; ++i)
        for (int j = 0; j < k; ++j)
            cr(i, j) = i == j ? 1.0 : std::clamp((r(rest[i], rest[j]) - rc(i) * rc(j)) / (sd(i) * sd(j)), -1.0, 1.0);
    auto f = [&](double x) {
        for (int i = 0; i < k; ++i) lim(i) = (b(rest[i]) - rc(i) * x) / sd(i);
        double e = 0.0;
        return norm_pdf(x) * nested_cdf(lim, cr, tol, &e);
    };
    // Integration window: the log of phi(x) * min_i Phi(lim_i(x)) bounds the
    // integrand and is concave, so a coarse scan locates its mass.
    double lo = -40.0, hi = std::min(b(c), 40.0);
    for (int i = 0; i < k; ++i) {
        if (std::abs(rc(i)) < 1e-12) continue;
        const double edge = (b(rest[i]) + 40.0 * sd(i)) / rc(i);
        if (rc(i) > 0.0) hi = std::min(hi, edge);
        else lo = std::max(lo, edge);
    }
    *err = 0.0;
    if (!(lo < hi)) return 0.0;
    constexpr int grid = 48;
    const double step = (hi - lo) / (grid - 1);
    std::array<double, grid> lb;
    double top = -std::numeric_limits<double>::infinity();
    for (int g = 0; g < grid; ++g) {
        const double x = lo + g * step;
        double m = 0.0;
        for (int i = 0; i < k; ++i) m = std::min(m, log_norm_cdf((b(rest[i]) - rc(i) * x) / sd(i)));
        lb[g] = -0.5 * x * x + m;
        top = std::max(top, lb[g]);
    }
    int first = grid, last = -1;
    for (int g = 0; g < grid; ++g)
        if (lb[g] >= top - 60.0) first = std::min(first, g), last = g;
    const double a = lo + std::max(first - 1, 0) * step;
    const double z = lo + std::min(last + 1, grid - 1) * step;
    double l1 = 0.0;
    const double v = boost::math::quadrature::gauss_kronrod<double, 15>::integrate(f, a, z, 15, tol, err, &l1);
    return v;
}

// Genz separation-of-variables estimate on a randomly shifted lattice.
inline MvnCdfResult mvn_cdf_lattice(const Eigen::MatrixXd& corr, const Eigen::VectorXd& b,
                                    const MvnCdfOptions& opt) {
    const int m = static_cast<int>(b.size());
    // Cholesky with Genz-Bretz variable prioritisation.
    Eigen::MatrixXd c = corr;
    Eigen::VectorXd lim = b;
    Eigen::MatrixXd l = Eigen::MatrixXd::Zero(m, m);
    Eigen::VectorXd ybar = Eigen::VectorXd::Zero(m);
    for (int i = 0; i < m; ++i) {
        int pick = i;
        double pmin = 2.0;
        for (int j = i; j < m; ++j) {
            double s2 = c(j, j);
            double mu = 0.0;
            for (int k = 0; k < i; ++k) s2 -= l(j, k) * l(j, k), mu += l(j, k) * ybar(k);
            if (s2 <= 0.0) continue;
            const double p = norm_cdf((lim(j) - mu) / std::sqrt(s2));
            if (p < pmin) pmin = p, pick = j;
        }
        if (pick != i) {
            std::swap(lim(i), lim(pick));
            c.row(i).swap(c.row(pick));
            c.col(i).swap(c.col(pick));
            l.row(i).swap(l.row(pick));
        }
        double s2 = c(i, i);
        for (int k = 0; k < i; ++k) s2 -= l(i, k) * l(i, k);
        if (s2 <= 1e-14) throw NumericError("multivariate normal CDF: covariance is not positive definite");
        l(i, i) = std::sqrt(s2);
        for (int j = i + 1; j < m; ++j) {
            double v = c(j, i);
            for (int k = 0; k < i; ++k) v -= l(j, k) * l(i, k);
            l(j, i) = v / l(i, i);
        }
        double mu = 0.0;
        for (int k = 0; k < i; ++k) mu += l(i, k) * ybar(k);
        const double u = (lim(i) - mu) / l(i, i);
        const double pu = norm_cdf(u);
        ybar(i) = pu > 1e-300 ? -norm_pdf(u) / pu : u;
    }

    const double e1 = norm_cdf(lim(0) / l(0, 0));
    if (m == 1) return {e1, 0.0, true};

    static constexpr std::array<int, 24> primes{2,  3,  5,  7,  11, 13, 17, 19, 23, 29, 31, 37,
                                                41, 43, 47, 53, 59, 61, 67, 71, 73, 79, 83, 89};
    const int dims = m - 1;
    require(dims <= static_cast<int>(primes.size()), "multivariate normal CDF: dimension too large");
    std::vector<double> gen(dims);
    for (int k = 0; k < dims; ++k) gen[k] = std::sqrt(static_cast<double>(primes[k]));

    std::uint64_t h = detail::hash_doubles(mix64(opt.seed), corr.data(), static_cast<std::size_t>(corr.size()));
    h = detail::hash_doubles(h, b.data(), static_cast<std::size_t>(b.size()));
    Rng rng(h);

    constexpr int shifts = 12;
    std::vector<double> y(m), w(dims), shift(dims);
    auto integrand = [&](const std::vector<double>& pt) {
        double e = e1, f = e1;
        for (int i = 1; i < m; ++i) {
            y[i - 1] = norm_ppf(std::clamp(pt[i - 1] * e, 1e-300, 1.0 - 1e-16));
            double s = 0.0;
            for (int k = 0; k < i; ++k) s += l(i, k) * y[k];
            e = norm_cdf((lim(i) - s) / l(i, i));
            f *= e;
        }
        return f;
    };

    std::size_t n = 64, used = 0;
    MvnCdfResult res;
    for (;;) {
        double mean = 0.0, m2 = 0.0;
        for (int s = 0; s < shifts; ++s) {
            for (int k = 0; k < dims; ++k) shift[k] = uniform_open(rng);
            double acc = 0.0;
            for (std::size_t j = 1; j <= n; ++j) {
                for (int k = 0; k < dims; ++k) {
                    const double t = std::fmod(static_cast<double>(j) * gen[k] + shift[k], 1.0);
                    w[k] = std::abs(2.0 * t - 1.0);
                }
                acc += integrand(w);
                for (int k = 0; k < dims; ++k) w[k] = 1.0 - w[k];
                acc += integrand(w);
            }
            const double est = acc / (2.0 * static_cast<double>(n));
            const double delta = est - mean;
            mean += delta / (s + 1);
            m2 += delta * (est - mean);
        }
        used += 2 * n * shifts;
        res.evaluations = used;
        res.value = mean;
        res.error = 3.0 * std::sqrt(m2 / (shifts - 1) / shifts);
        if (res.error <= opt.abs_tol) break;
        if (used + 4 * n * shifts > opt.max_points) {
            res.converged = false;
            break;
        }
        n *= 2;
    }
    res.value = std::clamp(res.value, 0.0, 1.0);
    return res;
}

} // namespace detail

// P(X <= upper) for X ~ N(0, sigma). Infinite limits are allowed.
inline MvnCdfResult mvn_cdf(const Eigen::MatrixXd& sigma, const Eigen::VectorXd& upper,
                            const MvnCdfOptions& opt = {}) {
    const Eigen::Index n = upper.size();
    require(n >= 1, "multivariate normal CDF needs dimension >= 1");
    require(sigma.rows() == n && sigma.cols() == n, "covariance and limit dimensions differ");

    // Standardise and drop coordinates with +inf limits.
    std::vector<Eigen::Index> keep;
    for (Eigen::Index i = 0; i < n; ++i) {
        require(sigma(i, i) > 0.0 && std::isfinite(sigma(i, i)), "covariance diagonal must be positive");
        if (std::isnan(upper(i))) throw ConfigError("multivariate normal CDF: NaN limit");
        if (upper(i) == -std::numeric_limits<double>::infinity()) return {0.0, 0.0, true};
        if (upper(i) != std::numeric_limits<double>::infinity()) keep.push_back(i);
    }
    const auto m = static_cast<Eigen::Index>(keep.size());
    if (m == 0) return {1.0, 0.0, true};
    Eigen::VectorXd b(m);
    Eigen::MatrixXd r(m, m);
    for (Eigen::Index i = 0; i < m; ++i) {
        const double si = std::sqrt(sigma(keep[i], keep[i]));
        b(i) = upper(keep[i]) / si;
        for (Eigen::Index j = 0; j < m; ++j) {
            r(i, j) = sigma(keep[i], keep[j]) / (si * std::sqrt(sigma(keep[j], keep[j])));
        }
    }
    if (m == 1) return {norm_cdf(b(0)), 0.0, true};
    if (m == 2) {
        const double rho = r(0, 1);
        require(std::abs(rho) <= 1.0 + 1e-12, "covariance is not positive semi-definite");
        return {bvn_cdf(b(0), b(1), std::clamp(rho, -1.0, 1.0)), 1e-14, true};
    }
    Eigen::LLT<Eigen::MatrixXd> llt(r);
    if (llt.info() != Eigen::Success) throw NumericError("multivariate normal CDF: covariance is not positive definite");
    if (m <= 4 && !opt.force_qmc) {
        double err = 0.0;
        const double v = detail::nested_cdf(b, r, opt.abs_tol, &err);
        return {std::clamp(v, 0.0, 1.0), err, err <= opt.abs_tol};
    }
    return detail::mvn_cdf_lattice(r, b, opt);
}

} // namespace vecchia
