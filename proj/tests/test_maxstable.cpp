#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <numbers>
#include <set>

#include <boost/math/quadrature/exp_sinh.hpp>

#include "vecchia/maxstable.hpp"

using namespace vecchia;

namespace {

using Fn = std::function<double(const std::vector<double>&)>;

// Mixed partial derivative over the listed coordinates with a tensor product
// of fourth-order central stencils.
double mixed_partial(const Fn& f, std::vector<double> z, const std::vector<int>& dims, double rel_step) {
    static constexpr double off[4] = {-2.0, -1.0, 1.0, 2.0};
    static constexpr double wt[4] = {1.0, -8.0, 8.0, -1.0};
    const int m = static_cast<int>(dims.size());
    std::vector<double> h(m);
    for (int a = 0; a < m; ++a) h[a] = rel_step * z[dims[a]];
    double total = 0.0;
    int combos = 1;
    for (int a = 0; a < m; ++a) combos *= 4;
    for (int c = 0; c < combos; ++c) {
        auto x = z;
        double w = 1.0;
        int code = c;
        for (int a = 0; a < m; ++a) {
            const int s = code % 4;
            code /= 4;
            x[dims[a]] += off[s] * h[a];
            w *= wt[s] / (12.0 * h[a]);
        }
        total += w * f(x);
    }
    return total;
}

double ks_frechet(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const double n = static_cast<double>(v.size());
    double d = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        const double f = std::exp(-1.0 / v[i]);
        d = std::max({d, std::abs((i + 1) / n - f), std::abs(i / n - f)});
    }
    return d;
}

SiteSet line_sites(std::vector<double> xs) {
    std::vector<Point> p;
    for (double x : xs) p.push_back({x, 0.3 * x * x});
    return SiteSet(p);
}

std::vector<int> iota_idx(int n) {
    std::vector<int> v(n);
    for (int i = 0; i < n; ++i) v[i] = i;
    return v;
}

} // namespace

TEST(SetPartitions, CountsMatchBellNumbers) {
    const std::uint64_t bell[] = {1, 1, 2, 5, 15, 52, 203, 877, 4140, 21147, 115975};
    for (int d = 1; d <= 10; ++d) {
        std::uint64_t n = 0;
        for (auto it = set_partitions(d); !it.done(); it.next()) ++n;
        EXPECT_EQ(n, bell[d]) << d;
        EXPECT_EQ(bell_number(d), bell[d]);
    }
    EXPECT_EQ(bell_number(12), 4213597u);
}

TEST(SetPartitions, EachIsADisjointCoverInRgsOrder) {
    std::set<std::vector<int>> seen;
    std::vector<int> prev;
    for (auto it = set_partitions(5); !it.done(); it.next()) {
        std::uint32_t acc = 0;
        for (auto m : it.blocks()) {
            EXPECT_NE(m, 0u);
            EXPECT_EQ(acc & m, 0u);
            acc |= m;
        }
        EXPECT_EQ(acc, 31u);
        const auto& a = it.rgs();
        EXPECT_EQ(a[0], 0);
        int mx = 0;
        for (std::size_t i = 1; i < a.size(); ++i) {
            EXPECT_LE(a[i], mx + 1);
            mx = std::max(mx, a[i]);
        }
        if (!prev.empty()) {
            EXPECT_LT(prev, a);
        }
        prev = a;
        EXPECT_TRUE(seen.insert(a).second);
    }
    EXPECT_EQ(prev, (std::vector<int>{0, 1, 2, 3, 4}));
}

TEST(SetPartitions, CapacityIsEnforced) {
    EXPECT_NO_THROW(set_partitions(12));
    EXPECT_THROW(set_partitions(13), ConfigError);
    EXPECT_THROW(set_partitions(0), ConfigError);
}

TEST(Logistic, ExponentBasics) {
    const auto sites = line_sites({0, 1, 2});
    const auto idx2 = iota_idx(2);
    const std::vector<double> ones{1.0, 1.0, 1.0};
    EXPECT_DOUBLE_EQ(exponent_V(LogisticModel{1.0}, sites, idx2, ones), 2.0);
    EXPECT_NEAR(exponent_V(LogisticModel{0.4}, sites, idx2, ones), std::pow(2.0, 0.4), 1e-14);
    for (double a : {0.2, 0.5, 0.9}) {
        const std::vector<double> z{1.7, 1e8, 1e8};
        EXPECT_NEAR(exponent_V(LogisticModel{a}, sites, iota_idx(3), z), 1.0 / 1.7, 1e-6);
    }
    EXPECT_NEAR(std::exp(SubsetDensity(LogisticModel{1.0}, 3).log_neg_partial(std::vector<double>{0.5, 2, 3}, 1)),
                1.0 / 0.25, 1e-12);
    EXPECT_EQ(SubsetDensity(LogisticModel{1.0}, 3).log_neg_partial(std::vector<double>{0.5, 2, 3}, 3),
              -INFINITY);
}

TEST(Logistic, DensityMatchesMixedDerivativeOfCdf) {
    Rng rng(7);
    for (int d = 2; d <= 3; ++d) {
        for (int rep = 0; rep < 10; ++rep) {
            const double alpha = 0.15 + 0.8 * uniform_open(rng);
            std::vector<double> z(d);
            for (auto& v : z) v = std::exp(2.0 * uniform_open(rng) - 1.0);
            const SubsetDensity dens(LogisticModel{alpha}, d);
            Fn cdf = [&](const std::vector<double>& x) { return std::exp(-dens.exponent(x)); };
            const double fd = mixed_partial(cdf, z, iota_idx(d), 1e-3);
            EXPECT_NEAR(dens.logpdf(z), std::log(fd), 1e-5) << d << " " << alpha;
        }
    }
}

TEST(Logistic, TwoSiteDensityEqualsHandExpansion) {
    for (double alpha : {0.3, 0.6, 1.0}) {
        const std::vector<double> z{0.8, 2.5};
        const SubsetDensity dens(LogisticModel{alpha}, 2);
        const double t = std::pow(z[0], -1 / alpha) + std::pow(z[1], -1 / alpha);
        const double v = std::pow(t, alpha);
        const double v1 = -std::pow(t, alpha - 1) * std::pow(z[0], -1 / alpha - 1);
        const double v2 = -std::pow(t, alpha - 1) * std::pow(z[1], -1 / alpha - 1);
        const double v12 = (alpha - 1) / alpha * std::pow(t, alpha - 2) * std::pow(z[0], -1 / alpha - 1) *
                           std::pow(z[1], -1 / alpha - 1);
        EXPECT_NEAR(dens.logpdf(z), -v + std::log(v1 * v2 - v12), 1e-13);
    }
}

TEST(Logistic, HomogeneityAndSingleSite) {
    const SubsetDensity dens(LogisticModel{0.35}, 4);
    const std::vector<double> z{0.3, 1.1, 4.0, 0.9};
    for (double t : {0.01, 0.5, 3.0, 1e3}) {
        std::vector<double> tz = z;
        for (auto& v : tz) v *= t;
        EXPECT_LT(std::abs(dens.exponent(tz) - dens.exponent(z) / t), 1e-10 * dens.exponent(z));
    }
    const SubsetDensity one(LogisticModel{0.35}, 1);
    for (double x : {0.1, 1.0, 7.0}) EXPECT_NEAR(one.logpdf(std::vector<double>{x}), -1 / x - 2 * std::log(x), 1e-14);
}

TEST(BrownResnick, ExponentClosedForms) {
    const auto sites = line_sites({0.0, 1.3, 2.1, 3.7});
    const auto br = BrownResnickModel::bounded(2.0, 1.5);
    const double g = br.gamma(sites[0], sites[1]);
    EXPECT_NEAR(g, 2 * 4.0 * (1 - std::exp(-std::hypot(1.3, 0.3 * 1.69) / 1.5)), 1e-12);
    const std::vector<double> ones(4, 1.0);
    EXPECT_NEAR(exponent_V(br, sites, iota_idx(2), ones), 2 * norm_cdf(std::sqrt(g) / 2), 1e-12);
    // Bivariate Huesler-Reiss form.
    const std::vector<double> z{0.7, 2.2};
    const double a = std::sqrt(g);
    const double hr = norm_cdf(a / 2 + std::log(z[1] / z[0]) / a) / z[0] + norm_cdf(a / 2 + std::log(z[0] / z[1]) / a) / z[1];
    EXPECT_NEAR(exponent_V(br, sites, iota_idx(2), z), hr, 1e-13);
    for (int d = 2; d <= 4; ++d) {
        std::vector<double> zz(4, 1e8);
        zz[0] = 1.9;
        EXPECT_NEAR(exponent_V(br, sites, iota_idx(d), zz), 1 / 1.9, 1e-6) << d;
    }
}

TEST(BrownResnick, Homogeneity) {
    const auto sites = line_sites({0.0, 1.0, 2.5, 3.1});
    const SubsetDensity dens(BrownResnickModel::bounded(3.0, 2.0), sites, iota_idx(4));
    const std::vector<double> z{0.4, 1.3, 2.2, 0.9};
    for (double t : {0.01, 0.5, 2.0, 1e3}) {
        std::vector<double> tz = z;
        for (auto& v : tz) v *= t;
        EXPECT_LT(std::abs(dens.exponent(tz) - dens.exponent(z) / t), 1e-10 * dens.exponent(z)) << t;
    }
}

TEST(BrownResnick, ExponentFromReferencePartialsAgrees) {
    // V = sum_r z_r (-V_r) by homogeneity; the partials use a different route.
    const auto sites = line_sites({0.0, 0.8, 1.9, 2.4, 3.3});
    for (int d = 2; d <= 5; ++d) {
        const SubsetDensity dens(BrownResnickModel::power(1.7, 1.2, {0.4, 0.6}), sites, iota_idx(d));
        std::vector<double> z(d);
        for (int i = 0; i < d; ++i) z[i] = 0.5 + 0.7 * i;
        const auto lp = dens.log_neg_partials(z);
        double v = 0.0;
        for (int r = 0; r < d; ++r) v += z[r] * std::exp(lp[1u << r]);
        EXPECT_NEAR(v, dens.exponent(z), 1e-6 * v) << d;
    }
}

TEST(BrownResnick, PartialsMatchFiniteDifferences) {
    const auto sites = line_sites({0.0, 1.1, 2.0});
    const SubsetDensity dens(BrownResnickModel::bounded(2.5, 3.0), sites, iota_idx(3));
    MvnCdfOptions tight;
    tight.abs_tol = 1e-12;
    const SubsetDensity fine(BrownResnickModel::bounded(2.5, 3.0), sites, iota_idx(3), tight);
    const std::vector<double> z{0.9, 1.6, 0.7};
    Fn v = [&](const std::vector<double>& x) { return fine.exponent(x); };
    for (int i = 0; i < 3; ++i) {
        const double fd = mixed_partial(v, z, {i}, 1e-5);
        const double an = -std::exp(dens.log_neg_partial(z, 1u << i));
        EXPECT_NEAR(an, fd, 1e-6 * std::abs(fd)) << i;
    }
    const int pairs[][2] = {{0, 1}, {0, 2}, {1, 2}};
    for (const auto& p : pairs) {
        const double fd = mixed_partial(v, z, {p[0], p[1]}, 1e-3);
        const double an = -std::exp(dens.log_neg_partial(z, (1u << p[0]) | (1u << p[1])));
        EXPECT_NEAR(an, fd, 1e-4 * std::abs(fd)) << p[0] << p[1];
    }
    const double fd3 = mixed_partial(v, z, {0, 1, 2}, 1e-2);
    EXPECT_NEAR(-std::exp(dens.log_neg_partial(z, 7)), fd3, 1e-3 * std::abs(fd3));
}

TEST(BrownResnick, DensityMatchesMixedDerivativeOfCdf) {
    Rng rng(11);
    for (int rep = 0; rep < 6; ++rep) {
        const double sigma = 0.5 + 3 * uniform_open(rng), lambda = 0.5 + 4 * uniform_open(rng);
        const auto sites = line_sites({0.0, 0.5 + uniform_open(rng), 2.0});
        for (int d = 2; d <= 3; ++d) {
            MvnCdfOptions tight;
            tight.abs_tol = 1e-12;
            const SubsetDensity dens(BrownResnickModel::bounded(sigma, lambda), sites, iota_idx(d), tight);
            std::vector<double> z(d);
            for (auto& v : z) v = std::exp(2.0 * uniform_open(rng) - 1.0);
            Fn cdf = [&](const std::vector<double>& x) { return std::exp(-dens.exponent(x)); };
            const double fd = mixed_partial(cdf, z, iota_idx(d), d == 2 ? 1e-3 : 1e-2);
            EXPECT_NEAR(dens.logpdf(z), std::log(fd), 5e-3) << d << " " << sigma << " " << lambda;
        }
    }
}

TEST(BrownResnick, IsotropicAnisotropyEqualsPowerVariogram) {
    const auto sites = line_sites({0.0, 0.7, 1.5, 2.6});
    const double lambda = 1.3, alpha = 0.8;
    Eigen::MatrixXd g = Eigen::MatrixXd::Zero(4, 4);
    for (int a = 0; a < 4; ++a)
        for (int b = 0; b < 4; ++b)
            if (a != b) g(a, b) = 2 * std::pow(std::hypot(sites[a].x - sites[b].x, sites[a].y - sites[b].y) / lambda, alpha);
    const SubsetDensity dens(BrownResnickModel::power(lambda, alpha, {0.0, 1.0}), sites, iota_idx(4));
    EXPECT_LT((dens.gamma() - g).cwiseAbs().maxCoeff(), 1e-14);
    const std::vector<double> z{0.5, 1.5, 2.0, 0.8};
    EXPECT_NEAR(dens.exponent(z), detail::br_exponent(g, z, {}), 1e-12);
}

TEST(BrownResnick, DegeneratePairRejected) {
    const auto sites = line_sites({0.0, 1.0});
    const std::vector<double> z{1.0, 1.0};
    // Variogram underflows to zero for a vanishing scale.
    EXPECT_THROW(exponent_V(BrownResnickModel::bounded(1e-170, 1.0), sites, iota_idx(2), z), NumericError);
    EXPECT_THROW(exponent_V(BrownResnickModel::bounded(-1.0, 1.0), sites, iota_idx(2), z), ConfigError);
    EXPECT_THROW(exponent_V(LogisticModel{0.5}, sites, iota_idx(2), std::vector<double>{1.0, -2.0}), ConfigError);
}

TEST(Conditional, SpecialCases) {
    const auto sites = line_sites({0.0, 1.0, 2.0, 3.0});
    const std::vector<double> z{0.6, 1.4, 2.0, 0.9};
    const std::vector<int> none;
    const std::vector<int> s{1, 2};
    const auto br = BrownResnickModel::bounded(2.0, 2.0);
    EXPECT_NEAR(maxstable_conditional_logpdf(br, sites, 3, none, z), -1 / 0.9 - 2 * std::log(0.9), 1e-14);
    EXPECT_NEAR(maxstable_conditional_logpdf(LogisticModel{1.0}, sites, 0, s, z), -1 / 0.6 - 2 * std::log(0.6), 1e-12);
}

TEST(Conditional, IntegratesToOne) {
    const auto sites = line_sites({0.0, 1.0, 2.2});
    const std::vector<int> s{1, 2};
    boost::math::quadrature::exp_sinh<double> integrator;
    for (const MaxStableModel& m : {MaxStableModel{LogisticModel{0.45}}, MaxStableModel{BrownResnickModel::bounded(1.5, 2.0)}}) {
        std::vector<double> z{1.0, 0.8, 2.3};
        auto f = [&](double x) {
            // The density is below exp(-1e4) outside this range.
            if (x < 1e-4 || x > 1e12) return 0.0;
            z[0] = x;
            return std::exp(maxstable_conditional_logpdf(m, sites, 0, s, z));
        };
        EXPECT_NEAR(integrator.integrate(f, 1e-8), 1.0, 1e-3);
    }
}

TEST(Conditional, ChainRuleRecoversFullDensity) {
    const auto sites = line_sites({0.0, 0.9, 1.7, 2.9});
    const std::vector<double> z{0.8, 1.9, 0.5, 3.1};
    for (const MaxStableModel& m : {MaxStableModel{LogisticModel{0.55}}, MaxStableModel{BrownResnickModel::bounded(1.2, 1.8)}}) {
        double chain = 0.0;
        std::vector<int> past;
        for (int j = 0; j < 4; ++j) {
            chain += maxstable_conditional_logpdf(m, sites, j, past, z);
            past.push_back(j);
        }
        EXPECT_NEAR(chain, maxstable_logpdf(m, sites, iota_idx(4), z), 1e-8);
    }
}

TEST(ExtremalCoefficient, FormulaProperties) {
    const auto m = BrownResnickModel::bounded(10.0, 5.0);
    EXPECT_DOUBLE_EQ(extremal_coefficient(m, 0.0, 0.0), 1.0);
    EXPECT_NEAR(extremal_coefficient(m, 1e4, 0.0), 2.0, 1e-6);
    EXPECT_NEAR(extremal_coefficient(m, 1e4, 0.0), 2 * norm_cdf(10.0 / std::numbers::sqrt2), 1e-15);
    for (double lambda = 1; lambda <= 10; lambda += 1) {
        const auto a = BrownResnickModel::bounded(10.0, lambda), b = BrownResnickModel::bounded(10.0, lambda + 1);
        double prev = 1.0;
        for (double h = 0.25; h <= 30; h += 0.25) {
            const double t = extremal_coefficient(a, h, 0.0);
            EXPECT_GE(t, prev);
            EXPECT_LE(t, 2.0);
            EXPECT_GE(t, extremal_coefficient(b, h, 0.0));
            prev = t;
        }
    }
    const auto p = BrownResnickModel::power(2.0, 1.5, {0.3, 0.5});
    double prev = 1.0;
    for (double h = 0.1; h < 50; h *= 1.3) {
        const double t = extremal_coefficient(p, h * 0.6, h * 0.8);
        EXPECT_GE(t, prev);
        prev = t;
    }
    EXPECT_DOUBLE_EQ(extremal_coefficient(LogisticModel{0.5}), std::sqrt(2.0));
    const auto sites = line_sites({0.0, 2.0});
    const std::vector<double> ones{1.0, 1.0};
    EXPECT_NEAR(exponent_V(m, sites, iota_idx(2), ones), extremal_coefficient(m, sites[1].x, sites[1].y), 1e-12);
}

TEST(Madogram, DependenceLimits) {
    const auto x = simulate_logistic(1.0, 1, 10000, 5);
    std::vector<double> a(x.col(0).data(), x.col(0).data() + x.rows());
    EXPECT_DOUBLE_EQ(madogram_extremal_coefficient(a, a), 1.0);
    const auto y = simulate_logistic(1.0, 2, 10000, 6);
    std::vector<double> c0(y.col(0).data(), y.col(0).data() + y.rows());
    std::vector<double> c1(y.col(1).data(), y.col(1).data() + y.rows());
    EXPECT_NEAR(madogram_extremal_coefficient(c0, c1), 2.0, 0.05);
}

TEST(Madogram, BinningReportsEmptyBinsAsMissing) {
    const SiteSet sites({{0, 0}, {1, 0}, {0, 1}, {1, 1}});
    const auto data = simulate_logistic(0.5, 4, 200, 3);
    const auto pairs = pairwise_extremal(data, sites);
    ASSERT_EQ(pairs.size(), 6u);
    const auto bins = bin_by_distance(pairs, {0.0, 0.5, 1.2, 2.0});
    EXPECT_EQ(bins[0].count, 0u);
    EXPECT_FALSE(bins[0].mean.has_value());
    EXPECT_EQ(bins[1].count, 4u);
    EXPECT_EQ(bins[2].count, 2u);
    ASSERT_TRUE(bins[1].mean.has_value());
    std::vector<double> unit;
    for (const auto& p : pairs)
        if (p.distance == 1.0) unit.push_back(p.theta);
    std::sort(unit.begin(), unit.end());
    ASSERT_EQ(unit.size(), 4u);
    EXPECT_DOUBLE_EQ(*bins[1].q1, unit[0] + 0.75 * (unit[1] - unit[0]));
    EXPECT_DOUBLE_EQ(*bins[1].median, 0.5 * (unit[1] + unit[2]));
    EXPECT_DOUBLE_EQ(*bins[1].q3, unit[2] + 0.25 * (unit[3] - unit[2]));
    EXPECT_FALSE(bins[0].q1.has_value());
    const auto dirs = bin_by_direction(pairs, {0.0, 45.0, 90.0, 135.0}, 22.5);
    EXPECT_EQ(dirs[0].count, 2u);
    EXPECT_EQ(dirs[1].count, 1u);
    EXPECT_EQ(dirs[2].count, 2u);
    EXPECT_EQ(dirs[3].count, 1u);
    const auto sparse = bin_by_direction(pairs, {20.0}, 5.0);
    EXPECT_FALSE(sparse[0].median.has_value());
}

TEST(Madogram, TracksModelCurveForSimulatedBrownResnick) {
    const auto sites = make_grid(5);
    const auto m = BrownResnickModel::bounded(10.0, 5.0);
    const auto data = simulate_brown_resnick(m, sites, 1000, 17);
    const auto pairs = pairwise_extremal(data, sites);
    int outside = 0;
    for (const auto& p : pairs) {
        const double t = extremal_coefficient(m, sites[p.j].x - sites[p.i].x, sites[p.j].y - sites[p.i].y);
        // Madogram standard error at n = 1000 is below 0.05 over this range.
        if (std::abs(p.theta - t) > 0.1) ++outside;
    }
    EXPECT_LE(outside, static_cast<int>(pairs.size() / 20));
}

TEST(Simulation, LogisticMarginsAndDependence) {
    const auto x = simulate_logistic(0.5, 3, 10000, 42);
    for (int c = 0; c < 3; ++c) EXPECT_LT(ks_frechet({x.col(c).data(), x.col(c).data() + x.rows()}), 0.02);
    // P(Z1 <= 1, Z2 <= 1) = exp(-2^alpha).
    const double p = std::exp(-std::sqrt(2.0));
    double hits = 0;
    for (Eigen::Index r = 0; r < x.rows(); ++r) hits += x(r, 0) <= 1 && x(r, 1) <= 1;
    EXPECT_NEAR(hits / x.rows(), p, 3 * std::sqrt(p * (1 - p) / x.rows()));
}

TEST(Simulation, BrownResnickMarginsAndPairs) {
    const SiteSet sites({{0, 0}, {1, 0}, {0, 2}, {3, 1}});
    for (const auto& m : {BrownResnickModel::bounded(2.0, 3.0), BrownResnickModel::power(1.5, 1.0, {0.3, 0.5})}) {
        const auto x = simulate_brown_resnick(m, sites, 10000, 8);
        for (int c = 0; c < 4; ++c) EXPECT_LT(ks_frechet({x.col(c).data(), x.col(c).data() + x.rows()}), 0.02);
        for (int a = 0; a < 4; ++a) {
            for (int b = a + 1; b < 4; ++b) {
                const double p = std::exp(-extremal_coefficient(m, sites[a], sites[b]));
                double hits = 0;
                for (Eigen::Index r = 0; r < x.rows(); ++r) hits += x(r, a) <= 1 && x(r, b) <= 1;
                EXPECT_NEAR(hits / x.rows(), p, 3 * std::sqrt(p * (1 - p) / x.rows())) << a << b;
            }
        }
    }
}

TEST(Simulation, VanishingVariogramIsComonotone) {
    const auto x = simulate_brown_resnick(BrownResnickModel::bounded(1e-6, 1.0), make_grid(3), 200, 2);
    for (Eigen::Index r = 0; r < x.rows(); ++r)
        EXPECT_LT((x.row(r).array() / x(r, 0) - 1.0).abs().maxCoeff(), 1e-4);
}

TEST(Simulation, DeterministicAcrossThreads) {
    const auto m = BrownResnickModel::bounded(3.0, 2.0);
    const auto a = simulate_brown_resnick(m, make_grid(3), 50, 99, 1);
    const auto b = simulate_brown_resnick(m, make_grid(3), 50, 99, 4);
    EXPECT_EQ(a, b);
    EXPECT_NE(a, simulate_brown_resnick(m, make_grid(3), 50, 100, 1));
    EXPECT_EQ(simulate_logistic(0.3, 4, 20, 1, 1), simulate_logistic(0.3, 4, 20, 1, 3));
}
