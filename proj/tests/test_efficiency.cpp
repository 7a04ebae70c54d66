#include <gtest/gtest.h>

#include <cmath>

#include "vecchia/efficiency.hpp"

using namespace vecchia;

namespace {

// 1/2 sum_S w_S tr(A_i A_j) with A_i = Sigma_S^{-1} dSigma_S/dpsi_i.
Eigen::MatrixXd simple_J(const WeightedScheme& s, const CovarianceDerivatives& cd) {
    const int m = static_cast<int>(cd.first.size());
    Eigen::MatrixXd j = Eigen::MatrixXd::Zero(m, m);
    for (const auto& t : s.terms) {
        const Eigen::MatrixXd inv = detail::cut<Eigen::MatrixXd>(cd.sigma, t.sites, t.sites).inverse();
        std::vector<Eigen::MatrixXd> a;
        for (int i = 0; i < m; ++i) a.push_back(inv * detail::cut<Eigen::MatrixXd>(cd.first[i], t.sites, t.sites));
        for (int r = 0; r < m; ++r)
            for (int c = 0; c < m; ++c) j(r, c) += 0.5 * t.weight * (a[r] * a[c]).trace();
    }
    return j;
}

double rel(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    return (a - b).cwiseAbs().maxCoeff() / std::max(1e-300, b.cwiseAbs().maxCoeff());
}

} // namespace

TEST(CovarianceDerivatives, ExamplesAndFiniteDifferences) {
    const SiteSet two({{0, 0}, {3, 4}});
    const auto cd = covariance_derivatives(CorrelationModel::exponential(5.0), two, 2);
    EXPECT_EQ(cd.first[0](0, 0), 0.0);
    EXPECT_NEAR(cd.first[0](0, 1), std::exp(-1.0) / 5.0, 1e-16);

    const auto g = make_grid(3);
    const double step = 1e-5;
    for (const auto& model : {CorrelationModel::exponential(2.5), CorrelationModel::powered_exponential(2.5, 1.4),
                              CorrelationModel::powered_exponential(0.8, 0.6)}) {
        const auto d = covariance_derivatives(model, g, 2);
        const auto p = model.params();
        const int m = model.num_params();
        for (int i = 0; i < m; ++i) {
            auto up = p, dn = p;
            up[i] += step;
            dn[i] -= step;
            const Eigen::MatrixXd su = correlation_matrix(model.with_params(up), g);
            const Eigen::MatrixXd sd = correlation_matrix(model.with_params(dn), g);
            EXPECT_LT(((su - sd) / (2 * step) - d.first[i]).cwiseAbs().maxCoeff(), 1e-7);
            const auto du = covariance_derivatives(model.with_params(up), g, 1);
            const auto dd = covariance_derivatives(model.with_params(dn), g, 1);
            for (int j = 0; j < m; ++j)
                EXPECT_LT(((du.first[j] - dd.first[j]) / (2 * step) - d.second[i][j]).cwiseAbs().maxCoeff(), 1e-7);
        }
    }
}

TEST(Schemes, TermCounts) {
    const auto g = make_grid(10);
    const auto plan = build_ordering(g, OrderingKind::coordinate, 0);
    for (int d = 2; d <= 5; ++d) EXPECT_EQ(vecchia_scheme(plan, conditioning_sets(g, plan, d), d).size(), 199u);
    EXPECT_EQ(composite_scheme(truncated_subsets(g, 3, 2.0)).size(), 772u);
    EXPECT_THROW(composite_scheme(truncated_subsets(g, 3, 1.0)), ConfigError);
    const auto w = vecchia_scheme(plan, conditioning_sets(g, plan, 3), 3, -0.5);
    int neg = 0;
    for (const auto& t : w.terms) neg += t.weight == -0.5;
    EXPECT_EQ(neg, 99);
}

TEST(Sensitivity, TwoSiteFisherInformation) {
    for (double h : {0.5, 2.0, 7.0}) {
        const SiteSet two({{0, 0}, {h, 0}});
        const auto model = CorrelationModel::exponential(3.0);
        const auto cd = covariance_derivatives(model, two, 2);
        const double r = model.rho(h), dr = model.drho(h, 0);
        // Fisher information in rho for a unit-variance bivariate normal.
        const double info = (1 + r * r) / ((1 - r * r) * (1 - r * r));
        EXPECT_NEAR(sensitivity_J(full_scheme(2), cd)(0, 0), info * dr * dr, 1e-12 * info * dr * dr);
    }
}

TEST(Sensitivity, AgreesWithTraceIdentity) {
    const auto g = make_grid(5);
    const auto model = CorrelationModel::powered_exponential(4.0, 1.2);
    const auto cd = covariance_derivatives(model, g, 2);
    const auto plan = build_ordering(g, OrderingKind::max_min, 4);
    for (const auto& s : {full_scheme(25), composite_scheme(truncated_subsets(g, 3, 2.0)),
                          vecchia_scheme(plan, conditioning_sets(g, plan, 4), 4, -0.7)}) {
        EXPECT_LT(rel(sensitivity_J(s, cd), simple_J(s, cd)), 1e-10) << s.name;
    }
    WeightedScheme zero = composite_scheme(truncated_subsets(g, 2, 1.0));
    for (auto& t : zero.terms) t.weight = 0.0;
    EXPECT_EQ(sensitivity_J(zero, cd), Eigen::MatrixXd::Zero(2, 2));
    EXPECT_GT(sensitivity_J(full_scheme(25), covariance_derivatives(CorrelationModel::exponential(4.0), g, 2))(0, 0), 0);
}

TEST(Variability, BartlettIdentityForValidLikelihoods) {
    const auto g = make_grid(5);
    for (const auto& model : {CorrelationModel::exponential(5.0), CorrelationModel::powered_exponential(3.0, 1.5)}) {
        const auto cd = covariance_derivatives(model, g, 2);
        const auto full = full_scheme(25);
        EXPECT_LT(rel(variability_K(full, cd), sensitivity_J(full, cd)), 1e-8);
        for (auto k : {OrderingKind::coordinate, OrderingKind::random, OrderingKind::middle_out}) {
            const auto plan = build_ordering(g, k, 2);
            const auto s = vecchia_scheme(plan, conditioning_sets(g, plan, 25), 25);
            EXPECT_LT(rel(variability_K(s, cd), sensitivity_J(s, cd)), 1e-8) << s.name;
        }
    }
}

TEST(Variability, PairSumMatchesDenseRoute) {
    const auto g = make_grid(6);
    const auto model = CorrelationModel::powered_exponential(5.0, 1.1);
    const auto cd = covariance_derivatives(model, g, 1);
    const auto plan = build_ordering(g, OrderingKind::random, 8);
    for (const auto& s : {composite_scheme(truncated_subsets(g, 2, 2.0)), composite_scheme(truncated_subsets(g, 4, 2.3)),
                          vecchia_scheme(plan, conditioning_sets(g, plan, 3), 3, -0.4),
                          vecchia_scheme(plan, conditioning_sets(g, plan, 10), 10, -1.0)}) {
        EXPECT_LT(rel(variability_K(s, cd), variability_K_dense(s, cd)), 1e-10) << s.name;
    }
}

TEST(Variability, ThreadCountDoesNotChangeBits) {
    const auto g = make_grid(8);
    const auto cd = covariance_derivatives(CorrelationModel::exponential(5.0), g, 2);
    const auto s = composite_scheme(truncated_subsets(g, 3, 2.3));
    EXPECT_EQ(variability_K(s, cd, 1), variability_K(s, cd, 4));
    EXPECT_EQ(sensitivity_J(s, cd, 1), sensitivity_J(s, cd, 3));
}

TEST(Variability, MonteCarloScoreCovariance) {
    const auto g = make_grid(4);
    const auto model = CorrelationModel::exponential(3.0);
    const auto cd = covariance_derivatives(model, g, 2);
    const auto s = composite_scheme(truncated_subsets(g, 2, 1.5));
    const double k = variability_K(s, cd)(0, 0);
    // Score of replicate z: sum_S -1/2 tr(Sigma_S^{-1} dSigma_S) - 1/2 z_S' dSigma_S^{-1} z_S.
    std::vector<Eigen::MatrixXd> inv, dinv;
    std::vector<double> tr;
    for (const auto& t : s.terms) {
        const Eigen::MatrixXd si = detail::cut<Eigen::MatrixXd>(cd.sigma, t.sites, t.sites).inverse();
        const Eigen::MatrixXd ds = detail::cut<Eigen::MatrixXd>(cd.first[0], t.sites, t.sites);
        dinv.push_back(-si * ds * si);
        tr.push_back((si * ds).trace());
    }
    const auto x = simulate_gauss(GaussianJoint(cd.sigma), 10000, 2024);
    std::vector<double> score(x.rows(), 0.0);
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
        for (std::size_t t = 0; t < s.size(); ++t) {
            Eigen::VectorXd z(s.terms[t].sites.size());
            for (std::size_t i = 0; i < s.terms[t].sites.size(); ++i) z(i) = x(r, s.terms[t].sites[i]);
            score[r] += -0.5 * tr[t] - 0.5 * z.dot(dinv[t] * z);
        }
    }
    double mean = 0.0;
    for (double v : score) mean += v / score.size();
    double var = 0.0, m4 = 0.0;
    for (double v : score) var += (v - mean) * (v - mean) / (score.size() - 1);
    for (double v : score) m4 += std::pow((v - mean) * (v - mean) - var, 2) / score.size();
    const double se = std::sqrt(m4 / score.size());
    EXPECT_LT(std::abs(var - k), 3.0 * se) << "empirical " << var << " analytic " << k;
    EXPECT_LT(std::abs(mean), 3.0 * std::sqrt(var / score.size()));
}

TEST(Are, FullIsEfficientAndBoundsHold) {
    const auto g = make_grid(6);
    const auto model = CorrelationModel::powered_exponential(4.0, 1.3);
    const auto r = are(full_scheme(36), model, g, 10);
    EXPECT_NEAR(r.overall_are, 1.0, 1e-12);
    for (double a : r.marginal_are) EXPECT_NEAR(a, 1.0, 1e-12);
    EXPECT_LT(rel(r.V * 10.0, r.J.inverse()), 1e-10);
    for (auto k : {OrderingKind::coordinate, OrderingKind::max_min}) {
        const auto plan = build_ordering(g, k, 6);
        for (int d = 3; d <= 6; ++d) {
            const auto v = are(vecchia_scheme(plan, conditioning_sets(g, plan, d), d), model, g, 1);
            EXPECT_LE(v.overall_are, 1.0 + 1e-6);
            for (double a : v.marginal_are) EXPECT_LE(a, 1.0 + 1e-6);
        }
    }
    for (double delta : {1.5, 2.3}) {
        const auto c = are(composite_scheme(truncated_subsets(g, 2, delta)), model, g, 1);
        EXPECT_LE(c.overall_are, 1.0 + 1e-6);
    }
}

TEST(Are, VarianceScalesWithReplicates) {
    const auto g = make_grid(4);
    const auto model = CorrelationModel::exponential(2.0);
    const auto s = composite_scheme(truncated_subsets(g, 2, 1.5));
    const auto a = are(s, model, g, 1), b = are(s, model, g, 50);
    EXPECT_LT(rel(a.V, 50.0 * b.V), 1e-12);
    EXPECT_NEAR(a.overall_are, b.overall_are, 1e-12);
}

TEST(Are, TableTwoCells) {
    const auto g = make_grid(10);
    const auto model = CorrelationModel::exponential(5.0);
    const auto plan = build_ordering(g, OrderingKind::coordinate, 0);
    const double expect[] = {78.0, 89.9, 91.4, 97.0};
    double prev = 0.0;
    for (int d = 2; d <= 5; ++d) {
        const double a = 100.0 * are(vecchia_scheme(plan, conditioning_sets(g, plan, d), d), model, g, 1).overall_are;
        EXPECT_NEAR(a, expect[d - 2], 0.5);
        EXPECT_GE(a, prev);
        prev = a;
    }
    EXPECT_NEAR(100.0 * are(composite_scheme(truncated_subsets(g, 2, 1.0)), model, g, 1).overall_are, 90.4, 0.5);
}

TEST(Are, SingleLagCannotIdentifyTwoParameters) {
    // Coordinate d=2 on a grid only uses lag-1 pairs, which pin rho(1) but not (lambda, kappa).
    const auto g = make_grid(5);
    const auto plan = build_ordering(g, OrderingKind::coordinate, 0);
    const auto s = vecchia_scheme(plan, conditioning_sets(g, plan, 2), 2);
    EXPECT_THROW(are(s, CorrelationModel::powered_exponential(4.0, 1.3), g, 1), NumericError);
    EXPECT_NO_THROW(are(s, CorrelationModel::exponential(4.0), g, 1));
}

TEST(Are, SingularSensitivityIsReported) {
    const auto g = make_grid(3);
    WeightedScheme s = composite_scheme(truncated_subsets(g, 2, 1.0));
    for (auto& t : s.terms) t.weight = 0.0;
    EXPECT_THROW(are(s, CorrelationModel::exponential(2.0), g, 1), NumericError);
}
