#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "vecchia/spatial.hpp"

using namespace vecchia;

namespace {

double euclid(const Point& p, const Point& q) { return std::hypot(p.x - q.x, p.y - q.y); }

// All d-subsets by brute force, kept when the largest pairwise distance is <= delta.
std::vector<std::vector<int>> brute_subsets(const SiteSet& s, int d, double delta) {
    const int n = static_cast<int>(s.size());
    std::vector<std::vector<int>> out;
    std::vector<int> cur;
    auto rec = [&](auto&& self, int start) -> void {
        if (static_cast<int>(cur.size()) == d) {
            double mx = 0.0;
            for (std::size_t i = 0; i < cur.size(); ++i)
                for (std::size_t j = i + 1; j < cur.size(); ++j) mx = std::max(mx, euclid(s[cur[i]], s[cur[j]]));
            if (mx <= delta + 1e-9) out.push_back(cur);
            return;
        }
        for (int k = start; k < n; ++k) {
            cur.push_back(k);
            self(self, k + 1);
            cur.pop_back();
        }
    };
    rec(rec, 0);
    return out;
}

bool is_permutation_of_range(const std::vector<int>& p) {
    std::vector<int> q = p;
    std::sort(q.begin(), q.end());
    for (std::size_t i = 0; i < q.size(); ++i)
        if (q[i] != static_cast<int>(i)) return false;
    return true;
}

} // namespace

TEST(Grid, SizesAndIndexing) {
    EXPECT_EQ(make_grid(10).size(), 100u);
    EXPECT_EQ(make_grid(32).size(), 1024u);
    const auto one = make_grid(1);
    ASSERT_EQ(one.size(), 1u);
    EXPECT_EQ(one[0].x, 1.0);
    EXPECT_EQ(one[0].y, 1.0);
    const auto g = make_grid(4);
    EXPECT_EQ(g[5].x, 2.0);
    EXPECT_EQ(g[5].y, 2.0);
    EXPECT_EQ(g[3].x, 4.0);
    EXPECT_EQ(g[3].y, 1.0);
    EXPECT_THROW(make_grid(0), ConfigError);
}

TEST(SiteSet, RejectsBadInput) {
    EXPECT_THROW(SiteSet(std::vector<Point>{}), ConfigError);
    EXPECT_THROW(SiteSet({{0, 0}, {1, 2}, {0, 0}}), ConfigError);
    EXPECT_THROW(SiteSet({{0, NAN}}), ConfigError);
    EXPECT_THROW(SiteSet({{0, 0}, {1, 1}}, {7}), ConfigError);
    const SiteSet s({{0, 0}, {3, 4}});
    EXPECT_EQ(s.ids()[1], 2);
    EXPECT_DOUBLE_EQ(s.distance(0, 1), 5.0);
}

TEST(Metric, IsotropicEqualsEuclidean) {
    const Metric iso(AnisotropyParams{0.0, 1.0});
    EXPECT_TRUE(iso.is_euclidean());
    for (double hx : {-3.0, 0.5, 2.0})
        for (double hy : {-1.0, 0.0, 7.5}) EXPECT_NEAR(iso(hx, hy), std::hypot(hx, hy), 1e-15);
}

TEST(Metric, MatchesExplicitMatrixProduct) {
    for (double th : {-1.2, -0.3, 0.0, 0.7, 1.5}) {
        for (double a : {0.25, 1.0, 3.0}) {
            const Metric m(AnisotropyParams{th, a});
            const double c = std::cos(th), s = std::sin(th);
            // A = R diag(1, a) R' with R = [[c, -s], [s, c]].
            const double r[2][2] = {{c, -s}, {s, c}};
            double A[2][2] = {};
            for (int i = 0; i < 2; ++i)
                for (int j = 0; j < 2; ++j)
                    for (int k = 0; k < 2; ++k) A[i][j] += r[i][k] * (k == 0 ? 1.0 : a) * r[j][k];
            const double hx = 1.3, hy = -0.4;
            const double q = A[0][0] * hx * hx + (A[0][1] + A[1][0]) * hx * hy + A[1][1] * hy * hy;
            EXPECT_NEAR(m(hx, hy), std::sqrt(q), 1e-13);
        }
    }
    EXPECT_NEAR(Metric(AnisotropyParams{0.0, 4.0})(0.0, 1.0), 2.0, 1e-15);
    EXPECT_THROW(Metric(AnisotropyParams{M_PI / 2, 1.0}), ConfigError);
    EXPECT_THROW(Metric(AnisotropyParams{0.0, 0.0}), ConfigError);
}

TEST(Ordering, ParseNames) {
    EXPECT_EQ(parse_ordering("p1"), OrderingKind::coordinate);
    EXPECT_EQ(parse_ordering("random"), OrderingKind::random);
    EXPECT_EQ(parse_ordering("middle-out"), OrderingKind::middle_out);
    EXPECT_EQ(parse_ordering("max_min"), OrderingKind::max_min);
    EXPECT_THROW(parse_ordering("zigzag"), ConfigError);
    EXPECT_EQ(parse_tie_break("smallest_index"), TieBreak::smallest_index);
}

TEST(Ordering, CoordinateIsRowSweep) {
    const auto g = make_grid(6);
    const auto p = build_ordering(g, OrderingKind::coordinate, 0);
    for (std::size_t j = 0; j < g.size(); ++j) EXPECT_EQ(p.perm[j], static_cast<int>(j));
    // A scrambled site list sorts by y first, then x.
    const SiteSet s({{2, 1}, {1, 2}, {1, 1}});
    const auto q = build_ordering(s, OrderingKind::coordinate, 0);
    EXPECT_EQ(q.perm, (std::vector<int>{2, 0, 1}));
}

TEST(Ordering, AllKindsArePermutationsAndReproducible) {
    const auto g = make_grid(7);
    for (auto k : {OrderingKind::coordinate, OrderingKind::random, OrderingKind::middle_out, OrderingKind::max_min}) {
        const auto a = build_ordering(g, k, 42);
        const auto b = build_ordering(g, k, 42);
        EXPECT_TRUE(is_permutation_of_range(a.perm));
        EXPECT_EQ(a.perm, b.perm);
        for (std::size_t j = 0; j < a.size(); ++j) EXPECT_EQ(a.rank[a.perm[j]], static_cast<int>(j));
    }
    EXPECT_NE(build_ordering(g, OrderingKind::random, 1).perm, build_ordering(g, OrderingKind::random, 2).perm);
}

TEST(Ordering, MiddleOutStartsAtCentreAndSortsByDistance) {
    const auto g = make_grid(10);
    const auto p = build_ordering(g, OrderingKind::middle_out, 0);
    // Mean distance is minimal at the four central sites; the smallest index is (5,5).
    EXPECT_EQ(p.perm[0], 44);
    for (std::size_t j = 1; j < p.size(); ++j)
        EXPECT_LE(euclid(g[44], g[p.perm[j - 1]]), euclid(g[44], g[p.perm[j]]) + 1e-12);
    const auto odd = make_grid(5);
    EXPECT_EQ(build_ordering(odd, OrderingKind::middle_out, 0).perm[0], 12);
}

TEST(Ordering, MaxMinGreedyProperty) {
    const auto g = make_grid(8);
    for (auto ties : {TieBreak::random, TieBreak::smallest_index}) {
        const auto p = build_ordering(g, OrderingKind::max_min, 3, {}, ties);
        EXPECT_EQ(p.perm[0], build_ordering(g, OrderingKind::middle_out, 0).perm[0]);
        for (std::size_t j = 1; j < p.size(); ++j) {
            auto mind = [&](int site) {
                double m = INFINITY;
                for (std::size_t k = 0; k < j; ++k) m = std::min(m, euclid(g[site], g[p.perm[k]]));
                return m;
            };
            const double chosen = mind(p.perm[j]);
            for (std::size_t k = j; k < p.size(); ++k) EXPECT_LE(mind(p.perm[k]), chosen + 1e-12);
            if (ties == TieBreak::smallest_index) {
                for (std::size_t k = j + 1; k < p.size(); ++k)
                    if (std::abs(mind(p.perm[k]) - chosen) < 1e-12) {
                        EXPECT_GT(p.perm[k], p.perm[j]);
                    }
            }
        }
    }
    std::set<std::vector<int>> seen;
    for (int s = 0; s < 5; ++s) seen.insert(build_ordering(g, OrderingKind::max_min, s).perm);
    EXPECT_GT(seen.size(), 1u);
}

TEST(ConditioningSets, SizesNestingAndHistory) {
    const auto g = make_grid(6);
    for (auto k : {OrderingKind::coordinate, OrderingKind::random, OrderingKind::middle_out, OrderingKind::max_min}) {
        const auto p = build_ordering(g, k, 9);
        ConditioningSets prev;
        for (int d = 2; d <= static_cast<int>(g.size()); ++d) {
            const auto cs = conditioning_sets(g, p, d);
            ASSERT_EQ(cs.size(), g.size());
            EXPECT_TRUE(cs[0].empty());
            EXPECT_EQ(cs[1], std::vector<int>{p.perm[0]});
            for (std::size_t j = 0; j < g.size(); ++j) {
                EXPECT_EQ(cs[j].size(), std::min<std::size_t>(j + 1, d) - 1);
                for (int s : cs[j]) EXPECT_LT(p.rank[s], static_cast<int>(j));
                if (!prev.empty()) {
                    ASSERT_LE(prev[j].size(), cs[j].size());
                    EXPECT_TRUE(std::equal(prev[j].begin(), prev[j].end(), cs[j].begin()));
                }
            }
            if (d == static_cast<int>(g.size())) {
                for (std::size_t j = 0; j < g.size(); ++j) {
                    std::vector<int> h(p.perm.begin(), p.perm.begin() + static_cast<long>(j));
                    std::vector<int> c = cs[j];
                    std::sort(h.begin(), h.end());
                    std::sort(c.begin(), c.end());
                    EXPECT_EQ(c, h);
                }
            }
            prev = cs;
        }
    }
}

TEST(ConditioningSets, AreNearestAmongHistory) {
    const auto g = make_grid(7);
    const auto p = build_ordering(g, OrderingKind::random, 5);
    const int d = 5;
    const auto cs = conditioning_sets(g, p, d);
    for (std::size_t j = 1; j < g.size(); ++j) {
        std::vector<double> hd;
        for (std::size_t k = 0; k < j; ++k) hd.push_back(euclid(g[p.perm[j]], g[p.perm[k]]));
        std::sort(hd.begin(), hd.end());
        std::vector<double> got;
        for (int s : cs[j]) got.push_back(euclid(g[p.perm[j]], g[s]));
        std::sort(got.begin(), got.end());
        for (std::size_t k = 0; k < got.size(); ++k) EXPECT_NEAR(got[k], hd[k], 1e-12);
    }
    EXPECT_THROW(conditioning_sets(g, p, 1), ConfigError);
    EXPECT_THROW(conditioning_sets(g, p, 50), ConfigError);
}

TEST(ConditioningSets, TiesFavourEarlierSites) {
    const auto g = make_grid(3);
    const auto p = build_ordering(g, OrderingKind::coordinate, 0);
    // Site (2,2) has two past neighbours at distance 1: (2,1) and (1,2).
    const auto cs = conditioning_sets(g, p, 2);
    EXPECT_EQ(cs[4], std::vector<int>{1});
}

TEST(NearestAmong, TiesBySmallerIndex) {
    const auto g = make_grid(3);
    const std::vector<int> pool{7, 5, 3, 1, 0};
    EXPECT_EQ(nearest_among(g, 4, pool, 4), (std::vector<int>{1, 3, 5, 7}));
    EXPECT_EQ(nearest_among(g, 4, pool, 2), (std::vector<int>{1, 3}));
    EXPECT_THROW(nearest_among(g, 4, pool, 6), ConfigError);
}

TEST(TruncatedSubsets, MatchBruteForce) {
    const auto g = make_grid(5);
    for (int d = 2; d <= 4; ++d) {
        for (double delta : {1.0, std::sqrt(2.0), 2.0, std::sqrt(5.0), std::sqrt(8.0)}) {
            const auto plan = truncated_subsets(g, d, delta);
            EXPECT_EQ(plan.subsets, brute_subsets(g, d, delta)) << "d=" << d << " delta=" << delta;
        }
    }
}

TEST(TruncatedSubsets, TableOneCounts) {
    const auto g = make_grid(10);
    const double deltas[] = {1.0, std::sqrt(2.0), 2.0, std::sqrt(5.0), std::sqrt(8.0)};
    const std::size_t expect[4][5] = {
        {180, 342, 502, 790, 918}, {0, 324, 772, 2436, 3332}, {0, 81, 433, 3809, 6433}, {0, 0, 64, 3232, 7392}};
    for (int d = 2; d <= 5; ++d)
        for (int k = 0; k < 5; ++k) EXPECT_EQ(truncated_subsets(g, d, deltas[k]).size(), expect[d - 2][k]);
}

TEST(TruncatedSubsets, ContractChecks) {
    const auto g = make_grid(3);
    EXPECT_THROW(truncated_subsets(g, 1, 1.0), ConfigError);
    EXPECT_THROW(truncated_subsets(g, 2, 0.0), ConfigError);
    EXPECT_TRUE(truncated_subsets(g, 3, 1.0).empty());
}
