#pragma once

// Site geometry, variable orderings, nearest-neighbour conditioning sets and
// distance-truncated subset enumeration.

#include "vecchia/error.hpp"
#include "vecchia/random.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace vecchia {

struct Point {
    double x = 0.0;
    double y = 0.0;
};

// Geometric anisotropy: rotation angle theta in (-pi/2, pi/2) and ratio a > 0.
// The induced metric is sqrt(h' A h) with A = R(theta) diag(1, a) R(theta)'.
struct AnisotropyParams {
    double theta = 0.0;
    double a = 1.0;

    void validate() const {
        require(std::isfinite(theta) && theta > -M_PI / 2 && theta < M_PI / 2,
                "anisotropy angle must lie in (-pi/2, pi/2)");
        require(std::isfinite(a) && a > 0.0, "anisotropy ratio must be positive");
    }
};

class Metric {
public:
    Metric() = default;
    explicit Metric(const AnisotropyParams& p) {
        p.validate();
        const double c = std::cos(p.theta), s = std::sin(p.theta);
        a11_ = c * c + p.a * s * s;
        a22_ = s * s + p.a * c * c;
        a12_ = c * s * (1.0 - p.a);
    }

    double operator()(double hx, double hy) const {
        const double q = a11_ * hx * hx + 2.0 * a12_ * hx * hy + a22_ * hy * hy;
        return std::sqrt(std::max(q, 0.0));
    }

    double operator()(const Point& p, const Point& q) const { return (*this)(p.x - q.x, p.y - q.y); }

    bool is_euclidean() const { return a11_ == 1.0 && a22_ == 1.0 && a12_ == 0.0; }

private:
    double a11_ = 1.0;
    double a22_ = 1.0;
    double a12_ = 0.0;
};

class SiteSet {
public:
    SiteSet() = default;

    SiteSet(std::vector<Point> coords, std::vector<long long> ids = {})
        : coords_(std::move(coords)), ids_(std::move(ids)) {
        require(!coords_.empty(), "a site set needs at least one site");
        if (ids_.empty()) {
            ids_.resize(coords_.size());
            std::iota(ids_.begin(), ids_.end(), 1LL);
        }
        require(ids_.size() == coords_.size(), "site ids and coordinates differ in length");
        for (const auto& p : coords_) {
            require(std::isfinite(p.x) && std::isfinite(p.y), "site coordinates must be finite");
        }
        std::vector<std::size_t> order(coords_.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
            return std::pair(coords_[i].x, coords_[i].y) < std::pair(coords_[j].x, coords_[j].y);
        });
        for (std::size_t k = 1; k < order.size(); ++k) {
            const auto& p = coords_[order[k - 1]];
            const auto& q = coords_[order[k]];
            if (p.x == q.x && p.y == q.y) {
                throw ConfigError("sites " + std::to_string(ids_[order[k - 1]]) + " and " +
                                  std::to_string(ids_[order[k]]) + " coincide");
            }
        }
    }

    std::size_t size() const { return coords_.size(); }
    const Point& operator[](std::size_t i) const { return coords_[i]; }
    const std::vector<Point>& coords() const { return coords_; }
    const std::vector<long long>& ids() const { return ids_; }

    double distance(std::size_t i, std::size_t j, const Metric& metric = {}) const {
        return metric(coords_[i], coords_[j]);
    }

    SiteSet subset(std::span<const int> idx) const {
        std::vector<Point> c;
        std::vector<long long> id;
        for (int i : idx) {
            c.push_back(coords_.at(static_cast<std::size_t>(i)));
            id.push_back(ids_.at(static_cast<std::size_t>(i)));
        }
        return SiteSet(std::move(c), std::move(id));
    }

private:
    std::vector<Point> coords_;
    std::vector<long long> ids_;
};

// Regular grid {1..side}^2; index (y-1)*side + (x-1).
inline SiteSet make_grid(int side) {
    require(side >= 1, "grid side must be at least 1");
    std::vector<Point> pts;
    pts.reserve(static_cast<std::size_t>(side) * side);
    for (int y = 1; y <= side; ++y)
        for (int x = 1; x <= side; ++x) pts.push_back({double(x), double(y)});
    return SiteSet(std::move(pts));
}

enum class OrderingKind { coordinate, random, middle_out, max_min };

inline std::string_view to_string(OrderingKind k) {
    switch (k) {
    case OrderingKind::coordinate: return "coordinate";
    case OrderingKind::random: return "random";
    case OrderingKind::middle_out: return "middle_out";
    case OrderingKind::max_min: return "max_min";
    }
    return "?";
}

inline OrderingKind parse_ordering(std::string_view s) {
    if (s == "coordinate" || s == "p1") return OrderingKind::coordinate;
    if (s == "random" || s == "p2") return OrderingKind::random;
    if (s == "middle_out" || s == "middle-out" || s == "p3") return OrderingKind::middle_out;
    if (s == "max_min" || s == "maxmin" || s == "max-min" || s == "p4") return OrderingKind::max_min;
    throw ConfigError("unknown ordering '" + std::string(s) + "'");
}

// How max-min resolves several sites at the same maximal distance.
enum class TieBreak { random, smallest_index };

inline TieBreak parse_tie_break(std::string_view s) {
    if (s == "random") return TieBreak::random;
    if (s == "smallest_index" || s == "first") return TieBreak::smallest_index;
    throw ConfigError("unknown tie rule '" + std::string(s) + "'");
}

inline std::string_view to_string(TieBreak t) { return t == TieBreak::random ? "random" : "smallest_index"; }

struct OrderingPlan {
    OrderingKind kind = OrderingKind::coordinate;
    std::uint64_t seed = 0;
    TieBreak ties = TieBreak::random;
    std::vector<int> perm;  // perm[j] = site visited at position j
    std::vector<int> rank;  // inverse permutation

    std::size_t size() const { return perm.size(); }
    // H(j;p): the sites visited before position j.
    std::span<const int> history(std::size_t j) const { return {perm.data(), j}; }
};

namespace detail {

inline bool nearly_equal(double a, double b) {
    return std::abs(a - b) <= 1e-9 * std::max({1.0, std::abs(a), std::abs(b)});
}

inline std::size_t uniform_index(Rng& rng, std::size_t n) {
    const auto k = static_cast<std::size_t>(uniform_open(rng) * static_cast<double>(n));
    return std::min(k, n - 1);
}

// Site minimising the mean distance to all sites; ties by smallest index.
inline int centre_site(const SiteSet& sites, const Metric& metric) {
    const std::size_t n = sites.size();
    int best = 0;
    double best_sum = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < n; ++j) s += sites.distance(i, j, metric);
        if (i == 0 || (s < best_sum && !nearly_equal(s, best_sum))) {
            best_sum = s;
            best = static_cast<int>(i);
        }
    }
    return best;
}

} // namespace detail

inline OrderingPlan build_ordering(const SiteSet& sites, OrderingKind kind, std::uint64_t seed,
                                   const Metric& metric = {}, TieBreak ties = TieBreak::random) {
    const std::size_t n = sites.size();
    require(n >= 1, "cannot order an empty site set");
    OrderingPlan plan;
    plan.kind = kind;
    plan.seed = seed;
    plan.ties = ties;
    plan.perm.resize(n);
    std::iota(plan.perm.begin(), plan.perm.end(), 0);

    switch (kind) {
    case OrderingKind::coordinate:
        std::stable_sort(plan.perm.begin(), plan.perm.end(), [&](int i, int j) {
            return std::pair(sites[i].y, sites[i].x) < std::pair(sites[j].y, sites[j].x);
        });
        break;
    case OrderingKind::random: {
        Rng rng = make_rng(seed, 0x5eed);
        for (std::size_t i = n; i > 1; --i) {
            std::swap(plan.perm[i - 1], plan.perm[detail::uniform_index(rng, i)]);
        }
        break;
    }
    case OrderingKind::middle_out: {
        const int c = detail::centre_site(sites, metric);
        std::vector<double> dist(n);
        for (std::size_t i = 0; i < n; ++i) dist[i] = sites.distance(c, i, metric);
        std::stable_sort(plan.perm.begin(), plan.perm.end(), [&](int i, int j) {
            if (detail::nearly_equal(dist[i], dist[j])) return false;
            return dist[i] < dist[j];
        });
        break;
    }
    case OrderingKind::max_min: {
        Rng rng = make_rng(seed, 0x3a3a);
        const int c = detail::centre_site(sites, metric);
        std::vector<double> mind(n, std::numeric_limits<double>::infinity());
        std::vector<char> used(n, 0);
        std::vector<int> cand;
        int next = c;
        for (std::size_t k = 0; k < n; ++k) {
            plan.perm[k] = next;
            used[next] = 1;
            double best = -1.0;
            cand.clear();
            for (std::size_t i = 0; i < n; ++i) {
                if (used[i]) continue;
                mind[i] = std::min(mind[i], sites.distance(next, i, metric));
                if (best >= 0.0 && detail::nearly_equal(mind[i], best)) {
                    cand.push_back(static_cast<int>(i));
                } else if (mind[i] > best) {
                    best = mind[i];
                    cand.assign(1, static_cast<int>(i));
                }
            }
            if (k + 1 < n) {
                // Candidates collected against a running maximum; keep only true ties.
                std::erase_if(cand, [&](int i) { return !detail::nearly_equal(mind[i], best); });
                next = ties == TieBreak::random ? cand[detail::uniform_index(rng, cand.size())]
                                                : *std::min_element(cand.begin(), cand.end());
            }
        }
        break;
    }
    }
    plan.rank.assign(n, 0);
    for (std::size_t j = 0; j < n; ++j) plan.rank[plan.perm[j]] = static_cast<int>(j);
    return plan;
}

// S_{d-1}(j;p) for every position j: the min(j+1,d)-1 nearest sites among the
// history of position j, sorted by (distance, position in the ordering). The
// sets are prefixes of one sorted history list, hence nested in d.
using ConditioningSets = std::vector<std::vector<int>>;

inline ConditioningSets conditioning_sets(const SiteSet& sites, const OrderingPlan& plan, int d,
                                          const Metric& metric = {}) {
    const std::size_t n = sites.size();
    require(plan.size() == n, "ordering plan was built for a different site set");
    require(d >= 2 && static_cast<std::size_t>(d) <= std::max<std::size_t>(n, 2),
            "conditioning dimension d must satisfy 2 <= d <= D");
    ConditioningSets out(n);
    std::vector<std::pair<double, int>> cand;
    for (std::size_t j = 1; j < n; ++j) {
        const int site = plan.perm[j];
        const std::size_t keep = std::min<std::size_t>(j + 1, d) - 1;
        cand.clear();
        for (int prev : plan.history(j)) cand.emplace_back(sites.distance(site, prev, metric), prev);
        auto less = [&](const std::pair<double, int>& a, const std::pair<double, int>& b) {
            if (!detail::nearly_equal(a.first, b.first)) return a.first < b.first;
            return plan.rank[a.second] < plan.rank[b.second];
        };
        std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(keep), cand.end(), less);
        out[j].reserve(keep);
        for (std::size_t k = 0; k < keep; ++k) out[j].push_back(cand[k].second);
    }
    return out;
}

// The k nearest sites to `target` among `pool`; ties by smaller site index.
inline std::vector<int> nearest_among(const SiteSet& sites, int target, std::span<const int> pool,
                                      std::size_t k, const Metric& metric = {}) {
    std::vector<std::pair<double, int>> cand;
    for (int i : pool) {
        if (i != target) cand.emplace_back(sites.distance(target, i, metric), i);
    }
    require(cand.size() >= k, "not enough candidate sites for the requested neighbours");
    std::partial_sort(cand.begin(), cand.begin() + static_cast<std::ptrdiff_t>(k), cand.end(),
                      [](const auto& a, const auto& b) {
                          if (!detail::nearly_equal(a.first, b.first)) return a.first < b.first;
                          return a.second < b.second;
                      });
    std::vector<int> out;
    for (std::size_t i = 0; i < k; ++i) out.push_back(cand[i].second);
    return out;
}

struct SubsetPlan {
    int d = 0;
    double delta = 0.0;
    std::vector<std::vector<int>> subsets;  // sorted indices, lexicographic order

    std::size_t size() const { return subsets.size(); }
    bool empty() const { return subsets.empty(); }
};

// All d-subsets whose largest pairwise distance is at most delta, found as
// d-cliques of the delta-neighbour graph. Output is lexicographically sorted.
inline SubsetPlan truncated_subsets(const SiteSet& sites, int d, double delta, const Metric& metric = {}) {
    const std::size_t n = sites.size();
    require(d >= 2 && static_cast<std::size_t>(d) <= n, "subset dimension d must satisfy 2 <= d <= D");
    require(delta > 0.0, "cutoff distance must be positive");
    const double cut = delta * (1.0 + 1e-12) + 1e-12;

    std::vector<std::vector<int>> up(n);  // neighbours with larger index
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            if (sites.distance(i, j, metric) <= cut) up[i].push_back(static_cast<int>(j));

    SubsetPlan plan{d, delta, {}};
    std::vector<int> clique;
    clique.reserve(d);

    auto extend = [&](auto&& self, const std::vector<int>& cand) -> void {
        if (static_cast<int>(clique.size()) == d) {
            plan.subsets.push_back(clique);
            return;
        }
        const std::size_t need = static_cast<std::size_t>(d) - clique.size();
        for (std::size_t k = 0; k < cand.size() && cand.size() - k >= need; ++k) {
            const int v = cand[k];
            std::vector<int> next;
            std::set_intersection(cand.begin() + static_cast<std::ptrdiff_t>(k) + 1, cand.end(),
                                  up[v].begin(), up[v].end(), std::back_inserter(next));
            clique.push_back(v);
            self(self, next);
            clique.pop_back();
        }
    };
    for (std::size_t i = 0; i < n; ++i) {
        clique.assign(1, static_cast<int>(i));
        extend(extend, up[i]);
    }
    return plan;
}

} // namespace vecchia
