#pragma once

// Streaming enumeration of the set partitions of {0, ..., d-1} in
// restricted-growth-string order.

#include "vecchia/error.hpp"

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

namespace vecchia {

inline constexpr int kMaxPartitionSize = 12;

inline std::uint64_t bell_number(int d) {
    require(d >= 0 && d <= 25, "Bell number argument out of range");
    // Bell triangle.
    std::vector<std::uint64_t> row{1};
    for (int i = 0; i < d; ++i) {
        std::vector<std::uint64_t> next{row.back()};
        for (std::uint64_t v : row) next.push_back(next.back() + v);
        row = std::move(next);
    }
    return row.front();
}

class SetPartitionIter {
public:
    explicit SetPartitionIter(int d) : d_(d) {
        require(d >= 1, "set partitions need a non-empty ground set");
        if (d > kMaxPartitionSize) {
            throw ConfigError("set partition capacity exceeded: d = " + std::to_string(d) + " exceeds the cap of " +
                              std::to_string(kMaxPartitionSize));
        }
        a_.assign(d, 0);
        m_.assign(d, 0);
        rebuild();
    }

    int size() const { return d_; }
    bool done() const { return done_; }

    // a[i] is the block label of element i; a[0] = 0 and a[i] <= 1 + max(a[0..i-1]).
    const std::vector<int>& rgs() const { return a_; }
    int num_blocks() const { return static_cast<int>(masks_.size()); }
    // Bit i of a mask marks element i.
    const std::vector<std::uint32_t>& blocks() const { return masks_; }

    void next() {
        int i = d_ - 1;
        while (i > 0 && a_[i] > m_[i - 1]) --i;
        if (i == 0) {
            done_ = true;
            return;
        }
        ++a_[i];
        m_[i] = std::max(m_[i - 1], a_[i]);
        for (int j = i + 1; j < d_; ++j) a_[j] = 0, m_[j] = m_[i];
        rebuild();
    }

private:
    void rebuild() {
        masks_.assign(m_[d_ - 1] + 1, 0u);
        for (int i = 0; i < d_; ++i) masks_[a_[i]] |= 1u << i;
    }

    int d_;
    bool done_ = false;
    std::vector<int> a_;
    std::vector<int> m_;  // running maximum of a
    std::vector<std::uint32_t> masks_;
};

inline SetPartitionIter set_partitions(int d) { return SetPartitionIter(d); }

} // namespace vecchia
