#pragma once

// CSV readers and writers for sites (id,x,y), data matrices (one row per
// replicate, one column per site id) and orderings (rank,id).

#include "vecchia/error.hpp"
#include "vecchia/spatial.hpp"

#include <Eigen/Dense>

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace vecchia {

namespace detail {

inline std::vector<std::string_view> split_csv(std::string_view line) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (;;) {
        const std::size_t comma = line.find(',', start);
        std::string_view f = line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start);
        while (!f.empty() && (f.front() == ' ' || f.front() == '\t')) f.remove_prefix(1);
        while (!f.empty() && (f.back() == ' ' || f.back() == '\t' || f.back() == '\r')) f.remove_suffix(1);
        out.push_back(f);
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return out;
}

inline std::string where(const std::string& source, std::size_t line) {
    return source + ":" + std::to_string(line);
}

inline double parse_double(std::string_view f, const std::string& at) {
    if (f == "inf" || f == "Inf" || f == "+inf") return std::numeric_limits<double>::infinity();
    if (f == "-inf" || f == "-Inf") return -std::numeric_limits<double>::infinity();
    if (!f.empty() && f.front() == '+') f.remove_prefix(1);
    double v = 0.0;
    const auto [p, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
    if (f.empty() || ec != std::errc{} || p != f.data() + f.size())
        throw IoError(at + ": cannot parse number '" + std::string(f) + "'");
    return v;
}

inline long long parse_int(std::string_view f, const std::string& at) {
    long long v = 0;
    const auto [p, ec] = std::from_chars(f.data(), f.data() + f.size(), v);
    if (f.empty() || ec != std::errc{} || p != f.data() + f.size())
        throw IoError(at + ": cannot parse integer '" + std::string(f) + "'");
    return v;
}

// Shortest representation that round-trips.
inline std::string format_double(double v) {
    char buf[64];
    const auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, p);
}

inline bool blank(std::string_view s) {
    return s.find_first_not_of(" \t\r") == std::string_view::npos;
}

inline std::ifstream open_in(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    return in;
}

inline std::ofstream open_out(const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    return out;
}

inline void finish(std::ostream& out, const std::string& path) {
    out.flush();
    if (!out) throw IoError("write to '" + path + "' failed");
}

inline std::vector<std::string_view> expect_header(std::istream& in, const std::string& source,
                                                   std::string& buf) {
    if (!std::getline(in, buf)) throw IoError(source + ": empty file, expected a header line");
    if (buf.size() >= 3 && buf.compare(0, 3, "\xEF\xBB\xBF") == 0) buf.erase(0, 3);
    return split_csv(buf);
}

} // namespace detail

inline SiteSet read_sites(std::istream& in, const std::string& source = "sites") {
    std::string line;
    const auto head = detail::expect_header(in, source, line);
    if (head.size() != 3 || head[0] != "id" || head[1] != "x" || head[2] != "y")
        throw IoError(source + ":1: expected header 'id,x,y'");
    std::vector<Point> pts;
    std::vector<long long> ids;
    std::unordered_map<long long, std::size_t> seen;
    std::size_t no = 1;
    while (std::getline(in, line)) {
        ++no;
        if (detail::blank(line)) continue;
        const auto at = detail::where(source, no);
        const auto f = detail::split_csv(line);
        if (f.size() != 3) throw IoError(at + ": expected 3 fields, found " + std::to_string(f.size()));
        const long long id = detail::parse_int(f[0], at);
        if (!seen.emplace(id, no).second) throw IoError(at + ": duplicate site id " + std::to_string(id));
        const double x = detail::parse_double(f[1], at);
        const double y = detail::parse_double(f[2], at);
        if (!std::isfinite(x) || !std::isfinite(y)) throw IoError(at + ": coordinates must be finite");
        ids.push_back(id);
        pts.push_back({x, y});
    }
    if (pts.empty()) throw IoError(source + ": no sites");
    return SiteSet(std::move(pts), std::move(ids));
}

inline SiteSet read_sites(const std::string& path) {
    auto in = detail::open_in(path);
    return read_sites(in, path);
}

inline void write_sites(std::ostream& out, const SiteSet& sites) {
    out << "id,x,y\n";
    for (std::size_t i = 0; i < sites.size(); ++i)
        out << sites.ids()[i] << ',' << detail::format_double(sites[i].x) << ','
            << detail::format_double(sites[i].y) << '\n';
}

inline void write_sites(const std::string& path, const SiteSet& sites) {
    auto out = detail::open_out(path);
    write_sites(out, sites);
    detail::finish(out, path);
}

// Columns are matched to the sites by id and returned in site order.
inline Eigen::MatrixXd read_data(std::istream& in, const SiteSet& sites, const std::string& source = "data") {
    std::string line;
    const auto head = detail::expect_header(in, source, line);
    std::unordered_map<long long, std::size_t> site_pos;
    for (std::size_t i = 0; i < sites.size(); ++i) site_pos.emplace(sites.ids()[i], i);
    std::vector<std::size_t> col_to_site;
    std::vector<bool> covered(sites.size(), false);
    for (const auto& h : head) {
        const auto at = detail::where(source, 1);
        const long long id = detail::parse_int(h, at);
        const auto it = site_pos.find(id);
        if (it == site_pos.end()) throw IoError(at + ": column id " + std::to_string(id) + " is not a known site");
        if (covered[it->second]) throw IoError(at + ": duplicate column id " + std::to_string(id));
        covered[it->second] = true;
        col_to_site.push_back(it->second);
    }
    if (col_to_site.size() != sites.size())
        throw IoError(source + ":1: " + std::to_string(col_to_site.size()) + " columns for " +
                      std::to_string(sites.size()) + " sites");
    std::vector<double> vals;
    std::size_t rows = 0;
    std::size_t no = 1;
    while (std::getline(in, line)) {
        ++no;
        if (detail::blank(line)) continue;
        const auto at = detail::where(source, no);
        const auto f = detail::split_csv(line);
        if (f.size() != col_to_site.size())
            throw IoError(at + ": expected " + std::to_string(col_to_site.size()) + " fields, found " +
                          std::to_string(f.size()));
        const std::size_t base = vals.size();
        vals.resize(base + sites.size());
        for (std::size_t c = 0; c < f.size(); ++c) vals[base + col_to_site[c]] = detail::parse_double(f[c], at);
        ++rows;
    }
    Eigen::MatrixXd x(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(sites.size()));
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < sites.size(); ++c)
            x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = vals[r * sites.size() + c];
    return x;
}

inline Eigen::MatrixXd read_data(const std::string& path, const SiteSet& sites) {
    auto in = detail::open_in(path);
    return read_data(in, sites, path);
}

inline void write_data(std::ostream& out, const Eigen::MatrixXd& x, const SiteSet& sites) {
    require(static_cast<std::size_t>(x.cols()) == sites.size(), "data columns do not match the site count");
    for (std::size_t i = 0; i < sites.size(); ++i) out << (i ? "," : "") << sites.ids()[i];
    out << '\n';
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
        for (Eigen::Index c = 0; c < x.cols(); ++c) out << (c ? "," : "") << detail::format_double(x(r, c));
        out << '\n';
    }
}

inline void write_data(const std::string& path, const Eigen::MatrixXd& x, const SiteSet& sites) {
    auto out = detail::open_out(path);
    write_data(out, x, sites);
    detail::finish(out, path);
}

inline void write_ordering(std::ostream& out, const OrderingPlan& plan, const SiteSet& sites) {
    out << "rank,id\n";
    for (std::size_t r = 0; r < plan.perm.size(); ++r)
        out << r + 1 << ',' << sites.ids()[static_cast<std::size_t>(plan.perm[r])] << '\n';
}

inline void write_ordering(const std::string& path, const OrderingPlan& plan, const SiteSet& sites) {
    auto out = detail::open_out(path);
    write_ordering(out, plan, sites);
    detail::finish(out, path);
}

// Returns site positions in rank order.
inline std::vector<int> read_ordering(std::istream& in, const SiteSet& sites, const std::string& source = "ordering") {
    std::string line;
    const auto head = detail::expect_header(in, source, line);
    if (head.size() != 2 || head[0] != "rank" || head[1] != "id")
        throw IoError(source + ":1: expected header 'rank,id'");
    std::unordered_map<long long, int> site_pos;
    for (std::size_t i = 0; i < sites.size(); ++i) site_pos.emplace(sites.ids()[i], static_cast<int>(i));
    std::vector<int> perm(sites.size(), -1);
    std::size_t no = 1;
    std::size_t count = 0;
    while (std::getline(in, line)) {
        ++no;
        if (detail::blank(line)) continue;
        const auto at = detail::where(source, no);
        const auto f = detail::split_csv(line);
        if (f.size() != 2) throw IoError(at + ": expected 2 fields");
        const long long rank = detail::parse_int(f[0], at);
        const long long id = detail::parse_int(f[1], at);
        const auto it = site_pos.find(id);
        if (it == site_pos.end()) throw IoError(at + ": unknown site id " + std::to_string(id));
        if (rank < 1 || rank > static_cast<long long>(sites.size()) || perm[rank - 1] != -1)
            throw IoError(at + ": rank " + std::to_string(rank) + " is out of range or repeated");
        perm[rank - 1] = it->second;
        ++count;
    }
    if (count != sites.size()) throw IoError(source + ": ordering covers " + std::to_string(count) + " of " +
                                             std::to_string(sites.size()) + " sites");
    std::vector<bool> used(sites.size(), false);
    for (int p : perm) {
        if (used[static_cast<std::size_t>(p)]) throw IoError(source + ": a site appears twice");
        used[static_cast<std::size_t>(p)] = true;
    }
    return perm;
}

// Generic CSV table with a header row.
struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
};

inline void write_table(std::ostream& out, const CsvTable& t) {
    for (std::size_t i = 0; i < t.header.size(); ++i) out << (i ? "," : "") << t.header[i];
    out << '\n';
    for (const auto& r : t.rows) {
        for (std::size_t i = 0; i < r.size(); ++i) out << (i ? "," : "") << r[i];
        out << '\n';
    }
}

inline void write_table(const std::string& path, const CsvTable& t) {
    auto out = detail::open_out(path);
    write_table(out, t);
    detail::finish(out, path);
}

} // namespace vecchia
