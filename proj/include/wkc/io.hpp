#pragma once

#include <wkc/clustering.hpp>
#include <wkc/error.hpp>
#include <wkc/kpca.hpp>
#include <wkc/log.hpp>
#include <wkc/ot/distribution.hpp>
#include <wkc/pipelines.hpp>
#include <wkc/types.hpp>
#include <wkc/validity.hpp>

#include <json.hpp>

#include <Eigen/Dense>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

namespace wkc::io {

namespace detail {

inline std::string format_double(double v) {
    char buf[32];
    const int n = std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf, static_cast<std::size_t>(n));
}

inline std::vector<std::string> split(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::string field;
    std::istringstream in(line);
    while (std::getline(in, field, sep)) {
        while (!field.empty() && (field.back() == '\r' || field.back() == ' ')) {
            field.pop_back();
        }
        std::size_t start = 0;
        while (start < field.size() && field[start] == ' ') {
            ++start;
        }
        out.push_back(field.substr(start));
    }
    if (!line.empty() && line.back() == sep) {
        out.emplace_back();
    }
    return out;
}

inline double parse_double(const std::string& s, const std::string& where) {
    const char* begin = s.data();
    const char* end = s.data() + s.size();
    if (begin != end && *begin == '+') {
        ++begin;
    }
    double v = 0.0;
    const auto [ptr, ec] = std::from_chars(begin, end, v);
    if (begin == end || ptr != end || (ec != std::errc{} && ec != std::errc::result_out_of_range)) {
        throw DataError(where + ": cannot parse number '" + s + "'");
    }
    if (ec == std::errc::result_out_of_range) {
        // subnormal or overflowing literal: strtod rounds to the nearest value
        v = std::strtod(std::string(begin, end).c_str(), nullptr);
    }
    return v;
}

inline std::ifstream open_in(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot open " + path);
    }
    return in;
}

inline std::ofstream open_out(const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw DataError("cannot write " + path);
    }
    return out;
}

inline bool blank(const std::string& line) { return line.find_first_not_of(" \t\r") == std::string::npos; }

}  // namespace detail

/// Dense CSV, one row per line, 17 significant digits.
inline void save_matrix_csv(const Eigen::MatrixXd& m, const std::string& path) {
    auto out = detail::open_out(path);
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            out << (j ? "," : "") << detail::format_double(m(i, j));
        }
        out << '\n';
    }
}

inline Eigen::MatrixXd load_matrix_csv(const std::string& path) {
    auto in = detail::open_in(path);
    std::vector<std::vector<double>> rows;
    std::string line;
    std::size_t number = 0;
    while (std::getline(in, line)) {
        ++number;
        if (detail::blank(line)) {
            continue;
        }
        std::vector<double> row;
        for (const auto& f : detail::split(line, ',')) {
            row.push_back(detail::parse_double(f, path + ":" + std::to_string(number)));
        }
        if (!rows.empty() && row.size() != rows.front().size()) {
            throw DataError(path + ":" + std::to_string(number) + ": ragged matrix row");
        }
        rows.push_back(std::move(row));
    }
    Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()),
                      rows.empty() ? 0 : static_cast<Eigen::Index>(rows.front().size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (std::size_t j = 0; j < rows[i].size(); ++j) {
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
        }
    }
    return m;
}

/// 8-byte little-endian S, then S*S little-endian doubles, row-major.
inline void save_matrix_binary(const Eigen::MatrixXd& m, const std::string& path) {
    if (m.rows() != m.cols()) {
        throw DataError("binary matrix layout needs a square matrix");
    }
    static_assert(sizeof(double) == 8);
    auto out = detail::open_out(path);
    const auto s = static_cast<std::uint64_t>(m.rows());
    unsigned char header[8];
    for (int b = 0; b < 8; ++b) {
        header[b] = static_cast<unsigned char>((s >> (8 * b)) & 0xffu);
    }
    out.write(reinterpret_cast<const char*>(header), 8);
    const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = m;
    for (Eigen::Index k = 0; k < rm.size(); ++k) {
        std::uint64_t bits = 0;
        std::memcpy(&bits, rm.data() + k, 8);
        unsigned char bytes[8];
        for (int b = 0; b < 8; ++b) {
            bytes[b] = static_cast<unsigned char>((bits >> (8 * b)) & 0xffu);
        }
        out.write(reinterpret_cast<const char*>(bytes), 8);
    }
}

inline Eigen::MatrixXd load_matrix_binary(const std::string& path) {
    auto in = detail::open_in(path);
    unsigned char header[8];
    if (!in.read(reinterpret_cast<char*>(header), 8)) {
        throw DataError(path + ": truncated header");
    }
    std::uint64_t s = 0;
    for (int b = 0; b < 8; ++b) {
        s |= static_cast<std::uint64_t>(header[b]) << (8 * b);
    }
    in.seekg(0, std::ios::end);
    const auto size = static_cast<std::uint64_t>(in.tellg());
    if (s > (1u << 20) || size != 8 + s * s * 8) {
        throw DataError(path + ": size does not match the header");
    }
    in.seekg(8);
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm(static_cast<Eigen::Index>(s),
                                                                               static_cast<Eigen::Index>(s));
    for (Eigen::Index k = 0; k < rm.size(); ++k) {
        unsigned char bytes[8];
        in.read(reinterpret_cast<char*>(bytes), 8);
        std::uint64_t bits = 0;
        for (int b = 0; b < 8; ++b) {
            bits |= static_cast<std::uint64_t>(bytes[b]) << (8 * b);
        }
        std::memcpy(rm.data() + k, &bits, 8);
    }
    return rm;
}

/// Binary when the path ends in ".bin", CSV otherwise.
inline void save_matrix(const Eigen::MatrixXd& m, const std::string& path) {
    if (path.size() >= 4 && path.compare(path.size() - 4, 4, ".bin") == 0) {
        save_matrix_binary(m, path);
    } else {
        save_matrix_csv(m, path);
    }
}

inline Eigen::MatrixXd load_matrix(const std::string& path) {
    if (path.size() >= 4 && path.compare(path.size() - 4, 4, ".bin") == 0) {
        return load_matrix_binary(path);
    }
    return load_matrix_csv(path);
}

/// Items as rows: "item_id,pc1,..." then "eigenvalue,l1,..." then one row
/// per item.
inline void save_feature_map_csv(const kpca::FeatureMap& map, const std::string& path) {
    auto out = detail::open_out(path);
    out << "item_id";
    for (Eigen::Index u = 0; u < map.components(); ++u) {
        out << ",pc" << (u + 1);
    }
    out << "\neigenvalue";
    for (Eigen::Index u = 0; u < map.components(); ++u) {
        out << ',' << detail::format_double(map.eigenvalues[u]);
    }
    out << '\n';
    for (Eigen::Index j = 0; j < map.items(); ++j) {
        out << j;
        for (Eigen::Index u = 0; u < map.components(); ++u) {
            out << ',' << detail::format_double(map.coords(u, j));
        }
        out << '\n';
    }
}

inline kpca::FeatureMap load_feature_map_csv(const std::string& path) {
    auto in = detail::open_in(path);
    std::string line;
    if (!std::getline(in, line) || detail::split(line, ',').front() != "item_id") {
        throw DataError(path + ": missing feature-map header");
    }
    const auto components = static_cast<Eigen::Index>(detail::split(line, ',').size()) - 1;
    if (!std::getline(in, line)) {
        throw DataError(path + ": missing eigenvalue row");
    }
    auto fields = detail::split(line, ',');
    if (fields.front() != "eigenvalue" || static_cast<Eigen::Index>(fields.size()) != components + 1) {
        throw DataError(path + ": malformed eigenvalue row");
    }
    kpca::FeatureMap map;
    map.eigenvalues.resize(components);
    for (Eigen::Index u = 0; u < components; ++u) {
        map.eigenvalues[u] = detail::parse_double(fields[static_cast<std::size_t>(u + 1)], path);
    }
    std::vector<std::vector<double>> cols;
    while (std::getline(in, line)) {
        if (detail::blank(line)) {
            continue;
        }
        fields = detail::split(line, ',');
        if (static_cast<Eigen::Index>(fields.size()) != components + 1) {
            throw DataError(path + ": ragged feature-map row");
        }
        std::vector<double> c;
        for (Eigen::Index u = 0; u < components; ++u) {
            c.push_back(detail::parse_double(fields[static_cast<std::size_t>(u + 1)], path));
        }
        cols.push_back(std::move(c));
    }
    map.coords.resize(components, static_cast<Eigen::Index>(cols.size()));
    for (std::size_t j = 0; j < cols.size(); ++j) {
        for (Eigen::Index u = 0; u < components; ++u) {
            map.coords(u, static_cast<Eigen::Index>(j)) = cols[j][static_cast<std::size_t>(u)];
        }
    }
    return map;
}

/// "item_id,cluster,is_medoid" rows.
inline void save_clustering_csv(const clustering::ClusteringResult& r, const std::string& path) {
    auto out = detail::open_out(path);
    out << "item_id,cluster,is_medoid\n";
    for (std::size_t i = 0; i < r.assignments.size(); ++i) {
        const bool medoid = std::find(r.medoids.begin(), r.medoids.end(), i) != r.medoids.end();
        out << i << ',' << r.assignments[i] << ',' << (medoid ? 1 : 0) << '\n';
    }
}

/// Assignments and medoids; the objective is not stored in the CSV.
inline clustering::ClusteringResult load_clustering_csv(const std::string& path) {
    auto in = detail::open_in(path);
    std::string line;
    std::getline(in, line);
    clustering::ClusteringResult r;
    std::map<std::size_t, std::size_t> medoid_of_cluster;
    std::size_t expected = 0;
    while (std::getline(in, line)) {
        if (detail::blank(line)) {
            continue;
        }
        const auto f = detail::split(line, ',');
        if (f.size() != 3) {
            throw DataError(path + ": expected item_id,cluster,is_medoid");
        }
        const auto id = static_cast<std::size_t>(detail::parse_double(f[0], path));
        if (id != expected++) {
            throw DataError(path + ": item ids must be 0..S-1 in order");
        }
        const auto c = static_cast<std::size_t>(detail::parse_double(f[1], path));
        r.assignments.push_back(c);
        if (f[2] == "1") {
            medoid_of_cluster[c] = id;
        }
    }
    for (const auto& [c, m] : medoid_of_cluster) {
        r.medoids.push_back(m);
    }
    return r;
}

/// Time-series CSV: a header line (timestamps), then one series per row.
/// A column named "label" holds optional class labels.
inline pipelines::TimeSeriesDataset load_timeseries_csv(const std::string& path,
                                                        std::vector<std::string>* label_names = nullptr) {
    auto in = detail::open_in(path);
    std::string line;
    if (!std::getline(in, line)) {
        throw DataError(path + ": empty file");
    }
    const auto header = detail::split(line, ',');
    std::ptrdiff_t label_col = -1;
    for (std::size_t c = 0; c < header.size(); ++c) {
        if (header[c] == "label") {
            label_col = static_cast<std::ptrdiff_t>(c);
        }
    }
    std::map<std::string, std::size_t> labels;
    std::vector<std::pair<std::vector<double>, std::string>> rows;
    std::size_t number = 1;
    while (std::getline(in, line)) {
        ++number;
        if (detail::blank(line)) {
            continue;
        }
        const auto f = detail::split(line, ',');
        if (f.size() != header.size()) {
            throw DataError(path + ":" + std::to_string(number) + ": column count differs from the header");
        }
        std::vector<double> v;
        std::string label;
        for (std::size_t c = 0; c < f.size(); ++c) {
            if (static_cast<std::ptrdiff_t>(c) == label_col) {
                label = f[c];
                labels.emplace(label, 0);
            } else {
                v.push_back(detail::parse_double(f[c], path + ":" + std::to_string(number)));
            }
        }
        rows.emplace_back(std::move(v), std::move(label));
    }
    std::size_t k = 0;
    for (auto& [name, idx] : labels) {
        idx = k++;
        if (label_names) {
            label_names->push_back(name);
        }
    }
    pipelines::TimeSeriesDataset out;
    for (auto& [v, label] : rows) {
        pipelines::TimeSeriesItem item;
        item.values = Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
        if (label_col >= 0) {
            item.label = labels.at(label);
        }
        out.push_back(std::move(item));
    }
    return out;
}

/// UCR archive TSV: class label, then the series values, tab separated.
/// Rows with missing values are an error unless `drop_incomplete` is set,
/// in which case they are skipped with a warning.
inline pipelines::TimeSeriesDataset load_ucr_tsv(const std::string& path, bool drop_incomplete = false) {
    auto in = detail::open_in(path);
    std::string line;
    std::map<std::string, std::size_t> labels;
    std::vector<std::pair<std::string, std::vector<double>>> rows;
    std::size_t number = 0;
    std::size_t dropped = 0;
    while (std::getline(in, line)) {
        ++number;
        if (detail::blank(line)) {
            continue;
        }
        auto f = detail::split(line, line.find('\t') != std::string::npos ? '\t' : ',');
        if (f.size() < 3) {
            throw DataError(path + ":" + std::to_string(number) + ": expected a label and at least two values");
        }
        std::vector<double> v;
        bool complete = true;
        for (std::size_t c = 1; c < f.size(); ++c) {
            const double x = detail::parse_double(f[c], path + ":" + std::to_string(number));
            complete = complete && std::isfinite(x);
            v.push_back(x);
        }
        if (!complete) {
            if (!drop_incomplete) {
                throw DataError(path + ":" + std::to_string(number) + ": missing or non-finite value");
            }
            ++dropped;
            continue;
        }
        labels.emplace(f[0], 0);
        rows.emplace_back(f[0], std::move(v));
    }
    if (dropped > 0) {
        warn(path + ": skipped " + std::to_string(dropped) + " series with missing values");
    }
    // Numeric labels sort numerically, the rest lexically.
    std::vector<std::string> names;
    for (const auto& [name, idx] : labels) {
        names.push_back(name);
    }
    std::stable_sort(names.begin(), names.end(), [](const std::string& a, const std::string& b) {
        double x = 0;
        double y = 0;
        const bool na = std::from_chars(a.data(), a.data() + a.size(), x).ec == std::errc{};
        const bool nb = std::from_chars(b.data(), b.data() + b.size(), y).ec == std::errc{};
        return na && nb ? x < y : a < b;
    });
    for (std::size_t k = 0; k < names.size(); ++k) {
        labels[names[k]] = k;
    }
    pipelines::TimeSeriesDataset out;
    for (auto& [label, v] : rows) {
        pipelines::TimeSeriesItem item;
        item.values = Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
        item.label = labels.at(label);
        out.push_back(std::move(item));
    }
    return out;
}

/// Node table CSV (graph_id,voltage,demand) plus summary CSV
/// (graph_id,total_demand,node_count). Graphs follow the summary order.
inline std::vector<pipelines::GraphItem> load_graphs(const std::string& nodes_path, const std::string& summary_path,
                                                     std::vector<std::string>* ids = nullptr) {
    std::map<std::string, std::vector<std::pair<double, double>>> nodes;
    {
        auto in = detail::open_in(nodes_path);
        std::string line;
        std::getline(in, line);
        std::size_t number = 1;
        while (std::getline(in, line)) {
            ++number;
            if (detail::blank(line)) {
                continue;
            }
            const auto f = detail::split(line, ',');
            const auto where = nodes_path + ":" + std::to_string(number);
            if (f.size() != 3) {
                throw DataError(where + ": expected graph_id,voltage,demand");
            }
            nodes[f[0]].emplace_back(detail::parse_double(f[1], where), detail::parse_double(f[2], where));
        }
    }
    std::vector<pipelines::GraphItem> out;
    auto in = detail::open_in(summary_path);
    std::string line;
    std::getline(in, line);
    std::size_t number = 1;
    while (std::getline(in, line)) {
        ++number;
        if (detail::blank(line)) {
            continue;
        }
        const auto f = detail::split(line, ',');
        const auto where = summary_path + ":" + std::to_string(number);
        if (f.size() != 3) {
            throw DataError(where + ": expected graph_id,total_demand,node_count");
        }
        const auto it = nodes.find(f[0]);
        if (it == nodes.end()) {
            throw DataError(where + ": graph " + f[0] + " has no nodes");
        }
        pipelines::GraphItem g;
        g.total_demand = detail::parse_double(f[1], where);
        g.node_count = detail::parse_double(f[2], where);
        if (g.total_demand < 0.0 || g.node_count < 0.0) {
            throw DataError(where + ": total demand and node count must be nonnegative");
        }
        if (static_cast<std::size_t>(g.node_count) != it->second.size()) {
            throw DataError(where + ": node_count disagrees with the node table");
        }
        g.node_table.resize(static_cast<Eigen::Index>(it->second.size()), 2);
        for (std::size_t r = 0; r < it->second.size(); ++r) {
            g.node_table(static_cast<Eigen::Index>(r), 0) = it->second[r].first;
            g.node_table(static_cast<Eigen::Index>(r), 1) = it->second[r].second;
        }
        out.push_back(std::move(g));
        if (ids) {
            ids->push_back(f[0]);
        }
    }
    return out;
}

/// Bag-of-vectors CSV: header "item_id,[weight,]x1,...,xd", one support point
/// per row. Without a weight column the points of an item are uniform.
/// Items keep first-appearance order.
inline std::vector<ot::DiscreteDistribution> load_bags_csv(const std::string& path,
                                                           std::vector<std::string>* ids = nullptr) {
    auto in = detail::open_in(path);
    std::string line;
    if (!std::getline(in, line)) {
        throw DataError(path + ": empty file");
    }
    const auto header = detail::split(line, ',');
    if (header.size() < 2 || header[0] != "item_id") {
        throw DataError(path + ": header must start with item_id");
    }
    const bool weighted = header[1] == "weight";
    const std::size_t first = weighted ? 2 : 1;
    if (header.size() <= first) {
        throw DataError(path + ": no coordinate columns");
    }
    const std::size_t d = header.size() - first;
    std::vector<std::string> order;
    std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> bags;
    std::size_t number = 1;
    while (std::getline(in, line)) {
        ++number;
        if (detail::blank(line)) {
            continue;
        }
        const auto f = detail::split(line, ',');
        const auto where = path + ":" + std::to_string(number);
        if (f.size() != header.size()) {
            throw DataError(where + ": column count differs from the header");
        }
        auto [it, inserted] = bags.try_emplace(f[0]);
        if (inserted) {
            order.push_back(f[0]);
        }
        it->second.second.push_back(weighted ? detail::parse_double(f[1], where) : 1.0);
        for (std::size_t c = first; c < f.size(); ++c) {
            it->second.first.push_back(detail::parse_double(f[c], where));
        }
    }
    std::vector<ot::DiscreteDistribution> out;
    for (const auto& id : order) {
        const auto& [coords, w] = bags.at(id);
        const auto n = static_cast<Eigen::Index>(w.size());
        Eigen::MatrixXd s(n, static_cast<Eigen::Index>(d));
        for (Eigen::Index r = 0; r < n; ++r) {
            for (std::size_t c = 0; c < d; ++c) {
                s(r, static_cast<Eigen::Index>(c)) = coords[static_cast<std::size_t>(r) * d + c];
            }
        }
        Eigen::VectorXd weights = Eigen::Map<const Eigen::VectorXd>(w.data(), n);
        if ((weights.array() <= 0.0).any()) {
            throw DataError(path + ": item " + id + " has a nonpositive weight");
        }
        weights /= weights.sum();
        out.emplace_back(s, weights);
        if (ids) {
            ids->push_back(id);
        }
    }
    if (out.empty()) {
        throw DataError(path + ": no items");
    }
    return out;
}

inline nlohmann::json to_json(const validity::ValidityReport& r) {
    nlohmann::json j{{"fgk", r.fgk},
                     {"ci", r.ci},
                     {"sampling", {{"C", r.sampling.pairs}, {"E", r.sampling.repetitions}, {"seed", r.sampling.seed}}}};
    j["purity"] = r.purity ? nlohmann::json(*r.purity) : nlohmann::json(nullptr);
    nlohmann::json db = nlohmann::json::object();
    for (const auto& [name, v] : r.db_scores) {
        db[name] = std::isinf(v) ? nlohmann::json("inf") : nlohmann::json(v);
    }
    j["db_scores"] = db;
    return j;
}

}  // namespace wkc::io
