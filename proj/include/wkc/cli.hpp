#pragma once

#include <wkc/clustering.hpp>
#include <wkc/error.hpp>
#include <wkc/io.hpp>
#include <wkc/kernels.hpp>
#include <wkc/kpca.hpp>
#include <wkc/log.hpp>
#include <wkc/multiref.hpp>
#include <wkc/parallel.hpp>
#include <wkc/pipelines.hpp>
#include <wkc/random.hpp>
#include <wkc/tuning.hpp>
#include <wkc/validity.hpp>

#include <json.hpp>
#include <openssl/evp.h>

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace wkc::cli {

namespace fs = std::filesystem;
using nlohmann::json;

inline constexpr const char* kVersion = "1.0.0";

struct DatasetConfig {
    std::string format;  ///< bags_csv | graphs | timeseries_csv | ucr_tsv
    std::string path;
    std::string nodes;
    std::string summary;
    std::string labels;  ///< optional item_id,label CSV for bags and graphs
    double subset_fraction = 1.0;
    bool drop_incomplete = false;  ///< skip UCR rows with missing values
};

struct TimeSeriesConfig {
    double samples_per_unit = 1.0;
    std::string window = "none";
    bool pca_smoothing = true;
    double pca_fraction = 0.85;
};

struct DistanceConfig {
    std::size_t references = 5;
    std::vector<double> beta_grid = multiref::default_beta_grid();
    std::size_t calibration_pairs = 30000;
    std::optional<double> beta;
    std::string format = "csv";  ///< csv | bin
};

struct KernelConfig {
    std::string recipe;  ///< wasserstein | italy | melbourne | graph
    double jitter = kernels::kDefaultJitter;
    std::optional<std::vector<double>> gammas;
    std::optional<double> low_mult;
    std::optional<double> high_mult;
};

struct KpcaConfig {
    std::string selection = "kaiser";
    std::size_t count = 1;
    double fraction = 0.9;
    std::size_t nystrom_threshold = 5000;
    std::size_t nystrom_columns = 5000;
};

struct ClusterConfig {
    std::size_t clusters = 2;
    std::string method = "pam";
    std::size_t restarts = 3;
};

struct ValidityConfig {
    std::size_t pairs = 100;
    std::size_t repetitions = 35;
    std::map<std::string, std::string> compare;  ///< method name -> clustering CSV
};

struct TuningConfig {
    std::size_t n_random = 20;
    std::size_t n_bayes = 20;
    std::size_t acquisition_starts = 64;
    bool cluster_count_penalty = false;
    bool resume = false;
};

struct RunConfig {
    std::uint64_t seed = 0;
    std::size_t threads = 0;
    std::string output_dir = "run";
    std::string pipeline;  ///< timeseries | bags
    DatasetConfig dataset;
    TimeSeriesConfig timeseries;
    DistanceConfig distances;
    KernelConfig kernel;
    KpcaConfig kpca;
    ClusterConfig clustering;
    ValidityConfig validity;
    TuningConfig tuning;
};

namespace detail {

/// Reads one JSON object, rejecting unknown keys and mistyped values.
class Section {
public:
    Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) {
            throw ConfigError(where() + " must be an object");
        }
    }

    bool has(const std::string& key) {
        seen_.insert(key);
        return j_.contains(key) && !j_.at(key).is_null();
    }

    const json& raw(const std::string& key) {
        seen_.insert(key);
        return j_.at(key);
    }

    std::string string(const std::string& key, std::string fallback, const std::vector<std::string>& allowed = {}) {
        if (!has(key)) {
            return fallback;
        }
        const auto& v = j_.at(key);
        if (!v.is_string()) {
            throw ConfigError(where(key) + " must be a string");
        }
        auto s = v.get<std::string>();
        if (!allowed.empty() && std::find(allowed.begin(), allowed.end(), s) == allowed.end()) {
            std::string list;
            for (const auto& a : allowed) {
                list += (list.empty() ? "" : ", ") + a;
            }
            throw ConfigError(where(key) + " must be one of " + list + " (got '" + s + "')");
        }
        return s;
    }

    double number(const std::string& key, double fallback) {
        if (!has(key)) {
            return fallback;
        }
        const auto& v = j_.at(key);
        if (!v.is_number()) {
            throw ConfigError(where(key) + " must be a number");
        }
        const double d = v.get<double>();
        if (!std::isfinite(d)) {
            throw ConfigError(where(key) + " must be finite");
        }
        return d;
    }

    std::size_t count(const std::string& key, std::size_t fallback, std::size_t min = 1) {
        if (!has(key)) {
            return fallback;
        }
        const auto& v = j_.at(key);
        if (!v.is_number_integer() || (!v.is_number_unsigned() && v.get<long long>() < 0)) {
            throw ConfigError(where(key) + " must be a nonnegative integer");
        }
        const auto n = v.get<std::uint64_t>();
        if (n < min) {
            throw ConfigError(where(key) + " must be at least " + std::to_string(min));
        }
        return static_cast<std::size_t>(n);
    }

    bool boolean(const std::string& key, bool fallback) {
        if (!has(key)) {
            return fallback;
        }
        const auto& v = j_.at(key);
        if (!v.is_boolean()) {
            throw ConfigError(where(key) + " must be true or false");
        }
        return v.get<bool>();
    }

    std::vector<double> numbers(const std::string& key, std::vector<double> fallback) {
        if (!has(key)) {
            return fallback;
        }
        const auto& v = j_.at(key);
        if (!v.is_array() || v.empty()) {
            throw ConfigError(where(key) + " must be a non-empty array of numbers");
        }
        std::vector<double> out;
        for (const auto& x : v) {
            if (!x.is_number() || !std::isfinite(x.get<double>())) {
                throw ConfigError(where(key) + " must contain finite numbers only");
            }
            out.push_back(x.get<double>());
        }
        return out;
    }

    Section child(const std::string& key) {
        static const json empty = json::object();
        return Section(has(key) ? j_.at(key) : empty, where(key));
    }

    void finish() const {
        for (const auto& [key, value] : j_.items()) {
            if (!seen_.count(key)) {
                throw ConfigError(where(key) + " is not a recognized setting");
            }
        }
    }

private:
    std::string where(const std::string& key = "") const {
        if (key.empty()) {
            return path_.empty() ? "config" : path_;
        }
        return path_.empty() ? key : path_ + "." + key;
    }

    const json& j_;
    std::string path_;
    std::set<std::string> seen_;
};

inline std::string resolve(const std::string& path, const fs::path& base) {
    if (path.empty() || fs::path(path).is_absolute()) {
        return path;
    }
    return (base / path).lexically_normal().string();
}

}  // namespace detail

/// Full schema validation. Relative dataset paths are resolved against `base`.
inline RunConfig parse_config(const json& j, const fs::path& base = ".") {
    RunConfig c;
    detail::Section root(j, "");
    if (root.has("seed")) {
        const auto& v = root.raw("seed");
        if (!v.is_number_integer() || (!v.is_number_unsigned() && v.get<long long>() < 0)) {
            throw ConfigError("seed must be a nonnegative integer");
        }
        c.seed = v.get<std::uint64_t>();
    }
    c.threads = root.count("threads", 0, 0);
    c.output_dir = root.string("output_dir", c.output_dir);
    c.pipeline = root.string("pipeline", "", {"timeseries", "bags"});

    auto ds = root.child("dataset");
    c.dataset.format = ds.string("format", "bags_csv", {"bags_csv", "graphs", "timeseries_csv", "ucr_tsv"});
    c.dataset.path = detail::resolve(ds.string("path", ""), base);
    c.dataset.nodes = detail::resolve(ds.string("nodes", ""), base);
    c.dataset.summary = detail::resolve(ds.string("summary", ""), base);
    c.dataset.labels = detail::resolve(ds.string("labels", ""), base);
    c.dataset.subset_fraction = ds.number("subset_fraction", 1.0);
    c.dataset.drop_incomplete = ds.boolean("drop_incomplete", false);
    ds.finish();
    if (!(c.dataset.subset_fraction > 0.0 && c.dataset.subset_fraction <= 1.0)) {
        throw ConfigError("dataset.subset_fraction must lie in (0, 1]");
    }
    const bool ts = c.dataset.format == "timeseries_csv" || c.dataset.format == "ucr_tsv";
    const std::string inferred = ts ? "timeseries" : "bags";
    if (c.pipeline.empty()) {
        c.pipeline = inferred;
    } else if (c.pipeline != inferred) {
        throw ConfigError("pipeline '" + c.pipeline + "' does not match dataset format '" + c.dataset.format + "'");
    }

    auto t = root.child("timeseries");
    c.timeseries.samples_per_unit = t.number("samples_per_unit", 1.0);
    c.timeseries.window = t.string("window", "none", {"none", "hann"});
    c.timeseries.pca_smoothing = t.boolean("pca_smoothing", true);
    c.timeseries.pca_fraction = t.number("pca_fraction", 0.85);
    t.finish();
    if (!(c.timeseries.samples_per_unit > 0.0)) {
        throw ConfigError("timeseries.samples_per_unit must be positive");
    }
    if (!(c.timeseries.pca_fraction > 0.0 && c.timeseries.pca_fraction <= 1.0)) {
        throw ConfigError("timeseries.pca_fraction must lie in (0, 1]");
    }

    auto d = root.child("distances");
    c.distances.references = d.count("references", 5);
    c.distances.beta_grid = d.numbers("beta_grid", c.distances.beta_grid);
    c.distances.calibration_pairs = d.count("calibration_pairs", 30000);
    if (d.has("beta")) {
        c.distances.beta = d.number("beta", 0.0);
    }
    c.distances.format = d.string("format", "csv", {"csv", "bin"});
    d.finish();

    auto k = root.child("kernel");
    const std::string default_recipe = ts ? "italy" : (c.dataset.format == "graphs" ? "graph" : "wasserstein");
    c.kernel.recipe = k.string("recipe", default_recipe, {"wasserstein", "italy", "melbourne", "graph"});
    c.kernel.jitter = k.number("jitter", kernels::kDefaultJitter);
    if (k.has("gammas")) {
        c.kernel.gammas = k.numbers("gammas", {});
        for (double g : *c.kernel.gammas) {
            if (!(g > 0.0)) {
                throw ConfigError("kernel.gammas must be positive");
            }
        }
    }
    if (k.has("low_mult")) {
        c.kernel.low_mult = k.number("low_mult", 0.0);
    }
    if (k.has("high_mult")) {
        c.kernel.high_mult = k.number("high_mult", 0.0);
    }
    k.finish();
    if (!(c.kernel.jitter > 0.0)) {
        throw ConfigError("kernel.jitter must be positive");
    }
    if ((c.kernel.recipe == "italy" || c.kernel.recipe == "melbourne") && !ts) {
        throw ConfigError("kernel recipe '" + c.kernel.recipe + "' needs a time-series dataset");
    }
    if (c.kernel.recipe == "graph" && c.dataset.format != "graphs") {
        throw ConfigError("kernel recipe 'graph' needs the graphs dataset format");
    }

    auto p = root.child("kpca");
    c.kpca.selection = p.string("selection", "kaiser", {"kaiser", "top_k", "variance_fraction"});
    c.kpca.count = p.count("count", 1);
    c.kpca.fraction = p.number("fraction", 0.9);
    c.kpca.nystrom_threshold = p.count("nystrom_threshold", 5000);
    c.kpca.nystrom_columns = p.count("nystrom_columns", 5000, 2);
    p.finish();
    if (!(c.kpca.fraction > 0.0 && c.kpca.fraction <= 1.0)) {
        throw ConfigError("kpca.fraction must lie in (0, 1]");
    }

    auto cl = root.child("clustering");
    c.clustering.clusters = cl.count("clusters", 2);
    c.clustering.method = cl.string("method", "pam", {"pam", "alternate"});
    c.clustering.restarts = cl.count("restarts", 3, 2);
    cl.finish();

    auto v = root.child("validity");
    c.validity.pairs = v.count("pairs", 100);
    c.validity.repetitions = v.count("repetitions", 35);
    if (v.has("compare")) {
        const auto& cmp = v.raw("compare");
        if (!cmp.is_object()) {
            throw ConfigError("validity.compare must map method names to clustering CSV paths");
        }
        for (const auto& [name, path] : cmp.items()) {
            if (!path.is_string()) {
                throw ConfigError("validity.compare." + name + " must be a path");
            }
            if (name == "wk") {
                throw ConfigError("validity.compare.wk is reserved for this run's clustering");
            }
            c.validity.compare[name] = detail::resolve(path.get<std::string>(), base);
        }
    }
    v.finish();

    auto tu = root.child("tuning");
    c.tuning.n_random = tu.count("n_random", 20);
    c.tuning.n_bayes = tu.count("n_bayes", 20, 0);
    c.tuning.acquisition_starts = tu.count("acquisition_starts", 64);
    c.tuning.cluster_count_penalty = tu.boolean("cluster_count_penalty", false);
    c.tuning.resume = tu.boolean("resume", false);
    tu.finish();

    root.finish();
    return c;
}

inline json to_json(const RunConfig& c) {
    json ds{{"format", c.dataset.format},
            {"subset_fraction", c.dataset.subset_fraction},
            {"drop_incomplete", c.dataset.drop_incomplete}};
    for (const auto& [key, value] : {std::pair{"path", c.dataset.path}, std::pair{"nodes", c.dataset.nodes},
                                     std::pair{"summary", c.dataset.summary}, std::pair{"labels", c.dataset.labels}}) {
        if (!value.empty()) {
            ds[key] = value;
        }
    }
    json kernel{{"recipe", c.kernel.recipe}, {"jitter", c.kernel.jitter}};
    if (c.kernel.gammas) {
        kernel["gammas"] = *c.kernel.gammas;
    }
    if (c.kernel.low_mult) {
        kernel["low_mult"] = *c.kernel.low_mult;
    }
    if (c.kernel.high_mult) {
        kernel["high_mult"] = *c.kernel.high_mult;
    }
    json distances{{"references", c.distances.references},
                   {"beta_grid", c.distances.beta_grid},
                   {"calibration_pairs", c.distances.calibration_pairs},
                   {"format", c.distances.format}};
    if (c.distances.beta) {
        distances["beta"] = *c.distances.beta;
    }
    return json{{"seed", c.seed},
                {"threads", c.threads},
                {"output_dir", c.output_dir},
                {"pipeline", c.pipeline},
                {"dataset", ds},
                {"timeseries",
                 {{"samples_per_unit", c.timeseries.samples_per_unit},
                  {"window", c.timeseries.window},
                  {"pca_smoothing", c.timeseries.pca_smoothing},
                  {"pca_fraction", c.timeseries.pca_fraction}}},
                {"distances", distances},
                {"kernel", kernel},
                {"kpca",
                 {{"selection", c.kpca.selection},
                  {"count", c.kpca.count},
                  {"fraction", c.kpca.fraction},
                  {"nystrom_threshold", c.kpca.nystrom_threshold},
                  {"nystrom_columns", c.kpca.nystrom_columns}}},
                {"clustering",
                 {{"clusters", c.clustering.clusters},
                  {"method", c.clustering.method},
                  {"restarts", c.clustering.restarts}}},
                {"validity",
                 {{"pairs", c.validity.pairs}, {"repetitions", c.validity.repetitions}, {"compare", c.validity.compare}}},
                {"tuning",
                 {{"n_random", c.tuning.n_random},
                  {"n_bayes", c.tuning.n_bayes},
                  {"acquisition_starts", c.tuning.acquisition_starts},
                  {"cluster_count_penalty", c.tuning.cluster_count_penalty},
                  {"resume", c.tuning.resume}}}};
}

inline json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot read " + path);
    }
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError(path + ": " + e.what());
    }
}

inline RunConfig load_config_file(const std::string& path) {
    return parse_config(read_json_file(path), fs::absolute(path).parent_path());
}

/// Hex SHA-256 of a file's bytes.
inline std::string sha256_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw DataError("cannot hash " + path);
    }
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
    std::vector<char> buf(1 << 16);
    while (in) {
        in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
        EVP_DigestUpdate(ctx, buf.data(), static_cast<std::size_t>(in.gcount()));
    }
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx, digest, &len);
    EVP_MD_CTX_free(ctx);
    std::string hex;
    char byte[3];
    for (unsigned int i = 0; i < len; ++i) {
        std::snprintf(byte, sizeof byte, "%02x", digest[i]);
        hex += byte;
    }
    return hex;
}

/// Exclusive lock on a run directory, released on destruction.
class RunLock {
public:
    explicit RunLock(const fs::path& dir) : path_(dir / ".lock") {
        std::FILE* f = std::fopen(path_.string().c_str(), "wx");
        if (!f) {
            throw ConfigError("run directory " + dir.string() + " is locked by another command (remove " +
                              path_.string() + " if stale)");
        }
        std::fclose(f);
    }
    ~RunLock() {
        std::error_code ec;
        fs::remove(path_, ec);
    }
    RunLock(const RunLock&) = delete;
    RunLock& operator=(const RunLock&) = delete;

private:
    fs::path path_;
};

/// Items loaded from any supported format.
struct LoadedData {
    std::vector<std::string> ids;
    std::optional<std::vector<std::size_t>> labels;
    std::vector<std::string> label_names;
    pipelines::TimeSeriesDataset series;
    std::vector<ot::DiscreteDistribution> bags;
    std::vector<pipelines::GraphItem> graphs;
    std::size_t size() const { return ids.size(); }
};

namespace detail {

inline void require_file(const std::string& path, const std::string& what) {
    if (path.empty()) {
        throw ConfigError(what + " is not set");
    }
    if (!fs::is_regular_file(path)) {
        throw ConfigError(what + " " + path + " does not exist");
    }
}

inline std::map<std::string, std::string> read_label_csv(const std::string& path) {
    std::ifstream in(path);
    std::string line;
    std::getline(in, line);
    std::map<std::string, std::string> out;
    while (std::getline(in, line)) {
        if (line.find_first_not_of(" \r") == std::string::npos) {
            continue;
        }
        const auto f = io::detail::split(line, ',');
        if (f.size() != 2) {
            throw DataError(path + ": expected item_id,label rows");
        }
        out[f[0]] = f[1];
    }
    return out;
}

template <class T>
std::vector<T> pick(const std::vector<T>& v, const std::vector<std::size_t>& idx) {
    std::vector<T> out;
    out.reserve(idx.size());
    for (auto i : idx) {
        out.push_back(v[i]);
    }
    return out;
}

}  // namespace detail

/// Checks that every dataset file referenced by the config exists.
inline void validate_dataset_paths(const RunConfig& c) {
    if (c.dataset.format == "graphs") {
        detail::require_file(c.dataset.nodes, "dataset.nodes");
        detail::require_file(c.dataset.summary, "dataset.summary");
    } else {
        detail::require_file(c.dataset.path, "dataset.path");
    }
    if (!c.dataset.labels.empty()) {
        detail::require_file(c.dataset.labels, "dataset.labels");
    }
}

inline LoadedData load_dataset(const RunConfig& c) {
    validate_dataset_paths(c);
    LoadedData d;
    const auto& f = c.dataset.format;
    if (f == "timeseries_csv" || f == "ucr_tsv") {
        d.series = f == "ucr_tsv" ? io::load_ucr_tsv(c.dataset.path, c.dataset.drop_incomplete)
                                  : io::load_timeseries_csv(c.dataset.path, &d.label_names);
        for (std::size_t i = 0; i < d.series.size(); ++i) {
            d.ids.push_back(std::to_string(i));
        }
        if (!d.series.empty() && d.series.front().label) {
            d.labels.emplace();
            for (const auto& s : d.series) {
                d.labels->push_back(*s.label);
            }
            if (d.label_names.empty()) {
                const auto k = *std::max_element(d.labels->begin(), d.labels->end()) + 1;
                for (std::size_t i = 0; i < k; ++i) {
                    d.label_names.push_back(std::to_string(i));
                }
            }
        }
    } else {
        if (f == "graphs") {
            d.graphs = io::load_graphs(c.dataset.nodes, c.dataset.summary, &d.ids);
        } else {
            d.bags = io::load_bags_csv(c.dataset.path, &d.ids);
        }
        if (!c.dataset.labels.empty()) {
            const auto raw = detail::read_label_csv(c.dataset.labels);
            std::map<std::string, std::size_t> index;
            for (const auto& [id, name] : raw) {
                index.emplace(name, 0);
            }
            std::size_t k = 0;
            for (auto& [name, i] : index) {
                i = k++;
                d.label_names.push_back(name);
            }
            d.labels.emplace();
            for (const auto& id : d.ids) {
                const auto it = raw.find(id);
                if (it == raw.end()) {
                    throw DataError(c.dataset.labels + ": no label for item " + id);
                }
                d.labels->push_back(index.at(it->second));
            }
        }
    }
    if (d.size() < 2) {
        throw DataError("the dataset needs at least two items");
    }
    if (c.dataset.subset_fraction < 1.0) {
        const auto keep = std::max<std::size_t>(
            2, static_cast<std::size_t>(std::floor(c.dataset.subset_fraction * static_cast<double>(d.size()))));
        std::vector<std::size_t> idx(d.size());
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        Rng rng = make_stream(c.seed, "subset");
        for (std::size_t i = 0; i < keep; ++i) {
            std::swap(idx[i], idx[i + uniform_index(rng, idx.size() - i)]);
        }
        idx.resize(keep);
        std::sort(idx.begin(), idx.end());
        d.ids = detail::pick(d.ids, idx);
        if (d.labels) {
            d.labels = detail::pick(*d.labels, idx);
        }
        if (!d.series.empty()) {
            d.series = detail::pick(d.series, idx);
        }
        if (!d.bags.empty()) {
            d.bags = detail::pick(d.bags, idx);
        }
        if (!d.graphs.empty()) {
            d.graphs = detail::pick(d.graphs, idx);
        }
    }
    return d;
}

/// Writes files into a run directory and records them in its manifest.
class RunDir {
public:
    explicit RunDir(fs::path dir) : dir_(std::move(dir)) {}

    const fs::path& path() const { return dir_; }
    std::string file(const std::string& name) const { return (dir_ / name).string(); }
    bool exists(const std::string& name) const { return fs::exists(dir_ / name); }

    void input(const std::string& path) {
        if (!path.empty()) {
            inputs_[path] = sha256_file(path);
        }
    }
    void input_artifact(const std::string& name) { inputs_[name] = sha256_file(file(name)); }
    void output(const std::string& name) { outputs_.push_back(name); }

    void write_json(const std::string& name, const json& j) {
        std::ofstream out(file(name), std::ios::trunc);
        if (!out) {
            throw DataError("cannot write " + file(name));
        }
        out << j.dump(2) << '\n';
        output(name);
    }

    void write_text(const std::string& name, const std::string& text) {
        std::ofstream out(file(name), std::ios::binary | std::ios::trunc);
        if (!out) {
            throw DataError("cannot write " + file(name));
        }
        out << text;
        output(name);
    }

    /// Merges this command's entry into manifest.json.
    void write_manifest(const std::string& command, const json& config) const {
        json manifest = json::object();
        const auto path = dir_ / "manifest.json";
        if (fs::exists(path)) {
            try {
                std::ifstream in(path);
                manifest = json::parse(in);
            } catch (const json::exception&) {
                manifest = json::object();
            }
        }
        json outputs = json::object();
        for (const auto& name : outputs_) {
            outputs[name] = sha256_file(file(name));
        }
        manifest["versions"] = {{"wkc", kVersion},
                                {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." +
                                              std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                              std::to_string(EIGEN_MINOR_VERSION)},
                                {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." +
                                                      std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                                      std::to_string(NLOHMANN_JSON_VERSION_PATCH)}};
        manifest["commands"][command] = {{"inputs", inputs_}, {"outputs", outputs}, {"config", config}};
        std::ofstream out(path, std::ios::trunc);
        out << manifest.dump(2) << '\n';
    }

private:
    fs::path dir_;
    std::map<std::string, std::string> inputs_;
    std::vector<std::string> outputs_;
};

namespace detail {

inline std::uint64_t stage_seed(const RunConfig& c, const char* stage) { return make_stream(c.seed, stage)(); }

inline std::string matrix_name(const std::string& base, const RunConfig& c) {
    return base + (c.distances.format == "bin" ? ".bin" : ".csv");
}

inline void save_artifact_matrix(RunDir& run, const std::string& name, const Eigen::MatrixXd& m) {
    io::save_matrix(m, run.file(name));
    run.output(name);
}

inline std::string csv_row(const std::vector<std::string>& fields) {
    std::string out;
    for (std::size_t i = 0; i < fields.size(); ++i) {
        out += (i ? "," : "") + fields[i];
    }
    return out + "\n";
}

inline std::string num(double v) { return io::detail::format_double(v); }

inline std::string item_features_csv(const LoadedData& d, const RunConfig& c) {
    std::ostringstream out;
    if (!d.series.empty()) {
        out << "item_id,mean,std,dominant_frequency\n";
        for (std::size_t i = 0; i < d.size(); ++i) {
            const auto& x = d.series[i].values;
            const double mean = x.mean();
            const double sd = std::sqrt((x.array() - mean).square().mean());
            const auto spec = pipelines::npsd(x, c.timeseries.samples_per_unit,
                                              pipelines::parse_window(c.timeseries.window));
            Eigen::Index top = 0;
            spec.weights().maxCoeff(&top);
            out << d.ids[i] << ',' << num(mean) << ',' << num(sd) << ',' << num(spec.support()(top, 0)) << '\n';
        }
    } else if (!d.graphs.empty()) {
        out << "item_id,mean_voltage,mean_demand,total_demand,node_count\n";
        for (std::size_t i = 0; i < d.size(); ++i) {
            const auto& g = d.graphs[i];
            out << d.ids[i] << ',' << num(g.node_table.col(0).mean()) << ',' << num(g.node_table.col(1).mean())
                << ',' << num(g.total_demand) << ',' << num(g.node_count) << '\n';
        }
    } else {
        const auto dim = d.bags.front().dim();
        out << "item_id,support_size";
        for (Eigen::Index k = 0; k < dim; ++k) {
            out << ",mean_x" << (k + 1);
        }
        out << '\n';
        for (std::size_t i = 0; i < d.size(); ++i) {
            const Eigen::RowVectorXd mean = d.bags[i].weights().transpose() * d.bags[i].support();
            out << d.ids[i] << ',' << d.bags[i].size();
            for (Eigen::Index k = 0; k < dim; ++k) {
                out << ',' << num(mean[k]);
            }
            out << '\n';
        }
    }
    return out.str();
}

inline KernelMatrix build_kernel(const std::vector<DistanceMatrix>& matrices, const std::vector<double>& gammas,
                                 double jitter) {
    if (gammas.size() != matrices.size()) {
        throw ConfigError("the kernel recipe needs " + std::to_string(matrices.size()) + " gammas, got " +
                          std::to_string(gammas.size()));
    }
    const auto first = kernels::shift_kernel(kernels::exponential_kernel(matrices[0], gammas[0]), jitter);
    if (matrices.size() == 1) {
        return first;
    }
    const auto a = kernels::shift_kernel(kernels::exponential_kernel(matrices[1], gammas[1]), jitter);
    const auto b = kernels::shift_kernel(kernels::exponential_kernel(matrices[2], gammas[2]), jitter);
    return kernels::compose_product(first, kernels::compose_sum(a, b, 1.0, 1.0));
}

inline tuning::ClusteringObjectiveOptions objective_options(const RunConfig& c) {
    tuning::ClusteringObjectiveOptions o;
    o.clusters = c.clustering.clusters;
    o.restarts = c.clustering.restarts;
    o.kmedoids.method = clustering::parse_method(c.clustering.method);
    if (c.kpca.selection == "top_k") {
        o.selection = kpca::Selection::top_k(c.kpca.count);
    } else if (c.kpca.selection == "variance_fraction") {
        o.selection = kpca::Selection::variance_fraction(c.kpca.fraction);
    } else {
        o.selection = kpca::Selection::kaiser();
    }
    o.nystrom_threshold = c.kpca.nystrom_threshold;
    o.nystrom_columns = c.kpca.nystrom_columns;
    o.fgk_pairs = c.validity.pairs;
    o.fgk_repetitions = c.validity.repetitions;
    o.cluster_count_penalty = c.tuning.cluster_count_penalty;
    return o;
}

struct StageDistances {
    json meta;
    std::vector<std::string> files;
    std::vector<DistanceMatrix> matrices;
};

inline StageDistances load_distances(RunDir& run) {
    if (!run.exists("distances.json")) {
        throw ConfigError("run directory " + run.path().string() + " has no distances; run 'distances' first");
    }
    StageDistances s;
    s.meta = read_json_file(run.file("distances.json"));
    for (const auto& f : s.meta.at("matrices")) {
        const auto name = f.get<std::string>();
        s.files.push_back(name);
        s.matrices.emplace_back(io::load_matrix(run.file(name)));
        run.input_artifact(name);
    }
    return s;
}

inline std::vector<std::vector<std::size_t>> load_restarts(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw DataError("cannot read " + path);
    }
    std::string line;
    std::getline(in, line);
    const auto width = io::detail::split(line, ',').size();
    if (width < 2) {
        throw DataError(path + ": no restart columns");
    }
    std::vector<std::vector<std::size_t>> out(width - 1);
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        const auto f = io::detail::split(line, ',');
        if (f.size() != width) {
            throw DataError(path + ": ragged row");
        }
        for (std::size_t r = 1; r < width; ++r) {
            out[r - 1].push_back(static_cast<std::size_t>(io::detail::parse_double(f[r], path)));
        }
    }
    return out;
}

inline std::optional<std::vector<std::size_t>> load_labels(const RunDir& run) {
    if (!run.exists("labels.csv")) {
        return std::nullopt;
    }
    std::ifstream in(run.file("labels.csv"));
    std::string line;
    std::getline(in, line);
    std::vector<std::size_t> out;
    while (std::getline(in, line)) {
        if (!line.empty()) {
            const auto f = io::detail::split(line, ',');
            out.push_back(static_cast<std::size_t>(io::detail::parse_double(f.at(2), run.file("labels.csv"))));
        }
    }
    return out;
}

}  // namespace detail

/// Loads and preprocesses the dataset, then writes the base distance matrices.
inline void cmd_distances(const RunConfig& c, RunDir& run) {
    auto d = load_dataset(c);
    for (const auto& p : {c.dataset.path, c.dataset.nodes, c.dataset.summary, c.dataset.labels}) {
        run.input(p);
    }
    json meta{{"pipeline", c.pipeline}, {"recipe", c.kernel.recipe}, {"items", d.size()}};
    std::vector<std::string> files;
    const auto seed = detail::stage_seed(c, "distances");
    if (c.pipeline == "timeseries") {
        const auto window = pipelines::parse_window(c.timeseries.window);
        pipelines::minmax_normalize(d.series);
        if (c.timeseries.pca_smoothing) {
            auto smooth = pipelines::pca_smooth(d.series, c.timeseries.pca_fraction);
            d.series = std::move(smooth.data);
            meta["pca_components"] = smooth.components;
        }
        const auto in = pipelines::melbourne_inputs(d.series, c.timeseries.samples_per_unit, window);
        files.push_back(detail::matrix_name("distances", c));
        detail::save_artifact_matrix(run, files.back(), in.npsd.values);
        if (c.kernel.recipe == "melbourne") {
            files.push_back(detail::matrix_name("series_distances", c));
            detail::save_artifact_matrix(run, files.back(), in.series.values);
            files.push_back(detail::matrix_name("totals_distances", c));
            detail::save_artifact_matrix(run, files.back(), in.totals.values);
        }
    } else {
        std::vector<ot::DiscreteDistribution> bags = d.bags;
        if (!d.graphs.empty()) {
            pipelines::normalize_node_tables(d.graphs);
            bags = pipelines::nodal_distributions(d.graphs);
        }
        multiref::MultirefOptions opts;
        opts.references = c.distances.references;
        opts.beta_grid = c.distances.beta_grid;
        opts.calibration_pairs = c.distances.calibration_pairs;
        opts.fixed_beta = c.distances.beta;
        const auto r = multiref::approximate_distances(bags, opts, seed);
        files.push_back(detail::matrix_name("distances", c));
        detail::save_artifact_matrix(run, files.back(), r.fused.values);
        std::vector<multiref::SampledPair> pairs;
        json calibration{{"beta", r.beta}, {"references", r.references.additional}, {"clamped", r.clamped}};
        if (r.calibration) {
            pairs = r.calibration->pairs;
            calibration["grid"] = r.calibration->grid;
            calibration["mean_errors"] = r.calibration->mean_errors;
        } else {
            pairs = multiref::sample_exact_pairs(bags, r.references, c.distances.calibration_pairs,
                                                 make_stream(seed, "error-pairs")());
        }
        calibration["pairs"] = pairs.size();
        if (!pairs.empty()) {
            std::ostringstream errs;
            errs << "i,j,exact,fused,single\n";
            for (const auto& p : pairs) {
                const auto a = static_cast<Eigen::Index>(p.i);
                const auto b = static_cast<Eigen::Index>(p.j);
                errs << p.i << ',' << p.j << ',' << detail::num(p.exact) << ',' << detail::num(r.fused(a, b)) << ','
                     << detail::num(r.single(a, b)) << '\n';
            }
            run.write_text("approximation_pairs.csv", errs.str());
            const auto fused = pipelines::approximation_error(r.fused, pairs);
            const auto single = pipelines::approximation_error(r.single, pairs);
            calibration["error"] = {{"fused", {{"mean", fused.mean}, {"p70", fused.p70}, {"p90", fused.p90}}},
                                    {"single", {{"mean", single.mean}, {"p70", single.p70}, {"p90", single.p90}}}};
        }
        run.write_json("calibration.json", calibration);
        if (c.kernel.recipe == "graph") {
            Eigen::MatrixXd p(static_cast<Eigen::Index>(d.size()), 1);
            Eigen::MatrixXd v(static_cast<Eigen::Index>(d.size()), 1);
            for (std::size_t i = 0; i < d.size(); ++i) {
                p(static_cast<Eigen::Index>(i), 0) = d.graphs[i].total_demand;
                v(static_cast<Eigen::Index>(i), 0) = d.graphs[i].node_count;
            }
            files.push_back(detail::matrix_name("demand_distances", c));
            detail::save_artifact_matrix(run, files.back(), pipelines::euclidean_distances(p).values);
            files.push_back(detail::matrix_name("nodes_distances", c));
            detail::save_artifact_matrix(run, files.back(), pipelines::euclidean_distances(v).values);
        }
    }
    meta["matrices"] = files;
    run.write_text("item_features.csv", detail::item_features_csv(d, c));
    if (d.labels) {
        std::ostringstream out;
        out << "item_id,label,label_index\n";
        for (std::size_t i = 0; i < d.size(); ++i) {
            out << d.ids[i] << ',' << d.label_names.at((*d.labels)[i]) << ',' << (*d.labels)[i] << '\n';
        }
        run.write_text("labels.csv", out.str());
    }
    run.write_json("distances.json", meta);
}

/// Builds the kernel for `gammas` and writes kernel, feature map and summary.
inline kpca::FeatureMap write_kernel_artifacts(const RunConfig& c, RunDir& run,
                                               const detail::StageDistances& dist, const std::vector<double>& gammas) {
    const auto kernel = detail::build_kernel(dist.matrices, gammas, c.kernel.jitter);
    const auto features =
        tuning::feature_map(kernel, detail::objective_options(c), detail::stage_seed(c, "clustering"));
    detail::save_artifact_matrix(run, detail::matrix_name("kernel", c), kernel.values);
    io::save_feature_map_csv(features, run.file("features.csv"));
    run.output("features.csv");
    run.write_json("kernel.json", {{"gammas", gammas},
                                   {"jitter", c.kernel.jitter},
                                   {"recipe", c.kernel.recipe},
                                   {"method", features.method == kpca::MapMethod::exact ? "exact" : "nystrom"},
                                   {"nystrom_columns", features.nystrom_columns},
                                   {"components", features.components()},
                                   {"eigenvalues", std::vector<double>(features.eigenvalues.begin(),
                                                                       features.eigenvalues.end())},
                                   {"explained_variance_top5", kpca::explained_variance(features)}});
    return features;
}

inline void cmd_kernel(const RunConfig& c, RunDir& run) {
    auto dist = detail::load_distances(run);
    std::vector<double> gammas;
    if (c.kernel.gammas) {
        gammas = *c.kernel.gammas;
    } else if (run.exists("tune.json")) {
        gammas = read_json_file(run.file("tune.json")).at("best_gammas").get<std::vector<double>>();
        run.input_artifact("tune.json");
    } else {
        throw ConfigError("kernel.gammas is not set and the run has no tuning result");
    }
    write_kernel_artifacts(c, run, dist, gammas);
}

inline void write_cluster_artifacts(const RunConfig& c, RunDir& run, const kpca::FeatureMap& features) {
    const auto opts = detail::objective_options(c);
    if (opts.clusters > static_cast<std::size_t>(features.items())) {
        throw DataError("clustering.clusters exceeds the number of items");
    }
    const auto restarts = tuning::cluster_restarts(features, opts, detail::stage_seed(c, "clustering"));
    const auto best = clustering::best_result(restarts);
    io::save_clustering_csv(restarts[best], run.file("clustering.csv"));
    run.output("clustering.csv");
    std::ostringstream out;
    out << "item_id";
    for (std::size_t r = 0; r < restarts.size(); ++r) {
        out << ",restart" << r;
    }
    out << '\n';
    for (std::size_t i = 0; i < restarts.front().assignments.size(); ++i) {
        out << i;
        for (const auto& r : restarts) {
            out << ',' << r.assignments[i];
        }
        out << '\n';
    }
    run.write_text("restarts.csv", out.str());
    std::vector<double> objectives;
    for (const auto& r : restarts) {
        objectives.push_back(r.objective);
    }
    run.write_json("cluster.json", {{"clusters", opts.clusters},
                                    {"method", c.clustering.method},
                                    {"restarts", restarts.size()},
                                    {"best_restart", best},
                                    {"objective", restarts[best].objective},
                                    {"restart_objectives", objectives},
                                    {"medoids", restarts[best].medoids}});
}

inline void cmd_cluster(const RunConfig& c, RunDir& run) {
    if (!run.exists("features.csv")) {
        throw ConfigError("run directory has no feature map; run 'kernel' first");
    }
    run.input_artifact("features.csv");
    write_cluster_artifacts(c, run, io::load_feature_map_csv(run.file("features.csv")));
}

inline void cmd_tune(const RunConfig& c, RunDir& run) {
    if (!run.exists("distances.json")) {
        cmd_distances(c, run);
    }
    auto dist = detail::load_distances(run);
    const bool ts = c.pipeline == "timeseries";
    const double low = c.kernel.low_mult.value_or(ts ? 0.1 : std::pow(10.0, -0.5));
    const double high = c.kernel.high_mult.value_or(ts ? 10.0 : std::pow(10.0, 0.5));
    std::vector<double> gamma_max;
    for (const auto& m : dist.matrices) {
        gamma_max.push_back(kernels::gamma_max_search(m));
    }
    const auto bounds = tuning::make_bounds(gamma_max, low, high);
    const auto& lower = bounds.lower;
    const auto& upper = bounds.upper;
    const auto opts = detail::objective_options(c);
    const auto objective = tuning::clustering_objective(
        [&](const std::vector<double>& g) { return detail::build_kernel(dist.matrices, g, c.kernel.jitter); }, opts,
        detail::stage_seed(c, "clustering"));
    tuning::TuningTrace resume;
    if (c.tuning.resume && run.exists("trace.jsonl")) {
        resume = tuning::load_trace(run.file("trace.jsonl"));
    }
    tuning::TuneOptions topts;
    topts.n_random = c.tuning.n_random;
    topts.n_bayes = c.tuning.n_bayes;
    topts.acquisition_starts = c.tuning.acquisition_starts;
    const auto trace_path = run.file("trace.jsonl");
    topts.on_evaluation = [&](const tuning::TuningTrace& t) { tuning::save_trace(t, trace_path); };
    const auto trace = tuning::tune(objective, bounds, topts, detail::stage_seed(c, "tuning"), resume);
    tuning::save_trace(trace, trace_path);
    run.output("trace.jsonl");
    const auto& best = trace.incumbent();
    run.write_json("tune.json", {{"gamma_max", gamma_max},
                                 {"lower", lower},
                                 {"upper", upper},
                                 {"best_index", trace.best},
                                 {"best_gammas", best.gammas},
                                 {"best_objective", best.objective},
                                 {"best_ci", best.ci},
                                 {"best_fgk", best.fgk},
                                 {"evaluations", trace.evaluations.size()},
                                 {"cluster_count_penalty", c.tuning.cluster_count_penalty}});
    const auto features = write_kernel_artifacts(c, run, dist, best.gammas);
    write_cluster_artifacts(c, run, features);
}

inline void cmd_validate(const RunConfig& c, RunDir& run) {
    for (const auto& f : {"features.csv", "clustering.csv", "restarts.csv"}) {
        if (!run.exists(f)) {
            throw ConfigError(std::string("run directory has no ") + f + "; run 'cluster' or 'tune' first");
        }
        run.input_artifact(f);
    }
    const auto features = io::load_feature_map_csv(run.file("features.csv"));
    const auto result = io::load_clustering_csv(run.file("clustering.csv"));
    const auto partitions = detail::load_restarts(run.file("restarts.csv"));
    if (result.assignments.size() != static_cast<std::size_t>(features.items())) {
        throw DataError("clustering and feature map disagree on the item count");
    }
    validity::ValidityReport report;
    report.sampling = {c.validity.pairs, c.validity.repetitions, detail::stage_seed(c, "clustering")};
    report.ci = validity::consensus_index(partitions);
    report.fgk = validity::fgk(features.coords, result.assignments, c.validity.pairs, c.validity.repetitions,
                               make_stream(report.sampling.seed, "fgk")());
    if (const auto labels = detail::load_labels(run)) {
        run.input_artifact("labels.csv");
        report.purity = validity::purity(result.assignments, *labels);
    }
    json out = io::to_json(report);
    if (!c.validity.compare.empty()) {
        auto dist = detail::load_distances(run);
        std::map<std::string, validity::Labels> methods{{"wk", result.assignments}};
        for (const auto& [name, path] : c.validity.compare) {
            detail::require_file(path, "validity.compare." + name);
            run.input(path);
            methods[name] = io::load_clustering_csv(path).assignments;
            if (methods[name].size() != result.assignments.size()) {
                throw DataError("clustering " + path + " has a different item count");
            }
        }
        json db = json::object();
        for (std::size_t m = 0; m < dist.matrices.size(); ++m) {
            std::map<std::string, double> raw;
            for (const auto& [name, labels] : methods) {
                raw[name] = validity::davies_bouldin(clustering::MatrixDistance{&dist.matrices[m].values}, labels);
            }
            const auto normalized = validity::normalize_db(raw);
            const auto key = fs::path(dist.files[m]).stem().string();
            for (const auto& [name, value] : normalized) {
                db[key][name] = {{"raw", std::isinf(raw[name]) ? json("inf") : json(raw[name])}, {"normalized", value}};
            }
            if (m == 0) {
                report.db_scores = normalized;
            }
        }
        out = io::to_json(report);
        out["db_by_separation"] = db;
    }
    run.write_json("validity.json", out);
}

/// Plot-ready CSVs built from the run directory alone.
inline void cmd_report(RunDir& run) {
    json produced = json::array();
    if (run.exists("approximation_pairs.csv")) {
        run.input_artifact("approximation_pairs.csv");
        std::ifstream in(run.file("approximation_pairs.csv"));
        std::string line;
        std::getline(in, line);
        std::vector<double> fused;
        std::vector<double> single;
        while (std::getline(in, line)) {
            if (line.empty()) {
                continue;
            }
            const auto f = io::detail::split(line, ',');
            const double exact = io::detail::parse_double(f.at(2), "approximation_pairs.csv");
            fused.push_back(multiref::relative_error(io::detail::parse_double(f.at(3), "fused"), exact));
            single.push_back(multiref::relative_error(io::detail::parse_double(f.at(4), "single"), exact));
        }
        std::ostringstream cdf;
        std::ostringstream summary;
        cdf << "method,error,cdf\n";
        summary << "method,pairs,mean,p70,p90\n";
        for (auto [name, errs] : {std::pair{"fused", fused}, std::pair{"single", single}}) {
            if (errs.empty()) {
                continue;
            }
            double mean = 0.0;
            for (double e : errs) {
                mean += e;
            }
            mean /= static_cast<double>(errs.size());
            summary << name << ',' << errs.size() << ',' << detail::num(mean) << ','
                    << detail::num(pipelines::percentile(errs, 70.0)) << ','
                    << detail::num(pipelines::percentile(errs, 90.0)) << '\n';
            std::sort(errs.begin(), errs.end());
            for (std::size_t k = 0; k < errs.size(); ++k) {
                cdf << name << ',' << detail::num(errs[k]) << ','
                    << detail::num(static_cast<double>(k + 1) / static_cast<double>(errs.size())) << '\n';
            }
        }
        run.write_text("report_error_cdf.csv", cdf.str());
        run.write_text("report_error_summary.csv", summary.str());
        produced.push_back("report_error_cdf.csv");
        produced.push_back("report_error_summary.csv");
    }
    bool penalty = false;
    if (run.exists("trace.jsonl")) {
        run.input_artifact("trace.jsonl");
        const auto trace = tuning::load_trace(run.file("trace.jsonl"));
        std::ostringstream out;
        out << "evaluation,phase,explained_variance,ci,fgk,objective,selected\n";
        for (std::size_t k = 0; k < trace.evaluations.size(); ++k) {
            const auto& e = trace.evaluations[k];
            out << k << ',' << e.phase << ',' << detail::num(e.explained_variance) << ',' << detail::num(e.ci) << ','
                << detail::num(e.fgk) << ',' << detail::num(e.objective) << ',' << (k == trace.best ? 1 : 0) << '\n';
            penalty = penalty || e.penalty != 1.0;
        }
        run.write_text("report_validity_vs_variance.csv", out.str());
        produced.push_back("report_validity_vs_variance.csv");
    }
    if (run.exists("tune.json")) {
        penalty = penalty || read_json_file(run.file("tune.json")).value("cluster_count_penalty", false);
    }
    if (run.exists("clustering.csv") && run.exists("item_features.csv")) {
        run.input_artifact("clustering.csv");
        run.input_artifact("item_features.csv");
        const auto result = io::load_clustering_csv(run.file("clustering.csv"));
        std::ifstream in(run.file("item_features.csv"));
        std::string line;
        std::getline(in, line);
        const auto header = io::detail::split(line, ',');
        std::vector<std::vector<double>> rows;
        while (std::getline(in, line)) {
            if (line.empty()) {
                continue;
            }
            const auto f = io::detail::split(line, ',');
            std::vector<double> row;
            for (std::size_t k = 1; k < f.size(); ++k) {
                row.push_back(io::detail::parse_double(f[k], "item_features.csv"));
            }
            rows.push_back(std::move(row));
        }
        if (rows.size() != result.assignments.size()) {
            throw DataError("item_features.csv and clustering.csv disagree on the item count");
        }
        std::ostringstream out;
        out << "cluster,medoid,size,feature,mean,std,min,median,max,medoid_value\n";
        for (std::size_t cl = 0; cl < result.medoids.size(); ++cl) {
            std::vector<std::size_t> members;
            for (std::size_t i = 0; i < rows.size(); ++i) {
                if (result.assignments[i] == cl) {
                    members.push_back(i);
                }
            }
            for (std::size_t f = 0; f + 1 < header.size(); ++f) {
                std::vector<double> v;
                for (auto i : members) {
                    v.push_back(rows[i][f]);
                }
                double mean = 0.0;
                for (double x : v) {
                    mean += x;
                }
                mean /= static_cast<double>(v.size());
                double var = 0.0;
                for (double x : v) {
                    var += (x - mean) * (x - mean);
                }
                const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
                out << cl << ',' << result.medoids[cl] << ',' << members.size() << ',' << header[f + 1] << ','
                    << detail::num(mean) << ',' << detail::num(std::sqrt(var / static_cast<double>(v.size()))) << ','
                    << detail::num(*lo) << ',' << detail::num(pipelines::percentile(v, 50.0)) << ','
                    << detail::num(*hi) << ',' << detail::num(rows[result.medoids[cl]][f]) << '\n';
            }
        }
        run.write_text("report_cluster_summary.csv", out.str());
        produced.push_back("report_cluster_summary.csv");
    }
    if (produced.empty()) {
        throw DataError("run directory " + run.path().string() + " has nothing to report");
    }
    json notes = json::array();
    if (penalty) {
        notes.push_back("objective includes the cluster-count penalty (an interpretation of the effective number of "
                        "constituents term)");
    }
    run.write_json("report.json", {{"files", produced}, {"notes", notes}});
}

/// Exit code for an exception category.
inline int exit_code_for(const std::exception& e) {
    if (dynamic_cast<const ConfigError*>(&e)) {
        return 2;
    }
    if (dynamic_cast<const DataError*>(&e)) {
        return 3;
    }
    if (dynamic_cast<const NumericError*>(&e)) {
        return 4;
    }
    return 1;
}

inline std::string category_for(int code) {
    switch (code) {
        case 2:
            return "config";
        case 3:
            return "data";
        case 4:
            return "numeric";
        default:
            return "internal";
    }
}

}  // namespace wkc::cli
