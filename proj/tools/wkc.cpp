#include <wkc/cli.hpp>

#include <CLI11.hpp>

#include <cstdlib>
#include <iostream>

namespace {

using wkc::cli::RunConfig;
namespace fs = std::filesystem;

struct Flags {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::optional<std::size_t> threads;
};

RunConfig effective_config(const Flags& flags, bool from_run_dir) {
    RunConfig c;
    if (!flags.config.empty()) {
        c = wkc::cli::load_config_file(flags.config);
    } else if (from_run_dir && !flags.out.empty() && fs::exists(fs::path(flags.out) / "config.json")) {
        c = wkc::cli::parse_config(wkc::cli::read_json_file((fs::path(flags.out) / "config.json").string()));
    } else if (!from_run_dir) {
        throw wkc::ConfigError("--config is required for this command");
    }
    if (flags.seed) {
        c.seed = *flags.seed;
    }
    if (!flags.out.empty()) {
        c.output_dir = flags.out;
    }
    if (flags.threads) {
        c.threads = *flags.threads;
    }
    return c;
}

void write_error(const std::string& command, const std::string& dir, int code, const std::string& message) {
    const nlohmann::json record{{"command", command},
                                {"category", wkc::cli::category_for(code)},
                                {"exit_code", code},
                                {"message", message}};
    std::cerr << record.dump() << '\n';
    std::error_code ec;
    if (!dir.empty() && (fs::is_directory(dir) || fs::create_directories(dir, ec))) {
        std::ofstream(fs::path(dir) / "error.json") << record.dump(2) << '\n';
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Wasserstein kernel clustering"};
    app.require_subcommand(1);
    Flags flags;
    const std::vector<std::pair<std::string, std::string>> commands{
        {"distances", "approximate pairwise Wasserstein distances"},
        {"kernel", "build the kernel and its kPCA feature map"},
        {"cluster", "k-medoids on the feature map"},
        {"tune", "Bayesian optimization of the kernel parameters"},
        {"validate", "validity indices for the clustering"},
        {"report", "plot-ready CSVs from a run directory"}};
    for (const auto& [name, help] : commands) {
        auto* sub = app.add_subcommand(name, help);
        sub->add_option("--config", flags.config, "JSON run configuration");
        sub->add_option("--seed", flags.seed, "master seed (overrides config)");
        sub->add_option("--out", flags.out, "run directory (overrides config output_dir)");
        sub->add_option("--threads", flags.threads, "worker threads (overrides config; WKC_THREADS otherwise)");
    }
    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }
    const std::string command = app.get_subcommands().front()->get_name();
    std::string dir = flags.out;
    try {
        const bool needs_dataset = command == "distances" || command == "tune";
        if (command == "report") {
            if (flags.out.empty()) {
                throw wkc::ConfigError("report needs --out pointing at a run directory");
            }
            if (!fs::is_directory(flags.out)) {
                throw wkc::ConfigError("run directory " + flags.out + " does not exist");
            }
            wkc::cli::RunDir run(flags.out);
            wkc::cli::RunLock lock(run.path());
            wkc::cli::cmd_report(run);
            run.write_manifest(command, nlohmann::json::object());
            return 0;
        }
        const RunConfig config = effective_config(flags, !needs_dataset);
        dir = config.output_dir;
        if (config.threads > 0) {
            wkc::set_thread_count(config.threads);
        }
        if (needs_dataset) {
            wkc::cli::validate_dataset_paths(config);
        }
        for (const auto& [name, path] : config.validity.compare) {
            if (!fs::is_regular_file(path)) {
                throw wkc::ConfigError("validity.compare." + name + " " + path + " does not exist");
            }
        }
        fs::create_directories(config.output_dir);
        wkc::cli::RunDir run(config.output_dir);
        wkc::cli::RunLock lock(run.path());
        fs::remove(run.path() / "error.json");
        auto snapshot = wkc::cli::to_json(config);
        snapshot.erase("threads");
        snapshot.erase("output_dir");
        if (needs_dataset) {
            run.write_json("config.json", snapshot);
        }
        if (command == "distances") {
            wkc::cli::cmd_distances(config, run);
        } else if (command == "kernel") {
            wkc::cli::cmd_kernel(config, run);
        } else if (command == "cluster") {
            wkc::cli::cmd_cluster(config, run);
        } else if (command == "tune") {
            wkc::cli::cmd_tune(config, run);
        } else {
            wkc::cli::cmd_validate(config, run);
        }
        run.write_manifest(command, snapshot);
        return 0;
    } catch (const std::exception& e) {
        const int code = wkc::cli::exit_code_for(e);
        write_error(command, dir, code, e.what());
        return code;
    }
}
