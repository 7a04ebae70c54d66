#include "commands.hpp"

#include "CLI11.hpp"

#include <iostream>

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;
constexpr int kExitIo = 4;

} // namespace

int main(int argc, char** argv) {
    using namespace vecchia;
    CLI::App app{"Vecchia and composite likelihood inference for spatial Gaussian and max-stable processes"};
    app.require_subcommand(1, 1);
    app.set_version_flag("--version", cli::kVersion);

    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> threads;
    std::string out = ".";
    bool verbose = false;
    const std::vector<std::pair<std::string, std::string>> help{
        {"simulate", "simulate replicates from a model on a site set"},
        {"fit", "maximise a full, composite or Vecchia likelihood"},
        {"are", "asymptotic relative efficiency of likelihood schemes (Gaussian)"},
        {"score", "cross-validated negative conditional log-score of a fit"},
        {"diag", "binned empirical and fitted extremal coefficients"},
        {"bench", "time objective evaluations over grid sizes and orders"}};
    for (const auto& [name, desc] : help) {
        auto* sub = app.add_subcommand(name, desc);
        sub->add_option("--config", config_path, "JSON run configuration")->required();
        sub->add_option("--seed", seed, "random seed (overrides the config)");
        sub->add_option("--threads", threads, "worker threads (default: available parallelism)")
            ->check(CLI::PositiveNumber);
        sub->add_option("--out", out, "output directory")->capture_default_str();
        sub->add_flag("--verbose", verbose, "progress messages on stderr");
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kExitConfig;
    }

    cli::RunContext ctx;
    ctx.command = app.get_subcommands().front()->get_name();
    ctx.verbose = verbose;
    ctx.out = out;
    try {
        const cli::fs::path cfg_path(config_path);
        ctx.config = cli::load_config(cfg_path);
        ctx.base = cli::fs::absolute(cfg_path).parent_path();
        if (seed) ctx.seed = *seed;
        else if (ctx.config.contains("seed")) ctx.seed = cli::parse_seed(ctx.config.at("seed"), "seed");
        if (threads) ctx.threads = *threads;
        else if (ctx.config.contains("threads")) ctx.threads = cli::get_as<unsigned>(ctx.config.at("threads"), "threads");
        else ctx.threads = default_threads();
        require(ctx.threads >= 1, "threads must be at least 1");
        return cli::dispatch(ctx);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const IoError& e) {
        std::cerr << "I/O error: " << e.what() << '\n';
        return kExitIo;
    } catch (const NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << '\n';
        return kExitNumeric;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "I/O error: " << e.what() << '\n';
        return kExitIo;
    } catch (const std::exception& e) {
        std::cerr << "numeric failure: " << e.what() << '\n';
        return kExitNumeric;
    }
}
