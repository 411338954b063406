#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "stablab/cli_experiments.hpp"

using namespace stablab;

namespace {

// exit codes: 0 all checks pass, 1 a check failed or a numerical guard tripped, 2 bad input
int run_kind(const std::string& kind, const std::string& config, const std::string& out, std::optional<std::uint64_t> seed) {
    const auto cfg = cli::load_config(config, kind, seed);
    const auto m = cli::run(cfg, out);
    for (const auto& c : m.checks)
        std::printf("%-10s %s  value=%.6g  threshold=%.6g\n", c.verdict.c_str(), c.name.c_str(), c.value, c.threshold);
    std::printf("config_hash %s  wall %.2fs  artifacts %zu\n", m.config_hash.c_str(), m.wall_seconds, m.artifacts.size());
    return m.any_fail() ? 1 : 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"stable-operator Schauder laboratory"};
    app.require_subcommand(1);

    std::string config, out, manifest_a, manifest_b, diff_out;
    std::uint64_t seed = 0;
    unsigned threads = 1;
    std::string chosen;

    for (const auto& kind : cli::experiment_kinds()) {
        auto* sub = app.add_subcommand(kind, "run a '" + kind + "' experiment");
        sub->add_option("--config", config, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
        sub->add_option("--out", out, "output directory (overrides the config)");
        sub->add_option("--seed", seed, "seed (overrides the config)");
        sub->add_option("--threads", threads, "worker threads; inner modules run single-threaded")->check(CLI::PositiveNumber);
        sub->callback([&chosen, kind] { chosen = kind; });
    }
    auto* cmp = app.add_subcommand("compare", "diff two run manifests");
    cmp->add_option("manifest_a", manifest_a)->required()->check(CLI::ExistingFile);
    cmp->add_option("manifest_b", manifest_b)->required()->check(CLI::ExistingFile);
    cmp->add_option("--out", diff_out, "write the diff as JSON");
    cmp->callback([&chosen] { chosen = "compare"; });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (chosen == "compare") {
            const auto d = cli::compare(manifest_a, manifest_b);
            std::cout << d.table();
            if (!diff_out.empty()) {
                std::ofstream os(diff_out);
                if (!os) throw ValidationError("compare: cannot open " + diff_out);
                os << d.to_json().dump(2) << '\n';
            }
            return d.pass_flipped ? 1 : 0;
        }
        const bool seeded = app.get_subcommand(chosen)->count("--seed") > 0;
        return run_kind(chosen, config, out, seeded ? std::optional<std::uint64_t>(seed) : std::nullopt);
    } catch (const ValidationError& e) {
        std::fprintf(stderr, "validation error: %s\n", e.what());
        return 2;
    } catch (const NumericalGuard& e) {
        std::fprintf(stderr, "numerical guard: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
