#include <gtest/gtest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "stablab/cli_experiments.hpp"

using namespace stablab;
using cli::json;
namespace fs = std::filesystem;

namespace {

std::string scratch(const std::string& name) {
    const fs::path p = fs::path(testing::TempDir()) / ("stablab_cli_" + name);
    fs::remove_all(p);
    return p.string();
}

std::string slurp(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    std::stringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

json kernel_config(std::size_t n = 0) {
    json j = {{"kind", "kernel"},
              {"seed", 3},
              {"model", {{"kind", "IsotropicFractional"}, {"alpha", 0.5}, {"dim", 1}}},
              {"time", {{"t", {1.0}}}}};
    if (n) j["grid"] = {{"n", n}};
    return j;
}

json viscosity_config(double eps) {
    return {{"kind", "solve"},
            {"model", {{"kind", "IsotropicFractional"}, {"alpha", 0.7}}},
            {"drift", {{"kind", "holder_bump"}, {"K0", 1}, {"beta", 0.5}}},
            {"grid", {{"n", 256}}},
            {"params", {{"beta", 0.5}, {"solver", "viscosity"}, {"eps_ladder", {eps}}, {"slices", 16}, {"time_step", 2e-3}}},
            {"time", {{"T", 0.25}}}};
}

std::string write_json(const json& j, const std::string& name) {
    const std::string p = scratch(name) + ".json";
    std::ofstream(p) << j.dump(2);
    return p;
}

int shell(const std::string& cmd) {
    const int rc = std::system((cmd + " > /dev/null 2>&1").c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string error_of(const json& j) {
    try {
        cli::parse_config(j);
    } catch (const ValidationError& e) {
        return e.what();
    }
    return "";
}

}  // namespace

TEST(Config, UnknownAndMissingKeysCarryThePath) {
    json j = kernel_config();
    j["model"]["alpah"] = 0.5;
    EXPECT_EQ(error_of(j), "model.alpah: unknown key");
    j = kernel_config();
    j["colour"] = "red";
    EXPECT_EQ(error_of(j), "colour: unknown key");
    j = kernel_config();
    j["model"].erase("alpha");
    EXPECT_EQ(error_of(j), "model.alpha: missing");
    j = kernel_config();
    j["grid"] = {{"n", 100}};
    EXPECT_EQ(error_of(j), "grid.n: must be a power of two >= 64");
    j = kernel_config();
    j["drift"] = {{"kind", "zero"}};
    EXPECT_EQ(error_of(j), "drift: not used by kind 'kernel'");
    j = kernel_config();
    j["model"]["kind"] = "Gaussian";
    EXPECT_NE(error_of(j).find("model.kind"), std::string::npos);
    j = kernel_config();
    j["model"]["alpha"] = 1.5;
    EXPECT_NE(error_of(j).find("model"), std::string::npos) << error_of(j);
    j = viscosity_config(0.01);
    j["drift"]["K1"] = 2;
    EXPECT_EQ(error_of(j), "drift.K1: unknown key");
}

TEST(Config, SolverKindsEnforceAlphaPlusBeta) {
    json j = viscosity_config(0.01);
    j["params"]["beta"] = 0.3;
    EXPECT_NE(error_of(j).find("alpha + beta must exceed 1"), std::string::npos);
    j = viscosity_config(0.01);
    j["params"]["offsets"] = {0, 10};
    j["kind"] = "schauder";
    j["params"].erase("solver");
    j["params"].erase("eps_ladder");
    EXPECT_NE(error_of(j).find("params.offsets"), std::string::npos);
    EXPECT_THROW(cli::parse_config(kernel_config(), "pbeta"), ValidationError);
    json nokind = kernel_config();
    nokind.erase("kind");
    EXPECT_EQ(cli::parse_config(nokind, "kernel").kind, "kernel");
    EXPECT_THROW(cli::parse_config(nokind), ValidationError);
}

TEST(Config, HashIgnoresOutputButNotSeed) {
    json a = kernel_config();
    json b = a;
    b["output"] = "elsewhere";
    EXPECT_EQ(cli::parse_config(a).hash(), cli::parse_config(b).hash());
    b["seed"] = 4;
    EXPECT_NE(cli::parse_config(a).hash(), cli::parse_config(b).hash());
    EXPECT_EQ(cli::hex64(cli::fnv1a("")), "cbf29ce484222325");
    EXPECT_EQ(cli::hex64(cli::fnv1a("a")), "af63dc4c8601ec8c");
}

TEST(Run, KernelManifestArtifactsAndDeterminism) {
    const auto c = cli::parse_config(kernel_config());
    const std::string d1 = scratch("kernel1"), d2 = scratch("kernel2");
    const auto m = cli::run(c, d1);
    cli::run(c, d2);
    ASSERT_EQ(m.checks.size(), 1u);
    EXPECT_EQ(m.checks[0].verdict, "PASS");
    EXPECT_FALSE(m.any_fail());
    auto listed = [&](const std::string& name) {
        return std::find(m.artifacts.begin(), m.artifacts.end(), name) != m.artifacts.end();
    };
    EXPECT_TRUE(listed("density_t1.bin"));
    EXPECT_TRUE(listed("density_t1_radial.csv"));
    EXPECT_TRUE(listed("density_profiles.svg"));
    EXPECT_TRUE(listed("timing.json"));
    std::size_t files = 0;
    for (const auto& e : fs::directory_iterator(d1)) {
        const std::string n = e.path().filename().string();
        if (n == "manifest.json") continue;
        EXPECT_TRUE(listed(n)) << n << " emitted but not listed";
        ++files;
    }
    EXPECT_EQ(files, m.artifacts.size());
    EXPECT_FALSE(fs::exists(fs::path(d1) / ".stablab.lock"));
    for (const auto& a : m.artifacts) {
        if (a == "timing.json") continue;
        EXPECT_EQ(slurp(d1 + "/" + a), slurp(d2 + "/" + a)) << a;
    }
    EXPECT_EQ(slurp(d1 + "/manifest.json"), slurp(d2 + "/manifest.json"));
    EXPECT_EQ(slurp(d1 + "/density_profiles.svg").rfind("<svg", 0), 0u);
    const auto back = cli::read_manifest(d1 + "/manifest.json");
    EXPECT_EQ(back.config_hash, m.config_hash);
    EXPECT_EQ(read_density(d1 + "/density_t1.bin").grid.n, 4096u);
}

TEST(Run, CylindricalMomentDiverges) {
    const json j = {{"kind", "pbeta"},
                    {"model", {{"kind", "Cylindrical"}, {"alpha", 0.6}, {"dim", 2}}},
                    {"params", {{"beta", 0.6}}}};
    const auto m = cli::run(cli::parse_config(j), scratch("pbeta"));
    ASSERT_EQ(m.checks.size(), 1u);
    EXPECT_EQ(m.checks[0].verdict, "DIVERGENT");
    EXPECT_FALSE(m.any_fail());
}

TEST(Run, OutputDirectoryIsLocked) {
    const std::string d = scratch("locked");
    fs::create_directories(d);
    std::ofstream(d + "/.stablab.lock") << "";
    EXPECT_THROW(cli::run(cli::parse_config(kernel_config()), d), ValidationError);
}

TEST(Run, NumericalGuardNamesTheScenario) {
    json j = viscosity_config(0.01);
    j["drift"] = {{"kind", "shifted_sin"}, {"offset", 1e4}, {"amplitude", 1}};
    try {
        cli::run(cli::parse_config(j), scratch("guard"));
        FAIL() << "expected a CFL guard";
    } catch (const NumericalGuard& e) {
        EXPECT_NE(std::string(e.what()).find("scenario 'solve/viscosity/eps=0.01'"), std::string::npos) << e.what();
    }
}

TEST(Compare, IdenticalRefinedAndIncompatible) {
    const std::string a = scratch("cmp_a"), b = scratch("cmp_b"), fine = scratch("cmp_fine");
    cli::run(cli::parse_config(kernel_config(4096)), a);
    cli::run(cli::parse_config(kernel_config(4096)), b);
    cli::run(cli::parse_config(kernel_config(8192)), fine);
    const auto same = cli::compare(a + "/manifest.json", b + "/manifest.json");
    EXPECT_TRUE(same.empty());
    EXPECT_FALSE(same.pass_flipped);
    const auto ref = cli::compare(a + "/manifest.json", fine + "/manifest.json");
    bool listed = false;
    for (const auto& r : ref.metrics)
        if (r.name == "normalization_error_t1") {
            listed = true;
            EXPECT_LE(std::abs(r.delta), 1e-3);
        }
    EXPECT_TRUE(listed);
    EXPECT_FALSE(ref.pass_flipped);
    const std::string p = scratch("cmp_pbeta");
    cli::run(cli::parse_config(json{{"kind", "pbeta"},
                                    {"model", {{"kind", "Cylindrical"}, {"alpha", 0.6}, {"dim", 2}}},
                                    {"params", {{"beta", 0.6}}}}),
             p);
    EXPECT_THROW(cli::compare(a + "/manifest.json", p + "/manifest.json"), ValidationError);
}

TEST(Compare, PassFlipIsReported) {
    const std::string a = scratch("flip_a"), b = scratch("flip_b");
    cli::run(cli::parse_config(kernel_config()), a);
    json strict = kernel_config();
    strict["tolerances"] = {{"normalization", 1e-15}};
    const auto m = cli::run(cli::parse_config(strict), b);
    EXPECT_TRUE(m.any_fail());
    const auto d = cli::compare(a + "/manifest.json", b + "/manifest.json");
    EXPECT_TRUE(d.pass_flipped);
    ASSERT_EQ(d.checks.size(), 1u);
    EXPECT_EQ(d.checks[0].b, "FAIL");
    EXPECT_FALSE(cli::compare(b + "/manifest.json", a + "/manifest.json").pass_flipped);
}

TEST(Compare, ViscosityLevelsDifferBySupNorm) {
    const std::string a = scratch("eps02"), b = scratch("eps01");
    cli::run(cli::parse_config(viscosity_config(0.02)), a);
    cli::run(cli::parse_config(viscosity_config(0.01)), b);
    const auto d = cli::compare(a + "/manifest.json", b + "/manifest.json");
    ASSERT_TRUE(d.solution_sup_delta.has_value());
    EXPECT_GT(*d.solution_sup_delta, 0);
    EXPECT_LE(*d.solution_sup_delta, 1e-2);
}

TEST(Binary, ExitCodes) {
    const std::string exe = STABLAB_CLI_PATH;
    const std::string ok = write_json(kernel_config(), "bin_ok");
    const std::string out = scratch("bin_out");
    EXPECT_EQ(shell(exe + " kernel --config " + ok + " --out " + out), 0);
    EXPECT_TRUE(fs::exists(out + "/manifest.json"));
    EXPECT_EQ(shell(exe + " compare " + out + "/manifest.json " + out + "/manifest.json"), 0);

    json bad = kernel_config();
    bad["model"]["alpah"] = 1;
    EXPECT_EQ(shell(exe + " kernel --config " + write_json(bad, "bin_bad") + " --out " + scratch("bin_bad_out")), 2);
    EXPECT_EQ(shell(exe + " pbeta --config " + ok + " --out " + scratch("bin_kind")), 2);
    EXPECT_EQ(shell(exe + " kernel"), 2);
    EXPECT_EQ(shell(exe + " kernel --config " + ok + " --threads 0"), 2);

    json strict = kernel_config();
    strict["tolerances"] = {{"normalization", 1e-15}};
    const std::string fail_out = scratch("bin_fail_out");
    EXPECT_EQ(shell(exe + " kernel --config " + write_json(strict, "bin_fail") + " --out " + fail_out), 1);
    EXPECT_EQ(shell(exe + " compare " + out + "/manifest.json " + fail_out + "/manifest.json"), 1);

    // --seed overrides the config and enters the hash
    const std::string s1 = scratch("bin_seed");
    EXPECT_EQ(shell(exe + " kernel --config " + ok + " --out " + s1 + " --seed 9"), 0);
    EXPECT_EQ(cli::read_manifest(s1 + "/manifest.json").seed, 9u);
    EXPECT_NE(cli::read_manifest(s1 + "/manifest.json").config_hash, cli::read_manifest(out + "/manifest.json").config_hash);
}
