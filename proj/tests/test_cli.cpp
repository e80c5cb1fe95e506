#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "cmalab/app.hpp"
#include "cmalab/config.hpp"
#include "cmalab/error.hpp"
#include "cmalab/verify.hpp"

using namespace cmalab;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
    std::ifstream is(p);
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

fs::path scratch(const std::string& name) {
    auto p = fs::temp_directory_path() / ("cmalab_test_" + name);
    fs::remove_all(p);
    return p;
}

std::string error_of(const std::string& text) {
    try {
        parse_config(text);
    } catch (const ConfigError& e) {
        return e.what();
    }
    return "";
}

std::map<std::string, bool> verdicts(const VerifyReport& r) {
    std::map<std::string, bool> m;
    for (const auto& it : r.items) m[it.module + "/" + it.property] = it.pass;
    return m;
}

}  // namespace

TEST(Config, ParsesDocumentedExample) {
    RunConfig c = parse_config("n = 1\nN = 1024\nsubcommand = eigen");
    EXPECT_EQ(c.n, 1);
    EXPECT_EQ(c.N, 1024);
    EXPECT_EQ(c.subcommand, Subcommand::eigen);
}

TEST(Config, CommentsAndBlankLines) {
    RunConfig c = parse_config("# header\n\n  n = 2   # trailing\nmu_p = 4\nm_levels = 4, 8, 16\n");
    EXPECT_EQ(c.n, 2);
    EXPECT_EQ(c.mu_p, 4.0);
    EXPECT_EQ(c.m_levels, (std::vector<double>{4.0, 8.0, 16.0}));
}

TEST(Config, GridBelowMinimum) {
    std::string e = error_of("N = 4");
    EXPECT_NE(e.find("N below minimum 16"), std::string::npos) << e;
}

TEST(Config, InfiniteMuSelectsLogBranch) {
    RunConfig c = parse_config("mu_p = inf");
    EXPECT_EQ(c.mu_p, 0.0);
    EXPECT_TRUE(mu_from_config(c).is_log());
    RunConfig d = parse_config("mu_p = 4");
    EXPECT_FALSE(mu_from_config(d).is_log());
}

TEST(Config, UnknownKeyCarriesLineNumber) {
    try {
        parse_config("n = 1\nfoo = 3\n");
        FAIL() << "expected ConfigError";
    } catch (const ConfigError& e) {
        EXPECT_EQ(e.line(), 2);
        EXPECT_NE(std::string(e.what()).find("unknown key 'foo'"), std::string::npos);
    }
}

TEST(Config, RangeErrorsNameTheKey) {
    for (auto [text, key] : std::vector<std::pair<std::string, std::string>>{
             {"mu_p = 1.5", "mu_p"}, {"mu_eps = 0.2", "mu_eps"}, {"n = 0", "n"}, {"tol = -1", "tol"},
             {"clustering = random", "clustering"}, {"dt = 2\ndt_max = 1", "dt"}}) {
        std::string e = error_of(text);
        EXPECT_NE(e.find(key), std::string::npos) << text << " -> " << e;
    }
    EXPECT_NE(error_of("n 1").find("expected 'key = value'"), std::string::npos);
    EXPECT_NE(error_of("nonlinearity = table").find("table_file"), std::string::npos);
}

TEST(Config, TextRoundTrip) {
    RunConfig c = parse_config("subcommand = flow\nn = 2\nN = 300\nmu_p = 4\nforcing = constant\n"
                               "forcing_constant = 0.25\nt_end = 3.5\nseed = 99\nm_levels = 2, 6\n");
    std::string t = config_to_text(c);
    RunConfig d = parse_config(t);
    EXPECT_EQ(config_to_text(d), t);
    EXPECT_EQ(d.seed, 99u);
    EXPECT_EQ(d.forcing_constant, 0.25);
}

TEST(Config, FnvVectors) {
    EXPECT_EQ(fnv1a_hex(""), "cbf29ce484222325");
    EXPECT_EQ(fnv1a_hex("a"), "af63dc4c8601ec8c");
    EXPECT_EQ(fnv1a_hex("foobar"), "85944171f73967e8");
}

TEST(Verify, DefaultConfigPasses) {
    RunConfig c;
    auto r = verify_suite(c);
    EXPECT_TRUE(r.all_pass()) << r.to_json();
    auto j = nlohmann::json::parse(r.to_json());
    EXPECT_TRUE(j["all_pass"].get<bool>());
    std::set<std::string> modules;
    for (const auto& p : j["properties"]) {
        modules.insert(p["module"].get<std::string>());
        EXPECT_TRUE(p.contains("slack"));
    }
    for (const char* m : {"radial_domain", "functionals", "mu_construction", "ma_solvers", "mu_flow",
                          "variational_drivers", "cli"})
        EXPECT_TRUE(modules.count(m)) << m;
}

TEST(Verify, TamperedMuFailsOnlyTheCertificate) {
    RunConfig c;
    c.mu_fault = 0.05;
    auto r = verify_suite(c);
    EXPECT_FALSE(r.all_pass());
    for (const auto& it : r.items)
        if (!it.pass) EXPECT_EQ(it.module, "mu_construction") << it.property;
}

TEST(Verify, VerdictsAreSeedRobust) {
    RunConfig c;
    auto base = verdicts(verify_suite(c));
    for (std::uint64_t seed : {2u, 3u}) {
        c.seed = seed;
        EXPECT_EQ(verdicts(verify_suite(c)), base) << "seed " << seed;
    }
}

TEST(RunCommand, OutputsEmbedConfigAndHash) {
    auto dir = scratch("solve");
    RunConfig c = parse_config("subcommand = solve\nn = 2\nN = 256\ndensity = one_plus_s\noutput = " + dir.string());
    std::ostringstream sink;
    EXPECT_EQ(run_command(c, sink), kExitOk);
    const std::string hash = fnv1a_hex(config_to_text(c));
    auto rep = nlohmann::json::parse(slurp(dir / "report.json"));
    EXPECT_EQ(rep["config_hash"].get<std::string>(), hash);
    EXPECT_EQ(rep["config"].get<std::string>(), config_to_text(c));
    EXPECT_EQ(rep["seed"].get<std::uint64_t>(), c.seed);
    std::string csv = slurp(dir / "solution.csv");
    EXPECT_EQ(csv.rfind("# config_hash = " + hash, 0), 0u);
    EXPECT_NE(csv.find("# density = one_plus_s"), std::string::npos);
    fs::remove_all(dir);
}

TEST(RunCommand, RerunIsBitForBit) {
    auto dir = scratch("flow");
    RunConfig c = parse_config("subcommand = flow\nN = 256\nmu_p = 4\nt_end = 0.5\noutput = " + dir.string());
    std::ostringstream sink;
    ASSERT_EQ(run_command(c, sink), kExitOk);
    std::string traj = slurp(dir / "trajectory.csv"), sol = slurp(dir / "solution.csv"), rep = slurp(dir / "report.json");
    ASSERT_EQ(run_command(c, sink), kExitOk);
    EXPECT_EQ(slurp(dir / "trajectory.csv"), traj);
    EXPECT_EQ(slurp(dir / "solution.csv"), sol);
    EXPECT_EQ(slurp(dir / "report.json"), rep);
    fs::remove_all(dir);
}

TEST(RunCommand, TableNonlinearity) {
    auto dir = scratch("table");
    fs::create_directories(dir);
    {
        std::ofstream os(dir / "psi.csv");
        os << "# psi^n samples\nx,value\n-10,5\n-2,3\n0,1\n";
    }
    Nonlinearity nl = read_table_nonlinearity((dir / "psi.csv").string(), 1);
    EXPECT_NEAR(nl.rhs(0.3, 0.0), 1.0, 1e-15);
    EXPECT_NEAR(nl.rhs(0.3, -1.0), 2.0, 1e-15);
    EXPECT_NEAR(nl.rhs(0.3, -6.0), 4.0, 1e-15);
    EXPECT_NEAR(nl.rhs_dx(0.3, -1.0), -1.0, 1e-15);
    {
        std::ofstream os(dir / "bad.csv");
        os << "x,value\n-2,3\n-1,2\n";
    }
    EXPECT_THROW(read_table_nonlinearity((dir / "bad.csv").string(), 1), InvalidArgument);
    fs::remove_all(dir);
}
