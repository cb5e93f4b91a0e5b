// End-to-end tests driving the installed command-line binary. The path to
// the binary is passed as argv[1] by CTest.

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace {

namespace fs = std::filesystem;

std::string g_cli;
fs::path g_tmp;

struct CmdResult {
    int exit_code = -1;
    std::string out;
    std::string err;
};

std::string read_all(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

CmdResult run_cli(const std::string& args, const std::string& env = "") {
    const fs::path out_f = g_tmp / "stdout.txt";
    const fs::path err_f = g_tmp / "stderr.txt";
    const std::string cmd = env + (env.empty() ? "" : " ") + "'" + g_cli + "' " +
                            args + " >'" + out_f.string() + "' 2>'" +
                            err_f.string() + "'";
    const int rc = std::system(cmd.c_str());
    CmdResult r;
    r.exit_code = rc < 0 ? rc : WEXITSTATUS(rc);
    r.out = read_all(out_f);
    r.err = read_all(err_f);
    return r;
}

// Byte-for-byte comparison of every regular file in two directories.
void expect_dirs_identical(const fs::path& a, const fs::path& b) {
    std::size_t files = 0;
    for (const auto& e : fs::directory_iterator(a)) {
        if (!e.is_regular_file()) continue;
        ++files;
        const fs::path other = b / e.path().filename();
        ASSERT_TRUE(fs::exists(other)) << other;
        EXPECT_EQ(read_all(e.path()), read_all(other)) << e.path().filename();
    }
    EXPECT_GT(files, 0u);
}

TEST(Cli, ListScenariosPrintsAllBuiltins) {
    const CmdResult r = run_cli("list-scenarios");
    EXPECT_EQ(r.exit_code, 0);
    for (const char* name : {"kt_set1", "kt_set2", "dv_set1", "dv_set2",
                             "dv_set3", "dv_set4", "bidir", "twist"})
        EXPECT_NE(r.out.find(name), std::string::npos) << name;
}

TEST(Cli, ExportSpecRoundTripsThroughFile) {
    const fs::path f = g_tmp / "kt2.scenario";
    const CmdResult w =
        run_cli("export-spec --scenario kt_set2 --out '" + f.string() + "'");
    ASSERT_EQ(w.exit_code, 0);
    const std::string text = read_all(f);
    EXPECT_NE(text.find("kind = keep_together"), std::string::npos);

    const CmdResult back = run_cli("export-spec --file '" + f.string() + "'");
    EXPECT_EQ(back.exit_code, 0);
    EXPECT_EQ(back.out, text);
}

TEST(Cli, ExportSpecAppliesOverrides) {
    const CmdResult r = run_cli(
        "export-spec --scenario kt_set2 --set horizon=3.5 --paths 123");
    EXPECT_EQ(r.exit_code, 0);
    EXPECT_NE(r.out.find("horizon = 3.5"), std::string::npos);
    EXPECT_NE(r.out.find("solver.paths = 123"), std::string::npos);
}

TEST(Cli, UnknownScenarioIsValidationError) {
    EXPECT_EQ(run_cli("export-spec --scenario nope").exit_code, 2);
    EXPECT_EQ(run_cli("run --scenario nope").exit_code, 2);
}

TEST(Cli, MissingScenarioFileIsIoError) {
    EXPECT_EQ(run_cli("run --file '" + (g_tmp / "absent.scenario").string() +
                      "'").exit_code, 4);
}

TEST(Cli, ConflictingOverridesAreValidationError) {
    const CmdResult r =
        run_cli("run --scenario kt_set2 --set tagged.lambda_cont=0 "
                "--set tagged.lambda_des=0");
    EXPECT_EQ(r.exit_code, 2);
    EXPECT_NE(r.err.find("tagged.lambda_cont"), std::string::npos);
}

TEST(Cli, NonConvergenceExitsThree) {
    const CmdResult r = run_cli(
        "run --scenario kt_set1 --paths 200 --steps 10 "
        "--set solver.max_iters=2 --out '" +
        (g_tmp / "noconv").string() + "'");
    EXPECT_EQ(r.exit_code, 3);
    EXPECT_NE(r.err.find("non-convergence"), std::string::npos);
    // Artifacts are still written for post-mortem inspection.
    EXPECT_TRUE(fs::exists(g_tmp / "noconv" / "diagnostics.json"));
}

TEST(Cli, RunWritesCompleteArtifactSet) {
    const fs::path dir = g_tmp / "run_kt2";
    const CmdResult r = run_cli(
        "run --scenario kt_set2 --paths 300 --steps 20 --out '" + dir.string() +
        "'");
    ASSERT_EQ(r.exit_code, 0) << r.err;
    EXPECT_NE(r.out.find("solver=lq"), std::string::npos);  // auto picks lq
    for (const char* f : {"scenario.txt", "paths.csv", "distance_to_mean.csv",
                          "speed_profile.csv", "diagnostics.json",
                          "density_y_0.txt", "density_y_10.txt",
                          "density_y_20.txt"})
        EXPECT_TRUE(fs::exists(dir / f)) << f;
    // Tagged-only scenario: no ordinary-crowd histograms.
    EXPECT_FALSE(fs::exists(dir / "density_x_0.txt"));

    // Histogram conservation: bin counts sum to the path count.
    std::ifstream in(dir / "density_y_0.txt");
    std::string line;
    std::getline(in, line);  // t ...
    std::getline(in, line);  // bins ...
    std::getline(in, line);  // bbox ...
    unsigned long long total = 0, c = 0;
    while (in >> c) total += c;
    EXPECT_EQ(total, 300u);
}

TEST(Cli, GameRunIsByteDeterministicAcrossThreadCounts) {
    const fs::path a = g_tmp / "det_a";
    const fs::path b = g_tmp / "det_b";
    const std::string args =
        "run --scenario bidir --paths 200 --steps 10 --solver lsmc --out '";
    const CmdResult ra = run_cli(args + a.string() + "'", "MFTG_THREADS=1");
    const CmdResult rb = run_cli(args + b.string() + "'", "MFTG_THREADS=3");
    // Small desk-scale run may or may not converge; determinism must hold
    // either way, and both invocations must agree on the exit code.
    EXPECT_EQ(ra.exit_code, rb.exit_code);
    expect_dirs_identical(a, b);
    EXPECT_TRUE(fs::exists(a / "density_x_0.txt"));
}

TEST(Cli, SeedChangesArtifacts) {
    const fs::path a = g_tmp / "seed_a";
    const fs::path b = g_tmp / "seed_b";
    const std::string args = "run --scenario kt_set2 --paths 200 --steps 10 ";
    ASSERT_EQ(run_cli(args + "--seed 1 --out '" + a.string() + "'").exit_code, 0);
    ASSERT_EQ(run_cli(args + "--seed 2 --out '" + b.string() + "'").exit_code, 0);
    EXPECT_NE(read_all(a / "paths.csv"), read_all(b / "paths.csv"));
}

TEST(Cli, LqSolverRejectsCoupledScenario) {
    EXPECT_EQ(run_cli("run --scenario bidir --solver lq").exit_code, 2);
}

TEST(Cli, VerifyConvergenceSuitePasses) {
    const CmdResult r = run_cli("verify convergence");
    EXPECT_EQ(r.exit_code, 0) << r.out << r.err;
    EXPECT_NE(r.out.find("\"pass\": true"), std::string::npos);
    EXPECT_NE(r.out.find("martingale_error_decreasing"), std::string::npos);
}

TEST(Cli, VerifyOraclesSuitePassesAtReducedScale) {
    const CmdResult r = run_cli("verify oracles --paths 2000 --steps 25");
    EXPECT_EQ(r.exit_code, 0) << r.out << r.err;
    EXPECT_NE(r.out.find("lsmc_vs_lq_mean_path_sup"), std::string::npos);
    EXPECT_NE(r.out.find("\"pass\": true"), std::string::npos);
}

} // namespace

int main(int argc, char** argv) {
    ::testing::InitGoogleTest(&argc, argv);
    if (argc < 2) {
        std::fprintf(stderr, "usage: cli_test <path-to-mftg-binary>\n");
        return 1;
    }
    g_cli = argv[1];
    g_tmp = fs::temp_directory_path() / "mftg_cli_test";
    std::error_code ec;
    fs::remove_all(g_tmp, ec);
    fs::create_directories(g_tmp);
    return RUN_ALL_TESTS();
}
