#include <gtest/gtest.h>

#include <nlohmann/json.hpp>

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "bdsde/cli.hpp"
#include "support.hpp"

using namespace bdsde;
namespace fs = std::filesystem;

namespace {

RunConfig parse(const std::string& text) {
    std::istringstream in(text);
    return parse_config(in);
}

fs::path scratch(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "bdsde_cli_test";
    fs::create_directories(dir);
    return dir / name;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string error_message(const std::function<void()>& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.what();
    }
    return {};
}

}  // namespace

TEST(Config, SectionsCommentsAndBareKeys) {
    const RunConfig cfg = parse(
        "# comment\n"
        "[problem]\nname = P2   ; trailing\n"
        "[run]\nstudy = rate\nn_list = 8, 16, 32\nM = 500\nb_reps = 3\nseed = 99\n"
        "[backend]\nkind = lsmc\ndegree = 2\nridge = 1e-8\n"
        "[picard]\ntol = 1e-10\nmax_iters = 7\n"
        "[output]\nout_path = x.csv\n");
    EXPECT_EQ(cfg.problem, "P2");
    EXPECT_EQ(cfg.study, Study::rate);
    EXPECT_EQ(cfg.n_list, (std::vector<int>{8, 16, 32}));
    EXPECT_EQ(cfg.samples, 500);
    EXPECT_EQ(cfg.b_reps, 3);
    EXPECT_EQ(cfg.seed, 99u);
    EXPECT_EQ(cfg.backend.kind, Backend::lsmc);
    EXPECT_EQ(cfg.backend.basis.degree, 2);
    EXPECT_EQ(cfg.backend.basis.ridge, 1e-8);
    EXPECT_EQ(cfg.picard.tol, 1e-10);
    EXPECT_EQ(cfg.picard.max_iters, 7);
    EXPECT_EQ(cfg.out_path, "x.csv");
}

TEST(Config, KeysBelongToTheirSection) {
    EXPECT_EQ(parse("threads = 2\n").threads, 2);
    EXPECT_BDSDE_ERROR(parse("[output]\nthreads = 2\n"), ErrorKind::configuration);
}

TEST(Config, ErrorsNameTheKey) {
    EXPECT_BDSDE_ERROR(parse("[run]\nsamples = 3\n"), ErrorKind::configuration);
    EXPECT_NE(error_message([] { parse("[run]\nsamples = 3\n"); }).find("run.samples"), std::string::npos);
    EXPECT_NE(error_message([] { parse("[run]\nM = lots\n"); }).find("run.M"), std::string::npos);
    EXPECT_NE(error_message([] { parse("[backend]\nkind = magic\n"); }).find("backend.kind"), std::string::npos);
    EXPECT_BDSDE_ERROR(parse("[run\n"), ErrorKind::configuration);
    EXPECT_BDSDE_ERROR(parse("just words\n"), ErrorKind::configuration);
    EXPECT_BDSDE_ERROR(load_config("/nonexistent/bdsde.ini"), ErrorKind::configuration);
}

TEST(Config, OverridesAndEcho) {
    RunConfig cfg = parse("[run]\nseed = 1\n");
    set_config_value(cfg, "seed", "77");
    set_config_value(cfg, "output.out_path", "y.csv");
    EXPECT_EQ(cfg.seed, 77u);
    EXPECT_EQ(cfg.out_path, "y.csv");
    ASSERT_EQ(cfg.echo.size(), 3u);
    EXPECT_EQ(cfg.echo[1], (std::pair<std::string, std::string>{"run.seed", "77"}));
}

TEST(Config, Validation) {
    auto check = [](const std::string& text) {
        const RunConfig cfg = parse(text);
        validate_config(cfg, resolve_problem(cfg));
    };
    EXPECT_NO_THROW(check("[problem]\nname = P2\n[run]\nstudy = rate\nn_list = 8,16,32\n"));
    EXPECT_BDSDE_ERROR(check("[problem]\nname = P2\n[run]\nstudy = rate\nn_list = 16,8,32\n"),
                       ErrorKind::configuration);
    EXPECT_BDSDE_ERROR(check("[problem]\nname = P2\n[run]\nstudy = rate\nn_list = 8,16\n"), ErrorKind::configuration);
    EXPECT_BDSDE_ERROR(check("[problem]\nname = GBM\n[run]\nstudy = scheme\n"), ErrorKind::configuration);
    EXPECT_NO_THROW(check("[problem]\nname = GBM\n[run]\nstudy = scheme\n[backend]\nkind = lsmc\n"));
    EXPECT_BDSDE_ERROR(check("[problem]\nname = P3\n[run]\nstudy = regularity\nn_list = 2,4,8\n"),
                       ErrorKind::configuration);
    EXPECT_BDSDE_ERROR(check("[problem]\nname = P3\n[run]\nstudy = euler\nn_list = 2,4,8\n"),
                       ErrorKind::configuration);
    EXPECT_BDSDE_ERROR(check("[problem]\nname = P2\n[run]\nn_list = 1\n"), ErrorKind::configuration);
    EXPECT_BDSDE_ERROR(check("[problem]\nname = nope\n"), ErrorKind::configuration);
    EXPECT_BDSDE_ERROR(check("[problem]\nname = P0\ndrift = 0, 1\n"), ErrorKind::configuration);
}

TEST(InlineProblem, FlagsAndTransition) {
    InlineProblem t;
    const ProblemSpec brownian = make_inline_problem(t);
    EXPECT_TRUE(brownian.flags.exact_backend_capable());
    EXPECT_EQ(brownian.transition, ForwardTransition::additive);
    t.drift = {0.0, 0.1};
    t.diffusion = {0.0, 0.5};
    const ProblemSpec gbm = make_inline_problem(t);
    EXPECT_FALSE(gbm.flags.diffusion_constant);
    EXPECT_EQ(gbm.transition, ForwardTransition::geometric);
    t.driver = {1.0};
    EXPECT_BDSDE_ERROR(make_inline_problem(t), ErrorKind::configuration);
}

TEST(InlineProblem, BrownianIdentityHasZeroError) {
    RunConfig cfg = parse("[problem]\nname = inline\nterminal = 0, 1\n[run]\nstudy = scheme\nn_list = 4\nM = 200\nb_reps = 2\n");
    const StudyResult res = run_study(cfg);
    ASSERT_EQ(res.rows.size(), 1u);
    EXPECT_LE(*res.rows[0].err_total, 1e-12);
}

TEST(Study, RateStudyRowShape) {
    RunConfig cfg = parse("[problem]\nname = P2\n[run]\nstudy = rate\nn_list = 8,16,32,64,128\nM = 1000\nb_reps = 3\n");
    const StudyResult res = run_study(cfg);
    ASSERT_EQ(res.rows.size(), 6u);
    for (int k = 0; k < 5; ++k) {
        EXPECT_EQ(res.rows[k].n, 8 << k);
        EXPECT_TRUE(res.rows[k].err_total && !res.rows[k].slope);
        EXPECT_EQ(res.rows[k].seed, 1234u);
        EXPECT_EQ(res.rows[k].backend, "exact");
    }
    EXPECT_FALSE(res.rows[5].n);
    ASSERT_TRUE(res.rows[5].slope);
    EXPECT_GT(*res.rows[5].slope, 0.2);
    ASSERT_TRUE(res.confirmation);
    EXPECT_TRUE(res.confirmation->passed);
}

TEST(Study, SchemeOnFineGridReference) {
    RunConfig cfg = parse("[problem]\nname = P3\n[run]\nstudy = scheme\nn_list = 4, 8\nM = 400\nb_reps = 2\n");
    const StudyResult res = run_study(cfg);
    ASSERT_EQ(res.rows.size(), 2u);
    EXPECT_GT(*res.rows[0].err_total, 0.0);
    EXPECT_LT(*res.rows[1].err_total, *res.rows[0].err_total);
    EXPECT_FALSE(res.confirmation);
}

TEST(Csv, Formatting) {
    CsvRow r;
    r.study = "rate";
    r.problem = "P2";
    r.n = 8;
    r.mesh = 0.125;
    r.samples = 10;
    r.b_reps = 2;
    r.seed = 5;
    r.backend = "exact";
    r.err_total = 0.1;
    r.slope = 1.0 / 3.0;
    const std::string csv = format_csv({r});
    EXPECT_EQ(csv, std::string(kCsvHeader) + "\nrate,P2,8,0.125,10,2,5,exact,,,0.10000000000000001,,0.33333333333333331,\n");
    EXPECT_EQ(manifest_path("out/a.csv"), "out/a.manifest.json");
    EXPECT_EQ(manifest_path("plain"), "plain.manifest.json");
}

TEST(Run, ExitStatusesAndOutputs) {
    RunConfig cfg = parse("[problem]\nname = P2\n[run]\nstudy = rate\nn_list = 8,16,32\nM = 300\nb_reps = 3\n");
    cfg.out_path = scratch("a/rate.csv").string();
    std::ostringstream log;
    ASSERT_EQ(run(cfg, log), 0) << log.str();
    const std::string first = slurp(cfg.out_path);
    const auto manifest = nlohmann::json::parse(slurp(manifest_path(cfg.out_path)));
    for (const char* key : {"config", "version", "started_at", "wall_seconds"}) EXPECT_TRUE(manifest.contains(key));
    EXPECT_EQ(manifest["config"]["effective"]["seed"], 1234);

    cfg.threads = 3;
    ASSERT_EQ(run(cfg, log), 0);
    EXPECT_EQ(slurp(cfg.out_path), first);

    RunConfig bad = parse("[problem]\nname = GBM\n[run]\nstudy = scheme\n");
    bad.out_path = scratch("bad.csv").string();
    EXPECT_EQ(run(bad, log), 2);

    RunConfig stiff = parse("[problem]\nname = P3\n[run]\nstudy = scheme\nn_list = 4\nM = 100\nb_reps = 1\n"
                            "[picard]\nmax_iters = 1\n");
    stiff.out_path = scratch("stiff.csv").string();
    EXPECT_EQ(run(stiff, log), 3);
    EXPECT_EQ(exit_status(Error(ErrorKind::conditioning, "x")), 3);
    EXPECT_EQ(exit_status(Error(ErrorKind::catalog, "x")), 2);
}

TEST(Oracle, P2ConfirmationPassesAndCatchesWrongSign) {
    const CatalogEntry p2 = builtin_problem("P2");
    const OracleConfirmation ok = confirm_oracle(p2, 1234, {});
    EXPECT_TRUE(ok.passed) << ok.rms_z0 << " " << ok.rms_y;
    EXPECT_EQ(ok.steps, 4096);

    CatalogEntry flipped = p2;
    flipped.oracle.y_true = [](double t, const Vector& w, const Vector& tail) {
        return w(0) * std::exp(-0.5 * tail(0) - 0.125 * (1.0 - t));
    };
    flipped.oracle.z_true = [](double t, const Vector&, const Vector& tail) {
        return Vector::Constant(1, std::exp(-0.5 * tail(0) - 0.125 * (1.0 - t)));
    };
    EXPECT_FALSE(confirm_oracle(flipped, 1234, {}).passed);
}

TEST(Oracle, P2SinglePathAtOrigin) {
    // One fixed (W, B) path on 4096 steps. With x0 = 0 the Y value is 0 on
    // both sides; the Z value carries the information.
    const CatalogEntry p2 = builtin_problem("P2");
    const Partition grid = make_partition(1.0, 4096);
    const PathBundle b = sample_bundle(grid, 1, 1, 1, 1234, 0);
    const SchemeSolution sol = backward_solve(p2.spec, grid, b, euler_paths(p2.spec, grid, b), {}, {});
    const OracleField truth = evaluate_oracle(p2.oracle, grid, b);
    EXPECT_LE(std::abs(sol.Y(0, 0) - truth.y(0, 0)), 2e-3);
    EXPECT_LE(std::abs(sol.Z[0](0, 0) - truth.z[0](0, 0)), 1e-2);
}

TEST(Parallel, RunsEveryIndexAndRethrowsLowest) {
    std::vector<int> hit(20, 0);
    parallel_for(20, 4, [&](int i) { hit[i] += 1; });
    EXPECT_EQ(hit, std::vector<int>(20, 1));
    try {
        parallel_for(8, 1, [](int i) {
            if (i >= 3) throw Error(ErrorKind::numeric, "rep " + std::to_string(i));
        });
        FAIL();
    } catch (const Error& e) {
        EXPECT_STREQ(e.what(), "rep 3");
    }
    try {
        parallel_for(8, 4, [](int i) {
            if (i == 2 || i == 6) throw Error(ErrorKind::numeric, "rep " + std::to_string(i));
        });
        FAIL();
    } catch (const Error& e) {
        EXPECT_STREQ(e.what(), "rep 2");
    }
}

TEST(Binary, RunSubcommand) {
    const char* exe = std::getenv("BDSDE_CLI");
    if (!exe) GTEST_SKIP() << "BDSDE_CLI not set";
    const fs::path cfg = scratch("cli.ini");
    std::ofstream(cfg) << "[problem]\nname = P0\n[run]\nstudy = scheme\nn_list = 8\nM = 100\nb_reps = 1\n";
    const fs::path out = scratch("cli_out.csv");
    const std::string cmd = std::string(exe) + " run " + cfg.string() + " --seed 7 --out " + out.string() + " 2>/dev/null";
    ASSERT_EQ(WEXITSTATUS(std::system(cmd.c_str())), 0);
    const std::string csv = slurp(out);
    EXPECT_NE(csv.find("scheme,P0,8,0.125,100,1,7,exact,0,0,0,,,0"), std::string::npos) << csv;

    std::ofstream(cfg) << "[problem]\nname = GBM\n[run]\nstudy = scheme\n";
    EXPECT_EQ(WEXITSTATUS(std::system(cmd.c_str())), 2);
    std::ofstream(cfg) << "[run]\nbogus = 1\n";
    EXPECT_EQ(WEXITSTATUS(std::system(cmd.c_str())), 2);
}
