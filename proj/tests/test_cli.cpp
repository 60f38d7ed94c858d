#include <gtest/gtest.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "dsbf/cli.hpp"
#include "dsbf/error.hpp"
#include "dsbf/runspec.hpp"

using namespace dsbf;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("dsbf_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path write_spec(const fs::path& dir, const std::string& text) {
  const fs::path p = dir / "run.spec";
  std::ofstream(p) << text;
  return p;
}

int cli(const std::vector<std::string>& args, std::string* out_text = nullptr, std::string* err_text = nullptr) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  if (out_text) *out_text = out.str();
  if (err_text) *err_text = err.str();
  return code;
}

const char* kSmallTrain =
    "seed = 3\n"
    "m_iters = 3\n"
    "n_iters = 2\n"
    "hidden_dim = 8\n"
    "feat_dim = 8\n"
    "bottleneck_dim = 4\n"
    "toy.n = 80\n";

}  // namespace

TEST(RunSpec, ParsesValuesAndComments) {
  const RunSpec s = RunSpec::parse(
      "# header\nseed = 12  # trailing\nlambda=0.5\n\ntheory.phi.0 = 1, 0.3; 0.2, 1\ntoy.rotations = 0, 30\n"
      "add_cl_to_stage2 = true\ntoy.unlabeled =\n",
      "/base");
  EXPECT_EQ(s.get_u64("seed", 0), 12u);
  EXPECT_EQ(s.get_double("lambda", 0), 0.5);
  EXPECT_EQ(s.get_matrix("theory.phi.0", Matrix()), (Matrix{{1, 0.3}, {0.2, 1}}));
  EXPECT_EQ(s.get_doubles("toy.rotations", {}), (std::vector<double>{0, 30}));
  EXPECT_TRUE(s.get_bool("add_cl_to_stage2", false));
  EXPECT_TRUE(s.get_sizes("toy.unlabeled", {1}).empty());
  EXPECT_EQ(s.get_double("gamma", 2.5), 2.5);
}

TEST(RunSpec, RejectsUnknownAndDuplicateKeys) {
  try {
    RunSpec::parse("seed = 1\nlamdba = 2\n");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos) << e.what();
  }
  EXPECT_THROW(RunSpec::parse("seed = 1\nseed = 2\n"), ConfigError);
  EXPECT_THROW(RunSpec::parse("no equals sign\n"), ConfigError);
  EXPECT_THROW(RunSpec::parse("seed = abc\n").get_u64("seed", 0), ConfigError);
  EXPECT_THROW(RunSpec::parse("theory.phi.0 = 1, 2; 3\n").get_matrix("theory.phi.0", Matrix()), ConfigError);
}

TEST(RunSpec, PathsResolveAgainstSpecDir) {
  const RunSpec s = RunSpec::parse("data.labeled = a/b.csv\ndata.target = /abs/t.csv\n", "/specs/here");
  EXPECT_EQ(s.get_path("data.labeled", ""), fs::path("/specs/here/a/b.csv"));
  EXPECT_EQ(s.get_path("data.target", ""), fs::path("/abs/t.csv"));
}

TEST(RunSpec, BuildsConfigs) {
  const RunSpec s = RunSpec::parse("mode = cdg\nlr = 0.1\nper_class = 3\ntheory.preset = degenerate\ntheory.reps = 7\n");
  const TrainConfig cfg = train_config_from(s);
  EXPECT_EQ(cfg.mode, TrainMode::cdg);
  EXPECT_EQ(cfg.sgd.learning_rate, 0.1);
  EXPECT_EQ(cfg.per_class, 3u);
  const TheoryPlan plan = theory_plan_from(s);
  EXPECT_EQ(plan.reps, 7u);
  for (const auto& e : plan.spec.eta) EXPECT_EQ(e, Matrix(2, 2));
  EXPECT_THROW(train_config_from(RunSpec::parse("mode = both\n")), ConfigError);
}

TEST(Cli, OutputDirResolution) {
  ::unsetenv(kOutputRootEnv);
  EXPECT_EQ(resolve_output_dir(std::string("x/y"), std::string("z"), "/spec"), fs::path("x/y"));
  EXPECT_EQ(resolve_output_dir(std::nullopt, std::string("z"), "/spec"), fs::path("/spec/z"));
  EXPECT_EQ(resolve_output_dir(std::nullopt, std::nullopt, "/spec"), fs::path("/spec/out"));
  EXPECT_EQ(resolve_output_dir(std::nullopt, std::string("/abs"), "/spec"), fs::path("/abs"));
  ::setenv(kOutputRootEnv, "/root_env", 1);
  EXPECT_EQ(resolve_output_dir(std::nullopt, std::string("z"), "/spec"), fs::path("/root_env/z"));
  EXPECT_EQ(resolve_output_dir(std::nullopt, std::string("/abs"), "/spec"), fs::path("/abs"));
  EXPECT_EQ(resolve_output_dir(std::string("cli"), std::string("z"), "/spec"), fs::path("cli"));
  ::unsetenv(kOutputRootEnv);
}

TEST(Cli, ExitCodes) {
  const fs::path dir = scratch("codes");
  EXPECT_EQ(cli({}), kExitConfig);
  EXPECT_EQ(cli({"bogus"}), kExitConfig);
  EXPECT_EQ(cli({"train", "--spec", (dir / "missing.spec").string()}), kExitIo);
  EXPECT_EQ(cli({"train", "--spec", write_spec(dir, "nonsense_key = 1\n").string()}), kExitConfig);
  EXPECT_EQ(cli({"gen", "--out", "/proc/dsbf_cannot_write"}), kExitIo);
  std::string err;
  const fs::path bad = write_spec(dir, std::string(kSmallTrain) + "toy.unlabeled =\n");
  EXPECT_EQ(cli({"train", "--spec", bad.string(), "--out", (dir / "o").string()}, nullptr, &err), kExitConfig);
  EXPECT_NE(err.find("K - 1 = 0"), std::string::npos) << err;
  EXPECT_EQ(cli({"gradcheck", "--seed", "1", "--spec", write_spec(dir, "gradcheck.seeds = 1\n").string(), "--corrupt", "bf"}),
            kExitNumerical);
}

TEST(Cli, GenIsIdempotent) {
  const fs::path a = scratch("gen_a"), b = scratch("gen_b");
  ASSERT_EQ(cli({"gen", "--seed", "4", "--out", a.string(), "--quiet"}), kExitOk);
  ASSERT_EQ(cli({"gen", "--seed", "4", "--out", b.string(), "--quiet"}), kExitOk);
  for (const char* f : {"domain_0.csv", "domain_1.csv", "domain_2.csv", "toy_spec.json"}) {
    ASSERT_TRUE(fs::exists(a / f)) << f;
    EXPECT_EQ(slurp(a / f), slurp(b / f)) << f;
  }
}

TEST(Cli, TrainRerunAndFileInputsAgree) {
  const fs::path dir = scratch("train");
  const fs::path spec = write_spec(dir, kSmallTrain);
  ASSERT_EQ(cli({"train", "--spec", spec.string(), "--out", (dir / "r1").string(), "--quiet"}), kExitOk);
  ASSERT_EQ(cli({"train", "--spec", spec.string(), "--out", (dir / "r2").string(), "--quiet"}), kExitOk);
  EXPECT_EQ(slurp(dir / "r1/metrics.csv"), slurp(dir / "r2/metrics.csv"));
  EXPECT_EQ(slurp(dir / "r1/model.ckpt"), slurp(dir / "r2/model.ckpt"));
  EXPECT_NE(slurp(dir / "r1/summary.json").find("\"config_echo\""), std::string::npos);

  // the generated CSVs carry exactly the data train builds in memory
  ASSERT_EQ(cli({"gen", "--spec", spec.string(), "--out", (dir / "data").string(), "--quiet"}), kExitOk);
  const fs::path files = write_spec(dir, std::string(kSmallTrain) +
                                             "data.labeled = data/domain_0.csv\n"
                                             "data.unlabeled = data/domain_1.csv\n"
                                             "data.target = data/domain_2.csv\n");
  ASSERT_EQ(cli({"train", "--spec", files.string(), "--out", (dir / "r3").string(), "--quiet"}), kExitOk);
  EXPECT_EQ(slurp(dir / "r1/metrics.csv"), slurp(dir / "r3/metrics.csv"));
}

TEST(Cli, SpecOutputHonoursEnvRoot) {
  const fs::path dir = scratch("env");
  const fs::path root = scratch("env_root");
  const fs::path spec = write_spec(dir, "out = generated\ntoy.n = 10\n");
  ::setenv(kOutputRootEnv, root.c_str(), 1);
  const int code = cli({"gen", "--spec", spec.string(), "--quiet"});
  ::unsetenv(kOutputRootEnv);
  ASSERT_EQ(code, kExitOk);
  EXPECT_TRUE(fs::exists(root / "generated/domain_0.csv"));
  EXPECT_FALSE(fs::exists(dir / "generated"));
}

TEST(Cli, TheoryAndSweepWriteArtifacts) {
  const fs::path dir = scratch("theory");
  const fs::path spec = write_spec(dir, std::string(kSmallTrain) +
                                            "theory.n_grid = 100, 400\ntheory.reps = 5\n"
                                            "sweep.lambdas = 0.5, 1\nsweep.gammas = 0.5, 1\n");
  std::string out;
  ASSERT_EQ(cli({"theory", "--spec", spec.string(), "--out", (dir / "t").string()}, &out), kExitOk);
  EXPECT_TRUE(fs::exists(dir / "t/rate.csv"));
  EXPECT_TRUE(fs::exists(dir / "t/theory_summary.json"));
  EXPECT_NE(out.find("slope "), std::string::npos);
  ASSERT_EQ(cli({"sweep", "--spec", spec.string(), "--out", (dir / "s").string(), "--quiet"}), kExitOk);
  const std::string csv = slurp(dir / "s/sweep.csv");
  EXPECT_EQ(csv.rfind("lambda,gamma,status,acc_labeled,acc_unlabeled_mean,acc_target\n", 0), 0u);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 5);
  EXPECT_EQ(csv.find("numerical_failure"), std::string::npos);
}

TEST(Cli, BinaryReportsExitCode) {
  const fs::path dir = scratch("binary");
  const std::string cmd = std::string(DSBF_CLI_PATH) + " train --spec " + (dir / "none.spec").string() + " 2>/dev/null";
  const int status = std::system(cmd.c_str());
  ASSERT_TRUE(WIFEXITED(status));
  EXPECT_EQ(WEXITSTATUS(status), kExitIo);
  const std::string ok = std::string(DSBF_CLI_PATH) + " --help >/dev/null";
  EXPECT_EQ(WEXITSTATUS(std::system(ok.c_str())), kExitOk);
}
