#include "dsbf/cli.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <cmath>
#include <functional>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>

#include "dsbf/error.hpp"
#include "dsbf/gradcheck_suite.hpp"
#include "dsbf/runspec.hpp"
#include "dsbf/theory.hpp"
#include "dsbf/trainer.hpp"

namespace dsbf {
namespace {

struct CommonFlags {
  std::string spec;
  std::optional<std::string> out;
  std::optional<std::uint64_t> seed;
  bool quiet = false;
};

std::string fmt6(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());
}

RunSpec load_spec(const CommonFlags& f) {
  if (f.spec.empty()) return RunSpec::parse("", ".");
  return RunSpec::load(f.spec);
}

std::filesystem::path output_dir(const CommonFlags& f, const RunSpec& spec) {
  std::optional<std::string> spec_out;
  if (spec.has("out")) spec_out = spec.get_string("out", "");
  return resolve_output_dir(f.out, spec_out, spec.base_dir());
}

std::uint64_t effective_seed(const CommonFlags& f, const RunSpec& spec) {
  return f.seed ? *f.seed : spec.get_u64("seed", 0);
}

int cmd_gen(const CommonFlags& f, std::ostream& out) {
  const RunSpec spec = load_spec(f);
  const std::uint64_t seed = effective_seed(f, spec);
  const ToyDomainSpec toy = toy_spec_from(spec);
  const std::filesystem::path dir = output_dir(f, spec);
  ensure_dir(dir);
  // same stream the trainer uses, so gen + train-from-files sees the same data
  Rng rng = Rng(seed).derive(7);
  const std::vector<DomainDataset> domains = gen_toy_domains(toy, rng);
  for (const auto& d : domains) {
    const auto path = dir / ("domain_" + std::to_string(d.domain_id()) + ".csv");
    write_domain_csv(path, d);
    if (!f.quiet) out << "wrote " << path.string() << '\n';
  }
  write_text(dir / "toy_spec.json", toy_spec_json(toy, seed));
  return kExitOk;
}

int cmd_train(const CommonFlags& f, std::ostream& out) {
  const RunSpec spec = load_spec(f);
  TrainConfig cfg = train_config_from(spec);
  cfg.seed = effective_seed(f, spec);
  const ExperimentData data = experiment_data_from(spec, cfg.seed);
  const std::filesystem::path dir = output_dir(f, spec);
  ensure_dir(dir);
  const ExperimentResult result = run_experiment(data, cfg);
  write_experiment_outputs(dir, result, cfg, spec.text());
  out << format_accuracy_table(result);
  if (!f.quiet) out << "outputs in " << dir.string() << '\n';
  return kExitOk;
}

int cmd_theory(const CommonFlags& f, std::ostream& out) {
  const RunSpec spec = load_spec(f);
  const TheoryPlan plan = theory_plan_from(spec);
  const std::uint64_t seed = effective_seed(f, spec);
  const theory::RateReport report = theory::consistency_sweep(plan.spec, plan.n_grid, plan.reps, seed, plan.options);
  const std::filesystem::path dir = output_dir(f, spec);
  ensure_dir(dir);
  theory::write_rate_csv(dir / "rate.csv", report);
  write_text(dir / "theory_summary.json", theory::rate_summary_json(report) + "\n");
  for (const auto& w : report.warnings) out << "warning: " << w << '\n';
  if (!f.quiet) {
    out << "n          mean_error   naive_error\n";
    for (const auto& r : report.rows) {
      char buf[96];
      std::snprintf(buf, sizeof(buf), "%-10zu %-12.6g %-12.6g\n", r.n, r.mean_error, r.naive_mean_error);
      out << buf;
    }
  }
  const auto flag = [](bool ok) { return ok ? "PASS" : "FAIL"; };
  out << "slope " << fmt6(report.slope) << " band [" << fmt6(report.slope_lo) << ", " << fmt6(report.slope_hi) << "] "
      << flag(report.slope_ok) << '\n';
  out << "unbiased " << flag(report.unbiased_ok) << '\n';
  out << "monotone " << flag(report.monotone_ok) << '\n';
  out << "naive_factor " << fmt6(report.naive_factor) << " min " << fmt6(report.naive_factor_min) << ' '
      << flag(report.naive_factor_ok) << '\n';
  return kExitOk;
}

int cmd_gradcheck(const CommonFlags& f, const std::string& corrupt, std::ostream& out) {
  const RunSpec spec = load_spec(f);
  GradSuiteOptions opts;
  opts.seed = effective_seed(f, spec);
  opts.seeds = spec.get_size("gradcheck.seeds", opts.seeds);
  if (!corrupt.empty()) {
    opts.corrupt = [corrupt](const std::string& loss, Gradients& g) {
      if (loss != corrupt) return;
      for_each_block(g, [](const ParamBlock& blk) {
        for (double& v : blk.values) v = 1.01 * v + 1e-3;
      });
    };
  }
  const auto lines = run_grad_suite(opts);
  out << format_grad_report(lines);
  bool ok = true;
  for (const auto& l : lines) ok = ok && l.pass;
  return ok ? kExitOk : kExitNumerical;
}

int cmd_sweep(const CommonFlags& f, std::ostream& out) {
  const RunSpec spec = load_spec(f);
  TrainConfig base = train_config_from(spec);
  base.seed = effective_seed(f, spec);
  const ExperimentData data = experiment_data_from(spec, base.seed);
  const std::vector<double> grid{0.1, 0.5, 1.0, 2.0};
  const auto lambdas = spec.get_doubles("sweep.lambdas", grid);
  const auto gammas = spec.get_doubles("sweep.gammas", grid);
  const std::filesystem::path dir = output_dir(f, spec);
  ensure_dir(dir);
  std::string csv = "lambda,gamma,status,acc_labeled,acc_unlabeled_mean,acc_target\n";
  int code = kExitOk;
  for (double l : lambdas) {
    for (double g : gammas) {
      TrainConfig cfg = base;
      cfg.lambda = l;
      cfg.gamma = g;
      std::string row = fmt6(l) + "," + fmt6(g) + ",";
      try {
        const ExperimentResult r = run_experiment(data, cfg);
        double um = 0.0;
        for (double a : r.accuracies.unlabeled_val) um += a;
        const std::string um_s =
            r.accuracies.unlabeled_val.empty() ? "nan" : fmt6(um / static_cast<double>(r.accuracies.unlabeled_val.size()));
        row += "ok," + fmt6(r.accuracies.labeled_val) + "," + um_s + "," + fmt6(r.accuracies.target);
      } catch (const NumericalError& e) {
        row += "numerical_failure,nan,nan,nan";
        code = kExitNumerical;
        out << "cell lambda=" << fmt6(l) << " gamma=" << fmt6(g) << " failed: " << e.what() << '\n';
      }
      csv += row + "\n";
      if (!f.quiet) out << row << '\n';
    }
  }
  write_text(dir / "sweep.csv", csv);
  return code;
}

void add_common(CLI::App* cmd, CommonFlags& f, bool spec_required) {
  auto* opt = cmd->add_option("--spec", f.spec, "run spec file (key = value)");
  if (spec_required) opt->required();
  cmd->add_option("--out", f.out, "output directory");
  cmd->add_option("--seed", f.seed, "seed, overrides the spec file");
  cmd->add_flag("--quiet", f.quiet, "only print results");
}

}  // namespace

std::filesystem::path resolve_output_dir(const std::optional<std::string>& cli_out,
                                         const std::optional<std::string>& spec_out,
                                         const std::filesystem::path& spec_dir) {
  if (cli_out) return std::filesystem::path(*cli_out);
  const std::filesystem::path p(spec_out.value_or("out"));
  if (p.is_absolute()) return p;
  if (const char* root = std::getenv(kOutputRootEnv); root != nullptr && *root != '\0') {
    return std::filesystem::path(root) / p;
  }
  return spec_dir / p;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"dsbf: bias-filtering domain generalization toolkit"};
  app.require_subcommand(1);
  CommonFlags flags;
  std::string corrupt;
  auto* gen = app.add_subcommand("gen", "generate toy domain datasets as CSV");
  add_common(gen, flags, false);
  auto* train = app.add_subcommand("train", "train and evaluate (sldg | cdg | stage1_only)");
  add_common(train, flags, false);
  auto* theo = app.add_subcommand("theory", "Monte Carlo check of the two-stage estimator");
  add_common(theo, flags, false);
  auto* grad = app.add_subcommand("gradcheck", "finite-difference check of every loss");
  add_common(grad, flags, false);
  grad->add_option("--corrupt", corrupt, "perturb the analytic gradient of one loss (test hook)")->group("");
  auto* sweep = app.add_subcommand("sweep", "lambda x gamma sensitivity grid");
  add_common(sweep, flags, false);

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    std::ostringstream o;
    std::ostringstream ebuf;
    const int code = app.exit(e, o, ebuf);
    out << o.str();
    err << ebuf.str();
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (gen->parsed()) return cmd_gen(flags, out);
    if (train->parsed()) return cmd_train(flags, out);
    if (theo->parsed()) return cmd_theory(flags, out);
    if (grad->parsed()) return cmd_gradcheck(flags, corrupt, out);
    if (sweep->parsed()) return cmd_sweep(flags, out);
  } catch (const ConfigError& e) {
    err << "configuration error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const DimensionError& e) {
    err << "configuration error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const IoError& e) {
    err << "i/o error: " << e.what() << '\n';
    return kExitIo;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const SealedDatasetError& e) {
    err << "sealed dataset accessed: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitNumerical;
  }
  return kExitConfig;
}

}  // namespace dsbf
