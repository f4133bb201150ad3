// icbench: experiment harness for MIMO interference-channel beamforming and
// sub-stream power control.
//
// Exit codes: 0 success, 2 configuration error, 3 numerical failure.

#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "icsim/csv.hpp"
#include "icsim/errors.hpp"
#include "icsim/experiment.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;

struct CommonFlags {
  std::string config;
  std::string preset;
  bool full = false;
  std::optional<std::uint64_t> seed;
  std::optional<int> trials;
  std::string out_dir;
  std::optional<int> threads;
  std::string save_inputs;
  std::string load_inputs;
};

void add_common(CLI::App* app, CommonFlags& f) {
  app->add_option("--config", f.config, "Experiment JSON (or a manifest.json to replay)");
  app->add_option("--preset", f.preset, "Named parameter bundle");
  app->add_flag("--full", f.full, "Include the long 15 dB point in BER presets");
  app->add_option("--seed", f.seed, "Master seed (overrides ICBENCH_SEED and the config)");
  app->add_option("--trials", f.trials, "Monte Carlo trials per point");
  app->add_option("--out-dir", f.out_dir, "Output directory");
  app->add_option("--threads", f.threads, "Worker threads (overrides ICBENCH_THREADS)");
  app->add_option("--save-inputs", f.save_inputs, "Persist channels and initial filters here");
  app->add_option("--load-inputs", f.load_inputs, "Read channels and initial filters from here");
}

std::optional<std::uint64_t> env_u64(const char* name) {
  const char* v = std::getenv(name);
  if (!v || !*v) return std::nullopt;
  try {
    std::size_t used = 0;
    const auto x = std::stoull(v, &used);
    if (used != std::string(v).size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    throw icsim::ConfigError(std::string(name) + " must be a non-negative integer, got '" + v + "'");
  }
}

icsim::ExperimentConfig resolve(const CommonFlags& f) {
  if (f.config.empty() == f.preset.empty())
    throw icsim::ConfigError("give exactly one of --config or --preset");
  icsim::ExperimentConfig c =
      f.preset.empty() ? icsim::load_config(f.config) : icsim::preset_config(f.preset, f.full);
  if (auto s = env_u64("ICBENCH_SEED")) c.system.master_seed = *s;
  if (auto t = env_u64("ICBENCH_THREADS")) c.threads = static_cast<int>(*t);
  if (f.seed) c.system.master_seed = *f.seed;
  if (f.threads) c.threads = *f.threads;
  if (f.trials) {
    c.mc_trials = *f.trials;
    if (*f.trials < 1) throw icsim::ConfigError("--trials must be >= 1");
    for (auto& p : c.ber.schedule) p.trials = static_cast<std::uint64_t>(*f.trials);
  }
  if (!f.out_dir.empty()) c.out_dir = f.out_dir;
  if (!f.save_inputs.empty()) c.save_inputs = f.save_inputs;
  if (!f.load_inputs.empty()) c.load_inputs = f.load_inputs;
  c.validate();
  return c;
}

void report(const icsim::ExperimentResult& r) {
  for (const auto& w : r.warnings) std::cerr << "warning: " << w << '\n';
  for (const auto& f : r.files) std::cout << f.string() << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"icbench: MIMO interference-channel beamforming and power-control benchmarks"};
  app.require_subcommand(1);

  CommonFlags gen_flags, run_flags, ber_flags;
  auto* gen = app.add_subcommand("gen-channels", "Generate and persist channels and initial filters");
  add_common(gen, gen_flags);
  auto* run = app.add_subcommand("run", "Run an experiment and write CSV reports");
  add_common(run, run_flags);
  auto* ber = app.add_subcommand("ber", "Run a bit-error-rate sweep");
  add_common(ber, ber_flags);

  std::vector<std::string> compare_dirs;
  std::string compare_out;
  auto* compare = app.add_subcommand("compare", "Join per-stream results of finished runs");
  compare->add_option("dirs", compare_dirs, "Result directories")->required();
  compare->add_option("--out", compare_out, "Output CSV (stdout when omitted)");

  std::string norm_report, norm_baseline, norm_run, norm_out;
  auto* normalize = app.add_subcommand("normalize", "Normalize sum-SINR by a baseline run");
  normalize->add_option("--report", norm_report, "summary.csv to normalize")->required();
  normalize->add_option("--baseline", norm_baseline, "summary.csv holding the baseline (default: --report)");
  normalize->add_option("--baseline-run", norm_run, "Baseline run name")->required();
  normalize->add_option("--out", norm_out, "Output CSV (stdout when omitted)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (gen->parsed()) {
      report(icsim::generate_inputs(resolve(gen_flags)));
    } else if (run->parsed()) {
      report(icsim::run_experiment(resolve(run_flags)));
    } else if (ber->parsed()) {
      auto c = resolve(ber_flags);
      if (c.mode != icsim::ExperimentMode::Ber)
        throw icsim::ConfigError("'" + c.name + "' is not a BER experiment; use 'run'");
      report(icsim::run_experiment(c));
    } else if (compare->parsed()) {
      std::vector<std::filesystem::path> dirs(compare_dirs.begin(), compare_dirs.end());
      std::vector<std::string> warnings;
      const auto t = icsim::compare_schemes(dirs, &warnings);
      for (const auto& w : warnings) std::cerr << "warning: " << w << '\n';
      if (compare_out.empty()) std::cout << icsim::csv::to_string(t);
      else icsim::csv::write(compare_out, t);
    } else if (normalize->parsed()) {
      const auto rep = icsim::csv::read(norm_report);
      const auto base = norm_baseline.empty() ? rep : icsim::csv::read(norm_baseline);
      std::vector<std::string> warnings;
      const auto t = icsim::normalize_report(rep, base, norm_run, &warnings);
      for (const auto& w : warnings) std::cerr << "warning: " << w << '\n';
      if (norm_out.empty()) std::cout << icsim::csv::to_string(t);
      else icsim::csv::write(norm_out, t);
    }
  } catch (const icsim::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const icsim::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const icsim::FormatError& e) {
    std::cerr << "input format error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "file error: " << e.what() << '\n';
    return kExitConfig;
  }
  return 0;
}
