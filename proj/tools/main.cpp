// lotlab: continual-training runs with per-layer step-size diagnostics.
//
//   lotlab run --config cfg.txt --mode scheduled --seed 1 --out runs/a --optimizer.eta=3e-4
//   lotlab summarize --log runs/a/metrics_seed1.csv --out runs/a/summary.csv

#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "lotlab/config.hpp"
#include "lotlab/errors.hpp"
#include "lotlab/metric_log.hpp"
#include "lotlab/runner.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;

void apply_overrides(lotlab::RunConfig& cfg, const std::vector<std::string>& extras) {
  for (const auto& arg : extras) {
    if (arg.rfind("--", 0) != 0)
      throw lotlab::ConfigError("unexpected argument '" + arg + "'");
    const auto eq = arg.find('=');
    if (eq == std::string::npos)
      throw lotlab::ConfigError("override '" + arg + "' must look like --key=value");
    lotlab::apply_setting(cfg, arg.substr(2, eq - 2), arg.substr(eq + 1));
  }
}

int cmd_run(const std::string& config_path, const std::string& mode,
            const std::vector<std::uint64_t>& seeds, const std::string& out_dir,
            const std::vector<std::string>& extras) {
  lotlab::RunConfig cfg;
  if (!config_path.empty()) lotlab::apply_config_file(cfg, config_path);
  if (!mode.empty()) cfg.mode = lotlab::parse_mode(mode);
  apply_overrides(cfg, extras);
  if (!seeds.empty()) cfg.seeds = seeds;

  const auto results = lotlab::run(cfg, out_dir);
  int code = 0;
  for (const auto& r : results) {
    std::cout << "seed " << r.seed << ":";
    for (double a : r.task_accuracy) std::cout << ' ' << lotlab::format_double(a);
    std::cout << '\n';
    if (r.aborted) {
      std::cerr << "seed " << r.seed << " aborted: " << r.error << '\n';
      code = kExitNumeric;
    }
  }
  return code;
}

int cmd_summarize(const std::vector<std::string>& logs, const std::string& out_path) {
  std::vector<lotlab::MetricRecord> records;
  for (const auto& path : logs) {
    std::ifstream in(path);
    if (!in) throw lotlab::ConfigError("cannot open log " + path);
    auto part = lotlab::read_metric_log(in);
    records.insert(records.end(), part.begin(), part.end());
  }
  if (records.empty()) throw lotlab::ConfigError("no records in the given logs");
  const auto summaries = lotlab::summarize(records);
  if (out_path.empty()) {
    lotlab::write_summary(std::cout, summaries);
  } else {
    std::ofstream out(out_path);
    if (!out) throw lotlab::ConfigError("cannot write " + out_path);
    lotlab::write_summary(out, summaries);
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Continual-training runs with per-layer step-size diagnostics"};
  app.require_subcommand(1);

  std::string config_path, mode, out_dir = "lotlab_out";
  std::vector<std::uint64_t> seeds;
  auto* run = app.add_subcommand("run", "Train over a task stream and write metric logs");
  run->add_option("--config", config_path, "key=value config file")->check(CLI::ExistingFile);
  run->add_option("--mode", mode, "vanilla | reset | scheduled");
  run->add_option("--seed", seeds, "Run seed (repeatable; replaces the config's seeds)");
  run->add_option("--out", out_dir, "Output directory");
  run->allow_extras();
  run->footer("Any config key can be overridden as --key=value, e.g. --optimizer.eta=3e-4.\n"
              "Relative MNIST paths resolve against $" + std::string(lotlab::kDataDirEnv) + ".");

  std::vector<std::string> logs;
  std::string summary_out;
  auto* summarize = app.add_subcommand("summarize", "Per-task accuracy and crossing-fraction predictor");
  summarize->add_option("--log", logs, "Metric log (repeatable)")->required()->check(CLI::ExistingFile);
  summarize->add_option("--out", summary_out, "Output CSV (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*run) return cmd_run(config_path, mode, seeds, out_dir, run->remaining());
    return cmd_summarize(logs, summary_out);
  } catch (const lotlab::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const lotlab::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
