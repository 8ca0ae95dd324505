#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "lotlab/adam.hpp"
#include "lotlab/config.hpp"
#include "lotlab/metric_log.hpp"
#include "lotlab/metrics.hpp"
#include "lotlab/nn.hpp"
#include "lotlab/tasks.hpp"

namespace lotlab {

/// Receives metric records as a run produces them.
using RecordSink = std::function<void(const MetricRecord&)>;

struct SeedResult {
  std::uint64_t seed = 0;
  std::vector<double> task_accuracy;  // final-epoch mean train accuracy
  bool aborted = false;
  std::string error;
};

/// One seed of a continual run: the training loop, the metric probes at log
/// intervals, and (in scheduled mode) the controller at decision intervals.
///
/// Training randomness (init, labels, batch order) is drawn from streams
/// keyed by the seed. Probes draw only from their own streams and never
/// touch parameters or optimizer state.
class Trainer {
 public:
  Trainer(const RunConfig& cfg, const BaseDataset& base, std::uint64_t seed,
          RecordSink sink = {});

  /// Trains every task in order. Numeric failures end the seed with an
  /// error record instead of propagating.
  SeedResult run();

  /// Trains one task (all epochs) and returns its final-epoch accuracy.
  /// Tasks must be trained in order.
  double train_task(std::size_t task);

  const ParamSet& params() const { return params_; }
  const Adam& optimizer() const { return adam_; }
  std::int64_t step() const { return step_; }
  std::int64_t total_steps() const { return total_steps_; }
  const std::vector<std::string>& layer_ids() const { return adam_.layer_ids(); }

  /// The stream config with labels and batch order keyed to this seed.
  const StreamConfig& stream() const { return stream_; }

 private:
  void reset_state();
  void probe(const Batch& batch, std::size_t task, std::size_t epoch,
             double window_accuracy, bool log_due, bool decide_due);

  RunConfig cfg_;
  const BaseDataset& base_;
  std::uint64_t seed_;
  RecordSink sink_;
  StreamConfig stream_;
  MlpShape shape_;
  Activation act_;
  ParamSet params_;
  Regularizer reg_;
  Adam adam_;
  std::vector<WindowStats> windows_;
  std::int64_t step_ = 0;
  std::int64_t total_steps_ = 0;
  std::size_t next_task_ = 0;
};

/// Parameters from the seed's init stream.
ParamSet initial_params(const RunConfig& cfg, const MlpShape& shape,
                        std::uint64_t seed);

MlpShape model_shape(const RunConfig& cfg, const BaseDataset& base);

/// Runs every seed of `cfg`, writing one log per seed into `out_dir` as
/// metrics_seed<seed>.csv plus the resolved config as run_config.txt.
std::vector<SeedResult> run(const RunConfig& cfg, const std::filesystem::path& out_dir);

/// Runs one seed writing the log to `log`.
SeedResult run_seed(const RunConfig& cfg, const BaseDataset& base,
                    std::uint64_t seed, std::ostream& log);

// ---------------------------------------------------------------------------
// Summaries
// ---------------------------------------------------------------------------

struct SeedSummary {
  std::uint64_t seed = 0;
  std::vector<double> task_accuracy;
  std::vector<double> predicted;  // per-task crossing fraction
  std::vector<bool> empty_task;
  double overall = 0.0;           // run-level crossing fraction
  std::vector<double> scaled;     // predicted mapped onto the accuracy range
  bool degenerate_range = false;
  bool aborted = false;
};

/// Per seed: task accuracies, the crossing-fraction predictor, and the
/// predictor min-max scaled onto the accuracy range, inverted so that the
/// task with the most crossings maps to the lowest accuracy.
std::vector<SeedSummary> summarize(const std::vector<MetricRecord>& log);

void write_summary(std::ostream& out, const std::vector<SeedSummary>& summaries);

}  // namespace lotlab
