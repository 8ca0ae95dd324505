#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

namespace lotlab {

enum class RecordKind { kStep, kTask, kError };

const char* to_string(RecordKind kind);

struct LayerRecord {
  std::string layer_id;
  double alpha = 0.0;
  double alpha_g_star = 0.0;
  double alpha_vol_star = 0.0;
  double alpha_tilde_star = 0.0;
  double cantelli_cap = 0.0;
  double vol = 0.0;
  double lambda_bar = 0.0;
  double sigma_ps_sq = 0.0;
  double grad_sq_norm = 0.0;
  double eta = 0.0;
  std::string decision = "absent";  // absent | held | cooled | warmed
  bool crossed = false;
  std::vector<std::string> flags;
};

/// One row of the metric log.
///
/// kStep rows carry every field. kTask rows close a task: train_accuracy is
/// the mean over the task's final epoch and the probe fields are not
/// applicable. kError rows end a seed that hit a numeric failure.
struct MetricRecord {
  RecordKind kind = RecordKind::kStep;
  std::uint64_t seed = 0;
  std::size_t task = 0;
  std::size_t epoch = 0;
  std::int64_t step = 0;
  double train_accuracy = 0.0;
  double lambda_max = 0.0;
  double lambda_bar = 0.0;
  double sigma_mb_sq = 0.0;
  double weight_norm = 0.0;
  double grad_norm = 0.0;
  double grad_param_ratio = 0.0;
  double use = 0.0;
  std::vector<std::string> flags;
  std::string message;
  std::vector<LayerRecord> layers;
};

/// Comma-separated rows with a header line naming every column. Floats are
/// written with 17 significant digits; fields that do not apply to a row kind
/// are written as `na`; flag lists are `|`-joined, `-` when empty.
class MetricLogWriter {
 public:
  MetricLogWriter(std::ostream& out, std::vector<std::string> layer_ids);

  void write(const MetricRecord& record);

  static std::vector<std::string> columns(const std::vector<std::string>& layer_ids);

 private:
  std::ostream& out_;
  std::vector<std::string> layer_ids_;
};

/// Parses a log written by MetricLogWriter. Throws FormatError on malformed
/// rows.
std::vector<MetricRecord> read_metric_log(std::istream& in);

/// Formats like the log writer (17 significant digits).
std::string format_double(double x);

}  // namespace lotlab
