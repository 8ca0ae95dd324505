#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "lotlab/nn.hpp"

namespace lotlab {

using RowMatrixXd =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowMatrixXf =
    Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct MnistSource {
  std::filesystem::path images;
  std::filesystem::path labels;
};

/// Class-conditional Gaussian clusters: class centers drawn from
/// N(0, separation^2) per coordinate, samples at center + N(0, 1).
struct SyntheticSource {
  std::size_t n = 2000;
  std::size_t dim = 784;
  std::size_t classes = 10;
  double separation = 1.0;
  std::uint64_t seed = 0;
};

struct StreamConfig {
  std::variant<SyntheticSource, MnistSource> source = SyntheticSource{};
  std::size_t subsample_n = 21000;
  std::size_t tasks = 40;
  std::size_t epochs_per_task = 250;
  std::size_t batch_size = 256;
  double randomize_frac = 1.0;  // fraction of labels resampled per task
  std::uint64_t base_seed = 0;

  void validate() const;
};

struct RawDataset {
  RowMatrixXf inputs;  // n x d, source units (0..255 for MNIST)
  std::vector<int> labels;
  std::size_t num_classes = 0;

  std::size_t size() const { return labels.size(); }
};

/// IDX images (magic 0x00000803) and labels (magic 0x00000801), big-endian.
/// Throws FormatError (with byte offset) on bad magic, truncation, or counts
/// that disagree between the two files.
RawDataset load_idx(const std::filesystem::path& images_path,
                    const std::filesystem::path& labels_path);

/// Parses in-memory IDX buffers; load_idx reads the files and forwards here.
RawDataset parse_idx(std::span<const std::uint8_t> images,
                     std::span<const std::uint8_t> labels);

RawDataset make_synthetic(const SyntheticSource& src);

/// Materializes whichever source the config names.
RawDataset load_source(const StreamConfig& cfg);

/// Normalized, subsampled inputs shared by every task.
struct BaseDataset {
  std::shared_ptr<const RowMatrixXd> inputs;
  std::vector<int> labels;                  // original labels of the subsample
  std::vector<std::size_t> source_indices;  // rows picked from the raw data
  double mean = 0.0;
  double stddev = 1.0;
  std::size_t num_classes = 0;

  std::size_t size() const { return labels.size(); }
};

/// Picks cfg.subsample_n rows once (seeded by cfg.base_seed) and standardizes
/// with one scalar mean/std over every pixel of the subsample. Throws
/// ConfigError if the subsample is larger than the data and
/// DegenerateDataError for zero variance.
BaseDataset prepare(const RawDataset& raw, const StreamConfig& cfg);

/// Labels for one task: a seeded fraction cfg.randomize_frac of positions
/// is relabeled uniformly at random, the rest keep their original label.
std::vector<int> task_labels(const BaseDataset& base, std::size_t task_index,
                             const StreamConfig& cfg);

struct TaskView {
  std::size_t task_index = 0;
  std::shared_ptr<const RowMatrixXd> inputs;
  std::vector<int> labels;
};

TaskView make_task(const BaseDataset& base, std::size_t task_index,
                   const StreamConfig& cfg);

/// Shuffled row indices for one epoch, split into batches of cfg.batch_size
/// with the last partial batch kept.
std::vector<std::vector<std::size_t>> batch_indices(const TaskView& view,
                                                    std::size_t epoch,
                                                    const StreamConfig& cfg);

Batch make_batch(const TaskView& view, std::span<const std::size_t> rows);

std::vector<Batch> batches(const TaskView& view, std::size_t epoch,
                           const StreamConfig& cfg);

}  // namespace lotlab
