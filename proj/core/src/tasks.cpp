#include "lotlab/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numeric>

#include "lotlab/errors.hpp"
#include "lotlab/rng.hpp"

namespace lotlab {

void StreamConfig::validate() const {
  if (tasks < 1) throw ConfigError("stream.tasks must be >= 1");
  if (epochs_per_task < 1) throw ConfigError("stream.epochs_per_task must be >= 1");
  if (batch_size < 1) throw ConfigError("stream.batch_size must be >= 1");
  if (subsample_n < 1) throw ConfigError("stream.subsample_n must be >= 1");
  if (!(randomize_frac >= 0.0 && randomize_frac <= 1.0))
    throw ConfigError("stream.randomize_frac must lie in [0, 1]");
}

namespace {

constexpr std::uint32_t kImagesMagic = 0x00000803;
constexpr std::uint32_t kLabelsMagic = 0x00000801;

std::uint32_t read_be32(std::span<const std::uint8_t> buf, std::size_t offset,
                        const char* what) {
  if (buf.size() < offset + 4)
    throw FormatError(std::string("truncated ") + what + " header", buf.size());
  return (std::uint32_t{buf[offset]} << 24) | (std::uint32_t{buf[offset + 1]} << 16) |
         (std::uint32_t{buf[offset + 2]} << 8) | std::uint32_t{buf[offset + 3]};
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::vector<std::size_t> shuffled_range(std::size_t n, Rng& rng) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = rng.uniform_index(i);
    std::swap(idx[i - 1], idx[j]);
  }
  return idx;
}

}  // namespace

RawDataset parse_idx(std::span<const std::uint8_t> images,
                     std::span<const std::uint8_t> labels) {
  if (read_be32(images, 0, "images") != kImagesMagic)
    throw FormatError("images file has wrong IDX magic", 0);
  const std::uint32_t n = read_be32(images, 4, "images");
  const std::uint32_t rows = read_be32(images, 8, "images");
  const std::uint32_t cols = read_be32(images, 12, "images");
  const std::size_t dim = std::size_t{rows} * cols;
  const std::size_t expected = 16 + std::size_t{n} * dim;
  if (images.size() < expected)
    throw FormatError("images file truncated: expected " +
                          std::to_string(expected) + " bytes",
                      images.size());

  if (read_be32(labels, 0, "labels") != kLabelsMagic)
    throw FormatError("labels file has wrong IDX magic", 0);
  const std::uint32_t nl = read_be32(labels, 4, "labels");
  if (nl != n)
    throw FormatError("labels count " + std::to_string(nl) +
                          " does not match images count " + std::to_string(n),
                      4);
  if (labels.size() < 8 + std::size_t{n})
    throw FormatError("labels file truncated", labels.size());

  RawDataset raw;
  raw.inputs.resize(n, static_cast<Eigen::Index>(dim));
  const std::uint8_t* px = images.data() + 16;
  for (std::size_t i = 0; i < std::size_t{n} * dim; ++i)
    raw.inputs.data()[i] = static_cast<float>(px[i]);
  raw.labels.assign(labels.begin() + 8, labels.begin() + 8 + n);
  int max_label = 0;
  for (int y : raw.labels) max_label = std::max(max_label, y);
  raw.num_classes = std::max<std::size_t>(10, static_cast<std::size_t>(max_label) + 1);
  return raw;
}

RawDataset load_idx(const std::filesystem::path& images_path,
                    const std::filesystem::path& labels_path) {
  const auto images = read_file(images_path);
  const auto labels = read_file(labels_path);
  return parse_idx(images, labels);
}

RawDataset make_synthetic(const SyntheticSource& src) {
  if (src.n < 1 || src.dim < 1 || src.classes < 1)
    throw ConfigError("synthetic source needs n, dim, classes >= 1");
  Rng rng = Rng::stream(src.seed, "synthetic");
  const auto dim = static_cast<Eigen::Index>(src.dim);
  Eigen::MatrixXd centers(static_cast<Eigen::Index>(src.classes), dim);
  for (Eigen::Index c = 0; c < centers.rows(); ++c)
    for (Eigen::Index j = 0; j < dim; ++j)
      centers(c, j) = rng.normal(0.0, src.separation);

  RawDataset raw;
  raw.num_classes = src.classes;
  raw.inputs.resize(static_cast<Eigen::Index>(src.n), dim);
  raw.labels.resize(src.n);
  for (std::size_t i = 0; i < src.n; ++i) {
    const auto c = static_cast<Eigen::Index>(rng.uniform_index(src.classes));
    raw.labels[i] = static_cast<int>(c);
    for (Eigen::Index j = 0; j < dim; ++j)
      raw.inputs(static_cast<Eigen::Index>(i), j) =
          static_cast<float>(centers(c, j) + rng.normal());
  }
  return raw;
}

RawDataset load_source(const StreamConfig& cfg) {
  if (const auto* m = std::get_if<MnistSource>(&cfg.source))
    return load_idx(m->images, m->labels);
  return make_synthetic(std::get<SyntheticSource>(cfg.source));
}

BaseDataset prepare(const RawDataset& raw, const StreamConfig& cfg) {
  cfg.validate();
  if (raw.size() == 0) throw ConfigError("prepare: empty dataset");
  if (cfg.subsample_n > raw.size())
    throw ConfigError("subsample_n " + std::to_string(cfg.subsample_n) +
                      " exceeds dataset size " + std::to_string(raw.size()));

  Rng rng = Rng::stream(cfg.base_seed, "subsample");
  std::vector<std::size_t> picked = shuffled_range(raw.size(), rng);
  picked.resize(cfg.subsample_n);
  std::sort(picked.begin(), picked.end());

  const Eigen::Index d = raw.inputs.cols();
  auto inputs = std::make_shared<RowMatrixXd>(
      static_cast<Eigen::Index>(picked.size()), d);
  BaseDataset base;
  base.labels.reserve(picked.size());
  for (std::size_t k = 0; k < picked.size(); ++k) {
    inputs->row(static_cast<Eigen::Index>(k)) =
        raw.inputs.row(static_cast<Eigen::Index>(picked[k])).cast<double>();
    base.labels.push_back(raw.labels[picked[k]]);
  }

  const double count = static_cast<double>(inputs->size());
  base.mean = inputs->sum() / count;
  base.stddev = std::sqrt((inputs->array() - base.mean).square().sum() / count);
  if (!(base.stddev > 0.0))
    throw DegenerateDataError("prepare: inputs have zero variance");
  inputs->array() = (inputs->array() - base.mean) / base.stddev;

  base.inputs = std::move(inputs);
  base.source_indices = std::move(picked);
  base.num_classes = raw.num_classes;
  return base;
}

std::vector<int> task_labels(const BaseDataset& base, std::size_t task_index,
                             const StreamConfig& cfg) {
  if (task_index >= cfg.tasks)
    throw ArgumentError("task index " + std::to_string(task_index) +
                        " out of range");
  std::vector<int> labels = base.labels;
  const std::size_t n = labels.size();
  const auto relabel = static_cast<std::size_t>(
      std::llround(cfg.randomize_frac * static_cast<double>(n)));
  if (relabel == 0) return labels;

  Rng rng = Rng::stream(cfg.base_seed, "labels", task_index);
  const std::vector<std::size_t> order = shuffled_range(n, rng);
  for (std::size_t k = 0; k < relabel; ++k)
    labels[order[k]] = static_cast<int>(rng.uniform_index(base.num_classes));
  return labels;
}

TaskView make_task(const BaseDataset& base, std::size_t task_index,
                   const StreamConfig& cfg) {
  return {task_index, base.inputs, task_labels(base, task_index, cfg)};
}

std::vector<std::vector<std::size_t>> batch_indices(const TaskView& view,
                                                    std::size_t epoch,
                                                    const StreamConfig& cfg) {
  const std::size_t n = view.labels.size();
  Rng rng = Rng::stream(cfg.base_seed, "shuffle",
                        (std::uint64_t{view.task_index} << 32) | epoch);
  const std::vector<std::size_t> order = shuffled_range(n, rng);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t start = 0; start < n; start += cfg.batch_size) {
    const std::size_t end = std::min(n, start + cfg.batch_size);
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                     order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return out;
}

Batch make_batch(const TaskView& view, std::span<const std::size_t> rows) {
  Batch b;
  b.inputs.resize(static_cast<Eigen::Index>(rows.size()), view.inputs->cols());
  b.labels.reserve(rows.size());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    b.inputs.row(static_cast<Eigen::Index>(k)) =
        view.inputs->row(static_cast<Eigen::Index>(rows[k]));
    b.labels.push_back(view.labels[rows[k]]);
  }
  return b;
}

std::vector<Batch> batches(const TaskView& view, std::size_t epoch,
                           const StreamConfig& cfg) {
  std::vector<Batch> out;
  for (const auto& rows : batch_indices(view, epoch, cfg))
    out.push_back(make_batch(view, rows));
  return out;
}

}  // namespace lotlab
