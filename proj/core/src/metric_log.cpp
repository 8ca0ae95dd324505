#include "lotlab/metric_log.hpp"

#include <charconv>
#include <cstdio>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>

#include "lotlab/errors.hpp"

namespace lotlab {

const char* to_string(RecordKind kind) {
  switch (kind) {
    case RecordKind::kStep: return "step";
    case RecordKind::kTask: return "task";
    case RecordKind::kError: return "error";
  }
  return "?";
}

std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

namespace {

const std::vector<std::string> kGlobalColumns = {
    "kind",        "seed",        "task",          "epoch",
    "step",        "train_accuracy", "lambda_max", "lambda_bar",
    "sigma_mb_sq", "weight_norm", "grad_norm",     "grad_param_ratio",
    "use",         "flags",       "message"};

const std::vector<std::string> kLayerColumns = {
    "alpha", "alpha_g_star", "alpha_vol_star", "alpha_tilde_star",
    "cantelli_cap", "vol", "lambda_bar", "sigma_ps_sq",
    "grad_sq_norm", "eta", "decision", "crossed", "flags"};

std::string join_flags(const std::vector<std::string>& flags) {
  if (flags.empty()) return "-";
  std::string out;
  for (std::size_t i = 0; i < flags.size(); ++i) out += (i ? "|" : "") + flags[i];
  return out;
}

std::vector<std::string> split_flags(const std::string& s) {
  std::vector<std::string> out;
  if (s == "-" || s.empty()) return out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, '|')) out.push_back(item);
  return out;
}

std::string sanitize(std::string s) {
  for (char& c : s)
    if (c == ',' || c == '\n' || c == '\r') c = ';';
  return s.empty() ? "-" : s;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_real(const std::string& s, std::size_t offset) {
  if (s == "na") return 0.0;
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  double v = 0.0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size())
    throw FormatError("cannot parse number '" + s + "'", offset);
  return v;
}

std::uint64_t parse_uint(const std::string& s, std::size_t offset) {
  std::uint64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size())
    throw FormatError("cannot parse integer '" + s + "'", offset);
  return v;
}

}  // namespace

std::vector<std::string> MetricLogWriter::columns(
    const std::vector<std::string>& layer_ids) {
  std::vector<std::string> cols = kGlobalColumns;
  for (const auto& id : layer_ids)
    for (const auto& c : kLayerColumns) cols.push_back(id + "." + c);
  return cols;
}

MetricLogWriter::MetricLogWriter(std::ostream& out,
                                 std::vector<std::string> layer_ids)
    : out_(out), layer_ids_(std::move(layer_ids)) {
  const auto cols = columns(layer_ids_);
  for (std::size_t i = 0; i < cols.size(); ++i) out_ << (i ? "," : "") << cols[i];
  out_ << '\n';
}

void MetricLogWriter::write(const MetricRecord& r) {
  const bool probe = r.kind == RecordKind::kStep;
  auto real = [&](double x) { return probe ? format_double(x) : std::string("na"); };

  std::vector<std::string> cells = {
      to_string(r.kind),
      std::to_string(r.seed),
      std::to_string(r.task),
      std::to_string(r.epoch),
      std::to_string(r.step),
      r.kind == RecordKind::kError ? std::string("na") : format_double(r.train_accuracy),
      real(r.lambda_max),
      real(r.lambda_bar),
      real(r.sigma_mb_sq),
      real(r.weight_norm),
      real(r.grad_norm),
      real(r.grad_param_ratio),
      real(r.use),
      join_flags(r.flags),
      sanitize(r.message)};

  for (std::size_t i = 0; i < layer_ids_.size(); ++i) {
    if (probe) {
      if (i >= r.layers.size() || r.layers[i].layer_id != layer_ids_[i])
        throw ConfigError("metric record layers do not match log header");
      const auto& l = r.layers[i];
      for (double x : {l.alpha, l.alpha_g_star, l.alpha_vol_star, l.alpha_tilde_star,
                       l.cantelli_cap, l.vol, l.lambda_bar, l.sigma_ps_sq,
                       l.grad_sq_norm, l.eta})
        cells.push_back(format_double(x));
      cells.push_back(l.decision);
      cells.push_back(l.crossed ? "1" : "0");
      cells.push_back(join_flags(l.flags));
    } else {
      for (std::size_t c = 0; c < kLayerColumns.size(); ++c) cells.push_back("na");
    }
  }
  for (std::size_t i = 0; i < cells.size(); ++i) out_ << (i ? "," : "") << cells[i];
  out_ << '\n';
}

std::vector<MetricRecord> read_metric_log(std::istream& in) {
  std::string header;
  if (!std::getline(in, header)) throw FormatError("empty metric log", 0);
  const auto cols = split_csv(header);
  if (cols.size() < kGlobalColumns.size())
    throw FormatError("metric log header too short", 0);
  for (std::size_t i = 0; i < kGlobalColumns.size(); ++i)
    if (cols[i] != kGlobalColumns[i])
      throw FormatError("unexpected column '" + cols[i] + "'", 0);

  std::vector<std::string> layer_ids;
  const std::size_t per_layer = kLayerColumns.size();
  if ((cols.size() - kGlobalColumns.size()) % per_layer != 0)
    throw FormatError("metric log has a partial layer column group", 0);
  for (std::size_t c = kGlobalColumns.size(); c < cols.size(); c += per_layer) {
    const auto dot = cols[c].rfind('.');
    layer_ids.push_back(cols[c].substr(0, dot));
  }

  std::vector<MetricRecord> out;
  std::string line;
  std::size_t offset = header.size() + 1;
  while (std::getline(in, line)) {
    const std::size_t line_offset = offset;
    offset += line.size() + 1;
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != cols.size())
      throw FormatError("row has " + std::to_string(cells.size()) +
                            " cells, header has " + std::to_string(cols.size()),
                        line_offset);
    MetricRecord r;
    if (cells[0] == "step") r.kind = RecordKind::kStep;
    else if (cells[0] == "task") r.kind = RecordKind::kTask;
    else if (cells[0] == "error") r.kind = RecordKind::kError;
    else throw FormatError("unknown record kind '" + cells[0] + "'", line_offset);
    r.seed = parse_uint(cells[1], line_offset);
    r.task = parse_uint(cells[2], line_offset);
    r.epoch = parse_uint(cells[3], line_offset);
    r.step = static_cast<std::int64_t>(parse_uint(cells[4], line_offset));
    r.train_accuracy = parse_real(cells[5], line_offset);
    r.lambda_max = parse_real(cells[6], line_offset);
    r.lambda_bar = parse_real(cells[7], line_offset);
    r.sigma_mb_sq = parse_real(cells[8], line_offset);
    r.weight_norm = parse_real(cells[9], line_offset);
    r.grad_norm = parse_real(cells[10], line_offset);
    r.grad_param_ratio = parse_real(cells[11], line_offset);
    r.use = parse_real(cells[12], line_offset);
    r.flags = split_flags(cells[13]);
    r.message = cells[14] == "-" ? "" : cells[14];
    if (r.kind == RecordKind::kStep) {
      std::size_t c = kGlobalColumns.size();
      for (const auto& id : layer_ids) {
        LayerRecord l;
        l.layer_id = id;
        double* reals[] = {&l.alpha, &l.alpha_g_star, &l.alpha_vol_star,
                           &l.alpha_tilde_star, &l.cantelli_cap, &l.vol,
                           &l.lambda_bar, &l.sigma_ps_sq, &l.grad_sq_norm, &l.eta};
        for (double* p : reals) *p = parse_real(cells[c++], line_offset);
        l.decision = cells[c++];
        l.crossed = cells[c++] == "1";
        l.flags = split_flags(cells[c++]);
        r.layers.push_back(std::move(l));
      }
    }
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace lotlab
