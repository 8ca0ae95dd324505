#include "lotlab/runner.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <ostream>

#include "lotlab/curvature.hpp"
#include "lotlab/errors.hpp"
#include "lotlab/rng.hpp"
#include "lotlab/scheduler.hpp"

namespace lotlab {

MlpShape model_shape(const RunConfig& cfg, const BaseDataset& base) {
  MlpShape s;
  s.input_dim = static_cast<std::size_t>(base.inputs->cols());
  s.hidden.assign(cfg.model.hidden_layers, cfg.model.hidden_width);
  s.num_classes = base.num_classes;
  return s;
}

ParamSet initial_params(const RunConfig& cfg, const MlpShape& shape,
                        std::uint64_t seed) {
  Rng rng = Rng::stream(seed, "init");
  return init_params(shape, parse_activation(cfg.model.activation, cfg.model.leaky_slope),
                     rng);
}

namespace {

Regularizer make_regularizer(const ModelConfig& model, const ParamSet& init) {
  if (model.regularizer == "l2") return Regularizer::l2(model.reg_lambda);
  if (model.regularizer == "wasserstein")
    return Regularizer::wasserstein(model.reg_lambda, init);
  if (model.regularizer == "none") return Regularizer::none();
  throw ConfigError("unknown regularizer '" + model.regularizer + "'");
}

}  // namespace

Trainer::Trainer(const RunConfig& cfg, const BaseDataset& base, std::uint64_t seed,
                 RecordSink sink)
    : cfg_(cfg),
      base_(base),
      seed_(seed),
      sink_(std::move(sink)),
      stream_(cfg.stream),
      shape_(model_shape(cfg, base)),
      act_(parse_activation(cfg.model.activation, cfg.model.leaky_slope)),
      params_(initial_params(cfg, shape_, seed)),
      reg_(make_regularizer(cfg.model, params_)),
      adam_(params_, cfg.optimizer.adam, cfg.optimizer.eta) {
  if (cfg_.mode == Mode::kScheduled && !cfg_.controller)
    throw ConfigError("scheduled mode requires a controller config");
  stream_.base_seed = Rng::stream(cfg.stream.base_seed, "run", seed).next_u64();
  windows_.assign(params_.layers.size(), WindowStats(cfg_.window));
  const auto n = static_cast<std::int64_t>(base_.size());
  const auto b = static_cast<std::int64_t>(cfg_.stream.batch_size);
  total_steps_ = static_cast<std::int64_t>(cfg_.stream.tasks * cfg_.stream.epochs_per_task) *
                 ((n + b - 1) / b);
}

void Trainer::reset_state() {
  params_ = initial_params(cfg_, shape_, seed_);
  reg_ = make_regularizer(cfg_.model, params_);
  adam_.reset();
  windows_.assign(params_.layers.size(), WindowStats(cfg_.window));
}

double Trainer::train_task(std::size_t task) {
  if (task != next_task_)
    throw StateError("tasks must be trained in order; expected task " +
                     std::to_string(next_task_));
  if (cfg_.mode == Mode::kReset && task > 0) reset_state();

  const TaskView view = make_task(base_, task, stream_);
  const bool scheduled = cfg_.mode == Mode::kScheduled;
  std::size_t window_correct = 0, window_seen = 0;
  double final_accuracy = 0.0;

  for (std::size_t epoch = 0; epoch < cfg_.stream.epochs_per_task; ++epoch) {
    std::size_t epoch_correct = 0, epoch_seen = 0;
    for (const auto& rows : batch_indices(view, epoch, stream_)) {
      const Batch batch = make_batch(view, rows);
      const LossGrad lg = loss_grad(params_, act_, batch, reg_);
      adam_.step(params_, lg.grads);
      ++step_;
      epoch_correct += lg.correct;
      epoch_seen += batch.size();
      window_correct += lg.correct;
      window_seen += batch.size();

      const bool log_due = cfg_.log_interval > 0 &&
                           step_ % static_cast<std::int64_t>(cfg_.log_interval) == 0;
      const bool decide_due = scheduled && step_ % cfg_.controller->interval_k == 0;
      if (log_due || decide_due) {
        probe(batch, task, epoch,
              static_cast<double>(window_correct) / static_cast<double>(window_seen),
              log_due, decide_due);
        window_correct = window_seen = 0;
      }
    }
    final_accuracy = static_cast<double>(epoch_correct) / static_cast<double>(epoch_seen);
  }

  if (sink_) {
    MetricRecord r;
    r.kind = RecordKind::kTask;
    r.seed = seed_;
    r.task = task;
    r.epoch = cfg_.stream.epochs_per_task - 1;
    r.step = step_;
    r.train_accuracy = final_accuracy;
    sink_(r);
  }
  ++next_task_;
  return final_accuracy;
}

void Trainer::probe(const Batch& batch, std::size_t task, std::size_t epoch,
                    double window_accuracy, bool log_due, bool decide_due) {
  (void)log_due;
  const LossGrad lg = loss_grad(params_, act_, batch, reg_);
  GradVarianceAccumulator noise(lg.grads);
  for_each_per_sample_grad(params_, act_, batch, reg_,
                           [&](std::size_t, const ParamSet& g) { noise.add(g); });

  CurvatureProbe probe_cfg = cfg_.probe;
  probe_cfg.seed = Rng::stream(seed_, "power", static_cast<std::uint64_t>(step_)).next_u64();
  const EigenEstimate eig = top_eigenvalue(params_, act_, batch, reg_, probe_cfg);
  if (!std::isfinite(eig.lambda_max))
    throw NumericError("non-finite top eigenvalue", "");

  const ForwardResult fwd = forward(params_, act_, batch);
  const Diagnostics diag = diagnostics(params_, lg.grads, fwd.hidden_preacts);

  std::vector<ThresholdReport> reports;
  for (std::size_t i = 0; i < params_.layers.size(); ++i) {
    const Scope scope = Scope::layer(params_.layers[i].id);
    const double lambda_bar =
        normalized_sharpness(eig.lambda_max, adam_.agg_step(scope));
    const WindowSnapshot snap = windows_[i].push(lambda_bar);
    reports.push_back(make_report(params_.layers[i].id, adam_.effective_step(scope),
                                  scoped_squared_norm(lg.grads, scope),
                                  noise.variance(i), batch.size(), lambda_bar, snap,
                                  cfg_.bounds));
  }
  const std::vector<Crossing> crossings = crossing_flags(reports);

  std::vector<LayerDecision> decisions;
  if (decide_due) {
    LrMap etas;
    for (std::size_t i = 0; i < params_.layers.size(); ++i)
      etas[params_.layers[i].id] = adam_.eta(i);
    DecisionResult res = decide(reports, step_, total_steps_, etas, *cfg_.controller);
    for (std::size_t i = 0; i < params_.layers.size(); ++i)
      adam_.set_eta(i, res.etas.at(params_.layers[i].id));
    decisions = std::move(res.decisions);
  }

  if (!sink_) return;
  MetricRecord r;
  r.kind = RecordKind::kStep;
  r.seed = seed_;
  r.task = task;
  r.epoch = epoch;
  r.step = step_;
  r.train_accuracy = window_accuracy;
  r.lambda_max = eig.lambda_max;
  r.lambda_bar = normalized_sharpness(eig.lambda_max, adam_.agg_step(Scope::global()));
  r.sigma_mb_sq = noise.variance();
  r.weight_norm = diag.weight_norm;
  r.grad_norm = diag.grad_norm;
  r.grad_param_ratio = diag.grad_param_ratio;
  r.use = diag.unit_sign_entropy;
  if (!eig.converged) r.flags.push_back("power_unconverged");
  if (diag.ratio_degenerate) r.flags.push_back("ratio_degenerate");
  if (cfg_.mode == Mode::kScheduled && !decide_due) r.flags.push_back("no_decision");

  for (std::size_t i = 0; i < reports.size(); ++i) {
    const ThresholdReport& rep = reports[i];
    LayerRecord l;
    l.layer_id = rep.layer_id;
    l.alpha = rep.alpha;
    l.alpha_g_star = rep.alpha_g_star.value;
    l.alpha_vol_star = rep.alpha_vol_star.value;
    l.alpha_tilde_star = rep.alpha_tilde_star.value;
    l.cantelli_cap = rep.cantelli_cap.value;
    l.vol = rep.vol;
    l.lambda_bar = rep.lambda_bar;
    l.sigma_ps_sq = rep.sigma_ps_sq;
    l.grad_sq_norm = rep.grad_sq_norm;
    l.eta = adam_.eta(i);
    l.crossed = crossings[i].crossed;
    if (!rep.armed) l.flags.push_back("unarmed");
    if (rep.alpha_g_star.capped) l.flags.push_back("g_capped");
    if (rep.alpha_vol_star.capped) l.flags.push_back("vol_capped");
    if (rep.alpha_tilde_star.capped) l.flags.push_back("tilde_capped");
    if (rep.cantelli_cap.capped) l.flags.push_back("cantelli_capped");
    if (!decisions.empty()) {
      l.decision = to_string(decisions[i].label);
      if (decisions[i].clamped) l.flags.push_back("clamped");
    }
    r.layers.push_back(std::move(l));
  }
  sink_(r);
}

SeedResult Trainer::run() {
  SeedResult res;
  res.seed = seed_;
  try {
    while (next_task_ < cfg_.stream.tasks)
      res.task_accuracy.push_back(train_task(next_task_));
  } catch (const NumericError& e) {
    res.aborted = true;
    res.error = e.what();
    if (sink_) {
      MetricRecord r;
      r.kind = RecordKind::kError;
      r.seed = seed_;
      r.task = next_task_;
      r.step = step_;
      r.message = e.what();
      r.flags.push_back("numeric_abort");
      sink_(r);
    }
  }
  return res;
}

SeedResult run_seed(const RunConfig& cfg, const BaseDataset& base,
                    std::uint64_t seed, std::ostream& log) {
  const ParamSet shape_params = initial_params(cfg, model_shape(cfg, base), seed);
  std::vector<std::string> ids;
  for (const auto& l : shape_params.layers) ids.push_back(l.id);
  MetricLogWriter writer(log, ids);
  Trainer trainer(cfg, base, seed, [&](const MetricRecord& r) { writer.write(r); });
  SeedResult res = trainer.run();
  log.flush();
  return res;
}

std::vector<SeedResult> run(const RunConfig& cfg_in, const std::filesystem::path& out_dir) {
  RunConfig cfg = cfg_in;
  cfg.finalize();
  const BaseDataset base = prepare(load_source(cfg.stream), cfg.stream);

  std::filesystem::create_directories(out_dir);
  {
    std::ofstream meta(out_dir / "run_config.txt");
    meta << to_config_text(cfg);
    meta << "# normalization=global_scalar mean=" << format_double(base.mean)
         << " std=" << format_double(base.stddev) << '\n';
    meta << "# samples=" << base.size() << " input_dim=" << base.inputs->cols()
         << " classes=" << base.num_classes << '\n';
  }

  std::vector<SeedResult> results;
  for (std::uint64_t seed : cfg.seeds) {
    std::ofstream log(out_dir / ("metrics_seed" + std::to_string(seed) + ".csv"));
    if (!log) throw ConfigError("cannot write into " + out_dir.string());
    results.push_back(run_seed(cfg, base, seed, log));
  }
  return results;
}

std::vector<SeedSummary> summarize(const std::vector<MetricRecord>& log) {
  struct Acc {
    std::map<std::size_t, double> accuracy;
    std::map<std::size_t, StepFlags> flags;
    std::size_t max_task = 0;
    bool aborted = false;
  };
  std::vector<std::uint64_t> order;
  std::map<std::uint64_t, Acc> by_seed;
  for (const auto& r : log) {
    if (!by_seed.count(r.seed)) order.push_back(r.seed);
    Acc& a = by_seed[r.seed];
    a.max_task = std::max(a.max_task, r.task);
    switch (r.kind) {
      case RecordKind::kTask:
        a.accuracy[r.task] = r.train_accuracy;
        break;
      case RecordKind::kStep: {
        std::vector<bool> crossed;
        for (const auto& l : r.layers) crossed.push_back(l.crossed);
        a.flags[r.task].push_back(std::move(crossed));
        break;
      }
      case RecordKind::kError:
        a.aborted = true;
        break;
    }
  }

  std::vector<SeedSummary> out;
  for (std::uint64_t seed : order) {
    const Acc& a = by_seed[seed];
    SeedSummary s;
    s.seed = seed;
    s.aborted = a.aborted;
    const std::size_t n_tasks = a.accuracy.empty() ? 0 : a.accuracy.rbegin()->first + 1;
    std::vector<StepFlags> tasks(n_tasks);
    for (std::size_t t = 0; t < n_tasks; ++t) {
      auto it = a.accuracy.find(t);
      s.task_accuracy.push_back(it == a.accuracy.end()
                                    ? std::numeric_limits<double>::quiet_NaN()
                                    : it->second);
      if (auto f = a.flags.find(t); f != a.flags.end()) tasks[t] = f->second;
    }
    const LotPrediction pred = predict_lot(tasks);
    s.predicted = pred.per_task;
    s.empty_task = pred.empty_task;
    s.overall = pred.overall;

    double acc_lo = std::numeric_limits<double>::infinity(), acc_hi = -acc_lo;
    double pred_lo = acc_lo, pred_hi = -acc_lo;
    for (std::size_t t = 0; t < n_tasks; ++t) {
      if (std::isfinite(s.task_accuracy[t])) {
        acc_lo = std::min(acc_lo, s.task_accuracy[t]);
        acc_hi = std::max(acc_hi, s.task_accuracy[t]);
      }
      if (!s.empty_task[t]) {
        pred_lo = std::min(pred_lo, s.predicted[t]);
        pred_hi = std::max(pred_hi, s.predicted[t]);
      }
    }
    s.degenerate_range = !(acc_hi > acc_lo) || !(pred_hi > pred_lo);
    for (std::size_t t = 0; t < n_tasks; ++t) {
      if (s.empty_task[t] || !std::isfinite(acc_lo)) {
        s.scaled.push_back(std::numeric_limits<double>::quiet_NaN());
        continue;
      }
      const double frac =
          pred_hi > pred_lo ? (s.predicted[t] - pred_lo) / (pred_hi - pred_lo) : 0.0;
      s.scaled.push_back(acc_hi - frac * (acc_hi - acc_lo));
    }
    out.push_back(std::move(s));
  }
  return out;
}

void write_summary(std::ostream& out, const std::vector<SeedSummary>& summaries) {
  out << "seed,task,accuracy,predicted,predicted_scaled,flags\n";
  std::size_t n_tasks = 0;
  for (const auto& s : summaries) {
    for (std::size_t t = 0; t < s.task_accuracy.size(); ++t) {
      std::string flags;
      if (s.empty_task[t]) flags = "empty_task";
      if (s.degenerate_range) flags += (flags.empty() ? "" : "|") + std::string("degenerate_range");
      out << s.seed << ',' << t << ',' << format_double(s.task_accuracy[t]) << ','
          << format_double(s.predicted[t]) << ',' << format_double(s.scaled[t]) << ','
          << (flags.empty() ? "-" : flags) << '\n';
    }
    double mean_acc = 0.0;
    std::size_t counted = 0;
    for (double a : s.task_accuracy)
      if (std::isfinite(a)) mean_acc += a, ++counted;
    out << s.seed << ",all," << format_double(counted ? mean_acc / counted : 0.0) << ','
        << format_double(s.overall) << ",na," << (s.aborted ? "aborted" : "-") << '\n';
    n_tasks = std::max(n_tasks, s.task_accuracy.size());
  }
  for (std::size_t t = 0; t < n_tasks; ++t) {
    double acc = 0.0, pred = 0.0;
    std::size_t na = 0, np = 0;
    for (const auto& s : summaries) {
      if (t < s.task_accuracy.size() && std::isfinite(s.task_accuracy[t])) acc += s.task_accuracy[t], ++na;
      if (t < s.predicted.size() && !s.empty_task[t]) pred += s.predicted[t], ++np;
    }
    out << "mean," << t << ',' << format_double(na ? acc / na : 0.0) << ','
        << format_double(np ? pred / np : 0.0) << ",na,-\n";
  }
}

}  // namespace lotlab
