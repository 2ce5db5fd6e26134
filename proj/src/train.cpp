#include "sfa/train.hpp"

#include <chrono>
#include <cmath>
#include <set>
#include <stdexcept>

#include "sfa/ops.hpp"
#include "sfa/rng.hpp"

namespace sfa {

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs < 0) throw std::invalid_argument("epochs must be non-negative");
  if (local_batch < 1) throw std::invalid_argument("local_batch must be positive");
  if (!(base_lr > 0.0)) throw std::invalid_argument("base_lr must be positive");
  if (momentum < 0.0 || momentum >= 1.0) throw std::invalid_argument("momentum must be in [0, 1)");
  if (warmup_epochs < 0.0 || (epochs > 0 && warmup_epochs >= epochs))
    throw std::invalid_argument("warmup_epochs must satisfy 0 <= warmup < epochs");
  if (eval_every < 0) throw std::invalid_argument("eval_every must be non-negative");
  if (label_smoothing < 0.0 || label_smoothing >= 1.0)
    throw std::invalid_argument("label_smoothing must be in [0, 1)");
}

double lr_at(long long step, long long total_steps, const TrainConfig& cfg) {
  if (step < 0 || step > total_steps)
    throw std::invalid_argument("step " + std::to_string(step) + " outside [0, " +
                                std::to_string(total_steps) + "]");
  if (total_steps == 0) return 0.0;
  const double warmup_steps =
      cfg.warmup_epochs * double(total_steps) / double(std::max(cfg.epochs, 1));
  if (warmup_steps > 0.0 && double(step) < warmup_steps)
    return cfg.base_lr * double(step) / warmup_steps;
  const double progress = (double(step) - warmup_steps) / (double(total_steps) - warmup_steps);
  return cfg.base_lr * 0.5 * (1.0 + std::cos(M_PI * progress));
}

void sgd_step(ParamStore& store, double lr, double momentum,
              std::map<std::string, std::vector<double>>& momentum_buffers) {
  for (const auto& [name, entry] : store.entries()) {
    if (!entry.requires_grad()) continue;
    Tensor& t = store.at(name);
    if (!t.has_grad())
      throw std::logic_error("sgd_step: trainable parameter '" + name +
                             "' received no gradient (broken graph?)");
    auto grad = t.grad();
    auto w = t.raw_data();
    auto& v = momentum_buffers[name];
    if (v.empty()) v.assign(w.size(), 0.0);
    for (size_t i = 0; i < w.size(); ++i) {
      v[i] = quantize(momentum * v[i] + grad[i]);
      w[i] = quantize(w[i] - lr * v[i]);
    }
    t.clear_grad();
  }
}

Mode mode_of(const ParamStore& store) {
  if (!store.has_group("temporal")) return Mode::pooled;
  return store.has_group("adapter") ? Mode::sfa : Mode::baseline;
}

EvalResult evaluate(const FEModel& model, const ParamStore& store, const RunData& data) {
  NoGradGuard no_grad;
  const Mode mode = mode_of(store);
  const std::vector<int> ids = stride_frame_ids(data.dataset.source_frames, data.frames);
  const int n = data.dataset.split_size(Split::eval);
  long long hits1 = 0, hits5 = 0;
  for (int index = 0; index < n; ++index) {
    const LabeledClip lc = make_clip_frames(data.dataset, Split::eval, index, ids);
    const Tensor logits = model.forward(lc.video, store, mode);
    const auto row = logits.data();
    const double own = row[size_t(lc.label)];
    long long rank = 1;  // 1 + classes ranked strictly ahead (ties: lower index wins)
    for (int c = 0; c < int(row.size()); ++c) {
      if (c == lc.label) continue;
      if (row[size_t(c)] > own || (row[size_t(c)] == own && c < lc.label)) ++rank;
    }
    if (rank <= 1) ++hits1;
    if (rank <= 5) ++hits5;
  }
  return {100.0 * double(hits1) / double(n), 100.0 * double(hits5) / double(n)};
}

size_t near_peak_epoch(const RunMetrics& metrics, double margin_pp) {
  if (metrics.evals.empty())
    throw std::invalid_argument("near_peak_epoch needs at least one evaluation");
  double best = metrics.evals[0].top1;
  for (const EvalRecord& e : metrics.evals) best = std::max(best, e.top1);
  for (size_t i = 0; i < metrics.evals.size(); ++i)
    if (metrics.evals[i].top1 >= best - margin_pp) return i;
  return metrics.evals.size() - 1;  // unreachable: best itself qualifies
}

RunMetrics run_stage(const FEModel& model, ParamStore& store, const RunData& data,
                     const TrainConfig& cfg, const std::map<std::string, bool>* freeze_flags) {
  cfg.validate();
  data.dataset.validate();
  if (freeze_flags)
    for (const auto& [group, frozen] : *freeze_flags) store.set_frozen(group, frozen);

  // all shape preconditions fail before the first step
  const Mode mode = mode_of(store);
  (void)stride_frame_ids(data.dataset.source_frames, data.frames);
  if (store.at("head.w").cols() != data.dataset.num_classes)
    throw std::invalid_argument("head is " + std::to_string(store.at("head.w").cols()) +
                                "-way but the dataset has " +
                                std::to_string(data.dataset.num_classes) + " classes");
  if (mode != Mode::pooled) {
    const int pos_rows = store.at("temporal.pos").rows();
    if (pos_rows != data.frames || model.config().num_frames != data.frames)
      throw std::invalid_argument(
          "data provides " + std::to_string(data.frames) + "-frame clips but the model expects " +
          std::to_string(model.config().num_frames) + " (positional table " +
          std::to_string(pos_rows) + ")");
  }

  const long long steps_per_epoch = data.dataset.split_size(Split::train) / cfg.local_batch;
  if (cfg.epochs > 0 && steps_per_epoch == 0)
    throw std::invalid_argument("local_batch exceeds the training split");
  const long long total_steps = steps_per_epoch * cfg.epochs;

  RunMetrics metrics;
  std::map<std::string, std::vector<double>> momentum_buffers;
  const auto t_start = std::chrono::steady_clock::now();
  double step_seconds = 0.0;
  long long step = 0;

  auto run_eval = [&](double epoch_completed) {
    const EvalResult r = evaluate(model, store, data);
    metrics.evals.push_back({epoch_completed, r.top1, r.top5, seconds_since(t_start), step});
  };

  std::vector<Video> clips;
  std::vector<int> labels;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    BatchIter batches(data.dataset, Split::train, cfg.local_batch, data.frames,
                      hash_combine(cfg.seed, uint64_t(epoch)));
    while (batches.next(clips, labels)) {
      const auto t0 = std::chrono::steady_clock::now();
      Tensor logits = model.forward_batch(clips, store, mode);
      Tensor loss = cross_entropy(logits, labels, cfg.label_smoothing);
      const double loss_value = loss.item();
      if (!std::isfinite(loss_value))
        throw std::runtime_error("non-finite loss at step " + std::to_string(step));
      backward(loss);
      if (step == 0)
        for (const auto& [name, t] : store.entries())
          if (t.has_grad()) metrics.grad_param_counts[ParamStore::group_of(name)] += t.size();
      const double lr = lr_at(step, total_steps, cfg);
      sgd_step(store, lr, cfg.momentum, momentum_buffers);
      step_seconds += seconds_since(t0);
      metrics.steps.push_back({step, loss_value, lr});
      ++step;
      if (cfg.eval_every > 0 && step % cfg.eval_every == 0)
        run_eval(double(step) / double(steps_per_epoch));
    }
    if (cfg.eval_every == 0) run_eval(double(epoch) + 1.0);
  }

  metrics.mean_step_seconds = step > 0 ? step_seconds / double(step) : 0.0;
  metrics.wall_seconds = seconds_since(t_start);
  return metrics;
}

PipelineResult run_pipeline(const FEModelConfig& base_config, const DatasetSpec& dataset,
                            const std::vector<RunSpec>& specs) {
  // every source must name an earlier step; fail before any training starts
  std::set<std::string> known;
  for (const RunSpec& spec : specs) {
    if (spec.name.empty()) throw std::invalid_argument("pipeline step without a name");
    if (known.count(spec.name))
      throw std::invalid_argument("duplicate pipeline step name '" + spec.name + "'");
    if (spec.init == InitKind::fresh) {
      if (!spec.source.empty())
        throw std::invalid_argument("step '" + spec.name + "' is fresh but names a source");
    } else if (!known.count(spec.source)) {
      throw std::invalid_argument("step '" + spec.name + "' references unknown source '" +
                                  spec.source + "'");
    }
    known.insert(spec.name);
  }

  PipelineResult result;
  std::map<std::string, size_t> finished;
  for (const RunSpec& spec : specs) {
    FEModelConfig cfg = base_config;
    cfg.num_frames = spec.frames;

    ParamStore store;
    Mode mode = spec.mode;
    if (spec.init == InitKind::fresh) {
      store = FEModel(cfg).init_params(spec.mode, spec.init_seed);
    } else {
      const Checkpoint& src = result.stages[finished.at(spec.source)].checkpoint;
      if (spec.init == InitKind::surgery) {
        store = surgery_stage2_init(src, cfg, spec.head_policy, spec.init_seed);
        mode = Mode::sfa;
      } else {
        store = copy_all_init(src, cfg);
        mode = src.meta.mode;
      }
    }

    FEModel model(cfg);
    StageResult stage;
    stage.name = spec.name;
    stage.metrics = run_stage(model, store, {dataset, spec.frames}, spec.train);
    stage.wall_seconds = stage.metrics.wall_seconds;
    result.total_wall_seconds += stage.wall_seconds;
    stage.cumulative_wall_seconds = result.total_wall_seconds;
    CheckpointMeta meta =
        make_meta(store, cfg, mode, spec.name, spec.train.epochs, dataset.seed);
    stage.checkpoint = Checkpoint{std::move(store), std::move(meta)};
    finished[spec.name] = result.stages.size();
    result.stages.push_back(std::move(stage));
  }
  return result;
}

}  // namespace sfa
