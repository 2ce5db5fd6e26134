#include "sfa/train.hpp"

#include <cmath>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "doctest.h"
#include "sfa/ops.hpp"
#include "test_helpers.hpp"

using namespace sfa;
using sfa::test::bitwise_equal;

namespace {

FEModelConfig tiny_config() {
  FEModelConfig cfg;
  cfg.image_size = 16;
  cfg.patch_size = 8;
  cfg.channels = 1;
  cfg.num_frames = 4;
  cfg.hidden = 32;
  cfg.heads = 4;
  cfg.spatial_depth = 1;
  cfg.temporal_depth = 1;
  cfg.mlp_dim = 64;
  cfg.adapter_hidden = 32;
  cfg.num_classes = 4;
  return cfg;
}

DatasetSpec tiny_data(int classes, int train_per_class, int eval_per_class) {
  DatasetSpec spec;
  spec.seed = 11;
  spec.num_classes = classes;
  spec.clips_per_class_train = train_per_class;
  spec.clips_per_class_eval = eval_per_class;
  spec.source_frames = 16;
  spec.image_size = 16;
  spec.sprite_size = 5;
  spec.segments = 4;
  spec.noise_std = 0.05;
  return spec;
}

TrainConfig quick_train(int epochs, int batch, uint64_t seed) {
  TrainConfig cfg;
  cfg.epochs = epochs;
  cfg.local_batch = batch;
  cfg.base_lr = 0.05;
  cfg.momentum = 0.9;
  cfg.warmup_epochs = epochs > 0 ? 0.5 : 0.0;
  cfg.seed = seed;
  return cfg;
}

std::map<std::string, std::vector<double>> snapshot(const ParamStore& store) {
  std::map<std::string, std::vector<double>> out;
  for (const auto& [name, t] : store.entries())
    out[name] = std::vector<double>(t.data().begin(), t.data().end());
  return out;
}

bool stores_bitwise_equal(const ParamStore& a, const ParamStore& b) {
  if (a.entries().size() != b.entries().size()) return false;
  for (const auto& [name, t] : a.entries()) {
    if (!b.has(name)) return false;
    if (!bitwise_equal(t, b.at(name))) return false;
  }
  return true;
}

// one scalar trainable parameter whose loss is w^2 / 2, so grad == w
Tensor half_square_loss(ParamStore& store) {
  Tensor& w = store.at("head.w");
  return scale(mul(w, w), 0.5);
}

}  // namespace

TEST_CASE("warmup-cosine schedule hits its landmarks") {
  TrainConfig cfg;
  cfg.epochs = 10;
  cfg.warmup_epochs = 2.0;
  cfg.base_lr = 0.05;
  const long long total = 100;  // warmup spans the first 20 steps

  CHECK(lr_at(0, total, cfg) == 0.0);
  CHECK(lr_at(10, total, cfg) == doctest::Approx(0.025).epsilon(1e-15));
  CHECK(lr_at(20, total, cfg) == cfg.base_lr);  // cos(0) boundary, exact
  CHECK(std::abs(lr_at(60, total, cfg) - cfg.base_lr / 2) <= 1e-12);
  CHECK(std::abs(lr_at(100, total, cfg)) <= 1e-12);

  CHECK(lr_at(5, total, cfg) < lr_at(15, total, cfg));
  CHECK(lr_at(30, total, cfg) > lr_at(90, total, cfg));
  CHECK(lr_at(0, 0, cfg) == 0.0);

  TrainConfig flat = cfg;
  flat.warmup_epochs = 0.0;
  CHECK(lr_at(0, total, flat) == flat.base_lr);

  CHECK_THROWS_AS(lr_at(-1, total, cfg), std::invalid_argument);
  CHECK_THROWS_AS(lr_at(101, total, cfg), std::invalid_argument);
}

TEST_CASE("sgd momentum update matches the two-step hand trace") {
  sfa::test::PrecisionGuard guard(Precision::f64);
  ParamStore store;
  store.add("head.w", Tensor::full({1, 1}, 1.0, true));
  std::map<std::string, std::vector<double>> buffers;

  Tensor loss1 = half_square_loss(store);
  CHECK(loss1.item() == doctest::Approx(0.5));
  backward(loss1);
  sgd_step(store, 0.1, 0.9, buffers);
  CHECK(store.at("head.w").data()[0] == doctest::Approx(0.9).epsilon(1e-14));
  CHECK(buffers.at("head.w")[0] == doctest::Approx(1.0).epsilon(1e-14));
  CHECK_FALSE(store.at("head.w").has_grad());

  Tensor loss2 = half_square_loss(store);
  backward(loss2);
  sgd_step(store, 0.1, 0.9, buffers);
  CHECK(buffers.at("head.w")[0] == doctest::Approx(1.8).epsilon(1e-14));
  CHECK(store.at("head.w").data()[0] == doctest::Approx(0.72).epsilon(1e-14));
}

TEST_CASE("sgd edge cases: zero lr, zero momentum, frozen and gradient-free tensors") {
  sfa::test::PrecisionGuard guard(Precision::f64);
  SUBCASE("zero lr only builds velocity") {
    ParamStore store;
    store.add("head.w", Tensor::full({1, 1}, 2.0, true));
    std::map<std::string, std::vector<double>> buffers;
    backward(half_square_loss(store));
    sgd_step(store, 0.0, 0.5, buffers);
    CHECK(store.at("head.w").data()[0] == 2.0);
    CHECK(buffers.at("head.w")[0] == doctest::Approx(2.0));
  }

  SUBCASE("zero momentum is plain gradient descent") {
    ParamStore store;
    store.add("head.w", Tensor::full({1, 1}, 1.0, true));
    std::map<std::string, std::vector<double>> buffers;
    backward(half_square_loss(store));
    sgd_step(store, 0.1, 0.0, buffers);
    backward(half_square_loss(store));
    sgd_step(store, 0.1, 0.0, buffers);
    CHECK(store.at("head.w").data()[0] == doctest::Approx(0.81).epsilon(1e-14));
  }

  SUBCASE("frozen tensors are skipped and own no buffer") {
    ParamStore store;
    store.add("head.w", Tensor::full({1, 1}, 1.0, true));
    store.add("spatial.cls", Tensor::full({1, 4}, 0.25, true));
    store.set_frozen("spatial", true);
    std::map<std::string, std::vector<double>> buffers;
    backward(half_square_loss(store));
    sgd_step(store, 0.1, 0.9, buffers);
    CHECK(store.at("spatial.cls").data()[0] == 0.25);
    CHECK(buffers.count("spatial.cls") == 0);
    CHECK(buffers.count("head.w") == 1);
  }

  SUBCASE("a trainable tensor that received no gradient is an error") {
    ParamStore store;
    store.add("head.w", Tensor::full({1, 1}, 1.0, true));
    store.add("head.b", Tensor::full({1}, 0.0, true));  // never touched by the loss
    std::map<std::string, std::vector<double>> buffers;
    backward(half_square_loss(store));
    CHECK_THROWS_WITH_AS(sgd_step(store, 0.1, 0.9, buffers),
                         doctest::Contains("head.b"), std::logic_error);
  }
}

TEST_CASE("forward mode is inferred from the store layout") {
  const FEModelConfig cfg = tiny_config();
  FEModel model(cfg);
  CHECK(mode_of(model.init_params(Mode::baseline, 1)) == Mode::baseline);
  CHECK(mode_of(model.init_params(Mode::sfa, 1)) == Mode::sfa);
  CHECK(mode_of(model.init_params(Mode::pooled, 1)) == Mode::pooled);
}

TEST_CASE("evaluation ranks ties by class index") {
  FEModelConfig cfg = tiny_config();
  cfg.num_classes = 5;
  FEModel model(cfg);
  ParamStore store = model.init_params(Mode::pooled, 3);
  for (double& v : store.at("head.w").raw_data()) v = 0.0;
  auto bias = store.at("head.b").raw_data();
  const double fixed[5] = {3.0, 5.0, 5.0, 1.0, 0.0};
  for (size_t i = 0; i < 5; ++i) bias[i] = fixed[i];

  // every clip now scores the same logit row: ranks are 3, 1, 2, 4, 5
  const DatasetSpec data = tiny_data(5, 2, 3);
  const EvalResult r = evaluate(model, store, {data, 1});
  CHECK(r.top1 == 20.0);
  CHECK(r.top5 == 100.0);
}

TEST_CASE("order-blind readout scores exactly at chance") {
  // classes share frame populations clip-for-clip, so a mean-pooled model
  // assigns the same logits to all K relabelings of a clip; ranks within
  // each group of K are then a permutation of 1..K
  FEModelConfig cfg = tiny_config();
  cfg.num_classes = 8;
  FEModel model(cfg);
  ParamStore store = model.init_params(Mode::pooled, 19);
  const DatasetSpec data = tiny_data(8, 2, 4);
  const EvalResult r = evaluate(model, store, {data, 4});
  CHECK(r.top1 == doctest::Approx(100.0 / 8).epsilon(1e-12));
  CHECK(r.top5 == doctest::Approx(500.0 / 8).epsilon(1e-12));
}

TEST_CASE("near-peak selection picks the first eval within the margin") {
  RunMetrics m;
  auto with_top1 = [](std::vector<double> xs) {
    RunMetrics r;
    for (size_t i = 0; i < xs.size(); ++i) r.evals.push_back({double(i + 1), xs[i], 0.0, 0.0, 0});
    return r;
  };
  CHECK(near_peak_epoch(with_top1({10, 20, 30}), 1.0) == 2);
  CHECK(near_peak_epoch(with_top1({15, 15, 15}), 1.0) == 0);
  CHECK(near_peak_epoch(with_top1({28, 30, 29.5}), 1.0) == 1);
  CHECK(near_peak_epoch(with_top1({10, 20, 30}), 100.0) == 0);
  CHECK_THROWS_AS(near_peak_epoch(RunMetrics{}, 1.0), std::invalid_argument);
}

TEST_CASE("zero training epochs leave the store and metrics empty") {
  const FEModelConfig cfg = tiny_config();
  FEModel model(cfg);
  ParamStore store = model.init_params(Mode::baseline, 5);
  const auto before = snapshot(store);

  const RunMetrics m = run_stage(model, store, {tiny_data(4, 2, 1), 4}, quick_train(0, 4, 0));
  CHECK(m.steps.empty());
  CHECK(m.evals.empty());
  CHECK(m.grad_param_counts.empty());
  CHECK(m.mean_step_seconds == 0.0);
  for (const auto& [name, vals] : before)
    CHECK(bitwise_equal(std::span<const double>(vals), store.at(name).data()));
}

TEST_CASE("frozen groups stay bitwise fixed while the rest trains") {
  const FEModelConfig cfg = tiny_config();
  FEModel model(cfg);

  SUBCASE("freeze flags passed to the run") {
    ParamStore store = model.init_params(Mode::baseline, 5);
    const auto before = snapshot(store);
    const std::map<std::string, bool> flags{{"temporal", true}};
    const RunMetrics m =
        run_stage(model, store, {tiny_data(4, 4, 1), 4}, quick_train(1, 4, 0), &flags);
    CHECK(m.steps.size() == 4);

    for (const auto& [name, vals] : before) {
      const bool same = bitwise_equal(std::span<const double>(vals), store.at(name).data());
      if (ParamStore::group_of(name) == "temporal") CHECK(same);
    }
    CHECK_FALSE(bitwise_equal(std::span<const double>(before.at("spatial.cls")),
                              store.at("spatial.cls").data()));
    CHECK_FALSE(
        bitwise_equal(std::span<const double>(before.at("head.w")), store.at("head.w").data()));
    CHECK(m.grad_param_counts.count("temporal") == 0);
    CHECK(m.grad_param_counts.at("spatial") == store.group_sizes().at("spatial"));
  }

  SUBCASE("stage-two store arrives frozen from surgery") {
    ParamStore stage1 = model.init_params(Mode::baseline, 5);
    Checkpoint ck{stage1, make_meta(stage1, cfg, Mode::baseline, "stage1", 0, 11)};
    ParamStore store = surgery_stage2_init(ck, cfg, HeadPolicy::copy, 21);

    const RunMetrics m = run_stage(model, store, {tiny_data(4, 4, 1), 4}, quick_train(1, 4, 0));
    for (const auto& [name, t] : stage1.entries())
      if (ParamStore::group_of(name) == "spatial") CHECK(bitwise_equal(t, store.at(name)));

    const auto sizes = store.group_sizes();
    CHECK(m.grad_param_counts.count("spatial") == 0);
    CHECK(m.grad_param_counts.at("temporal") == sizes.at("temporal"));
    CHECK(m.grad_param_counts.at("adapter") == sizes.at("adapter"));
    CHECK(m.grad_param_counts.at("head") == sizes.at("head"));
  }
}

TEST_CASE("training is deterministic for a fixed seed") {
  const FEModelConfig cfg = tiny_config();
  FEModel model(cfg);
  const DatasetSpec data = tiny_data(4, 4, 2);

  auto run_once = [&](uint64_t train_seed) {
    ParamStore store = model.init_params(Mode::baseline, 7);
    RunMetrics m = run_stage(model, store, {data, 4}, quick_train(2, 4, train_seed));
    return std::pair<RunMetrics, ParamStore>(std::move(m), std::move(store));
  };

  auto [m1, s1] = run_once(123);
  auto [m2, s2] = run_once(123);
  REQUIRE(m1.steps.size() == m2.steps.size());
  CHECK(m1.steps.size() == 8);
  for (size_t i = 0; i < m1.steps.size(); ++i) {
    CHECK(m1.steps[i].loss == m2.steps[i].loss);
    CHECK(m1.steps[i].lr == m2.steps[i].lr);
  }
  REQUIRE(m1.evals.size() == m2.evals.size());
  for (size_t i = 0; i < m1.evals.size(); ++i) {
    CHECK(m1.evals[i].top1 == m2.evals[i].top1);
    CHECK(m1.evals[i].top5 == m2.evals[i].top5);
  }
  CHECK(stores_bitwise_equal(s1, s2));

  auto [m3, s3] = run_once(456);
  bool any_diff = false;
  for (size_t i = 0; i < m1.steps.size(); ++i) any_diff |= m1.steps[i].loss != m3.steps[i].loss;
  CHECK(any_diff);
}

TEST_CASE("a frozen-backbone step is cheaper than a full step") {
  FEModelConfig cfg = tiny_config();
  cfg.image_size = 32;
  cfg.num_frames = 8;
  cfg.hidden = 64;
  cfg.spatial_depth = 4;
  cfg.temporal_depth = 2;
  cfg.mlp_dim = 256;
  cfg.adapter_hidden = 64;
  FEModel model(cfg);

  DatasetSpec data = tiny_data(4, 8, 1);
  data.image_size = 32;
  data.source_frames = 32;

  TrainConfig train = quick_train(1, 8, 0);
  train.warmup_epochs = 0.25;

  ParamStore full = model.init_params(Mode::baseline, 2);
  const RunMetrics m_full = run_stage(model, full, {data, 8}, train);

  ParamStore frozen = model.init_params(Mode::sfa, 2);
  const std::map<std::string, bool> flags{{"spatial", true}};
  const RunMetrics m_frozen = run_stage(model, frozen, {data, 8}, train, &flags);

  REQUIRE(m_full.steps.size() == 4);
  REQUIRE(m_frozen.steps.size() == 4);
  CHECK(m_frozen.mean_step_seconds < m_full.mean_step_seconds);
}

TEST_CASE("shape and schedule preconditions fail before the first step") {
  const FEModelConfig cfg = tiny_config();
  FEModel model(cfg);

  SUBCASE("head width must match the dataset") {
    ParamStore store = model.init_params(Mode::baseline, 1);
    CHECK_THROWS_WITH_AS(run_stage(model, store, {tiny_data(5, 2, 1), 4}, quick_train(1, 2, 0)),
                         doctest::Contains("classes"), std::invalid_argument);
  }
  SUBCASE("clip length must match the temporal stack") {
    ParamStore store = model.init_params(Mode::baseline, 1);
    CHECK_THROWS_WITH_AS(run_stage(model, store, {tiny_data(4, 2, 1), 8}, quick_train(1, 2, 0)),
                         doctest::Contains("frame"), std::invalid_argument);
  }
  SUBCASE("batch larger than the training split") {
    ParamStore store = model.init_params(Mode::baseline, 1);
    CHECK_THROWS_WITH_AS(run_stage(model, store, {tiny_data(4, 2, 1), 4}, quick_train(1, 100, 0)),
                         doctest::Contains("local_batch"), std::invalid_argument);
  }
  SUBCASE("more frames than the source material") {
    ParamStore store = model.init_params(Mode::pooled, 1);
    CHECK_THROWS_AS(run_stage(model, store, {tiny_data(4, 2, 1), 32}, quick_train(1, 2, 0)),
                    std::invalid_argument);
  }
  SUBCASE("warmup longer than the run") {
    ParamStore store = model.init_params(Mode::baseline, 1);
    TrainConfig bad = quick_train(1, 2, 0);
    bad.warmup_epochs = 2.0;
    CHECK_THROWS_AS(run_stage(model, store, {tiny_data(4, 2, 1), 4}, bad),
                    std::invalid_argument);
  }
}

TEST_CASE("evaluation cadence follows eval_every and per-epoch fallback") {
  const FEModelConfig cfg = tiny_config();
  FEModel model(cfg);
  const DatasetSpec data = tiny_data(4, 5, 1);  // 20 train clips, batch 5: 4 steps/epoch

  SUBCASE("every k steps, with fractional epochs") {
    ParamStore store = model.init_params(Mode::pooled, 9);
    TrainConfig train = quick_train(2, 5, 0);
    train.eval_every = 3;
    const RunMetrics m = run_stage(model, store, {data, 4}, train);
    CHECK(m.steps.size() == 8);
    REQUIRE(m.evals.size() == 2);
    CHECK(m.evals[0].steps == 3);
    CHECK(m.evals[1].steps == 6);
    CHECK(m.evals[0].epoch == 0.75);
    CHECK(m.evals[1].epoch == 1.5);
    CHECK(m.evals[0].wall_seconds <= m.evals[1].wall_seconds);
    CHECK(m.evals[1].wall_seconds <= m.wall_seconds);
  }

  SUBCASE("once per epoch by default") {
    ParamStore store = model.init_params(Mode::pooled, 9);
    const RunMetrics m = run_stage(model, store, {data, 4}, quick_train(2, 5, 0));
    REQUIRE(m.evals.size() == 2);
    CHECK(m.evals[0].epoch == 1.0);
    CHECK(m.evals[1].epoch == 2.0);
    CHECK(m.evals[0].steps == 4);
    CHECK(m.evals[1].steps == 8);
  }
}

TEST_CASE("a single fresh pipeline step reproduces a direct stage run") {
  FEModelConfig base = tiny_config();
  const DatasetSpec data = tiny_data(4, 4, 2);

  RunSpec spec;
  spec.name = "solo";
  spec.init = InitKind::fresh;
  spec.mode = Mode::baseline;
  spec.frames = 4;
  spec.init_seed = 21;
  spec.train = quick_train(1, 4, 33);
  const PipelineResult pr = run_pipeline(base, data, {spec});
  REQUIRE(pr.stages.size() == 1);

  FEModelConfig cfg = base;
  cfg.num_frames = 4;
  FEModel model(cfg);
  ParamStore store = model.init_params(Mode::baseline, 21);
  const RunMetrics direct = run_stage(model, store, {data, 4}, spec.train);

  const StageResult& st = pr.stages[0];
  REQUIRE(st.metrics.steps.size() == direct.steps.size());
  for (size_t i = 0; i < direct.steps.size(); ++i)
    CHECK(st.metrics.steps[i].loss == direct.steps[i].loss);
  CHECK(stores_bitwise_equal(st.checkpoint.store, store));
  CHECK(st.checkpoint.meta.stage == "solo");
  CHECK(st.checkpoint.meta.epoch == 1);
  CHECK(st.checkpoint.meta.mode == Mode::baseline);
  CHECK(st.checkpoint.meta.dataset_seed == data.seed);
  CHECK(st.checkpoint.meta.groups.at("spatial") == false);
  CHECK(pr.total_wall_seconds == st.wall_seconds);
  CHECK(st.cumulative_wall_seconds == st.wall_seconds);
}

TEST_CASE("two-step pipeline hands a trained backbone through surgery") {
  FEModelConfig base = tiny_config();
  const DatasetSpec data = tiny_data(4, 4, 2);

  RunSpec stage1;
  stage1.name = "stage1";
  stage1.init = InitKind::fresh;
  stage1.mode = Mode::baseline;
  stage1.frames = 4;
  stage1.init_seed = 2;
  stage1.train = quick_train(1, 4, 1);

  RunSpec stage2;
  stage2.name = "stage2";
  stage2.source = "stage1";
  stage2.init = InitKind::surgery;
  stage2.frames = 8;
  stage2.head_policy = HeadPolicy::copy;
  stage2.init_seed = 3;
  stage2.train = quick_train(1, 4, 4);

  const PipelineResult pr = run_pipeline(base, data, {stage1, stage2});
  REQUIRE(pr.stages.size() == 2);
  const StageResult& s1 = pr.stages[0];
  const StageResult& s2 = pr.stages[1];

  CHECK(s2.checkpoint.store.has_group("adapter"));
  CHECK(s2.checkpoint.store.frozen("spatial"));
  CHECK_FALSE(s2.checkpoint.store.frozen("temporal"));
  CHECK(s2.checkpoint.meta.mode == Mode::sfa);
  CHECK(s2.checkpoint.meta.groups.at("spatial") == true);
  CHECK(s2.checkpoint.store.at("temporal.pos").rows() == 8);

  // the frozen backbone is carried through stage 2 untouched
  for (const auto& [name, t] : s1.checkpoint.store.entries())
    if (ParamStore::group_of(name) == "spatial")
      CHECK(bitwise_equal(t, s2.checkpoint.store.at(name)));
  CHECK(s2.metrics.grad_param_counts.count("spatial") == 0);

  CHECK(s1.cumulative_wall_seconds == s1.wall_seconds);
  CHECK(s2.cumulative_wall_seconds == s1.wall_seconds + s2.wall_seconds);
  CHECK(pr.total_wall_seconds == s2.cumulative_wall_seconds);
}

TEST_CASE("copy-all chaining resamples only the temporal position table") {
  FEModelConfig base = tiny_config();
  const DatasetSpec data = tiny_data(4, 2, 1);

  auto step = [](const std::string& name, const std::string& source, InitKind kind, int frames) {
    RunSpec s;
    s.name = name;
    s.source = source;
    s.init = kind;
    s.mode = Mode::baseline;
    s.frames = frames;
    s.init_seed = 40;
    s.train = quick_train(0, 4, 0);  // transfer only, no updates
    return s;
  };
  const PipelineResult pr =
      run_pipeline(base, data, {step("a", "", InitKind::fresh, 4),
                                step("b", "a", InitKind::copy_all, 8),
                                step("c", "b", InitKind::copy_all, 16)});
  REQUIRE(pr.stages.size() == 3);
  const ParamStore& a = pr.stages[0].checkpoint.store;
  const ParamStore& b = pr.stages[1].checkpoint.store;
  const ParamStore& c = pr.stages[2].checkpoint.store;

  CHECK(bitwise_equal(interpolate_temporal_posemb(a.at("temporal.pos"), 8), b.at("temporal.pos")));
  CHECK(bitwise_equal(interpolate_temporal_posemb(b.at("temporal.pos"), 16),
                      c.at("temporal.pos")));
  CHECK(c.at("temporal.pos").rows() == 16);
  for (const auto& [name, t] : a.entries()) {
    if (name == "temporal.pos") continue;
    CHECK(bitwise_equal(t, b.at(name)));
    CHECK(bitwise_equal(t, c.at(name)));
  }
  for (const std::string& g : c.group_names()) CHECK_FALSE(c.frozen(g));
  CHECK(pr.stages[2].checkpoint.meta.mode == Mode::baseline);
}

TEST_CASE("pipeline specs are validated before anything runs") {
  FEModelConfig base = tiny_config();
  const DatasetSpec data = tiny_data(4, 2, 1);

  RunSpec fresh;
  fresh.name = "a";
  fresh.init = InitKind::fresh;
  fresh.frames = 4;
  fresh.train = quick_train(0, 4, 0);

  SUBCASE("dangling source") {
    RunSpec bad = fresh;
    bad.name = "b";
    bad.source = "zzz";
    bad.init = InitKind::surgery;
    CHECK_THROWS_WITH_AS(run_pipeline(base, data, {fresh, bad}), doctest::Contains("zzz"),
                         std::invalid_argument);
  }
  SUBCASE("source defined later does not count") {
    RunSpec early = fresh;
    early.name = "b";
    early.source = "a";
    early.init = InitKind::copy_all;
    CHECK_THROWS_AS(run_pipeline(base, data, {early, fresh}), std::invalid_argument);
  }
  SUBCASE("duplicate names") {
    CHECK_THROWS_WITH_AS(run_pipeline(base, data, {fresh, fresh}), doctest::Contains("duplicate"),
                         std::invalid_argument);
  }
  SUBCASE("fresh step with a source") {
    RunSpec bad = fresh;
    bad.source = "a";
    CHECK_THROWS_AS(run_pipeline(base, data, {fresh, bad}), std::invalid_argument);
  }
  SUBCASE("unnamed step") {
    RunSpec bad = fresh;
    bad.name = "";
    CHECK_THROWS_AS(run_pipeline(base, data, {bad}), std::invalid_argument);
  }
}
