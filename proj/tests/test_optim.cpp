#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <vector>

#include "signet/dataset.hpp"
#include "signet/error.hpp"
#include "signet/nn_ops.hpp"
#include "signet/optim.hpp"

using namespace signet;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const char* name) {
  fs::path dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string((std::istreambuf_iterator<char>(in)), {});
}

ModelConfig mini_config() {
  ModelConfig c;
  c.conv_channels = {4, 6, 8};
  c.lstm_hidden = 12;
  c.fc_hidden = 16;
  c.num_classes = 2;
  c.frames = 4;
  c.height = 16;
  c.width = 16;
  c.dropout_p = 0.0;
  return c;
}

}  // namespace

// -------------------------------------------------------------------- adam

TEST_CASE("adam: zero gradients leave parameters unchanged, t advances") {
  Tensor p = Tensor::from_data({3}, {1.0f, -2.0f, 0.5f});
  Tensor g(std::vector<std::int64_t>{3});
  AdamState s = AdamState::init_for({&p}, OptimizerConfig{});
  for (int step = 0; step < 5; ++step) {
    adam_step({&p}, {&g}, s);
  }
  CHECK(s.step_count == 5);
  CHECK(p[0] == 1.0f);
  CHECK(p[1] == -2.0f);
  CHECK(p[2] == 0.5f);
}

TEST_CASE("adam: scalar hand trace for one and two unit-gradient steps") {
  Tensor p = Tensor::from_data({1}, {1.0f});
  Tensor g = Tensor::from_data({1}, {1.0f});
  AdamState s = AdamState::init_for({&p}, OptimizerConfig{});

  adam_step({&p}, {&g}, s);
  // bias correction makes m_hat = v_hat = 1, so the step is lr/(1+eps)
  CHECK(p[0] == doctest::Approx(0.999).epsilon(1e-6));

  adam_step({&p}, {&g}, s);
  CHECK(p[0] == doctest::Approx(0.998).epsilon(1e-5));
}

TEST_CASE("adam: non-finite gradient aborts before touching state") {
  Tensor p = Tensor::from_data({2}, {1.0f, 2.0f});
  std::vector<float> bad{1.0f, 0.0f};
  bad[1] = std::numeric_limits<float>::quiet_NaN();
  Tensor g = Tensor::from_data({2}, std::move(bad));
  AdamState s = AdamState::init_for({&p}, OptimizerConfig{});
  CHECK_THROWS_AS(adam_step({&p}, {&g}, s), Error);
  CHECK(s.step_count == 0);
  CHECK(p[0] == 1.0f);
  CHECK(p[1] == 2.0f);
  CHECK(s.m[0][0] == 0.0f);
}

TEST_CASE("adam: gradient shape mismatch is rejected") {
  Tensor p(std::vector<std::int64_t>{2});
  Tensor g(std::vector<std::int64_t>{3});
  AdamState s = AdamState::init_for({&p}, OptimizerConfig{});
  CHECK_THROWS_AS(adam_step({&p}, {&g}, s), Error);
}

// --------------------------------------------------------------- scheduler

TEST_CASE("scheduler: monotone improvement never reduces the lr") {
  PlateauScheduler s(0.001, SchedulerConfig{});
  for (double loss : {1.0, 0.9, 0.8}) {
    CHECK(s.step(loss) == 0.001);
  }
}

TEST_CASE("scheduler: reduction lands exactly on the 4th bad epoch") {
  PlateauScheduler s(0.001, SchedulerConfig{});
  CHECK(s.step(1.0) == 0.001);
  CHECK(s.step(0.9) == 0.001);
  CHECK(s.step(0.91) == 0.001);   // bad 1
  CHECK(s.step(0.92) == 0.001);   // bad 2
  CHECK(s.step(0.93) == 0.001);   // bad 3 == patience, still waiting
  CHECK(s.step(0.94) == doctest::Approx(0.0001));  // bad 4 > patience
}

TEST_CASE("scheduler: lr never drops below min_lr") {
  SchedulerConfig cfg;
  cfg.min_lr = 1e-6;
  PlateauScheduler s(1e-6, cfg);
  for (int i = 0; i < 20; ++i) {
    CHECK(s.step(5.0) == 1e-6);
  }
}

TEST_CASE("scheduler: lr sequence is non-increasing under any loss stream") {
  PlateauScheduler s(0.01, SchedulerConfig{});
  Rng rng(33);
  double prev = 0.01;
  for (int i = 0; i < 200; ++i) {
    const double lr = s.step(rng.uniform(0.0, 2.0));
    CHECK(lr <= prev);
    CHECK(lr >= SchedulerConfig{}.min_lr);
    prev = lr;
  }
}

TEST_CASE("scheduler: improvements below the threshold count as bad epochs") {
  PlateauScheduler s(0.001, SchedulerConfig{});
  CHECK(s.step(1.0) == 0.001);
  // every loss stays above best - threshold, so none counts as improvement
  CHECK(s.step(0.99998) == 0.001);
  CHECK(s.step(0.99996) == 0.001);
  CHECK(s.step(0.99994) == 0.001);
  CHECK(s.step(0.99992) == doctest::Approx(0.0001));
}

// ------------------------------------------------------------- early stop

TEST_CASE("early stop: strictly decreasing losses never stop") {
  EarlyStopper e(10);
  double loss = 5.0;
  for (int i = 0; i < 100; ++i) {
    CHECK_FALSE(e.step(loss));
    loss *= 0.99;
  }
}

TEST_CASE("early stop: constant loss after epoch 1 stops at epoch 11") {
  EarlyStopper e(10);
  CHECK_FALSE(e.step(1.0));  // epoch 1 sets the best
  for (int epoch = 2; epoch <= 10; ++epoch) {
    CHECK_FALSE(e.step(1.0));
  }
  CHECK(e.step(1.0));  // epoch 11
}

TEST_CASE("early stop: patience 0 stops on the first non-improvement") {
  EarlyStopper e(0);
  CHECK_FALSE(e.step(1.0));
  CHECK_FALSE(e.step(0.9));
  CHECK(e.step(0.95));
}

// ------------------------------------------------------------------- train

TEST_CASE("single-batch overfit reaches loss below 0.01 within 200 steps") {
  ModelConfig cfg = mini_config();
  Rng rng(1);
  SignNet model = build_model<float>(cfg, rng);

  // two clips, two classes, one fixed batch
  SynthSpec spec;
  spec.num_classes = 2;
  spec.clips_per_class = 1;
  spec.frames = cfg.frames;
  spec.height = cfg.height;
  spec.width = cfg.width;
  spec.seed = 3;
  Tensor batch(std::vector<std::int64_t>{2, 3, cfg.frames, cfg.height,
                                         cfg.width});
  for (std::int64_t k = 0; k < 2; ++k) {
    Tensor one = preprocess_eval(synth_clip(spec, k, 0), cfg);
    std::copy_n(one.data(), one.numel(), batch.data() + k * one.numel());
  }
  std::vector<std::int64_t> labels{0, 1};

  AdamState adam = AdamState::init(model, OptimizerConfig{});
  Rng fwd(0);
  double loss = 1e9;
  double prev_loss = 1e9;
  int steps = 0;
  for (; steps < 200; ++steps) {
    auto [logits, cache] = model_forward(model, batch, Mode::train, fwd);
    auto xent = softmax_cross_entropy(logits, labels);
    loss = xent.loss;
    if (loss < 0.01) break;
    // monotone non-increasing within a small noise tolerance
    CHECK(loss <= prev_loss + 0.05);
    prev_loss = loss;
    Gradients grads = model_backward(model, cache, xent.grad_logits);
    adam_step(model, grads, adam);
  }
  CHECK(loss < 0.01);
  CHECK(steps < 200);

  // the memorized pair evaluates at accuracy 1.0 through the eval pipeline
  const fs::path dir = temp_dir("signet_overfit_eval");
  std::vector<ClipRecord> records;
  for (std::int64_t k = 0; k < 2; ++k) {
    const fs::path p = dir / ("clip_" + std::to_string(k) + ".slrc");
    save_clip(synth_clip(spec, k, 0), p.string());
    records.push_back({p.string(), k, synth_gloss(k)});
  }
  ValidationStats stats = validate(model, records, 2);
  CHECK(stats.accuracy == 1.0);
  fs::remove_all(dir);
}

TEST_CASE("train end-to-end: artifacts, epoch cap, determinism") {
  const fs::path data_dir = temp_dir("signet_train_data");
  SynthSpec spec;
  spec.num_classes = 2;
  spec.clips_per_class = 5;
  spec.frames = 6;
  spec.height = 20;
  spec.width = 20;
  spec.seed = 8;
  const std::string manifest = synth_generate(spec, data_dir.string());

  RunConfig cfg;
  cfg.model = mini_config();
  cfg.max_epochs = 3;
  cfg.seed = 42;

  const fs::path run1 = temp_dir("signet_train_run1");
  TrainResult r1 = train(cfg, manifest, run1.string());
  CHECK(r1.history.size() <= 3);
  CHECK(fs::exists(r1.checkpoint_path));
  CHECK(fs::exists(r1.history_path));
  for (std::size_t i = 0; i < r1.history.size(); ++i) {
    CHECK(r1.history[i].epoch == static_cast<std::int64_t>(i + 1));
    CHECK(std::isfinite(r1.history[i].train_loss));
    CHECK(std::isfinite(r1.history[i].val_loss));
  }

  const fs::path run2 = temp_dir("signet_train_run2");
  TrainResult r2 = train(cfg, manifest, run2.string());
  REQUIRE(r1.history.size() == r2.history.size());
  for (std::size_t i = 0; i < r1.history.size(); ++i) {
    CHECK(r1.history[i].train_loss == r2.history[i].train_loss);
    CHECK(r1.history[i].val_loss == r2.history[i].val_loss);
  }
  CHECK(slurp(r1.history_path) == slurp(r2.history_path));
  CHECK(slurp(r1.checkpoint_path) == slurp(r2.checkpoint_path));

  fs::remove_all(data_dir);
  fs::remove_all(run1);
  fs::remove_all(run2);
}

TEST_CASE("train rejects missing classes and undersized datasets") {
  const fs::path data_dir = temp_dir("signet_train_bad");
  SynthSpec spec;
  spec.num_classes = 2;
  spec.clips_per_class = 3;
  spec.frames = 4;
  spec.height = 16;
  spec.width = 16;
  const std::string manifest = synth_generate(spec, data_dir.string());

  RunConfig cfg;
  cfg.model = mini_config();
  cfg.model.num_classes = 4;  // dataset only has classes 0 and 1
  cfg.max_epochs = 1;
  const fs::path out = temp_dir("signet_train_bad_out");
  CHECK_THROWS_AS(train(cfg, manifest, out.string()), Error);

  CHECK_THROWS_AS(train(cfg, (data_dir / "absent.jsonl").string(),
                        out.string()),
                  Error);
  fs::remove_all(data_dir);
  fs::remove_all(out);
}

TEST_CASE("validation never mutates parameters") {
  const fs::path data_dir = temp_dir("signet_val_data");
  SynthSpec spec;
  spec.num_classes = 2;
  spec.clips_per_class = 2;
  spec.frames = 4;
  spec.height = 16;
  spec.width = 16;
  auto records = load_manifest(synth_generate(spec, data_dir.string()));

  ModelConfig cfg = mini_config();
  Rng rng(5);
  SignNet model = build_model<float>(cfg, rng);
  std::vector<float> before;
  for (const auto& [name, t] : param_crefs(model)) {
    before.insert(before.end(), t->vec().begin(), t->vec().end());
  }
  ValidationStats stats = validate(model, records, 2);
  CHECK(std::isfinite(stats.loss));
  std::vector<float> after;
  for (const auto& [name, t] : param_crefs(model)) {
    after.insert(after.end(), t->vec().begin(), t->vec().end());
  }
  CHECK(before == after);
  fs::remove_all(data_dir);
}

TEST_CASE("history json zeroes timings unless enabled") {
  TrainHistory h{{1, 0.5, 0.6, 0.7, 0.001, 12.5}};
  const std::string off = history_to_json(h, false);
  CHECK(off.find("12.5") == std::string::npos);
  const std::string on = history_to_json(h, true);
  CHECK(on.find("12.5") != std::string::npos);
}
