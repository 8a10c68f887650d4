// signet: train, evaluate and serve the 3D-CNN + LSTM sign recognizer.
//
// Subcommands: synth, train, eval, infer, stream, verify.
// Exit codes: 0 success, 1 usage error, 2 data/format error,
//             3 verification failure.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "signet/checkpoint.hpp"
#include "signet/config.hpp"
#include "signet/dataset.hpp"
#include "signet/error.hpp"
#include "signet/metrics.hpp"
#include "signet/model.hpp"
#include "signet/nn_ops.hpp"
#include "signet/optim.hpp"
#include "signet/streaming.hpp"

namespace fs = std::filesystem;
using namespace signet;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitVerify = 3;

std::vector<std::string> load_glosses(const std::string& labels_path) {
  if (labels_path.empty()) return {};
  std::ifstream in(labels_path);
  if (!in) {
    throw Error(ErrorKind::data, "cannot open labels file " + labels_path);
  }
  nlohmann::json arr = nlohmann::json::parse(in, nullptr, false);
  if (arr.is_discarded() || !arr.is_array()) {
    throw Error(ErrorKind::data,
                labels_path + " must be a JSON array of gloss strings");
  }
  std::vector<std::string> glosses;
  for (const auto& g : arr) glosses.push_back(g.get<std::string>());
  return glosses;
}

// ------------------------------------------------------------------ synth --

int cmd_synth(const SynthSpec& spec, const std::string& out_dir) {
  const std::string manifest = synth_generate(spec, out_dir);
  std::cout << manifest << "\n";
  return 0;
}

// ------------------------------------------------------------------ train --

int cmd_train(RunConfig config, const std::string& manifest,
              const std::string& out_dir) {
  TrainResult result = train(config, manifest, out_dir);
  std::cout << result.checkpoint_path << "\n" << result.history_path << "\n";
  return 0;
}

// ------------------------------------------------------------------- eval --

int cmd_eval(const std::string& checkpoint, const std::string& manifest,
             const std::string& out_path, std::int64_t batch_size) {
  auto [model, meta] = load_checkpoint(checkpoint);
  auto records = load_manifest(manifest);
  MetricsReport report = evaluate(model, records, batch_size);
  std::ofstream out(out_path, std::ios::trunc);
  if (!out) {
    throw Error(ErrorKind::io, "cannot write " + out_path);
  }
  out << metrics_report_to_json(report) << '\n';
  print_metrics_report(report, std::cout);
  std::cerr << "wrote " << out_path << "\n";
  return 0;
}

// ------------------------------------------------------------------ infer --

int cmd_infer(const std::string& checkpoint, const std::string& clip_path,
              const std::string& labels_path) {
  auto [model, meta] = load_checkpoint(checkpoint);
  auto glosses = load_glosses(labels_path);

  Clip clip = load_clip(clip_path);
  Tensor sample = preprocess_eval(clip, model.config);
  Tensor batch = sample.reshaped({1, 3, model.config.frames,
                                  model.config.height, model.config.width});
  Rng unused(0);
  auto [logits, cache] = model_forward(model, batch, Mode::eval, unused);
  Tensor probs = softmax_rows(logits);
  std::int64_t arg = 0;
  for (std::int64_t j = 1; j < model.config.num_classes; ++j) {
    if (probs[j] > probs[arg]) arg = j;
  }
  nlohmann::json out{
      {"class", arg},
      {"gloss", arg < static_cast<std::int64_t>(glosses.size())
                    ? glosses[static_cast<std::size_t>(arg)]
                    : "class_" + std::to_string(arg)},
      {"confidence", static_cast<double>(probs[arg])}};
  std::cout << out.dump() << "\n";
  return 0;
}

// ----------------------------------------------------------------- stream --

int cmd_stream(const std::string& checkpoint, const std::string& source,
               std::int64_t window, std::int64_t stride,
               const std::string& out_path, const std::string& labels_path,
               bool timings) {
  auto [model, meta] = load_checkpoint(checkpoint);
  StreamRunResult res = run_stream(source, model, window, stride,
                                   load_glosses(labels_path), out_path,
                                   timings);
  std::cerr << res.stats.windows << " windows, mean latency "
            << res.stats.mean_latency_ms << " ms, p95 "
            << res.stats.p95_latency_ms << " ms\n";
  std::cout << out_path << "\n";
  return 0;
}

// ----------------------------------------------------------------- verify --

struct VerifyContext {
  int passed = 0;
  int failed = 0;

  void check(const std::string& name, bool ok, const std::string& detail) {
    std::printf("%-52s %s%s%s\n", name.c_str(), ok ? "PASS" : "FAIL",
                detail.empty() ? "" : "  ", detail.c_str());
    (ok ? passed : failed) += 1;
  }
};

// Central-difference probe of d(loss)/d(param[i]), reimplemented here so the
// verify command is self-contained.
double fd_max_rel_err(Tensor64& param, const Tensor64& analytic,
                      const std::function<double()>& loss,
                      std::int64_t samples, Rng& rng) {
  const double h = 1e-5;
  double worst = 0.0;
  const std::int64_t n = param.numel();
  for (std::int64_t s = 0; s < std::min(samples, n); ++s) {
    const std::int64_t i =
        n <= samples ? s : static_cast<std::int64_t>(rng.next_u64() % n);
    const double saved = param[i];
    param[i] = saved + h;
    const double plus = loss();
    param[i] = saved - h;
    const double minus = loss();
    param[i] = saved;
    const double numeric = (plus - minus) / (2.0 * h);
    const double denom =
        std::max({std::abs(analytic[i]), std::abs(numeric), 1e-4});
    worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
  }
  return worst;
}

void verify_architecture(VerifyContext& ctx) {
  const ModelConfig full = ModelConfig::full_scale(100);
  const auto counts = param_count(full);

  const std::int64_t expect_conv[3] = {5248, 221312, 884992};
  for (int i = 0; i < 3; ++i) {
    ctx.check("param_count conv" + std::to_string(i + 1),
              counts[static_cast<std::size_t>(i)].count == expect_conv[i],
              std::to_string(counts[static_cast<std::size_t>(i)].count) +
                  " vs reference " + std::to_string(expect_conv[i]));
  }
  ctx.check("param_count fc1", counts[4].count == 131328,
            std::to_string(counts[4].count) + " vs reference 131328");
  ctx.check("param_count fc2 formula", counts[5].count == 100 * 256 + 100,
            std::to_string(counts[5].count) + " = N*256 + N for N=100");

  const double lstm_count = static_cast<double>(counts[3].count);
  const double rel = std::abs(lstm_count - 408e6) / 408e6;
  char detail[128];
  std::snprintf(detail, sizeof(detail),
                "%lld, reference-approx ~408M, off by %.2f%%",
                static_cast<long long>(counts[3].count), rel * 100.0);
  ctx.check("param_count lstm within 2% of reference", rel < 0.02, detail);

  const std::vector<std::vector<std::int64_t>> expect_shapes{
      {-1, 3, 30, 224, 224}, {-1, 64, 30, 112, 112}, {-1, 128, 30, 56, 56},
      {-1, 256, 30, 28, 28}, {-1, 30, 512},          {-1, 100}};
  const auto rows = infer_shapes(full);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    ctx.check("shape " + rows[i].layer, rows[i].dims == expect_shapes[i],
              shape_row_to_string(rows[i]));
  }
  ctx.check("flattened per-frame feature size",
            full.flattened_feature_size() == 200704,
            std::to_string(full.flattened_feature_size()) + " = 256*28*28");
}

void verify_gradients(VerifyContext& ctx) {
  Rng rng(2024);
  auto report = [&](const std::string& name, double err, double tol) {
    char detail[64];
    std::snprintf(detail, sizeof(detail), "max rel err %.2e (tol %.0e)", err,
                  tol);
    ctx.check("gradcheck " + name, err <= tol, detail);
  };

  {  // conv3d
    Tensor64 x = Tensor64::uniform({1, 2, 3, 4, 4}, -1.0, 1.0, rng);
    Tensor64 w = Tensor64::uniform({2, 2, 3, 3, 3}, -0.5, 0.5, rng);
    Tensor64 b = Tensor64::uniform({2}, -0.5, 0.5, rng);
    auto [out, cache] = conv3d_forward(x, w, b);
    Tensor64 cot = Tensor64::uniform(out.shape(), -1.0, 1.0, rng);
    auto grads = conv3d_backward(cache, cot);
    auto loss = [&]() {
      auto [o, c] = conv3d_forward(x, w, b);
      double acc = 0;
      for (std::int64_t i = 0; i < o.numel(); ++i) acc += o[i] * cot[i];
      return acc;
    };
    double err = fd_max_rel_err(x, grads.input, loss, 24, rng);
    err = std::max(err, fd_max_rel_err(w, grads.weight, loss, 24, rng));
    err = std::max(err, fd_max_rel_err(b, grads.bias, loss, 24, rng));
    report("conv3d", err, 1e-4);
  }
  {  // maxpool3d away from ties
    std::vector<double> vals;
    for (int i = 0; i < 64; ++i) vals.push_back(0.017 * i * i - 0.5 * i);
    Tensor64 x = Tensor64::from_data({1, 2, 2, 4, 4}, vals);
    auto [out, cache] = maxpool3d_forward(x);
    Tensor64 cot = Tensor64::uniform(out.shape(), -1.0, 1.0, rng);
    Tensor64 gin = maxpool3d_backward(cache, cot);
    auto loss = [&]() {
      auto [o, c] = maxpool3d_forward(x);
      double acc = 0;
      for (std::int64_t i = 0; i < o.numel(); ++i) acc += o[i] * cot[i];
      return acc;
    };
    report("maxpool3d", fd_max_rel_err(x, gin, loss, 24, rng), 1e-4);
  }
  {  // relu away from zero
    Tensor64 x = Tensor64::uniform({4, 6}, 0.2, 1.5, rng);
    for (std::int64_t i = 0; i < x.numel(); i += 2) x[i] = -x[i];
    auto [out, cache] = relu_forward(x);
    Tensor64 cot = Tensor64::uniform(out.shape(), -1.0, 1.0, rng);
    Tensor64 gin = relu_backward(cache, cot);
    auto loss = [&]() {
      auto [o, c] = relu_forward(x);
      double acc = 0;
      for (std::int64_t i = 0; i < o.numel(); ++i) acc += o[i] * cot[i];
      return acc;
    };
    report("relu", fd_max_rel_err(x, gin, loss, 24, rng), 1e-4);
  }
  {  // 2-layer lstm
    Tensor64 x = Tensor64::uniform({1, 3, 2}, -1.0, 1.0, rng);
    std::vector<LstmLayerParamsT<double>> layers;
    std::int64_t d = 2;
    for (int l = 0; l < 2; ++l) {
      LstmLayerParamsT<double> p;
      p.w_ih = Tensor64::uniform({8, d}, -0.5, 0.5, rng);
      p.w_hh = Tensor64::uniform({8, 2}, -0.5, 0.5, rng);
      p.b_ih = Tensor64::uniform({8}, -0.5, 0.5, rng);
      p.b_hh = Tensor64::uniform({8}, -0.5, 0.5, rng);
      layers.push_back(std::move(p));
      d = 2;
    }
    auto fwd = lstm_forward(x, layers);
    Tensor64 cot_seq =
        Tensor64::uniform(fwd.hidden_seq.shape(), -1.0, 1.0, rng);
    Tensor64 cot_fin = Tensor64::uniform(fwd.final_h.shape(), -1.0, 1.0, rng);
    auto grads = lstm_backward(fwd.cache, cot_seq, cot_fin);
    auto loss = [&]() {
      auto o = lstm_forward(x, layers);
      double acc = 0;
      for (std::int64_t i = 0; i < o.hidden_seq.numel(); ++i) {
        acc += o.hidden_seq[i] * cot_seq[i];
      }
      for (std::int64_t i = 0; i < o.final_h.numel(); ++i) {
        acc += o.final_h[i] * cot_fin[i];
      }
      return acc;
    };
    double err = fd_max_rel_err(x, grads.input, loss, 20, rng);
    for (std::size_t l = 0; l < 2; ++l) {
      err = std::max(err,
                     fd_max_rel_err(layers[l].w_ih, grads.params[l].w_ih,
                                    loss, 20, rng));
      err = std::max(err,
                     fd_max_rel_err(layers[l].w_hh, grads.params[l].w_hh,
                                    loss, 20, rng));
      err = std::max(err,
                     fd_max_rel_err(layers[l].b_ih, grads.params[l].b_ih,
                                    loss, 20, rng));
      err = std::max(err,
                     fd_max_rel_err(layers[l].b_hh, grads.params[l].b_hh,
                                    loss, 20, rng));
    }
    report("lstm (2-layer BPTT)", err, 1e-4);
  }
  {  // linear
    Tensor64 x = Tensor64::uniform({3, 4}, -1.0, 1.0, rng);
    Tensor64 w = Tensor64::uniform({2, 4}, -1.0, 1.0, rng);
    Tensor64 b = Tensor64::uniform({2}, -1.0, 1.0, rng);
    auto [out, cache] = linear_forward(x, w, b);
    Tensor64 cot = Tensor64::uniform(out.shape(), -1.0, 1.0, rng);
    auto grads = linear_backward(cache, cot);
    auto loss = [&]() {
      auto [o, c] = linear_forward(x, w, b);
      double acc = 0;
      for (std::int64_t i = 0; i < o.numel(); ++i) acc += o[i] * cot[i];
      return acc;
    };
    double err = fd_max_rel_err(x, grads.input, loss, 20, rng);
    err = std::max(err, fd_max_rel_err(w, grads.weight, loss, 20, rng));
    err = std::max(err, fd_max_rel_err(b, grads.bias, loss, 20, rng));
    report("linear", err, 1e-4);
  }
  {  // softmax cross-entropy
    Tensor64 logits = Tensor64::uniform({3, 4}, -2.0, 2.0, rng);
    std::vector<std::int64_t> labels{2, 0, 3};
    auto res = softmax_cross_entropy(logits, labels);
    auto loss = [&]() { return softmax_cross_entropy(logits, labels).loss; };
    report("softmax_cross_entropy",
           fd_max_rel_err(logits, res.grad_logits, loss, 12, rng), 1e-4);
  }
  {  // full model composite
    ModelConfig cfg;
    cfg.conv_channels = {2, 3, 4};
    cfg.lstm_hidden = 4;
    cfg.fc_hidden = 5;
    cfg.num_classes = 3;
    cfg.frames = 2;
    cfg.height = 8;
    cfg.width = 8;
    cfg.dropout_p = 0.0;
    SignNetT<double> model = build_model<double>(cfg, rng);
    Tensor64 clips = Tensor64::uniform(
        {2, 3, cfg.frames, cfg.height, cfg.width}, 0.0, 1.0, rng);
    std::vector<std::int64_t> labels{1, 2};
    Rng fwd(0);
    auto [logits, cache] = model_forward(model, clips, Mode::train, fwd);
    auto xent = softmax_cross_entropy(logits, labels);
    auto grads = model_backward(model, cache, xent.grad_logits);
    auto loss = [&]() {
      Rng r(0);
      auto [lg, ch] = model_forward(model, clips, Mode::train, r);
      return softmax_cross_entropy(lg, labels).loss;
    };
    auto pm = param_refs(model);
    auto pg = param_refs(grads);
    double err = 0.0;
    for (std::size_t i = 0; i < pm.size(); ++i) {
      err = std::max(
          err, fd_max_rel_err(*pm[i].tensor, *pg[i].tensor, loss, 8, rng));
    }
    report("full model composite", err, 1e-3);
  }
}

int cmd_verify() {
  VerifyContext ctx;
  verify_architecture(ctx);
  verify_gradients(ctx);
  std::printf("verify: %d/%d checks passed\n", ctx.passed,
              ctx.passed + ctx.failed);
  return ctx.failed == 0 ? 0 : kExitVerify;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"3D-CNN + LSTM sign recognition engine"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::optional<std::uint64_t> seed_flag;
  std::string out_flag;
  bool timings = false;
  app.add_option("--config", config_path, "run configuration JSON");
  app.add_option("--seed", seed_flag, "root seed for all randomness");
  app.add_option("--out", out_flag, "output directory or file");
  app.add_flag("--timings", timings,
               "record wall-clock timings in emitted files");

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic dataset");
  SynthSpec synth_spec;
  synth->add_option("--classes", synth_spec.num_classes, "number of classes");
  synth->add_option("--per-class", synth_spec.clips_per_class,
                    "clips per class");
  synth->add_option("--frames", synth_spec.frames, "frames per clip");
  synth->add_option("--height", synth_spec.height, "frame height");
  synth->add_option("--width", synth_spec.width, "frame width");

  // train
  auto* train_cmd = app.add_subcommand("train", "train a model");
  std::string manifest_flag;
  train_cmd->add_option("--manifest", manifest_flag, "dataset manifest");

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  std::string checkpoint_flag;
  std::int64_t batch_flag = 2;
  eval_cmd->add_option("--checkpoint", checkpoint_flag, "model checkpoint")
      ->required();
  eval_cmd->add_option("--manifest", manifest_flag, "dataset manifest");
  eval_cmd->add_option("--batch", batch_flag, "evaluation batch size");

  // infer
  auto* infer_cmd = app.add_subcommand("infer", "classify a single clip");
  std::string clip_flag, labels_flag;
  infer_cmd->add_option("--checkpoint", checkpoint_flag, "model checkpoint")
      ->required();
  infer_cmd->add_option("--clip", clip_flag, "clip file")->required();
  infer_cmd->add_option("--labels", labels_flag, "JSON array of glosses");

  // stream
  auto* stream_cmd =
      app.add_subcommand("stream", "sliding-window streaming inference");
  std::string source_flag;
  std::int64_t window_flag = 16, stride_flag = 8;
  stream_cmd->add_option("--checkpoint", checkpoint_flag, "model checkpoint")
      ->required();
  stream_cmd->add_option("--source", source_flag,
                         "clip file or directory of clips")
      ->required();
  stream_cmd->add_option("--window", window_flag, "window size in frames");
  stream_cmd->add_option("--stride", stride_flag, "frames between windows");
  stream_cmd->add_option("--labels", labels_flag, "JSON array of glosses");

  // verify
  app.add_subcommand("verify",
                     "self-check architecture tables and gradients");

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) {
      if (seed_flag) synth_spec.seed = *seed_flag;
      if (out_flag.empty()) {
        throw Error(ErrorKind::usage, "synth requires --out <dir>");
      }
      return cmd_synth(synth_spec, out_flag);
    }
    if (train_cmd->parsed()) {
      RunConfig config = config_path.empty() ? RunConfig{}
                                             : run_config_from_file(config_path);
      if (seed_flag) config.seed = *seed_flag;
      if (timings) config.record_timings = true;
      const std::string manifest =
          !manifest_flag.empty() ? manifest_flag : config.manifest;
      if (manifest.empty()) {
        throw Error(ErrorKind::usage,
                    "train requires --manifest or a manifest in the config");
      }
      std::string out_dir = !out_flag.empty() ? out_flag : config.out_dir;
      if (out_dir.empty()) out_dir = "run";
      return cmd_train(config, manifest, out_dir);
    }
    if (eval_cmd->parsed()) {
      if (manifest_flag.empty()) {
        throw Error(ErrorKind::usage, "eval requires --manifest");
      }
      const std::string out_path = out_flag.empty() ? "metrics.json" : out_flag;
      return cmd_eval(checkpoint_flag, manifest_flag, out_path, batch_flag);
    }
    if (infer_cmd->parsed()) {
      return cmd_infer(checkpoint_flag, clip_flag, labels_flag);
    }
    if (stream_cmd->parsed()) {
      const std::string out_path =
          out_flag.empty() ? "predictions.jsonl" : out_flag;
      return cmd_stream(checkpoint_flag, source_flag, window_flag, stride_flag,
                        out_path, labels_flag, timings);
    }
    return cmd_verify();
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    switch (e.kind()) {
      case ErrorKind::usage:
      case ErrorKind::config:
        return kExitUsage;
      default:
        return kExitData;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitData;
  }
}
