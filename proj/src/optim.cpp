#include "signet/optim.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>

#include <json.hpp>

#include "signet/dataset.hpp"
#include "signet/error.hpp"
#include "signet/nn_ops.hpp"

namespace fs = std::filesystem;

namespace signet {

AdamState AdamState::init_for(const std::vector<const Tensor*>& params,
                              const OptimizerConfig& config) {
  AdamState s;
  s.lr = config.lr;
  s.beta1 = config.beta1;
  s.beta2 = config.beta2;
  s.eps = config.eps;
  s.grad_clip = config.grad_clip;
  for (const Tensor* p : params) {
    s.m.emplace_back(p->shape());
    s.v.emplace_back(p->shape());
  }
  return s;
}

AdamState AdamState::init(const SignNet& model, const OptimizerConfig& config) {
  std::vector<const Tensor*> params;
  for (const auto& [name, tensor] : param_crefs(model)) {
    (void)name;
    params.push_back(tensor);
  }
  return init_for(params, config);
}

void adam_step(const std::vector<Tensor*>& params,
               const std::vector<const Tensor*>& grads, AdamState& state) {
  if (params.size() != grads.size() || params.size() != state.m.size()) {
    throw Error(ErrorKind::shape, "optimizer state does not match model");
  }

  double grad_sq_sum = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const Tensor& g = *grads[i];
    if (!g.same_shape(*params[i])) {
      throw Error(ErrorKind::shape,
                  "gradient shape mismatch for parameter " +
                      std::to_string(i));
    }
    for (std::int64_t j = 0; j < g.numel(); ++j) {
      if (!std::isfinite(static_cast<double>(g[j]))) {
        throw Error(ErrorKind::numeric, "non-finite gradient; step aborted");
      }
      grad_sq_sum += static_cast<double>(g[j]) * static_cast<double>(g[j]);
    }
  }

  double scale = 1.0;
  if (state.grad_clip > 0.0) {
    const double norm = std::sqrt(grad_sq_sum);
    if (norm > state.grad_clip) scale = state.grad_clip / norm;
  }

  state.step_count += 1;
  const double bias1 = 1.0 - std::pow(state.beta1, state.step_count);
  const double bias2 = 1.0 - std::pow(state.beta2, state.step_count);

  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i];
    const Tensor& g = *grads[i];
    Tensor& m = state.m[i];
    Tensor& v = state.v[i];
    for (std::int64_t j = 0; j < p.numel(); ++j) {
      const double gj = static_cast<double>(g[j]) * scale;
      const double mj = state.beta1 * m[j] + (1.0 - state.beta1) * gj;
      const double vj = state.beta2 * v[j] + (1.0 - state.beta2) * gj * gj;
      m[j] = static_cast<float>(mj);
      v[j] = static_cast<float>(vj);
      const double m_hat = mj / bias1;
      const double v_hat = vj / bias2;
      p[j] = static_cast<float>(p[j] -
                                state.lr * m_hat /
                                    (std::sqrt(v_hat) + state.eps));
    }
  }
}

void adam_step(SignNet& model, const Gradients& grads, AdamState& state) {
  std::vector<Tensor*> params;
  std::vector<const Tensor*> grad_ptrs;
  for (auto& r : param_refs(model)) params.push_back(r.tensor);
  for (const auto& [name, tensor] : param_crefs(grads)) {
    (void)name;
    grad_ptrs.push_back(tensor);
  }
  adam_step(params, grad_ptrs, state);
}

double PlateauScheduler::step(double val_loss) {
  if (!std::isfinite(val_loss)) {
    throw Error(ErrorKind::numeric, "non-finite validation loss");
  }
  if (val_loss < best_loss_ - config_.threshold) {
    best_loss_ = val_loss;
    bad_epochs_ = 0;
  } else {
    ++bad_epochs_;
    if (bad_epochs_ > config_.patience) {
      lr_ = std::max(lr_ * config_.factor, config_.min_lr);
      bad_epochs_ = 0;
    }
  }
  return lr_;
}

bool EarlyStopper::step(double val_loss) {
  if (!std::isfinite(val_loss)) {
    throw Error(ErrorKind::numeric, "non-finite validation loss");
  }
  if (val_loss < best_) {
    best_ = val_loss;
    epochs_since_best_ = 0;
    return false;
  }
  ++epochs_since_best_;
  return epochs_since_best_ >= patience_;
}

std::string history_to_json(const TrainHistory& history,
                            bool include_timings) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& rec : history) {
    arr.push_back({{"epoch", rec.epoch},
                   {"train_loss", rec.train_loss},
                   {"val_loss", rec.val_loss},
                   {"val_acc", rec.val_acc},
                   {"lr", rec.lr},
                   {"seconds", include_timings ? rec.seconds : 0.0}});
  }
  return arr.dump(2);
}

ValidationStats validate(const SignNet& model,
                         const std::vector<ClipRecord>& records,
                         std::int64_t batch_size) {
  if (records.empty()) {
    throw Error(ErrorKind::data, "validation set is empty");
  }
  BatchIterator it(records, model.config, AugmentSpec{}, /*training=*/false,
                   batch_size, /*shuffle=*/false, Rng(0));
  double loss_sum = 0.0;
  std::int64_t correct = 0, total = 0;
  Rng unused(0);
  while (auto batch = it.next()) {
    auto [logits, cache] = model_forward(model, batch->clips, Mode::eval,
                                         unused);
    auto xent = softmax_cross_entropy(logits, batch->labels);
    const std::int64_t b = batch->clips.dim(0);
    loss_sum += xent.loss * static_cast<double>(b);
    const std::int64_t k = logits.dim(1);
    for (std::int64_t i = 0; i < b; ++i) {
      std::int64_t arg = 0;
      for (std::int64_t j = 1; j < k; ++j) {
        if (logits[i * k + j] > logits[i * k + arg]) arg = j;
      }
      if (arg == batch->labels[static_cast<std::size_t>(i)]) ++correct;
    }
    total += b;
  }
  return {loss_sum / static_cast<double>(total),
          static_cast<double>(correct) / static_cast<double>(total)};
}

namespace {

// Purpose tags for streams derived from the root seed.
enum : std::uint64_t {
  kStreamInit = 1,
  kStreamSplit = 2,
  kStreamEpoch = 3,
  kStreamDropout = 4,
};

}  // namespace

TrainResult train(const RunConfig& config, const std::string& manifest_path,
                  const std::string& out_dir) {
  config.validate();
  auto records = load_manifest(manifest_path);
  if (records.size() < 2) {
    throw Error(ErrorKind::data,
                "training needs at least 2 records, manifest has " +
                    std::to_string(records.size()));
  }
  for (const auto& rec : records) {
    if (rec.label >= config.model.num_classes) {
      throw Error(ErrorKind::data,
                  "record " + rec.path + " has label " +
                      std::to_string(rec.label) + " but the model has " +
                      std::to_string(config.model.num_classes) + " classes");
    }
  }

  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) {
    throw Error(ErrorKind::io, "cannot create " + out_dir + ": " + ec.message());
  }

  Rng root(config.seed);
  SplitResult split =
      split_dataset(records, 0.8, root.derive(kStreamSplit).next_u64());

  std::set<std::int64_t> train_classes;
  for (const auto& rec : split.train) train_classes.insert(rec.label);
  for (std::int64_t k = 0; k < config.model.num_classes; ++k) {
    if (!train_classes.count(k)) {
      throw Error(ErrorKind::data,
                  "class " + std::to_string(k) +
                      " is absent from the train split");
    }
  }

  Rng init_rng = root.derive(kStreamInit);
  SignNet model = build_model<float>(config.model, init_rng);
  AdamState adam = AdamState::init(model, config.optimizer);
  PlateauScheduler scheduler(config.optimizer.lr, config.scheduler);
  EarlyStopper stopper(config.early_stop_patience);
  Rng dropout_rng = root.derive(kStreamDropout);

  TrainResult result;
  result.checkpoint_path = (fs::path(out_dir) / "best.slck").string();
  result.history_path = (fs::path(out_dir) / "history.json").string();
  double best_val = std::numeric_limits<double>::infinity();

  for (std::int64_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();

    BatchIterator batches(split.train, config.model, config.augment,
                          /*training=*/true, config.batch_size,
                          /*shuffle=*/true,
                          root.derive(kStreamEpoch).derive(
                              static_cast<std::uint64_t>(epoch)));
    double loss_sum = 0.0;
    std::int64_t seen = 0;
    while (auto batch = batches.next()) {
      auto [logits, cache] =
          model_forward(model, batch->clips, Mode::train, dropout_rng);
      auto xent = softmax_cross_entropy(logits, batch->labels);
      Gradients grads = model_backward(model, cache, xent.grad_logits);
      adam.lr = scheduler.lr();
      adam_step(model, grads, adam);
      const std::int64_t b = batch->clips.dim(0);
      loss_sum += xent.loss * static_cast<double>(b);
      seen += b;
    }
    const double train_loss = loss_sum / static_cast<double>(seen);

    ValidationStats val = validate(model, split.val, config.batch_size);
    const double lr_after = scheduler.step(val.loss);
    const bool stop = stopper.step(val.loss);

    if (val.loss < best_val) {
      best_val = val.loss;
      result.best = {static_cast<std::uint32_t>(epoch),
                     static_cast<float>(val.loss)};
      save_checkpoint(model, result.best, result.checkpoint_path);
    }

    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    result.history.push_back(
        {epoch, train_loss, val.loss, val.accuracy, lr_after, seconds});
    std::fprintf(stderr,
                 "epoch %3lld  train_loss %.4f  val_loss %.4f  val_acc %.3f  "
                 "lr %.2e  (%.1fs)\n",
                 static_cast<long long>(epoch), train_loss, val.loss,
                 val.accuracy, lr_after, seconds);
    if (stop) {
      std::fprintf(stderr, "early stop after epoch %lld\n",
                   static_cast<long long>(epoch));
      break;
    }
  }

  std::ofstream hist(result.history_path, std::ios::trunc);
  if (!hist) {
    throw Error(ErrorKind::io, "cannot write " + result.history_path);
  }
  hist << history_to_json(result.history, config.record_timings) << '\n';

  result.model = std::move(model);
  return result;
}

}  // namespace signet
