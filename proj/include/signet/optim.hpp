#pragma once

#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "signet/checkpoint.hpp"
#include "signet/config.hpp"
#include "signet/dataset.hpp"
#include "signet/model.hpp"

namespace signet {

// Adam first/second moments, one tensor pair per parameter in param_refs
// order. lr is owned by the scheduler and written back before each step.
struct AdamState {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double grad_clip = 0.0;
  std::int64_t step_count = 0;
  std::vector<Tensor> m;
  std::vector<Tensor> v;

  static AdamState init(const SignNet& model, const OptimizerConfig& config);
  static AdamState init_for(const std::vector<const Tensor*>& params,
                            const OptimizerConfig& config);
};

// One Adam update over every parameter:
//   t += 1;  m = b1*m + (1-b1)*g;  v = b2*v + (1-b2)*g^2
//   p -= lr * (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps)
// A non-finite gradient aborts the step before any state is touched.
void adam_step(const std::vector<Tensor*>& params,
               const std::vector<const Tensor*>& grads, AdamState& state);
void adam_step(SignNet& model, const Gradients& grads, AdamState& state);

// Cuts the learning rate by `factor` after more than `patience` consecutive
// epochs without the validation loss improving by at least `threshold`.
class PlateauScheduler {
 public:
  PlateauScheduler(double initial_lr, const SchedulerConfig& config)
      : lr_(initial_lr), config_(config) {}

  // Feed one validation loss per epoch; returns the (possibly reduced) lr.
  double step(double val_loss);
  double lr() const { return lr_; }

 private:
  double lr_;
  SchedulerConfig config_;
  double best_loss_ = std::numeric_limits<double>::infinity();
  std::int64_t bad_epochs_ = 0;
};

class EarlyStopper {
 public:
  explicit EarlyStopper(std::int64_t patience) : patience_(patience) {}

  // Returns true exactly when `patience` consecutive epochs have passed
  // without a new best validation loss.
  bool step(double val_loss);
  double best() const { return best_; }

 private:
  std::int64_t patience_;
  double best_ = std::numeric_limits<double>::infinity();
  std::int64_t epochs_since_best_ = 0;
};

struct EpochRecord {
  std::int64_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_acc = 0.0;
  double lr = 0.0;
  double seconds = 0.0;
};

using TrainHistory = std::vector<EpochRecord>;

std::string history_to_json(const TrainHistory& history, bool include_timings);

struct TrainResult {
  SignNet model;  // parameters after the final epoch
  CheckpointMeta best;
  TrainHistory history;
  std::string checkpoint_path;
  std::string history_path;
};

// Validation pass in eval mode; never mutates the model.
struct ValidationStats {
  double loss = 0.0;
  double accuracy = 0.0;
};
ValidationStats validate(const SignNet& model,
                         const std::vector<ClipRecord>& records,
                         std::int64_t batch_size);

// Full training loop: stratified 80/20 split, shuffled size-`batch_size`
// batches with augmentation, Adam, plateau scheduling, early stopping, the
// best-validation-loss checkpoint saved to <out_dir>/best.slck and history
// to <out_dir>/history.json.
TrainResult train(const RunConfig& config, const std::string& manifest_path,
                  const std::string& out_dir);

}  // namespace signet
