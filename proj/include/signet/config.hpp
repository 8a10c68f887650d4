#pragma once

#include <cstdint>
#include <string>

#include "signet/clip.hpp"
#include "signet/model.hpp"

namespace signet {

struct OptimizerConfig {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  // Global-norm gradient clipping; 0 disables it (the default).
  double grad_clip = 0.0;

  bool operator==(const OptimizerConfig&) const = default;
};

struct SchedulerConfig {
  double factor = 0.1;
  std::int64_t patience = 3;
  double min_lr = 1e-6;
  // Absolute improvement threshold on validation loss.
  double threshold = 1e-4;

  bool operator==(const SchedulerConfig&) const = default;
};

// One JSON document drives every workflow. Unknown keys are rejected at
// every nesting level, so typos fail fast instead of silently using a
// default.
struct RunConfig {
  ModelConfig model;
  AugmentSpec augment;
  OptimizerConfig optimizer;
  SchedulerConfig scheduler;
  std::int64_t early_stop_patience = 10;
  std::int64_t batch_size = 2;
  std::int64_t max_epochs = 100;
  std::uint64_t seed = 0;
  std::string manifest;  // optional; CLI flags override
  std::string out_dir;   // optional
  // Timing fields in emitted files are zeroed unless enabled, keeping
  // outputs byte-identical across same-seed runs. Measured timings always
  // go to the console log.
  bool record_timings = false;

  void validate() const;
};

RunConfig run_config_from_json(const std::string& text);
RunConfig run_config_from_file(const std::string& path);
std::string run_config_to_json(const RunConfig& config);

}  // namespace signet
