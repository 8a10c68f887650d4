#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "signet/clip.hpp"
#include "signet/model.hpp"
#include "signet/rng.hpp"
#include "signet/tensor.hpp"

namespace signet {

struct ClipRecord {
  std::string path;
  std::int64_t label = 0;
  std::string gloss;
};

// JSON-lines manifest, one {"path","label","gloss"} object per clip.
// Relative clip paths resolve against the manifest's directory.
std::vector<ClipRecord> load_manifest(const std::string& path);
void save_manifest(const std::vector<ClipRecord>& records,
                   const std::string& path);

struct SplitResult {
  std::vector<ClipRecord> train;
  std::vector<ClipRecord> val;
};

// Stratified split: per class, shuffle with the seeded rng and send
// floor(ratio * n) records to train, keeping at least one record on each
// side whenever the class has two or more. Disjoint and exhaustive.
SplitResult split_dataset(const std::vector<ClipRecord>& records, double ratio,
                          std::uint64_t seed);

struct Batch {
  Tensor clips;  // (B,3,T,H,W)
  std::vector<std::int64_t> labels;
};

// Streams preprocessed batches: load -> resize -> temporal standardize
// (random sampling when training) -> augment (training only) -> normalize ->
// stack. The last partial batch is emitted.
//
// Determinism: each record's stream derives from (iterator rng, original
// record index), so the shuffle order never changes a record's draws.
class BatchIterator {
 public:
  BatchIterator(std::vector<ClipRecord> records, const ModelConfig& config,
                const AugmentSpec& augment_spec, bool training,
                std::int64_t batch_size, bool shuffle, Rng rng);

  std::optional<Batch> next();
  void reset();
  std::int64_t num_records() const {
    return static_cast<std::int64_t>(records_.size());
  }

 private:
  Tensor preprocess(std::size_t record_index) const;

  std::vector<ClipRecord> records_;
  ModelConfig config_;
  AugmentSpec augment_spec_;
  bool training_;
  std::int64_t batch_size_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
  Rng rng_;
};

// Single-clip eval-mode preprocessing (shared by evaluation, inference and
// streaming): resize -> deterministic temporal standardize -> normalize.
Tensor preprocess_eval(const Clip& clip, const ModelConfig& config);

// ---------------------------------------------------------------------------
// Synthetic dataset: each class is a bright blob on a dark noisy background
// following a class-specific motion archetype (full linear sweep, short
// oscillation, or circular orbit, at a class-specific heading). Per-clip
// jitter varies start position, blob size, brightness and noise.
// ---------------------------------------------------------------------------

struct SynthSpec {
  std::int64_t num_classes = 5;
  std::int64_t clips_per_class = 20;
  std::int64_t frames = 10;
  std::int64_t height = 40;
  std::int64_t width = 40;
  std::uint64_t seed = 0;
};

// Human-readable gloss for a synthetic class id.
std::string synth_gloss(std::int64_t label);

// Generates one clip deterministically from (spec, label, clip index).
Clip synth_clip(const SynthSpec& spec, std::int64_t label,
                std::int64_t clip_index);

// Writes all clips plus manifest.jsonl and labels.json under out_dir.
// Returns the manifest path.
std::string synth_generate(const SynthSpec& spec, const std::string& out_dir);

}  // namespace signet
