#pragma once

#include <cstdint>
#include <deque>
#include <optional>
#include <string>
#include <vector>

#include "signet/clip.hpp"
#include "signet/model.hpp"

namespace signet {

// One video frame, u8 RGB (H,W,3).
struct Frame {
  std::int64_t height = 0;
  std::int64_t width = 0;
  std::vector<std::uint8_t> pixels;
};

enum class RingState { filling, ready };

// Bounded frame buffer with strictly oldest-first eviction. Holds at most
// `capacity` frames no matter how long the stream runs.
class FrameRing {
 public:
  FrameRing(std::int64_t capacity, std::int64_t window_size);

  RingState push(Frame frame);
  std::int64_t total_seen() const { return total_; }
  std::int64_t size() const { return static_cast<std::int64_t>(frames_.size()); }
  std::int64_t window_size() const { return window_size_; }

  // The most recent `n` frames, oldest first, as a clip volume.
  Clip window(std::int64_t n) const;

 private:
  std::int64_t capacity_;
  std::int64_t window_size_;
  std::int64_t height_ = 0, width_ = 0;  // fixed by the first frame
  std::deque<Frame> frames_;
  std::int64_t total_ = 0;
};

struct StreamPrediction {
  std::int64_t start = 0;  // first and last frame index of the window,
  std::int64_t end = 0;    // inclusive; end - start + 1 == window size
  std::int64_t predicted = 0;
  std::string gloss;
  double confidence = 0.0;  // max softmax probability
  double latency_ms = 0.0;  // preprocessing + forward, measured
};

// Sliding-window inference session. A prediction is due every `stride`-th
// new frame once the ring has a full window. Each window is resampled to the
// model's frame count with the deterministic temporal rule, so the trained
// model is reused unchanged regardless of window size.
class StreamSession {
 public:
  StreamSession(const SignNet& model, std::int64_t window_size,
                std::int64_t stride, std::vector<std::string> glosses);

  // Push one frame; returns a prediction when one is due.
  std::optional<StreamPrediction> push(Frame frame);

  const FrameRing& ring() const { return ring_; }

  // Classifies the current window regardless of stride position.
  StreamPrediction infer_current_window();

 private:
  const SignNet& model_;
  FrameRing ring_;
  std::int64_t stride_;
  std::vector<std::string> glosses_;
};

struct StreamStats {
  std::int64_t windows = 0;
  double mean_latency_ms = 0.0;
  double p95_latency_ms = 0.0;  // nearest-rank percentile
};

struct StreamRunResult {
  std::vector<StreamPrediction> predictions;
  StreamStats stats;
};

// Replays a source (an .slrc file, or a directory of .slrc files processed
// in sorted name order) through a StreamSession and writes one JSON line per
// prediction plus a final summary line to out_path (empty = no file).
// Latency fields in the file are zeroed unless record_timings is set; the
// returned result always carries measured values.
StreamRunResult run_stream(const std::string& source, const SignNet& model,
                           std::int64_t window_size, std::int64_t stride,
                           const std::vector<std::string>& glosses,
                           const std::string& out_path, bool record_timings);

}  // namespace signet
