#include "signet/streaming.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "signet/dataset.hpp"
#include "signet/error.hpp"
#include "signet/nn_ops.hpp"

namespace fs = std::filesystem;

namespace signet {

FrameRing::FrameRing(std::int64_t capacity, std::int64_t window_size)
    : capacity_(capacity), window_size_(window_size) {
  if (window_size < 1) {
    throw Error(ErrorKind::config, "window size must be >= 1");
  }
  if (capacity < window_size) {
    throw Error(ErrorKind::config,
                "ring capacity " + std::to_string(capacity) +
                    " is smaller than the window " +
                    std::to_string(window_size));
  }
}

RingState FrameRing::push(Frame frame) {
  if (frame.height < 1 || frame.width < 1 ||
      static_cast<std::int64_t>(frame.pixels.size()) !=
          frame.height * frame.width * 3) {
    throw Error(ErrorKind::data, "malformed frame");
  }
  if (total_ == 0) {
    height_ = frame.height;
    width_ = frame.width;
  } else if (frame.height != height_ || frame.width != width_) {
    throw Error(ErrorKind::data,
                "frame is " + std::to_string(frame.height) + "x" +
                    std::to_string(frame.width) + " but the stream is " +
                    std::to_string(height_) + "x" + std::to_string(width_));
  }
  frames_.push_back(std::move(frame));
  if (static_cast<std::int64_t>(frames_.size()) > capacity_) {
    frames_.pop_front();
  }
  ++total_;
  return total_ >= window_size_ ? RingState::ready : RingState::filling;
}

Clip FrameRing::window(std::int64_t n) const {
  if (n < 1 || n > static_cast<std::int64_t>(frames_.size())) {
    throw Error(ErrorKind::usage,
                "requested window of " + std::to_string(n) +
                    " frames, ring holds " + std::to_string(frames_.size()));
  }
  Clip clip;
  clip.frames = n;
  clip.height = height_;
  clip.width = width_;
  clip.pixels.reserve(static_cast<std::size_t>(clip.pixel_count()));
  const std::size_t first = frames_.size() - static_cast<std::size_t>(n);
  for (std::size_t i = first; i < frames_.size(); ++i) {
    clip.pixels.insert(clip.pixels.end(), frames_[i].pixels.begin(),
                       frames_[i].pixels.end());
  }
  return clip;
}

StreamSession::StreamSession(const SignNet& model, std::int64_t window_size,
                             std::int64_t stride,
                             std::vector<std::string> glosses)
    : model_(model),
      ring_(window_size, window_size),
      stride_(stride),
      glosses_(std::move(glosses)) {
  if (stride < 1) {
    throw Error(ErrorKind::config, "stride must be >= 1");
  }
}

StreamPrediction StreamSession::infer_current_window() {
  const auto t0 = std::chrono::steady_clock::now();
  Clip window = ring_.window(ring_.window_size());
  Tensor sample = preprocess_eval(window, model_.config);
  Tensor batch = sample.reshaped({1, 3, model_.config.frames,
                                  model_.config.height, model_.config.width});
  Rng unused(0);
  auto [logits, cache] = model_forward(model_, batch, Mode::eval, unused);
  Tensor probs = softmax_rows(logits);
  const std::int64_t k = probs.dim(1);
  std::int64_t arg = 0;
  for (std::int64_t j = 1; j < k; ++j) {
    if (probs[j] > probs[arg]) arg = j;
  }
  const double latency_ms =
      std::chrono::duration<double, std::milli>(
          std::chrono::steady_clock::now() - t0)
          .count();

  StreamPrediction p;
  p.end = ring_.total_seen() - 1;
  p.start = p.end - ring_.window_size() + 1;
  p.predicted = arg;
  p.gloss = arg < static_cast<std::int64_t>(glosses_.size())
                ? glosses_[static_cast<std::size_t>(arg)]
                : "class_" + std::to_string(arg);
  p.confidence = probs[arg];
  p.latency_ms = latency_ms;
  return p;
}

std::optional<StreamPrediction> StreamSession::push(Frame frame) {
  const RingState state = ring_.push(std::move(frame));
  if (state != RingState::ready) {
    return std::nullopt;
  }
  if ((ring_.total_seen() - ring_.window_size()) % stride_ != 0) {
    return std::nullopt;
  }
  return infer_current_window();
}

namespace {

std::vector<Frame> frames_from_clip(const Clip& clip) {
  std::vector<Frame> frames;
  const std::size_t frame_bytes =
      static_cast<std::size_t>(clip.height * clip.width * 3);
  for (std::int64_t t = 0; t < clip.frames; ++t) {
    Frame f;
    f.height = clip.height;
    f.width = clip.width;
    f.pixels.assign(
        clip.pixels.begin() + static_cast<std::ptrdiff_t>(t * frame_bytes),
        clip.pixels.begin() + static_cast<std::ptrdiff_t>((t + 1) * frame_bytes));
    frames.push_back(std::move(f));
  }
  return frames;
}

std::vector<Frame> load_source_frames(const std::string& source) {
  std::vector<Frame> frames;
  if (fs::is_directory(source)) {
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(source)) {
      if (entry.path().extension() == ".slrc") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) {
      throw Error(ErrorKind::data, "no .slrc files in " + source);
    }
    for (const auto& file : files) {
      auto clip_frames = frames_from_clip(load_clip(file.string()));
      for (auto& f : clip_frames) frames.push_back(std::move(f));
    }
  } else {
    frames = frames_from_clip(load_clip(source));
  }
  return frames;
}

}  // namespace

StreamRunResult run_stream(const std::string& source, const SignNet& model,
                           std::int64_t window_size, std::int64_t stride,
                           const std::vector<std::string>& glosses,
                           const std::string& out_path, bool record_timings) {
  StreamSession session(model, window_size, stride, glosses);
  StreamRunResult result;
  for (auto& frame : load_source_frames(source)) {
    if (auto pred = session.push(std::move(frame))) {
      result.predictions.push_back(std::move(*pred));
    }
  }

  std::vector<double> latencies;
  for (const auto& p : result.predictions) latencies.push_back(p.latency_ms);
  result.stats.windows = static_cast<std::int64_t>(result.predictions.size());
  if (!latencies.empty()) {
    double sum = 0.0;
    for (double l : latencies) sum += l;
    result.stats.mean_latency_ms = sum / static_cast<double>(latencies.size());
    std::sort(latencies.begin(), latencies.end());
    const std::size_t rank = static_cast<std::size_t>(
        std::ceil(0.95 * static_cast<double>(latencies.size())));
    result.stats.p95_latency_ms = latencies[rank - 1];
  }

  if (!out_path.empty()) {
    std::ofstream out(out_path, std::ios::trunc);
    if (!out) {
      throw Error(ErrorKind::io, "cannot write " + out_path);
    }
    for (const auto& p : result.predictions) {
      nlohmann::json line{{"start", p.start},
                          {"end", p.end},
                          {"class", p.predicted},
                          {"gloss", p.gloss},
                          {"confidence", p.confidence},
                          {"latency_ms", record_timings ? p.latency_ms : 0.0}};
      out << line.dump() << '\n';
    }
    nlohmann::json summary{
        {"windows", result.stats.windows},
        {"mean_latency_ms", record_timings ? result.stats.mean_latency_ms : 0.0},
        {"p95_latency_ms", record_timings ? result.stats.p95_latency_ms : 0.0}};
    out << summary.dump() << '\n';
  }
  return result;
}

}  // namespace signet
