#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "signet/rng.hpp"
#include "signet/tensor.hpp"

namespace signet {

// Decoded video volume: u8 RGB pixels, frame-major, row-major within a
// frame, channels interleaved. fps is informational only.
struct Clip {
  std::int64_t frames = 0;
  std::int64_t height = 0;
  std::int64_t width = 0;
  double fps = 30.0;
  std::vector<std::uint8_t> pixels;  // (T,H,W,3)

  std::uint8_t& at(std::int64_t t, std::int64_t h, std::int64_t w,
                   std::int64_t c) {
    return pixels[((t * height + h) * width + w) * 3 + c];
  }
  std::uint8_t at(std::int64_t t, std::int64_t h, std::int64_t w,
                  std::int64_t c) const {
    return pixels[((t * height + h) * width + w) * 3 + c];
  }
  std::int64_t pixel_count() const { return frames * height * width * 3; }
};

// SLRC raw-pixel container, little-endian: magic "SLRC", version u16 = 1,
// channels u16 = 3, num_frames u32, height u32, width u32, then u8 pixels.
// 20-byte header; payload size must match the declared dimensions exactly.
Clip load_clip(const std::string& path);
void save_clip(const Clip& clip, const std::string& path);

// Per-frame bilinear resize, half-pixel-center convention
// (source = (i + 0.5) * scale - 0.5, clamped); channels independent.
Clip resize_bilinear(const Clip& clip, std::int64_t out_h, std::int64_t out_w);

// pixel/255 into a channel-first float tensor (3,T,H,W).
Tensor normalize(const Clip& clip);

enum class TemporalMode { deterministic, random };

// Deterministic source index for output frame i: floor(i * T / target).
// One rule covers both repetition (T < target) and subsampling (T > target).
std::vector<std::int64_t> temporal_indices_deterministic(
    std::int64_t source_frames, std::int64_t target_frames);

// Exactly target_frames frames. Random mode draws a sorted sample of
// distinct indices when the clip is longer than the target and falls back to
// the deterministic rule otherwise; frame order is always preserved.
Clip temporal_standardize(const Clip& clip, std::int64_t target_frames,
                          TemporalMode mode, Rng& rng);

struct AugmentSpec {
  double flip_prob = 0.5;
  double rotation_max_deg = 15.0;
  double brightness_range = 0.2;   // multiplicative, +-
  double contrast_range = 0.2;     // multiplicative around 128, +-
  double translate_max_frac = 0.1; // of width/height
};

// Horizontal mirror; exact involution.
Clip hflip(const Clip& clip);

// One transform parameter set is drawn per clip and applied identically to
// every frame, so the temporal signal survives augmentation. Draw order:
// flip, rotation, brightness, contrast, translate-x, translate-y. Rotation
// and translation are a single bilinear resample with zero fill; jitter is
// out = clamp(((in - 128) * (1 + c) + 128) * (1 + b)).
Clip augment(const Clip& clip, const AugmentSpec& spec, Rng& rng);

}  // namespace signet
