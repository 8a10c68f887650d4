#include "signet/clip.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "binio.hpp"
#include "signet/error.hpp"

namespace signet {

namespace {

constexpr char kMagic[4] = {'S', 'L', 'R', 'C'};
constexpr std::uint16_t kVersion = 1;
constexpr std::uint16_t kChannels = 3;
// Caps dimension declarations so a corrupt header cannot trigger a huge
// allocation before the payload size check.
constexpr std::uint64_t kMaxDim = 1u << 20;

std::uint8_t round_clamp_u8(double v) {
  const double r = std::floor(v + 0.5);  // round half up
  if (r <= 0.0) return 0;
  if (r >= 255.0) return 255;
  return static_cast<std::uint8_t>(r);
}

}  // namespace

Clip load_clip(const std::string& path) {
  binio::Reader r = binio::Reader::from_file(path, "clip");
  r.expect_magic(kMagic);
  {
    const std::uint64_t at = r.offset();
    const std::uint16_t version = r.u16();
    if (version != kVersion) {
      r.fail_at("unsupported clip version " + std::to_string(version), at);
    }
  }
  {
    const std::uint64_t at = r.offset();
    const std::uint16_t channels = r.u16();
    if (channels != kChannels) {
      r.fail_at("clip must have 3 channels, got " + std::to_string(channels),
                at);
    }
  }
  const std::uint64_t dims_at = r.offset();
  const std::uint64_t t = r.u32();
  const std::uint64_t h = r.u32();
  const std::uint64_t w = r.u32();
  if (t == 0 || h == 0 || w == 0) {
    r.fail_at("clip dimensions must be >= 1", dims_at);
  }
  if (t > kMaxDim || h > kMaxDim || w > kMaxDim ||
      t * h * w > (std::uint64_t{1} << 34)) {
    r.fail_at("clip dimensions overflow sanity bounds", dims_at);
  }
  const std::uint64_t payload = t * h * w * 3;
  if (r.remaining() != payload) {
    r.fail("clip payload is " + std::to_string(r.remaining()) +
           " bytes, header declares " + std::to_string(payload));
  }
  Clip clip;
  clip.frames = static_cast<std::int64_t>(t);
  clip.height = static_cast<std::int64_t>(h);
  clip.width = static_cast<std::int64_t>(w);
  clip.pixels.resize(payload);
  r.bytes(clip.pixels.data(), payload);
  return clip;
}

void save_clip(const Clip& clip, const std::string& path) {
  if (clip.frames < 1 || clip.height < 1 || clip.width < 1) {
    throw Error(ErrorKind::shape, "clip dimensions must be >= 1");
  }
  if (static_cast<std::int64_t>(clip.pixels.size()) != clip.pixel_count()) {
    throw Error(ErrorKind::shape, "clip pixel buffer does not match header");
  }
  binio::Writer w;
  w.magic(kMagic);
  w.u16(kVersion);
  w.u16(kChannels);
  w.u32(static_cast<std::uint32_t>(clip.frames));
  w.u32(static_cast<std::uint32_t>(clip.height));
  w.u32(static_cast<std::uint32_t>(clip.width));
  w.bytes(clip.pixels.data(), clip.pixels.size());
  w.write_file(path);
}

Clip resize_bilinear(const Clip& clip, std::int64_t out_h, std::int64_t out_w) {
  if (out_h < 1 || out_w < 1) {
    throw Error(ErrorKind::shape, "resize target must be >= 1");
  }
  if (out_h == clip.height && out_w == clip.width) {
    return clip;
  }
  Clip out;
  out.frames = clip.frames;
  out.height = out_h;
  out.width = out_w;
  out.fps = clip.fps;
  out.pixels.resize(static_cast<std::size_t>(out.pixel_count()));

  const double scale_h = static_cast<double>(clip.height) / out_h;
  const double scale_w = static_cast<double>(clip.width) / out_w;

  for (std::int64_t t = 0; t < clip.frames; ++t) {
    for (std::int64_t y = 0; y < out_h; ++y) {
      double sy = (y + 0.5) * scale_h - 0.5;
      sy = std::clamp(sy, 0.0, static_cast<double>(clip.height - 1));
      const std::int64_t y0 = static_cast<std::int64_t>(sy);
      const std::int64_t y1 = std::min(y0 + 1, clip.height - 1);
      const double fy = sy - y0;
      for (std::int64_t x = 0; x < out_w; ++x) {
        double sx = (x + 0.5) * scale_w - 0.5;
        sx = std::clamp(sx, 0.0, static_cast<double>(clip.width - 1));
        const std::int64_t x0 = static_cast<std::int64_t>(sx);
        const std::int64_t x1 = std::min(x0 + 1, clip.width - 1);
        const double fx = sx - x0;
        for (std::int64_t c = 0; c < 3; ++c) {
          const double v =
              (1 - fy) * ((1 - fx) * clip.at(t, y0, x0, c) +
                          fx * clip.at(t, y0, x1, c)) +
              fy * ((1 - fx) * clip.at(t, y1, x0, c) +
                    fx * clip.at(t, y1, x1, c));
          out.at(t, y, x, c) = round_clamp_u8(v);
        }
      }
    }
  }
  return out;
}

Tensor normalize(const Clip& clip) {
  Tensor out(std::vector<std::int64_t>{3, clip.frames, clip.height,
                                       clip.width});
  float* po = out.data();
  const std::int64_t thw = clip.frames * clip.height * clip.width;
  for (std::int64_t t = 0; t < clip.frames; ++t) {
    for (std::int64_t h = 0; h < clip.height; ++h) {
      for (std::int64_t w = 0; w < clip.width; ++w) {
        const std::int64_t pix = (t * clip.height + h) * clip.width + w;
        for (std::int64_t c = 0; c < 3; ++c) {
          po[c * thw + pix] =
              static_cast<float>(clip.pixels[pix * 3 + c]) / 255.0f;
        }
      }
    }
  }
  return out;
}

std::vector<std::int64_t> temporal_indices_deterministic(
    std::int64_t source_frames, std::int64_t target_frames) {
  std::vector<std::int64_t> idx(static_cast<std::size_t>(target_frames));
  for (std::int64_t i = 0; i < target_frames; ++i) {
    idx[static_cast<std::size_t>(i)] = i * source_frames / target_frames;
  }
  return idx;
}

Clip temporal_standardize(const Clip& clip, std::int64_t target_frames,
                          TemporalMode mode, Rng& rng) {
  if (target_frames < 1) {
    throw Error(ErrorKind::shape, "target frame count must be >= 1");
  }
  std::vector<std::int64_t> idx;
  if (mode == TemporalMode::random && clip.frames > target_frames) {
    // Selection sampling: walk the source frames once, accepting frame j
    // with probability needed/(remaining). Yields a sorted sample of
    // distinct indices without replacement.
    idx.reserve(static_cast<std::size_t>(target_frames));
    std::int64_t needed = target_frames;
    for (std::int64_t j = 0; j < clip.frames && needed > 0; ++j) {
      const double p =
          static_cast<double>(needed) / static_cast<double>(clip.frames - j);
      if (rng.uniform() < p) {
        idx.push_back(j);
        --needed;
      }
    }
  } else {
    idx = temporal_indices_deterministic(clip.frames, target_frames);
  }

  Clip out;
  out.frames = target_frames;
  out.height = clip.height;
  out.width = clip.width;
  out.fps = clip.fps;
  out.pixels.resize(static_cast<std::size_t>(out.pixel_count()));
  const std::size_t frame_bytes =
      static_cast<std::size_t>(clip.height * clip.width * 3);
  for (std::int64_t i = 0; i < target_frames; ++i) {
    std::copy_n(
        clip.pixels.data() + static_cast<std::size_t>(idx[i]) * frame_bytes,
        frame_bytes,
        out.pixels.data() + static_cast<std::size_t>(i) * frame_bytes);
  }
  return out;
}

Clip hflip(const Clip& clip) {
  Clip out = clip;
  for (std::int64_t t = 0; t < clip.frames; ++t) {
    for (std::int64_t h = 0; h < clip.height; ++h) {
      for (std::int64_t w = 0; w < clip.width; ++w) {
        for (std::int64_t c = 0; c < 3; ++c) {
          out.at(t, h, w, c) = clip.at(t, h, clip.width - 1 - w, c);
        }
      }
    }
  }
  return out;
}

namespace {

// Rotation about the frame center plus translation, as one inverse-mapped
// bilinear resample with zero fill outside the source.
Clip rotate_translate(const Clip& clip, double theta_rad, double tx,
                      double ty) {
  Clip out = clip;
  const double cx = (clip.width - 1) * 0.5;
  const double cy = (clip.height - 1) * 0.5;
  const double ct = std::cos(theta_rad);
  const double st = std::sin(theta_rad);
  for (std::int64_t t = 0; t < clip.frames; ++t) {
    for (std::int64_t y = 0; y < clip.height; ++y) {
      for (std::int64_t x = 0; x < clip.width; ++x) {
        const double dx = x - cx - tx;
        const double dy = y - cy - ty;
        const double sx = ct * dx + st * dy + cx;
        const double sy = -st * dx + ct * dy + cy;
        const std::int64_t x0 = static_cast<std::int64_t>(std::floor(sx));
        const std::int64_t y0 = static_cast<std::int64_t>(std::floor(sy));
        const double fx = sx - x0;
        const double fy = sy - y0;
        for (std::int64_t c = 0; c < 3; ++c) {
          double v = 0.0;
          for (int ny = 0; ny < 2; ++ny) {
            for (int nx = 0; nx < 2; ++nx) {
              const std::int64_t px = x0 + nx;
              const std::int64_t py = y0 + ny;
              if (px < 0 || px >= clip.width || py < 0 || py >= clip.height) {
                continue;  // zero fill
              }
              const double wgt = (nx ? fx : 1 - fx) * (ny ? fy : 1 - fy);
              v += wgt * clip.at(t, py, px, c);
            }
          }
          out.at(t, y, x, c) = round_clamp_u8(v);
        }
      }
    }
  }
  return out;
}

}  // namespace

Clip augment(const Clip& clip, const AugmentSpec& spec, Rng& rng) {
  const double u_flip = rng.uniform();
  const double theta_deg =
      rng.uniform(-spec.rotation_max_deg, spec.rotation_max_deg);
  const double brightness =
      rng.uniform(-spec.brightness_range, spec.brightness_range);
  const double contrast =
      rng.uniform(-spec.contrast_range, spec.contrast_range);
  const double tx =
      rng.uniform(-spec.translate_max_frac, spec.translate_max_frac) *
      static_cast<double>(clip.width);
  const double ty =
      rng.uniform(-spec.translate_max_frac, spec.translate_max_frac) *
      static_cast<double>(clip.height);

  Clip out = u_flip < spec.flip_prob ? hflip(clip) : clip;
  if (theta_deg != 0.0 || tx != 0.0 || ty != 0.0) {
    out = rotate_translate(out, theta_deg * std::numbers::pi / 180.0, tx, ty);
  }
  if (brightness != 0.0 || contrast != 0.0) {
    for (std::uint8_t& p : out.pixels) {
      const double v =
          ((p - 128.0) * (1.0 + contrast) + 128.0) * (1.0 + brightness);
      p = round_clamp_u8(v);
    }
  }
  return out;
}

}  // namespace signet
