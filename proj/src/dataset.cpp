#include "signet/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>

#include <json.hpp>

#include "json_util.hpp"
#include "signet/error.hpp"

namespace fs = std::filesystem;

namespace signet {

std::vector<ClipRecord> load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw Error(ErrorKind::data, "cannot open manifest " + path);
  }
  const fs::path base = fs::path(path).parent_path();
  std::vector<ClipRecord> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json obj = nlohmann::json::parse(line, nullptr, false);
    if (obj.is_discarded() || !obj.is_object()) {
      throw Error(ErrorKind::data, "manifest " + path + " line " +
                                       std::to_string(line_no) +
                                       " is not a JSON object");
    }
    reject_unknown_keys(obj, {"path", "label", "gloss"},
                        "manifest line " + std::to_string(line_no));
    ClipRecord rec;
    try {
      obj.at("path").get_to(rec.path);
      obj.at("label").get_to(rec.label);
      obj.at("gloss").get_to(rec.gloss);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::data, "manifest " + path + " line " +
                                       std::to_string(line_no) + ": " +
                                       e.what());
    }
    if (rec.label < 0) {
      throw Error(ErrorKind::data, "manifest " + path + " line " +
                                       std::to_string(line_no) +
                                       ": negative label");
    }
    if (fs::path(rec.path).is_relative()) {
      rec.path = (base / rec.path).string();
    }
    records.push_back(std::move(rec));
  }
  return records;
}

void save_manifest(const std::vector<ClipRecord>& records,
                   const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) {
    throw Error(ErrorKind::io, "cannot write manifest " + path);
  }
  for (const auto& rec : records) {
    nlohmann::json obj{
        {"path", rec.path}, {"label", rec.label}, {"gloss", rec.gloss}};
    out << obj.dump() << '\n';
  }
}

SplitResult split_dataset(const std::vector<ClipRecord>& records, double ratio,
                          std::uint64_t seed) {
  if (records.size() < 2) {
    throw Error(ErrorKind::data,
                "dataset needs at least 2 records to split, got " +
                    std::to_string(records.size()));
  }
  if (ratio <= 0.0 || ratio >= 1.0) {
    throw Error(ErrorKind::config, "split ratio must be in (0,1)");
  }

  std::map<std::int64_t, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < records.size(); ++i) {
    by_class[records[i].label].push_back(i);
  }

  Rng rng(seed);
  SplitResult out;
  for (auto& [label, indices] : by_class) {
    // Fisher-Yates with a per-class derived stream, so adding a class does
    // not reshuffle the others.
    Rng cls = rng.derive(static_cast<std::uint64_t>(label));
    for (std::size_t i = indices.size(); i > 1; --i) {
      const std::size_t j =
          static_cast<std::size_t>(cls.next_u64() % static_cast<std::uint64_t>(i));
      std::swap(indices[i - 1], indices[j]);
    }
    const std::int64_t n = static_cast<std::int64_t>(indices.size());
    std::int64_t n_train =
        static_cast<std::int64_t>(std::floor(ratio * static_cast<double>(n)));
    if (n >= 2) {
      n_train = std::clamp<std::int64_t>(n_train, 1, n - 1);
    }
    for (std::int64_t i = 0; i < n; ++i) {
      (i < n_train ? out.train : out.val)
          .push_back(records[indices[static_cast<std::size_t>(i)]]);
    }
  }
  return out;
}

// --------------------------------------------------------- batch iterator --

BatchIterator::BatchIterator(std::vector<ClipRecord> records,
                             const ModelConfig& config,
                             const AugmentSpec& augment_spec, bool training,
                             std::int64_t batch_size, bool shuffle, Rng rng)
    : records_(std::move(records)),
      config_(config),
      augment_spec_(augment_spec),
      training_(training),
      batch_size_(batch_size),
      rng_(rng) {
  if (batch_size_ < 1) {
    throw Error(ErrorKind::config, "batch_size must be >= 1");
  }
  order_.resize(records_.size());
  for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
  if (shuffle) {
    Rng sh = rng_.derive(0);
    for (std::size_t i = order_.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(
          sh.next_u64() % static_cast<std::uint64_t>(i));
      std::swap(order_[i - 1], order_[j]);
    }
  }
}

void BatchIterator::reset() { cursor_ = 0; }

Tensor BatchIterator::preprocess(std::size_t record_index) const {
  const ClipRecord& rec = records_[record_index];
  Clip clip;
  try {
    clip = load_clip(rec.path);
  } catch (const Error& e) {
    throw Error(e.kind(),
                "record " + rec.path + ": " + std::string(e.what()));
  }
  clip = resize_bilinear(clip, config_.height, config_.width);
  // Stream tag 1+index: tag 0 is reserved for the shuffle.
  Rng rec_rng = rng_.derive(1 + static_cast<std::uint64_t>(record_index));
  if (training_) {
    clip = temporal_standardize(clip, config_.frames, TemporalMode::random,
                                rec_rng);
    clip = augment(clip, augment_spec_, rec_rng);
  } else {
    clip = temporal_standardize(clip, config_.frames,
                                TemporalMode::deterministic, rec_rng);
  }
  return normalize(clip);
}

std::optional<Batch> BatchIterator::next() {
  if (cursor_ >= order_.size()) {
    return std::nullopt;
  }
  const std::size_t take = std::min<std::size_t>(
      static_cast<std::size_t>(batch_size_), order_.size() - cursor_);

  Batch batch;
  batch.clips = Tensor(std::vector<std::int64_t>{
      static_cast<std::int64_t>(take), 3, config_.frames, config_.height,
      config_.width});
  const std::int64_t sample_elems = batch.clips.numel() / static_cast<std::int64_t>(take);
  for (std::size_t i = 0; i < take; ++i) {
    const std::size_t rec_idx = order_[cursor_ + i];
    Tensor sample = preprocess(rec_idx);
    std::copy_n(sample.data(), sample_elems,
                batch.clips.data() + static_cast<std::int64_t>(i) * sample_elems);
    batch.labels.push_back(records_[rec_idx].label);
  }
  cursor_ += take;
  return batch;
}

Tensor preprocess_eval(const Clip& clip, const ModelConfig& config) {
  Clip sized = resize_bilinear(clip, config.height, config.width);
  Rng unused(0);  // deterministic mode draws nothing
  sized = temporal_standardize(sized, config.frames,
                               TemporalMode::deterministic, unused);
  return normalize(sized);
}

// ------------------------------------------------------------- synthesis --

std::string synth_gloss(std::int64_t label) {
  static const char* kGlosses[] = {
      "HELLO", "THANKS", "YES",  "NO",    "PLEASE", "SORRY",  "HELP",  "STOP",
      "GO",    "MORE",   "WANT", "LEARN", "NAME",   "WHERE",  "FINISH",
      "UNDERSTAND"};
  constexpr std::int64_t n = static_cast<std::int64_t>(std::size(kGlosses));
  if (label >= 0 && label < n) {
    return kGlosses[label];
  }
  return "SIGN_" + std::to_string(label);
}

Clip synth_clip(const SynthSpec& spec, std::int64_t label,
                std::int64_t clip_index) {
  const std::int64_t T = spec.frames, H = spec.height, W = spec.width;
  const double extent = static_cast<double>(std::min(H, W));

  // Independent stream per (seed, global clip index).
  Rng rng = Rng(spec.seed).derive(
      static_cast<std::uint64_t>(label * spec.clips_per_class + clip_index));

  const double jx = rng.uniform(-0.05, 0.05) * extent;
  const double jy = rng.uniform(-0.05, 0.05) * extent;
  const double radius = (extent / 7.0) * (1.0 + rng.uniform(-0.2, 0.2));
  const double amplitude = 190.0 + rng.uniform(0.0, 50.0);
  const double heading =
      2.0 * std::numbers::pi * static_cast<double>(label) /
          static_cast<double>(spec.num_classes) +
      rng.uniform(-0.05, 0.05);

  const double cx = (W - 1) * 0.5 + jx;
  const double cy = (H - 1) * 0.5 + jy;
  const double span = 0.30 * extent;
  const double dir_x = std::cos(heading);
  const double dir_y = std::sin(heading);
  const int archetype = static_cast<int>(label % 3);

  Clip clip;
  clip.frames = T;
  clip.height = H;
  clip.width = W;
  clip.pixels.resize(static_cast<std::size_t>(clip.pixel_count()));

  const double sigma = radius / 1.2;
  const double two_sigma_sq = 2.0 * sigma * sigma;

  for (std::int64_t t = 0; t < T; ++t) {
    const double phase = T > 1 ? static_cast<double>(t) / (T - 1) : 0.5;
    double bx = cx, by = cy;
    switch (archetype) {
      case 0:  // full linear sweep through the center
        bx += (2.0 * phase - 1.0) * span * dir_x;
        by += (2.0 * phase - 1.0) * span * dir_y;
        break;
      case 1:  // short oscillation along the heading
        bx += 0.5 * span * std::sin(2.0 * std::numbers::pi * phase) * dir_x;
        by += 0.5 * span * std::sin(2.0 * std::numbers::pi * phase) * dir_y;
        break;
      default: {  // circular orbit starting at the heading
        const double a = heading + 2.0 * std::numbers::pi * phase;
        bx = cx + span * std::cos(a);
        by = cy + span * std::sin(a);
        break;
      }
    }
    for (std::int64_t y = 0; y < H; ++y) {
      for (std::int64_t x = 0; x < W; ++x) {
        const double noise = rng.uniform(0.0, 25.0);
        const double d2 = (x - bx) * (x - bx) + (y - by) * (y - by);
        const double glow = amplitude * std::exp(-d2 / two_sigma_sq);
        const double r = noise + glow;
        const double g = noise + glow * 0.9;
        const double b = noise + glow * 0.8;
        auto q = [](double v) {
          return static_cast<std::uint8_t>(
              std::clamp(std::floor(v + 0.5), 0.0, 255.0));
        };
        clip.at(t, y, x, 0) = q(r);
        clip.at(t, y, x, 1) = q(g);
        clip.at(t, y, x, 2) = q(b);
      }
    }
  }
  return clip;
}

std::string synth_generate(const SynthSpec& spec, const std::string& out_dir) {
  if (spec.num_classes < 2) {
    throw Error(ErrorKind::config, "need at least 2 classes, got " +
                                       std::to_string(spec.num_classes));
  }
  if (spec.clips_per_class < 1 || spec.frames < 1 || spec.height < 1 ||
      spec.width < 1) {
    throw Error(ErrorKind::config, "synthesis dimensions must be >= 1");
  }
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) {
    throw Error(ErrorKind::io,
                "cannot create output directory " + out_dir + ": " +
                    ec.message());
  }

  std::vector<ClipRecord> records;
  for (std::int64_t k = 0; k < spec.num_classes; ++k) {
    for (std::int64_t i = 0; i < spec.clips_per_class; ++i) {
      char name[64];
      std::snprintf(name, sizeof(name), "clip_%03lld_%03lld.slrc",
                    static_cast<long long>(k), static_cast<long long>(i));
      const fs::path file = fs::path(out_dir) / name;
      save_clip(synth_clip(spec, k, i), file.string());
      // Manifest paths stay relative so the dataset directory is portable.
      records.push_back({name, k, synth_gloss(k)});
    }
  }

  const fs::path manifest = fs::path(out_dir) / "manifest.jsonl";
  save_manifest(records, manifest.string());

  nlohmann::json glosses = nlohmann::json::array();
  for (std::int64_t k = 0; k < spec.num_classes; ++k) {
    glosses.push_back(synth_gloss(k));
  }
  std::ofstream labels(fs::path(out_dir) / "labels.json");
  labels << glosses.dump() << '\n';

  return manifest.string();
}

}  // namespace signet
