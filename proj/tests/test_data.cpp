#include <doctest.h>

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <vector>

#include "signet/clip.hpp"
#include "signet/dataset.hpp"
#include "signet/error.hpp"

using namespace signet;
namespace fs = std::filesystem;

namespace {

Clip random_clip(std::int64_t t, std::int64_t h, std::int64_t w, Rng& rng) {
  Clip c;
  c.frames = t;
  c.height = h;
  c.width = w;
  c.pixels.resize(static_cast<std::size_t>(c.pixel_count()));
  for (auto& p : c.pixels) {
    p = static_cast<std::uint8_t>(rng.next_u64() % 256);
  }
  return c;
}

fs::path temp_dir(const char* name) {
  fs::path dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

}  // namespace

// -------------------------------------------------------------------- SLRC

TEST_CASE("slrc round trip is bitwise") {
  Rng rng(1);
  Clip clip = random_clip(3, 5, 4, rng);
  const fs::path path = fs::temp_directory_path() / "signet_clip.slrc";
  save_clip(clip, path.string());
  Clip back = load_clip(path.string());
  CHECK(back.frames == clip.frames);
  CHECK(back.height == clip.height);
  CHECK(back.width == clip.width);
  CHECK(back.pixels == clip.pixels);
  fs::remove(path);
}

TEST_CASE("slrc file size is 20-byte header plus T*H*W*3") {
  Rng rng(2);
  Clip clip = random_clip(4, 6, 7, rng);
  const fs::path path = fs::temp_directory_path() / "signet_size.slrc";
  save_clip(clip, path.string());
  CHECK(fs::file_size(path) == 20u + 4 * 6 * 7 * 3);
  fs::remove(path);
}

TEST_CASE("slrc declared frames vs short payload is a truncation error") {
  Rng rng(3);
  Clip clip = random_clip(2, 4, 4, rng);
  const fs::path path = fs::temp_directory_path() / "signet_trunc.slrc";
  save_clip(clip, path.string());
  // keep only one frame of payload
  fs::resize_file(path, 20 + 4 * 4 * 3);
  try {
    load_clip(path.string());
    FAIL("expected format error");
  } catch (const FormatError& e) {
    CHECK(e.offset() == 20);
    CHECK(std::string(e.what()).find("byte offset 20") != std::string::npos);
  }
  fs::remove(path);
}

TEST_CASE("slrc bad magic names offset 0") {
  const fs::path path = fs::temp_directory_path() / "signet_magic.slrc";
  std::ofstream out(path, std::ios::binary);
  out << "JUNKJUNKJUNKJUNKJUNKJUNK";
  out.close();
  try {
    load_clip(path.string());
    FAIL("expected format error");
  } catch (const FormatError& e) {
    CHECK(e.offset() == 0);
  }
  fs::remove(path);
}

// ------------------------------------------------------------------ resize

TEST_CASE("resize to the same size is the identity") {
  Rng rng(4);
  Clip clip = random_clip(2, 6, 5, rng);
  Clip out = resize_bilinear(clip, 6, 5);
  CHECK(out.pixels == clip.pixels);
}

TEST_CASE("resize 2x2 to 1x1 averages the four pixels, rounding half up") {
  Clip clip;
  clip.frames = 1;
  clip.height = 2;
  clip.width = 2;
  clip.pixels.resize(12);
  const std::uint8_t vals[4] = {0, 100, 200, 255};
  for (int i = 0; i < 4; ++i) {
    for (int c = 0; c < 3; ++c) clip.pixels[i * 3 + c] = vals[i];
  }
  Clip out = resize_bilinear(clip, 1, 1);
  // (0+100+200+255)/4 = 138.75 -> 139
  CHECK(out.at(0, 0, 0, 0) == 139);
}

TEST_CASE("resize preserves constant color at any size") {
  Clip clip;
  clip.frames = 2;
  clip.height = 5;
  clip.width = 7;
  clip.pixels.assign(static_cast<std::size_t>(clip.pixel_count()), 77);
  for (auto [h, w] : {std::pair<int, int>{3, 3}, {10, 14}, {1, 1}, {8, 2}}) {
    Clip out = resize_bilinear(clip, h, w);
    for (auto p : out.pixels) CHECK(p == 77);
  }
}

// --------------------------------------------------------------- normalize

TEST_CASE("normalize endpoints and midpoint") {
  Clip clip;
  clip.frames = 1;
  clip.height = 1;
  clip.width = 3;
  clip.pixels = {0, 0, 0, 128, 128, 128, 255, 255, 255};
  Tensor t = normalize(clip);
  CHECK(t.shape() == std::vector<std::int64_t>{3, 1, 1, 3});
  CHECK(t.at({0, 0, 0, 0}) == 0.0f);
  CHECK(t.at({0, 0, 0, 1}) == doctest::Approx(128.0 / 255.0).epsilon(1e-6));
  CHECK(t.at({0, 0, 0, 2}) == 1.0f);
}

TEST_CASE("normalize then denormalize is identity on u8") {
  Rng rng(5);
  Clip clip = random_clip(2, 4, 4, rng);
  Tensor t = normalize(clip);
  for (std::int64_t i = 0; i < t.numel(); ++i) {
    CHECK(t[i] >= 0.0f);
    CHECK(t[i] <= 1.0f);
  }
  const std::int64_t thw = clip.frames * clip.height * clip.width;
  for (std::int64_t c = 0; c < 3; ++c) {
    for (std::int64_t pix = 0; pix < thw; ++pix) {
      const auto round_back = static_cast<std::uint8_t>(
          std::floor(t[c * thw + pix] * 255.0f + 0.5f));
      CHECK(round_back == clip.pixels[pix * 3 + c]);
    }
  }
}

// ---------------------------------------------------- temporal standardize

TEST_CASE("temporal identity when T equals target") {
  Rng rng(6);
  Clip clip = random_clip(30, 2, 2, rng);
  Rng unused(0);
  Clip out = temporal_standardize(clip, 30, TemporalMode::deterministic,
                                  unused);
  CHECK(out.pixels == clip.pixels);
}

TEST_CASE("temporal floor map for repetition and subsampling") {
  auto up = temporal_indices_deterministic(10, 30);
  REQUIRE(up.size() == 30);
  for (int i = 0; i < 30; ++i) CHECK(up[i] == i / 3);

  auto down = temporal_indices_deterministic(60, 30);
  REQUIRE(down.size() == 30);
  for (int i = 0; i < 30; ++i) CHECK(down[i] == 2 * i);
}

TEST_CASE("temporal deterministic mode is idempotent and order-preserving") {
  Rng rng(7);
  Clip clip = random_clip(13, 2, 2, rng);
  Rng unused(0);
  Clip once = temporal_standardize(clip, 8, TemporalMode::deterministic,
                                   unused);
  Clip twice = temporal_standardize(once, 8, TemporalMode::deterministic,
                                    unused);
  CHECK(once.pixels == twice.pixels);

  for (auto [src, dst] : {std::pair<int, int>{1, 5}, {7, 3}, {12, 12}}) {
    auto idx = temporal_indices_deterministic(src, dst);
    CHECK(static_cast<int>(idx.size()) == dst);
    for (std::size_t i = 1; i < idx.size(); ++i) CHECK(idx[i] >= idx[i - 1]);
    for (auto v : idx) {
      CHECK(v >= 0);
      CHECK(v < src);
    }
  }
}

TEST_CASE("temporal random mode samples sorted distinct frames") {
  Rng rng(8);
  Clip clip = random_clip(20, 1, 1, rng);
  // tag frame t with pixel value t
  for (std::int64_t t = 0; t < 20; ++t) {
    clip.at(t, 0, 0, 0) = static_cast<std::uint8_t>(t);
  }
  Rng draw(9);
  Clip out = temporal_standardize(clip, 8, TemporalMode::random, draw);
  REQUIRE(out.frames == 8);
  std::set<std::uint8_t> seen;
  std::uint8_t prev = 0;
  for (std::int64_t t = 0; t < 8; ++t) {
    const std::uint8_t v = out.at(t, 0, 0, 0);
    if (t > 0) CHECK(v > prev);
    prev = v;
    seen.insert(v);
  }
  CHECK(seen.size() == 8);

  // shorter than target falls back to the deterministic rule
  Clip shorter = random_clip(3, 1, 1, rng);
  Rng draw2(10);
  Clip rep = temporal_standardize(shorter, 9, TemporalMode::random, draw2);
  Rng unused(0);
  Clip det = temporal_standardize(shorter, 9, TemporalMode::deterministic,
                                  unused);
  CHECK(rep.pixels == det.pixels);
}

TEST_CASE("temporal output count always matches the target") {
  Rng rng(11);
  for (std::int64_t src : {1, 2, 7, 30, 64}) {
    Clip clip = random_clip(src, 2, 2, rng);
    for (std::int64_t target : {1, 5, 30}) {
      Rng draw(12);
      Clip out = temporal_standardize(clip, target, TemporalMode::random, draw);
      CHECK(out.frames == target);
    }
  }
}

// ----------------------------------------------------------------- augment

TEST_CASE("augment with zero ranges and zero flip prob is the identity") {
  Rng rng(13);
  Clip clip = random_clip(3, 8, 8, rng);
  AugmentSpec spec;
  spec.flip_prob = 0.0;
  spec.rotation_max_deg = 0.0;
  spec.brightness_range = 0.0;
  spec.contrast_range = 0.0;
  spec.translate_max_frac = 0.0;
  Rng draw(14);
  Clip out = augment(clip, spec, draw);
  CHECK(out.pixels == clip.pixels);
}

TEST_CASE("hflip is an involution") {
  Rng rng(15);
  Clip clip = random_clip(2, 4, 6, rng);
  CHECK(hflip(hflip(clip)).pixels == clip.pixels);
}

TEST_CASE("augment is deterministic per seed and preserves shape") {
  Rng rng(16);
  Clip clip = random_clip(4, 10, 12, rng);
  AugmentSpec spec;
  Rng d1(42), d2(42);
  Clip a = augment(clip, spec, d1);
  Clip b = augment(clip, spec, d2);
  CHECK(a.pixels == b.pixels);
  CHECK(a.frames == clip.frames);
  CHECK(a.height == clip.height);
  CHECK(a.width == clip.width);
  Rng d3(43);
  Clip c = augment(clip, spec, d3);
  CHECK(c.pixels != a.pixels);  // different draw, different transform
}

// ------------------------------------------------------------------- split

namespace {

std::vector<ClipRecord> fake_records(std::int64_t classes,
                                     std::int64_t per_class) {
  std::vector<ClipRecord> recs;
  for (std::int64_t k = 0; k < classes; ++k) {
    for (std::int64_t i = 0; i < per_class; ++i) {
      recs.push_back({"clip_" + std::to_string(k) + "_" + std::to_string(i),
                      k, synth_gloss(k)});
    }
  }
  return recs;
}

}  // namespace

TEST_CASE("split 5 classes x 10 records gives 40 train / 10 val") {
  auto recs = fake_records(5, 10);
  SplitResult s = split_dataset(recs, 0.8, 7);
  CHECK(s.train.size() == 40);
  CHECK(s.val.size() == 10);
}

TEST_CASE("split is deterministic, disjoint and exhaustive") {
  auto recs = fake_records(3, 7);
  SplitResult a = split_dataset(recs, 0.8, 123);
  SplitResult b = split_dataset(recs, 0.8, 123);
  auto paths = [](const std::vector<ClipRecord>& v) {
    std::set<std::string> out;
    for (const auto& r : v) out.insert(r.path);
    return out;
  };
  CHECK(paths(a.train) == paths(b.train));
  CHECK(paths(a.val) == paths(b.val));

  auto train = paths(a.train);
  auto val = paths(a.val);
  std::set<std::string> inter;
  std::set_intersection(train.begin(), train.end(), val.begin(), val.end(),
                        std::inserter(inter, inter.end()));
  CHECK(inter.empty());
  CHECK(train.size() + val.size() == recs.size());
}

TEST_CASE("split is stratified within one record of 80 percent") {
  auto recs = fake_records(4, 9);  // floor(.8*9)=7 per class
  SplitResult s = split_dataset(recs, 0.8, 5);
  std::map<std::int64_t, std::int64_t> train_counts;
  for (const auto& r : s.train) ++train_counts[r.label];
  for (auto [label, count] : train_counts) {
    (void)label;
    CHECK(std::abs(static_cast<double>(count) - 0.8 * 9.0) <= 1.0);
  }
}

TEST_CASE("split rejects an empty or single-record dataset") {
  CHECK_THROWS_AS(split_dataset({}, 0.8, 0), Error);
  CHECK_THROWS_AS(split_dataset(fake_records(1, 1), 0.8, 0), Error);
}

// ---------------------------------------------------------------- manifest

TEST_CASE("manifest round trip resolves relative paths") {
  const fs::path dir = temp_dir("signet_manifest_test");
  std::vector<ClipRecord> recs{{"a.slrc", 0, "HELLO"}, {"b.slrc", 1, "NO"}};
  const fs::path manifest = dir / "manifest.jsonl";
  save_manifest(recs, manifest.string());
  auto loaded = load_manifest(manifest.string());
  REQUIRE(loaded.size() == 2);
  CHECK(loaded[0].path == (dir / "a.slrc").string());
  CHECK(loaded[0].label == 0);
  CHECK(loaded[0].gloss == "HELLO");
  fs::remove_all(dir);
}

TEST_CASE("manifest rejects unknown keys and bad rows") {
  const fs::path dir = temp_dir("signet_manifest_bad");
  const fs::path manifest = dir / "manifest.jsonl";
  {
    std::ofstream out(manifest);
    out << R"({"path":"a.slrc","label":0,"gloss":"X","extra":1})" << '\n';
  }
  CHECK_THROWS_AS(load_manifest(manifest.string()), Error);
  {
    std::ofstream out(manifest, std::ios::trunc);
    out << "not json\n";
  }
  CHECK_THROWS_AS(load_manifest(manifest.string()), Error);
  fs::remove_all(dir);
}

// --------------------------------------------------------------- synthesis

TEST_CASE("synth_generate writes classes x per-class clips plus manifest") {
  const fs::path dir = temp_dir("signet_synth_test");
  SynthSpec spec;
  spec.num_classes = 3;
  spec.clips_per_class = 4;
  spec.frames = 5;
  spec.height = 16;
  spec.width = 16;
  spec.seed = 9;
  const std::string manifest = synth_generate(spec, dir.string());

  std::int64_t slrc_files = 0;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.path().extension() == ".slrc") ++slrc_files;
  }
  CHECK(slrc_files == 12);
  auto records = load_manifest(manifest);
  CHECK(records.size() == 12);
  for (const auto& r : records) {
    Clip c = load_clip(r.path);
    CHECK(c.frames == 5);
    CHECK(c.height == 16);
    CHECK(c.width == 16);
  }
  fs::remove_all(dir);
}

TEST_CASE("synth_generate is byte-identical for the same seed") {
  const fs::path d1 = temp_dir("signet_synth_a");
  const fs::path d2 = temp_dir("signet_synth_b");
  SynthSpec spec;
  spec.num_classes = 2;
  spec.clips_per_class = 2;
  spec.frames = 4;
  spec.height = 12;
  spec.width = 12;
  spec.seed = 77;
  synth_generate(spec, d1.string());
  synth_generate(spec, d2.string());
  for (const auto& entry : fs::directory_iterator(d1)) {
    const fs::path other = d2 / entry.path().filename();
    std::ifstream f1(entry.path(), std::ios::binary);
    std::ifstream f2(other, std::ios::binary);
    std::string s1((std::istreambuf_iterator<char>(f1)), {});
    std::string s2((std::istreambuf_iterator<char>(f2)), {});
    CHECK(s1 == s2);
  }
  fs::remove_all(d1);
  fs::remove_all(d2);
}

TEST_CASE("synth classes separate under a 3-nearest-neighbor mean-frame oracle") {
  SynthSpec spec;
  spec.num_classes = 5;
  spec.clips_per_class = 10;
  spec.frames = 8;
  spec.height = 32;
  spec.width = 32;
  spec.seed = 4;

  // feature: mean frame, grayscaled, pooled to 8x8
  auto features = [&](const Clip& c) {
    std::vector<double> mean(static_cast<std::size_t>(c.height * c.width), 0.0);
    for (std::int64_t t = 0; t < c.frames; ++t) {
      for (std::int64_t h = 0; h < c.height; ++h) {
        for (std::int64_t w = 0; w < c.width; ++w) {
          double g = 0;
          for (int ch = 0; ch < 3; ++ch) g += c.at(t, h, w, ch);
          mean[static_cast<std::size_t>(h * c.width + w)] +=
              g / (3.0 * c.frames);
        }
      }
    }
    std::vector<double> pooled(64, 0.0);
    const std::int64_t cell_h = c.height / 8, cell_w = c.width / 8;
    for (std::int64_t h = 0; h < c.height; ++h) {
      for (std::int64_t w = 0; w < c.width; ++w) {
        pooled[static_cast<std::size_t>((h / cell_h) * 8 + (w / cell_w))] +=
            mean[static_cast<std::size_t>(h * c.width + w)];
      }
    }
    return pooled;
  };

  std::vector<std::vector<double>> feats;
  std::vector<std::int64_t> labels;
  for (std::int64_t k = 0; k < spec.num_classes; ++k) {
    for (std::int64_t i = 0; i < spec.clips_per_class; ++i) {
      feats.push_back(features(synth_clip(spec, k, i)));
      labels.push_back(k);
    }
  }

  // leave-one-out 3-NN
  std::int64_t correct = 0;
  for (std::size_t q = 0; q < feats.size(); ++q) {
    std::vector<std::pair<double, std::int64_t>> dists;
    for (std::size_t j = 0; j < feats.size(); ++j) {
      if (j == q) continue;
      double d = 0;
      for (std::size_t f = 0; f < 64; ++f) {
        const double diff = feats[q][f] - feats[j][f];
        d += diff * diff;
      }
      dists.push_back({d, labels[j]});
    }
    std::partial_sort(dists.begin(), dists.begin() + 3, dists.end());
    std::map<std::int64_t, int> votes;
    for (int v = 0; v < 3; ++v) ++votes[dists[static_cast<std::size_t>(v)].second];
    std::int64_t best = -1;
    int best_votes = 0;
    for (auto [lab, n] : votes) {
      if (n > best_votes) {
        best_votes = n;
        best = lab;
      }
    }
    if (best == labels[q]) ++correct;
  }
  const double acc =
      static_cast<double>(correct) / static_cast<double>(feats.size());
  // chance is 0.2 for 5 classes; the archetypes should separate far better
  CHECK(acc > 0.5);
}

// -------------------------------------------------------------- batch iter

TEST_CASE("batch iterator emits full batches then the remainder") {
  const fs::path dir = temp_dir("signet_batch_test");
  SynthSpec spec;
  spec.num_classes = 2;
  spec.clips_per_class = 3;
  spec.frames = 4;
  spec.height = 16;
  spec.width = 16;
  spec.seed = 20;
  auto manifest = synth_generate(spec, dir.string());
  auto records = load_manifest(manifest);
  records.resize(5);

  ModelConfig cfg;
  cfg.frames = 4;
  cfg.height = 16;
  cfg.width = 16;
  cfg.num_classes = 2;

  BatchIterator it(records, cfg, AugmentSpec{}, false, 2, false, Rng(1));
  std::vector<std::int64_t> sizes;
  while (auto batch = it.next()) {
    sizes.push_back(batch->clips.dim(0));
    CHECK(batch->clips.shape() ==
          std::vector<std::int64_t>{batch->clips.dim(0), 3, 4, 16, 16});
  }
  CHECK(sizes == std::vector<std::int64_t>{2, 2, 1});
  fs::remove_all(dir);
}

TEST_CASE("batch iterator preserves order without shuffle and is "
          "deterministic in eval") {
  const fs::path dir = temp_dir("signet_batch_det");
  SynthSpec spec;
  spec.num_classes = 2;
  spec.clips_per_class = 2;
  spec.frames = 4;
  spec.height = 16;
  spec.width = 16;
  spec.seed = 21;
  auto records = load_manifest(synth_generate(spec, dir.string()));

  ModelConfig cfg;
  cfg.frames = 4;
  cfg.height = 16;
  cfg.width = 16;
  cfg.num_classes = 2;

  BatchIterator a(records, cfg, AugmentSpec{}, false, 2, false, Rng(5));
  BatchIterator b(records, cfg, AugmentSpec{}, false, 2, false, Rng(99));
  std::vector<std::int64_t> labels_a, labels_b;
  while (auto batch = a.next()) {
    auto other = b.next();
    REQUIRE(other.has_value());
    for (std::int64_t i = 0; i < batch->clips.numel(); ++i) {
      CHECK(batch->clips[i] == other->clips[i]);  // eval path draws nothing
    }
    labels_a.insert(labels_a.end(), batch->labels.begin(),
                    batch->labels.end());
    labels_b.insert(labels_b.end(), other->labels.begin(),
                    other->labels.end());
  }
  std::vector<std::int64_t> expected;
  for (const auto& r : records) expected.push_back(r.label);
  CHECK(labels_a == expected);
  CHECK(labels_b == expected);
  fs::remove_all(dir);
}

TEST_CASE("batch iterator names the path of an unreadable record") {
  ModelConfig cfg;
  cfg.frames = 4;
  cfg.height = 16;
  cfg.width = 16;
  std::vector<ClipRecord> records{{"/nonexistent/clip.slrc", 0, "X"}};
  BatchIterator it(records, cfg, AugmentSpec{}, false, 1, false, Rng(0));
  try {
    it.next();
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("/nonexistent/clip.slrc") !=
          std::string::npos);
  }
}
