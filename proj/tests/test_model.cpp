#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <vector>

#include "grad_check.hpp"
#include "signet/checkpoint.hpp"
#include "signet/error.hpp"
#include "signet/model.hpp"

using namespace signet;

namespace {

ModelConfig tiny_config() {
  ModelConfig c;
  c.conv_channels = {2, 3, 4};
  c.lstm_hidden = 4;
  c.fc_hidden = 5;
  c.num_classes = 3;
  c.frames = 2;
  c.height = 8;
  c.width = 8;
  c.dropout_p = 0.0;  // keep the composite gradient check deterministic
  return c;
}

std::filesystem::path temp_path(const char* name) {
  return std::filesystem::temp_directory_path() / name;
}

}  // namespace

TEST_CASE("config validation rejects indivisible spatial dims") {
  ModelConfig c;
  c.height = 30;
  CHECK_THROWS_AS(c.validate(), Error);
  c = ModelConfig{};
  c.num_classes = 1;
  CHECK_THROWS_AS(c.validate(), Error);
  c = ModelConfig{};
  CHECK_NOTHROW(c.validate());
}

TEST_CASE("model config json round trip rejects unknown keys") {
  ModelConfig c = tiny_config();
  ModelConfig back = model_config_from_json(model_config_to_json(c));
  CHECK(back == c);
  CHECK_THROWS_AS(model_config_from_json("{\"frames\": 8, \"bogus\": 1}"),
                  Error);
}

TEST_CASE("build is deterministic per seed") {
  ModelConfig c = tiny_config();
  Rng r1(99), r2(99);
  SignNet a = build_model<float>(c, r1);
  SignNet b = build_model<float>(c, r2);
  auto pa = param_crefs(a);
  auto pb = param_crefs(b);
  REQUIRE(pa.size() == pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) {
    REQUIRE(pa[i].second->numel() == pb[i].second->numel());
    for (std::int64_t j = 0; j < pa[i].second->numel(); ++j) {
      CHECK((*pa[i].second)[j] == (*pb[i].second)[j]);
    }
  }
}

TEST_CASE("full-scale conv1 weight shape and He-uniform bound") {
  ModelConfig c = ModelConfig::full_scale(10);
  // Allocating 414M parameters is off the table; check the bound on a config
  // with the same 3-channel fan-in instead.
  ModelConfig small = tiny_config();
  Rng rng(7);
  SignNet m = build_model<float>(small, rng);
  CHECK(m.conv[0].weight.shape() ==
        std::vector<std::int64_t>{2, 3, 3, 3, 3});
  const double bound = std::sqrt(6.0 / (3.0 * 27.0));
  CHECK(bound == doctest::Approx(0.272).epsilon(1e-2));
  for (std::int64_t i = 0; i < m.conv[0].weight.numel(); ++i) {
    CHECK(std::abs(m.conv[0].weight[i]) <= bound);
  }
  // conv/linear biases start at zero
  for (std::int64_t i = 0; i < m.conv[0].bias.numel(); ++i) {
    CHECK(m.conv[0].bias[i] == 0.0f);
  }
  (void)c;
}

TEST_CASE("infer_shapes reproduces the full-scale architecture table") {
  auto rows = infer_shapes(ModelConfig::full_scale(100));
  REQUIRE(rows.size() == 6);
  CHECK(rows[0].dims == std::vector<std::int64_t>{-1, 3, 30, 224, 224});
  CHECK(rows[1].dims == std::vector<std::int64_t>{-1, 64, 30, 112, 112});
  CHECK(rows[2].dims == std::vector<std::int64_t>{-1, 128, 30, 56, 56});
  CHECK(rows[3].dims == std::vector<std::int64_t>{-1, 256, 30, 28, 28});
  CHECK(rows[4].dims == std::vector<std::int64_t>{-1, 30, 512});
  CHECK(rows[5].dims == std::vector<std::int64_t>{-1, 100});
  CHECK(shape_row_to_string(rows[1]) == "conv_block1 (B, 64, 30, 112, 112)");
}

TEST_CASE("infer_shapes desk and boundary configs") {
  ModelConfig desk;  // defaults: 32x32, T=8, channels [8,16,32]
  auto rows = infer_shapes(desk);
  CHECK(rows[3].dims == std::vector<std::int64_t>{-1, 32, 8, 4, 4});

  ModelConfig tiny = tiny_config();
  tiny.height = 8;
  tiny.width = 8;
  auto tiny_rows = infer_shapes(tiny);
  CHECK(tiny_rows[3].dims == std::vector<std::int64_t>{-1, 4, 2, 1, 1});
}

TEST_CASE("param_count matches the full-scale reference counts") {
  ModelConfig c = ModelConfig::full_scale(100);
  auto rows = param_count(c);
  REQUIRE(rows.size() == 6);
  CHECK(rows[0].count == 5248);
  CHECK(rows[1].count == 221312);
  CHECK(rows[2].count == 884992);
  CHECK(rows[3].count == 414195712);
  CHECK(rows[4].count == 131328);
  CHECK(rows[5].count == 100 * 256 + 100);
  // flattened feature size feeding the LSTM
  CHECK(c.flattened_feature_size() == 200704);
  // the published rounded total for the LSTM is ~408M; closed form is
  // within 2% of it
  const double rel =
      std::abs(414195712.0 - 408000000.0) / 408000000.0;
  CHECK(rel < 0.02);
}

TEST_CASE("param_count total matches actual allocated parameters") {
  ModelConfig c = tiny_config();
  Rng rng(3);
  SignNet m = build_model<float>(c, rng);
  std::int64_t actual = 0;
  for (const auto& [name, tensor] : param_crefs(m)) actual += tensor->numel();
  CHECK(actual == total_param_count(c));
}

TEST_CASE("forward traces desk shapes and is deterministic in eval") {
  ModelConfig c = tiny_config();
  Rng rng(17);
  SignNet m = build_model<float>(c, rng);
  Tensor clips = Tensor::uniform({2, 3, c.frames, c.height, c.width}, 0.0, 1.0,
                                 rng);
  Rng fwd_rng(0);
  auto [logits1, cache1] = model_forward(m, clips, Mode::eval, fwd_rng);
  CHECK(logits1.shape() == std::vector<std::int64_t>{2, 3});
  Rng fwd_rng2(999);  // eval ignores the rng entirely
  auto [logits2, cache2] = model_forward(m, clips, Mode::eval, fwd_rng2);
  for (std::int64_t i = 0; i < logits1.numel(); ++i) {
    CHECK(logits1[i] == logits2[i]);
  }
}

TEST_CASE("default desk-scale forward gives finite logits of width N") {
  ModelConfig desk;  // 32x32, T=8, channels [8,16,32], H=32, N=5
  Rng rng(30);
  SignNet m = build_model<float>(desk, rng);
  Tensor clips = Tensor::uniform({1, 3, desk.frames, desk.height, desk.width},
                                 0.0, 1.0, rng);
  Rng fwd(0);
  auto [logits, cache] = model_forward(m, clips, Mode::eval, fwd);
  CHECK(logits.shape() == std::vector<std::int64_t>{1, 5});
  for (std::int64_t i = 0; i < logits.numel(); ++i) {
    CHECK(std::isfinite(logits[i]));
  }
}

TEST_CASE("forward rejects mismatched input shape") {
  ModelConfig c = tiny_config();
  Rng rng(18);
  SignNet m = build_model<float>(c, rng);
  Tensor bad = Tensor::uniform({1, 3, c.frames + 1, c.height, c.width}, 0.0,
                               1.0, rng);
  Rng fwd(0);
  CHECK_THROWS_AS(model_forward(m, bad, Mode::eval, fwd), Error);
}

TEST_CASE("backward refuses an eval-mode cache") {
  ModelConfig c = tiny_config();
  Rng rng(19);
  SignNet m = build_model<float>(c, rng);
  Tensor clips =
      Tensor::uniform({1, 3, c.frames, c.height, c.width}, 0.0, 1.0, rng);
  Rng fwd(0);
  auto [logits, cache] = model_forward(m, clips, Mode::eval, fwd);
  CHECK_THROWS_AS(model_backward(m, cache, Tensor(logits.shape())), Error);
}

TEST_CASE("backward: zero grad_logits gives zero gradients, shapes mirror") {
  ModelConfig c = tiny_config();
  Rng rng(20);
  SignNet m = build_model<float>(c, rng);
  Tensor clips =
      Tensor::uniform({2, 3, c.frames, c.height, c.width}, 0.0, 1.0, rng);
  Rng fwd(0);
  auto [logits, cache] = model_forward(m, clips, Mode::train, fwd);
  Gradients grads = model_backward(m, cache, Tensor(logits.shape()));
  auto pm = param_crefs(m);
  auto pg = param_crefs(grads);
  REQUIRE(pm.size() == pg.size());
  for (std::size_t i = 0; i < pm.size(); ++i) {
    CHECK(pm[i].first == pg[i].first);
    CHECK(pm[i].second->shape() == pg[i].second->shape());
    for (std::int64_t j = 0; j < pg[i].second->numel(); ++j) {
      CHECK((*pg[i].second)[j] == 0.0f);
    }
  }
}

TEST_CASE("full-model gradient check against finite differences") {
  ModelConfig c = tiny_config();
  Rng rng(21);
  SignNetT<double> m = build_model<double>(c, rng);
  Tensor64 clips =
      Tensor64::uniform({2, 3, c.frames, c.height, c.width}, 0.0, 1.0, rng);
  std::vector<std::int64_t> labels{1, 2};

  Rng fwd(0);
  auto [logits, cache] = model_forward(m, clips, Mode::train, fwd);
  auto xent = softmax_cross_entropy(logits, labels);
  GradientsT<double> grads = model_backward(m, cache, xent.grad_logits);

  auto loss = [&]() {
    Rng r(0);
    auto [lg, ch] = model_forward(m, clips, Mode::train, r);
    return softmax_cross_entropy(lg, labels).loss;
  };

  auto pm = param_refs(m);
  auto pg = param_refs(grads);
  Rng pick(22);
  std::int64_t coords_checked = 0;
  double worst = 0.0;
  for (std::size_t i = 0; i < pm.size(); ++i) {
    const std::int64_t samples = std::min<std::int64_t>(10, pm[i].tensor->numel());
    const double err =
        gradcheck::check_tensor(*pm[i].tensor, *pg[i].tensor, loss, samples,
                                pick);
    worst = std::max(worst, err);
    coords_checked += samples;
  }
  CHECK(coords_checked >= 100);
  CHECK(worst <= 1e-3);
}

TEST_CASE("checkpoint round trip is bitwise and reproduces logits") {
  ModelConfig c = tiny_config();
  c.dropout_p = 0.5;
  Rng rng(23);
  SignNet m = build_model<float>(c, rng);
  const auto path = temp_path("signet_test_ckpt.slck");
  save_checkpoint(m, {7, 0.125f}, path.string());

  auto [loaded, meta] = load_checkpoint(path.string());
  CHECK(meta.epoch == 7);
  CHECK(meta.best_val_loss == 0.125f);
  CHECK(loaded.config == c);
  auto pa = param_crefs(m);
  auto pb = param_crefs(loaded);
  for (std::size_t i = 0; i < pa.size(); ++i) {
    for (std::int64_t j = 0; j < pa[i].second->numel(); ++j) {
      CHECK((*pa[i].second)[j] == (*pb[i].second)[j]);
    }
  }

  Tensor clips =
      Tensor::uniform({1, 3, c.frames, c.height, c.width}, 0.0, 1.0, rng);
  Rng f1(0), f2(0);
  auto [l1, ch1] = model_forward(m, clips, Mode::eval, f1);
  auto [l2, ch2] = model_forward(loaded, clips, Mode::eval, f2);
  for (std::int64_t i = 0; i < l1.numel(); ++i) CHECK(l1[i] == l2[i]);
  std::filesystem::remove(path);
}

TEST_CASE("checkpoint file size matches the format arithmetic") {
  ModelConfig c = tiny_config();
  Rng rng(24);
  SignNet m = build_model<float>(c, rng);
  const auto path = temp_path("signet_test_size.slck");
  save_checkpoint(m, {0, 0.0f}, path.string());
  CHECK(std::filesystem::file_size(path) == checkpoint_file_size(m));

  // header + per-tensor records + trailer, recomputed independently
  std::uint64_t expect = 4 + 2 + 4 + model_config_to_json(c).size() + 4;
  for (const auto& [name, tensor] : param_crefs(m)) {
    expect += 2 + name.size() + 1 + 4 * tensor->ndim() + 1 + 4 * tensor->numel();
  }
  expect += 8;
  CHECK(std::filesystem::file_size(path) == expect);
  std::filesystem::remove(path);
}

TEST_CASE("checkpoint corruption is rejected with a byte offset") {
  ModelConfig c = tiny_config();
  Rng rng(25);
  SignNet m = build_model<float>(c, rng);
  const auto path = temp_path("signet_test_corrupt.slck");
  save_checkpoint(m, {1, 1.0f}, path.string());

  SUBCASE("bad magic names offset 0") {
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(0);
    f.write("XXXX", 4);
    f.close();
    try {
      load_checkpoint(path.string());
      FAIL("expected a format error");
    } catch (const FormatError& e) {
      CHECK(e.offset() == 0);
      CHECK(std::string(e.what()).find("offset 0") != std::string::npos);
    }
  }

  SUBCASE("truncated file reports the cut position") {
    const auto full = std::filesystem::file_size(path);
    std::filesystem::resize_file(path, full - 6);
    try {
      load_checkpoint(path.string());
      FAIL("expected a format error");
    } catch (const FormatError& e) {
      CHECK(e.offset() <= full - 6);
      CHECK(std::string(e.what()).find("byte offset") != std::string::npos);
    }
  }

  SUBCASE("shape-vs-config mismatch is an explicit error, not a reshape") {
    // Corrupt the first dim of the first tensor record (conv1.weight).
    const std::uint64_t record_at =
        4 + 2 + 4 + model_config_to_json(c).size() + 4;
    const std::uint64_t dim_at = record_at + 2 + std::string("conv1.weight").size() + 1;
    std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(static_cast<std::streamoff>(dim_at));
    const char bogus[4] = {99, 0, 0, 0};
    f.write(bogus, 4);
    f.close();
    try {
      load_checkpoint(path.string());
      FAIL("expected a format error");
    } catch (const FormatError& e) {
      CHECK(e.offset() == record_at);
      CHECK(std::string(e.what()).find("config") != std::string::npos);
    }
  }
  std::filesystem::remove(path);
}
