#include "signet/checkpoint.hpp"

#include <cstring>

#include "binio.hpp"
#include "signet/error.hpp"

namespace signet {

namespace {

constexpr char kMagic[4] = {'S', 'L', 'C', 'K'};
constexpr std::uint16_t kVersion = 1;
constexpr std::uint8_t kDtypeF32 = 0;

}  // namespace

void save_checkpoint(const SignNet& model, const CheckpointMeta& meta,
                     const std::string& path) {
  binio::Writer w;
  w.magic(kMagic);
  w.u16(kVersion);

  const std::string config = model_config_to_json(model.config);
  w.u32(static_cast<std::uint32_t>(config.size()));
  w.bytes(config.data(), config.size());

  const auto params = param_crefs(model);
  w.u32(static_cast<std::uint32_t>(params.size()));
  for (const auto& [name, tensor] : params) {
    w.u16(static_cast<std::uint16_t>(name.size()));
    w.bytes(name.data(), name.size());
    w.u8(static_cast<std::uint8_t>(tensor->ndim()));
    for (std::int64_t d : tensor->shape()) {
      w.u32(static_cast<std::uint32_t>(d));
    }
    w.u8(kDtypeF32);
    for (std::int64_t i = 0; i < tensor->numel(); ++i) {
      w.f32((*tensor)[i]);
    }
  }

  w.u32(meta.epoch);
  w.f32(meta.best_val_loss);
  w.write_file(path);
}

std::uint64_t checkpoint_file_size(const SignNet& model) {
  std::uint64_t size = 4 + 2;  // magic + version
  size += 4 + model_config_to_json(model.config).size();
  size += 4;  // tensor count
  for (const auto& [name, tensor] : param_crefs(model)) {
    size += 2 + name.size();
    size += 1 + 4 * static_cast<std::uint64_t>(tensor->ndim());
    size += 1;
    size += 4 * static_cast<std::uint64_t>(tensor->numel());
  }
  size += 4 + 4;  // epoch + best val loss
  return size;
}

std::pair<SignNet, CheckpointMeta> load_checkpoint(const std::string& path) {
  binio::Reader r = binio::Reader::from_file(path, "checkpoint");
  r.expect_magic(kMagic);
  {
    const std::uint64_t at = r.offset();
    const std::uint16_t version = r.u16();
    if (version != kVersion) {
      r.fail_at("unsupported version " + std::to_string(version), at);
    }
  }

  const std::uint64_t config_at = r.offset();
  const std::uint32_t config_len = r.u32();
  ModelConfig config;
  try {
    config = model_config_from_json(r.str(config_len));
  } catch (const Error& e) {
    throw FormatError(std::string("checkpoint config: ") + e.what(),
                      config_at + 4);
  }

  // Reconstruct the expected tensor list from the config; the file must
  // match it exactly, in order.
  SignNet model = model_skeleton<float>(config);
  auto params = param_refs(model);

  const std::uint64_t count_at = r.offset();
  const std::uint32_t count = r.u32();
  if (count != params.size()) {
    r.fail_at("tensor count " + std::to_string(count) + " does not match " +
                  std::to_string(params.size()) + " expected from config",
              count_at);
  }

  for (auto& [name, tensor] : params) {
    const std::uint64_t record_at = r.offset();
    const std::uint16_t name_len = r.u16();
    const std::string got_name = r.str(name_len);
    if (got_name != name) {
      r.fail_at("tensor \"" + got_name + "\" where \"" + name +
                    "\" was expected from config",
                record_at);
    }
    const std::uint8_t ndim = r.u8();
    std::vector<std::int64_t> dims;
    for (std::uint8_t i = 0; i < ndim; ++i) {
      dims.push_back(static_cast<std::int64_t>(r.u32()));
    }
    if (dims != tensor->shape()) {
      r.fail_at("tensor \"" + name + "\" has shape " + shape_to_string(dims) +
                    " but config requires " + tensor->shape_str(),
                record_at);
    }
    const std::uint64_t dtype_at = r.offset();
    const std::uint8_t dtype = r.u8();
    if (dtype != kDtypeF32) {
      r.fail_at("unsupported dtype " + std::to_string(dtype), dtype_at);
    }
    for (std::int64_t i = 0; i < tensor->numel(); ++i) {
      (*tensor)[i] = r.f32();
    }
  }

  CheckpointMeta meta;
  meta.epoch = r.u32();
  meta.best_val_loss = r.f32();
  if (!r.at_end()) {
    r.fail("trailing bytes after checkpoint payload");
  }
  return {std::move(model), meta};
}

}  // namespace signet
