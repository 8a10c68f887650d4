#include "signet/model.hpp"

#include <cmath>
#include <sstream>

#include "json_util.hpp"
#include "signet/error.hpp"

namespace signet {

void ModelConfig::validate() const {
  auto positive = [](std::int64_t v, const char* what) {
    if (v < 1) {
      throw Error(ErrorKind::config,
                  std::string(what) + " must be >= 1, got " +
                      std::to_string(v));
    }
  };
  positive(in_channels, "in_channels");
  for (std::int64_t c : conv_channels) positive(c, "conv channel count");
  positive(lstm_hidden, "lstm_hidden");
  positive(lstm_layers, "lstm_layers");
  positive(fc_hidden, "fc_hidden");
  positive(frames, "frames");
  if (num_classes < 2) {
    throw Error(ErrorKind::config, "num_classes must be >= 2, got " +
                                       std::to_string(num_classes));
  }
  if (height % 8 != 0 || width % 8 != 0 || height < 8 || width < 8) {
    throw Error(ErrorKind::config,
                "height and width must be positive multiples of 8 (three "
                "spatial poolings), got " +
                    std::to_string(height) + "x" + std::to_string(width));
  }
  if (dropout_p < 0.0 || dropout_p >= 1.0) {
    throw Error(ErrorKind::config, "dropout_p must be in [0,1), got " +
                                       std::to_string(dropout_p));
  }
}

std::int64_t ModelConfig::flattened_feature_size() const {
  return conv_channels[2] * (height / 8) * (width / 8);
}

ModelConfig ModelConfig::full_scale(std::int64_t num_classes) {
  ModelConfig c;
  c.in_channels = 3;
  c.conv_channels = {64, 128, 256};
  c.lstm_hidden = 512;
  c.lstm_layers = 2;
  c.fc_hidden = 256;
  c.num_classes = num_classes;
  c.frames = 30;
  c.height = 224;
  c.width = 224;
  c.dropout_p = 0.5;
  return c;
}

nlohmann::json model_config_to_json_obj(const ModelConfig& config) {
  return nlohmann::json{
      {"in_channels", config.in_channels},
      {"conv_channels", config.conv_channels},
      {"lstm_hidden", config.lstm_hidden},
      {"lstm_layers", config.lstm_layers},
      {"fc_hidden", config.fc_hidden},
      {"num_classes", config.num_classes},
      {"frames", config.frames},
      {"height", config.height},
      {"width", config.width},
      {"dropout_p", config.dropout_p},
  };
}

ModelConfig model_config_from_json_obj(const nlohmann::json& obj) {
  reject_unknown_keys(obj,
                      {"in_channels", "conv_channels", "lstm_hidden",
                       "lstm_layers", "fc_hidden", "num_classes", "frames",
                       "height", "width", "dropout_p"},
                      "model config");
  ModelConfig c;
  try {
    if (obj.contains("in_channels")) obj.at("in_channels").get_to(c.in_channels);
    if (obj.contains("conv_channels")) {
      auto v = obj.at("conv_channels").get<std::vector<std::int64_t>>();
      if (v.size() != 3) {
        throw Error(ErrorKind::config,
                    "conv_channels must list exactly 3 block widths");
      }
      c.conv_channels = {v[0], v[1], v[2]};
    }
    if (obj.contains("lstm_hidden")) obj.at("lstm_hidden").get_to(c.lstm_hidden);
    if (obj.contains("lstm_layers")) obj.at("lstm_layers").get_to(c.lstm_layers);
    if (obj.contains("fc_hidden")) obj.at("fc_hidden").get_to(c.fc_hidden);
    if (obj.contains("num_classes")) obj.at("num_classes").get_to(c.num_classes);
    if (obj.contains("frames")) obj.at("frames").get_to(c.frames);
    if (obj.contains("height")) obj.at("height").get_to(c.height);
    if (obj.contains("width")) obj.at("width").get_to(c.width);
    if (obj.contains("dropout_p")) obj.at("dropout_p").get_to(c.dropout_p);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::config,
                std::string("malformed model config: ") + e.what());
  }
  c.validate();
  return c;
}

std::string model_config_to_json(const ModelConfig& config) {
  return model_config_to_json_obj(config).dump();
}

ModelConfig model_config_from_json(const std::string& text) {
  nlohmann::json obj = nlohmann::json::parse(text, nullptr, false);
  if (obj.is_discarded()) {
    throw Error(ErrorKind::config, "model config is not valid JSON");
  }
  return model_config_from_json_obj(obj);
}

// ------------------------------------------------------------- parameters --

template <typename T>
std::vector<ParamRef<T>> param_refs(SignNetT<T>& m) {
  std::vector<ParamRef<T>> refs;
  for (std::size_t i = 0; i < 3; ++i) {
    const std::string base = "conv" + std::to_string(i + 1);
    refs.push_back({base + ".weight", &m.conv[i].weight});
    refs.push_back({base + ".bias", &m.conv[i].bias});
  }
  for (std::size_t l = 0; l < m.lstm.size(); ++l) {
    const std::string base = "lstm" + std::to_string(l + 1);
    refs.push_back({base + ".w_ih", &m.lstm[l].w_ih});
    refs.push_back({base + ".w_hh", &m.lstm[l].w_hh});
    refs.push_back({base + ".b_ih", &m.lstm[l].b_ih});
    refs.push_back({base + ".b_hh", &m.lstm[l].b_hh});
  }
  refs.push_back({"fc1.weight", &m.fc1.weight});
  refs.push_back({"fc1.bias", &m.fc1.bias});
  refs.push_back({"fc2.weight", &m.fc2.weight});
  refs.push_back({"fc2.bias", &m.fc2.bias});
  return refs;
}

template <typename T>
std::vector<std::pair<std::string, const TensorT<T>*>> param_crefs(
    const SignNetT<T>& model) {
  auto refs = param_refs(const_cast<SignNetT<T>&>(model));
  std::vector<std::pair<std::string, const TensorT<T>*>> out;
  out.reserve(refs.size());
  for (auto& r : refs) out.emplace_back(r.name, r.tensor);
  return out;
}

template <typename T>
SignNetT<T> build_model(const ModelConfig& config, Rng& rng) {
  config.validate();
  SignNetT<T> m;
  m.config = config;

  std::int64_t in_c = config.in_channels;
  for (std::size_t i = 0; i < 3; ++i) {
    const std::int64_t out_c = config.conv_channels[i];
    const double bound = std::sqrt(6.0 / static_cast<double>(in_c * 27));
    m.conv[i].weight =
        TensorT<T>::uniform({out_c, in_c, 3, 3, 3}, -bound, bound, rng);
    m.conv[i].bias = TensorT<T>(std::vector<std::int64_t>{out_c});
    in_c = out_c;
  }

  const std::int64_t H = config.lstm_hidden;
  const double lstm_bound = 1.0 / std::sqrt(static_cast<double>(H));
  std::int64_t d = config.flattened_feature_size();
  for (std::int64_t l = 0; l < config.lstm_layers; ++l) {
    LstmLayerParamsT<T> p;
    p.w_ih = TensorT<T>::uniform({4 * H, d}, -lstm_bound, lstm_bound, rng);
    p.w_hh = TensorT<T>::uniform({4 * H, H}, -lstm_bound, lstm_bound, rng);
    p.b_ih = TensorT<T>::uniform({4 * H}, -lstm_bound, lstm_bound, rng);
    p.b_hh = TensorT<T>::uniform({4 * H}, -lstm_bound, lstm_bound, rng);
    m.lstm.push_back(std::move(p));
    d = H;
  }

  const double fc1_bound = std::sqrt(6.0 / static_cast<double>(H));
  m.fc1.weight =
      TensorT<T>::uniform({config.fc_hidden, H}, -fc1_bound, fc1_bound, rng);
  m.fc1.bias = TensorT<T>(std::vector<std::int64_t>{config.fc_hidden});
  const double fc2_bound = std::sqrt(6.0 / static_cast<double>(config.fc_hidden));
  m.fc2.weight = TensorT<T>::uniform({config.num_classes, config.fc_hidden},
                                     -fc2_bound, fc2_bound, rng);
  m.fc2.bias = TensorT<T>(std::vector<std::int64_t>{config.num_classes});
  return m;
}

template <typename T>
SignNetT<T> model_skeleton(const ModelConfig& config) {
  config.validate();
  SignNetT<T> m;
  m.config = config;
  std::int64_t in_c = config.in_channels;
  for (std::size_t i = 0; i < 3; ++i) {
    const std::int64_t out_c = config.conv_channels[i];
    m.conv[i].weight = TensorT<T>(std::vector<std::int64_t>{out_c, in_c, 3, 3, 3});
    m.conv[i].bias = TensorT<T>(std::vector<std::int64_t>{out_c});
    in_c = out_c;
  }
  const std::int64_t H = config.lstm_hidden;
  std::int64_t d = config.flattened_feature_size();
  for (std::int64_t l = 0; l < config.lstm_layers; ++l) {
    LstmLayerParamsT<T> p;
    p.w_ih = TensorT<T>(std::vector<std::int64_t>{4 * H, d});
    p.w_hh = TensorT<T>(std::vector<std::int64_t>{4 * H, H});
    p.b_ih = TensorT<T>(std::vector<std::int64_t>{4 * H});
    p.b_hh = TensorT<T>(std::vector<std::int64_t>{4 * H});
    m.lstm.push_back(std::move(p));
    d = H;
  }
  m.fc1.weight = TensorT<T>(std::vector<std::int64_t>{config.fc_hidden, H});
  m.fc1.bias = TensorT<T>(std::vector<std::int64_t>{config.fc_hidden});
  m.fc2.weight =
      TensorT<T>(std::vector<std::int64_t>{config.num_classes, config.fc_hidden});
  m.fc2.bias = TensorT<T>(std::vector<std::int64_t>{config.num_classes});
  return m;
}

template <typename T>
GradientsT<T> zeros_like(const SignNetT<T>& model) {
  GradientsT<T> g;
  g.config = model.config;
  for (std::size_t i = 0; i < 3; ++i) {
    g.conv[i].weight = TensorT<T>(model.conv[i].weight.shape());
    g.conv[i].bias = TensorT<T>(model.conv[i].bias.shape());
  }
  for (const auto& l : model.lstm) {
    LstmLayerParamsT<T> p;
    p.w_ih = TensorT<T>(l.w_ih.shape());
    p.w_hh = TensorT<T>(l.w_hh.shape());
    p.b_ih = TensorT<T>(l.b_ih.shape());
    p.b_hh = TensorT<T>(l.b_hh.shape());
    g.lstm.push_back(std::move(p));
  }
  g.fc1.weight = TensorT<T>(model.fc1.weight.shape());
  g.fc1.bias = TensorT<T>(model.fc1.bias.shape());
  g.fc2.weight = TensorT<T>(model.fc2.weight.shape());
  g.fc2.bias = TensorT<T>(model.fc2.bias.shape());
  return g;
}

// ---------------------------------------------------------------- forward --

template <typename T>
std::pair<TensorT<T>, ModelCache<T>> model_forward(const SignNetT<T>& model,
                                                   const TensorT<T>& clips,
                                                   Mode mode, Rng& rng) {
  const ModelConfig& cfg = model.config;
  const std::vector<std::int64_t> expect{clips.ndim() == 5 ? clips.dim(0) : 0,
                                         cfg.in_channels, cfg.frames,
                                         cfg.height, cfg.width};
  if (clips.ndim() != 5 || clips.shape() != expect) {
    throw Error(ErrorKind::shape,
                "model input must be (B," + std::to_string(cfg.in_channels) +
                    "," + std::to_string(cfg.frames) + "," +
                    std::to_string(cfg.height) + "," +
                    std::to_string(cfg.width) + "), got " + clips.shape_str());
  }

  ModelCache<T> cache;
  cache.mode = mode;

  TensorT<T> x = clips;
  for (std::size_t i = 0; i < 3; ++i) {
    auto [conv_out, conv_cache] =
        conv3d_forward(x, model.conv[i].weight, model.conv[i].bias);
    cache.conv[i] = std::move(conv_cache);
    auto [relu_out, relu_cache] = relu_forward(conv_out);
    cache.relu[i] = std::move(relu_cache);
    auto [pool_out, pool_cache] = maxpool3d_forward(relu_out);
    cache.pool[i] = std::move(pool_cache);
    x = std::move(pool_out);
  }
  cache.conv_out_shape = x.shape();

  TensorT<T> seq = frames_to_sequence(x);  // (B,T,c3*H'*W')
  auto lstm_out = lstm_forward(seq, model.lstm);
  cache.lstm = std::move(lstm_out.cache);

  auto [fc1_out, fc1_cache] =
      linear_forward(lstm_out.final_h, model.fc1.weight, model.fc1.bias);
  cache.fc1 = std::move(fc1_cache);
  auto [fc1_act, fc1_relu_cache] = relu_forward(fc1_out);
  cache.fc1_relu = std::move(fc1_relu_cache);
  auto [dropped, dropout_cache] =
      dropout_forward(fc1_act, cfg.dropout_p, mode, rng);
  cache.dropout = std::move(dropout_cache);
  auto [logits, fc2_cache] =
      linear_forward(dropped, model.fc2.weight, model.fc2.bias);
  cache.fc2 = std::move(fc2_cache);

  logits.check_finite("model_forward");
  return {std::move(logits), std::move(cache)};
}

template <typename T>
GradientsT<T> model_backward(const SignNetT<T>& model,
                             const ModelCache<T>& cache,
                             const TensorT<T>& grad_logits) {
  if (cache.mode != Mode::train) {
    throw Error(ErrorKind::usage,
                "model_backward requires a train-mode forward cache");
  }
  GradientsT<T> grads = zeros_like(model);

  auto fc2_grads = linear_backward(cache.fc2, grad_logits);
  grads.fc2.weight = std::move(fc2_grads.weight);
  grads.fc2.bias = std::move(fc2_grads.bias);

  TensorT<T> g = dropout_backward(cache.dropout, fc2_grads.input);
  g = relu_backward(cache.fc1_relu, g);

  auto fc1_grads = linear_backward(cache.fc1, g);
  grads.fc1.weight = std::move(fc1_grads.weight);
  grads.fc1.bias = std::move(fc1_grads.bias);

  // Only the final hidden state feeds the classifier, so the per-timestep
  // hidden gradient is zero.
  const std::int64_t B = cache.conv_out_shape[0];
  TensorT<T> zero_seq(std::vector<std::int64_t>{
      cache.lstm.batch, cache.lstm.steps, cache.lstm.hidden_size});
  auto lstm_grads = lstm_backward(cache.lstm, zero_seq, fc1_grads.input);
  grads.lstm = std::move(lstm_grads.params);

  TensorT<T> gx = sequence_to_frames(lstm_grads.input, cache.conv_out_shape);
  for (std::size_t i = 3; i-- > 0;) {
    gx = maxpool3d_backward(cache.pool[i], gx);
    gx = relu_backward(cache.relu[i], gx);
    auto conv_grads = conv3d_backward(cache.conv[i], gx);
    grads.conv[i].weight = std::move(conv_grads.weight);
    grads.conv[i].bias = std::move(conv_grads.bias);
    gx = std::move(conv_grads.input);
  }
  (void)B;
  return grads;
}

// ------------------------------------------------------------- accounting --

std::vector<ShapeRow> infer_shapes(const ModelConfig& config) {
  config.validate();
  std::vector<ShapeRow> rows;
  rows.push_back({"input",
                  {-1, config.in_channels, config.frames, config.height,
                   config.width}});
  std::int64_t h = config.height, w = config.width;
  for (std::size_t i = 0; i < 3; ++i) {
    h /= 2;
    w /= 2;
    rows.push_back({"conv_block" + std::to_string(i + 1),
                    {-1, config.conv_channels[i], config.frames, h, w}});
  }
  rows.push_back({"lstm", {-1, config.frames, config.lstm_hidden}});
  rows.push_back({"classifier", {-1, config.num_classes}});
  return rows;
}

std::string shape_row_to_string(const ShapeRow& row) {
  std::ostringstream os;
  os << row.layer << " (";
  for (std::size_t i = 0; i < row.dims.size(); ++i) {
    if (i) os << ", ";
    if (row.dims[i] < 0) {
      os << 'B';
    } else {
      os << row.dims[i];
    }
  }
  os << ')';
  return os.str();
}

std::vector<ParamCountRow> param_count(const ModelConfig& config) {
  config.validate();
  std::vector<ParamCountRow> rows;
  std::int64_t in_c = config.in_channels;
  for (std::size_t i = 0; i < 3; ++i) {
    const std::int64_t out_c = config.conv_channels[i];
    rows.push_back(
        {"conv" + std::to_string(i + 1), out_c * in_c * 27 + out_c});
    in_c = out_c;
  }
  const std::int64_t H = config.lstm_hidden;
  std::int64_t lstm_total = 0;
  std::int64_t d = config.flattened_feature_size();
  for (std::int64_t l = 0; l < config.lstm_layers; ++l) {
    lstm_total += 4 * H * (d + H) + 8 * H;
    d = H;
  }
  rows.push_back({"lstm", lstm_total});
  rows.push_back({"fc1", config.fc_hidden * H + config.fc_hidden});
  rows.push_back(
      {"fc2", config.num_classes * config.fc_hidden + config.num_classes});
  return rows;
}

std::int64_t total_param_count(const ModelConfig& config) {
  std::int64_t total = 0;
  for (const auto& row : param_count(config)) total += row.count;
  return total;
}

// ---------------------------------------------------------- instantiation --

#define SIGNET_INSTANTIATE_MODEL(T)                                        \
  template std::vector<ParamRef<T>> param_refs(SignNetT<T>&);              \
  template std::vector<std::pair<std::string, const TensorT<T>*>>          \
  param_crefs(const SignNetT<T>&);                                         \
  template SignNetT<T> build_model(const ModelConfig&, Rng&);              \
  template SignNetT<T> model_skeleton(const ModelConfig&);                 \
  template GradientsT<T> zeros_like(const SignNetT<T>&);                   \
  template std::pair<TensorT<T>, ModelCache<T>> model_forward(             \
      const SignNetT<T>&, const TensorT<T>&, Mode, Rng&);                  \
  template GradientsT<T> model_backward(const SignNetT<T>&,                \
                                        const ModelCache<T>&,              \
                                        const TensorT<T>&);

SIGNET_INSTANTIATE_MODEL(float)
SIGNET_INSTANTIATE_MODEL(double)

#undef SIGNET_INSTANTIATE_MODEL

}  // namespace signet
