#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "signet/nn_ops.hpp"
#include "signet/rng.hpp"
#include "signet/tensor.hpp"

namespace signet {

// Architecture hyperparameters. The defaults are a small configuration that
// trains in minutes on one CPU core; full_scale() is the 224x224/30-frame
// deployment geometry, used only for analytic shape and parameter checks.
struct ModelConfig {
  std::int64_t in_channels = 3;
  std::array<std::int64_t, 3> conv_channels{8, 16, 32};
  std::int64_t lstm_hidden = 32;
  std::int64_t lstm_layers = 2;
  std::int64_t fc_hidden = 256;
  std::int64_t num_classes = 5;
  std::int64_t frames = 8;
  std::int64_t height = 32;
  std::int64_t width = 32;
  double dropout_p = 0.5;

  // Three spatial poolings halve H and W three times.
  void validate() const;

  // Per-frame feature size handed to the LSTM: c3 * (H/8) * (W/8).
  std::int64_t flattened_feature_size() const;

  static ModelConfig full_scale(std::int64_t num_classes);

  bool operator==(const ModelConfig&) const = default;
};

std::string model_config_to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const std::string& text);

// The full parameter set. Also serves as the gradient container: backward
// returns one tensor per parameter in the same field layout.
template <typename T>
struct SignNetT {
  struct Conv {
    TensorT<T> weight;  // (O,C,3,3,3)
    TensorT<T> bias;    // (O)
  };
  struct Fc {
    TensorT<T> weight;  // (O,D)
    TensorT<T> bias;    // (O)
  };

  ModelConfig config;
  std::array<Conv, 3> conv;
  std::vector<LstmLayerParamsT<T>> lstm;
  Fc fc1, fc2;
};

using SignNet = SignNetT<float>;

template <typename T>
using GradientsT = SignNetT<T>;
using Gradients = GradientsT<float>;

template <typename T>
struct ParamRef {
  std::string name;
  TensorT<T>* tensor;
};

// Stable, documented parameter order: conv1..conv3 (weight, bias), per LSTM
// layer (w_ih, w_hh, b_ih, b_hh), fc1, fc2. Checkpoints and the optimizer
// both iterate in this order.
template <typename T>
std::vector<ParamRef<T>> param_refs(SignNetT<T>& model);

template <typename T>
std::vector<std::pair<std::string, const TensorT<T>*>> param_crefs(
    const SignNetT<T>& model);

// He-uniform init for conv and linear weights, uniform(+-1/sqrt(H)) for LSTM
// weights and biases, zero conv/linear biases. Deterministic given the rng.
template <typename T>
SignNetT<T> build_model(const ModelConfig& config, Rng& rng);

// Correctly shaped, zero-valued parameter set (checkpoint loading target).
template <typename T>
SignNetT<T> model_skeleton(const ModelConfig& config);

template <typename T>
GradientsT<T> zeros_like(const SignNetT<T>& model);

template <typename T>
struct ModelCache {
  Mode mode = Mode::eval;
  std::array<Conv3dCache<T>, 3> conv;
  std::array<ReluCache<T>, 3> relu;
  std::array<MaxPool3dCache<T>, 3> pool;
  std::vector<std::int64_t> conv_out_shape;  // pooled (B,C3,T,H/8,W/8)
  LstmCache<T> lstm;
  LinearCache<T> fc1;
  ReluCache<T> fc1_relu;
  DropoutCache<T> dropout;
  LinearCache<T> fc2;
};

// clips (B,3,T,H,W) -> logits (B,num_classes). The rng feeds dropout and is
// only consumed in train mode.
template <typename T>
std::pair<TensorT<T>, ModelCache<T>> model_forward(const SignNetT<T>& model,
                                                   const TensorT<T>& clips,
                                                   Mode mode, Rng& rng);

// Requires a train-mode cache; returns a gradient for every parameter.
template <typename T>
GradientsT<T> model_backward(const SignNetT<T>& model,
                             const ModelCache<T>& cache,
                             const TensorT<T>& grad_logits);

// ---------------------------------------------------------------------------
// Analytic accounting (never allocates activation memory).
// ---------------------------------------------------------------------------

struct ShapeRow {
  std::string layer;
  // dims[0] is the symbolic batch dimension, rendered as "B".
  std::vector<std::int64_t> dims;
};

std::vector<ShapeRow> infer_shapes(const ModelConfig& config);
std::string shape_row_to_string(const ShapeRow& row);

struct ParamCountRow {
  std::string layer;
  std::int64_t count;
};

std::vector<ParamCountRow> param_count(const ModelConfig& config);
std::int64_t total_param_count(const ModelConfig& config);

}  // namespace signet
