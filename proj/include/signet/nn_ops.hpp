#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "signet/rng.hpp"
#include "signet/tensor.hpp"

// Every layer is an explicit forward/backward pair. The architecture is
// fixed, so there is no autodiff tape: each backward implements the analytic
// gradient of its forward and is checked against finite differences.
//
// A cache holds the forward intermediates one backward call consumes; it is
// single-use and tied to the forward invocation that produced it.

namespace signet {

enum class Mode { train, eval };

// ---------------------------------------------------------------------------
// 3-D convolution, fixed 3x3x3 kernel, stride 1, zero padding 1 on (T,H,W).
// Preserves the temporal and spatial extent of the input.
// ---------------------------------------------------------------------------

template <typename T>
struct Conv3dCache {
  TensorT<T> input;   // (B,C,T,H,W)
  TensorT<T> weight;  // (O,C,3,3,3)
};

template <typename T>
struct Conv3dGrads {
  TensorT<T> input;
  TensorT<T> weight;
  TensorT<T> bias;
};

// input (B,C,T,H,W), weight (O,C,3,3,3), bias (O) -> output (B,O,T,H,W)
template <typename T>
std::pair<TensorT<T>, Conv3dCache<T>> conv3d_forward(const TensorT<T>& input,
                                                     const TensorT<T>& weight,
                                                     const TensorT<T>& bias);

template <typename T>
Conv3dGrads<T> conv3d_backward(const Conv3dCache<T>& cache,
                               const TensorT<T>& grad_out);

// ---------------------------------------------------------------------------
// ReLU. The subgradient at exactly zero is defined as zero.
// ---------------------------------------------------------------------------

template <typename T>
struct ReluCache {
  TensorT<T> input;
};

template <typename T>
std::pair<TensorT<T>, ReluCache<T>> relu_forward(const TensorT<T>& input);

template <typename T>
TensorT<T> relu_backward(const ReluCache<T>& cache, const TensorT<T>& grad_out);

// ---------------------------------------------------------------------------
// Spatial-only 3-D max pooling, kernel (1,2,2), stride (1,2,2). T is
// preserved; H and W must be even. Ties go to the first element in row-major
// scan order so pooling is deterministic.
// ---------------------------------------------------------------------------

template <typename T>
struct MaxPool3dCache {
  std::vector<std::int64_t> input_shape;
  std::vector<std::int64_t> argmax;  // flat input index per output element
};

template <typename T>
std::pair<TensorT<T>, MaxPool3dCache<T>> maxpool3d_forward(
    const TensorT<T>& input);

template <typename T>
TensorT<T> maxpool3d_backward(const MaxPool3dCache<T>& cache,
                              const TensorT<T>& grad_out);

// ---------------------------------------------------------------------------
// LSTM. Weight rows are blocked in the fixed gate order [i, f, g, o]; both
// bias vectors (b_ih, b_hh) are kept so parameter counts and checkpoints line
// up with the dominant framework convention.
//
//   i = sigmoid(W_ih^i x + b_ih^i + W_hh^i h + b_hh^i)   (f, o analogous)
//   g = tanh  (W_ih^g x + b_ih^g + W_hh^g h + b_hh^g)
//   c_t = f * c_{t-1} + i * g
//   h_t = o * tanh(c_t)
// ---------------------------------------------------------------------------

template <typename T>
struct LstmLayerParamsT {
  TensorT<T> w_ih;  // (4H, D_l)
  TensorT<T> w_hh;  // (4H, H)
  TensorT<T> b_ih;  // (4H)
  TensorT<T> b_hh;  // (4H)
};

using LstmLayerParams = LstmLayerParamsT<float>;

template <typename T>
struct LstmLayerCache {
  TensorT<T> input_flat;             // (B*T, D_l) row index b*T + t
  TensorT<T> w_ih, w_hh;             // parameter copies for backward
  std::vector<TensorT<T>> gates;     // per t: (B,4H) activated [i f g o]
  std::vector<TensorT<T>> cell;      // per t: (B,H) c_t
  std::vector<TensorT<T>> tanh_cell; // per t: (B,H) tanh(c_t)
  std::vector<TensorT<T>> hidden;    // per t: (B,H) h_t
};

template <typename T>
struct LstmCache {
  std::int64_t batch = 0, steps = 0, hidden_size = 0;
  std::vector<LstmLayerCache<T>> layers;
};

template <typename T>
struct LstmOut {
  TensorT<T> hidden_seq;  // (B,T,H) of the last layer
  TensorT<T> final_h;     // (B,H) last layer, last timestep
  LstmCache<T> cache;
};

template <typename T>
struct LstmGrads {
  TensorT<T> input;  // (B,T,D_1)
  std::vector<LstmLayerParamsT<T>> params;
};

// x (B,T,D); h0 and c0 are implicitly zero.
template <typename T>
LstmOut<T> lstm_forward(const TensorT<T>& x,
                        const std::vector<LstmLayerParamsT<T>>& layers);

// Either gradient may be zero-filled; shapes must match the forward outputs.
template <typename T>
LstmGrads<T> lstm_backward(const LstmCache<T>& cache,
                           const TensorT<T>& grad_hidden_seq,
                           const TensorT<T>& grad_final_h);

// ---------------------------------------------------------------------------
// Fully connected: out = input . weight^T + bias
// ---------------------------------------------------------------------------

template <typename T>
struct LinearCache {
  TensorT<T> input;   // (B,D)
  TensorT<T> weight;  // (O,D)
};

template <typename T>
struct LinearGrads {
  TensorT<T> input;
  TensorT<T> weight;
  TensorT<T> bias;
};

template <typename T>
std::pair<TensorT<T>, LinearCache<T>> linear_forward(const TensorT<T>& input,
                                                     const TensorT<T>& weight,
                                                     const TensorT<T>& bias);

template <typename T>
LinearGrads<T> linear_backward(const LinearCache<T>& cache,
                               const TensorT<T>& grad_out);

// ---------------------------------------------------------------------------
// Inverted dropout: train mode zeroes each element with probability p and
// scales survivors by 1/(1-p); eval mode is the identity.
// ---------------------------------------------------------------------------

template <typename T>
struct DropoutCache {
  Mode mode = Mode::eval;
  TensorT<T> mask_scale;  // 0 or 1/(1-p) per element; empty in eval mode
};

template <typename T>
std::pair<TensorT<T>, DropoutCache<T>> dropout_forward(const TensorT<T>& input,
                                                       double p, Mode mode,
                                                       Rng& rng);

template <typename T>
TensorT<T> dropout_backward(const DropoutCache<T>& cache,
                            const TensorT<T>& grad_out);

// ---------------------------------------------------------------------------
// Softmax cross-entropy over class logits, mean-reduced over the batch.
// Computed with max subtraction; also returns grad_logits = (softmax -
// onehot)/B since loss and gradient share all intermediates.
// ---------------------------------------------------------------------------

template <typename T>
struct SoftmaxXentResult {
  double loss = 0.0;
  TensorT<T> grad_logits;  // (B,K)
};

template <typename T>
SoftmaxXentResult<T> softmax_cross_entropy(
    const TensorT<T>& logits, const std::vector<std::int64_t>& labels);

// Row-wise stable softmax, used wherever probabilities are reported.
template <typename T>
TensorT<T> softmax_rows(const TensorT<T>& logits);

// ---------------------------------------------------------------------------
// Layout bridge between the convolutional stack and the LSTM:
// (B,C,T,H,W) -> (B,T,C*H*W) with feature index c*(H*W) + h*W + w.
// ---------------------------------------------------------------------------

template <typename T>
TensorT<T> frames_to_sequence(const TensorT<T>& x);

// Inverse scatter; `frame_shape` is the original (B,C,T,H,W).
template <typename T>
TensorT<T> sequence_to_frames(const TensorT<T>& grad_seq,
                              const std::vector<std::int64_t>& frame_shape);

}  // namespace signet
