#include "signet/nn_ops.hpp"

#include <cmath>
#include <cstring>

#include "signet/error.hpp"

namespace signet {

namespace {

constexpr std::int64_t kKernel = 3;  // 3x3x3
constexpr std::int64_t kPad = 1;

template <typename T>
T sigmoid(T x) {
  return T(1) / (T(1) + std::exp(-x));
}

// Copies (B,C,T,H,W) into a zero-padded (B,C,T+2,H+2,W+2) buffer.
template <typename T>
std::vector<T> pad_input(const TensorT<T>& input) {
  const auto& s = input.shape();
  const std::int64_t B = s[0], C = s[1], D = s[2], H = s[3], W = s[4];
  const std::int64_t Dp = D + 2 * kPad, Hp = H + 2 * kPad, Wp = W + 2 * kPad;
  std::vector<T> pad(static_cast<std::size_t>(B * C * Dp * Hp * Wp), T(0));
  const T* src = input.data();
  for (std::int64_t b = 0; b < B; ++b) {
    for (std::int64_t c = 0; c < C; ++c) {
      for (std::int64_t t = 0; t < D; ++t) {
        for (std::int64_t h = 0; h < H; ++h) {
          const T* row = src + (((b * C + c) * D + t) * H + h) * W;
          T* dst = pad.data() +
                   ((((b * C + c) * Dp + t + kPad) * Hp + h + kPad) * Wp) +
                   kPad;
          std::memcpy(dst, row, sizeof(T) * static_cast<std::size_t>(W));
        }
      }
    }
  }
  return pad;
}

void require_rank(const std::vector<std::int64_t>& shape, std::size_t rank,
                  const char* what) {
  if (shape.size() != rank) {
    throw Error(ErrorKind::shape, std::string(what) + " expects rank " +
                                      std::to_string(rank) + ", got " +
                                      shape_to_string(shape));
  }
}

}  // namespace

// ----------------------------------------------------------------- conv3d --

template <typename T>
std::pair<TensorT<T>, Conv3dCache<T>> conv3d_forward(const TensorT<T>& input,
                                                     const TensorT<T>& weight,
                                                     const TensorT<T>& bias) {
  require_rank(input.shape(), 5, "conv3d input");
  require_rank(weight.shape(), 5, "conv3d weight");
  const auto& is = input.shape();
  const auto& ws = weight.shape();
  const std::int64_t B = is[0], C = is[1], D = is[2], H = is[3], W = is[4];
  const std::int64_t O = ws[0];
  if (ws[1] != C) {
    throw Error(ErrorKind::shape,
                "conv3d channel mismatch: input has " + std::to_string(C) +
                    ", weight expects " + std::to_string(ws[1]));
  }
  if (ws[2] != kKernel || ws[3] != kKernel || ws[4] != kKernel) {
    throw Error(ErrorKind::shape, "conv3d kernel must be 3x3x3, got " +
                                      shape_to_string(ws));
  }
  if (bias.ndim() != 1 || bias.dim(0) != O) {
    throw Error(ErrorKind::shape, "conv3d bias must be (" + std::to_string(O) +
                                      "), got " + bias.shape_str());
  }

  const std::int64_t Dp = D + 2, Hp = H + 2, Wp = W + 2;
  std::vector<T> pad = pad_input(input);

  TensorT<T> out(std::vector<std::int64_t>{B, O, D, H, W});
  T* po = out.data();
  const T* pw = weight.data();
  const T* pb = bias.data();

  // Shift-and-accumulate: for each of the 27 kernel taps, add the shifted
  // input plane scaled by the tap weight. Inner loop is contiguous in w.
  for (std::int64_t b = 0; b < B; ++b) {
    for (std::int64_t o = 0; o < O; ++o) {
      T* out_plane = po + ((b * O + o) * D) * H * W;
      const T bias_o = pb[o];
      for (std::int64_t i = 0; i < D * H * W; ++i) out_plane[i] = bias_o;
      for (std::int64_t c = 0; c < C; ++c) {
        const T* pad_plane = pad.data() + ((b * C + c) * Dp) * Hp * Wp;
        for (std::int64_t dt = 0; dt < kKernel; ++dt) {
          for (std::int64_t dh = 0; dh < kKernel; ++dh) {
            for (std::int64_t dw = 0; dw < kKernel; ++dw) {
              const T wv = pw[(((o * C + c) * kKernel + dt) * kKernel + dh) *
                                  kKernel +
                              dw];
              if (wv == T(0)) continue;
              for (std::int64_t t = 0; t < D; ++t) {
                for (std::int64_t h = 0; h < H; ++h) {
                  const T* src =
                      pad_plane + ((t + dt) * Hp + (h + dh)) * Wp + dw;
                  T* dst = out_plane + (t * H + h) * W;
                  for (std::int64_t w = 0; w < W; ++w) dst[w] += src[w] * wv;
                }
              }
            }
          }
        }
      }
    }
  }

  out.check_finite("conv3d_forward");
  return {std::move(out), Conv3dCache<T>{input, weight}};
}

template <typename T>
Conv3dGrads<T> conv3d_backward(const Conv3dCache<T>& cache,
                               const TensorT<T>& grad_out) {
  const auto& is = cache.input.shape();
  const auto& ws = cache.weight.shape();
  const std::int64_t B = is[0], C = is[1], D = is[2], H = is[3], W = is[4];
  const std::int64_t O = ws[0];
  const std::vector<std::int64_t> expect{B, O, D, H, W};
  if (grad_out.shape() != expect) {
    throw Error(ErrorKind::shape, "conv3d grad_out must be " +
                                      shape_to_string(expect) + ", got " +
                                      grad_out.shape_str());
  }

  const std::int64_t Dp = D + 2, Hp = H + 2, Wp = W + 2;
  std::vector<T> pad = pad_input(cache.input);
  std::vector<T> grad_pad(pad.size(), T(0));

  TensorT<T> grad_weight(ws);
  TensorT<T> grad_bias(std::vector<std::int64_t>{O});
  const T* pg = grad_out.data();
  const T* pw = cache.weight.data();
  T* pgw = grad_weight.data();
  T* pgb = grad_bias.data();

  for (std::int64_t b = 0; b < B; ++b) {
    for (std::int64_t o = 0; o < O; ++o) {
      const T* g_plane = pg + ((b * O + o) * D) * H * W;
      T acc_bias = T(0);
      for (std::int64_t i = 0; i < D * H * W; ++i) acc_bias += g_plane[i];
      pgb[o] += acc_bias;

      for (std::int64_t c = 0; c < C; ++c) {
        const T* pad_plane = pad.data() + ((b * C + c) * Dp) * Hp * Wp;
        T* gpad_plane = grad_pad.data() + ((b * C + c) * Dp) * Hp * Wp;
        for (std::int64_t dt = 0; dt < kKernel; ++dt) {
          for (std::int64_t dh = 0; dh < kKernel; ++dh) {
            for (std::int64_t dw = 0; dw < kKernel; ++dw) {
              const std::int64_t widx =
                  (((o * C + c) * kKernel + dt) * kKernel + dh) * kKernel + dw;
              const T wv = pw[widx];
              T acc_w = T(0);
              for (std::int64_t t = 0; t < D; ++t) {
                for (std::int64_t h = 0; h < H; ++h) {
                  const T* src =
                      pad_plane + ((t + dt) * Hp + (h + dh)) * Wp + dw;
                  T* gdst = gpad_plane + ((t + dt) * Hp + (h + dh)) * Wp + dw;
                  const T* g_row = g_plane + (t * H + h) * W;
                  for (std::int64_t w = 0; w < W; ++w) {
                    acc_w += src[w] * g_row[w];
                    gdst[w] += wv * g_row[w];
                  }
                }
              }
              pgw[widx] += acc_w;
            }
          }
        }
      }
    }
  }

  // Crop the padding ring off the accumulated input gradient.
  TensorT<T> grad_input(is);
  T* pgi = grad_input.data();
  for (std::int64_t b = 0; b < B; ++b) {
    for (std::int64_t c = 0; c < C; ++c) {
      for (std::int64_t t = 0; t < D; ++t) {
        for (std::int64_t h = 0; h < H; ++h) {
          const T* src = grad_pad.data() +
                         ((((b * C + c) * Dp + t + 1) * Hp + h + 1) * Wp) + 1;
          T* dst = pgi + (((b * C + c) * D + t) * H + h) * W;
          std::memcpy(dst, src, sizeof(T) * static_cast<std::size_t>(W));
        }
      }
    }
  }

  grad_input.check_finite("conv3d_backward");
  grad_weight.check_finite("conv3d_backward");
  return {std::move(grad_input), std::move(grad_weight), std::move(grad_bias)};
}

// ------------------------------------------------------------------- relu --

template <typename T>
std::pair<TensorT<T>, ReluCache<T>> relu_forward(const TensorT<T>& input) {
  TensorT<T> out(input.shape());
  for (std::int64_t i = 0; i < input.numel(); ++i) {
    out[i] = input[i] > T(0) ? input[i] : T(0);
  }
  return {std::move(out), ReluCache<T>{input}};
}

template <typename T>
TensorT<T> relu_backward(const ReluCache<T>& cache,
                         const TensorT<T>& grad_out) {
  if (!grad_out.same_shape(cache.input)) {
    throw Error(ErrorKind::shape, "relu grad_out shape mismatch");
  }
  TensorT<T> grad(cache.input.shape());
  for (std::int64_t i = 0; i < grad.numel(); ++i) {
    grad[i] = cache.input[i] > T(0) ? grad_out[i] : T(0);
  }
  return grad;
}

// -------------------------------------------------------------- maxpool3d --

template <typename T>
std::pair<TensorT<T>, MaxPool3dCache<T>> maxpool3d_forward(
    const TensorT<T>& input) {
  require_rank(input.shape(), 5, "maxpool3d input");
  const auto& s = input.shape();
  const std::int64_t B = s[0], C = s[1], D = s[2], H = s[3], W = s[4];
  if (H % 2 != 0 || W % 2 != 0) {
    throw Error(ErrorKind::shape,
                "maxpool3d requires even H and W, got " + input.shape_str());
  }
  const std::int64_t Ho = H / 2, Wo = W / 2;
  TensorT<T> out(std::vector<std::int64_t>{B, C, D, Ho, Wo});
  MaxPool3dCache<T> cache;
  cache.input_shape = s;
  cache.argmax.resize(static_cast<std::size_t>(out.numel()));

  const T* pi = input.data();
  T* po = out.data();
  std::int64_t oi = 0;
  for (std::int64_t b = 0; b < B; ++b) {
    for (std::int64_t c = 0; c < C; ++c) {
      for (std::int64_t t = 0; t < D; ++t) {
        const std::int64_t plane = (((b * C + c) * D + t) * H) * W;
        for (std::int64_t ho = 0; ho < Ho; ++ho) {
          for (std::int64_t wo = 0; wo < Wo; ++wo) {
            // 2x2 window scanned row-major; strict > keeps the first max.
            std::int64_t best = plane + (2 * ho) * W + 2 * wo;
            T best_v = pi[best];
            const std::int64_t cand[3] = {
                plane + (2 * ho) * W + 2 * wo + 1,
                plane + (2 * ho + 1) * W + 2 * wo,
                plane + (2 * ho + 1) * W + 2 * wo + 1};
            for (std::int64_t idx : cand) {
              if (pi[idx] > best_v) {
                best_v = pi[idx];
                best = idx;
              }
            }
            po[oi] = best_v;
            cache.argmax[static_cast<std::size_t>(oi)] = best;
            ++oi;
          }
        }
      }
    }
  }
  return {std::move(out), std::move(cache)};
}

template <typename T>
TensorT<T> maxpool3d_backward(const MaxPool3dCache<T>& cache,
                              const TensorT<T>& grad_out) {
  if (grad_out.numel() != static_cast<std::int64_t>(cache.argmax.size())) {
    throw Error(ErrorKind::shape, "maxpool3d grad_out shape mismatch");
  }
  TensorT<T> grad(cache.input_shape);
  for (std::int64_t i = 0; i < grad_out.numel(); ++i) {
    grad[cache.argmax[static_cast<std::size_t>(i)]] += grad_out[i];
  }
  return grad;
}

// ------------------------------------------------------------------- lstm --

namespace {

template <typename T>
void require_lstm_shapes(const std::vector<LstmLayerParamsT<T>>& layers,
                         std::int64_t input_size) {
  if (layers.empty()) {
    throw Error(ErrorKind::shape, "lstm needs at least one layer");
  }
  std::int64_t d = input_size;
  const std::int64_t hidden = layers[0].w_hh.dim(1);
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& p = layers[l];
    if (p.w_ih.ndim() != 2 || p.w_ih.dim(0) != 4 * hidden ||
        p.w_ih.dim(1) != d) {
      throw Error(ErrorKind::shape,
                  "lstm layer " + std::to_string(l + 1) + " w_ih must be (" +
                      std::to_string(4 * hidden) + "," + std::to_string(d) +
                      "), got " + p.w_ih.shape_str());
    }
    if (p.w_hh.ndim() != 2 || p.w_hh.dim(0) != 4 * hidden ||
        p.w_hh.dim(1) != hidden) {
      throw Error(ErrorKind::shape,
                  "lstm layer " + std::to_string(l + 1) + " w_hh shape " +
                      p.w_hh.shape_str() + " invalid");
    }
    if (p.b_ih.numel() != 4 * hidden || p.b_hh.numel() != 4 * hidden) {
      throw Error(ErrorKind::shape,
                  "lstm layer " + std::to_string(l + 1) + " bias size invalid");
    }
    d = hidden;
  }
}

}  // namespace

template <typename T>
LstmOut<T> lstm_forward(const TensorT<T>& x,
                        const std::vector<LstmLayerParamsT<T>>& layers) {
  require_rank(x.shape(), 3, "lstm input");
  const std::int64_t B = x.dim(0), S = x.dim(1);
  require_lstm_shapes(layers, x.dim(2));
  const std::int64_t H = layers[0].w_hh.dim(1);

  LstmCache<T> cache;
  cache.batch = B;
  cache.steps = S;
  cache.hidden_size = H;
  cache.layers.resize(layers.size());

  TensorT<T> layer_in = x.reshaped({B * S, x.dim(2)});
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& p = layers[l];
    const std::int64_t D = p.w_ih.dim(1);
    LstmLayerCache<T>& lc = cache.layers[l];
    lc.input_flat = layer_in;
    lc.w_ih = p.w_ih;
    lc.w_hh = p.w_hh;
    lc.gates.reserve(S);
    lc.cell.reserve(S);
    lc.tanh_cell.reserve(S);
    lc.hidden.reserve(S);

    // Input contribution for every timestep in one matmul.
    TensorT<T> xw = matmul(layer_in, transpose2d(p.w_ih));  // (B*S, 4H)
    TensorT<T> w_hh_t = transpose2d(p.w_hh);                // (H, 4H)

    TensorT<T> h_prev(std::vector<std::int64_t>{B, H});
    TensorT<T> c_prev(std::vector<std::int64_t>{B, H});
    TensorT<T> out_flat(std::vector<std::int64_t>{B * S, H});

    for (std::int64_t t = 0; t < S; ++t) {
      TensorT<T> hw = matmul(h_prev, w_hh_t);  // (B, 4H)
      TensorT<T> act(std::vector<std::int64_t>{B, 4 * H});
      TensorT<T> c(std::vector<std::int64_t>{B, H});
      TensorT<T> tanh_c(std::vector<std::int64_t>{B, H});
      TensorT<T> h(std::vector<std::int64_t>{B, H});
      for (std::int64_t b = 0; b < B; ++b) {
        const T* xrow = xw.data() + (b * S + t) * 4 * H;
        const T* hrow = hw.data() + b * 4 * H;
        T* arow = act.data() + b * 4 * H;
        for (std::int64_t j = 0; j < 4 * H; ++j) {
          const T pre = xrow[j] + hrow[j] + p.b_ih[j] + p.b_hh[j];
          // blocks [0,H) i, [H,2H) f, [2H,3H) g, [3H,4H) o
          arow[j] = (j >= 2 * H && j < 3 * H) ? std::tanh(pre) : sigmoid(pre);
        }
        for (std::int64_t k = 0; k < H; ++k) {
          const T iv = arow[k], fv = arow[H + k], gv = arow[2 * H + k],
                  ov = arow[3 * H + k];
          const T cv = fv * c_prev[b * H + k] + iv * gv;
          c[b * H + k] = cv;
          const T tc = std::tanh(cv);
          tanh_c[b * H + k] = tc;
          h[b * H + k] = ov * tc;
          out_flat[(b * S + t) * H + k] = h[b * H + k];
        }
      }
      lc.gates.push_back(std::move(act));
      lc.cell.push_back(c);
      lc.tanh_cell.push_back(std::move(tanh_c));
      lc.hidden.push_back(h);
      h_prev = std::move(h);
      c_prev = std::move(c);
    }
    (void)D;
    layer_in = std::move(out_flat);
  }

  TensorT<T> hidden_seq = layer_in.reshaped({B, S, H});
  TensorT<T> final_h(std::vector<std::int64_t>{B, H});
  const auto& last_h = cache.layers.back().hidden.back();
  for (std::int64_t i = 0; i < final_h.numel(); ++i) final_h[i] = last_h[i];

  hidden_seq.check_finite("lstm_forward");
  return {std::move(hidden_seq), std::move(final_h), std::move(cache)};
}

template <typename T>
LstmGrads<T> lstm_backward(const LstmCache<T>& cache,
                           const TensorT<T>& grad_hidden_seq,
                           const TensorT<T>& grad_final_h) {
  const std::int64_t B = cache.batch, S = cache.steps, H = cache.hidden_size;
  if (grad_hidden_seq.shape() != std::vector<std::int64_t>{B, S, H}) {
    throw Error(ErrorKind::shape, "lstm grad_hidden_seq must be " +
                                      shape_to_string({B, S, H}) + ", got " +
                                      grad_hidden_seq.shape_str());
  }
  if (grad_final_h.shape() != std::vector<std::int64_t>{B, H}) {
    throw Error(ErrorKind::shape, "lstm grad_final_h shape mismatch");
  }

  const std::size_t num_layers = cache.layers.size();
  LstmGrads<T> grads;
  grads.params.resize(num_layers);

  // Per-timestep output gradient flowing into the current layer, flattened
  // as (B*S, H). Starts as the caller's gradient for the top layer.
  TensorT<T> dout_flat(std::vector<std::int64_t>{B * S, H});
  for (std::int64_t i = 0; i < dout_flat.numel(); ++i) {
    dout_flat[i] = grad_hidden_seq[i];
  }
  for (std::int64_t b = 0; b < B; ++b) {
    for (std::int64_t k = 0; k < H; ++k) {
      dout_flat[(b * S + (S - 1)) * H + k] += grad_final_h[b * H + k];
    }
  }

  for (std::size_t li = num_layers; li-- > 0;) {
    const LstmLayerCache<T>& lc = cache.layers[li];
    const std::int64_t D = lc.w_ih.dim(1);

    TensorT<T> da_flat(std::vector<std::int64_t>{B * S, 4 * H});
    TensorT<T> dh_next(std::vector<std::int64_t>{B, H});
    TensorT<T> dc_next(std::vector<std::int64_t>{B, H});

    for (std::int64_t t = S - 1; t >= 0; --t) {
      const TensorT<T>& gates = lc.gates[static_cast<std::size_t>(t)];
      const TensorT<T>& tanh_c = lc.tanh_cell[static_cast<std::size_t>(t)];
      TensorT<T> da(std::vector<std::int64_t>{B, 4 * H});
      for (std::int64_t b = 0; b < B; ++b) {
        const T* arow = gates.data() + b * 4 * H;
        for (std::int64_t k = 0; k < H; ++k) {
          const T iv = arow[k], fv = arow[H + k], gv = arow[2 * H + k],
                  ov = arow[3 * H + k];
          const T tc = tanh_c[b * H + k];
          const T dh = dout_flat[(b * S + t) * H + k] + dh_next[b * H + k];
          const T dov = dh * tc;
          T dc = dh * ov * (T(1) - tc * tc) + dc_next[b * H + k];
          const T c_prev = t > 0 ? lc.cell[static_cast<std::size_t>(t - 1)]
                                       [b * H + k]
                                 : T(0);
          const T div = dc * gv;
          const T dgv = dc * iv;
          const T dfv = dc * c_prev;
          dc_next[b * H + k] = dc * fv;
          T* darow = da.data() + b * 4 * H;
          darow[k] = div * iv * (T(1) - iv);
          darow[H + k] = dfv * fv * (T(1) - fv);
          darow[2 * H + k] = dgv * (T(1) - gv * gv);
          darow[3 * H + k] = dov * ov * (T(1) - ov);
        }
      }
      // dh_next = da . w_hh
      TensorT<T> dh = matmul(da, lc.w_hh);  // (B,H)
      dh_next = std::move(dh);
      for (std::int64_t b = 0; b < B; ++b) {
        std::memcpy(da_flat.data() + (b * S + t) * 4 * H,
                    da.data() + b * 4 * H,
                    sizeof(T) * static_cast<std::size_t>(4 * H));
      }
    }

    // Batched parameter gradients from the collected gate gradients.
    // h_prev rows: h_{t-1} per (b,t), zeros at t = 0.
    TensorT<T> hprev_flat(std::vector<std::int64_t>{B * S, H});
    for (std::int64_t t = 1; t < S; ++t) {
      const TensorT<T>& h = lc.hidden[static_cast<std::size_t>(t - 1)];
      for (std::int64_t b = 0; b < B; ++b) {
        std::memcpy(hprev_flat.data() + (b * S + t) * H, h.data() + b * H,
                    sizeof(T) * static_cast<std::size_t>(H));
      }
    }

    TensorT<T> da_t = transpose2d(da_flat);  // (4H, B*S)
    LstmLayerParamsT<T>& pg = grads.params[li];
    pg.w_ih = matmul(da_t, lc.input_flat);   // (4H, D)
    pg.w_hh = matmul(da_t, hprev_flat);      // (4H, H)
    pg.b_ih = TensorT<T>(std::vector<std::int64_t>{4 * H});
    for (std::int64_t r = 0; r < B * S; ++r) {
      for (std::int64_t j = 0; j < 4 * H; ++j) {
        pg.b_ih[j] += da_flat[r * 4 * H + j];
      }
    }
    pg.b_hh = pg.b_ih;  // both biases enter the same preactivation

    TensorT<T> dx_flat = matmul(da_flat, lc.w_ih);  // (B*S, D)
    if (li == 0) {
      grads.input = dx_flat.reshaped({B, S, D});
    } else {
      dout_flat = std::move(dx_flat);  // D == H for stacked layers
    }
  }

  grads.input.check_finite("lstm_backward");
  return grads;
}

// ----------------------------------------------------------------- linear --

template <typename T>
std::pair<TensorT<T>, LinearCache<T>> linear_forward(const TensorT<T>& input,
                                                     const TensorT<T>& weight,
                                                     const TensorT<T>& bias) {
  require_rank(input.shape(), 2, "linear input");
  require_rank(weight.shape(), 2, "linear weight");
  const std::int64_t B = input.dim(0), D = input.dim(1), O = weight.dim(0);
  if (weight.dim(1) != D) {
    throw Error(ErrorKind::shape,
                "linear weight " + weight.shape_str() +
                    " incompatible with input " + input.shape_str());
  }
  if (bias.numel() != O) {
    throw Error(ErrorKind::shape, "linear bias size mismatch");
  }
  TensorT<T> out = matmul(input, transpose2d(weight));
  for (std::int64_t b = 0; b < B; ++b) {
    for (std::int64_t o = 0; o < O; ++o) out[b * O + o] += bias[o];
  }
  out.check_finite("linear_forward");
  return {std::move(out), LinearCache<T>{input, weight}};
}

template <typename T>
LinearGrads<T> linear_backward(const LinearCache<T>& cache,
                               const TensorT<T>& grad_out) {
  const std::int64_t B = cache.input.dim(0), O = cache.weight.dim(0);
  if (grad_out.shape() != std::vector<std::int64_t>{B, O}) {
    throw Error(ErrorKind::shape, "linear grad_out shape mismatch");
  }
  LinearGrads<T> g;
  g.input = matmul(grad_out, cache.weight);                 // (B,D)
  g.weight = matmul(transpose2d(grad_out), cache.input);    // (O,D)
  g.bias = TensorT<T>(std::vector<std::int64_t>{O});
  for (std::int64_t b = 0; b < B; ++b) {
    for (std::int64_t o = 0; o < O; ++o) g.bias[o] += grad_out[b * O + o];
  }
  return g;
}

// ---------------------------------------------------------------- dropout --

template <typename T>
std::pair<TensorT<T>, DropoutCache<T>> dropout_forward(const TensorT<T>& input,
                                                       double p, Mode mode,
                                                       Rng& rng) {
  if (p < 0.0 || p >= 1.0) {
    throw Error(ErrorKind::config,
                "dropout probability must be in [0,1), got " +
                    std::to_string(p));
  }
  if (mode == Mode::eval || p == 0.0) {
    return {input, DropoutCache<T>{Mode::eval, TensorT<T>{}}};
  }
  const T scale = static_cast<T>(1.0 / (1.0 - p));
  TensorT<T> mask(input.shape());
  TensorT<T> out(input.shape());
  for (std::int64_t i = 0; i < input.numel(); ++i) {
    const bool keep = rng.uniform() >= p;
    mask[i] = keep ? scale : T(0);
    out[i] = input[i] * mask[i];
  }
  return {std::move(out), DropoutCache<T>{Mode::train, std::move(mask)}};
}

template <typename T>
TensorT<T> dropout_backward(const DropoutCache<T>& cache,
                            const TensorT<T>& grad_out) {
  if (cache.mode == Mode::eval) return grad_out;
  if (!grad_out.same_shape(cache.mask_scale)) {
    throw Error(ErrorKind::shape, "dropout grad_out shape mismatch");
  }
  return elementwise(grad_out, cache.mask_scale, EwOp::mul);
}

// -------------------------------------------------- softmax cross-entropy --

template <typename T>
TensorT<T> softmax_rows(const TensorT<T>& logits) {
  require_rank(logits.shape(), 2, "softmax");
  const std::int64_t B = logits.dim(0), K = logits.dim(1);
  TensorT<T> probs(logits.shape());
  for (std::int64_t b = 0; b < B; ++b) {
    const T* row = logits.data() + b * K;
    T m = row[0];
    for (std::int64_t k = 1; k < K; ++k) m = row[k] > m ? row[k] : m;
    T denom = T(0);
    T* prow = probs.data() + b * K;
    for (std::int64_t k = 0; k < K; ++k) {
      prow[k] = std::exp(row[k] - m);
      denom += prow[k];
    }
    for (std::int64_t k = 0; k < K; ++k) prow[k] /= denom;
  }
  return probs;
}

template <typename T>
SoftmaxXentResult<T> softmax_cross_entropy(
    const TensorT<T>& logits, const std::vector<std::int64_t>& labels) {
  require_rank(logits.shape(), 2, "softmax_cross_entropy");
  const std::int64_t B = logits.dim(0), K = logits.dim(1);
  if (static_cast<std::int64_t>(labels.size()) != B) {
    throw Error(ErrorKind::data, "label count " +
                                     std::to_string(labels.size()) +
                                     " != batch size " + std::to_string(B));
  }
  if (B == 0) {
    throw Error(ErrorKind::data, "softmax_cross_entropy on empty batch");
  }
  for (std::int64_t b = 0; b < B; ++b) {
    if (labels[static_cast<std::size_t>(b)] < 0 ||
        labels[static_cast<std::size_t>(b)] >= K) {
      throw Error(ErrorKind::data,
                  "label " + std::to_string(labels[static_cast<std::size_t>(b)]) +
                      " out of range [0," + std::to_string(K) + ")");
    }
  }

  SoftmaxXentResult<T> res;
  res.grad_logits = softmax_rows(logits);
  double loss = 0.0;
  for (std::int64_t b = 0; b < B; ++b) {
    const std::int64_t y = labels[static_cast<std::size_t>(b)];
    const double p = static_cast<double>(res.grad_logits[b * K + y]);
    loss -= std::log(p);
    res.grad_logits[b * K + y] -= T(1);
  }
  const T inv_b = T(1) / static_cast<T>(B);
  for (std::int64_t i = 0; i < res.grad_logits.numel(); ++i) {
    res.grad_logits[i] *= inv_b;
  }
  res.loss = loss / static_cast<double>(B);
  if (!std::isfinite(res.loss)) {
    throw Error(ErrorKind::numeric, "non-finite cross-entropy loss");
  }
  return res;
}

// ---------------------------------------------------------- layout bridge --

template <typename T>
TensorT<T> frames_to_sequence(const TensorT<T>& x) {
  require_rank(x.shape(), 5, "frames_to_sequence");
  const auto& s = x.shape();
  const std::int64_t B = s[0], C = s[1], D = s[2], H = s[3], W = s[4];
  TensorT<T> out(std::vector<std::int64_t>{B, D, C * H * W});
  const T* px = x.data();
  T* po = out.data();
  for (std::int64_t b = 0; b < B; ++b) {
    for (std::int64_t c = 0; c < C; ++c) {
      for (std::int64_t t = 0; t < D; ++t) {
        const T* src = px + (((b * C + c) * D + t) * H) * W;
        T* dst = po + ((b * D + t) * C + c) * H * W;
        std::memcpy(dst, src, sizeof(T) * static_cast<std::size_t>(H * W));
      }
    }
  }
  return out;
}

template <typename T>
TensorT<T> sequence_to_frames(const TensorT<T>& grad_seq,
                              const std::vector<std::int64_t>& frame_shape) {
  require_rank(frame_shape, 5, "sequence_to_frames");
  const std::int64_t B = frame_shape[0], C = frame_shape[1],
                     D = frame_shape[2], H = frame_shape[3],
                     W = frame_shape[4];
  if (grad_seq.shape() != std::vector<std::int64_t>{B, D, C * H * W}) {
    throw Error(ErrorKind::shape, "sequence_to_frames shape mismatch");
  }
  TensorT<T> out(frame_shape);
  const T* pg = grad_seq.data();
  T* po = out.data();
  for (std::int64_t b = 0; b < B; ++b) {
    for (std::int64_t c = 0; c < C; ++c) {
      for (std::int64_t t = 0; t < D; ++t) {
        const T* src = pg + ((b * D + t) * C + c) * H * W;
        T* dst = po + (((b * C + c) * D + t) * H) * W;
        std::memcpy(dst, src, sizeof(T) * static_cast<std::size_t>(H * W));
      }
    }
  }
  return out;
}

// ---------------------------------------------------------- instantiation --

#define SIGNET_INSTANTIATE_OPS(T)                                             \
  template std::pair<TensorT<T>, Conv3dCache<T>> conv3d_forward(              \
      const TensorT<T>&, const TensorT<T>&, const TensorT<T>&);               \
  template Conv3dGrads<T> conv3d_backward(const Conv3dCache<T>&,              \
                                          const TensorT<T>&);                 \
  template std::pair<TensorT<T>, ReluCache<T>> relu_forward(                  \
      const TensorT<T>&);                                                     \
  template TensorT<T> relu_backward(const ReluCache<T>&, const TensorT<T>&);  \
  template std::pair<TensorT<T>, MaxPool3dCache<T>> maxpool3d_forward(        \
      const TensorT<T>&);                                                     \
  template TensorT<T> maxpool3d_backward(const MaxPool3dCache<T>&,            \
                                         const TensorT<T>&);                  \
  template LstmOut<T> lstm_forward(const TensorT<T>&,                         \
                                   const std::vector<LstmLayerParamsT<T>>&);  \
  template LstmGrads<T> lstm_backward(const LstmCache<T>&, const TensorT<T>&, \
                                      const TensorT<T>&);                     \
  template std::pair<TensorT<T>, LinearCache<T>> linear_forward(              \
      const TensorT<T>&, const TensorT<T>&, const TensorT<T>&);               \
  template LinearGrads<T> linear_backward(const LinearCache<T>&,              \
                                          const TensorT<T>&);                 \
  template std::pair<TensorT<T>, DropoutCache<T>> dropout_forward(            \
      const TensorT<T>&, double, Mode, Rng&);                                 \
  template TensorT<T> dropout_backward(const DropoutCache<T>&,                \
                                       const TensorT<T>&);                    \
  template TensorT<T> softmax_rows(const TensorT<T>&);                        \
  template SoftmaxXentResult<T> softmax_cross_entropy(                        \
      const TensorT<T>&, const std::vector<std::int64_t>&);                   \
  template TensorT<T> frames_to_sequence(const TensorT<T>&);                  \
  template TensorT<T> sequence_to_frames(const TensorT<T>&,                   \
                                         const std::vector<std::int64_t>&);

SIGNET_INSTANTIATE_OPS(float)
SIGNET_INSTANTIATE_OPS(double)

#undef SIGNET_INSTANTIATE_OPS

}  // namespace signet
