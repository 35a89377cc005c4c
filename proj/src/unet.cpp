// src/unet.cpp

// Copyright 2026  OVR-Lab Authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "ovr/unet.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <stdexcept>
#include <thread>

#include <json.hpp>

namespace ovr {

// ---------------------------------------------------------------------------
// Configuration and parameter containers
// ---------------------------------------------------------------------------

NetConfig NetConfig::paper_preset() {
  NetConfig cfg;
  cfg.segment_len = 2048;
  cfg.depth = 5;
  cfg.base_channels = 64;
  cfg.max_channels = 512;
  return cfg;
}

NetConfig NetConfig::desk_preset() {
  NetConfig cfg;
  cfg.segment_len = 2048;
  cfg.depth = 4;
  cfg.base_channels = 16;
  return cfg;
}

namespace {

std::size_t channels_at(const NetConfig& cfg, std::size_t stage) {
  // stage 0 = after input layer, stage d = after d downsamplings
  std::size_t c = cfg.base_channels;
  for (std::size_t i = 0; i < stage; ++i) c = std::min(c * 2, cfg.max_channels);
  return c;
}

std::vector<Layer> build_layers(const NetConfig& cfg) {
  if (cfg.kernel_len % 2 == 0)
    throw std::invalid_argument("NetConfig: kernel_len must be odd");
  std::size_t div = 1;
  for (std::size_t d = 0; d < cfg.depth; ++d) div *= cfg.stride;
  if (cfg.segment_len % div != 0)
    throw std::invalid_argument("NetConfig: segment_len not divisible by stride^depth");

  std::vector<Layer> layers;
  auto add = [&](LayerKind kind, LayerGroup group, std::size_t in_ch,
                 std::size_t out_ch, std::size_t stride, bool prelu, int skip) {
    Layer l;
    l.kind = kind;
    l.group = group;
    l.in_channels = in_ch;
    l.out_channels = out_ch;
    l.kernel_len = cfg.kernel_len;
    l.stride = stride;
    l.has_prelu = prelu;
    l.skip_source = skip;
    l.weights.assign(out_ch * in_ch * cfg.kernel_len, 0.0);
    l.bias.assign(out_ch, 0.0);
    l.prelu_alpha = cfg.prelu_init;
    layers.push_back(std::move(l));
  };

  // Encoder: input layer then depth downsampling convolutions.
  add(LayerKind::kConv, LayerGroup::kEncoder, 1, channels_at(cfg, 0), 1, true, -1);
  for (std::size_t d = 1; d <= cfg.depth; ++d)
    add(LayerKind::kConv, LayerGroup::kEncoder, channels_at(cfg, d - 1),
        channels_at(cfg, d), cfg.stride, true, -1);
  add(LayerKind::kConv, LayerGroup::kBottleneck, channels_at(cfg, cfg.depth),
      channels_at(cfg, cfg.depth), 1, true, -1);
  // Decoder mirrors the encoder; each layer consumes the previous output
  // concatenated with the matching encoder output.
  for (std::size_t d = cfg.depth; d >= 1; --d)
    add(LayerKind::kTransposedConv, LayerGroup::kDecoder,
        2 * channels_at(cfg, d), channels_at(cfg, d - 1), cfg.stride, true,
        static_cast<int>(d));
  add(LayerKind::kConv, LayerGroup::kDecoder, 2 * channels_at(cfg, 0), 1, 1,
      false, 0);

  // Dropout sites after every third layer (never after the output layer).
  for (std::size_t i = 2; i + 1 < layers.size(); i += 3)
    layers[i].dropout_after = true;
  return layers;
}

}  // namespace

NetworkParams NetworkParams::zeros(const NetConfig& cfg) {
  NetworkParams p;
  p.cfg = cfg;
  p.layers = build_layers(cfg);
  return p;
}

NetworkParams NetworkParams::init_random(const NetConfig& cfg, uint64_t seed) {
  NetworkParams p = zeros(cfg);
  std::mt19937_64 rng(seed);
  for (auto& layer : p.layers) {
    const double fan_in =
        static_cast<double>(layer.in_channels * layer.kernel_len);
    const double bound = std::sqrt(1.0 / fan_in);
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (auto& w : layer.weights) w = dist(rng);
    for (auto& b : layer.bias) b = dist(rng);
  }
  return p;
}

std::size_t NetworkParams::num_params() const {
  std::size_t n = 0;
  for (const auto& l : layers) n += l.num_params();
  return n;
}

Gradients Gradients::zeros_like(const NetworkParams& params) {
  Gradients g;
  g.layers.resize(params.layers.size());
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    g.layers[i].weights.assign(params.layers[i].weights.size(), 0.0);
    g.layers[i].bias.assign(params.layers[i].bias.size(), 0.0);
    g.layers[i].prelu_alpha = 0.0;
  }
  return g;
}

void Gradients::add(const Gradients& other) {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    for (std::size_t j = 0; j < layers[i].weights.size(); ++j)
      layers[i].weights[j] += other.layers[i].weights[j];
    for (std::size_t j = 0; j < layers[i].bias.size(); ++j)
      layers[i].bias[j] += other.layers[i].bias[j];
    layers[i].prelu_alpha += other.layers[i].prelu_alpha;
  }
}

void Gradients::scale(double s) {
  for (auto& l : layers) {
    for (auto& w : l.weights) w *= s;
    for (auto& b : l.bias) b *= s;
    l.prelu_alpha *= s;
  }
}

// ---------------------------------------------------------------------------
// Convolution kernels (channel-major contiguous activations)
// ---------------------------------------------------------------------------

namespace {

std::size_t pad_of(const Layer& l) { return (l.kernel_len - 1) / 2; }

std::size_t out_len_of(const Layer& l, std::size_t in_len) {
  return l.kind == LayerKind::kConv ? in_len / l.stride : in_len * l.stride;
}

void conv_forward(const Layer& l, const double* in, std::size_t in_len,
                  double* out, std::size_t out_len) {
  const long pad = static_cast<long>(pad_of(l));
  const long s = static_cast<long>(l.stride);
  const long n_in = static_cast<long>(in_len);
  const long n_out = static_cast<long>(out_len);
  for (std::size_t co = 0; co < l.out_channels; ++co) {
    double* o = out + co * out_len;
    std::fill(o, o + out_len, l.bias[co]);
    for (std::size_t ci = 0; ci < l.in_channels; ++ci) {
      const double* x = in + ci * in_len;
      for (std::size_t m = 0; m < l.kernel_len; ++m) {
        const double wv = l.w(co, ci, m);
        const long off = static_cast<long>(m) - pad;
        long t0 = off < 0 ? (-off + s - 1) / s : 0;
        long t1 = (n_in - 1 - off) / s;
        if (t1 > n_out - 1) t1 = n_out - 1;
        if (s == 1) {
          const double* xs = x + off;
          for (long t = t0; t <= t1; ++t) o[t] += wv * xs[t];
        } else {
          for (long t = t0; t <= t1; ++t) o[t] += wv * x[t * s + off];
        }
      }
    }
  }
}

void convt_forward(const Layer& l, const double* in, std::size_t in_len,
                   double* out, std::size_t out_len) {
  const long pad = static_cast<long>(pad_of(l));
  const long s = static_cast<long>(l.stride);
  const long n_in = static_cast<long>(in_len);
  const long n_out = static_cast<long>(out_len);
  for (std::size_t co = 0; co < l.out_channels; ++co) {
    double* o = out + co * out_len;
    std::fill(o, o + out_len, l.bias[co]);
    for (std::size_t ci = 0; ci < l.in_channels; ++ci) {
      const double* x = in + ci * in_len;
      for (std::size_t m = 0; m < l.kernel_len; ++m) {
        const double wv = l.w(co, ci, m);
        const long off = static_cast<long>(m) - pad;  // out index = t*s + off
        long t0 = off < 0 ? (-off + s - 1) / s : 0;
        long t1 = (n_out - 1 - off) / s;
        if (t1 > n_in - 1) t1 = n_in - 1;
        for (long t = t0; t <= t1; ++t) o[t * s + off] += wv * x[t];
      }
    }
  }
}

// Gradients through a forward convolution: accumulates weight/bias grads
// and the gradient with respect to the layer input.
void conv_backward(const Layer& l, const double* in, std::size_t in_len,
                   const double* gout, std::size_t out_len, double* gw,
                   double* gb, double* gin) {
  const long pad = static_cast<long>(pad_of(l));
  const long s = static_cast<long>(l.stride);
  const long n_in = static_cast<long>(in_len);
  const long n_out = static_cast<long>(out_len);
  for (std::size_t co = 0; co < l.out_channels; ++co) {
    const double* go = gout + co * out_len;
    double bsum = 0.0;
    for (long t = 0; t < n_out; ++t) bsum += go[t];
    gb[co] += bsum;
    for (std::size_t ci = 0; ci < l.in_channels; ++ci) {
      const double* x = in + ci * in_len;
      double* gx = gin + ci * in_len;
      for (std::size_t m = 0; m < l.kernel_len; ++m) {
        const long off = static_cast<long>(m) - pad;
        long t0 = off < 0 ? (-off + s - 1) / s : 0;
        long t1 = (n_in - 1 - off) / s;
        if (t1 > n_out - 1) t1 = n_out - 1;
        const double wv = l.w(co, ci, m);
        double wsum = 0.0;
        if (s == 1) {
          const double* xs = x + off;
          double* gxs = gx + off;
          for (long t = t0; t <= t1; ++t) {
            wsum += go[t] * xs[t];
            gxs[t] += wv * go[t];
          }
        } else {
          for (long t = t0; t <= t1; ++t) {
            wsum += go[t] * x[t * s + off];
            gx[t * s + off] += wv * go[t];
          }
        }
        gw[(co * l.in_channels + ci) * l.kernel_len + m] += wsum;
      }
    }
  }
}

void convt_backward(const Layer& l, const double* in, std::size_t in_len,
                    const double* gout, std::size_t out_len, double* gw,
                    double* gb, double* gin) {
  const long pad = static_cast<long>(pad_of(l));
  const long s = static_cast<long>(l.stride);
  const long n_in = static_cast<long>(in_len);
  const long n_out = static_cast<long>(out_len);
  for (std::size_t co = 0; co < l.out_channels; ++co) {
    const double* go = gout + co * out_len;
    double bsum = 0.0;
    for (long t = 0; t < n_out; ++t) bsum += go[t];
    gb[co] += bsum;
    for (std::size_t ci = 0; ci < l.in_channels; ++ci) {
      const double* x = in + ci * in_len;
      double* gx = gin + ci * in_len;
      for (std::size_t m = 0; m < l.kernel_len; ++m) {
        const long off = static_cast<long>(m) - pad;
        long t0 = off < 0 ? (-off + s - 1) / s : 0;
        long t1 = (n_out - 1 - off) / s;
        if (t1 > n_in - 1) t1 = n_in - 1;
        const double wv = l.w(co, ci, m);
        double wsum = 0.0;
        for (long t = t0; t <= t1; ++t) {
          const double g = go[t * s + off];
          wsum += g * x[t];
          gx[t] += wv * g;
        }
        gw[(co * l.in_channels + ci) * l.kernel_len + m] += wsum;
      }
    }
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// Forward / backward
// ---------------------------------------------------------------------------

std::vector<double> forward(const NetworkParams& params,
                            const std::vector<double>& segment, bool training,
                            uint64_t dropout_seed, ForwardCache* cache) {
  const NetConfig& cfg = params.cfg;
  if (segment.size() != cfg.segment_len)
    throw std::invalid_argument("forward: segment length mismatch");
  const std::size_t num_layers = params.layers.size();
  if (cache) {
    cache->inputs.assign(num_layers, {});
    cache->pre_activations.assign(num_layers, {});
    cache->dropout_masks.assign(num_layers, {});
    cache->encoder_outputs.clear();
    cache->valid = true;
  }
  std::mt19937_64 drop_rng(dropout_seed);
  std::bernoulli_distribution keep(1.0 - cfg.dropout_p);

  std::vector<std::vector<double>> encoder_outputs;  // post-activation
  std::vector<std::size_t> encoder_lens;
  std::vector<double> x = segment;  // channel-major [ch][len]
  std::size_t len = cfg.segment_len;

  for (std::size_t i = 0; i < num_layers; ++i) {
    const Layer& l = params.layers[i];
    std::vector<double> input;
    if (l.skip_source >= 0) {
      const auto& skip = encoder_outputs[static_cast<std::size_t>(l.skip_source)];
      if (encoder_lens[static_cast<std::size_t>(l.skip_source)] != len)
        throw std::invalid_argument("forward: params/cfg shape mismatch");
      input.reserve(x.size() + skip.size());
      input.insert(input.end(), x.begin(), x.end());
      input.insert(input.end(), skip.begin(), skip.end());
    } else {
      input = std::move(x);
    }
    if (input.size() != l.in_channels * len)
      throw std::invalid_argument("forward: params/cfg shape mismatch");

    const std::size_t out_len = out_len_of(l, len);
    std::vector<double> z(l.out_channels * out_len);
    if (l.kind == LayerKind::kConv)
      conv_forward(l, input.data(), len, z.data(), out_len);
    else
      convt_forward(l, input.data(), len, z.data(), out_len);

    std::vector<double> a = z;
    if (l.has_prelu)
      for (auto& v : a)
        if (v < 0.0) v *= l.prelu_alpha;

    std::vector<uint8_t> mask;
    if (training && l.dropout_after && cfg.dropout_p > 0.0) {
      mask.resize(a.size());
      const double inv_keep = 1.0 / (1.0 - cfg.dropout_p);
      for (std::size_t j = 0; j < a.size(); ++j) {
        mask[j] = keep(drop_rng) ? 1 : 0;
        a[j] = mask[j] ? a[j] * inv_keep : 0.0;
      }
    }

    if (cache) {
      cache->inputs[i] = std::move(input);
      cache->pre_activations[i] = std::move(z);
      cache->dropout_masks[i] = std::move(mask);
    }
    if (l.group == LayerGroup::kEncoder) {
      encoder_outputs.push_back(a);
      encoder_lens.push_back(out_len);
    }
    x = std::move(a);
    len = out_len;
  }
  if (cache) cache->encoder_outputs = std::move(encoder_outputs);
  return x;
}

Gradients backward(const NetworkParams& params, const ForwardCache& cache,
                   const std::vector<double>& upstream_grad) {
  if (!cache.valid) throw std::invalid_argument("backward: missing forward cache");
  const NetConfig& cfg = params.cfg;
  const std::size_t num_layers = params.layers.size();
  Gradients grads = Gradients::zeros_like(params);

  // Output lengths per layer, recomputed from the cache.
  std::vector<std::size_t> in_lens(num_layers), out_lens(num_layers);
  {
    std::size_t len = cfg.segment_len;
    for (std::size_t i = 0; i < num_layers; ++i) {
      in_lens[i] = len;
      out_lens[i] = out_len_of(params.layers[i], len);
      len = out_lens[i];
    }
  }

  // Gradients flowing into encoder outputs through skip connections,
  // keyed by encoder index.
  std::vector<std::vector<double>> skip_grads(cache.encoder_outputs.size());
  std::vector<double> grad_out = upstream_grad;

  std::size_t encoder_count = cache.encoder_outputs.size();
  for (std::size_t ri = 0; ri < num_layers; ++ri) {
    const std::size_t i = num_layers - 1 - ri;
    const Layer& l = params.layers[i];

    if (l.group == LayerGroup::kEncoder) {
      // This layer's output also fed a skip connection.
      --encoder_count;
      auto& sg = skip_grads[encoder_count];
      if (!sg.empty())
        for (std::size_t j = 0; j < grad_out.size(); ++j) grad_out[j] += sg[j];
    }

    const auto& mask = cache.dropout_masks[i];
    if (!mask.empty()) {
      const double inv_keep = 1.0 / (1.0 - cfg.dropout_p);
      for (std::size_t j = 0; j < grad_out.size(); ++j)
        grad_out[j] = mask[j] ? grad_out[j] * inv_keep : 0.0;
    }

    const auto& z = cache.pre_activations[i];
    std::vector<double> grad_z = std::move(grad_out);
    if (l.has_prelu) {
      double galpha = 0.0;
      for (std::size_t j = 0; j < grad_z.size(); ++j) {
        if (z[j] < 0.0) {
          galpha += grad_z[j] * z[j];
          grad_z[j] *= l.prelu_alpha;
        }
      }
      grads.layers[i].prelu_alpha += galpha;
    }

    std::vector<double> grad_in(l.in_channels * in_lens[i], 0.0);
    if (l.kind == LayerKind::kConv)
      conv_backward(l, cache.inputs[i].data(), in_lens[i], grad_z.data(),
                    out_lens[i], grads.layers[i].weights.data(),
                    grads.layers[i].bias.data(), grad_in.data());
    else
      convt_backward(l, cache.inputs[i].data(), in_lens[i], grad_z.data(),
                     out_lens[i], grads.layers[i].weights.data(),
                     grads.layers[i].bias.data(), grad_in.data());

    if (l.skip_source >= 0) {
      // Split the concatenation: first part continues backward, the rest
      // accumulates at the skip source.
      const std::size_t skip_idx = static_cast<std::size_t>(l.skip_source);
      const std::size_t skip_size = cache.encoder_outputs[skip_idx].size();
      const std::size_t main_size = grad_in.size() - skip_size;
      auto& sg = skip_grads[skip_idx];
      if (sg.empty()) sg.assign(skip_size, 0.0);
      for (std::size_t j = 0; j < skip_size; ++j) sg[j] += grad_in[main_size + j];
      grad_in.resize(main_size);
    }
    grad_out = std::move(grad_in);
  }
  return grads;
}

// ---------------------------------------------------------------------------
// T-PCM loss
// ---------------------------------------------------------------------------

namespace {

double sign_of(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

}  // namespace

TpcmResult tpcm_loss(const std::vector<double>& estimate,
                     const std::vector<double>& target, const TpcmConfig& cfg) {
  if (estimate.size() != target.size())
    throw std::invalid_argument("tpcm_loss: length mismatch");
  const std::size_t n = estimate.size();
  TpcmResult result;
  result.grad.assign(n, 0.0);

  // Time-domain mean absolute error.
  double mae = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = estimate[i] - target[i];
    mae += std::abs(d);
    result.grad[i] = cfg.time_weight * sign_of(d) / static_cast<double>(n);
  }
  mae /= static_cast<double>(n);
  result.loss = cfg.time_weight * mae;

  // Constrained real/imag magnitude term on one-sided STFT bins.
  const std::size_t frame_len = cfg.stft.frame_len;
  const std::size_t hop = cfg.stft.hop;
  if (n >= frame_len && cfg.spectral_weight > 0.0) {
    const auto win = make_window(cfg.stft.window, frame_len);
    const std::size_t num_frames = (n - frame_len) / hop + 1;
    const std::size_t num_bins = frame_len / 2 + 1;
    const double norm =
        1.0 / (2.0 * static_cast<double>(num_bins) * static_cast<double>(num_frames));
    double spec_loss = 0.0;
    std::vector<double> frame(frame_len);
    std::vector<cplx> grad_spec(frame_len);
    for (std::size_t l = 0; l < num_frames; ++l) {
      const std::size_t start = l * hop;
      for (std::size_t m = 0; m < frame_len; ++m)
        frame[m] = win[m] * estimate[start + m];
      const auto est_spec = rfft(frame);
      for (std::size_t m = 0; m < frame_len; ++m)
        frame[m] = win[m] * target[start + m];
      const auto tgt_spec = rfft(frame);

      std::fill(grad_spec.begin(), grad_spec.end(), cplx(0.0, 0.0));
      for (std::size_t k = 0; k < num_bins; ++k) {
        const double dre =
            std::abs(est_spec[k].real()) - std::abs(tgt_spec[k].real());
        const double dim =
            std::abs(est_spec[k].imag()) - std::abs(tgt_spec[k].imag());
        spec_loss += (std::abs(dre) + std::abs(dim)) * norm;
        const double gre = cfg.spectral_weight * norm * sign_of(dre) *
                           sign_of(est_spec[k].real());
        const double gim = cfg.spectral_weight * norm * sign_of(dim) *
                           sign_of(est_spec[k].imag());
        grad_spec[k] = cplx(gre, gim);
      }
      // Adjoint of the one-sided windowed DFT: x_grad[m] = w[m] *
      // Re(sum_k g(k) e^{j 2 pi k m / N}), evaluated with a zero-filled
      // inverse FFT over the full grid.
      fft(grad_spec, /*inverse=*/true);
      for (std::size_t m = 0; m < frame_len; ++m)
        result.grad[start + m] += win[m] * grad_spec[m].real() *
                                  static_cast<double>(frame_len);
    }
    result.loss += cfg.spectral_weight * spec_loss;
  }
  return result;
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

AdamState AdamState::zeros_like(const NetworkParams& params) {
  AdamState s;
  const Gradients z = Gradients::zeros_like(params);
  s.m = z.layers;
  s.v = z.layers;
  return s;
}

void adam_step(NetworkParams& params, const Gradients& grads, AdamState& state,
               double lr, const AdamConfig& cfg,
               const std::vector<LayerGroup>& update_mask) {
  if (state.m.size() != params.layers.size())
    throw std::invalid_argument("adam_step: state shape mismatch");
  auto in_mask = [&](LayerGroup g) {
    if (update_mask.empty()) return true;
    return std::find(update_mask.begin(), update_mask.end(), g) != update_mask.end();
  };
  ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    Layer& l = params.layers[i];
    if (!in_mask(l.group)) continue;
    const LayerGrad& g = grads.layers[i];
    auto update = [&](double* theta, double* m, double* v, const double* grad,
                      std::size_t count) {
      for (std::size_t j = 0; j < count; ++j) {
        if (!std::isfinite(grad[j]))
          throw std::runtime_error("adam_step: diverged (non-finite gradient)");
        m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * grad[j];
        v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * grad[j] * grad[j];
        const double mhat = m[j] / bc1;
        const double vhat = v[j] / bc2;
        theta[j] -= lr * mhat / (std::sqrt(vhat) + cfg.epsilon);
      }
    };
    update(l.weights.data(), state.m[i].weights.data(), state.v[i].weights.data(),
           g.weights.data(), l.weights.size());
    update(l.bias.data(), state.m[i].bias.data(), state.v[i].bias.data(),
           g.bias.data(), l.bias.size());
    update(&l.prelu_alpha, &state.m[i].prelu_alpha, &state.v[i].prelu_alpha,
           &g.prelu_alpha, 1);
  }
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

TrainingSet load_training_set(const CorpusManifest& manifest) {
  TrainingSet set;
  for (const auto& e : manifest.entries) {
    TrainingSet::Pair pair;
    pair.input = normalize_zscore(read_wav(e.simulated_path)).first;
    pair.target = normalize_zscore(read_wav(e.clean_path)).first;
    if (e.split == "train")
      set.train.push_back(std::move(pair));
    else
      set.val.push_back(std::move(pair));
  }
  return set;
}

namespace {

struct SampleDraw {
  std::size_t pair_idx;
  std::size_t start;
  uint64_t dropout_seed;
};

// Analysis-windowed training segment, matching the inference framing.
void extract_segment(const AudioBuffer& buf, std::size_t start, std::size_t p,
                     const std::vector<double>& win, std::vector<double>& out) {
  out.assign(p, 0.0);
  for (std::size_t m = 0; m < p; ++m) {
    const std::size_t idx = start + m;
    if (idx < buf.samples.size()) out[m] = win[m] * buf.samples[idx];
  }
}

struct BatchResult {
  double loss = 0.0;
  Gradients grads;
};

BatchResult run_chunk(const NetworkParams& params,
                      const std::vector<SampleDraw>& draws, std::size_t begin,
                      std::size_t end, const TrainingSet& set,
                      const std::vector<double>& win, const TpcmConfig& loss_cfg) {
  BatchResult result;
  result.grads = Gradients::zeros_like(params);
  const std::size_t p = params.cfg.segment_len;
  std::vector<double> input, target;
  ForwardCache cache;
  for (std::size_t i = begin; i < end; ++i) {
    const auto& d = draws[i];
    const auto& pair = set.train[d.pair_idx];
    extract_segment(pair.input, d.start, p, win, input);
    extract_segment(pair.target, d.start, p, win, target);
    const auto estimate = forward(params, input, /*training=*/true,
                                  d.dropout_seed, &cache);
    const auto loss = tpcm_loss(estimate, target, loss_cfg);
    result.loss += loss.loss;
    result.grads.add(backward(params, cache, loss.grad));
  }
  return result;
}

double validation_loss(const NetworkParams& params, const TrainingSet& set,
                       const std::vector<double>& win, const TpcmConfig& loss_cfg) {
  const std::size_t p = params.cfg.segment_len;
  double acc = 0.0;
  std::size_t count = 0;
  std::vector<double> input, target;
  for (const auto& pair : set.val) {
    const std::size_t n = pair.input.samples.size();
    const std::size_t num_segments = n >= p ? n / p : 1;
    for (std::size_t s = 0; s < num_segments; ++s) {
      extract_segment(pair.input, s * p, p, win, input);
      extract_segment(pair.target, s * p, p, win, target);
      const auto estimate = forward(params, input, /*training=*/false);
      acc += tpcm_loss(estimate, target, loss_cfg).loss;
      ++count;
    }
  }
  return count > 0 ? acc / static_cast<double>(count) : 0.0;
}

}  // namespace

TrainResult train(const TrainingSet& set, const NetConfig& net_cfg,
                  const TrainConfig& train_cfg, const NetworkParams* initial,
                  const std::vector<LayerGroup>& update_mask) {
  if (set.train.empty()) throw std::invalid_argument("train: empty train split");
  if (set.val.empty()) throw std::invalid_argument("train: empty val split");

  TrainResult result;
  result.params = initial ? *initial : NetworkParams::init_random(net_cfg, train_cfg.seed);
  result.log.seed = train_cfg.seed;
  if (train_cfg.max_epochs == 0) return result;

  const std::size_t p = result.params.cfg.segment_len;
  const auto win = make_window(WindowType::kSqrtHann, p);
  std::size_t total_train_samples = 0;
  for (const auto& pair : set.train) total_train_samples += pair.input.samples.size();
  const std::size_t batches_per_epoch = std::max<std::size_t>(
      1, total_train_samples / (p * train_cfg.batch_size));

  std::mt19937_64 rng(train_cfg.seed ^ 0x9e3779b97f4a7c15ull);
  AdamState adam = AdamState::zeros_like(result.params);
  double lr = train_cfg.lr0;
  double best_val = std::numeric_limits<double>::infinity();
  NetworkParams best_params = result.params;
  std::size_t lr_plateau = 0, stop_plateau = 0;

  const std::size_t jobs = std::max<std::size_t>(1, train_cfg.jobs);

  for (std::size_t epoch = 1; epoch <= train_cfg.max_epochs; ++epoch) {
    double epoch_loss = 0.0;
    for (std::size_t b = 0; b < batches_per_epoch; ++b) {
      // Pre-assign every random draw sequentially so worker count does
      // not change the result.
      std::vector<SampleDraw> draws(train_cfg.batch_size);
      for (auto& d : draws) {
        std::uniform_int_distribution<std::size_t> pair_dist(0, set.train.size() - 1);
        d.pair_idx = pair_dist(rng);
        const std::size_t n = set.train[d.pair_idx].input.samples.size();
        if (n > p) {
          std::uniform_int_distribution<std::size_t> start_dist(0, n - p);
          d.start = start_dist(rng);
        } else {
          d.start = 0;
        }
        d.dropout_seed = rng();
      }

      BatchResult batch;
      batch.grads = Gradients::zeros_like(result.params);
      if (jobs == 1) {
        batch = run_chunk(result.params, draws, 0, draws.size(), set, win,
                          train_cfg.loss);
      } else {
        std::vector<BatchResult> partial(jobs);
        std::vector<std::thread> workers;
        const std::size_t chunk = (draws.size() + jobs - 1) / jobs;
        for (std::size_t t = 0; t < jobs; ++t) {
          const std::size_t begin = std::min(t * chunk, draws.size());
          const std::size_t end = std::min(begin + chunk, draws.size());
          workers.emplace_back([&, t, begin, end] {
            partial[t] = run_chunk(result.params, draws, begin, end, set, win,
                                   train_cfg.loss);
          });
        }
        for (auto& w : workers) w.join();
        // Fixed reduction order keeps the result thread-count independent
        // only per chunking; chunking itself is deterministic.
        for (auto& pr : partial) {
          batch.loss += pr.loss;
          batch.grads.add(pr.grads);
        }
      }
      batch.grads.scale(1.0 / static_cast<double>(draws.size()));
      epoch_loss += batch.loss / static_cast<double>(draws.size());
      adam_step(result.params, batch.grads, adam, lr, train_cfg.adam, update_mask);
    }
    epoch_loss /= static_cast<double>(batches_per_epoch);

    double val = validation_loss(result.params, set, win, train_cfg.loss);
    if (train_cfg.val_loss_override) val = train_cfg.val_loss_override(epoch, val);

    if (val < best_val) {
      best_val = val;
      best_params = result.params;
      lr_plateau = 0;
      stop_plateau = 0;
    } else {
      ++lr_plateau;
      ++stop_plateau;
    }
    if (lr_plateau >= train_cfg.lr_halve_patience) {
      lr *= 0.5;
      lr_plateau = 0;
    }
    result.log.epochs.push_back({epoch, epoch_loss, val, lr});
    if (stop_plateau >= train_cfg.early_stop_patience) break;
  }
  result.params = std::move(best_params);
  return result;
}

TrainResult finetune_decoder(const NetworkParams& pretrained,
                             const TrainingSet& real_set, TrainConfig train_cfg) {
  bool has_decoder = false;
  for (const auto& l : pretrained.layers)
    if (l.group == LayerGroup::kDecoder) has_decoder = true;
  if (!has_decoder)
    throw std::invalid_argument("finetune_decoder: params carry no decoder group");
  if (train_cfg.lr0 == TrainConfig{}.lr0) train_cfg.lr0 = 5e-5;
  return train(real_set, pretrained.cfg, train_cfg, &pretrained,
               {LayerGroup::kDecoder});
}

// ---------------------------------------------------------------------------
// Inference
// ---------------------------------------------------------------------------

AudioBuffer Reconstructor::process(const AudioBuffer& input) const {
  auto [normalized, stats] = normalize_zscore(input);
  WolaConfig wola{params_.cfg.segment_len};
  auto segments = segment_wola(normalized, wola);
  for (auto& seg : segments) seg = forward(params_, seg, /*training=*/false);
  AudioBuffer out = overlap_add(segments, wola, input.sample_rate_hz);
  out.samples.resize(input.samples.size());
  return denormalize(out, stats);
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

namespace {

constexpr char kMagic[8] = {'O', 'V', 'R', 'N', 'E', 'T', '0', '1'};

template <typename T>
void write_pod(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
  T v;
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  return v;
}

}  // namespace

void NetworkParams::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("NetworkParams: cannot write " + path);
  out.write(kMagic, sizeof(kMagic));
  write_pod<uint64_t>(out, cfg.segment_len);
  write_pod<uint64_t>(out, cfg.depth);
  write_pod<uint64_t>(out, cfg.base_channels);
  write_pod<uint64_t>(out, cfg.max_channels);
  write_pod<uint64_t>(out, cfg.kernel_len);
  write_pod<uint64_t>(out, cfg.stride);
  write_pod<double>(out, cfg.dropout_p);
  write_pod<double>(out, cfg.prelu_init);
  write_pod<uint64_t>(out, layers.size());
  for (const auto& l : layers) {
    write_pod<uint8_t>(out, static_cast<uint8_t>(l.kind));
    write_pod<uint8_t>(out, static_cast<uint8_t>(l.group));
    write_pod<uint64_t>(out, l.in_channels);
    write_pod<uint64_t>(out, l.out_channels);
    write_pod<uint64_t>(out, l.kernel_len);
    write_pod<uint64_t>(out, l.stride);
    write_pod<uint8_t>(out, l.has_prelu ? 1 : 0);
    write_pod<uint8_t>(out, l.dropout_after ? 1 : 0);
    write_pod<int32_t>(out, l.skip_source);
    out.write(reinterpret_cast<const char*>(l.weights.data()),
              static_cast<std::streamsize>(l.weights.size() * sizeof(double)));
    out.write(reinterpret_cast<const char*>(l.bias.data()),
              static_cast<std::streamsize>(l.bias.size() * sizeof(double)));
    write_pod<double>(out, l.prelu_alpha);
  }
  if (!out) throw std::runtime_error("NetworkParams: write failed for " + path);
}

NetworkParams NetworkParams::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("NetworkParams: cannot open " + path);
  char magic[8];
  in.read(magic, 8);
  if (std::memcmp(magic, kMagic, 8) != 0)
    throw std::runtime_error("NetworkParams: bad magic in " + path);
  NetworkParams p;
  p.cfg.segment_len = read_pod<uint64_t>(in);
  p.cfg.depth = read_pod<uint64_t>(in);
  p.cfg.base_channels = read_pod<uint64_t>(in);
  p.cfg.max_channels = read_pod<uint64_t>(in);
  p.cfg.kernel_len = read_pod<uint64_t>(in);
  p.cfg.stride = read_pod<uint64_t>(in);
  p.cfg.dropout_p = read_pod<double>(in);
  p.cfg.prelu_init = read_pod<double>(in);
  const uint64_t num_layers = read_pod<uint64_t>(in);
  p.layers.resize(num_layers);
  for (auto& l : p.layers) {
    l.kind = static_cast<LayerKind>(read_pod<uint8_t>(in));
    l.group = static_cast<LayerGroup>(read_pod<uint8_t>(in));
    l.in_channels = read_pod<uint64_t>(in);
    l.out_channels = read_pod<uint64_t>(in);
    l.kernel_len = read_pod<uint64_t>(in);
    l.stride = read_pod<uint64_t>(in);
    l.has_prelu = read_pod<uint8_t>(in) != 0;
    l.dropout_after = read_pod<uint8_t>(in) != 0;
    l.skip_source = read_pod<int32_t>(in);
    l.weights.resize(l.out_channels * l.in_channels * l.kernel_len);
    in.read(reinterpret_cast<char*>(l.weights.data()),
            static_cast<std::streamsize>(l.weights.size() * sizeof(double)));
    l.bias.resize(l.out_channels);
    in.read(reinterpret_cast<char*>(l.bias.data()),
            static_cast<std::streamsize>(l.bias.size() * sizeof(double)));
    l.prelu_alpha = read_pod<double>(in);
  }
  if (!in) throw std::runtime_error("NetworkParams: truncated file " + path);
  return p;
}

void TrainLog::save_jsonl(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("TrainLog: cannot write " + path);
  for (const auto& e : epochs) {
    nlohmann::ordered_json j{{"epoch", e.epoch},
                             {"train_loss", e.train_loss},
                             {"val_loss", e.val_loss},
                             {"lr", e.lr}};
    out << j.dump() << "\n";
  }
}

}  // namespace ovr
