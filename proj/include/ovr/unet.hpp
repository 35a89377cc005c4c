// include/ovr/unet.hpp

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

#ifndef OVR_UNET_HPP_
#define OVR_UNET_HPP_

#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "ovr/dsp.hpp"
#include "ovr/simulate.hpp"

namespace ovr {

struct NetConfig {
  std::size_t segment_len = 2048;  // P
  std::size_t depth = 4;           // downsampling stages
  std::size_t base_channels = 16;  // channels after the input layer
  std::size_t max_channels = std::numeric_limits<std::size_t>::max();
  std::size_t kernel_len = 11;  // odd
  std::size_t stride = 2;       // per downsampling stage
  double dropout_p = 0.2;
  double prelu_init = 0.25;

  // Full-size configuration: input layer 1 -> 64 channels, doubling per
  // stage up to 512, bottleneck length 2048 / 2^5.
  static NetConfig paper_preset();
  // Small configuration for CPU-scale experiments.
  static NetConfig desk_preset();
};

enum class LayerGroup { kEncoder, kBottleneck, kDecoder };
enum class LayerKind { kConv, kTransposedConv };

struct Layer {
  LayerKind kind = LayerKind::kConv;
  LayerGroup group = LayerGroup::kEncoder;
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  std::size_t kernel_len = 11;
  std::size_t stride = 1;
  bool has_prelu = true;     // last decoder layer is linear
  bool dropout_after = false;
  int skip_source = -1;  // encoder layer whose output joins this input

  std::vector<double> weights;  // [out_ch][in_ch][kernel]
  std::vector<double> bias;     // [out_ch]
  double prelu_alpha = 0.25;

  double& w(std::size_t co, std::size_t ci, std::size_t m) {
    return weights[(co * in_channels + ci) * kernel_len + m];
  }
  double w(std::size_t co, std::size_t ci, std::size_t m) const {
    return weights[(co * in_channels + ci) * kernel_len + m];
  }
  std::size_t num_params() const { return weights.size() + bias.size() + 1; }
};

struct NetworkParams {
  NetConfig cfg;
  std::vector<Layer> layers;

  // Layer skeleton for cfg with zeroed weights.
  static NetworkParams zeros(const NetConfig& cfg);
  // He-style scaled uniform init, seeded.
  static NetworkParams init_random(const NetConfig& cfg, uint64_t seed);

  std::size_t num_params() const;
  void save(const std::string& path) const;
  static NetworkParams load(const std::string& path);
};

struct LayerGrad {
  std::vector<double> weights;
  std::vector<double> bias;
  double prelu_alpha = 0.0;
};

struct Gradients {
  std::vector<LayerGrad> layers;
  static Gradients zeros_like(const NetworkParams& params);
  void add(const Gradients& other);
  void scale(double s);
};

// Per-layer forward activations needed by backward().
struct ForwardCache {
  // For each layer: the (possibly concatenated) input, the
  // pre-activation, and the dropout keep-mask (empty when unused).
  std::vector<std::vector<double>> inputs;
  std::vector<std::vector<double>> pre_activations;
  std::vector<std::vector<uint8_t>> dropout_masks;
  std::vector<std::vector<double>> encoder_outputs;  // post-activation
  bool valid = false;
};

// Processes one length-P segment. With training=true, dropout is drawn
// from dropout_seed; training=false is deterministic.
std::vector<double> forward(const NetworkParams& params,
                            const std::vector<double>& segment, bool training,
                            uint64_t dropout_seed = 0,
                            ForwardCache* cache = nullptr);

// Reverse-mode gradients for all layer parameters given dLoss/dOutput.
Gradients backward(const NetworkParams& params, const ForwardCache& cache,
                   const std::vector<double>& upstream_grad);

struct TpcmConfig {
  double time_weight = 0.5;
  double spectral_weight = 0.5;
  StftConfig stft{256, 128, WindowType::kSqrtHann};
};

struct TpcmResult {
  double loss = 0.0;
  std::vector<double> grad;  // dLoss/dEstimate
};

// Time-domain MAE plus a constrained real/imag STFT magnitude term; the
// gradient is analytic through the (linear) STFT with subgradient 0 at
// the absolute-value kinks.
TpcmResult tpcm_loss(const std::vector<double>& estimate,
                     const std::vector<double>& target,
                     const TpcmConfig& cfg = {});

struct AdamState {
  std::size_t step = 0;
  std::vector<LayerGrad> m;  // first moments, same shape as gradients
  std::vector<LayerGrad> v;  // second moments
  static AdamState zeros_like(const NetworkParams& params);
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// One bias-corrected Adam update. update_mask (when non-empty) limits
// the update to layers whose group is in the mask; untouched layers are
// left bit-identical. Throws "diverged" on non-finite gradients.
void adam_step(NetworkParams& params, const Gradients& grads, AdamState& state,
               double lr, const AdamConfig& cfg = {},
               const std::vector<LayerGroup>& update_mask = {});

struct TrainConfig {
  std::size_t batch_size = 32;
  double lr0 = 1e-4;
  std::size_t lr_halve_patience = 3;
  std::size_t early_stop_patience = 6;
  std::size_t max_epochs = 100;
  uint64_t seed = 0;
  std::size_t jobs = 1;
  TpcmConfig loss;
  AdamConfig adam;
  // Test hook: replaces the computed validation loss when set.
  std::function<double(std::size_t epoch, double computed)> val_loss_override;
};

struct EpochStats {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double lr = 0.0;
};

struct TrainLog {
  std::vector<EpochStats> epochs;
  std::string strategy;
  uint64_t seed = 0;
  void save_jsonl(const std::string& path) const;
};

// In-memory (input, target) recording pairs, already normalized
// per-recording to zero mean and unit variance.
struct TrainingSet {
  struct Pair {
    AudioBuffer input;
    AudioBuffer target;
  };
  std::vector<Pair> train;
  std::vector<Pair> val;
};

// Loads a corpus manifest into memory: simulated signals are inputs,
// clean signals targets, split per the manifest. Each recording is
// z-score normalized.
TrainingSet load_training_set(const CorpusManifest& manifest);

struct TrainResult {
  NetworkParams params;  // best-validation snapshot
  TrainLog log;
};

// Mini-batch training with the plateau learning-rate schedule and early
// stopping. update_mask as in adam_step.
TrainResult train(const TrainingSet& set, const NetConfig& net_cfg,
                  const TrainConfig& train_cfg,
                  const NetworkParams* initial = nullptr,
                  const std::vector<LayerGroup>& update_mask = {});

// Decoder-only fine-tuning; encoder and bottleneck parameters of the
// result are bit-identical to `pretrained`.
TrainResult finetune_decoder(const NetworkParams& pretrained,
                             const TrainingSet& real_set,
                             TrainConfig train_cfg);

// WOLA-framed inference: analysis windowing, per-segment forward pass,
// synthesis overlap-add. Input is z-score normalized and the output is
// denormalized with the input statistics.
class Reconstructor {
 public:
  explicit Reconstructor(NetworkParams params) : params_(std::move(params)) {}
  AudioBuffer process(const AudioBuffer& input) const;
  const NetworkParams& params() const { return params_; }

 private:
  NetworkParams params_;
};

}  // namespace ovr

#endif  // OVR_UNET_HPP_
