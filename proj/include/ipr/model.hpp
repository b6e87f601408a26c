#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ipr/numerics.hpp"
#include "ipr/rng.hpp"

namespace ipr {

class RngStream;

enum class Activation { Linear, Relu, Tanh, Gelu };

std::string activation_name(Activation act);
Activation activation_from_name(const std::string& name);

struct Layer {
  Matrix weight;  // out x in
  Vector bias;    // out
  Activation act = Activation::Linear;
};

struct ModelConfig {
  std::size_t input_dim = 0;
  std::vector<std::size_t> encoder_hidden = {64, 64};
  std::size_t embedding_dim = 32;
  // Hidden widths of the classifier head; empty means one linear layer.
  std::vector<std::size_t> classifier_hidden;
  std::size_t class_count = 0;
  Activation hidden_activation = Activation::Gelu;

  void validate() const;
};

// Encoder plus classifier head.  The encoder output (the embedding) is raw;
// callers normalize it where cosine geometry is required.
struct ModelParams {
  std::size_t input_dim = 0;
  std::size_t embedding_dim = 0;
  std::size_t class_count = 0;
  std::vector<Layer> encoder;
  std::vector<Layer> classifier;

  // Gaussian init scaled by sqrt(2 / fan_in), zero biases; consumes draws
  // from `rng` in a fixed order so identical seeds give identical nets.
  static ModelParams init(const ModelConfig& config, RngStream& rng);

  std::size_t parameter_count() const;
};

// Per-stack activations recorded during a forward pass; required by backward.
struct ForwardCache {
  Vector input;
  std::vector<Vector> pre_activations;
  std::vector<Vector> activations;
  bool valid = false;
};

Vector forward_stack(const std::vector<Layer>& stack, const Vector& x,
                     ForwardCache* cache);

Vector encode(const ModelParams& params, const Vector& x);
Vector encode(const ModelParams& params, const Vector& x, ForwardCache& cache);

Vector classify(const ModelParams& params, const Vector& embedding);
Vector classify(const ModelParams& params, const Vector& embedding,
                ForwardCache& cache);

std::size_t argmax_class(const Vector& logits);  // ties -> lowest index

struct CrossEntropy {
  double loss = 0.0;
  Vector logit_grad;  // d(loss)/d(logits)
};

// -weight * log softmax(logits)[target], max-shifted for stability.
CrossEntropy cross_entropy_loss(const Vector& logits, std::size_t target,
                                double weight = 1.0);

struct LayerGrads {
  Matrix weight;
  Vector bias;
};

struct StackGrads {
  std::vector<LayerGrads> layers;
  Vector input_grad;
};

// Backprop through one stack.  `upstream` is d(loss)/d(stack output) and the
// cache must come from a forward pass of the same stack.
StackGrads backward_stack(const std::vector<Layer>& stack,
                          const ForwardCache& cache, const Vector& upstream);

// Gradient accumulator shaped like a full model.
struct ModelGrads {
  std::vector<LayerGrads> encoder;
  std::vector<LayerGrads> classifier;

  static ModelGrads zeros_like(const ModelParams& params);
  void add_scaled_encoder(const StackGrads& g, double scale);
  void add_scaled_classifier(const StackGrads& g, double scale);
};

struct AdamWConfig {
  double learning_rate = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.01;  // decoupled

  void validate() const;
};

// AdamW with decoupled weight decay and bias-corrected moments.
class AdamW {
 public:
  struct Moments {
    std::vector<LayerGrads> encoder;
    std::vector<LayerGrads> classifier;
  };

  AdamW(const ModelParams& params, AdamWConfig config);

  // Rejects the whole step (no state mutated) if any gradient entry is
  // non-finite; the error names the offending tensor.
  void step(ModelParams& params, const ModelGrads& grads);

  std::int64_t step_count() const { return step_; }
  const AdamWConfig& config() const { return cfg_; }
  const Moments& first_moment() const { return m_; }
  const Moments& second_moment() const { return v_; }

  // For epoch-level schedules; moments and step count are unaffected.
  void set_learning_rate(double rate);

  void restore(std::int64_t step, Moments m, Moments v);

 private:
  AdamWConfig cfg_;
  std::int64_t step_ = 0;
  Moments m_;
  Moments v_;
};

struct LoadedCheckpoint {
  ModelParams params;
  std::optional<AdamWConfig> optimizer_config;
  std::optional<std::int64_t> optimizer_step;
  std::optional<AdamW::Moments> optimizer_m;
  std::optional<AdamW::Moments> optimizer_v;

  // Rebuild the optimizer if the checkpoint carried one.
  std::optional<AdamW> make_optimizer() const;
};

// Versioned JSON checkpoint; every float is stored as a full-precision
// decimal string so the round trip is bit-exact and readable cross-language.
void save_checkpoint(const std::string& path, const ModelParams& params,
                     const AdamW* optimizer = nullptr);
LoadedCheckpoint load_checkpoint(const std::string& path);

// The exact byte string save_checkpoint would write (used for equality
// checks between in-memory models).
std::string checkpoint_string(const ModelParams& params,
                              const AdamW* optimizer = nullptr);

}  // namespace ipr
