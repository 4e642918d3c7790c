#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "dispute/features.hpp"
#include "dispute/rng.hpp"

namespace dispute {

// Fully connected layer, weights row-major (out x in).
struct Linear {
  int in_dim = 0;
  int out_dim = 0;
  std::vector<double> w;
  std::vector<double> b;

  bool operator==(const Linear&) const = default;
};

Linear make_linear(int in_dim, int out_dim);
void init_linear(Linear& layer, Rng& rng);
std::vector<double> linear_forward(const Linear& layer, std::span<const double> x);
// Accumulates weight/bias gradients; dx (optional, may be empty) receives
// dLoss/dx added on top of its current contents.
void linear_backward(const Linear& layer, std::span<const double> x,
                     std::span<const double> dout, Linear& grad, std::span<double> dx);

// Multilayer perceptron. Hidden layers are ReLU with inverted dropout in
// train mode; the final layer is identity unless relu_output is set, in
// which case it behaves like one more hidden layer (used as a shared
// encoder trunk under multiple heads).
struct MlpParams {
  std::vector<Linear> layers;
  double dropout_p = 0.5;
  bool relu_output = false;

  int input_dim() const { return layers.empty() ? 0 : layers.front().in_dim; }
  int output_dim() const { return layers.empty() ? 0 : layers.back().out_dim; }

  bool operator==(const MlpParams&) const = default;
};

MlpParams init_params(std::span<const int> layer_dims, std::uint64_t seed);

// Per-layer activations recorded by a forward pass, consumed by backward.
// act[i] is layer i's output after its activation (and dropout, in train
// mode); mask[i] holds the inverted-dropout scales, empty when unused.
struct MlpTrace {
  FeatureVector input;
  std::vector<std::vector<double>> act;
  std::vector<std::vector<double>> mask;

  const std::vector<double>& output() const { return act.back(); }
};

void mlp_forward(const MlpParams& params, const FeatureVector& x, bool train_mode,
                 Rng* rng, MlpTrace& trace);
std::vector<double> mlp_forward(const MlpParams& params, const FeatureVector& x);
std::vector<double> mlp_forward(const MlpParams& params, const FeatureVector& x,
                                bool train_mode, std::uint64_t seed);

MlpParams zeros_like(const MlpParams& params);
Linear zeros_like(const Linear& layer);

// dout is dLoss/d(output as returned by forward); gradients accumulate.
// dinput, when non-empty, receives dLoss/d(input) added on top (needed when
// the input is itself a differentiable activation, e.g. a pooled embedding).
void mlp_backward(const MlpParams& params, const MlpTrace& trace,
                  std::span<const double> dout, MlpParams& grads,
                  std::span<double> dinput = {});

double sigmoid(double x);
std::vector<double> softmax(std::span<const double> logits);

// Mean binary cross-entropy over sigmoid outputs, computed in logit space.
double bce_loss(std::span<const double> logits, std::span<const double> targets);
void bce_grad(std::span<const double> logits, std::span<const double> targets,
              std::span<double> dlogits, double scale = 1.0);

// Categorical cross-entropy over SoftMax classes via log-sum-exp.
double ce_loss(std::span<const double> logits, int target_class);
void ce_grad(std::span<const double> logits, int target_class,
             std::span<double> dlogits, double scale = 1.0);

// score_i = q . tanh(W e_i + b); weights = SoftMax(scores); out = sum w_i e_i.
struct AttentionParams {
  int embed_dim = 0;
  int attn_dim = 0;
  std::vector<double> w;
  std::vector<double> b;
  std::vector<double> q;

  bool operator==(const AttentionParams&) const = default;
};

AttentionParams init_attention(int embed_dim, int attn_dim, std::uint64_t seed);
AttentionParams zeros_like(const AttentionParams& params);

struct AttentionTrace {
  std::vector<std::vector<double>> inputs;
  std::vector<std::vector<double>> tanh_h;
  std::vector<double> weights;
  std::vector<double> pooled;
};

std::vector<double> attention_pool(const std::vector<std::vector<double>>& embeddings,
                                   const AttentionParams& params,
                                   AttentionTrace* trace = nullptr);
// dembeddings must arrive sized like trace.inputs; gradients accumulate.
void attention_backward(const AttentionParams& params, const AttentionTrace& trace,
                        std::span<const double> dpooled, AttentionParams& grads,
                        std::vector<std::vector<double>>& dembeddings);

struct TrainConfig {
  double learning_rate = 1e-3;
  double dropout_p = 0.5;
  int batch_size = 32;
  int max_epochs = 100;
  int patience = 5;
  std::uint64_t seed = 0;
};

void validate_config(const TrainConfig& config);

// Adam with bias correction over a fixed flat parameter layout.
class Adam {
 public:
  explicit Adam(double learning_rate, double beta1 = 0.9, double beta2 = 0.999,
                double eps = 1e-8);

  void step(const std::vector<std::span<double>>& params,
            const std::vector<std::span<const double>>& grads);

 private:
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<double> m_, v_;
};

std::vector<std::span<double>> param_views(Linear& layer);
std::vector<std::span<double>> param_views(MlpParams& params);
std::vector<std::span<double>> param_views(AttentionParams& params);
std::vector<std::span<const double>> grad_views(const Linear& layer);
std::vector<std::span<const double>> grad_views(const MlpParams& params);
std::vector<std::span<const double>> grad_views(const AttentionParams& params);
void fill_zero(const std::vector<std::span<double>>& views);
// Element-wise copy between identical layouts; never reallocates, so spans
// held elsewhere stay valid (used for best-epoch snapshots).
void copy_views(const std::vector<std::span<const double>>& src,
                const std::vector<std::span<double>>& dst);

struct EpochStats {
  int epoch = 0;
  double train_loss = 0.0;
  double dev_loss = 0.0;
};

struct TrainHistory {
  std::vector<EpochStats> epochs;
  int best_epoch = -1;
  double best_dev_loss = 0.0;
};

// Generic epoch driver: shuffles example order, slices batches, tracks the
// best dev loss, stops after `patience` epochs without improvement, and
// restores the best snapshot before returning.
struct TrainHooks {
  std::function<double(std::span<const std::size_t>)> train_batch;
  std::function<double()> dev_loss;
  std::function<void()> snapshot_best;
  std::function<void()> restore_best;
};

TrainHistory run_training(std::size_t n_train, const TrainConfig& config, Rng& rng,
                          const TrainHooks& hooks);

enum class HeadKind { Sigmoid, Softmax };

struct TrainExample {
  FeatureVector x;
  std::vector<double> targets;
  int class_index = -1;
};

struct MlpTrainResult {
  MlpParams params;
  TrainHistory history;
};

double example_loss(const MlpParams& params, HeadKind head, const TrainExample& ex);
MlpTrainResult train_mlp(std::span<const int> layer_dims, HeadKind head,
                         const std::vector<TrainExample>& train,
                         const std::vector<TrainExample>& dev,
                         const TrainConfig& config);

// Central-difference check against already-computed analytic gradients.
// loss_fn must be deterministic (run with dropout disabled).
double grad_check(const std::vector<std::span<double>>& params,
                  const std::vector<std::span<const double>>& analytic,
                  const std::function<double()>& loss_fn, double eps = 1e-4);

}  // namespace dispute
