#include "dispute/neural.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "dispute/error.hpp"

namespace dispute {

namespace {

void check_finite(std::span<const double> values, const char* what) {
  for (double v : values) {
    if (!std::isfinite(v)) throw Error(std::string(what) + ": non-finite value");
  }
}

}  // namespace

Linear make_linear(int in_dim, int out_dim) {
  if (in_dim < 1 || out_dim < 1) throw Error("make_linear: non-positive dim");
  Linear layer;
  layer.in_dim = in_dim;
  layer.out_dim = out_dim;
  layer.w.assign(static_cast<std::size_t>(in_dim) * out_dim, 0.0);
  layer.b.assign(out_dim, 0.0);
  return layer;
}

void init_linear(Linear& layer, Rng& rng) {
  const double scale = 1.0 / std::sqrt(static_cast<double>(layer.in_dim));
  for (double& w : layer.w) w = rng.normal() * scale;
  std::fill(layer.b.begin(), layer.b.end(), 0.0);
}

std::vector<double> linear_forward(const Linear& layer, std::span<const double> x) {
  if (static_cast<int>(x.size()) != layer.in_dim)
    throw Error("linear_forward: input dim mismatch");
  std::vector<double> out(layer.out_dim);
  for (int j = 0; j < layer.out_dim; ++j) {
    const double* row = layer.w.data() + static_cast<std::size_t>(j) * layer.in_dim;
    double sum = layer.b[j];
    for (int i = 0; i < layer.in_dim; ++i) sum += row[i] * x[i];
    out[j] = sum;
  }
  return out;
}

void linear_backward(const Linear& layer, std::span<const double> x,
                     std::span<const double> dout, Linear& grad, std::span<double> dx) {
  if (static_cast<int>(x.size()) != layer.in_dim ||
      static_cast<int>(dout.size()) != layer.out_dim)
    throw Error("linear_backward: shape mismatch");
  if (grad.in_dim != layer.in_dim || grad.out_dim != layer.out_dim)
    throw Error("linear_backward: grad shape mismatch");
  if (!dx.empty() && static_cast<int>(dx.size()) != layer.in_dim)
    throw Error("linear_backward: dx shape mismatch");
  for (int j = 0; j < layer.out_dim; ++j) {
    const double d = dout[j];
    grad.b[j] += d;
    const double* row = layer.w.data() + static_cast<std::size_t>(j) * layer.in_dim;
    double* grow = grad.w.data() + static_cast<std::size_t>(j) * layer.in_dim;
    for (int i = 0; i < layer.in_dim; ++i) {
      grow[i] += d * x[i];
      if (!dx.empty()) dx[i] += d * row[i];
    }
  }
}

MlpParams init_params(std::span<const int> layer_dims, std::uint64_t seed) {
  if (layer_dims.size() < 2) throw Error("init_params: need at least 2 dims");
  for (int d : layer_dims) {
    if (d < 1) throw Error("init_params: non-positive dim");
  }
  MlpParams params;
  Rng rng(seed);
  for (std::size_t i = 1; i < layer_dims.size(); ++i) {
    Linear layer = make_linear(layer_dims[i - 1], layer_dims[i]);
    init_linear(layer, rng);
    params.layers.push_back(std::move(layer));
  }
  return params;
}

void mlp_forward(const MlpParams& params, const FeatureVector& x, bool train_mode,
                 Rng* rng, MlpTrace& trace) {
  if (params.layers.empty()) throw Error("mlp_forward: no layers");
  if (x.dim != params.input_dim()) throw Error("mlp_forward: input dim mismatch");
  const bool dropout = train_mode && params.dropout_p > 0.0;
  if (dropout && rng == nullptr) throw Error("mlp_forward: train mode needs an rng");
  trace.input = x;
  trace.act.assign(params.layers.size(), {});
  trace.mask.assign(params.layers.size(), {});
  const std::size_t last = params.layers.size() - 1;
  for (std::size_t li = 0; li < params.layers.size(); ++li) {
    const Linear& layer = params.layers[li];
    std::vector<double> z(layer.out_dim);
    if (li == 0) {
      for (int j = 0; j < layer.out_dim; ++j) {
        const double* row = layer.w.data() + static_cast<std::size_t>(j) * layer.in_dim;
        double sum = layer.b[j];
        for (const auto& [i, v] : x.entries) sum += row[i] * v;
        z[j] = sum;
      }
    } else {
      const std::vector<double>& a = trace.act[li - 1];
      if (static_cast<int>(a.size()) != layer.in_dim)
        throw Error("mlp_forward: layer dim mismatch");
      z = linear_forward(layer, a);
    }
    if (li < last || params.relu_output) {
      for (double& v : z) v = std::max(v, 0.0);
      if (dropout) {
        const double keep = 1.0 - params.dropout_p;
        std::vector<double> mask(z.size());
        for (std::size_t j = 0; j < z.size(); ++j) {
          mask[j] = rng->bernoulli(keep) ? 1.0 / keep : 0.0;
          z[j] *= mask[j];
        }
        trace.mask[li] = std::move(mask);
      }
    }
    trace.act[li] = std::move(z);
  }
  check_finite(trace.output(), "mlp_forward");
}

std::vector<double> mlp_forward(const MlpParams& params, const FeatureVector& x) {
  MlpTrace trace;
  mlp_forward(params, x, /*train_mode=*/false, nullptr, trace);
  return std::move(trace.act.back());
}

std::vector<double> mlp_forward(const MlpParams& params, const FeatureVector& x,
                                bool train_mode, std::uint64_t seed) {
  MlpTrace trace;
  Rng rng(seed);
  mlp_forward(params, x, train_mode, &rng, trace);
  return std::move(trace.act.back());
}

Linear zeros_like(const Linear& layer) { return make_linear(layer.in_dim, layer.out_dim); }

MlpParams zeros_like(const MlpParams& params) {
  MlpParams z;
  z.dropout_p = params.dropout_p;
  z.relu_output = params.relu_output;
  for (const Linear& layer : params.layers) z.layers.push_back(zeros_like(layer));
  return z;
}

void mlp_backward(const MlpParams& params, const MlpTrace& trace,
                  std::span<const double> dout, MlpParams& grads,
                  std::span<double> dinput) {
  const std::size_t nl = params.layers.size();
  if (grads.layers.size() != nl || trace.act.size() != nl)
    throw Error("mlp_backward: shape mismatch");
  if (dout.size() != trace.output().size()) throw Error("mlp_backward: dout size mismatch");
  if (!dinput.empty() && static_cast<int>(dinput.size()) != params.input_dim())
    throw Error("mlp_backward: dinput size mismatch");
  std::vector<double> delta(dout.begin(), dout.end());
  const std::size_t last = nl - 1;
  for (std::size_t li = nl; li-- > 0;) {
    const Linear& layer = params.layers[li];
    Linear& g = grads.layers[li];
    if (li < last || params.relu_output) {
      // Through dropout then ReLU: stored act is relu(z)*mask, so act>0
      // identifies live units whenever the mask is non-zero.
      const std::vector<double>& h = trace.act[li];
      const std::vector<double>& mask = trace.mask[li];
      for (std::size_t j = 0; j < delta.size(); ++j) {
        const double m = mask.empty() ? 1.0 : mask[j];
        delta[j] = h[j] > 0.0 ? delta[j] * m : 0.0;
      }
    }
    for (int j = 0; j < layer.out_dim; ++j) g.b[j] += delta[j];
    if (li == 0) {
      for (int j = 0; j < layer.out_dim; ++j) {
        double* grow = g.w.data() + static_cast<std::size_t>(j) * layer.in_dim;
        for (const auto& [i, v] : trace.input.entries) grow[i] += delta[j] * v;
        if (!dinput.empty()) {
          const double* row = layer.w.data() + static_cast<std::size_t>(j) * layer.in_dim;
          for (int i = 0; i < layer.in_dim; ++i) dinput[i] += delta[j] * row[i];
        }
      }
    } else {
      const std::vector<double>& a = trace.act[li - 1];
      std::vector<double> dprev(layer.in_dim, 0.0);
      for (int j = 0; j < layer.out_dim; ++j) {
        const double d = delta[j];
        const double* row = layer.w.data() + static_cast<std::size_t>(j) * layer.in_dim;
        double* grow = g.w.data() + static_cast<std::size_t>(j) * layer.in_dim;
        for (int i = 0; i < layer.in_dim; ++i) {
          grow[i] += d * a[i];
          dprev[i] += d * row[i];
        }
      }
      delta = std::move(dprev);
    }
  }
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

std::vector<double> softmax(std::span<const double> logits) {
  if (logits.empty()) throw Error("softmax: empty logits");
  check_finite(logits, "softmax");
  const double mx = *std::max_element(logits.begin(), logits.end());
  std::vector<double> out(logits.size());
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - mx);
    total += out[i];
  }
  for (double& v : out) v /= total;
  return out;
}

double bce_loss(std::span<const double> logits, std::span<const double> targets) {
  if (logits.size() != targets.size()) throw Error("bce_loss: size mismatch");
  if (logits.empty()) throw Error("bce_loss: empty logits");
  check_finite(logits, "bce_loss");
  double total = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double z = logits[i];
    total += std::max(z, 0.0) - z * targets[i] + std::log1p(std::exp(-std::abs(z)));
  }
  return total / static_cast<double>(logits.size());
}

void bce_grad(std::span<const double> logits, std::span<const double> targets,
              std::span<double> dlogits, double scale) {
  if (logits.size() != targets.size() || logits.size() != dlogits.size())
    throw Error("bce_grad: size mismatch");
  const double inv_n = 1.0 / static_cast<double>(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    dlogits[i] += scale * inv_n * (sigmoid(logits[i]) - targets[i]);
  }
}

double ce_loss(std::span<const double> logits, int target_class) {
  if (logits.empty()) throw Error("ce_loss: empty logits");
  if (target_class < 0 || target_class >= static_cast<int>(logits.size()))
    throw Error("ce_loss: class out of range");
  check_finite(logits, "ce_loss");
  const double mx = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (double z : logits) total += std::exp(z - mx);
  return mx + std::log(total) - logits[target_class];
}

void ce_grad(std::span<const double> logits, int target_class, std::span<double> dlogits,
             double scale) {
  if (logits.size() != dlogits.size()) throw Error("ce_grad: size mismatch");
  std::vector<double> probs = softmax(logits);
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double onehot = static_cast<int>(i) == target_class ? 1.0 : 0.0;
    dlogits[i] += scale * (probs[i] - onehot);
  }
}

AttentionParams init_attention(int embed_dim, int attn_dim, std::uint64_t seed) {
  if (embed_dim < 1 || attn_dim < 1) throw Error("init_attention: non-positive dim");
  AttentionParams params;
  params.embed_dim = embed_dim;
  params.attn_dim = attn_dim;
  params.w.resize(static_cast<std::size_t>(attn_dim) * embed_dim);
  params.b.assign(attn_dim, 0.0);
  params.q.resize(attn_dim);
  Rng rng(seed);
  const double ws = 1.0 / std::sqrt(static_cast<double>(embed_dim));
  for (double& w : params.w) w = rng.normal() * ws;
  const double qs = 1.0 / std::sqrt(static_cast<double>(attn_dim));
  for (double& q : params.q) q = rng.normal() * qs;
  return params;
}

AttentionParams zeros_like(const AttentionParams& params) {
  AttentionParams z;
  z.embed_dim = params.embed_dim;
  z.attn_dim = params.attn_dim;
  z.w.assign(params.w.size(), 0.0);
  z.b.assign(params.b.size(), 0.0);
  z.q.assign(params.q.size(), 0.0);
  return z;
}

std::vector<double> attention_pool(const std::vector<std::vector<double>>& embeddings,
                                   const AttentionParams& params, AttentionTrace* trace) {
  if (embeddings.empty()) throw Error("attention_pool: empty input");
  for (const auto& e : embeddings) {
    if (static_cast<int>(e.size()) != params.embed_dim)
      throw Error("attention_pool: embedding dim mismatch");
  }
  const std::size_t n = embeddings.size();
  std::vector<std::vector<double>> tanh_h(n);
  std::vector<double> scores(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> h(params.attn_dim);
    double score = 0.0;
    for (int r = 0; r < params.attn_dim; ++r) {
      const double* row = params.w.data() + static_cast<std::size_t>(r) * params.embed_dim;
      double sum = params.b[r];
      for (int c = 0; c < params.embed_dim; ++c) sum += row[c] * embeddings[i][c];
      h[r] = std::tanh(sum);
      score += params.q[r] * h[r];
    }
    tanh_h[i] = std::move(h);
    scores[i] = score;
  }
  std::vector<double> weights = softmax(scores);
  std::vector<double> pooled(params.embed_dim, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (int c = 0; c < params.embed_dim; ++c) pooled[c] += weights[i] * embeddings[i][c];
  }
  check_finite(pooled, "attention_pool");
  if (trace != nullptr) {
    trace->inputs = embeddings;
    trace->tanh_h = std::move(tanh_h);
    trace->weights = std::move(weights);
    trace->pooled = pooled;
  }
  return pooled;
}

void attention_backward(const AttentionParams& params, const AttentionTrace& trace,
                        std::span<const double> dpooled, AttentionParams& grads,
                        std::vector<std::vector<double>>& dembeddings) {
  const std::size_t n = trace.inputs.size();
  if (n == 0) throw Error("attention_backward: empty trace");
  if (static_cast<int>(dpooled.size()) != params.embed_dim)
    throw Error("attention_backward: dpooled size mismatch");
  if (dembeddings.size() != n) throw Error("attention_backward: dembeddings size mismatch");
  for (const auto& d : dembeddings) {
    if (static_cast<int>(d.size()) != params.embed_dim)
      throw Error("attention_backward: dembedding dim mismatch");
  }
  std::vector<double> da(n);
  double weighted = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double dot = 0.0;
    for (int c = 0; c < params.embed_dim; ++c) dot += dpooled[c] * trace.inputs[i][c];
    da[i] = dot;
    weighted += trace.weights[i] * dot;
  }
  for (std::size_t i = 0; i < n; ++i) {
    const double ds = trace.weights[i] * (da[i] - weighted);  // SoftMax Jacobian row
    for (int r = 0; r < params.attn_dim; ++r) {
      const double t = trace.tanh_h[i][r];
      grads.q[r] += ds * t;
      const double dh = ds * params.q[r] * (1.0 - t * t);
      grads.b[r] += dh;
      const double* row = params.w.data() + static_cast<std::size_t>(r) * params.embed_dim;
      double* grow = grads.w.data() + static_cast<std::size_t>(r) * params.embed_dim;
      for (int c = 0; c < params.embed_dim; ++c) {
        grow[c] += dh * trace.inputs[i][c];
        dembeddings[i][c] += dh * row[c];
      }
    }
    for (int c = 0; c < params.embed_dim; ++c) {
      dembeddings[i][c] += trace.weights[i] * dpooled[c];
    }
  }
}

void validate_config(const TrainConfig& config) {
  if (!(config.learning_rate > 0.0)) throw Error("train config: learning_rate must be > 0");
  if (!(config.dropout_p >= 0.0 && config.dropout_p < 1.0))
    throw Error("train config: dropout_p must be in [0,1)");
  if (config.batch_size < 1) throw Error("train config: batch_size must be >= 1");
  if (config.max_epochs < 1) throw Error("train config: max_epochs must be >= 1");
  if (config.patience < 1) throw Error("train config: patience must be >= 1");
}

Adam::Adam(double learning_rate, double beta1, double beta2, double eps)
    : lr_(learning_rate), beta1_(beta1), beta2_(beta2), eps_(eps) {
  if (!(lr_ > 0.0)) throw Error("adam: learning rate must be > 0");
}

void Adam::step(const std::vector<std::span<double>>& params,
                const std::vector<std::span<const double>>& grads) {
  if (params.size() != grads.size()) throw Error("adam: layout mismatch");
  std::size_t total = 0;
  for (const auto& p : params) total += p.size();
  if (m_.empty()) {
    m_.assign(total, 0.0);
    v_.assign(total, 0.0);
  }
  if (m_.size() != total) throw Error("adam: parameter layout changed");
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  std::size_t off = 0;
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (params[k].size() != grads[k].size()) throw Error("adam: span size mismatch");
    for (std::size_t i = 0; i < params[k].size(); ++i, ++off) {
      const double g = grads[k][i];
      if (!std::isfinite(g)) throw Error("adam: non-finite gradient");
      m_[off] = beta1_ * m_[off] + (1.0 - beta1_) * g;
      v_[off] = beta2_ * v_[off] + (1.0 - beta2_) * g * g;
      const double mhat = m_[off] / bc1;
      const double vhat = v_[off] / bc2;
      params[k][i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
    }
  }
}

std::vector<std::span<double>> param_views(Linear& layer) {
  return {std::span<double>(layer.w), std::span<double>(layer.b)};
}

std::vector<std::span<double>> param_views(MlpParams& params) {
  std::vector<std::span<double>> views;
  for (Linear& layer : params.layers) {
    views.emplace_back(layer.w);
    views.emplace_back(layer.b);
  }
  return views;
}

std::vector<std::span<double>> param_views(AttentionParams& params) {
  return {std::span<double>(params.w), std::span<double>(params.b),
          std::span<double>(params.q)};
}

std::vector<std::span<const double>> grad_views(const Linear& layer) {
  return {std::span<const double>(layer.w), std::span<const double>(layer.b)};
}

std::vector<std::span<const double>> grad_views(const MlpParams& params) {
  std::vector<std::span<const double>> views;
  for (const Linear& layer : params.layers) {
    views.emplace_back(layer.w);
    views.emplace_back(layer.b);
  }
  return views;
}

std::vector<std::span<const double>> grad_views(const AttentionParams& params) {
  return {std::span<const double>(params.w), std::span<const double>(params.b),
          std::span<const double>(params.q)};
}

void fill_zero(const std::vector<std::span<double>>& views) {
  for (const auto& v : views) std::fill(v.begin(), v.end(), 0.0);
}

void copy_views(const std::vector<std::span<const double>>& src,
                const std::vector<std::span<double>>& dst) {
  if (src.size() != dst.size()) throw Error("copy_views: layout mismatch");
  for (std::size_t k = 0; k < src.size(); ++k) {
    if (src[k].size() != dst[k].size()) throw Error("copy_views: span size mismatch");
    std::copy(src[k].begin(), src[k].end(), dst[k].begin());
  }
}

TrainHistory run_training(std::size_t n_train, const TrainConfig& config, Rng& rng,
                          const TrainHooks& hooks) {
  validate_config(config);
  if (n_train == 0) throw Error("run_training: empty training set");
  TrainHistory history;
  history.best_dev_loss = std::numeric_limits<double>::infinity();
  std::vector<std::size_t> order(n_train);
  std::iota(order.begin(), order.end(), 0);
  int since_best = 0;
  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    rng.shuffle(order);
    double total = 0.0;
    const std::size_t batch = static_cast<std::size_t>(config.batch_size);
    for (std::size_t start = 0; start < n_train; start += batch) {
      const std::size_t len = std::min(batch, n_train - start);
      const double loss = hooks.train_batch(std::span(order).subspan(start, len));
      if (!std::isfinite(loss)) throw Error("run_training: non-finite training loss");
      total += loss * static_cast<double>(len);
    }
    const double train_loss = total / static_cast<double>(n_train);
    const double dev = hooks.dev_loss();
    if (!std::isfinite(dev)) throw Error("run_training: non-finite dev loss");
    history.epochs.push_back({epoch, train_loss, dev});
    if (dev < history.best_dev_loss) {
      history.best_dev_loss = dev;
      history.best_epoch = epoch;
      since_best = 0;
      hooks.snapshot_best();
    } else if (++since_best >= config.patience) {
      break;
    }
  }
  hooks.restore_best();
  return history;
}

double example_loss(const MlpParams& params, HeadKind head, const TrainExample& ex) {
  std::vector<double> logits = mlp_forward(params, ex.x);
  if (head == HeadKind::Sigmoid) return bce_loss(logits, ex.targets);
  return ce_loss(logits, ex.class_index);
}

MlpTrainResult train_mlp(std::span<const int> layer_dims, HeadKind head,
                         const std::vector<TrainExample>& train,
                         const std::vector<TrainExample>& dev, const TrainConfig& config) {
  validate_config(config);
  if (train.empty() || dev.empty()) throw Error("train_mlp: empty train or dev set");
  MlpParams params = init_params(layer_dims, derive_seed(config.seed, 1));
  params.dropout_p = config.dropout_p;
  MlpParams grads = zeros_like(params);
  MlpParams best = params;
  Adam adam(config.learning_rate);
  Rng rng(derive_seed(config.seed, 2));
  const auto pviews = param_views(params);
  const auto pviews_const = grad_views(params);
  const auto gviews_mut = param_views(grads);
  const auto gviews = grad_views(grads);
  const auto bviews = param_views(best);
  const auto bviews_const = grad_views(best);

  MlpTrace trace;
  std::vector<double> dlogits;
  TrainHooks hooks;
  hooks.train_batch = [&](std::span<const std::size_t> idx) {
    fill_zero(gviews_mut);
    double total = 0.0;
    const double scale = 1.0 / static_cast<double>(idx.size());
    for (std::size_t k : idx) {
      const TrainExample& ex = train[k];
      mlp_forward(params, ex.x, /*train_mode=*/true, &rng, trace);
      const std::vector<double>& logits = trace.output();
      dlogits.assign(logits.size(), 0.0);
      if (head == HeadKind::Sigmoid) {
        total += bce_loss(logits, ex.targets);
        bce_grad(logits, ex.targets, dlogits, scale);
      } else {
        total += ce_loss(logits, ex.class_index);
        ce_grad(logits, ex.class_index, dlogits, scale);
      }
      mlp_backward(params, trace, dlogits, grads);
    }
    adam.step(pviews, gviews);
    return total * scale;
  };
  hooks.dev_loss = [&]() {
    double total = 0.0;
    for (const TrainExample& ex : dev) total += example_loss(params, head, ex);
    return total / static_cast<double>(dev.size());
  };
  hooks.snapshot_best = [&]() { copy_views(pviews_const, bviews); };
  hooks.restore_best = [&]() { copy_views(bviews_const, pviews); };

  TrainHistory history = run_training(train.size(), config, rng, hooks);
  return {std::move(params), std::move(history)};
}

double grad_check(const std::vector<std::span<double>>& params,
                  const std::vector<std::span<const double>>& analytic,
                  const std::function<double()>& loss_fn, double eps) {
  if (params.size() != analytic.size()) throw Error("grad_check: layout mismatch");
  double max_rel = 0.0;
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (params[k].size() != analytic[k].size())
      throw Error("grad_check: span size mismatch");
    for (std::size_t i = 0; i < params[k].size(); ++i) {
      const double orig = params[k][i];
      params[k][i] = orig + eps;
      const double lp = loss_fn();
      params[k][i] = orig - eps;
      const double lm = loss_fn();
      params[k][i] = orig;
      const double numeric = (lp - lm) / (2.0 * eps);
      const double a = analytic[k][i];
      const double rel =
          std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
      max_rel = std::max(max_rel, rel);
    }
  }
  return max_rel;
}

}  // namespace dispute
