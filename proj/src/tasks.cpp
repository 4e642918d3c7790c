#include "dispute/tasks.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <map>
#include <numeric>

#include <json.hpp>

#include "dispute/error.hpp"
#include "dispute/util.hpp"

namespace dispute {

namespace {

using nlohmann::json;
using ordered_json = nlohmann::ordered_json;

constexpr const char* kCheckpointVersion = "dispute-ckpt-v1";

FeatureVector utterance_features(const Conversation& conv, int index, const Vocab& vocab,
                                 bool context) {
  FeatureVector f = bow_vector(conv.utterances[index], vocab);
  if (context) f = concat_features(f, context_vector(conv, index, vocab));
  return f;
}

std::vector<double> label_targets(const LabelVector& labels) {
  std::vector<double> t(kNumTactics);
  for (int i = 0; i < kNumTactics; ++i) t[i] = labels.test(i) ? 1.0 : 0.0;
  return t;
}

int argmax_lowest(std::span<const double> values) {
  int best = 0;
  for (int i = 1; i < static_cast<int>(values.size()); ++i) {
    if (values[i] > values[best]) best = i;
  }
  return best;
}

void check_metric_input(std::span<const LabelVector> preds,
                        std::span<const LabelVector> golds) {
  if (preds.size() != golds.size()) throw Error("metrics: length mismatch");
  if (preds.empty()) throw Error("metrics: empty input");
}

double sample_jaccard(const LabelVector& pred, const LabelVector& gold) {
  const int inter = (pred & gold).count();
  const int uni = (pred | gold).count();
  if (uni == 0) return 1.0;  // both empty
  return static_cast<double>(inter) / static_cast<double>(uni);
}

}  // namespace

std::optional<int> LabelsetCatalog::find_exact(const LabelVector& labels) const {
  for (std::size_t i = 0; i < entries.size(); ++i) {
    if (entries[i].labels == labels) return static_cast<int>(i);
  }
  return std::nullopt;
}

LabelsetCatalog build_catalog(const Corpus& train, int k) {
  if (k < 1) throw Error("build_catalog: k must be >= 1");
  std::map<LabelVector, long> counts;
  long n = 0;
  for (const Conversation& conv : train.conversations) {
    for (const Utterance& u : conv.utterances) {
      ++n;
      if (u.labels.any()) ++counts[u.labels];
    }
  }
  if (n == 0) throw Error("build_catalog: empty corpus");
  std::vector<LabelsetEntry> all;
  all.reserve(counts.size());
  for (const auto& [labels, freq] : counts) all.push_back({labels, freq});
  std::sort(all.begin(), all.end(), [](const LabelsetEntry& a, const LabelsetEntry& b) {
    if (a.frequency != b.frequency) return a.frequency > b.frequency;
    return a.labels < b.labels;
  });
  if (static_cast<int>(all.size()) > k) all.resize(k);
  LabelsetCatalog catalog;
  catalog.entries = std::move(all);
  long covered = 0;
  for (const LabelsetEntry& e : catalog.entries) covered += e.frequency;
  catalog.coverage = static_cast<double>(covered) / static_cast<double>(n);
  return catalog;
}

std::optional<int> map_to_catalog(const LabelVector& labels,
                                  const LabelsetCatalog& catalog) {
  int best = -1;
  int best_size = 0;
  for (std::size_t i = 0; i < catalog.entries.size(); ++i) {
    const LabelVector& cand = catalog.entries[i].labels;
    if (cand.none() || !labels.contains(cand)) continue;
    const int size = cand.count();
    if (size > best_size) {  // ties keep the earlier, higher-frequency entry
      best_size = size;
      best = static_cast<int>(i);
    }
  }
  if (best < 0) return std::nullopt;
  return best;
}

std::vector<TacticExample> make_training_set(const Corpus& corpus, TaskMode mode,
                                             bool context, bool multitask,
                                             const Vocab& vocab,
                                             const LabelsetCatalog* catalog,
                                             SplitRole role, LevelAggregate agg) {
  if (mode == TaskMode::LabelPowerset && catalog == nullptr)
    throw Error("make_training_set: label powerset mode needs a catalog");
  std::vector<TacticExample> out;
  for (const Conversation& conv : corpus.conversations) {
    std::vector<Ordinality> ords;
    if (multitask) ords = ordinality_sequence(conv, agg);
    for (std::size_t i = 0; i < conv.utterances.size(); ++i) {
      TacticExample ex;
      ex.features = utterance_features(conv, static_cast<int>(i), vocab, context);
      ex.gold = conv.utterances[i].labels;
      if (multitask) ex.ordinality = ords[i];
      if (mode == TaskMode::LabelPowerset) {
        auto cls = map_to_catalog(ex.gold, *catalog);
        if (cls.has_value()) {
          ex.lp_class = *cls;
        } else if (role == SplitRole::Train) {
          continue;  // unmappable labelsets are dropped from training only
        }
      }
      out.push_back(std::move(ex));
    }
  }
  return out;
}

TacticModel zeros_like(const TacticModel& model) {
  TacticModel z;
  z.mode = model.mode;
  z.context = model.context;
  z.multitask = model.multitask;
  z.aux_weight = model.aux_weight;
  z.encoder = zeros_like(model.encoder);
  z.head = zeros_like(model.head);
  if (model.ordinality_head.in_dim > 0) z.ordinality_head = zeros_like(model.ordinality_head);
  return z;
}

std::vector<std::span<double>> param_views(TacticModel& model) {
  std::vector<std::span<double>> views = param_views(model.encoder);
  for (auto& v : param_views(model.head)) views.push_back(v);
  if (model.multitask && model.ordinality_head.in_dim > 0) {
    for (auto& v : param_views(model.ordinality_head)) views.push_back(v);
  }
  return views;
}

std::vector<std::span<const double>> grad_views(const TacticModel& model) {
  std::vector<std::span<const double>> views = grad_views(model.encoder);
  for (auto& v : grad_views(model.head)) views.push_back(v);
  if (model.multitask && model.ordinality_head.in_dim > 0) {
    for (auto& v : grad_views(model.ordinality_head)) views.push_back(v);
  }
  return views;
}

double tactic_batch_loss(const TacticModel& model, std::span<const TacticExample> batch,
                         TacticModel* grads, Rng* dropout_rng) {
  if (batch.empty()) throw Error("tactic_batch_loss: empty batch");
  if (grads != nullptr && grads->encoder.layers.size() != model.encoder.layers.size())
    throw Error("tactic_batch_loss: gradient shape mismatch");
  const double scale = 1.0 / static_cast<double>(batch.size());
  double total = 0.0;
  MlpTrace trace;
  std::vector<double> dlogits, dh, dord;
  for (const TacticExample& ex : batch) {
    mlp_forward(model.encoder, ex.features, dropout_rng != nullptr, dropout_rng, trace);
    const std::vector<double>& h = trace.output();
    std::vector<double> logits = linear_forward(model.head, h);
    double main = 0.0;
    dlogits.assign(logits.size(), 0.0);
    if (model.mode == TaskMode::BinaryRelevance) {
      std::vector<double> targets = label_targets(ex.gold);
      main = bce_loss(logits, targets);
      if (grads != nullptr) bce_grad(logits, targets, dlogits, scale);
    } else {
      if (ex.lp_class < 0)
        throw Error("tactic_batch_loss: unmapped example in label powerset batch");
      main = ce_loss(logits, ex.lp_class);
      if (grads != nullptr) ce_grad(logits, ex.lp_class, dlogits, scale);
    }
    std::vector<double> ord_logits;
    double loss = main;
    if (model.multitask) {
      ord_logits = linear_forward(model.ordinality_head, h);
      const double aux = ce_loss(ord_logits, static_cast<int>(ex.ordinality));
      loss = multitask_loss(main, aux, model.aux_weight);
    }
    total += loss;
    if (grads != nullptr) {
      dh.assign(h.size(), 0.0);
      linear_backward(model.head, h, dlogits, grads->head, dh);
      if (model.multitask) {
        dord.assign(ord_logits.size(), 0.0);
        ce_grad(ord_logits, static_cast<int>(ex.ordinality), dord,
                scale * model.aux_weight);
        linear_backward(model.ordinality_head, h, dord, grads->ordinality_head, dh);
      }
      mlp_backward(model.encoder, trace, dh, grads->encoder);
    }
  }
  return total * scale;
}

TacticModel train_tactics(const Corpus& train, const Corpus& dev,
                          const TacticTrainOptions& options) {
  validate_config(options.config);
  if (options.hidden_dims.empty()) throw Error("train_tactics: hidden_dims must be non-empty");
  if (options.aux_weight < 0.0) throw Error("train_tactics: aux_weight must be >= 0");
  if (train.conversations.empty()) throw Error("train_tactics: empty training corpus");
  if (dev.conversations.empty()) throw Error("train_tactics: empty dev corpus");

  TacticModel model;
  model.mode = options.mode;
  model.context = options.context;
  model.multitask = options.multitask;
  model.level_aggregate = options.level_aggregate;
  model.aux_weight = options.aux_weight;
  model.hidden_dims = options.hidden_dims;
  model.config = options.config;
  model.vocab = build_vocab(train, options.vocab_min_freq, options.vocab_max_size);
  const LabelsetCatalog* catalog = nullptr;
  if (options.mode == TaskMode::LabelPowerset) {
    model.catalog = build_catalog(train, options.catalog_k);
    catalog = &model.catalog;
  }

  std::vector<TacticExample> train_set =
      make_training_set(train, options.mode, options.context, options.multitask,
                        model.vocab, catalog, SplitRole::Train, options.level_aggregate);
  // Dev drops unmappable labelsets too: the powerset loss needs a class.
  std::vector<TacticExample> dev_set =
      make_training_set(dev, options.mode, options.context, options.multitask,
                        model.vocab, catalog, SplitRole::Train, options.level_aggregate);
  if (train_set.empty()) throw Error("train_tactics: no trainable examples");
  if (dev_set.empty()) throw Error("train_tactics: no usable dev examples");

  std::vector<int> dims;
  dims.push_back(train_set.front().features.dim);
  dims.insert(dims.end(), options.hidden_dims.begin(), options.hidden_dims.end());
  model.encoder = init_params(dims, derive_seed(options.config.seed, 11));
  model.encoder.relu_output = true;
  model.encoder.dropout_p = options.config.dropout_p;
  const int embed = options.hidden_dims.back();
  const int out_dim =
      options.mode == TaskMode::BinaryRelevance ? kNumTactics : model.catalog.size();
  model.head = make_linear(embed, out_dim);
  {
    Rng head_rng(derive_seed(options.config.seed, 12));
    init_linear(model.head, head_rng);
  }
  if (options.multitask) {
    model.ordinality_head = make_linear(embed, kNumOrdinality);
    Rng ord_rng(derive_seed(options.config.seed, 13));
    init_linear(model.ordinality_head, ord_rng);
  }
  model.thresholds.fill(0.5);

  TacticModel grads = zeros_like(model);
  TacticModel best = zeros_like(model);
  const auto pviews = param_views(model);
  const auto pconst = grad_views(model);
  const auto gmut = param_views(grads);
  const auto gconst = grad_views(grads);
  const auto bmut = param_views(best);
  const auto bconst = grad_views(best);

  Adam adam(options.config.learning_rate);
  Rng rng(derive_seed(options.config.seed, 14));
  std::vector<TacticExample> batch_buf;
  TrainHooks hooks;
  hooks.train_batch = [&](std::span<const std::size_t> idx) {
    fill_zero(gmut);
    batch_buf.clear();
    for (std::size_t k : idx) batch_buf.push_back(train_set[k]);
    const double loss = tactic_batch_loss(model, batch_buf, &grads, &rng);
    adam.step(pviews, gconst);
    return loss;
  };
  hooks.dev_loss = [&]() { return tactic_batch_loss(model, dev_set, nullptr, nullptr); };
  hooks.snapshot_best = [&]() { copy_views(pconst, bmut); };
  hooks.restore_best = [&]() { copy_views(bconst, pviews); };

  model.history = run_training(train_set.size(), options.config, rng, hooks);

  if (options.mode == TaskMode::BinaryRelevance && options.calibrate) {
    model.thresholds = calibrate_thresholds(model, dev);
  }
  return model;
}

std::array<double, kNumTactics> tactic_scores(const TacticModel& model,
                                              const FeatureVector& features) {
  if (model.mode != TaskMode::BinaryRelevance)
    throw Error("tactic_scores: binary relevance models only");
  std::vector<double> h = mlp_forward(model.encoder, features);
  std::vector<double> logits = linear_forward(model.head, h);
  std::array<double, kNumTactics> scores{};
  for (int i = 0; i < kNumTactics; ++i) scores[i] = sigmoid(logits[i]);
  return scores;
}

std::vector<LabelVector> predict_tactics(const TacticModel& model,
                                         const Conversation& conv) {
  std::vector<LabelVector> preds;
  preds.reserve(conv.utterances.size());
  for (std::size_t i = 0; i < conv.utterances.size(); ++i) {
    FeatureVector f =
        utterance_features(conv, static_cast<int>(i), model.vocab, model.context);
    if (model.mode == TaskMode::BinaryRelevance) {
      std::array<double, kNumTactics> scores = tactic_scores(model, f);
      LabelVector v;
      for (int j = 0; j < kNumTactics; ++j) {
        if (scores[j] >= model.thresholds[j]) v.set(j);
      }
      preds.push_back(v);
    } else {
      if (model.catalog.entries.empty())
        throw Error("predict_tactics: model has an empty labelset catalog");
      std::vector<double> h = mlp_forward(model.encoder, f);
      std::vector<double> logits = linear_forward(model.head, h);
      const int cls = argmax_lowest(logits);
      preds.push_back(model.catalog.entries[cls].labels);
    }
  }
  return preds;
}

std::array<double, kNumTactics> calibrate_thresholds(const TacticModel& model,
                                                     const Corpus& dev) {
  if (model.mode != TaskMode::BinaryRelevance)
    throw Error("calibrate_thresholds: binary relevance models only");
  std::vector<std::array<double, kNumTactics>> scores;
  std::vector<LabelVector> golds;
  for (const Conversation& conv : dev.conversations) {
    for (std::size_t i = 0; i < conv.utterances.size(); ++i) {
      FeatureVector f =
          utterance_features(conv, static_cast<int>(i), model.vocab, model.context);
      scores.push_back(tactic_scores(model, f));
      golds.push_back(conv.utterances[i].labels);
    }
  }
  if (scores.empty()) throw Error("calibrate_thresholds: empty dev set");

  auto mean_jaccard = [&](const std::array<double, kNumTactics>& th) {
    double total = 0.0;
    for (std::size_t s = 0; s < scores.size(); ++s) {
      LabelVector pred;
      for (int j = 0; j < kNumTactics; ++j) {
        if (scores[s][j] >= th[j]) pred.set(j);
      }
      total += sample_jaccard(pred, golds[s]);
    }
    return total / static_cast<double>(scores.size());
  };

  std::array<double, kNumTactics> thresholds;
  thresholds.fill(0.5);
  for (int j = 0; j < kNumTactics; ++j) {
    double best_value = -1.0;
    double best_t = 0.05;
    for (int g = 1; g <= 19; ++g) {
      const double t = 0.05 * static_cast<double>(g);
      thresholds[j] = t;
      const double value = mean_jaccard(thresholds);
      if (value > best_value) {  // ties keep the lower threshold
        best_value = value;
        best_t = t;
      }
    }
    thresholds[j] = best_t;
  }
  return thresholds;
}

double emr(std::span<const LabelVector> preds, std::span<const LabelVector> golds) {
  check_metric_input(preds, golds);
  long exact = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if (preds[i] == golds[i]) ++exact;
  }
  return static_cast<double>(exact) / static_cast<double>(preds.size());
}

double hamming_loss(std::span<const LabelVector> preds,
                    std::span<const LabelVector> golds) {
  check_metric_input(preds, golds);
  double total = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const int disagree = std::popcount(preds[i].bits() ^ golds[i].bits());
    total += static_cast<double>(disagree) / static_cast<double>(kNumTactics);
  }
  return total / static_cast<double>(preds.size());
}

double jaccard(std::span<const LabelVector> preds, std::span<const LabelVector> golds) {
  check_metric_input(preds, golds);
  double total = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) total += sample_jaccard(preds[i], golds[i]);
  return total / static_cast<double>(preds.size());
}

double at_least_one_correct(std::span<const LabelVector> preds,
                            std::span<const LabelVector> golds) {
  check_metric_input(preds, golds);
  long hits = 0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    if ((preds[i] & golds[i]).any()) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(preds.size());
}

std::vector<double> per_sample_jaccard(std::span<const LabelVector> preds,
                                       std::span<const LabelVector> golds) {
  check_metric_input(preds, golds);
  std::vector<double> out(preds.size());
  for (std::size_t i = 0; i < preds.size(); ++i) out[i] = sample_jaccard(preds[i], golds[i]);
  return out;
}

double multitask_loss(double main_loss, double ordinality_loss, double weight) {
  if (!std::isfinite(main_loss) || !std::isfinite(ordinality_loss))
    throw Error("multitask_loss: non-finite input");
  if (weight < 0.0) throw Error("multitask_loss: negative weight");
  return main_loss + weight * ordinality_loss;
}

double pr_auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw Error("pr_auc: length mismatch");
  if (scores.empty()) throw Error("pr_auc: empty input");
  long pos = 0;
  for (int y : labels) {
    if (y != 0 && y != 1) throw Error("pr_auc: labels must be 0/1");
    if (y == 1) ++pos;
  }
  const long neg = static_cast<long>(labels.size()) - pos;
  if (pos == 0 || neg == 0)
    throw Error("pr_auc: need at least one positive and one negative");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] > scores[b];
  });
  double auc = 0.0;
  double prev_recall = 0.0;
  long tp = 0, fp = 0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
    for (std::size_t k = i; k <= j; ++k) {
      if (labels[order[k]] == 1)
        ++tp;
      else
        ++fp;
    }
    const double recall = static_cast<double>(tp) / static_cast<double>(pos);
    const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
    auc += (recall - prev_recall) * precision;
    prev_recall = recall;
    i = j + 1;
  }
  return auc;
}

EvalReport evaluate_tactics(const TacticModel& model, const Corpus& corpus) {
  std::vector<LabelVector> preds, golds;
  for (const Conversation& conv : corpus.conversations) {
    std::vector<LabelVector> p = predict_tactics(model, conv);
    for (std::size_t i = 0; i < conv.utterances.size(); ++i) {
      preds.push_back(p[i]);
      golds.push_back(conv.utterances[i].labels);
    }
  }
  if (preds.empty()) throw Error("evaluate_tactics: empty corpus");
  EvalReport report;
  report.n_samples = static_cast<long>(preds.size());
  report.jaccard = jaccard(preds, golds);
  report.hamming = hamming_loss(preds, golds);
  report.emr = emr(preds, golds);
  report.at_least_one = at_least_one_correct(preds, golds);
  report.per_sample_jaccard = per_sample_jaccard(preds, golds);
  for (std::size_t s = 0; s < preds.size(); ++s) {
    for (int i = 0; i < kNumTactics; ++i) {
      if (golds[s].test(i)) ++report.gold_label_counts[i];
      if (preds[s].test(i)) ++report.pred_label_counts[i];
      if (golds[s].test(i) && preds[s].test(i)) ++report.correct_label_counts[i];
    }
  }
  return report;
}

EscalationModel zeros_like(const EscalationModel& model) {
  EscalationModel z;
  z.aux_weight = model.aux_weight;
  z.attention_dim = model.attention_dim;
  z.encoder = zeros_like(model.encoder);
  z.attention = zeros_like(model.attention);
  z.head = zeros_like(model.head);
  z.aux_head = zeros_like(model.aux_head);
  return z;
}

std::vector<std::span<double>> param_views(EscalationModel& model) {
  std::vector<std::span<double>> views = param_views(model.encoder);
  for (auto& v : param_views(model.attention)) views.push_back(v);
  for (auto& v : param_views(model.head)) views.push_back(v);
  for (auto& v : param_views(model.aux_head)) views.push_back(v);
  return views;
}

std::vector<std::span<const double>> grad_views(const EscalationModel& model) {
  std::vector<std::span<const double>> views = grad_views(model.encoder);
  for (auto& v : grad_views(model.attention)) views.push_back(v);
  for (auto& v : grad_views(model.head)) views.push_back(v);
  for (auto& v : grad_views(model.aux_head)) views.push_back(v);
  return views;
}

std::vector<EscalationExample> make_escalation_set(const Corpus& corpus,
                                                   const Vocab& vocab) {
  std::vector<EscalationExample> out;
  for (const Conversation& conv : corpus.conversations) {
    if (!conv.escalated.has_value())
      throw Error("escalation training: conversation '" + conv.conv_id +
                  "' lacks an escalation flag");
    EscalationExample ex;
    ex.escalated = *conv.escalated;
    ex.utterance_features.reserve(conv.utterances.size());
    for (const Utterance& u : conv.utterances) {
      ex.utterance_features.push_back(bow_vector(u, vocab));
      ex.labels.push_back(u.labels);
    }
    out.push_back(std::move(ex));
  }
  return out;
}

double escalation_batch_loss(const EscalationModel& model,
                             std::span<const EscalationExample> batch,
                             EscalationModel* grads, Rng* dropout_rng) {
  if (batch.empty()) throw Error("escalation_batch_loss: empty batch");
  const int embed = model.attention.embed_dim;
  const double scale = 1.0 / static_cast<double>(batch.size());
  double total = 0.0;
  for (const EscalationExample& ex : batch) {
    const std::size_t n_utt = ex.utterance_features.size();
    if (n_utt == 0) throw Error("escalation_batch_loss: conversation with no utterances");
    std::vector<MlpTrace> traces(n_utt);
    std::vector<std::vector<double>> emb(n_utt);
    for (std::size_t i = 0; i < n_utt; ++i) {
      mlp_forward(model.encoder, ex.utterance_features[i], dropout_rng != nullptr,
                  dropout_rng, traces[i]);
      emb[i] = traces[i].output();
    }
    AttentionTrace atrace;
    std::vector<double> pooled = attention_pool(emb, model.attention, &atrace);
    FeatureVector pooled_f;
    pooled_f.dim = embed;
    pooled_f.entries.reserve(pooled.size());
    for (int c = 0; c < embed; ++c) pooled_f.entries.emplace_back(c, pooled[c]);
    MlpTrace head_trace;
    mlp_forward(model.head, pooled_f, dropout_rng != nullptr, dropout_rng, head_trace);
    if (head_trace.output().size() != 1)
      throw Error("escalation_batch_loss: head must emit a single logit");
    const double esc_logit = head_trace.output()[0];
    const double y = ex.escalated ? 1.0 : 0.0;
    const double main =
        bce_loss(std::span<const double>(&esc_logit, 1), std::span<const double>(&y, 1));

    double aux = 0.0;
    std::vector<std::vector<double>> aux_logits;
    if (model.aux_weight > 0.0) {
      aux_logits.resize(n_utt);
      for (std::size_t i = 0; i < n_utt; ++i) {
        aux_logits[i] = linear_forward(model.aux_head, emb[i]);
        aux += bce_loss(aux_logits[i], label_targets(ex.labels[i]));
      }
      aux /= static_cast<double>(n_utt);
    }
    total += multitask_loss(main, aux, model.aux_weight);

    if (grads != nullptr) {
      std::vector<double> dlogit(1, 0.0);
      bce_grad(std::span<const double>(&esc_logit, 1), std::span<const double>(&y, 1),
               dlogit, scale);
      std::vector<double> dpooled(embed, 0.0);
      mlp_backward(model.head, head_trace, dlogit, grads->head, dpooled);
      std::vector<std::vector<double>> demb(n_utt, std::vector<double>(embed, 0.0));
      attention_backward(model.attention, atrace, dpooled, grads->attention, demb);
      if (model.aux_weight > 0.0) {
        std::vector<double> daux(kNumTactics);
        const double aux_scale =
            scale * model.aux_weight / static_cast<double>(n_utt);
        for (std::size_t i = 0; i < n_utt; ++i) {
          std::fill(daux.begin(), daux.end(), 0.0);
          bce_grad(aux_logits[i], label_targets(ex.labels[i]), daux, aux_scale);
          linear_backward(model.aux_head, emb[i], daux, grads->aux_head, demb[i]);
        }
      }
      for (std::size_t i = 0; i < n_utt; ++i) {
        mlp_backward(model.encoder, traces[i], demb[i], grads->encoder);
      }
    }
  }
  return total * scale;
}

EscalationModel train_escalation(const Corpus& train, const Corpus& dev,
                                 const EscalationTrainOptions& options) {
  validate_config(options.config);
  if (options.hidden_dims.empty())
    throw Error("train_escalation: hidden_dims must be non-empty");
  if (options.attention_dim < 1 || options.head_hidden < 1)
    throw Error("train_escalation: non-positive layer size");
  if (options.aux_weight < 0.0) throw Error("train_escalation: aux_weight must be >= 0");
  if (train.conversations.empty()) throw Error("train_escalation: empty training corpus");
  if (dev.conversations.empty()) throw Error("train_escalation: empty dev corpus");

  EscalationModel model;
  model.aux_weight = options.aux_weight;
  model.hidden_dims = options.hidden_dims;
  model.attention_dim = options.attention_dim;
  model.config = options.config;
  model.vocab = build_vocab(train, options.vocab_min_freq, options.vocab_max_size);
  std::vector<EscalationExample> train_set = make_escalation_set(train, model.vocab);
  std::vector<EscalationExample> dev_set = make_escalation_set(dev, model.vocab);

  std::vector<int> dims;
  dims.push_back(model.vocab.size());
  dims.insert(dims.end(), options.hidden_dims.begin(), options.hidden_dims.end());
  model.encoder = init_params(dims, derive_seed(options.config.seed, 21));
  model.encoder.relu_output = true;
  model.encoder.dropout_p = options.config.dropout_p;
  const int embed = options.hidden_dims.back();
  model.attention =
      init_attention(embed, options.attention_dim, derive_seed(options.config.seed, 22));
  const int head_dims[] = {embed, options.head_hidden, 1};
  model.head = init_params(head_dims, derive_seed(options.config.seed, 23));
  model.head.dropout_p = options.config.dropout_p;
  model.aux_head = make_linear(embed, kNumTactics);
  {
    Rng aux_rng(derive_seed(options.config.seed, 24));
    init_linear(model.aux_head, aux_rng);
  }

  EscalationModel grads = zeros_like(model);
  EscalationModel best = zeros_like(model);
  const auto pviews = param_views(model);
  const auto pconst = grad_views(model);
  const auto gmut = param_views(grads);
  const auto gconst = grad_views(grads);
  const auto bmut = param_views(best);
  const auto bconst = grad_views(best);

  Adam adam(options.config.learning_rate);
  Rng rng(derive_seed(options.config.seed, 25));
  std::vector<EscalationExample> batch_buf;
  TrainHooks hooks;
  hooks.train_batch = [&](std::span<const std::size_t> idx) {
    fill_zero(gmut);
    batch_buf.clear();
    for (std::size_t k : idx) batch_buf.push_back(train_set[k]);
    const double loss = escalation_batch_loss(model, batch_buf, &grads, &rng);
    adam.step(pviews, gconst);
    return loss;
  };
  hooks.dev_loss = [&]() { return escalation_batch_loss(model, dev_set, nullptr, nullptr); };
  hooks.snapshot_best = [&]() { copy_views(pconst, bmut); };
  hooks.restore_best = [&]() { copy_views(bconst, pviews); };

  model.history = run_training(train_set.size(), options.config, rng, hooks);
  return model;
}

double predict_escalation(const EscalationModel& model, const Conversation& conv) {
  if (conv.utterances.empty()) throw Error("predict_escalation: empty conversation");
  std::vector<std::vector<double>> emb;
  emb.reserve(conv.utterances.size());
  for (const Utterance& u : conv.utterances) {
    emb.push_back(mlp_forward(model.encoder, bow_vector(u, model.vocab)));
  }
  std::vector<double> pooled = attention_pool(emb, model.attention);
  FeatureVector pooled_f;
  pooled_f.dim = static_cast<int>(pooled.size());
  for (std::size_t c = 0; c < pooled.size(); ++c) {
    pooled_f.entries.emplace_back(static_cast<int>(c), pooled[c]);
  }
  std::vector<double> logit = mlp_forward(model.head, pooled_f);
  return sigmoid(logit.at(0));
}

EscalationEval evaluate_escalation(const EscalationModel& model, const Corpus& corpus) {
  EscalationEval eval;
  std::vector<double> scores;
  std::vector<int> labels;
  for (const Conversation& conv : corpus.conversations) {
    if (!conv.escalated.has_value())
      throw Error("evaluate_escalation: conversation '" + conv.conv_id +
                  "' lacks an escalation flag");
    const double p = predict_escalation(model, conv);
    scores.push_back(p);
    labels.push_back(*conv.escalated ? 1 : 0);
    eval.scores.emplace_back(conv.conv_id, p);
  }
  if (scores.empty()) throw Error("evaluate_escalation: empty corpus");
  eval.n = static_cast<long>(scores.size());
  eval.pr_auc = pr_auc(scores, labels);
  return eval;
}

namespace {

ordered_json linear_json(const Linear& layer) {
  return ordered_json{
      {"in", layer.in_dim}, {"out", layer.out_dim}, {"w", layer.w}, {"b", layer.b}};
}

Linear linear_from_json(const json& j) {
  Linear layer = make_linear(j.at("in").get<int>(), j.at("out").get<int>());
  layer.w = j.at("w").get<std::vector<double>>();
  layer.b = j.at("b").get<std::vector<double>>();
  if (layer.w.size() != static_cast<std::size_t>(layer.in_dim) * layer.out_dim ||
      layer.b.size() != static_cast<std::size_t>(layer.out_dim))
    throw Error("checkpoint: layer shape mismatch");
  return layer;
}

ordered_json mlp_json(const MlpParams& params) {
  ordered_json layers = ordered_json::array();
  for (const Linear& layer : params.layers) layers.push_back(linear_json(layer));
  return ordered_json{{"dropout_p", params.dropout_p},
                      {"relu_output", params.relu_output},
                      {"layers", layers}};
}

MlpParams mlp_from_json(const json& j) {
  MlpParams params;
  params.dropout_p = j.at("dropout_p").get<double>();
  params.relu_output = j.at("relu_output").get<bool>();
  for (const json& layer : j.at("layers")) params.layers.push_back(linear_from_json(layer));
  return params;
}

ordered_json catalog_json(const LabelsetCatalog& catalog) {
  ordered_json entries = ordered_json::array();
  for (const LabelsetEntry& e : catalog.entries) {
    entries.push_back(
        ordered_json{{"labels", e.labels.to_names()}, {"frequency", e.frequency}});
  }
  return ordered_json{{"coverage", catalog.coverage}, {"entries", entries}};
}

LabelsetCatalog catalog_from_json(const json& j) {
  LabelsetCatalog catalog;
  catalog.coverage = j.at("coverage").get<double>();
  for (const json& entry : j.at("entries")) {
    LabelsetEntry e;
    for (const json& name : entry.at("labels")) {
      auto t = find_tactic(name.get<std::string>());
      if (!t.has_value())
        throw Error("checkpoint: unknown label '" + name.get<std::string>() + "'");
      e.labels.set(*t);
    }
    e.frequency = entry.at("frequency").get<long>();
    catalog.entries.push_back(e);
  }
  return catalog;
}

std::string aggregate_name(LevelAggregate agg) {
  switch (agg) {
    case LevelAggregate::Max: return "max";
    case LevelAggregate::Median: return "median";
    case LevelAggregate::Min: return "min";
  }
  throw Error("checkpoint: bad level aggregate");
}

LevelAggregate aggregate_from_name(const std::string& name) {
  if (name == "max") return LevelAggregate::Max;
  if (name == "median") return LevelAggregate::Median;
  if (name == "min") return LevelAggregate::Min;
  throw Error("checkpoint: unknown level aggregate '" + name + "'");
}

ordered_json config_json(const TrainConfig& config) {
  return ordered_json{{"learning_rate", config.learning_rate},
                      {"dropout_p", config.dropout_p},
                      {"batch_size", config.batch_size},
                      {"max_epochs", config.max_epochs},
                      {"patience", config.patience},
                      {"seed", config.seed}};
}

TrainConfig config_from_json(const json& j) {
  TrainConfig config;
  config.learning_rate = j.at("learning_rate").get<double>();
  config.dropout_p = j.at("dropout_p").get<double>();
  config.batch_size = j.at("batch_size").get<int>();
  config.max_epochs = j.at("max_epochs").get<int>();
  config.patience = j.at("patience").get<int>();
  config.seed = j.at("seed").get<std::uint64_t>();
  return config;
}

json load_checkpoint(const std::filesystem::path& path) {
  json j = json::parse(read_file(path));
  if (j.at("format_version").get<std::string>() != kCheckpointVersion)
    throw Error("checkpoint: unsupported format version");
  return j;
}

}  // namespace

void save_tactic_model(const TacticModel& model, const std::filesystem::path& path) {
  ordered_json j;
  j["format_version"] = kCheckpointVersion;
  j["kind"] = "tactics";
  j["mode"] = model.mode == TaskMode::BinaryRelevance ? "br" : "lp";
  j["context"] = model.context;
  j["multitask"] = model.multitask;
  j["level_aggregate"] = aggregate_name(model.level_aggregate);
  j["aux_weight"] = model.aux_weight;
  j["hidden_dims"] = model.hidden_dims;
  j["config"] = config_json(model.config);
  j["thresholds"] = model.thresholds;
  j["catalog"] = catalog_json(model.catalog);
  j["encoder"] = mlp_json(model.encoder);
  j["head"] = linear_json(model.head);
  if (model.multitask)
    j["ordinality_head"] = linear_json(model.ordinality_head);
  else
    j["ordinality_head"] = nullptr;
  j["vocab"] = ordered_json::parse(model.vocab.to_json_string());
  write_file(path, j.dump());
}

TacticModel load_tactic_model(const std::filesystem::path& path) {
  json j = load_checkpoint(path);
  if (j.at("kind").get<std::string>() != "tactics")
    throw Error("checkpoint: not a tactic model");
  TacticModel model;
  const std::string mode = j.at("mode").get<std::string>();
  if (mode == "br")
    model.mode = TaskMode::BinaryRelevance;
  else if (mode == "lp")
    model.mode = TaskMode::LabelPowerset;
  else
    throw Error("checkpoint: unknown mode '" + mode + "'");
  model.context = j.at("context").get<bool>();
  model.multitask = j.at("multitask").get<bool>();
  model.level_aggregate = aggregate_from_name(j.at("level_aggregate").get<std::string>());
  model.aux_weight = j.at("aux_weight").get<double>();
  model.hidden_dims = j.at("hidden_dims").get<std::vector<int>>();
  model.config = config_from_json(j.at("config"));
  const auto thresholds = j.at("thresholds").get<std::vector<double>>();
  if (thresholds.size() != static_cast<std::size_t>(kNumTactics))
    throw Error("checkpoint: bad threshold vector");
  std::copy(thresholds.begin(), thresholds.end(), model.thresholds.begin());
  model.catalog = catalog_from_json(j.at("catalog"));
  model.encoder = mlp_from_json(j.at("encoder"));
  model.head = linear_from_json(j.at("head"));
  if (!j.at("ordinality_head").is_null())
    model.ordinality_head = linear_from_json(j.at("ordinality_head"));
  model.vocab = Vocab::from_json_string(j.at("vocab").dump());
  return model;
}

void save_escalation_model(const EscalationModel& model,
                           const std::filesystem::path& path) {
  ordered_json j;
  j["format_version"] = kCheckpointVersion;
  j["kind"] = "escalation";
  j["aux_weight"] = model.aux_weight;
  j["hidden_dims"] = model.hidden_dims;
  j["attention_dim"] = model.attention_dim;
  j["config"] = config_json(model.config);
  j["encoder"] = mlp_json(model.encoder);
  j["attention"] = ordered_json{{"embed_dim", model.attention.embed_dim},
                                {"attn_dim", model.attention.attn_dim},
                                {"w", model.attention.w},
                                {"b", model.attention.b},
                                {"q", model.attention.q}};
  j["head"] = mlp_json(model.head);
  j["aux_head"] = linear_json(model.aux_head);
  j["vocab"] = ordered_json::parse(model.vocab.to_json_string());
  write_file(path, j.dump());
}

EscalationModel load_escalation_model(const std::filesystem::path& path) {
  json j = load_checkpoint(path);
  if (j.at("kind").get<std::string>() != "escalation")
    throw Error("checkpoint: not an escalation model");
  EscalationModel model;
  model.aux_weight = j.at("aux_weight").get<double>();
  model.hidden_dims = j.at("hidden_dims").get<std::vector<int>>();
  model.attention_dim = j.at("attention_dim").get<int>();
  model.config = config_from_json(j.at("config"));
  model.encoder = mlp_from_json(j.at("encoder"));
  const json& a = j.at("attention");
  model.attention.embed_dim = a.at("embed_dim").get<int>();
  model.attention.attn_dim = a.at("attn_dim").get<int>();
  model.attention.w = a.at("w").get<std::vector<double>>();
  model.attention.b = a.at("b").get<std::vector<double>>();
  model.attention.q = a.at("q").get<std::vector<double>>();
  model.head = mlp_from_json(j.at("head"));
  model.aux_head = linear_from_json(j.at("aux_head"));
  model.vocab = Vocab::from_json_string(j.at("vocab").dump());
  return model;
}

std::string checkpoint_kind(const std::filesystem::path& path) {
  return load_checkpoint(path).at("kind").get<std::string>();
}

}  // namespace dispute
