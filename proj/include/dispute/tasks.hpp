#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dispute/corpus.hpp"
#include "dispute/features.hpp"
#include "dispute/neural.hpp"
#include "dispute/taxonomy.hpp"

namespace dispute {

enum class TaskMode { BinaryRelevance, LabelPowerset };

struct LabelsetEntry {
  LabelVector labels;
  long frequency = 0;
};

// Truncated label-powerset class space: the k most frequent training
// labelsets, descending frequency, ties broken by canonical vector order.
struct LabelsetCatalog {
  std::vector<LabelsetEntry> entries;
  double coverage = 0.0;  // fraction of train utterances covered exactly

  int size() const { return static_cast<int>(entries.size()); }
  std::optional<int> find_exact(const LabelVector& labels) const;
};

LabelsetCatalog build_catalog(const Corpus& train, int k = 20);

// Exact match if present, else the largest non-empty subset in the catalog;
// ties prefer the higher-frequency (earlier) entry.
std::optional<int> map_to_catalog(const LabelVector& labels,
                                  const LabelsetCatalog& catalog);

struct TacticExample {
  FeatureVector features;
  LabelVector gold;
  int lp_class = -1;  // catalog index; -1 when unmappable
  Ordinality ordinality = Ordinality::Coordination;
};

enum class SplitRole { Train, Eval };

// One example per utterance. In LabelPowerset mode utterances whose labelset
// cannot be mapped into the catalog are dropped for Train and kept (with
// lp_class -1 and the full gold vector) for Eval.
std::vector<TacticExample> make_training_set(const Corpus& corpus, TaskMode mode,
                                             bool context, bool multitask,
                                             const Vocab& vocab,
                                             const LabelsetCatalog* catalog,
                                             SplitRole role,
                                             LevelAggregate agg = LevelAggregate::Max);

struct TacticModel {
  TaskMode mode = TaskMode::BinaryRelevance;
  bool context = false;
  bool multitask = false;
  LevelAggregate level_aggregate = LevelAggregate::Max;
  double aux_weight = 1.0;
  std::vector<int> hidden_dims;
  MlpParams encoder;  // shared trunk, ReLU output feeding the heads
  Linear head;        // 18 sigmoid logits (BR) or catalog-size SoftMax logits (LP)
  Linear ordinality_head;  // 4-way SoftMax; in_dim 0 when not multitask
  std::array<double, kNumTactics> thresholds{};
  Vocab vocab;
  LabelsetCatalog catalog;
  TrainConfig config;
  TrainHistory history;  // in-memory only, not serialized
};

// Gradient container: same shapes, zero values, same head layout flags.
TacticModel zeros_like(const TacticModel& model);

struct TacticTrainOptions {
  TrainConfig config;
  std::vector<int> hidden_dims = {256, 128};
  TaskMode mode = TaskMode::BinaryRelevance;
  bool context = false;
  bool multitask = false;
  double aux_weight = 1.0;
  int catalog_k = 20;
  LevelAggregate level_aggregate = LevelAggregate::Max;
  long vocab_min_freq = 2;
  long vocab_max_size = 10000;
  bool calibrate = true;  // dev-set threshold calibration (BR only)
};

TacticModel train_tactics(const Corpus& train, const Corpus& dev,
                          const TacticTrainOptions& options);

// Mean loss over a batch; fills `grads` (zeroed, same shapes) when given.
// Dropout is active only when dropout_rng is non-null.
double tactic_batch_loss(const TacticModel& model, std::span<const TacticExample> batch,
                         TacticModel* grads, Rng* dropout_rng = nullptr);

std::vector<std::span<double>> param_views(TacticModel& model);
std::vector<std::span<const double>> grad_views(const TacticModel& model);

// Sigmoid scores of the 18 labels for one feature vector (BR mode).
std::array<double, kNumTactics> tactic_scores(const TacticModel& model,
                                              const FeatureVector& features);

std::vector<LabelVector> predict_tactics(const TacticModel& model,
                                         const Conversation& conv);

// Grid {0.05..0.95 step 0.05}, one coordinate-wise pass in canonical label
// order from 0.5, maximizing dev Jaccard; ties keep the lower threshold.
std::array<double, kNumTactics> calibrate_thresholds(const TacticModel& model,
                                                     const Corpus& dev);

double emr(std::span<const LabelVector> preds, std::span<const LabelVector> golds);
double hamming_loss(std::span<const LabelVector> preds,
                    std::span<const LabelVector> golds);
double jaccard(std::span<const LabelVector> preds, std::span<const LabelVector> golds);
double at_least_one_correct(std::span<const LabelVector> preds,
                            std::span<const LabelVector> golds);
std::vector<double> per_sample_jaccard(std::span<const LabelVector> preds,
                                       std::span<const LabelVector> golds);

double multitask_loss(double main_loss, double ordinality_loss, double weight);

// Area under the precision-recall curve; descending-score sweep with tied
// scores grouped into one operating point.
double pr_auc(std::span<const double> scores, std::span<const int> labels);

struct EvalReport {
  long n_samples = 0;
  double jaccard = 0.0;
  double hamming = 0.0;
  double emr = 0.0;
  double at_least_one = 0.0;
  std::array<long, kNumTactics> gold_label_counts{};
  std::array<long, kNumTactics> pred_label_counts{};
  std::array<long, kNumTactics> correct_label_counts{};
  std::vector<double> per_sample_jaccard;
};

EvalReport evaluate_tactics(const TacticModel& model, const Corpus& corpus);

struct EscalationModel {
  double aux_weight = 1.0;
  std::vector<int> hidden_dims;
  int attention_dim = 0;
  MlpParams encoder;        // per-utterance trunk, ReLU output
  AttentionParams attention;
  MlpParams head;           // pooled embedding -> ... -> 1 escalation logit
  Linear aux_head;          // per-utterance 18 sigmoid logits
  Vocab vocab;
  TrainConfig config;
  TrainHistory history;  // in-memory only, not serialized
};

EscalationModel zeros_like(const EscalationModel& model);

struct EscalationTrainOptions {
  TrainConfig config;
  std::vector<int> hidden_dims = {256, 128};
  int head_hidden = 64;
  int attention_dim = 64;
  double aux_weight = 1.0;
  long vocab_min_freq = 2;
  long vocab_max_size = 10000;
};

struct EscalationExample {
  std::vector<FeatureVector> utterance_features;
  std::vector<LabelVector> labels;
  bool escalated = false;
};

// Throws when any conversation lacks the escalation flag.
std::vector<EscalationExample> make_escalation_set(const Corpus& corpus,
                                                   const Vocab& vocab);

EscalationModel train_escalation(const Corpus& train, const Corpus& dev,
                                 const EscalationTrainOptions& options);

double escalation_batch_loss(const EscalationModel& model,
                             std::span<const EscalationExample> batch,
                             EscalationModel* grads, Rng* dropout_rng = nullptr);

std::vector<std::span<double>> param_views(EscalationModel& model);
std::vector<std::span<const double>> grad_views(const EscalationModel& model);

double predict_escalation(const EscalationModel& model, const Conversation& conv);

struct EscalationEval {
  long n = 0;
  double pr_auc = 0.0;
  std::vector<std::pair<std::string, double>> scores;  // conv_id -> probability
};

EscalationEval evaluate_escalation(const EscalationModel& model, const Corpus& corpus);

// Versioned JSON checkpoints.
void save_tactic_model(const TacticModel& model, const std::filesystem::path& path);
TacticModel load_tactic_model(const std::filesystem::path& path);
void save_escalation_model(const EscalationModel& model,
                           const std::filesystem::path& path);
EscalationModel load_escalation_model(const std::filesystem::path& path);

// Peeks at a checkpoint to tell tactic from escalation models.
std::string checkpoint_kind(const std::filesystem::path& path);

}  // namespace dispute
