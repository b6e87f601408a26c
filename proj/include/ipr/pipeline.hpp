#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "ipr/contrastive.hpp"
#include "ipr/data.hpp"
#include "ipr/model.hpp"
#include "ipr/prototypes.hpp"

namespace ipr {

// ipr:           D1 cross-entropy + prototype-pseudo-labeled D2 cross-entropy
//                + contrastive term, with gated prototype refinement.
// baseline:      cross-entropy on D1 only; never reads a D2 record.
// baseline_plus: adds D2 cross-entropy against the model's own argmax labels
//                under the same beta schedule; no prototypes, no contrastive.
// supervised:    cross-entropy on D1 u D2 with ground-truth labels (the
//                evaluation-only D2 labels are explicitly unlocked here).
enum class TrainMode { Ipr, Baseline, BaselinePlus, Supervised };

std::string train_mode_name(TrainMode mode);
TrainMode train_mode_from_name(const std::string& name);

// Per-epoch multiplier on the initial learning rate.  Cosine anneals from 1
// at epoch 0 to 1/100 at the final epoch; Constant keeps the rate fixed.
enum class LrSchedule { Constant, Cosine };

std::string lr_schedule_name(LrSchedule schedule);
LrSchedule lr_schedule_from_name(const std::string& name);

// Learning rate for a 0-based epoch under the given config.
double scheduled_learning_rate(std::size_t epoch, const struct TrainConfig& config);

// Noise + scale + dropout + convex-mix policy used on ambiguous samples.
AugmentationPolicy default_augmentation();

struct TrainConfig {
  TrainMode mode = TrainMode::Ipr;

  std::size_t epochs = 50;  // epoch_m
  std::size_t warmup_epochs = 10;
  std::size_t batch_size = 8;

  // Objective weights: total = alpha * L_precise + beta(t) * L_ambiguous
  //                            + mu * L_contrastive.
  double alpha = 1.0;
  double mu = 0.2;

  // Beta schedule: min(weight_m * (r^t - 1) / (r - 1), weight_m) with
  // t = epoch / (epochs / 2); zero during warm-up.
  double weight_m = 0.5;
  double growth_factor = 5.0;  // r; must be positive and != 1

  double gamma = 0.99;  // prototype momentum
  double tau = 0.07;    // contrastive temperature
  double soft_label_temperature = 0.1;
  SoftLabelMode soft_label_mode = SoftLabelMode::Softmax;
  ContrastiveMode contrastive_mode = ContrastiveMode::Supervised;
  bool update_all_classes = false;
  bool reinit_prototypes_each_epoch = false;  // ablation switch

  double learning_rate = 2e-3;  // initial rate; see lr_schedule
  double weight_decay = 0.05;
  LrSchedule lr_schedule = LrSchedule::Cosine;

  std::vector<std::size_t> encoder_hidden = {128, 64};
  std::size_t embedding_dim = 16;
  std::vector<std::size_t> classifier_hidden;  // empty: single linear layer

  AugmentationPolicy augmentation = default_augmentation();

  std::vector<std::uint64_t> seeds = {1, 2, 3, 4, 5};

  void validate() const;
};

// Scheduled weight of the ambiguous cross-entropy term for a 0-based epoch.
double beta_schedule(std::size_t epoch_c, const TrainConfig& config);

struct PreciseExample {
  Vector features;
  std::size_t label = 0;
};

struct AmbiguousExample {
  Vector features;
  Vector augmented;
  std::size_t pseudo_label = 0;      // target for the ambiguous CE term
  std::size_t aug_pseudo_label = 0;  // label of the augmented view
};

struct TotalLossResult {
  double total = 0.0;
  double loss_precise = 0.0;      // unweighted component means
  double loss_ambiguous = 0.0;
  double loss_contrastive = 0.0;
  std::size_t contrastive_skipped_anchors = 0;
  ModelGrads grads;
};

// One optimization step's objective and parameter gradients.  Components with
// a zero coefficient (or an empty ambiguous batch) are skipped entirely and
// reported as 0, so degenerate settings reduce bit-exactly to the remaining
// terms.  Pseudo labels must already be assigned to the ambiguous batch.
TotalLossResult total_loss(const ModelParams& params,
                           const std::vector<PreciseExample>& precise,
                           const std::vector<AmbiguousExample>& ambiguous,
                           double beta, const TrainConfig& config);

struct EpochMetrics {
  std::size_t epoch = 0;
  double accuracy = 0.0;  // on D3; NaN when D3 is empty
  double beta = 0.0;      // scheduled value for this epoch
  double loss_precise = 0.0;
  double loss_ambiguous = 0.0;
  double loss_contrastive = 0.0;
  std::optional<double> agreement_model;      // vs D2 ground truth
  std::optional<double> agreement_prototype;  // vs D2 ground truth
  std::optional<Matrix> prototype_similarity;
};

struct RunMetrics {
  std::uint64_t seed = 0;
  TrainMode mode = TrainMode::Ipr;
  std::vector<EpochMetrics> epochs;
  double final_accuracy = 0.0;
};

struct PseudoLabelRow {
  std::string id;
  Vector soft_weights;
  std::size_t pseudo_label = 0;
  double confidence = 0.0;
  std::size_t model_label = 0;
  std::optional<std::size_t> ground_truth;
};

struct TrainRunResult {
  RunMetrics metrics;
  ModelParams params;
  std::optional<AdamW> optimizer;
  std::optional<PrototypeBank> bank;
  std::vector<PseudoLabelRow> pseudo_report;  // ipr runs only
  ModelParams warmup_params;  // parameter snapshot at warm-up end
  bool degraded_to_baseline = false;  // ipr/baseline_plus asked for but D2 empty
};

using EpochCallback = std::function<void(const EpochMetrics&)>;

// Runs one seed in the configured mode.  All randomness derives from `seed`
// through purpose-split streams (init / D1 order / D2 order / augmentation),
// so modes that ignore a stream stay bit-identical to modes that consume it.
TrainRunResult train_run(const SplitDataset& dataset, const TrainConfig& config,
                         std::uint64_t seed,
                         const EpochCallback& on_epoch = nullptr);

// Convenience wrappers pinning the mode.
TrainRunResult train_ipr(const SplitDataset& dataset, TrainConfig config,
                         std::uint64_t seed,
                         const EpochCallback& on_epoch = nullptr);
TrainRunResult train_baseline(const SplitDataset& dataset, TrainConfig config,
                              std::uint64_t seed, TrainMode baseline_kind,
                              const EpochCallback& on_epoch = nullptr);

// Fraction of samples whose classifier argmax matches the stored label.
double evaluate(const ModelParams& params,
                const std::vector<FeatureSample>& samples);

struct AgreementRates {
  double model = 0.0;
  double prototype = 0.0;
  std::size_t counted = 0;  // D2 samples carrying ground truth
};

// Computes both rates from one embedding pass over D2, so the comparison is
// between identical model snapshots.
AgreementRates agreement_rates(const ModelParams& params,
                               const PrototypeBank& bank,
                               const SplitDataset& dataset);

// Final prototype/classifier assignments for every D2 sample, in stored
// order.  Deterministic in (params, bank, dataset).
std::vector<PseudoLabelRow> pseudo_label_report(const ModelParams& params,
                                                const PrototypeBank& bank,
                                                const SplitDataset& dataset);

struct SeedOutcome {
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;  // failure reason when !ok
  std::optional<TrainRunResult> result;
};

struct MultiSeedResult {
  std::vector<SeedOutcome> outcomes;
  double mean_final_accuracy = 0.0;
  double std_final_accuracy = 0.0;  // sample std over surviving seeds
  std::size_t failed = 0;
};

using SeedEpochCallback =
    std::function<void(std::uint64_t seed, const EpochMetrics&)>;

// Sequential multi-seed driver; per-seed failures are recorded and the
// aggregate covers the survivors.  Throws only if every seed fails.
MultiSeedResult multi_seed(const SplitDataset& dataset,
                           const TrainConfig& config,
                           const SeedEpochCallback& on_epoch = nullptr);

}  // namespace ipr
