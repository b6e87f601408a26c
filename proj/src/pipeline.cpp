#include "ipr/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "ipr/errors.hpp"
#include "ipr/fp_format.hpp"

namespace ipr {

std::string train_mode_name(TrainMode mode) {
  switch (mode) {
    case TrainMode::Ipr:
      return "ipr";
    case TrainMode::Baseline:
      return "baseline";
    case TrainMode::BaselinePlus:
      return "baseline_plus";
    case TrainMode::Supervised:
      return "supervised";
  }
  throw InputError("train_mode_name: unknown mode");
}

TrainMode train_mode_from_name(const std::string& name) {
  if (name == "ipr") return TrainMode::Ipr;
  if (name == "baseline") return TrainMode::Baseline;
  if (name == "baseline_plus") return TrainMode::BaselinePlus;
  if (name == "supervised") return TrainMode::Supervised;
  throw ConfigError("unknown train mode '" + name + "'");
}

constexpr double kPi = 3.14159265358979323846;

std::string lr_schedule_name(LrSchedule schedule) {
  switch (schedule) {
    case LrSchedule::Constant:
      return "constant";
    case LrSchedule::Cosine:
      return "cosine";
  }
  throw InputError("lr_schedule_name: unknown schedule");
}

LrSchedule lr_schedule_from_name(const std::string& name) {
  if (name == "constant") return LrSchedule::Constant;
  if (name == "cosine") return LrSchedule::Cosine;
  throw ConfigError("unknown lr schedule '" + name + "'");
}

double scheduled_learning_rate(std::size_t epoch, const TrainConfig& config) {
  if (config.lr_schedule == LrSchedule::Constant || config.epochs <= 1) {
    return config.learning_rate;
  }
  const double floor_rate = config.learning_rate / 100.0;
  const double progress =
      static_cast<double>(epoch) / static_cast<double>(config.epochs - 1);
  const double cosine = 0.5 * (1.0 + std::cos(kPi * std::min(progress, 1.0)));
  return floor_rate + (config.learning_rate - floor_rate) * cosine;
}

AugmentationPolicy default_augmentation() {
  AugmentationPolicy policy;
  policy.apply_prob = 0.5;
  policy.noise_sigma = 0.1;
  policy.scale_min = 0.95;
  policy.scale_max = 1.05;
  policy.dropout_rate = 0.0;
  policy.mix_lambda_min = 0.0;
  policy.mix_lambda_max = 0.0;
  return policy;
}

void TrainConfig::validate() const {
  if (epochs == 0) {
    throw ConfigError("train: epochs must be positive");
  }
  if (warmup_epochs >= epochs) {
    throw ConfigError("train: warm-up (" + std::to_string(warmup_epochs) +
                      ") must be shorter than the epoch count (" +
                      std::to_string(epochs) + ")");
  }
  if (batch_size == 0) {
    throw ConfigError("train: batch_size must be positive");
  }
  if (alpha < 0.0 || mu < 0.0 || weight_m < 0.0) {
    throw ConfigError("train: alpha, mu and weight_m must be non-negative");
  }
  if (!(growth_factor > 0.0) || growth_factor == 1.0) {
    throw ConfigError("train: growth_factor must be positive and not equal 1");
  }
  if (!(gamma >= 0.0 && gamma <= 1.0)) {
    throw ConfigError("train: gamma must lie in [0, 1]");
  }
  if (!(tau > 0.0)) {
    throw ConfigError("train: tau must be positive");
  }
  if (!(soft_label_temperature > 0.0)) {
    throw ConfigError("train: soft_label_temperature must be positive");
  }
  if (!(learning_rate > 0.0)) {
    throw ConfigError("train: learning_rate must be positive");
  }
  if (weight_decay < 0.0) {
    throw ConfigError("train: weight_decay must be non-negative");
  }
  if (embedding_dim == 0) {
    throw ConfigError("train: embedding_dim must be positive");
  }
  for (std::size_t w : encoder_hidden) {
    if (w == 0) throw ConfigError("train: encoder hidden width must be positive");
  }
  for (std::size_t w : classifier_hidden) {
    if (w == 0) throw ConfigError("train: classifier hidden width must be positive");
  }
  if (seeds.empty()) {
    throw ConfigError("train: at least one seed is required");
  }
  augmentation.validate();
}

double beta_schedule(std::size_t epoch_c, const TrainConfig& config) {
  const double r = config.growth_factor;
  if (!(r > 0.0) || r == 1.0) {
    throw ConfigError("beta_schedule: growth_factor must be positive and not equal 1");
  }
  if (config.weight_m < 0.0) {
    throw ConfigError("beta_schedule: weight_m must be non-negative");
  }
  if (config.epochs == 0) {
    throw ConfigError("beta_schedule: epochs must be positive");
  }
  if (epoch_c < config.warmup_epochs) {
    return 0.0;
  }
  const double t = static_cast<double>(epoch_c) /
                   (static_cast<double>(config.epochs) / 2.0);
  const double ramp = (std::pow(r, t) - 1.0) / (r - 1.0);
  return std::min(config.weight_m * ramp, config.weight_m);
}

namespace {

// d(loss)/d(raw) for unit = raw / ||raw|| given d(loss)/d(unit).
Vector normalize_backward(const Vector& raw, const Vector& unit,
                          const Vector& grad_unit) {
  const double raw_norm = norm(raw);
  const double along = dot(unit, grad_unit);
  Vector out(raw.size());
  for (std::size_t d = 0; d < raw.size(); ++d) {
    out[d] = (grad_unit[d] - unit[d] * along) / raw_norm;
  }
  return out;
}

}  // namespace

TotalLossResult total_loss(const ModelParams& params,
                           const std::vector<PreciseExample>& precise,
                           const std::vector<AmbiguousExample>& ambiguous,
                           double beta, const TrainConfig& config) {
  if (beta < 0.0) {
    throw InputError("total_loss: beta must be non-negative");
  }
  if (config.alpha > 0.0 && precise.empty()) {
    throw InputError("total_loss: precise batch is empty but alpha > 0");
  }
  TotalLossResult result;
  result.grads = ModelGrads::zeros_like(params);

  if (config.alpha > 0.0) {
    const double inv = 1.0 / static_cast<double>(precise.size());
    for (const PreciseExample& ex : precise) {
      ForwardCache enc_cache;
      ForwardCache cls_cache;
      const Vector emb = encode(params, ex.features, enc_cache);
      const Vector logits = classify(params, emb, cls_cache);
      const CrossEntropy ce = cross_entropy_loss(logits, ex.label);
      result.loss_precise += ce.loss * inv;
      const StackGrads cls_sg =
          backward_stack(params.classifier, cls_cache, ce.logit_grad);
      result.grads.add_scaled_classifier(cls_sg, config.alpha * inv);
      const StackGrads enc_sg =
          backward_stack(params.encoder, enc_cache, cls_sg.input_grad);
      result.grads.add_scaled_encoder(enc_sg, config.alpha * inv);
    }
  }

  const bool want_ce = beta > 0.0 && !ambiguous.empty();
  const bool want_con = config.mu > 0.0 && !ambiguous.empty();
  if (want_ce || want_con) {
    const std::size_t n = ambiguous.size();
    std::vector<ForwardCache> enc_caches(n);
    std::vector<ForwardCache> aug_enc_caches(n);
    std::vector<Vector> raw(n);
    std::vector<Vector> aug_raw(n);
    for (std::size_t i = 0; i < n; ++i) {
      raw[i] = encode(params, ambiguous[i].features, enc_caches[i]);
      if (want_con) {
        aug_raw[i] = encode(params, ambiguous[i].augmented, aug_enc_caches[i]);
      }
    }

    std::vector<Vector> enc_upstream(n, Vector(params.embedding_dim, 0.0));
    std::vector<Vector> aug_upstream;

    if (want_ce) {
      const double inv = 1.0 / static_cast<double>(n);
      for (std::size_t i = 0; i < n; ++i) {
        ForwardCache cls_cache;
        const Vector logits = classify(params, raw[i], cls_cache);
        const CrossEntropy ce =
            cross_entropy_loss(logits, ambiguous[i].pseudo_label);
        result.loss_ambiguous += ce.loss * inv;
        const StackGrads cls_sg =
            backward_stack(params.classifier, cls_cache, ce.logit_grad);
        result.grads.add_scaled_classifier(cls_sg, beta * inv);
        for (std::size_t d = 0; d < enc_upstream[i].size(); ++d) {
          enc_upstream[i][d] += beta * inv * cls_sg.input_grad[d];
        }
      }
    }

    if (want_con) {
      ContrastiveBatch batch;
      batch.temperature = config.tau;
      batch.embeddings.reserve(2 * n);
      batch.pseudo_labels.reserve(2 * n);
      std::vector<Vector> unit(n);
      std::vector<Vector> aug_unit(n);
      for (std::size_t i = 0; i < n; ++i) {
        unit[i] = l2_normalize(raw[i]);
        batch.embeddings.push_back(unit[i]);
        batch.pseudo_labels.push_back(ambiguous[i].pseudo_label);
      }
      for (std::size_t i = 0; i < n; ++i) {
        aug_unit[i] = l2_normalize(aug_raw[i]);
        batch.embeddings.push_back(aug_unit[i]);
        batch.pseudo_labels.push_back(ambiguous[i].aug_pseudo_label);
      }
      const ContrastiveResult con =
          contrastive_loss(batch, config.contrastive_mode);
      result.loss_contrastive = con.loss;
      result.contrastive_skipped_anchors = con.skipped_anchors;
      aug_upstream.assign(n, Vector(params.embedding_dim, 0.0));
      for (std::size_t i = 0; i < n; ++i) {
        const Vector gq =
            normalize_backward(raw[i], unit[i], con.embedding_grads[i]);
        for (std::size_t d = 0; d < gq.size(); ++d) {
          enc_upstream[i][d] += config.mu * gq[d];
        }
        const Vector gqa = normalize_backward(aug_raw[i], aug_unit[i],
                                              con.embedding_grads[n + i]);
        for (std::size_t d = 0; d < gqa.size(); ++d) {
          aug_upstream[i][d] += config.mu * gqa[d];
        }
      }
    }

    for (std::size_t i = 0; i < n; ++i) {
      const StackGrads sg =
          backward_stack(params.encoder, enc_caches[i], enc_upstream[i]);
      result.grads.add_scaled_encoder(sg, 1.0);
    }
    if (want_con) {
      for (std::size_t i = 0; i < n; ++i) {
        const StackGrads sg =
            backward_stack(params.encoder, aug_enc_caches[i], aug_upstream[i]);
        result.grads.add_scaled_encoder(sg, 1.0);
      }
    }
  }

  result.total = config.alpha * result.loss_precise +
                 beta * result.loss_ambiguous +
                 config.mu * result.loss_contrastive;
  if (!std::isfinite(result.total)) {
    throw NumericalError("total_loss: objective is not finite");
  }
  return result;
}

double evaluate(const ModelParams& params,
                const std::vector<FeatureSample>& samples) {
  if (samples.empty()) {
    throw InputError("evaluate: empty sample set");
  }
  std::size_t correct = 0;
  for (const FeatureSample& s : samples) {
    if (!s.label) {
      throw InputError("evaluate: sample '" + s.id + "' carries no label");
    }
    const std::size_t pred =
        argmax_class(classify(params, encode(params, s.features)));
    if (pred == *s.label) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(samples.size());
}

AgreementRates agreement_rates(const ModelParams& params,
                               const PrototypeBank& bank,
                               const SplitDataset& dataset) {
  if (dataset.d2_size() == 0) {
    throw InputError("agreement_rates: D2 is empty");
  }
  AgreementRates rates;
  std::size_t agree_model = 0;
  std::size_t agree_proto = 0;
  for (std::size_t i = 0; i < dataset.d2_size(); ++i) {
    const auto truth = dataset.d2_truth(i);
    if (!truth) continue;
    const Vector q = encode(params, dataset.d2_view(i).features);
    const std::size_t model_label = argmax_class(classify(params, q));
    const std::size_t proto_label =
        bank.pseudo_label(l2_normalize(q)).class_index;
    ++rates.counted;
    if (model_label == *truth) ++agree_model;
    if (proto_label == *truth) ++agree_proto;
  }
  if (rates.counted > 0) {
    rates.model = static_cast<double>(agree_model) /
                  static_cast<double>(rates.counted);
    rates.prototype = static_cast<double>(agree_proto) /
                      static_cast<double>(rates.counted);
  }
  return rates;
}

std::vector<PseudoLabelRow> pseudo_label_report(const ModelParams& params,
                                                const PrototypeBank& bank,
                                                const SplitDataset& dataset) {
  std::vector<PseudoLabelRow> rows;
  rows.reserve(dataset.d2_size());
  for (std::size_t i = 0; i < dataset.d2_size(); ++i) {
    const Vector q = encode(params, dataset.d2_view(i).features);
    const Vector k = l2_normalize(q);
    SoftLabel soft = bank.soft_label(k);
    const PseudoLabel pl = bank.pseudo_label(k);
    PseudoLabelRow row;
    row.id = dataset.d2_id(i);
    row.soft_weights = std::move(soft.weights);
    row.pseudo_label = pl.class_index;
    row.confidence = pl.confidence;
    row.model_label = argmax_class(classify(params, q));
    row.ground_truth = dataset.d2_truth(i);
    rows.push_back(std::move(row));
  }
  return rows;
}

namespace {

std::size_t ceil_div(std::size_t a, std::size_t b) {
  return (a + b - 1) / b;
}

// Deterministic order provider over [0, n): shuffles, deals, reshuffles on
// exhaustion, so consumption depends only on its own stream.
class Cycler {
 public:
  Cycler(std::size_t n, RngStream rng) : n_(n), rng_(std::move(rng)) {
    if (n_ == 0) {
      throw InputError("train: cannot cycle over an empty sample set");
    }
    refill();
  }

  std::size_t next() {
    if (pos_ == order_.size()) refill();
    return order_[pos_++];
  }

 private:
  void refill() {
    order_.resize(n_);
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    rng_.shuffle(order_);
    pos_ = 0;
  }

  std::size_t n_;
  RngStream rng_;
  std::vector<std::size_t> order_;
  std::size_t pos_ = 0;
};

struct GateInfo {
  Vector unit;
  SoftLabel soft;
  std::size_t pred = 0;
  std::size_t aug_pred = 0;
};

}  // namespace

TrainRunResult train_run(const SplitDataset& dataset, const TrainConfig& user_config,
                         std::uint64_t seed, const EpochCallback& on_epoch) {
  TrainConfig cfg = user_config;
  cfg.validate();
  if (dataset.feature_dim() == 0 || dataset.d1().empty()) {
    throw InputError("train: dataset has no usable D1 samples");
  }

  TrainMode mode = cfg.mode;
  bool degraded = false;
  if ((mode == TrainMode::Ipr || mode == TrainMode::BaselinePlus) &&
      dataset.d2_size() == 0) {
    mode = TrainMode::Baseline;  // nothing ambiguous to learn from
    degraded = true;
  }

  ModelConfig mc;
  mc.input_dim = dataset.feature_dim();
  mc.encoder_hidden = cfg.encoder_hidden;
  mc.embedding_dim = cfg.embedding_dim;
  mc.classifier_hidden = cfg.classifier_hidden;
  mc.class_count = dataset.class_count();

  RngStream root(seed);
  RngStream init_rng = root.fork(1);
  RngStream d1_rng = root.fork(2);
  RngStream d2_rng = root.fork(3);
  RngStream aug_rng = root.fork(4);

  ModelParams params = ModelParams::init(mc, init_rng);
  AdamWConfig opt_cfg;
  opt_cfg.learning_rate = cfg.learning_rate;
  opt_cfg.weight_decay = cfg.weight_decay;
  AdamW optimizer(params, opt_cfg);

  const std::size_t batch = cfg.batch_size;
  const std::size_t d1_n = dataset.d1().size();
  const std::size_t d2_n = dataset.d2_size();
  const bool is_supervised = mode == TrainMode::Supervised;
  const bool uses_d2_batches =
      mode == TrainMode::Ipr || mode == TrainMode::BaselinePlus;

  Cycler main_cycler(is_supervised ? d1_n + d2_n : d1_n, d1_rng);
  std::optional<Cycler> d2_cycler;
  if (uses_d2_batches) {
    d2_cycler.emplace(d2_n, d2_rng);
  }

  PrototypeOptions proto_opts;
  proto_opts.gamma = cfg.gamma;
  proto_opts.soft_label_mode = cfg.soft_label_mode;
  proto_opts.soft_temperature = cfg.soft_label_temperature;
  proto_opts.update_all_classes = cfg.update_all_classes;
  std::optional<PrototypeBank> bank;
  auto init_bank = [&]() {
    std::vector<Vector> embeddings;
    std::vector<std::size_t> labels;
    embeddings.reserve(d1_n);
    labels.reserve(d1_n);
    for (const FeatureSample& s : dataset.d1()) {
      embeddings.push_back(encode(params, s.features));
      labels.push_back(*s.label);
    }
    bank = PrototypeBank::initialize(embeddings, labels, dataset.class_count(),
                                     proto_opts);
  };

  // Every term the current mode does not use carries a hard zero so skipped
  // computations cannot leak into the objective.
  TrainConfig eff_cfg = cfg;
  if (mode != TrainMode::Ipr) {
    eff_cfg.mu = 0.0;
  }

  auto steps_for = [&](std::size_t ep) -> std::size_t {
    if (is_supervised) return ceil_div(d1_n + d2_n, batch);
    if (ep < cfg.warmup_epochs) return ceil_div(d1_n, batch);
    if (d2_n > 0) return ceil_div(d2_n, batch);
    return ceil_div(d1_n, batch);
  };

  TrainRunResult result;
  result.metrics.seed = seed;
  result.metrics.mode = mode;
  result.warmup_params = params;
  result.degraded_to_baseline = degraded;

  for (std::size_t ep = 0; ep < cfg.epochs; ++ep) {
    if (ep == cfg.warmup_epochs) {
      result.warmup_params = params;
      if (mode == TrainMode::Ipr) init_bank();
    } else if (mode == TrainMode::Ipr && cfg.reinit_prototypes_each_epoch &&
               ep > cfg.warmup_epochs) {
      init_bank();
    }

    optimizer.set_learning_rate(scheduled_learning_rate(ep, cfg));
    const double beta = beta_schedule(ep, cfg);
    const bool in_warmup = !is_supervised && ep < cfg.warmup_epochs;
    const bool d2_phase = uses_d2_batches && !in_warmup;

    double sum_precise = 0.0;
    double sum_ambiguous = 0.0;
    double sum_contrastive = 0.0;
    std::size_t ambiguous_steps = 0;
    const std::size_t steps = steps_for(ep);

    for (std::size_t step = 0; step < steps; ++step) {
      std::vector<PreciseExample> precise;
      precise.reserve(batch);
      for (std::size_t b = 0; b < batch; ++b) {
        const std::size_t idx = main_cycler.next();
        if (is_supervised && idx >= d1_n) {
          const std::size_t j = idx - d1_n;
          const auto truth = dataset.d2_truth(j);
          if (!truth) {
            throw InputError("train: supervised mode needs ground truth for "
                             "D2 sample '" + dataset.d2_id(j) + "'");
          }
          precise.push_back({dataset.d2_view(j).features, *truth});
        } else {
          const FeatureSample& s = dataset.d1()[idx];
          precise.push_back({s.features, *s.label});
        }
      }

      std::vector<AmbiguousExample> ambiguous;
      std::vector<GateInfo> gates;
      double eff_beta = 0.0;
      if (d2_phase) {
        eff_beta = beta;
        std::vector<Vector> feats(batch);
        for (std::size_t b = 0; b < batch; ++b) {
          feats[b] = dataset.d2_view(d2_cycler->next()).features;
        }
        if (mode == TrainMode::BaselinePlus) {
          for (std::size_t b = 0; b < batch; ++b) {
            const std::size_t self_label =
                argmax_class(classify(params, encode(params, feats[b])));
            AmbiguousExample ex;
            ex.features = feats[b];
            ex.augmented = feats[b];
            ex.pseudo_label = self_label;
            ex.aug_pseudo_label = self_label;
            ambiguous.push_back(std::move(ex));
          }
        } else {
          ambiguous.reserve(batch);
          gates.reserve(batch);
          for (std::size_t b = 0; b < batch; ++b) {
            const Vector* partner = nullptr;
            if (batch > 1) {
              const std::size_t off = aug_rng.next_index(batch - 1);
              partner = &feats[off >= b ? off + 1 : off];
            }
            Vector augmented =
                augment(feats[b], cfg.augmentation, aug_rng, partner);
            const Vector q = encode(params, feats[b]);
            const Vector qa = encode(params, augmented);
            Vector k = l2_normalize(q);
            const Vector ka = l2_normalize(qa);
            SoftLabel soft = bank->soft_label(k);
            const PseudoLabel pl = bank->pseudo_label(k);
            const PseudoLabel pla = bank->pseudo_label(ka);
            AmbiguousExample ex;
            ex.features = feats[b];
            ex.augmented = std::move(augmented);
            ex.pseudo_label = pl.class_index;
            ex.aug_pseudo_label = pla.class_index;
            ambiguous.push_back(std::move(ex));
            GateInfo gate;
            gate.unit = std::move(k);
            gate.soft = std::move(soft);
            gate.pred = argmax_class(classify(params, q));
            gate.aug_pred = argmax_class(classify(params, qa));
            gates.push_back(std::move(gate));
          }
        }
      }

      const TotalLossResult step_loss =
          total_loss(params, precise, ambiguous, eff_beta, eff_cfg);
      optimizer.step(params, step_loss.grads);

      // Prototype refinement uses the pre-step embeddings cached above and
      // runs strictly after the optimizer step, in sample order.
      for (const GateInfo& gate : gates) {
        bank->gated_update(gate.unit, gate.soft, gate.pred, gate.aug_pred);
      }

      sum_precise += step_loss.loss_precise;
      if (d2_phase) {
        sum_ambiguous += step_loss.loss_ambiguous;
        sum_contrastive += step_loss.loss_contrastive;
        ++ambiguous_steps;
      }
    }

    EpochMetrics em;
    em.epoch = ep;
    em.beta = beta;
    em.loss_precise = sum_precise / static_cast<double>(steps);
    em.loss_ambiguous =
        ambiguous_steps ? sum_ambiguous / static_cast<double>(ambiguous_steps)
                        : 0.0;
    em.loss_contrastive =
        ambiguous_steps ? sum_contrastive / static_cast<double>(ambiguous_steps)
                        : 0.0;
    em.accuracy = dataset.d3().empty()
                      ? std::numeric_limits<double>::quiet_NaN()
                      : evaluate(params, dataset.d3());
    if (mode == TrainMode::Ipr && bank && d2_n > 0) {
      const AgreementRates rates = agreement_rates(params, *bank, dataset);
      if (rates.counted > 0) {
        em.agreement_model = rates.model;
        em.agreement_prototype = rates.prototype;
      }
      em.prototype_similarity = bank->pairwise_similarity();
    } else if (mode == TrainMode::BaselinePlus && d2_n > 0) {
      std::size_t counted = 0;
      std::size_t agree = 0;
      for (std::size_t i = 0; i < d2_n; ++i) {
        const auto truth = dataset.d2_truth(i);
        if (!truth) continue;
        ++counted;
        const std::size_t pred = argmax_class(
            classify(params, encode(params, dataset.d2_view(i).features)));
        if (pred == *truth) ++agree;
      }
      if (counted > 0) {
        em.agreement_model =
            static_cast<double>(agree) / static_cast<double>(counted);
      }
    }
    result.metrics.epochs.push_back(std::move(em));
    if (on_epoch) {
      on_epoch(result.metrics.epochs.back());
    }
  }

  result.metrics.final_accuracy = result.metrics.epochs.back().accuracy;
  if (mode == TrainMode::Ipr && bank && d2_n > 0) {
    result.pseudo_report = pseudo_label_report(params, *bank, dataset);
  }
  result.params = std::move(params);
  result.optimizer = std::move(optimizer);
  result.bank = std::move(bank);
  return result;
}

TrainRunResult train_ipr(const SplitDataset& dataset, TrainConfig config,
                         std::uint64_t seed, const EpochCallback& on_epoch) {
  config.mode = TrainMode::Ipr;
  return train_run(dataset, config, seed, on_epoch);
}

TrainRunResult train_baseline(const SplitDataset& dataset, TrainConfig config,
                              std::uint64_t seed, TrainMode baseline_kind,
                              const EpochCallback& on_epoch) {
  if (baseline_kind == TrainMode::Ipr) {
    throw ConfigError("train_baseline: baseline_kind must be baseline, "
                      "baseline_plus or supervised");
  }
  config.mode = baseline_kind;
  return train_run(dataset, config, seed, on_epoch);
}

MultiSeedResult multi_seed(const SplitDataset& dataset,
                           const TrainConfig& config,
                           const SeedEpochCallback& on_epoch) {
  config.validate();
  MultiSeedResult out;
  std::vector<double> finals;
  for (const std::uint64_t seed : config.seeds) {
    SeedOutcome outcome;
    outcome.seed = seed;
    try {
      EpochCallback cb;
      if (on_epoch) {
        cb = [&, seed](const EpochMetrics& em) { on_epoch(seed, em); };
      }
      TrainRunResult r = train_run(dataset, config, seed, cb);
      outcome.ok = true;
      finals.push_back(r.metrics.final_accuracy);
      outcome.result = std::move(r);
    } catch (const std::exception& e) {
      outcome.ok = false;
      outcome.error = e.what();
      ++out.failed;
    }
    out.outcomes.push_back(std::move(outcome));
  }
  if (finals.empty()) {
    std::string first;
    for (const SeedOutcome& o : out.outcomes) {
      if (!o.ok) {
        first = o.error;
        break;
      }
    }
    throw NumericalError("multi_seed: every seed failed; first error: " + first);
  }
  double mean = 0.0;
  for (double a : finals) mean += a;
  mean /= static_cast<double>(finals.size());
  double var = 0.0;
  if (finals.size() > 1) {
    for (double a : finals) {
      var += (a - mean) * (a - mean);
    }
    var /= static_cast<double>(finals.size() - 1);
  }
  out.mean_final_accuracy = mean;
  out.std_final_accuracy = std::sqrt(var);
  return out;
}

}  // namespace ipr
