// Acceptance suite: one pass/fail line per criterion, exit code = number of
// failed criteria.  Heavier end-to-end checks (the four-mode comparison on
// the default synthetic task) live here rather than in the unit tests.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "ipr/contrastive.hpp"
#include "ipr/data.hpp"
#include "ipr/model.hpp"
#include "ipr/numerics.hpp"
#include "ipr/pipeline.hpp"
#include "ipr/prototypes.hpp"
#include "ipr/rng.hpp"
#include "ipr/run_io.hpp"
#include "oracles.hpp"

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

bool grad_close(double analytic, double numeric) {
  const double diff = std::fabs(analytic - numeric);
  if (diff <= 1e-7) return true;
  return diff <= 1e-4 * std::max(std::fabs(analytic), std::fabs(numeric));
}

// ---------------------------------------------------------------------------
// 1. Gradient oracles: cross-entropy, contrastive (both modes), and the total
//    objective against central finite differences.

bool criterion_gradients(std::string& detail) {
  const auto start = Clock::now();
  std::size_t checked = 0;
  std::size_t failed = 0;
  std::size_t max_params = 0;

  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    ipr::RngStream rng(seed * 101);

    // A small but non-trivial net: hidden encoder layer, nonlinearity, and a
    // classifier head.
    ipr::ModelConfig mc;
    mc.input_dim = 5;
    mc.encoder_hidden = {6};
    mc.embedding_dim = 4;
    mc.class_count = 3;
    ipr::RngStream init_rng(seed);
    ipr::ModelParams params = ipr::ModelParams::init(mc, init_rng);
    max_params = std::max(max_params, params.parameter_count());

    std::vector<ipr::PreciseExample> precise;
    for (int i = 0; i < 3; ++i) {
      precise.push_back({rng.gaussian_vector(5), rng.next_index(3)});
    }
    std::vector<ipr::AmbiguousExample> ambiguous(2);
    for (auto& ex : ambiguous) {
      ex.features = rng.gaussian_vector(5);
      ex.augmented = rng.gaussian_vector(5);
      ex.pseudo_label = rng.next_index(3);
      ex.aug_pseudo_label = ex.pseudo_label;
    }

    ipr::TrainConfig cfg;
    cfg.alpha = 1.0;

    // (a) Cross-entropy path alone (beta = 0, mu = 0).
    {
      cfg.mu = 0.0;
      ipr::TotalLossResult res =
          ipr::total_loss(params, precise, ambiguous, 0.0, cfg);
      auto f = [&](const ipr::ModelParams& p) {
        return ipr::total_loss(p, precise, ambiguous, 0.0, cfg).total;
      };
      std::vector<double> analytic = oracle::flatten_grads(res.grads);
      std::vector<double> numeric = oracle::fd_param_gradient(params, f, 1e-5);
      for (std::size_t i = 0; i < analytic.size(); ++i) {
        ++checked;
        if (!grad_close(analytic[i], numeric[i])) ++failed;
      }
    }

    // (b) Contrastive loss in both modes across the temperature sweep,
    //     gradients taken with respect to the embeddings.
    for (ipr::ContrastiveMode mode : {ipr::ContrastiveMode::Supervised,
                                      ipr::ContrastiveMode::PairwiseNtXent}) {
      for (double tau : {0.05, 0.1, 0.5}) {
        ipr::ContrastiveBatch batch;
        batch.temperature = tau;
        for (int i = 0; i < 8; ++i) {
          batch.embeddings.push_back(ipr::l2_normalize(rng.gaussian_vector(4)));
        }
        for (int i = 0; i < 4; ++i) {
          batch.pseudo_labels.push_back(rng.next_index(2));
        }
        for (int i = 0; i < 4; ++i) {
          batch.pseudo_labels.push_back(batch.pseudo_labels[i]);
        }
        ipr::ContrastiveResult res = ipr::contrastive_loss(batch, mode);
        for (std::size_t e = 0; e < batch.embeddings.size(); ++e) {
          for (std::size_t d = 0; d < 4; ++d) {
            ipr::ContrastiveBatch plus = batch;
            ipr::ContrastiveBatch minus = batch;
            plus.embeddings[e][d] += 1e-6;
            minus.embeddings[e][d] -= 1e-6;
            const double numeric = (ipr::contrastive_loss(plus, mode).loss -
                                    ipr::contrastive_loss(minus, mode).loss) /
                                   2e-6;
            ++checked;
            if (!grad_close(res.embedding_grads[e][d], numeric)) ++failed;
          }
        }
      }
    }

    // (c) The full objective (all three terms active) against finite
    //     differences over every parameter.
    {
      cfg.mu = 0.3;
      cfg.tau = 0.1;
      const double beta = 0.4;
      ipr::TotalLossResult res =
          ipr::total_loss(params, precise, ambiguous, beta, cfg);
      auto f = [&](const ipr::ModelParams& p) {
        return ipr::total_loss(p, precise, ambiguous, beta, cfg).total;
      };
      std::vector<double> analytic = oracle::flatten_grads(res.grads);
      std::vector<double> numeric = oracle::fd_param_gradient(params, f, 1e-5);
      for (std::size_t i = 0; i < analytic.size(); ++i) {
        ++checked;
        if (!grad_close(analytic[i], numeric[i])) ++failed;
      }
    }
  }

  const double elapsed = seconds_since(start);
  char buf[160];
  std::snprintf(buf, sizeof(buf),
                "%zu comparisons, %zu mismatches, %zu params, %.1fs", checked,
                failed, max_params, elapsed);
  detail = buf;
  return failed == 0 && max_params <= 500 && elapsed < 60.0;
}

// ---------------------------------------------------------------------------
// 2. Prototype invariants.

bool criterion_prototypes(std::string& detail) {
  const auto start = Clock::now();
  bool ok = true;

  ipr::RngStream rng(404);
  std::vector<ipr::Vector> embeddings;
  std::vector<std::size_t> labels;
  for (int i = 0; i < 20; ++i) {
    embeddings.push_back(ipr::l2_normalize(rng.gaussian_vector(8)));
    labels.push_back(static_cast<std::size_t>(i % 4));
  }
  ipr::PrototypeBank bank =
      ipr::PrototypeBank::initialize(embeddings, labels, 4, {});
  double worst = 0.0;
  for (std::size_t c = 0; c < 4; ++c) {
    worst = std::max(worst, std::fabs(ipr::norm(bank.prototype(c)) - 1.0));
  }
  if (worst > 1e-10) ok = false;

  for (int step = 0; step < 10000; ++step) {
    ipr::Vector k = ipr::l2_normalize(rng.gaussian_vector(8));
    bank.gated_update(k, bank.soft_label(k), rng.next_index(4),
                      rng.next_index(4));
  }
  for (std::size_t c = 0; c < 4; ++c) {
    worst = std::max(worst, std::fabs(ipr::norm(bank.prototype(c)) - 1.0));
  }
  if (worst > 1e-10) ok = false;

  // Closed gate: bit identity.
  {
    ipr::PrototypeBank probe = bank;
    const ipr::Vector before = probe.prototype(1);
    ipr::Vector k = ipr::l2_normalize(rng.gaussian_vector(8));
    if (probe.gated_update(k, probe.soft_label(k), 1, 2)) ok = false;
    if (probe.prototype(1) != before) ok = false;
  }

  // Gamma = 1: identity even with the gate open.
  {
    ipr::PrototypeOptions options;
    options.gamma = 1.0;
    ipr::PrototypeBank frozen =
        ipr::PrototypeBank::initialize(embeddings, labels, 4, options);
    const ipr::Vector before = frozen.prototype(2);
    ipr::Vector k = ipr::l2_normalize(rng.gaussian_vector(8));
    if (!frozen.gated_update(k, frozen.soft_label(k), 2, 2)) ok = false;
    if (frozen.prototype(2) != before) ok = false;
  }

  const double elapsed = seconds_since(start);
  char buf[120];
  std::snprintf(buf, sizeof(buf), "max |norm-1| = %.2e over 10^4 updates, %.2fs",
                worst, elapsed);
  detail = buf;
  return ok && elapsed < 10.0;
}

// ---------------------------------------------------------------------------
// 3. Beta schedule worked values.

bool criterion_beta(std::string& detail) {
  ipr::TrainConfig cfg;  // epochs 50, warm-up 10, weight_m 0.5, r 5
  bool ok = true;

  // Zero during warm-up.
  for (std::size_t ep = 0; ep < cfg.warmup_epochs; ++ep) {
    if (ipr::beta_schedule(ep, cfg) != 0.0) ok = false;
  }
  // Worked value 1: t = 0 outside any warm-up masking.
  ipr::TrainConfig no_warmup = cfg;
  no_warmup.warmup_epochs = 0;
  if (std::fabs(ipr::beta_schedule(0, no_warmup)) > 1e-6) ok = false;
  // Worked value 2: t = 1 gives weight_m exactly.
  if (ipr::beta_schedule(25, cfg) != cfg.weight_m) ok = false;
  // Worked value 3: t = 2 clamps to weight_m.
  if (std::fabs(ipr::beta_schedule(50, cfg) - 0.5) > 1e-6) ok = false;
  // Worked value 4: mid-ramp epoch 10.
  if (std::fabs(ipr::beta_schedule(10, cfg) - 0.11295674233948483) > 1e-6) {
    ok = false;
  }
  // Monotone nondecreasing over the full epoch range.
  double prev = -1.0;
  for (std::size_t ep = 0; ep <= cfg.epochs; ++ep) {
    const double b = ipr::beta_schedule(ep, cfg);
    if (b < prev) ok = false;
    prev = b;
  }

  detail = "beta(10) = " + std::to_string(ipr::beta_schedule(10, cfg)) +
           ", beta(25) = " + std::to_string(ipr::beta_schedule(25, cfg));
  return ok;
}

// ---------------------------------------------------------------------------
// 4/5/6 share the default synthetic task.

struct DefaultTaskRuns {
  double mean_baseline = 0.0;
  double mean_baseline_plus = 0.0;
  double mean_ipr = 0.0;
  double mean_supervised = 0.0;
  double elapsed = 0.0;
  std::vector<ipr::TrainRunResult> ipr_runs;  // one per seed, default config
};

DefaultTaskRuns run_default_task(const ipr::SplitDataset& data) {
  const auto start = Clock::now();
  DefaultTaskRuns out;

  auto mean_for = [&data](ipr::TrainMode mode,
                          std::vector<ipr::TrainRunResult>* keep) {
    ipr::TrainConfig cfg;
    cfg.mode = mode;
    ipr::MultiSeedResult result = ipr::multi_seed(data, cfg);
    if (keep != nullptr) {
      for (ipr::SeedOutcome& outcome : result.outcomes) {
        keep->push_back(std::move(*outcome.result));
      }
    }
    return result.mean_final_accuracy;
  };

  out.mean_baseline = mean_for(ipr::TrainMode::Baseline, nullptr);
  out.mean_baseline_plus = mean_for(ipr::TrainMode::BaselinePlus, nullptr);
  out.mean_ipr = mean_for(ipr::TrainMode::Ipr, &out.ipr_runs);
  out.mean_supervised = mean_for(ipr::TrainMode::Supervised, nullptr);
  out.elapsed = seconds_since(start);
  return out;
}

bool criterion_ordinal(const DefaultTaskRuns& runs, std::string& detail) {
  const double base = runs.mean_baseline;
  const double plus = runs.mean_baseline_plus;
  const double ipr_acc = runs.mean_ipr;
  const double sup = runs.mean_supervised;

  const bool ordering = base < plus && plus < ipr_acc && ipr_acc <= sup;
  const bool gain = (ipr_acc - base) >= 0.03;
  const bool gap = (sup - ipr_acc) <= 0.06;
  const bool band = base >= 0.60 && base <= 0.75;
  const bool fast = runs.elapsed < 900.0;

  char buf[200];
  std::snprintf(buf, sizeof(buf),
                "baseline %.4f < baseline+ %.4f < ipr %.4f <= supervised %.4f"
                "; gain %.2fpts, gap %.2fpts, %.0fs",
                base, plus, ipr_acc, sup, (ipr_acc - base) * 100.0,
                (sup - ipr_acc) * 100.0, runs.elapsed);
  detail = buf;
  return ordering && gain && gap && band && fast;
}

// ---------------------------------------------------------------------------
// 5. Prototype vs model agreement on D2.  Measured on an analysis
//    configuration that removes the pseudo-label CE feedback (weight_m = 0,
//    lower learning rate) so the two label sources stay distinguishable; at
//    the full default config the classifier absorbs the prototype knowledge
//    it is trained on, driving the two rates together.

bool criterion_agreement(const ipr::SplitDataset& data, std::string& detail) {
  ipr::TrainConfig cfg;
  cfg.mode = ipr::TrainMode::Ipr;
  cfg.weight_m = 0.0;
  cfg.learning_rate = 6e-4;

  std::size_t wins = 0;
  std::string margins;
  for (std::uint64_t seed : cfg.seeds) {
    ipr::TrainRunResult run = ipr::train_run(data, cfg, seed);
    const ipr::EpochMetrics& last = run.metrics.epochs.back();
    if (!last.agreement_model || !last.agreement_prototype) continue;
    const double margin = *last.agreement_prototype - *last.agreement_model;
    if (margin > 0.0) ++wins;
    char buf[32];
    std::snprintf(buf, sizeof(buf), " %+.4f", margin);
    margins += buf;
  }
  detail = "final-epoch prototype-minus-model margins:" + margins + " -> " +
           std::to_string(wins) + "/5 seeds";
  return wins >= 4;
}

// ---------------------------------------------------------------------------
// 6. Prototype similarity stabilization on the default task (reuses the
//    criterion-4 ipr runs).  Per seed, the off-diagonal similarities are
//    summarized by their mean m(e); stabilization compares the mean absolute
//    change of m over the last 10 epochs with the first 10 post-warm-up
//    epochs.

double offdiag_mean(const ipr::Matrix& sim) {
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t r = 0; r < sim.rows; ++r) {
    for (std::size_t c = 0; c < sim.cols; ++c) {
      if (r != c) {
        sum += sim(r, c);
        ++count;
      }
    }
  }
  return sum / static_cast<double>(count);
}

bool criterion_stabilization(const DefaultTaskRuns& runs, std::string& detail) {
  std::size_t passes = 0;
  std::string ratios;
  for (const ipr::TrainRunResult& run : runs.ipr_runs) {
    // m(e) for every epoch carrying a similarity snapshot (10..49).
    std::vector<double> trace(50, 0.0);
    std::vector<bool> present(50, false);
    for (const ipr::EpochMetrics& em : run.metrics.epochs) {
      if (em.prototype_similarity) {
        trace[em.epoch] = offdiag_mean(*em.prototype_similarity);
        present[em.epoch] = true;
      }
    }
    auto window = [&trace, &present](std::size_t first) {
      double acc = 0.0;
      for (std::size_t e = first; e < first + 9; ++e) {
        if (!present[e] || !present[e + 1]) return -1.0;
        acc += std::fabs(trace[e + 1] - trace[e]);
      }
      return acc / 9.0;
    };
    const double early = window(10);
    const double late = window(40);
    if (early <= 0.0 || late < 0.0) continue;
    const double ratio = late / early;
    char buf[32];
    std::snprintf(buf, sizeof(buf), " %.3f", ratio);
    ratios += buf;
    if (ratio < 0.10) ++passes;
  }
  detail = "late/early mean |delta| ratios:" + ratios + " -> " +
           std::to_string(passes) + "/5 seeds";
  return passes >= 3;
}

// ---------------------------------------------------------------------------
// 7. Determinism.

bool criterion_determinism(const ipr::SplitDataset& data, std::string& detail) {
  ipr::TrainConfig cfg;
  cfg.mode = ipr::TrainMode::Ipr;
  cfg.epochs = 8;
  cfg.warmup_epochs = 2;
  cfg.encoder_hidden = {16};
  cfg.embedding_dim = 8;

  ipr::TrainRunResult a = ipr::train_run(data, cfg, 11);
  ipr::TrainRunResult b = ipr::train_run(data, cfg, 11);

  const bool metrics_equal = ipr::metrics_csv_string(a.metrics.epochs) ==
                             ipr::metrics_csv_string(b.metrics.epochs);
  const bool similarity_equal =
      ipr::prototype_similarity_csv_string(a.metrics.epochs) ==
      ipr::prototype_similarity_csv_string(b.metrics.epochs);
  const bool checkpoint_equal = ipr::checkpoint_string(a.params, &*a.optimizer) ==
                                ipr::checkpoint_string(b.params, &*b.optimizer);
  const bool bank_equal =
      ipr::prototypes_string(*a.bank) == ipr::prototypes_string(*b.bank);

  detail = std::string("metrics ") + (metrics_equal ? "==" : "!=") +
           ", similarity " + (similarity_equal ? "==" : "!=") +
           ", checkpoint " + (checkpoint_equal ? "==" : "!=") + ", prototypes " +
           (bank_equal ? "==" : "!=");
  return metrics_equal && similarity_equal && checkpoint_equal && bank_equal;
}

// ---------------------------------------------------------------------------
// 8. Data isolation.

bool criterion_isolation(const ipr::SplitDataset& data, std::string& detail) {
  ipr::TrainConfig cfg;
  cfg.mode = ipr::TrainMode::Baseline;
  cfg.epochs = 8;
  cfg.warmup_epochs = 2;
  cfg.encoder_hidden = {16};
  cfg.embedding_dim = 8;

  data.reset_d2_access_count();
  (void)ipr::train_run(data, cfg, 21);
  const std::uint64_t baseline_touches = data.d2_access_count();

  cfg.mode = ipr::TrainMode::Ipr;
  ipr::SplitDataset pruned = data.without_d2();
  ipr::TrainRunResult with_d2 = ipr::train_run(data, cfg, 22);
  ipr::TrainRunResult without_d2 = ipr::train_run(pruned, cfg, 22);
  const bool warmup_equal =
      ipr::checkpoint_string(with_d2.warmup_params) ==
      ipr::checkpoint_string(without_d2.warmup_params);
  bool warmup_metrics_equal = true;
  for (std::size_t ep = 0; ep < cfg.warmup_epochs; ++ep) {
    if (with_d2.metrics.epochs[ep].loss_precise !=
            without_d2.metrics.epochs[ep].loss_precise ||
        with_d2.metrics.epochs[ep].accuracy !=
            without_d2.metrics.epochs[ep].accuracy) {
      warmup_metrics_equal = false;
    }
  }

  detail = "baseline D2 touches = " + std::to_string(baseline_touches) +
           ", warm-up params " + (warmup_equal ? "==" : "!=") +
           ", warm-up metrics " + (warmup_metrics_equal ? "==" : "!=");
  return baseline_touches == 0 && warmup_equal && warmup_metrics_equal;
}

// ---------------------------------------------------------------------------
// 9. Degenerate equivalence.

bool criterion_equivalence(const ipr::SplitDataset& data, std::string& detail) {
  ipr::TrainConfig cfg;
  cfg.mode = ipr::TrainMode::Ipr;
  cfg.epochs = 8;
  cfg.warmup_epochs = 2;
  cfg.encoder_hidden = {16};
  cfg.embedding_dim = 8;
  cfg.gamma = 1.0;
  cfg.weight_m = 0.0;
  cfg.mu = 0.0;

  ipr::TrainConfig base_cfg = cfg;
  base_cfg.mode = ipr::TrainMode::Baseline;

  std::size_t matched = 0;
  for (std::uint64_t seed : cfg.seeds) {
    ipr::TrainRunResult degenerate = ipr::train_run(data, cfg, seed);
    ipr::TrainRunResult baseline = ipr::train_run(data, base_cfg, seed);
    const bool params_equal =
        ipr::checkpoint_string(degenerate.params, &*degenerate.optimizer) ==
        ipr::checkpoint_string(baseline.params, &*baseline.optimizer);
    const bool accuracy_equal =
        degenerate.metrics.final_accuracy == baseline.metrics.final_accuracy;
    if (params_equal && accuracy_equal) ++matched;
  }
  detail = std::to_string(matched) + "/" + std::to_string(cfg.seeds.size()) +
           " seeds bit-identical to baseline";
  return matched == cfg.seeds.size();
}

struct Criterion {
  const char* name;
  std::function<bool(std::string&)> run;
};

}  // namespace

int main() {
  // Shared datasets: the full default task for criteria 4-6 and a small one
  // for the structural criteria.
  ipr::SynthConfig default_synth;
  const ipr::SplitDataset default_data = ipr::generate_synthetic(default_synth);

  ipr::SynthConfig small_synth;
  small_synth.d1_size = 48;
  small_synth.d2_size = 64;
  small_synth.d3_size = 16;
  const ipr::SplitDataset small_data = ipr::generate_synthetic(small_synth);

  DefaultTaskRuns task_runs;

  const std::vector<Criterion> criteria = {
      {"gradient oracle suite", criterion_gradients},
      {"prototype invariants", criterion_prototypes},
      {"beta schedule", criterion_beta},
      {"four-mode ordinal comparison",
       [&](std::string& d) {
         task_runs = run_default_task(default_data);
         return criterion_ordinal(task_runs, d);
       }},
      {"prototype vs model agreement",
       [&](std::string& d) { return criterion_agreement(default_data, d); }},
      {"prototype similarity stabilization",
       [&](std::string& d) { return criterion_stabilization(task_runs, d); }},
      {"determinism",
       [&](std::string& d) { return criterion_determinism(small_data, d); }},
      {"data isolation",
       [&](std::string& d) { return criterion_isolation(small_data, d); }},
      {"degenerate equivalence",
       [&](std::string& d) { return criterion_equivalence(small_data, d); }},
  };

  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    std::string detail;
    bool ok = false;
    try {
      ok = criteria[i].run(detail);
    } catch (const std::exception& e) {
      detail = std::string("exception: ") + e.what();
    }
    std::printf("[%s] %zu. %s: %s\n", ok ? "PASS" : "FAIL", i + 1,
                criteria[i].name, detail.c_str());
    std::fflush(stdout);
    if (!ok) ++failures;
  }
  return failures;
}
