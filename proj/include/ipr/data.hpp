#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ipr/numerics.hpp"
#include "ipr/rng.hpp"

namespace ipr {

// D1: high annotator agreement, precise labels used for supervision.
// D2: moderate agreement, treated as unlabeled during training.
// D3: lowest agreement, held out for evaluation.
enum class Split { D1, D2, D3 };

std::string split_name(Split split);
Split split_from_name(const std::string& name);

struct FeatureSample {
  std::string id;
  Vector features;
  std::optional<std::size_t> label;  // generating class (ground truth)
  Split split = Split::D1;
  std::optional<std::vector<std::uint32_t>> votes;  // per-class annotator votes
};

// Feature-only view of a D2 record; what the semi-supervised trainer is
// allowed to see.
struct UnlabeledView {
  const std::string& id;
  const Vector& features;
};

// Three disjoint splits plus provenance.  D2 records sit behind counting
// accessors: every feature or label read of a D2 record bumps a counter, so
// tests can assert that label-free training paths never touched them.
class SplitDataset {
 public:
  SplitDataset() = default;
  SplitDataset(std::size_t class_count, std::size_t feature_dim,
               std::string provenance, std::vector<FeatureSample> samples);

  std::size_t class_count() const { return class_count_; }
  std::size_t feature_dim() const { return feature_dim_; }
  const std::string& provenance() const { return provenance_; }

  const std::vector<FeatureSample>& d1() const { return d1_; }
  const std::vector<FeatureSample>& d3() const { return d3_; }

  std::size_t d2_size() const { return d2_.size(); }
  // Training-side access: features only.
  UnlabeledView d2_view(std::size_t i) const;
  // Evaluation-only access to the retained ground truth.
  std::optional<std::size_t> d2_truth(std::size_t i) const;
  const std::string& d2_id(std::size_t i) const;

  std::uint64_t d2_access_count() const { return d2_accesses_; }
  void reset_d2_access_count() const { d2_accesses_ = 0; }

  // Serialization-side iteration in stored order (D1, D2, D3); does not
  // count as record access.
  std::vector<const FeatureSample*> all_samples() const;

  // Copy with D2 removed (used by isolation tests).
  SplitDataset without_d2() const;

  std::size_t total_size() const { return d1_.size() + d2_.size() + d3_.size(); }

 private:
  std::size_t class_count_ = 0;
  std::size_t feature_dim_ = 0;
  std::string provenance_;
  std::vector<FeatureSample> d1_;
  std::vector<FeatureSample> d2_;
  std::vector<FeatureSample> d3_;
  mutable std::uint64_t d2_accesses_ = 0;
};

// Synthetic ambiguous-classification task: Gaussian clusters whose samples
// are voted on by simulated annotators; agreement carves the three splits.
struct SynthConfig {
  std::size_t class_count = 4;
  std::size_t feature_dim = 16;
  std::size_t d1_size = 600;
  std::size_t d2_size = 1200;
  std::size_t d3_size = 140;
  std::size_t annotators = 6;
  double mean_scale = 1.0;     // centers sit on a sphere of radius mean_scale*sqrt(dim)
  double cov_scale = 1.0;      // base within-cluster standard deviation
  double overlap = 1.5;        // multiplies cov_scale; 0 collapses clusters onto centers
  double annotator_temperature = 0.65;  // ->0: unanimous votes
  double t_high = 0.99;        // majority fraction >= t_high -> D1
  double t_low = 0.55;         // majority fraction <= t_low  -> D3
  double blend_max = 0.0;      // max mixing weight toward the next class center
  double magnitude_jitter = 0.0;  // lognormal per-sample feature scaling (sigma of log)
  std::uint64_t seed = 7;

  void validate() const;
};

// Draws samples until every split quota is met; samples falling into an
// already-full split are discarded.  Fails with a threshold-adjustment hint
// when a quota cannot be filled within the attempt budget.
SplitDataset generate_synthetic(const SynthConfig& config);

// Unconstrained draw of `n` samples, reporting how they would be split.
struct SplitCensus {
  std::size_t d1 = 0;
  std::size_t d2 = 0;
  std::size_t d3 = 0;
  double d1_fraction(std::size_t n) const;
  double d3_fraction(std::size_t n) const;
};
SplitCensus sample_census(const SynthConfig& config, std::size_t n);

// JSON Lines container: one header object then one object per sample.
void save_dataset(const SplitDataset& dataset, const std::string& path);
SplitDataset load_dataset(const std::string& path);

// Full invariant check; returns human-readable violations (empty = valid).
std::vector<std::string> validate_dataset_file(const std::string& path);

// Per-dimension standardization fitted on D1 u D2 and applied to all splits.
struct StandardizeResult {
  SplitDataset dataset;
  Vector mean;
  Vector std_dev;               // zero-variance dims clamped to 1
  std::vector<std::size_t> clamped_dims;
};
StandardizeResult standardize(const SplitDataset& dataset);

}  // namespace ipr
