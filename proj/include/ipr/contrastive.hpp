#pragma once

#include <string>
#include <vector>

#include "ipr/numerics.hpp"
#include "ipr/rng.hpp"

namespace ipr {

// Feature-space augmentation recipe.  Each enabled transform is applied
// independently with probability apply_prob, in the fixed order: additive
// Gaussian noise, random scaling, coordinate dropout, convex mixing with a
// partner vector.  With all magnitudes at their neutral defaults the output
// equals the input.
struct AugmentationPolicy {
  double apply_prob = 1.0;
  double noise_sigma = 0.0;
  double scale_min = 1.0;
  double scale_max = 1.0;
  double dropout_rate = 0.0;
  double mix_lambda_min = 0.0;
  double mix_lambda_max = 0.0;

  void validate() const;
};

// `mix_partner` may be null; the mixing transform is then skipped even when
// selected.  RNG consumption is fixed per transform selection so identical
// seeds give identical augmented views.
Vector augment(const Vector& x, const AugmentationPolicy& policy,
               RngStream& rng, const Vector* mix_partner = nullptr);

// Positive-set construction for the batch loss.
//  Supervised:     positives of an anchor are all other embeddings sharing
//                  its pseudo label.
//  PairwiseNtXent: the only positive is the anchor's paired view.
enum class ContrastiveMode { Supervised, PairwiseNtXent };

std::string contrastive_mode_name(ContrastiveMode mode);
ContrastiveMode contrastive_mode_from_name(const std::string& name);

// 2N embeddings: entries [0, N) are anchors, [N, 2N) their augmented views;
// anchor i pairs with embedding i + N.  Embeddings are expected unit-norm.
struct ContrastiveBatch {
  std::vector<Vector> embeddings;
  std::vector<std::size_t> pseudo_labels;  // one per embedding
  double temperature = 0.1;
};

struct ContrastiveResult {
  double loss = 0.0;
  // d(loss)/d(embedding), one vector per batch entry.
  std::vector<Vector> embedding_grads;
  // Anchors whose positive set came up empty (excluded from the mean).
  std::size_t skipped_anchors = 0;
};

// Mean over anchors of -1/|P(a)| * sum_{p in P(a)} log( exp(a.p/tau) /
// sum_{b != a} exp(a.b/tau) ).  Every embedding serves as an anchor.
ContrastiveResult contrastive_loss(const ContrastiveBatch& batch,
                                   ContrastiveMode mode = ContrastiveMode::Supervised);

}  // namespace ipr
