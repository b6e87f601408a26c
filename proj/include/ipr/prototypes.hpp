#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ipr/numerics.hpp"

namespace ipr {

// How raw prototype similarities become per-class soft weights.
//  Softmax:    softmax(similarities / soft_temperature); weights sum to 1.
//  RawClamped: each similarity clamped to [0, 1], no normalization.
enum class SoftLabelMode { Softmax, RawClamped };

std::string soft_label_mode_name(SoftLabelMode mode);
SoftLabelMode soft_label_mode_from_name(const std::string& name);

struct SoftLabel {
  Vector weights;           // one per class
  Vector raw_similarities;  // dot products against each prototype
};

struct PseudoLabel {
  std::size_t class_index = 0;
  double confidence = 0.0;  // winning raw similarity
};

struct PrototypeOptions {
  double gamma = 0.99;             // momentum of the moving average
  SoftLabelMode soft_label_mode = SoftLabelMode::Softmax;
  double soft_temperature = 0.1;
  bool update_all_classes = false;

  void validate() const;
};

// One unit-norm prototype per class, refined online by gated moving-average
// updates.  Prototypes are initialized from labeled embeddings and afterwards
// only move when both classifier views of a sample agree on the class.
class PrototypeBank {
 public:
  PrototypeBank(std::vector<Vector> prototypes, PrototypeOptions options);

  // Per-class normalized mean of the (normalized) embeddings.  Every class in
  // [0, class_count) must be represented.
  static PrototypeBank initialize(
      const std::vector<Vector>& embeddings,
      const std::vector<std::size_t>& labels, std::size_t class_count,
      PrototypeOptions options);

  // Restores a persisted bank without renormalizing, so loaded prototypes
  // keep the exact bits that were saved.  Norms are still checked.
  static PrototypeBank from_saved(std::vector<Vector> prototypes,
                                  PrototypeOptions options,
                                  std::vector<std::uint64_t> update_counts,
                                  std::uint64_t degenerate_skips);

  SoftLabel soft_label(const Vector& embedding) const;

  // Argmax over raw similarities; ties resolve to the lowest class index.
  PseudoLabel pseudo_label(const Vector& embedding) const;

  // Applies p_c <- normalize(gamma * p_c + (1 - gamma) * s_c * k) for the
  // agreed class c = model_pred (all classes when update_all_classes is set).
  // Returns false and leaves the bank untouched when the gate is closed
  // (model_pred != aug_pred).  A zero-norm pre-normalization vector skips
  // that class and increments the degenerate counter.
  bool gated_update(const Vector& embedding, const SoftLabel& soft,
                    std::size_t model_pred, std::size_t aug_pred);

  // Matrix of pairwise prototype dot products (symmetric, unit diagonal).
  Matrix pairwise_similarity() const;

  const Vector& prototype(std::size_t c) const;
  std::size_t class_count() const { return prototypes_.size(); }
  std::size_t embedding_dim() const;
  const PrototypeOptions& options() const { return options_; }
  const std::vector<std::uint64_t>& update_counts() const {
    return update_counts_;
  }
  std::uint64_t degenerate_skips() const { return degenerate_skips_; }

 private:
  std::vector<Vector> prototypes_;
  PrototypeOptions options_;
  std::vector<std::uint64_t> update_counts_;
  std::uint64_t degenerate_skips_ = 0;
};

// Versioned JSON persistence mirroring the model checkpoint conventions.
void save_prototypes(const std::string& path, const PrototypeBank& bank);
PrototypeBank load_prototypes(const std::string& path);
std::string prototypes_string(const PrototypeBank& bank);

}  // namespace ipr
