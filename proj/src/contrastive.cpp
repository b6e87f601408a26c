#include "ipr/contrastive.hpp"

#include <cmath>

#include "ipr/errors.hpp"
#include "ipr/fp_format.hpp"

namespace ipr {

void AugmentationPolicy::validate() const {
  if (!(apply_prob >= 0.0 && apply_prob <= 1.0)) {
    throw ConfigError("augment: apply_prob must lie in [0, 1]");
  }
  if (noise_sigma < 0.0) {
    throw ConfigError("augment: noise_sigma must be non-negative");
  }
  if (!(scale_min > 0.0) || scale_min > scale_max) {
    throw ConfigError("augment: scale range must satisfy 0 < min <= max, got [" +
                      format_double(scale_min) + ", " +
                      format_double(scale_max) + "]");
  }
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
    throw ConfigError("augment: dropout_rate must lie in [0, 1)");
  }
  if (mix_lambda_min < 0.0 || mix_lambda_min > mix_lambda_max ||
      mix_lambda_max > 1.0) {
    throw ConfigError("augment: mix lambda range must satisfy 0 <= min <= max <= 1");
  }
}

Vector augment(const Vector& x, const AugmentationPolicy& policy,
               RngStream& rng, const Vector* mix_partner) {
  policy.validate();
  if (x.empty()) {
    throw InputError("augment: empty feature vector");
  }
  if (mix_partner != nullptr && mix_partner->size() != x.size()) {
    throw InputError("augment: mix partner has mismatched length");
  }
  Vector out = x;

  // One selector draw per transform keeps stream consumption predictable.
  if (rng.next_double() < policy.apply_prob) {
    for (double& v : out) {
      v += policy.noise_sigma * rng.next_gaussian();
    }
  }
  if (rng.next_double() < policy.apply_prob) {
    const double s = rng.next_uniform(policy.scale_min, policy.scale_max);
    for (double& v : out) {
      v *= s;
    }
  }
  if (rng.next_double() < policy.apply_prob) {
    for (double& v : out) {
      if (rng.next_double() < policy.dropout_rate) {
        v = 0.0;
      }
    }
  }
  if (rng.next_double() < policy.apply_prob && mix_partner != nullptr) {
    const double lam =
        rng.next_uniform(policy.mix_lambda_min, policy.mix_lambda_max);
    for (std::size_t i = 0; i < out.size(); ++i) {
      out[i] = (1.0 - lam) * out[i] + lam * (*mix_partner)[i];
    }
  }

  if (!all_finite(out)) {
    throw NumericalError("augment: produced non-finite features");
  }
  return out;
}

std::string contrastive_mode_name(ContrastiveMode mode) {
  switch (mode) {
    case ContrastiveMode::Supervised:
      return "supervised";
    case ContrastiveMode::PairwiseNtXent:
      return "pairwise_ntxent";
  }
  throw InputError("contrastive_mode_name: unknown mode");
}

ContrastiveMode contrastive_mode_from_name(const std::string& name) {
  if (name == "supervised") return ContrastiveMode::Supervised;
  if (name == "pairwise_ntxent") return ContrastiveMode::PairwiseNtXent;
  throw ConfigError("unknown contrastive mode '" + name + "'");
}

ContrastiveResult contrastive_loss(const ContrastiveBatch& batch,
                                   ContrastiveMode mode) {
  const std::size_t m = batch.embeddings.size();
  if (m == 0 || m % 2 != 0) {
    throw InputError("contrastive_loss: batch must hold a positive even "
                     "number of embeddings, got " + std::to_string(m));
  }
  if (batch.pseudo_labels.size() != m) {
    throw InputError("contrastive_loss: need one pseudo label per embedding");
  }
  if (!(batch.temperature > 0.0)) {
    throw ConfigError("contrastive_loss: temperature must be positive");
  }
  const std::size_t dim = batch.embeddings[0].size();
  for (const Vector& e : batch.embeddings) {
    if (e.size() != dim) {
      throw InputError("contrastive_loss: inconsistent embedding dimensions");
    }
    if (!all_finite(e)) {
      throw NumericalError("contrastive_loss: non-finite embedding");
    }
  }
  const std::size_t half = m / 2;
  auto paired = [half, m](std::size_t a) { return (a + half) % m; };

  // Scaled similarity table.
  Matrix sims(m, m);
  for (std::size_t a = 0; a < m; ++a) {
    for (std::size_t b = 0; b < m; ++b) {
      sims(a, b) = dot(batch.embeddings[a], batch.embeddings[b]) /
                   batch.temperature;
    }
  }

  // Positive sets.
  std::vector<std::vector<std::size_t>> positives(m);
  for (std::size_t a = 0; a < m; ++a) {
    if (mode == ContrastiveMode::PairwiseNtXent) {
      positives[a].push_back(paired(a));
      continue;
    }
    for (std::size_t b = 0; b < m; ++b) {
      if (b != a && batch.pseudo_labels[b] == batch.pseudo_labels[a]) {
        positives[a].push_back(b);
      }
    }
  }

  ContrastiveResult result;
  result.embedding_grads.assign(m, Vector(dim, 0.0));

  // Row-wise log-sum-exp over b != a, max-shifted so tiny temperatures
  // cannot overflow.
  std::vector<double> lse(m);
  for (std::size_t a = 0; a < m; ++a) {
    Vector row;
    row.reserve(m - 1);
    for (std::size_t b = 0; b < m; ++b) {
      if (b != a) row.push_back(sims(a, b));
    }
    lse[a] = log_sum_exp(row);
  }

  double total = 0.0;
  std::size_t counted = 0;
  for (std::size_t a = 0; a < m; ++a) {
    if (positives[a].empty()) {
      ++result.skipped_anchors;
      continue;
    }
    double anchor_loss = 0.0;
    for (std::size_t p : positives[a]) {
      anchor_loss -= sims(a, p) - lse[a];
    }
    total += anchor_loss / static_cast<double>(positives[a].size());
    ++counted;
  }
  if (counted == 0) {
    result.loss = 0.0;
    return result;
  }
  result.loss = total / static_cast<double>(counted);

  // d(loss)/d(sims(a,b)) for ordered pairs a != b, zero for skipped anchors.
  Matrix sim_grad(m, m);
  const double inv_counted = 1.0 / static_cast<double>(counted);
  for (std::size_t a = 0; a < m; ++a) {
    if (positives[a].empty()) continue;
    const double inv_pos = 1.0 / static_cast<double>(positives[a].size());
    for (std::size_t b = 0; b < m; ++b) {
      if (b == a) continue;
      sim_grad(a, b) = inv_counted * std::exp(sims(a, b) - lse[a]);
    }
    for (std::size_t p : positives[a]) {
      sim_grad(a, p) -= inv_counted * inv_pos;
    }
  }

  // Chain rule through sims(a,b) = dot(z_a, z_b) / tau.
  const double inv_tau = 1.0 / batch.temperature;
  for (std::size_t c = 0; c < m; ++c) {
    Vector& g = result.embedding_grads[c];
    for (std::size_t b = 0; b < m; ++b) {
      if (b == c) continue;
      const double coeff = (sim_grad(c, b) + sim_grad(b, c)) * inv_tau;
      if (coeff == 0.0) continue;
      const Vector& z = batch.embeddings[b];
      for (std::size_t d = 0; d < dim; ++d) {
        g[d] += coeff * z[d];
      }
    }
  }
  return result;
}

}  // namespace ipr
