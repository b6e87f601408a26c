#include <algorithm>
#include <cmath>
#include <vector>

#include "doctest.h"
#include "ipr/contrastive.hpp"
#include "ipr/errors.hpp"
#include "ipr/numerics.hpp"
#include "ipr/rng.hpp"
#include "oracles.hpp"

using ipr::Vector;

namespace {

ipr::ContrastiveBatch random_batch(std::size_t n, std::size_t dim,
                                   std::size_t classes, std::uint64_t seed,
                                   double tau) {
  ipr::RngStream rng(seed);
  ipr::ContrastiveBatch batch;
  batch.temperature = tau;
  for (std::size_t i = 0; i < 2 * n; ++i) {
    batch.embeddings.push_back(ipr::l2_normalize(rng.gaussian_vector(dim)));
  }
  for (std::size_t i = 0; i < n; ++i) {
    batch.pseudo_labels.push_back(rng.next_index(classes));
  }
  // Views inherit their anchor's label.
  for (std::size_t i = 0; i < n; ++i) {
    batch.pseudo_labels.push_back(batch.pseudo_labels[i]);
  }
  return batch;
}

}  // namespace

TEST_CASE("augment with a neutral policy is the identity") {
  ipr::AugmentationPolicy neutral;
  ipr::RngStream rng(1);
  Vector x = {0.3, -1.2, 4.0};
  CHECK(ipr::augment(x, neutral, rng) == x);

  ipr::AugmentationPolicy never;
  never.apply_prob = 0.0;
  never.noise_sigma = 5.0;
  never.scale_min = 0.1;
  never.scale_max = 10.0;
  CHECK(ipr::augment(x, never, rng) == x);
}

TEST_CASE("augment is deterministic in the rng seed") {
  ipr::AugmentationPolicy policy;
  policy.apply_prob = 0.5;
  policy.noise_sigma = 0.3;
  policy.scale_min = 0.9;
  policy.scale_max = 1.1;
  policy.dropout_rate = 0.2;
  Vector x = {1.0, 2.0, 3.0, 4.0};
  ipr::RngStream a(55);
  ipr::RngStream b(55);
  for (int i = 0; i < 20; ++i) {
    CHECK(ipr::augment(x, policy, a) == ipr::augment(x, policy, b));
  }
}

TEST_CASE("additive noise has the configured scale") {
  ipr::AugmentationPolicy policy;
  policy.noise_sigma = 0.1;
  Vector zero(2000, 0.0);
  ipr::RngStream rng(7);
  Vector out = ipr::augment(zero, policy, rng);
  double sum2 = 0.0;
  for (double v : out) sum2 += v * v;
  const double std_dev = std::sqrt(sum2 / static_cast<double>(out.size()));
  CHECK(std_dev == doctest::Approx(0.1).epsilon(0.2));
}

TEST_CASE("degenerate scale range applies that exact factor") {
  ipr::AugmentationPolicy policy;
  policy.scale_min = 2.0;
  policy.scale_max = 2.0;
  ipr::RngStream rng(3);
  Vector out = ipr::augment({1.0, -2.0, 0.5}, policy, rng);
  CHECK(out[0] == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(out[1] == doctest::Approx(-4.0).epsilon(1e-15));
  CHECK(out[2] == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("dropout zeroes roughly the configured fraction") {
  ipr::AugmentationPolicy policy;
  policy.dropout_rate = 0.5;
  Vector ones(1000, 1.0);
  ipr::RngStream rng(13);
  Vector out = ipr::augment(ones, policy, rng);
  const auto zeros = std::count(out.begin(), out.end(), 0.0);
  CHECK(zeros > 400);
  CHECK(zeros < 600);
  // Surviving coordinates are untouched.
  for (double v : out) CHECK((v == 0.0 || v == 1.0));
}

TEST_CASE("convex mixing interpolates toward the partner") {
  ipr::AugmentationPolicy policy;
  policy.mix_lambda_min = 0.25;
  policy.mix_lambda_max = 0.25;
  Vector x = {1.0, 0.0};
  Vector partner = {0.0, 1.0};
  ipr::RngStream rng(9);
  Vector out = ipr::augment(x, policy, rng, &partner);
  CHECK(out[0] == doctest::Approx(0.75).epsilon(1e-12));
  CHECK(out[1] == doctest::Approx(0.25).epsilon(1e-12));
  // Without a partner the mixing step is skipped entirely.
  ipr::RngStream rng2(9);
  CHECK(ipr::augment(x, policy, rng2) == x);
}

TEST_CASE("augmentation policies are validated") {
  ipr::AugmentationPolicy bad;
  ipr::RngStream rng(1);
  bad.apply_prob = 1.5;
  CHECK_THROWS_AS(bad.validate(), ipr::ConfigError);
  bad = {};
  bad.scale_min = 2.0;
  bad.scale_max = 1.0;
  CHECK_THROWS_AS(bad.validate(), ipr::ConfigError);
  bad = {};
  bad.dropout_rate = 1.0;
  CHECK_THROWS_AS(bad.validate(), ipr::ConfigError);
  bad = {};
  bad.noise_sigma = -0.1;
  CHECK_THROWS_AS(bad.validate(), ipr::ConfigError);
  CHECK_THROWS_AS(ipr::augment(Vector{}, ipr::AugmentationPolicy{}, rng),
                  ipr::InputError);
}

TEST_CASE("supervised loss worked value on an orthogonal batch") {
  // Anchors (1,0) and (0,1) with identical views, labels [0,1,0,1], tau=1.
  // Every anchor contributes log(2 + e) - 1.
  ipr::ContrastiveBatch batch;
  batch.embeddings = {{1.0, 0.0}, {0.0, 1.0}, {1.0, 0.0}, {0.0, 1.0}};
  batch.pseudo_labels = {0, 1, 0, 1};
  batch.temperature = 1.0;
  ipr::ContrastiveResult result = ipr::contrastive_loss(batch);
  CHECK(result.loss ==
        doctest::Approx(0.5514447139320511).epsilon(1e-12));
  CHECK(result.skipped_anchors == 0);
}

TEST_CASE("loss matches the brute-force table in both modes") {
  for (bool supervised : {true, false}) {
    const ipr::ContrastiveMode mode = supervised
                                          ? ipr::ContrastiveMode::Supervised
                                          : ipr::ContrastiveMode::PairwiseNtXent;
    for (std::uint64_t seed : {1, 2, 3}) {
      ipr::ContrastiveBatch batch = random_batch(6, 4, 3, seed, 0.1);
      ipr::ContrastiveResult result = ipr::contrastive_loss(batch, mode);
      oracle::BruteContrastive expect = oracle::contrastive(
          batch.embeddings, batch.pseudo_labels, batch.temperature, supervised);
      CHECK(result.loss == doctest::Approx(expect.loss).epsilon(1e-10));
      CHECK(result.skipped_anchors == expect.skipped);
    }
  }
}

TEST_CASE("anchors with no positives are skipped and excluded from the mean") {
  ipr::ContrastiveBatch batch;
  batch.embeddings = {{1.0, 0.0}, {0.0, 1.0}, {0.6, 0.8}, {0.8, 0.6}};
  batch.pseudo_labels = {0, 1, 0, 2};  // label 2 appears once
  batch.temperature = 0.5;
  ipr::ContrastiveResult result = ipr::contrastive_loss(batch);
  oracle::BruteContrastive expect =
      oracle::contrastive(batch.embeddings, batch.pseudo_labels, 0.5, true);
  CHECK(result.skipped_anchors == 1);
  CHECK(result.loss == doctest::Approx(expect.loss).epsilon(1e-10));
  // A skipped anchor still receives gradient as a negative of the others.
  double grad_norm = 0.0;
  for (double g : result.embedding_grads[3]) grad_norm += g * g;
  CHECK(grad_norm > 0.0);
}

TEST_CASE("loss is invariant under a consistent batch permutation") {
  ipr::ContrastiveBatch batch = random_batch(5, 3, 2, 77, 0.2);
  ipr::ContrastiveResult base = ipr::contrastive_loss(batch);

  // Swap anchor slots 0 and 3 together with their views and labels.
  ipr::ContrastiveBatch swapped = batch;
  const std::size_t n = 5;
  std::swap(swapped.embeddings[0], swapped.embeddings[3]);
  std::swap(swapped.embeddings[n], swapped.embeddings[n + 3]);
  std::swap(swapped.pseudo_labels[0], swapped.pseudo_labels[3]);
  std::swap(swapped.pseudo_labels[n], swapped.pseudo_labels[n + 3]);
  ipr::ContrastiveResult perm = ipr::contrastive_loss(swapped);
  CHECK(perm.loss == doctest::Approx(base.loss).epsilon(1e-10));
}

TEST_CASE("large temperature drives the loss to log(2N - 1)") {
  ipr::ContrastiveBatch batch = random_batch(2, 4, 2, 5, 1e6);
  ipr::ContrastiveResult result =
      ipr::contrastive_loss(batch, ipr::ContrastiveMode::PairwiseNtXent);
  CHECK(std::fabs(result.loss - 1.0986122886681098) < 1e-3);
}

TEST_CASE("pulling a positive pair closer lowers the pairwise loss") {
  auto make = [](double gap) {
    ipr::ContrastiveBatch batch;
    const double c = std::cos(gap), s = std::sin(gap);
    batch.embeddings = {{1.0, 0.0}, {0.0, 1.0}, {c, s}, {-s, c}};
    batch.pseudo_labels = {0, 1, 0, 1};
    batch.temperature = 0.5;
    return ipr::contrastive_loss(batch, ipr::ContrastiveMode::PairwiseNtXent)
        .loss;
  };
  CHECK(make(0.1) < make(0.5));
  CHECK(make(0.5) < make(1.2));
}

TEST_CASE("embedding gradients agree with finite differences") {
  for (ipr::ContrastiveMode mode : {ipr::ContrastiveMode::Supervised,
                                    ipr::ContrastiveMode::PairwiseNtXent}) {
    ipr::ContrastiveBatch batch = random_batch(4, 3, 2, 21, 0.15);
    ipr::ContrastiveResult result = ipr::contrastive_loss(batch, mode);
    for (std::size_t e = 0; e < batch.embeddings.size(); ++e) {
      for (std::size_t d = 0; d < batch.embeddings[e].size(); ++d) {
        ipr::ContrastiveBatch plus = batch;
        ipr::ContrastiveBatch minus = batch;
        const double h = 1e-6;
        plus.embeddings[e][d] += h;
        minus.embeddings[e][d] -= h;
        const double numeric = (ipr::contrastive_loss(plus, mode).loss -
                                ipr::contrastive_loss(minus, mode).loss) /
                               (2.0 * h);
        CHECK(oracle::close(result.embedding_grads[e][d], numeric, 1e-5, 1e-7));
      }
    }
  }
}

TEST_CASE("contrastive batch shape errors") {
  ipr::ContrastiveBatch bad;
  CHECK_THROWS_AS(ipr::contrastive_loss(bad), ipr::InputError);  // empty
  bad.embeddings = {{1.0, 0.0}, {0.0, 1.0}, {1.0, 0.0}};        // odd
  bad.pseudo_labels = {0, 1, 0};
  CHECK_THROWS_AS(ipr::contrastive_loss(bad), ipr::InputError);
  bad.embeddings = {{1.0, 0.0}, {0.0, 1.0}};
  bad.pseudo_labels = {0};  // label count mismatch
  CHECK_THROWS_AS(ipr::contrastive_loss(bad), ipr::InputError);
  bad.pseudo_labels = {0, 0};
  bad.temperature = 0.0;
  CHECK_THROWS_AS(ipr::contrastive_loss(bad), ipr::ConfigError);
}
