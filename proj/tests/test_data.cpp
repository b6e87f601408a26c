#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "doctest.h"
#include "ipr/data.hpp"
#include "ipr/errors.hpp"
#include "ipr/run_io.hpp"

using ipr::FeatureSample;
using ipr::Split;
using ipr::Vector;

namespace {

namespace fs = std::filesystem;

ipr::SplitDataset tiny_dataset() {
  std::vector<FeatureSample> samples;
  auto add = [&samples](const std::string& id, Vector f, std::size_t label,
                        Split split) {
    FeatureSample s;
    s.id = id;
    s.features = std::move(f);
    s.label = label;
    s.split = split;
    samples.push_back(std::move(s));
  };
  add("p0", {1.0, 0.0}, 0, Split::D1);
  add("p1", {0.9, 0.1}, 0, Split::D1);
  add("p2", {0.0, 1.0}, 1, Split::D1);
  add("p3", {0.1, 0.9}, 1, Split::D1);
  add("u0", {0.8, 0.2}, 0, Split::D2);
  add("u1", {0.2, 0.8}, 1, Split::D2);
  add("e0", {1.0, 0.1}, 0, Split::D3);
  add("e1", {0.1, 1.0}, 1, Split::D3);
  return ipr::SplitDataset(2, 2, "unit-test", std::move(samples));
}

fs::path temp_file(const std::string& name) {
  return fs::temp_directory_path() / name;
}

}  // namespace

TEST_CASE("default generator fills the documented quotas") {
  ipr::SynthConfig config;
  ipr::SplitDataset data = ipr::generate_synthetic(config);
  CHECK(data.d1().size() == 600);
  CHECK(data.d2_size() == 1200);
  CHECK(data.d3().size() == 140);
  CHECK(data.class_count() == 4);
  CHECK(data.feature_dim() == 16);
  CHECK(data.total_size() == 1940);

  // Labels retained everywhere; ids unique across the whole set.
  std::set<std::string> ids;
  for (const FeatureSample* s : data.all_samples()) {
    REQUIRE(s->label.has_value());
    CHECK(*s->label < 4);
    CHECK(s->features.size() == 16);
    REQUIRE(s->votes.has_value());
    std::uint32_t total_votes = 0;
    for (std::uint32_t v : *s->votes) total_votes += v;
    CHECK(total_votes == config.annotators);
    ids.insert(s->id);
  }
  CHECK(ids.size() == data.total_size());

  // Every class appears in D1 (prototype initialization needs this).
  std::set<std::size_t> d1_classes;
  for (const FeatureSample& s : data.d1()) d1_classes.insert(*s.label);
  CHECK(d1_classes.size() == 4);
}

TEST_CASE("generation is deterministic in the config seed") {
  ipr::SynthConfig config;
  config.d1_size = 40;
  config.d2_size = 60;
  config.d3_size = 10;
  ipr::SplitDataset a = ipr::generate_synthetic(config);
  ipr::SplitDataset b = ipr::generate_synthetic(config);
  REQUIRE(a.total_size() == b.total_size());
  auto sa = a.all_samples();
  auto sb = b.all_samples();
  for (std::size_t i = 0; i < sa.size(); ++i) {
    CHECK(sa[i]->id == sb[i]->id);
    CHECK(sa[i]->features == sb[i]->features);
    CHECK(sa[i]->label == sb[i]->label);
  }

  config.seed = 8;
  ipr::SplitDataset c = ipr::generate_synthetic(config);
  CHECK(c.all_samples()[0]->features != sa[0]->features);
}

TEST_CASE("census responds to ambiguity knobs as the thresholds dictate") {
  // Collapsed clusters + near-deterministic annotators: unanimous votes,
  // everything lands in D1.
  ipr::SynthConfig sharp;
  sharp.overlap = 0.0;
  sharp.annotator_temperature = 0.01;
  ipr::SplitCensus census = ipr::sample_census(sharp, 400);
  CHECK(census.d1_fraction(400) > 0.95);

  // Near-uniform annotators: majorities hug 1/C, everything falls to D3.
  ipr::SynthConfig noisy;
  noisy.annotator_temperature = 50.0;
  ipr::SplitCensus blur = ipr::sample_census(noisy, 400);
  CHECK(blur.d3_fraction(400) > 0.6);
  CHECK(blur.d1_fraction(400) < 0.05);
}

TEST_CASE("starved split quotas fail with an explanatory error") {
  ipr::SynthConfig config;
  config.class_count = 2;
  config.feature_dim = 3;
  config.d1_size = 2;
  config.d2_size = 5;
  config.d3_size = 5;
  config.overlap = 0.0;
  config.annotator_temperature = 0.01;  // everything qualifies for D1 only
  CHECK_THROWS_AS(ipr::generate_synthetic(config), ipr::ConfigError);
}

TEST_CASE("synth config validation rejects bad knobs") {
  ipr::SynthConfig config;
  config.class_count = 1;
  CHECK_THROWS_AS(config.validate(), ipr::ConfigError);
  config = {};
  config.t_low = 0.9;
  config.t_high = 0.6;
  CHECK_THROWS_AS(config.validate(), ipr::ConfigError);
  config = {};
  config.annotator_temperature = 0.0;
  CHECK_THROWS_AS(config.validate(), ipr::ConfigError);
  config = {};
  config.d1_size = 2;  // below class_count
  CHECK_THROWS_AS(config.validate(), ipr::ConfigError);
}

TEST_CASE("d2 records sit behind counting accessors") {
  ipr::SplitDataset data = tiny_dataset();
  CHECK(data.d2_access_count() == 0);

  (void)data.d2_view(0);
  CHECK(data.d2_access_count() == 1);
  (void)data.d2_truth(1);
  CHECK(data.d2_access_count() == 2);
  (void)data.d2_id(0);  // id lookups are not record access
  (void)data.all_samples();
  CHECK(data.d2_access_count() == 2);

  data.reset_d2_access_count();
  CHECK(data.d2_access_count() == 0);
  CHECK_THROWS_AS(data.d2_view(99), ipr::InputError);
}

TEST_CASE("without_d2 drops exactly the unlabeled split") {
  ipr::SplitDataset data = tiny_dataset();
  ipr::SplitDataset pruned = data.without_d2();
  CHECK(pruned.d2_size() == 0);
  CHECK(pruned.d1().size() == data.d1().size());
  CHECK(pruned.d3().size() == data.d3().size());
  CHECK(pruned.class_count() == data.class_count());
  CHECK(pruned.provenance() == data.provenance());
}

TEST_CASE("dataset files round-trip every field") {
  ipr::SynthConfig config;
  config.d1_size = 30;
  config.d2_size = 40;
  config.d3_size = 8;
  ipr::SplitDataset data = ipr::generate_synthetic(config);

  const fs::path path = temp_file("ipr_test_roundtrip.jsonl");
  ipr::save_dataset(data, path.string());
  ipr::SplitDataset loaded = ipr::load_dataset(path.string());

  CHECK(loaded.class_count() == data.class_count());
  CHECK(loaded.feature_dim() == data.feature_dim());
  CHECK(loaded.provenance() == data.provenance());
  auto sa = data.all_samples();
  auto sb = loaded.all_samples();
  REQUIRE(sa.size() == sb.size());
  for (std::size_t i = 0; i < sa.size(); ++i) {
    CHECK(sa[i]->id == sb[i]->id);
    CHECK(sa[i]->features == sb[i]->features);  // bit-exact round trip
    CHECK(sa[i]->label == sb[i]->label);
    CHECK(sa[i]->split == sb[i]->split);
    CHECK(sa[i]->votes == sb[i]->votes);
  }

  // Saving the loaded copy reproduces the file byte for byte.
  const fs::path again = temp_file("ipr_test_roundtrip2.jsonl");
  ipr::save_dataset(loaded, again.string());
  CHECK(ipr::read_text_file(again) == ipr::read_text_file(path));
  fs::remove(path);
  fs::remove(again);
}

TEST_CASE("loading a missing file is an io error") {
  CHECK_THROWS_AS(ipr::load_dataset("/nonexistent/nowhere.jsonl"),
                  ipr::IoError);
}

TEST_CASE("parse errors carry the offending line number") {
  const fs::path path = temp_file("ipr_test_badline.jsonl");
  ipr::SplitDataset data = tiny_dataset();
  ipr::save_dataset(data, path.string());
  {
    std::ofstream out(path, std::ios::app);
    out << "{not json\n";
  }
  try {
    ipr::load_dataset(path.string());
    FAIL("expected a parse error");
  } catch (const ipr::ParseError& e) {
    const std::string msg = e.what();
    CHECK(msg.find(":10:") != std::string::npos);  // header + 8 samples + 1
  }
  fs::remove(path);
}

TEST_CASE("validator reports out-of-range labels by sample id") {
  const fs::path path = temp_file("ipr_test_badlabel.jsonl");
  ipr::SplitDataset data = tiny_dataset();
  ipr::save_dataset(data, path.string());
  std::string text = ipr::read_text_file(path);
  const std::string needle = "\"label\":1";
  const auto pos = text.find(needle);
  REQUIRE(pos != std::string::npos);
  text.replace(pos, needle.size(), "\"label\":7");
  ipr::write_text_file(path, text);

  std::vector<std::string> violations =
      ipr::validate_dataset_file(path.string());
  REQUIRE_FALSE(violations.empty());
  bool names_sample = false;
  for (const std::string& v : violations) {
    if (v.find("p2") != std::string::npos) names_sample = true;
  }
  CHECK(names_sample);
  fs::remove(path);
}

TEST_CASE("validator accepts a freshly generated file") {
  ipr::SynthConfig config;
  config.d1_size = 20;
  config.d2_size = 30;
  config.d3_size = 6;
  const fs::path path = temp_file("ipr_test_valid.jsonl");
  ipr::save_dataset(ipr::generate_synthetic(config), path.string());
  CHECK(ipr::validate_dataset_file(path.string()).empty());
  fs::remove(path);
}

TEST_CASE("standardize centers and scales on the training splits") {
  ipr::SynthConfig config;
  config.d1_size = 50;
  config.d2_size = 70;
  config.d3_size = 10;
  ipr::SplitDataset data = ipr::generate_synthetic(config);
  ipr::StandardizeResult result = ipr::standardize(data);

  const std::size_t dim = data.feature_dim();
  std::vector<double> sum(dim, 0.0), sum2(dim, 0.0);
  std::size_t n = 0;
  for (const FeatureSample* s : result.dataset.all_samples()) {
    if (s->split == Split::D3) continue;
    for (std::size_t d = 0; d < dim; ++d) {
      sum[d] += s->features[d];
      sum2[d] += s->features[d] * s->features[d];
    }
    ++n;
  }
  for (std::size_t d = 0; d < dim; ++d) {
    const double mean = sum[d] / static_cast<double>(n);
    const double var = sum2[d] / static_cast<double>(n) - mean * mean;
    CHECK(std::fabs(mean) < 1e-10);
    CHECK(std::fabs(var - 1.0) < 1e-8);
  }
  CHECK(result.clamped_dims.empty());
}

TEST_CASE("standardize clamps constant dimensions instead of dividing by zero") {
  std::vector<FeatureSample> samples;
  for (int i = 0; i < 4; ++i) {
    FeatureSample s;
    s.id = "s" + std::to_string(i);
    s.features = {5.0, static_cast<double>(i)};  // dim 0 constant
    s.label = static_cast<std::size_t>(i % 2);
    s.split = Split::D1;
    samples.push_back(std::move(s));
  }
  ipr::SplitDataset data(2, 2, "const-dim", std::move(samples));
  ipr::StandardizeResult result = ipr::standardize(data);
  REQUIRE(result.clamped_dims == std::vector<std::size_t>{0});
  CHECK(result.std_dev[0] == 1.0);
  for (const FeatureSample& s : result.dataset.d1()) {
    CHECK(s.features[0] == 0.0);  // centered, scale untouched
  }
}

TEST_CASE("split names round-trip") {
  for (Split split : {Split::D1, Split::D2, Split::D3}) {
    CHECK(ipr::split_from_name(ipr::split_name(split)) == split);
  }
  CHECK_THROWS_AS(ipr::split_from_name("d9"), ipr::ParseError);
}
