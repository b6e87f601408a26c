#include "ipr/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "ipr/errors.hpp"
#include "ipr/fp_format.hpp"

namespace ipr {

namespace {

using json = nlohmann::ordered_json;

std::string join(const std::vector<std::string>& parts, const char* sep) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i > 0) out += sep;
    out += parts[i];
  }
  return out;
}

std::vector<std::string> dataset_violations(
    std::size_t class_count, std::size_t feature_dim,
    const std::vector<FeatureSample>& samples) {
  std::vector<std::string> violations;
  if (class_count < 2) {
    violations.push_back("header: C must be at least 2");
  }
  if (feature_dim == 0) {
    violations.push_back("header: d_in must be positive");
  }
  std::set<std::string> seen_ids;
  std::vector<bool> d1_classes(class_count, false);
  std::optional<std::uint64_t> vote_total;
  bool any_d1 = false;
  for (const FeatureSample& s : samples) {
    const std::string where = "sample '" + s.id + "'";
    if (s.id.empty()) {
      violations.push_back("sample with empty id");
    } else if (!seen_ids.insert(s.id).second) {
      violations.push_back(where + ": duplicate id");
    }
    if (s.features.size() != feature_dim) {
      violations.push_back(where + ": features length " +
                           std::to_string(s.features.size()) +
                           " does not match d_in " +
                           std::to_string(feature_dim));
    }
    if (!all_finite(s.features)) {
      violations.push_back(where + ": non-finite feature value");
    }
    if ((s.split == Split::D1 || s.split == Split::D3) && !s.label) {
      violations.push_back(where + ": " + split_name(s.split) +
                           " sample is missing its label");
    }
    if (s.label && *s.label >= class_count) {
      violations.push_back(where + ": label " + std::to_string(*s.label) +
                           " out of range for C=" + std::to_string(class_count));
    }
    if (s.split == Split::D1) {
      any_d1 = true;
      if (s.label && *s.label < class_count) {
        d1_classes[*s.label] = true;
      }
    }
    if (s.votes) {
      if (s.votes->size() != class_count) {
        violations.push_back(where + ": votes length " +
                             std::to_string(s.votes->size()) +
                             " does not match C");
      } else {
        std::uint64_t total = 0;
        for (std::uint32_t v : *s.votes) total += v;
        if (total == 0) {
          violations.push_back(where + ": votes sum to zero");
        } else if (!vote_total) {
          vote_total = total;
        } else if (*vote_total != total) {
          violations.push_back(where + ": votes sum to " +
                               std::to_string(total) +
                               " but earlier samples sum to " +
                               std::to_string(*vote_total));
        }
      }
    }
  }
  if (any_d1) {
    for (std::size_t c = 0; c < class_count; ++c) {
      if (!d1_classes[c]) {
        violations.push_back("split D1 has no sample of class " +
                             std::to_string(c));
      }
    }
  } else {
    violations.push_back("split D1 is empty");
  }
  return violations;
}

}  // namespace

std::string split_name(Split split) {
  switch (split) {
    case Split::D1:
      return "D1";
    case Split::D2:
      return "D2";
    case Split::D3:
      return "D3";
  }
  throw InputError("split_name: unknown split");
}

Split split_from_name(const std::string& name) {
  if (name == "D1") return Split::D1;
  if (name == "D2") return Split::D2;
  if (name == "D3") return Split::D3;
  throw ParseError("unknown split '" + name + "'");
}

SplitDataset::SplitDataset(std::size_t class_count, std::size_t feature_dim,
                           std::string provenance,
                           std::vector<FeatureSample> samples)
    : class_count_(class_count),
      feature_dim_(feature_dim),
      provenance_(std::move(provenance)) {
  const std::vector<std::string> violations =
      dataset_violations(class_count, feature_dim, samples);
  if (!violations.empty()) {
    throw ValidationError("dataset invalid: " + join(violations, "; "));
  }
  for (FeatureSample& s : samples) {
    switch (s.split) {
      case Split::D1:
        d1_.push_back(std::move(s));
        break;
      case Split::D2:
        d2_.push_back(std::move(s));
        break;
      case Split::D3:
        d3_.push_back(std::move(s));
        break;
    }
  }
}

UnlabeledView SplitDataset::d2_view(std::size_t i) const {
  if (i >= d2_.size()) {
    throw InputError("d2_view: index out of range");
  }
  ++d2_accesses_;
  return UnlabeledView{d2_[i].id, d2_[i].features};
}

std::optional<std::size_t> SplitDataset::d2_truth(std::size_t i) const {
  if (i >= d2_.size()) {
    throw InputError("d2_truth: index out of range");
  }
  ++d2_accesses_;
  return d2_[i].label;
}

const std::string& SplitDataset::d2_id(std::size_t i) const {
  if (i >= d2_.size()) {
    throw InputError("d2_id: index out of range");
  }
  return d2_[i].id;
}

std::vector<const FeatureSample*> SplitDataset::all_samples() const {
  std::vector<const FeatureSample*> out;
  out.reserve(total_size());
  for (const auto& s : d1_) out.push_back(&s);
  for (const auto& s : d2_) out.push_back(&s);
  for (const auto& s : d3_) out.push_back(&s);
  return out;
}

SplitDataset SplitDataset::without_d2() const {
  SplitDataset copy;
  copy.class_count_ = class_count_;
  copy.feature_dim_ = feature_dim_;
  copy.provenance_ = provenance_;
  copy.d1_ = d1_;
  copy.d3_ = d3_;
  return copy;
}

void SynthConfig::validate() const {
  if (class_count < 2) {
    throw ConfigError("synth: class_count must be at least 2");
  }
  if (feature_dim == 0) {
    throw ConfigError("synth: feature_dim must be positive");
  }
  if (annotators == 0) {
    throw ConfigError("synth: annotators must be positive");
  }
  if (d1_size < class_count) {
    throw ConfigError("synth: d1_size must be at least class_count so every "
                      "class can appear in D1");
  }
  if (!(mean_scale > 0.0)) {
    throw ConfigError("synth: mean_scale must be positive");
  }
  if (!(cov_scale > 0.0)) {
    throw ConfigError("synth: cov_scale must be positive");
  }
  if (overlap < 0.0) {
    throw ConfigError("synth: overlap must be non-negative");
  }
  if (!(annotator_temperature > 0.0)) {
    throw ConfigError("synth: annotator_temperature must be positive");
  }
  if (!(t_low > 0.5) || !(t_low < t_high) || !(t_high <= 1.0)) {
    throw ConfigError("synth: thresholds must satisfy 0.5 < t_low < t_high <= 1.0");
  }
  if (magnitude_jitter < 0.0) {
    throw ConfigError("synth: magnitude_jitter must be non-negative");
  }
  if (blend_max < 0.0 || !(blend_max < 0.5)) {
    throw ConfigError("synth: blend_max must lie in [0, 0.5) so the generating "
                      "class stays the nearest center");
  }
}

namespace {

struct DrawnSample {
  Vector features;
  std::size_t label = 0;
  std::vector<std::uint32_t> votes;
  Split split = Split::D1;
};

std::vector<Vector> draw_cluster_means(const SynthConfig& cfg, RngStream& rng) {
  // Class centers sit on a sphere of radius mean_scale * sqrt(d): random
  // directions, equal magnitudes, so no class is separable by norm alone.
  const double radius = cfg.mean_scale * std::sqrt(static_cast<double>(cfg.feature_dim));
  std::vector<Vector> means;
  means.reserve(cfg.class_count);
  for (std::size_t c = 0; c < cfg.class_count; ++c) {
    Vector m = rng.gaussian_vector(cfg.feature_dim);
    double n = norm(m);
    while (!(n > 0.0)) {
      m = rng.gaussian_vector(cfg.feature_dim);
      n = norm(m);
    }
    for (double& v : m) v *= radius / n;
    means.push_back(std::move(m));
  }
  return means;
}

DrawnSample draw_sample(const SynthConfig& cfg, const std::vector<Vector>& means,
                        RngStream& sample_rng, RngStream& vote_rng) {
  DrawnSample s;
  s.label = sample_rng.next_index(cfg.class_count);
  s.features = means[s.label];
  // Ambiguity as content: a sample may blend toward the next class center
  // (lambda < 0.5 keeps the generating class dominant), so low-agreement
  // samples are genuine mixtures rather than just noisy cores.
  if (cfg.blend_max > 0.0) {
    const double lambda = cfg.blend_max * sample_rng.next_double();
    const Vector& next = means[(s.label + 1) % cfg.class_count];
    for (std::size_t d = 0; d < s.features.size(); ++d) {
      s.features[d] = (1.0 - lambda) * s.features[d] + lambda * next[d];
    }
  }
  const double sigma = cfg.cov_scale * cfg.overlap;
  for (double& v : s.features) {
    v += sigma * sample_rng.next_gaussian();
  }
  // Annotators vote by softmax over negative distances to each center.
  Vector neg_dist(cfg.class_count);
  for (std::size_t c = 0; c < cfg.class_count; ++c) {
    Vector diff = s.features;
    for (std::size_t d = 0; d < diff.size(); ++d) {
      diff[d] -= means[c][d];
    }
    neg_dist[c] = -norm(diff);
  }
  const Vector probs = softmax(neg_dist, cfg.annotator_temperature);
  s.votes.assign(cfg.class_count, 0);
  for (std::size_t a = 0; a < cfg.annotators; ++a) {
    const double u = vote_rng.next_double();
    double cum = 0.0;
    std::size_t pick = cfg.class_count - 1;
    for (std::size_t c = 0; c < cfg.class_count; ++c) {
      cum += probs[c];
      if (u < cum) {
        pick = c;
        break;
      }
    }
    ++s.votes[pick];
  }
  std::uint32_t top = *std::max_element(s.votes.begin(), s.votes.end());
  const double fraction =
      static_cast<double>(top) / static_cast<double>(cfg.annotators);
  if (fraction >= cfg.t_high) {
    s.split = Split::D1;
  } else if (fraction <= cfg.t_low) {
    s.split = Split::D3;
  } else {
    s.split = Split::D2;
  }
  // Recording-level loudness: annotators judge content (votes above use the
  // unscaled point), but stored features carry a lognormal magnitude factor.
  if (cfg.magnitude_jitter > 0.0) {
    const double g = std::exp(cfg.magnitude_jitter * sample_rng.next_gaussian());
    for (double& v : s.features) v *= g;
  }
  return s;
}

json synth_config_to_json(const SynthConfig& cfg) {
  json j;
  j["class_count"] = cfg.class_count;
  j["feature_dim"] = cfg.feature_dim;
  j["d1_size"] = cfg.d1_size;
  j["d2_size"] = cfg.d2_size;
  j["d3_size"] = cfg.d3_size;
  j["annotators"] = cfg.annotators;
  j["mean_scale"] = cfg.mean_scale;
  j["cov_scale"] = cfg.cov_scale;
  j["overlap"] = cfg.overlap;
  j["annotator_temperature"] = cfg.annotator_temperature;
  j["t_high"] = cfg.t_high;
  j["t_low"] = cfg.t_low;
  j["blend_max"] = cfg.blend_max;
  j["magnitude_jitter"] = cfg.magnitude_jitter;
  j["seed"] = cfg.seed;
  return j;
}

}  // namespace

SplitDataset generate_synthetic(const SynthConfig& cfg) {
  cfg.validate();
  RngStream root(cfg.seed);
  RngStream mean_rng = root.fork(1);
  RngStream sample_rng = root.fork(2);
  RngStream vote_rng = root.fork(3);
  const std::vector<Vector> means = draw_cluster_means(cfg, mean_rng);

  std::size_t remaining_d1 = cfg.d1_size;
  std::size_t remaining_d2 = cfg.d2_size;
  std::size_t remaining_d3 = cfg.d3_size;
  const std::size_t total = cfg.d1_size + cfg.d2_size + cfg.d3_size;
  const std::size_t budget = 400 * total + 10000;

  std::vector<FeatureSample> samples;
  samples.reserve(total);
  std::size_t attempts = 0;
  std::size_t next_id = 0;
  while (remaining_d1 + remaining_d2 + remaining_d3 > 0) {
    if (++attempts > budget) {
      std::vector<std::string> starved;
      if (remaining_d1 > 0) starved.push_back("D1");
      if (remaining_d2 > 0) starved.push_back("D2");
      if (remaining_d3 > 0) starved.push_back("D3");
      throw ConfigError(
          "generate_synthetic: could not fill split quota for " +
          join(starved, ", ") + " after " + std::to_string(attempts - 1) +
          " draws; adjust t_high/t_low, overlap, or annotator_temperature so "
          "each requested split actually occurs");
    }
    DrawnSample drawn = draw_sample(cfg, means, sample_rng, vote_rng);
    std::size_t* remaining = nullptr;
    switch (drawn.split) {
      case Split::D1:
        remaining = &remaining_d1;
        break;
      case Split::D2:
        remaining = &remaining_d2;
        break;
      case Split::D3:
        remaining = &remaining_d3;
        break;
    }
    if (*remaining == 0) {
      continue;  // quota already met; discard
    }
    --*remaining;
    FeatureSample s;
    char buf[16];
    std::snprintf(buf, sizeof(buf), "s%06zu", next_id++);
    s.id = buf;
    s.features = std::move(drawn.features);
    s.label = drawn.label;
    s.split = drawn.split;
    s.votes = std::move(drawn.votes);
    samples.push_back(std::move(s));
  }

  // The constructor enforces the class-coverage invariant for D1; surface a
  // friendlier error here because the fix is a different seed or bigger D1.
  std::vector<bool> covered(cfg.class_count, false);
  for (const FeatureSample& s : samples) {
    if (s.split == Split::D1) covered[*s.label] = true;
  }
  for (std::size_t c = 0; c < cfg.class_count; ++c) {
    if (!covered[c]) {
      throw ConfigError("generate_synthetic: class " + std::to_string(c) +
                        " never reached D1; increase d1_size or change seed");
    }
  }

  return SplitDataset(cfg.class_count, cfg.feature_dim,
                      synth_config_to_json(cfg).dump(), std::move(samples));
}

SplitCensus sample_census(const SynthConfig& cfg, std::size_t n) {
  cfg.validate();
  RngStream root(cfg.seed);
  RngStream mean_rng = root.fork(1);
  RngStream sample_rng = root.fork(2);
  RngStream vote_rng = root.fork(3);
  const std::vector<Vector> means = draw_cluster_means(cfg, mean_rng);
  SplitCensus census;
  for (std::size_t i = 0; i < n; ++i) {
    switch (draw_sample(cfg, means, sample_rng, vote_rng).split) {
      case Split::D1:
        ++census.d1;
        break;
      case Split::D2:
        ++census.d2;
        break;
      case Split::D3:
        ++census.d3;
        break;
    }
  }
  return census;
}

double SplitCensus::d1_fraction(std::size_t n) const {
  return n == 0 ? 0.0 : static_cast<double>(d1) / static_cast<double>(n);
}

double SplitCensus::d3_fraction(std::size_t n) const {
  return n == 0 ? 0.0 : static_cast<double>(d3) / static_cast<double>(n);
}

namespace {

json sample_to_json(const FeatureSample& s) {
  json j;
  j["id"] = s.id;
  j["split"] = split_name(s.split);
  j["features"] = s.features;
  if (s.label) {
    j["label"] = *s.label;
  } else {
    j["label"] = nullptr;
  }
  if (s.votes) {
    j["votes"] = *s.votes;
  } else {
    j["votes"] = nullptr;
  }
  return j;
}

FeatureSample sample_from_json(const json& j) {
  FeatureSample s;
  s.id = j.at("id").get<std::string>();
  s.split = split_from_name(j.at("split").get<std::string>());
  if (!j.at("features").is_array()) {
    throw ParseError("features must be an array");
  }
  for (const auto& item : j.at("features")) {
    if (!item.is_number()) {
      throw ParseError("features must be numeric");
    }
    s.features.push_back(item.get<double>());
  }
  const auto& label = j.at("label");
  if (!label.is_null()) {
    if (!label.is_number_unsigned()) {
      throw ParseError("label must be a non-negative integer or null");
    }
    s.label = label.get<std::size_t>();
  }
  const auto& votes = j.at("votes");
  if (!votes.is_null()) {
    std::vector<std::uint32_t> v;
    for (const auto& item : votes) {
      if (!item.is_number_unsigned()) {
        throw ParseError("votes must be non-negative integers");
      }
      v.push_back(item.get<std::uint32_t>());
    }
    s.votes = std::move(v);
  }
  return s;
}

struct ParsedFile {
  std::size_t class_count = 0;
  std::size_t feature_dim = 0;
  std::string provenance;
  std::vector<FeatureSample> samples;
};

ParsedFile parse_dataset_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open dataset: " + path);
  }
  ParsedFile parsed;
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const std::exception& e) {
      throw ParseError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
    try {
      if (!have_header) {
        if (!j.contains("schema_version") || !j.contains("C") ||
            !j.contains("d_in")) {
          throw ParseError("missing header: first line must carry "
                           "schema_version, C and d_in");
        }
        if (j.at("schema_version").get<int>() != 1) {
          throw ParseError("unsupported schema_version");
        }
        parsed.class_count = j.at("C").get<std::size_t>();
        parsed.feature_dim = j.at("d_in").get<std::size_t>();
        if (j.contains("provenance")) {
          parsed.provenance = j.at("provenance").is_string()
                                  ? j.at("provenance").get<std::string>()
                                  : j.at("provenance").dump();
        }
        have_header = true;
        continue;
      }
      parsed.samples.push_back(sample_from_json(j));
    } catch (const json::exception& e) {
      throw ParseError(path + ":" + std::to_string(line_no) + ": " + e.what());
    } catch (const ParseError& e) {
      throw ParseError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (!have_header) {
    throw ParseError(path + ": missing header: file is empty");
  }
  return parsed;
}

}  // namespace

void save_dataset(const SplitDataset& dataset, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw IoError("cannot open dataset for writing: " + path);
  }
  json header;
  header["schema_version"] = 1;
  header["C"] = dataset.class_count();
  header["d_in"] = dataset.feature_dim();
  if (!dataset.provenance().empty()) {
    header["provenance"] = dataset.provenance();
  }
  out << header.dump() << "\n";
  for (const FeatureSample* s : dataset.all_samples()) {
    out << sample_to_json(*s).dump() << "\n";
  }
  if (!out) {
    throw IoError("failed while writing dataset: " + path);
  }
}

SplitDataset load_dataset(const std::string& path) {
  ParsedFile parsed = parse_dataset_file(path);
  return SplitDataset(parsed.class_count, parsed.feature_dim,
                      std::move(parsed.provenance), std::move(parsed.samples));
}

std::vector<std::string> validate_dataset_file(const std::string& path) {
  ParsedFile parsed;
  try {
    parsed = parse_dataset_file(path);
  } catch (const ParseError& e) {
    return {e.what()};
  }
  return dataset_violations(parsed.class_count, parsed.feature_dim,
                            parsed.samples);
}

StandardizeResult standardize(const SplitDataset& dataset) {
  const std::size_t dim = dataset.feature_dim();
  std::vector<const FeatureSample*> fit;
  for (const FeatureSample* s : dataset.all_samples()) {
    if (s->split != Split::D3) {
      fit.push_back(s);
    }
  }
  if (fit.empty()) {
    throw InputError("standardize: no D1/D2 samples to fit on");
  }
  StandardizeResult result;
  result.mean.assign(dim, 0.0);
  result.std_dev.assign(dim, 0.0);
  for (const FeatureSample* s : fit) {
    for (std::size_t d = 0; d < dim; ++d) {
      result.mean[d] += s->features[d];
    }
  }
  const double n = static_cast<double>(fit.size());
  for (std::size_t d = 0; d < dim; ++d) {
    result.mean[d] /= n;
  }
  for (const FeatureSample* s : fit) {
    for (std::size_t d = 0; d < dim; ++d) {
      const double delta = s->features[d] - result.mean[d];
      result.std_dev[d] += delta * delta;
    }
  }
  for (std::size_t d = 0; d < dim; ++d) {
    result.std_dev[d] = std::sqrt(result.std_dev[d] / n);
    if (result.std_dev[d] == 0.0) {
      result.std_dev[d] = 1.0;  // constant dimension; centering still applies
      result.clamped_dims.push_back(d);
    }
  }
  std::vector<FeatureSample> transformed;
  transformed.reserve(dataset.total_size());
  for (const FeatureSample* s : dataset.all_samples()) {
    FeatureSample t = *s;
    for (std::size_t d = 0; d < dim; ++d) {
      t.features[d] = (t.features[d] - result.mean[d]) / result.std_dev[d];
    }
    transformed.push_back(std::move(t));
  }
  result.dataset = SplitDataset(dataset.class_count(), dim,
                                dataset.provenance(), std::move(transformed));
  return result;
}

}  // namespace ipr
