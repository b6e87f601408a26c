#include "ipr/prototypes.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

#include "ipr/errors.hpp"
#include "ipr/fp_format.hpp"

namespace ipr {

std::string soft_label_mode_name(SoftLabelMode mode) {
  switch (mode) {
    case SoftLabelMode::Softmax:
      return "softmax";
    case SoftLabelMode::RawClamped:
      return "raw_clamped";
  }
  throw InputError("soft_label_mode_name: unknown mode");
}

SoftLabelMode soft_label_mode_from_name(const std::string& name) {
  if (name == "softmax") return SoftLabelMode::Softmax;
  if (name == "raw_clamped") return SoftLabelMode::RawClamped;
  throw ConfigError("unknown soft label mode '" + name + "'");
}

void PrototypeOptions::validate() const {
  if (!(gamma >= 0.0 && gamma <= 1.0)) {
    throw ConfigError("prototypes: gamma must lie in [0, 1], got " +
                      format_double(gamma));
  }
  if (!(soft_temperature > 0.0)) {
    throw ConfigError("prototypes: soft_temperature must be positive");
  }
}

PrototypeBank::PrototypeBank(std::vector<Vector> prototypes,
                             PrototypeOptions options)
    : prototypes_(std::move(prototypes)), options_(options) {
  options_.validate();
  if (prototypes_.empty()) {
    throw InputError("prototypes: bank needs at least one class");
  }
  const std::size_t dim = prototypes_[0].size();
  for (std::size_t c = 0; c < prototypes_.size(); ++c) {
    if (prototypes_[c].size() != dim) {
      throw InputError("prototypes: inconsistent embedding dimension at class " +
                       std::to_string(c));
    }
    prototypes_[c] = l2_normalize(prototypes_[c]);
  }
  update_counts_.assign(prototypes_.size(), 0);
}

PrototypeBank PrototypeBank::initialize(
    const std::vector<Vector>& embeddings,
    const std::vector<std::size_t>& labels, std::size_t class_count,
    PrototypeOptions options) {
  if (embeddings.size() != labels.size()) {
    throw InputError("prototypes: embeddings and labels differ in length");
  }
  if (class_count == 0) {
    throw InputError("prototypes: class_count must be positive");
  }
  if (embeddings.empty()) {
    throw InputError("prototypes: no embeddings to initialize from");
  }
  const std::size_t dim = embeddings[0].size();
  std::vector<Vector> sums(class_count, Vector(dim, 0.0));
  std::vector<std::size_t> counts(class_count, 0);
  for (std::size_t i = 0; i < embeddings.size(); ++i) {
    if (labels[i] >= class_count) {
      throw InputError("prototypes: label " + std::to_string(labels[i]) +
                       " out of range at sample " + std::to_string(i));
    }
    const Vector unit = l2_normalize(embeddings[i]);
    Vector& sum = sums[labels[i]];
    for (std::size_t d = 0; d < dim; ++d) {
      sum[d] += unit[d];
    }
    ++counts[labels[i]];
  }
  for (std::size_t c = 0; c < class_count; ++c) {
    if (counts[c] == 0) {
      throw InputError("prototypes: class " + std::to_string(c) +
                       " has no embeddings to initialize from");
    }
    for (std::size_t d = 0; d < dim; ++d) {
      sums[c][d] /= static_cast<double>(counts[c]);
    }
  }
  return PrototypeBank(std::move(sums), options);
}

PrototypeBank PrototypeBank::from_saved(std::vector<Vector> prototypes,
                                        PrototypeOptions options,
                                        std::vector<std::uint64_t> update_counts,
                                        std::uint64_t degenerate_skips) {
  PrototypeBank bank(prototypes, options);  // validates shapes and options
  for (std::size_t c = 0; c < prototypes.size(); ++c) {
    if (std::abs(norm(prototypes[c]) - 1.0) > 1e-6) {
      throw ValidationError("prototypes: stored prototype " +
                            std::to_string(c) + " is not unit norm");
    }
    bank.prototypes_[c] = std::move(prototypes[c]);  // keep saved bits
  }
  if (update_counts.size() != bank.prototypes_.size()) {
    throw ValidationError("prototypes: update_counts length mismatch");
  }
  bank.update_counts_ = std::move(update_counts);
  bank.degenerate_skips_ = degenerate_skips;
  return bank;
}

SoftLabel PrototypeBank::soft_label(const Vector& embedding) const {
  SoftLabel result;
  result.raw_similarities.resize(prototypes_.size());
  for (std::size_t c = 0; c < prototypes_.size(); ++c) {
    result.raw_similarities[c] = dot(embedding, prototypes_[c]);
  }
  if (options_.soft_label_mode == SoftLabelMode::Softmax) {
    result.weights =
        softmax(result.raw_similarities, options_.soft_temperature);
  } else {
    result.weights.resize(prototypes_.size());
    for (std::size_t c = 0; c < prototypes_.size(); ++c) {
      result.weights[c] = std::clamp(result.raw_similarities[c], 0.0, 1.0);
    }
  }
  return result;
}

PseudoLabel PrototypeBank::pseudo_label(const Vector& embedding) const {
  PseudoLabel label;
  double best = dot(embedding, prototypes_[0]);
  label.class_index = 0;
  for (std::size_t c = 1; c < prototypes_.size(); ++c) {
    const double sim = dot(embedding, prototypes_[c]);
    if (sim > best) {
      best = sim;
      label.class_index = c;
    }
  }
  label.confidence = best;
  return label;
}

bool PrototypeBank::gated_update(const Vector& embedding, const SoftLabel& soft,
                                 std::size_t model_pred, std::size_t aug_pred) {
  if (model_pred >= prototypes_.size() || aug_pred >= prototypes_.size()) {
    throw InputError("prototypes: gate prediction out of range");
  }
  if (soft.weights.size() != prototypes_.size()) {
    throw InputError("prototypes: soft label has wrong class count");
  }
  if (model_pred != aug_pred) {
    return false;  // gate closed; bank untouched
  }
  const double gamma = options_.gamma;
  if (gamma == 1.0) {
    // Momentum-degenerate case: the update is the identity.  Skip the
    // renormalization so the stored values stay bit-identical.
    ++update_counts_[model_pred];
    return true;
  }
  auto update_class = [&](std::size_t c) {
    const double s = soft.weights[c];
    Vector blended(prototypes_[c].size());
    for (std::size_t d = 0; d < blended.size(); ++d) {
      blended[d] = gamma * prototypes_[c][d] + (1.0 - gamma) * s * embedding[d];
    }
    if (norm(blended) == 0.0 || !all_finite(blended)) {
      ++degenerate_skips_;
      return;
    }
    prototypes_[c] = l2_normalize(blended);
  };
  if (options_.update_all_classes) {
    for (std::size_t c = 0; c < prototypes_.size(); ++c) {
      update_class(c);
    }
  } else {
    update_class(model_pred);
  }
  ++update_counts_[model_pred];
  return true;
}

Matrix PrototypeBank::pairwise_similarity() const {
  const std::size_t n = prototypes_.size();
  Matrix sim(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      sim(i, j) = dot(prototypes_[i], prototypes_[j]);
    }
  }
  return sim;
}

const Vector& PrototypeBank::prototype(std::size_t c) const {
  if (c >= prototypes_.size()) {
    throw InputError("prototypes: class index " + std::to_string(c) +
                     " out of range");
  }
  return prototypes_[c];
}

std::size_t PrototypeBank::embedding_dim() const {
  return prototypes_[0].size();
}

namespace {

using json = nlohmann::ordered_json;

}  // namespace

std::string prototypes_string(const PrototypeBank& bank) {
  json j;
  j["schema_version"] = 1;
  j["kind"] = "prototype_bank";
  j["class_count"] = bank.class_count();
  j["embedding_dim"] = bank.embedding_dim();
  j["gamma"] = format_double(bank.options().gamma);
  j["soft_label_mode"] = soft_label_mode_name(bank.options().soft_label_mode);
  j["soft_temperature"] = format_double(bank.options().soft_temperature);
  j["update_all_classes"] = bank.options().update_all_classes;
  json protos = json::array();
  for (std::size_t c = 0; c < bank.class_count(); ++c) {
    json arr = json::array();
    for (double v : bank.prototype(c)) {
      arr.push_back(format_double(v));
    }
    protos.push_back(arr);
  }
  j["prototypes"] = protos;
  j["update_counts"] = bank.update_counts();
  j["degenerate_skips"] = bank.degenerate_skips();
  return j.dump(2) + "\n";
}

void save_prototypes(const std::string& path, const PrototypeBank& bank) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw IoError("cannot open prototype file for writing: " + path);
  }
  out << prototypes_string(bank);
  if (!out) {
    throw IoError("failed while writing prototype file: " + path);
  }
}

PrototypeBank load_prototypes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open prototype file: " + path);
  }
  json j;
  try {
    j = json::parse(in);
  } catch (const std::exception& e) {
    throw ParseError("prototype file " + path + ": " + e.what());
  }
  try {
    if (j.at("schema_version").get<int>() != 1) {
      throw ParseError("prototype file " + path + ": unsupported schema_version");
    }
    PrototypeOptions options;
    options.gamma = parse_double(j.at("gamma").get<std::string>());
    options.soft_label_mode =
        soft_label_mode_from_name(j.at("soft_label_mode").get<std::string>());
    options.soft_temperature =
        parse_double(j.at("soft_temperature").get<std::string>());
    options.update_all_classes = j.at("update_all_classes").get<bool>();
    std::vector<Vector> protos;
    for (const auto& arr : j.at("prototypes")) {
      Vector p;
      for (const auto& item : arr) {
        p.push_back(parse_double(item.get<std::string>()));
      }
      protos.push_back(std::move(p));
    }
    std::vector<std::uint64_t> counts =
        j.at("update_counts").get<std::vector<std::uint64_t>>();
    const std::uint64_t skips = j.at("degenerate_skips").get<std::uint64_t>();
    return PrototypeBank::from_saved(std::move(protos), options,
                                     std::move(counts), skips);
  } catch (const json::exception& e) {
    throw ParseError("prototype file " + path + ": " + e.what());
  }
}

}  // namespace ipr
