#include "ipr/run_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "ipr/errors.hpp"
#include "ipr/fp_format.hpp"

namespace ipr {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

void require_known_keys(const json& j, const std::set<std::string>& allowed,
                        const std::string& what) {
  if (!j.is_object()) {
    throw ConfigError(what + ": expected a JSON object");
  }
  for (const auto& item : j.items()) {
    if (allowed.find(item.key()) == allowed.end()) {
      throw ConfigError(what + ": unknown key '" + item.key() + "'");
    }
  }
}

double get_double(const json& j, const char* key, double fallback) {
  if (!j.contains(key)) return fallback;
  const json& v = j.at(key);
  if (!v.is_number()) {
    throw ConfigError(std::string("config: '") + key + "' must be a number");
  }
  return v.get<double>();
}

std::size_t get_size(const json& j, const char* key, std::size_t fallback) {
  if (!j.contains(key)) return fallback;
  const json& v = j.at(key);
  if (!v.is_number_integer() || v.get<long long>() < 0) {
    throw ConfigError(std::string("config: '") + key +
                      "' must be a non-negative integer");
  }
  return v.get<std::size_t>();
}

std::uint64_t get_u64(const json& j, const char* key, std::uint64_t fallback) {
  if (!j.contains(key)) return fallback;
  const json& v = j.at(key);
  if (!v.is_number_integer() || v.get<long long>() < 0) {
    throw ConfigError(std::string("config: '") + key +
                      "' must be a non-negative integer");
  }
  return v.get<std::uint64_t>();
}

bool get_bool(const json& j, const char* key, bool fallback) {
  if (!j.contains(key)) return fallback;
  const json& v = j.at(key);
  if (!v.is_boolean()) {
    throw ConfigError(std::string("config: '") + key + "' must be a boolean");
  }
  return v.get<bool>();
}

std::string get_string(const json& j, const char* key,
                       const std::string& fallback) {
  if (!j.contains(key)) return fallback;
  const json& v = j.at(key);
  if (!v.is_string()) {
    throw ConfigError(std::string("config: '") + key + "' must be a string");
  }
  return v.get<std::string>();
}

template <typename T>
std::vector<T> get_uint_vector(const json& j, const char* key,
                               std::vector<T> fallback) {
  if (!j.contains(key)) return fallback;
  const json& v = j.at(key);
  if (!v.is_array()) {
    throw ConfigError(std::string("config: '") + key + "' must be an array");
  }
  std::vector<T> out;
  out.reserve(v.size());
  for (const json& e : v) {
    if (!e.is_number_integer() || e.get<long long>() < 0) {
      throw ConfigError(std::string("config: '") + key +
                        "' entries must be non-negative integers");
    }
    out.push_back(e.get<T>());
  }
  return out;
}

json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw IoError("cannot open config file '" + path + "'");
  }
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw ParseError(path + ": " + e.what());
  }
  return j;
}

}  // namespace

nlohmann::ordered_json train_config_to_json(const TrainConfig& config) {
  ordered_json j;
  j["mode"] = train_mode_name(config.mode);
  j["epochs"] = config.epochs;
  j["warmup_epochs"] = config.warmup_epochs;
  j["batch_size"] = config.batch_size;
  j["alpha"] = config.alpha;
  j["mu"] = config.mu;
  j["weight_m"] = config.weight_m;
  j["growth_factor"] = config.growth_factor;
  j["gamma"] = config.gamma;
  j["tau"] = config.tau;
  j["soft_label_temperature"] = config.soft_label_temperature;
  j["soft_label_mode"] = soft_label_mode_name(config.soft_label_mode);
  j["contrastive_mode"] = contrastive_mode_name(config.contrastive_mode);
  j["update_all_classes"] = config.update_all_classes;
  j["reinit_prototypes_each_epoch"] = config.reinit_prototypes_each_epoch;
  j["learning_rate"] = config.learning_rate;
  j["weight_decay"] = config.weight_decay;
  j["lr_schedule"] = lr_schedule_name(config.lr_schedule);
  j["encoder_hidden"] = config.encoder_hidden;
  j["embedding_dim"] = config.embedding_dim;
  j["classifier_hidden"] = config.classifier_hidden;
  ordered_json aug;
  aug["apply_prob"] = config.augmentation.apply_prob;
  aug["noise_sigma"] = config.augmentation.noise_sigma;
  aug["scale_min"] = config.augmentation.scale_min;
  aug["scale_max"] = config.augmentation.scale_max;
  aug["dropout_rate"] = config.augmentation.dropout_rate;
  aug["mix_lambda_min"] = config.augmentation.mix_lambda_min;
  aug["mix_lambda_max"] = config.augmentation.mix_lambda_max;
  j["augmentation"] = std::move(aug);
  j["seeds"] = config.seeds;
  return j;
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  static const std::set<std::string> kKeys = {
      "mode",           "epochs",
      "warmup_epochs",  "batch_size",
      "alpha",          "mu",
      "weight_m",       "growth_factor",
      "gamma",          "tau",
      "soft_label_temperature", "soft_label_mode",
      "contrastive_mode",       "update_all_classes",
      "reinit_prototypes_each_epoch", "learning_rate",
      "weight_decay",   "lr_schedule",
      "encoder_hidden",
      "embedding_dim",  "classifier_hidden",
      "augmentation",   "seeds"};
  require_known_keys(j, kKeys, "train config");
  TrainConfig c;
  c.mode = train_mode_from_name(get_string(j, "mode", train_mode_name(c.mode)));
  c.epochs = get_size(j, "epochs", c.epochs);
  c.warmup_epochs = get_size(j, "warmup_epochs", c.warmup_epochs);
  c.batch_size = get_size(j, "batch_size", c.batch_size);
  c.alpha = get_double(j, "alpha", c.alpha);
  c.mu = get_double(j, "mu", c.mu);
  c.weight_m = get_double(j, "weight_m", c.weight_m);
  c.growth_factor = get_double(j, "growth_factor", c.growth_factor);
  c.gamma = get_double(j, "gamma", c.gamma);
  c.tau = get_double(j, "tau", c.tau);
  c.soft_label_temperature =
      get_double(j, "soft_label_temperature", c.soft_label_temperature);
  c.soft_label_mode = soft_label_mode_from_name(
      get_string(j, "soft_label_mode", soft_label_mode_name(c.soft_label_mode)));
  c.contrastive_mode = contrastive_mode_from_name(get_string(
      j, "contrastive_mode", contrastive_mode_name(c.contrastive_mode)));
  c.update_all_classes =
      get_bool(j, "update_all_classes", c.update_all_classes);
  c.reinit_prototypes_each_epoch = get_bool(j, "reinit_prototypes_each_epoch",
                                            c.reinit_prototypes_each_epoch);
  c.learning_rate = get_double(j, "learning_rate", c.learning_rate);
  c.weight_decay = get_double(j, "weight_decay", c.weight_decay);
  c.lr_schedule = lr_schedule_from_name(
      get_string(j, "lr_schedule", lr_schedule_name(c.lr_schedule)));
  c.encoder_hidden =
      get_uint_vector<std::size_t>(j, "encoder_hidden", c.encoder_hidden);
  c.embedding_dim = get_size(j, "embedding_dim", c.embedding_dim);
  c.classifier_hidden =
      get_uint_vector<std::size_t>(j, "classifier_hidden", c.classifier_hidden);
  if (j.contains("augmentation")) {
    static const std::set<std::string> kAugKeys = {
        "apply_prob",     "noise_sigma",    "scale_min",      "scale_max",
        "dropout_rate",   "mix_lambda_min", "mix_lambda_max"};
    const json& a = j.at("augmentation");
    require_known_keys(a, kAugKeys, "augmentation");
    AugmentationPolicy& p = c.augmentation;
    p.apply_prob = get_double(a, "apply_prob", p.apply_prob);
    p.noise_sigma = get_double(a, "noise_sigma", p.noise_sigma);
    p.scale_min = get_double(a, "scale_min", p.scale_min);
    p.scale_max = get_double(a, "scale_max", p.scale_max);
    p.dropout_rate = get_double(a, "dropout_rate", p.dropout_rate);
    p.mix_lambda_min = get_double(a, "mix_lambda_min", p.mix_lambda_min);
    p.mix_lambda_max = get_double(a, "mix_lambda_max", p.mix_lambda_max);
  }
  c.seeds = get_uint_vector<std::uint64_t>(j, "seeds", c.seeds);
  c.validate();
  return c;
}

TrainConfig load_train_config(const std::string& path) {
  return train_config_from_json(load_json_file(path));
}

nlohmann::ordered_json synth_config_to_json(const SynthConfig& config) {
  ordered_json j;
  j["class_count"] = config.class_count;
  j["feature_dim"] = config.feature_dim;
  j["d1_size"] = config.d1_size;
  j["d2_size"] = config.d2_size;
  j["d3_size"] = config.d3_size;
  j["annotators"] = config.annotators;
  j["mean_scale"] = config.mean_scale;
  j["cov_scale"] = config.cov_scale;
  j["overlap"] = config.overlap;
  j["annotator_temperature"] = config.annotator_temperature;
  j["t_high"] = config.t_high;
  j["t_low"] = config.t_low;
  j["blend_max"] = config.blend_max;
  j["magnitude_jitter"] = config.magnitude_jitter;
  j["seed"] = config.seed;
  return j;
}

SynthConfig synth_config_from_json(const nlohmann::json& j) {
  static const std::set<std::string> kKeys = {
      "class_count", "feature_dim", "d1_size",
      "d2_size",     "d3_size",     "annotators",
      "mean_scale",  "cov_scale",   "overlap",
      "annotator_temperature",      "t_high",
      "t_low",       "blend_max",
      "magnitude_jitter",           "seed"};
  require_known_keys(j, kKeys, "synth config");
  SynthConfig c;
  c.class_count = get_size(j, "class_count", c.class_count);
  c.feature_dim = get_size(j, "feature_dim", c.feature_dim);
  c.d1_size = get_size(j, "d1_size", c.d1_size);
  c.d2_size = get_size(j, "d2_size", c.d2_size);
  c.d3_size = get_size(j, "d3_size", c.d3_size);
  c.annotators = get_size(j, "annotators", c.annotators);
  c.mean_scale = get_double(j, "mean_scale", c.mean_scale);
  c.cov_scale = get_double(j, "cov_scale", c.cov_scale);
  c.overlap = get_double(j, "overlap", c.overlap);
  c.annotator_temperature =
      get_double(j, "annotator_temperature", c.annotator_temperature);
  c.t_high = get_double(j, "t_high", c.t_high);
  c.t_low = get_double(j, "t_low", c.t_low);
  c.blend_max = get_double(j, "blend_max", c.blend_max);
  c.magnitude_jitter = get_double(j, "magnitude_jitter", c.magnitude_jitter);
  c.seed = get_u64(j, "seed", c.seed);
  c.validate();
  return c;
}

SynthConfig load_synth_config(const std::string& path) {
  return synth_config_from_json(load_json_file(path));
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open '" + path.string() + "' for reading");
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  if (!in.good() && !in.eof()) {
    throw IoError("failed while reading '" + path.string() + "'");
  }
  return buf.str();
}

void write_text_file(const std::filesystem::path& path,
                     const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) {
    throw IoError("cannot open '" + path.string() + "' for writing");
  }
  out << content;
  out.flush();
  if (!out.good()) {
    throw IoError("failed while writing '" + path.string() + "'");
  }
}

void prepare_run_dir(const std::filesystem::path& dir, bool force) {
  std::error_code ec;
  if (fs::exists(dir, ec)) {
    if (!force) {
      throw IoError("output directory '" + dir.string() +
                    "' already exists (pass --force to overwrite)");
    }
    fs::remove_all(dir, ec);
    if (ec) {
      throw IoError("cannot clear '" + dir.string() + "': " + ec.message());
    }
  }
  fs::create_directories(dir, ec);
  if (ec) {
    throw IoError("cannot create '" + dir.string() + "': " + ec.message());
  }
}

std::string metrics_csv_string(const std::vector<EpochMetrics>& epochs) {
  std::string out =
      "epoch,accuracy,beta,loss_precise,loss_ambiguous,loss_contrastive,"
      "agreement_model,agreement_prototype\n";
  for (const EpochMetrics& em : epochs) {
    out += std::to_string(em.epoch);
    out += ',';
    if (std::isfinite(em.accuracy)) out += format_double(em.accuracy);
    out += ',';
    out += format_double(em.beta);
    out += ',';
    out += format_double(em.loss_precise);
    out += ',';
    out += format_double(em.loss_ambiguous);
    out += ',';
    out += format_double(em.loss_contrastive);
    out += ',';
    if (em.agreement_model) out += format_double(*em.agreement_model);
    out += ',';
    if (em.agreement_prototype) out += format_double(*em.agreement_prototype);
    out += '\n';
  }
  return out;
}

std::string prototype_similarity_csv_string(
    const std::vector<EpochMetrics>& epochs) {
  std::size_t classes = 0;
  for (const EpochMetrics& em : epochs) {
    if (em.prototype_similarity) {
      classes = em.prototype_similarity->rows;
      break;
    }
  }
  if (classes == 0) return "";
  std::string out = "epoch";
  for (std::size_t i = 0; i < classes; ++i) {
    for (std::size_t k = 0; k < classes; ++k) {
      out += ",sim_" + std::to_string(i) + "_" + std::to_string(k);
    }
  }
  out += '\n';
  for (const EpochMetrics& em : epochs) {
    if (!em.prototype_similarity) continue;
    const Matrix& m = *em.prototype_similarity;
    if (m.rows != classes || m.cols != classes) {
      throw InputError("prototype similarity snapshots disagree on size");
    }
    out += std::to_string(em.epoch);
    for (double v : m.values) {
      out += ',';
      out += format_double(v);
    }
    out += '\n';
  }
  return out;
}

std::string pseudo_report_jsonl_string(
    const std::vector<PseudoLabelRow>& rows) {
  std::string out;
  for (const PseudoLabelRow& row : rows) {
    ordered_json j;
    j["id"] = row.id;
    ordered_json weights = ordered_json::array();
    for (double w : row.soft_weights) weights.push_back(format_double(w));
    j["soft_weights"] = std::move(weights);
    j["pseudo_label"] = row.pseudo_label;
    j["confidence"] = format_double(row.confidence);
    j["model_label"] = row.model_label;
    if (row.ground_truth) {
      j["ground_truth"] = *row.ground_truth;
    } else {
      j["ground_truth"] = nullptr;
    }
    out += j.dump();
    out += '\n';
  }
  return out;
}

std::string aggregate_json_string(const MultiSeedResult& result,
                                  TrainMode mode) {
  ordered_json j;
  j["schema_version"] = 1;
  j["kind"] = "train_aggregate";
  j["mode"] = train_mode_name(mode);
  ordered_json seeds = ordered_json::array();
  for (const SeedOutcome& outcome : result.outcomes) {
    ordered_json s;
    s["seed"] = outcome.seed;
    s["ok"] = outcome.ok;
    if (outcome.ok && outcome.result) {
      s["final_accuracy"] = outcome.result->metrics.final_accuracy;
      s["degraded_to_baseline"] = outcome.result->degraded_to_baseline;
    } else {
      s["error"] = outcome.error;
    }
    seeds.push_back(std::move(s));
  }
  j["seeds"] = std::move(seeds);
  j["mean_final_accuracy"] = result.mean_final_accuracy;
  j["std_final_accuracy"] = result.std_final_accuracy;
  j["failed_seeds"] = result.failed;
  return j.dump(2) + "\n";
}

void write_run_artifacts(const std::filesystem::path& dir,
                         const nlohmann::ordered_json& resolved_config,
                         const MultiSeedResult& result, TrainMode mode) {
  write_text_file(dir / "resolved_config.json", resolved_config.dump(2) + "\n");
  for (const SeedOutcome& outcome : result.outcomes) {
    if (!outcome.ok || !outcome.result) continue;
    const TrainRunResult& r = *outcome.result;
    const std::string tag = "seed" + std::to_string(outcome.seed);
    write_text_file(dir / ("metrics_" + tag + ".csv"),
                    metrics_csv_string(r.metrics.epochs));
    const AdamW* opt = r.optimizer ? &*r.optimizer : nullptr;
    write_text_file(dir / ("checkpoint_" + tag + ".json"),
                    checkpoint_string(r.params, opt));
    if (r.bank) {
      write_text_file(dir / ("prototypes_" + tag + ".json"),
                      prototypes_string(*r.bank));
    }
    if (!r.pseudo_report.empty()) {
      write_text_file(dir / ("pseudo_labels_" + tag + ".jsonl"),
                      pseudo_report_jsonl_string(r.pseudo_report));
    }
    const std::string proto_csv =
        prototype_similarity_csv_string(r.metrics.epochs);
    if (!proto_csv.empty()) {
      write_text_file(dir / ("prototype_similarity_" + tag + ".csv"),
                      proto_csv);
    }
  }
  write_text_file(dir / "aggregate.json", aggregate_json_string(result, mode));
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cell);
      cell.clear();
    } else {
      cell += ch;
    }
  }
  out.push_back(cell);
  return out;
}

std::vector<std::vector<std::string>> parse_csv(const std::string& text,
                                                const std::string& what) {
  std::vector<std::vector<std::string>> rows;
  std::string line;
  std::istringstream in(text);
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    rows.push_back(split_csv_line(line));
  }
  if (rows.empty()) {
    throw ParseError(what + ": empty CSV");
  }
  for (const auto& row : rows) {
    if (row.size() != rows.front().size()) {
      throw ParseError(what + ": ragged CSV row");
    }
  }
  return rows;
}

void append_tidy_rows(std::string& out, const fs::path& file,
                      std::uint64_t seed) {
  const auto rows = parse_csv(read_text_file(file), file.string());
  const std::vector<std::string>& header = rows.front();
  if (header.empty() || header.front() != "epoch") {
    throw ParseError(file.string() + ": first CSV column must be 'epoch'");
  }
  for (std::size_t r = 1; r < rows.size(); ++r) {
    for (std::size_t c = 1; c < header.size(); ++c) {
      if (rows[r][c].empty()) continue;
      out += rows[r][0];
      out += ',';
      out += std::to_string(seed);
      out += ',';
      out += header[c];
      out += ',';
      out += rows[r][c];
      out += '\n';
    }
  }
}

}  // namespace

std::string export_curves_csv(const std::filesystem::path& run_dir) {
  if (!fs::is_directory(run_dir)) {
    throw InputError("run directory '" + run_dir.string() + "' does not exist");
  }
  const std::string prefix = "metrics_seed";
  const std::string suffix = ".csv";
  std::vector<std::uint64_t> seeds;
  for (const auto& entry : fs::directory_iterator(run_dir)) {
    if (!entry.is_regular_file()) continue;
    const std::string name = entry.path().filename().string();
    if (name.size() <= prefix.size() + suffix.size()) continue;
    if (name.compare(0, prefix.size(), prefix) != 0) continue;
    if (name.compare(name.size() - suffix.size(), suffix.size(), suffix) != 0) {
      continue;
    }
    const std::string digits =
        name.substr(prefix.size(), name.size() - prefix.size() - suffix.size());
    if (digits.empty() ||
        digits.find_first_not_of("0123456789") != std::string::npos) {
      continue;
    }
    seeds.push_back(std::strtoull(digits.c_str(), nullptr, 10));
  }
  if (seeds.empty()) {
    throw InputError("no metrics CSVs found in '" + run_dir.string() + "'");
  }
  std::sort(seeds.begin(), seeds.end());
  std::string out = "epoch,seed,metric,value\n";
  for (std::uint64_t seed : seeds) {
    const std::string tag = "seed" + std::to_string(seed);
    append_tidy_rows(out, run_dir / ("metrics_" + tag + ".csv"), seed);
    const fs::path proto = run_dir / ("prototype_similarity_" + tag + ".csv");
    if (fs::exists(proto)) {
      append_tidy_rows(out, proto, seed);
    }
  }
  return out;
}

}  // namespace ipr
