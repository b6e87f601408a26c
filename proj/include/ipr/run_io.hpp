#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "ipr/data.hpp"
#include "ipr/pipeline.hpp"

namespace ipr {

// JSON round-trips for the two config schemas.  Parsing accepts partial
// documents (absent keys keep defaults) and rejects unknown keys.
nlohmann::ordered_json train_config_to_json(const TrainConfig& config);
TrainConfig train_config_from_json(const nlohmann::json& j);
TrainConfig load_train_config(const std::string& path);

nlohmann::ordered_json synth_config_to_json(const SynthConfig& config);
SynthConfig synth_config_from_json(const nlohmann::json& j);
SynthConfig load_synth_config(const std::string& path);

// Small text-file helpers used by every artifact writer.
std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path,
                     const std::string& content);

// Creates `dir` (parents included).  An existing directory is refused unless
// `force`, in which case its contents are removed first.
void prepare_run_dir(const std::filesystem::path& dir, bool force);

// Per-seed training curves.  Optional columns are left empty on epochs where
// the quantity is undefined; every float is a %.17g round-trip string.
std::string metrics_csv_string(const std::vector<EpochMetrics>& epochs);

// Flattened prototype pairwise-similarity snapshots, one row per epoch that
// carries a matrix.  Empty string when no epoch does.
std::string prototype_similarity_csv_string(
    const std::vector<EpochMetrics>& epochs);

// One JSON object per D2 sample: id, soft assignment, pseudo label,
// confidence, model label and ground truth when known.
std::string pseudo_report_jsonl_string(const std::vector<PseudoLabelRow>& rows);

// Cross-seed summary: per-seed final accuracies, mean, sample std, failures.
std::string aggregate_json_string(const MultiSeedResult& result,
                                  TrainMode mode);

// Writes resolved_config.json, aggregate.json and the per-seed artifacts
// (metrics CSV, checkpoint, and for ipr runs the prototype bank, similarity
// snapshots and pseudo-label report) into `dir`.
void write_run_artifacts(const std::filesystem::path& dir,
                         const nlohmann::ordered_json& resolved_config,
                         const MultiSeedResult& result, TrainMode mode);

// Merges the per-seed CSV artifacts found in `run_dir` into one tidy table
// (epoch,seed,metric,value).  Values pass through byte-for-byte; empty cells
// are dropped.  Deterministic for a given directory state.
std::string export_curves_csv(const std::filesystem::path& run_dir);

}  // namespace ipr
