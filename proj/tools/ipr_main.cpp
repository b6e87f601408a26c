#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "ipr/data.hpp"
#include "ipr/errors.hpp"
#include "ipr/fp_format.hpp"
#include "ipr/model.hpp"
#include "ipr/pipeline.hpp"
#include "ipr/run_io.hpp"

namespace fs = std::filesystem;

namespace {

struct GenDataArgs {
  std::string config;
  std::string out;
  bool force = false;
};

void run_gen_data(const GenDataArgs& args) {
  ipr::SynthConfig config;
  if (!args.config.empty()) {
    config = ipr::load_synth_config(args.config);
  } else {
    config.validate();
  }
  if (fs::exists(args.out) && !args.force) {
    throw ipr::IoError("output file '" + args.out +
                       "' already exists (pass --force to overwrite)");
  }
  const ipr::SplitDataset dataset = ipr::generate_synthetic(config);
  ipr::save_dataset(dataset, args.out);
  std::cout << "dataset: " << args.out << "\n";
  std::cout << "classes: " << dataset.class_count()
            << " feature_dim: " << dataset.feature_dim() << "\n";
  std::cout << "D1: " << dataset.d1().size() << " D2: " << dataset.d2_size()
            << " D3: " << dataset.d3().size() << "\n";
  double frac_sum[3] = {0.0, 0.0, 0.0};
  std::size_t counts[3] = {0, 0, 0};
  for (const ipr::FeatureSample* s : dataset.all_samples()) {
    if (!s->votes) continue;
    std::uint32_t top = 0;
    std::uint32_t total = 0;
    for (std::uint32_t v : *s->votes) {
      top = std::max(top, v);
      total += v;
    }
    const auto k = static_cast<std::size_t>(s->split);
    frac_sum[k] += static_cast<double>(top) / static_cast<double>(total);
    ++counts[k];
  }
  std::cout << "mean majority fraction:";
  const char* names[3] = {"D1", "D2", "D3"};
  for (int k = 0; k < 3; ++k) {
    std::cout << ' ' << names[k] << '=';
    if (counts[k] > 0) {
      char buf[16];
      std::snprintf(buf, sizeof(buf), "%.3f",
                    frac_sum[k] / static_cast<double>(counts[k]));
      std::cout << buf;
    } else {
      std::cout << "n/a";
    }
  }
  std::cout << "\n";
}

struct TrainArgs {
  std::string dataset;
  std::string out;
  std::string config;
  bool standardize = false;
  bool force = false;

  std::string mode;
  std::vector<std::uint64_t> seeds;
  std::uint64_t epochs = 0;
  std::uint64_t warmup_epochs = 0;
  std::uint64_t batch_size = 0;
  double alpha = 0.0;
  double mu = 0.0;
  double weight_m = 0.0;
  double growth_factor = 0.0;
  double gamma = 0.0;
  double tau = 0.0;
  double learning_rate = 0.0;
  double weight_decay = 0.0;
  std::string lr_schedule;
  std::uint64_t embedding_dim = 0;
  bool quiet = false;
};

void run_train(const TrainArgs& args, const CLI::App& cmd) {
  if (!fs::exists(args.dataset)) {
    throw ipr::InputError("dataset file '" + args.dataset + "' does not exist");
  }
  ipr::TrainConfig config;
  if (!args.config.empty()) {
    config = ipr::load_train_config(args.config);
  }
  if (cmd.count("--mode")) config.mode = ipr::train_mode_from_name(args.mode);
  if (cmd.count("--seeds")) config.seeds = args.seeds;
  if (cmd.count("--epochs")) config.epochs = args.epochs;
  if (cmd.count("--warmup-epochs")) config.warmup_epochs = args.warmup_epochs;
  if (cmd.count("--batch-size")) config.batch_size = args.batch_size;
  if (cmd.count("--alpha")) config.alpha = args.alpha;
  if (cmd.count("--mu")) config.mu = args.mu;
  if (cmd.count("--weight-m")) config.weight_m = args.weight_m;
  if (cmd.count("--growth-factor")) config.growth_factor = args.growth_factor;
  if (cmd.count("--gamma")) config.gamma = args.gamma;
  if (cmd.count("--tau")) config.tau = args.tau;
  if (cmd.count("--learning-rate")) config.learning_rate = args.learning_rate;
  if (cmd.count("--weight-decay")) config.weight_decay = args.weight_decay;
  if (cmd.count("--lr-schedule")) {
    config.lr_schedule = ipr::lr_schedule_from_name(args.lr_schedule);
  }
  if (cmd.count("--embedding-dim")) config.embedding_dim = args.embedding_dim;
  config.validate();

  ipr::SplitDataset dataset = ipr::load_dataset(args.dataset);
  if (args.standardize) {
    dataset = ipr::standardize(dataset).dataset;
  }

  ipr::prepare_run_dir(args.out, args.force);

  nlohmann::ordered_json resolved;
  resolved["schema_version"] = 1;
  resolved["kind"] = "train_run";
  resolved["dataset"] = args.dataset;
  resolved["standardize"] = args.standardize;
  resolved["config"] = ipr::train_config_to_json(config);

  ipr::SeedEpochCallback on_epoch;
  if (!args.quiet) {
    const std::size_t total_epochs = config.epochs;
    on_epoch = [total_epochs](std::uint64_t seed, const ipr::EpochMetrics& em) {
      char line[256];
      std::snprintf(line, sizeof(line),
                    "[seed %llu] epoch %zu/%zu acc=%.4f beta=%.4f lp=%.4f "
                    "la=%.4f lc=%.4f",
                    static_cast<unsigned long long>(seed), em.epoch + 1,
                    total_epochs, em.accuracy, em.beta, em.loss_precise,
                    em.loss_ambiguous, em.loss_contrastive);
      std::cerr << line;
      if (em.agreement_model) {
        std::cerr << " agree_model=" << *em.agreement_model;
      }
      if (em.agreement_prototype) {
        std::cerr << " agree_proto=" << *em.agreement_prototype;
      }
      std::cerr << "\n";
    };
  }

  const ipr::MultiSeedResult result =
      ipr::multi_seed(dataset, config, on_epoch);
  ipr::write_run_artifacts(args.out, resolved, result, config.mode);

  std::cout << "run-dir: " << args.out << "\n";
  for (const ipr::SeedOutcome& outcome : result.outcomes) {
    if (outcome.ok && outcome.result) {
      std::cout << "seed " << outcome.seed << ": final_accuracy="
                << ipr::format_double(outcome.result->metrics.final_accuracy);
      if (outcome.result->degraded_to_baseline) {
        std::cout << " (degraded to baseline: empty D2)";
      }
      std::cout << "\n";
    } else {
      std::cout << "seed " << outcome.seed << ": FAILED: " << outcome.error
                << "\n";
    }
  }
  std::cout << "mean_final_accuracy: "
            << ipr::format_double(result.mean_final_accuracy) << "\n";
  std::cout << "std_final_accuracy: "
            << ipr::format_double(result.std_final_accuracy) << "\n";
}

struct EvalArgs {
  std::string model;
  std::string dataset;
  std::string split = "D3";
  bool standardize = false;
};

void run_eval(const EvalArgs& args) {
  const ipr::LoadedCheckpoint checkpoint = ipr::load_checkpoint(args.model);
  ipr::SplitDataset dataset = ipr::load_dataset(args.dataset);
  if (args.standardize) {
    dataset = ipr::standardize(dataset).dataset;
  }
  if (checkpoint.params.input_dim != dataset.feature_dim()) {
    throw ipr::InputError(
        "eval: checkpoint expects feature dimension " +
        std::to_string(checkpoint.params.input_dim) + " but dataset has " +
        std::to_string(dataset.feature_dim()));
  }
  const ipr::Split split = ipr::split_from_name(args.split);
  std::vector<ipr::FeatureSample> samples;
  if (split == ipr::Split::D1) {
    samples = dataset.d1();
  } else if (split == ipr::Split::D3) {
    samples = dataset.d3();
  } else {
    for (std::size_t i = 0; i < dataset.d2_size(); ++i) {
      const auto truth = dataset.d2_truth(i);
      if (!truth) {
        throw ipr::InputError("eval: D2 sample '" + dataset.d2_id(i) +
                              "' carries no ground truth");
      }
      ipr::FeatureSample s;
      s.id = dataset.d2_id(i);
      s.features = dataset.d2_view(i).features;
      s.label = truth;
      s.split = ipr::Split::D2;
      samples.push_back(std::move(s));
    }
  }
  if (samples.empty()) {
    throw ipr::InputError("eval: split " + args.split + " is empty");
  }
  const double accuracy = ipr::evaluate(checkpoint.params, samples);
  std::cout << "split: " << args.split << "\n";
  std::cout << "samples: " << samples.size() << "\n";
  std::cout << "accuracy: " << ipr::format_double(accuracy) << "\n";
}

struct ExportArgs {
  std::string run_dir;
  std::string out;
  bool force = false;
};

void run_export_curves(const ExportArgs& args) {
  if (fs::exists(args.out) && !args.force) {
    throw ipr::IoError("output file '" + args.out +
                       "' already exists (pass --force to overwrite)");
  }
  ipr::write_text_file(args.out, ipr::export_curves_csv(args.run_dir));
  std::cout << "curves: " << args.out << "\n";
}

void run_validate(const std::string& dataset_path) {
  const std::vector<std::string> violations =
      ipr::validate_dataset_file(dataset_path);
  if (violations.empty()) {
    std::cout << "ok: " << dataset_path << "\n";
    return;
  }
  for (const std::string& v : violations) {
    std::cerr << "violation: " << v << "\n";
  }
  throw ipr::ValidationError(
      "dataset '" + dataset_path + "' failed validation with " +
      std::to_string(violations.size()) + " problem(s)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Iterative prototype refinement for ambiguous classification"};
  app.require_subcommand(1);

  GenDataArgs gen_args;
  CLI::App* gen = app.add_subcommand(
      "gen-data", "Generate a synthetic dataset with annotator-ambiguity splits");
  gen->add_option("--config", gen_args.config,
                  "Generator config JSON (defaults when omitted)");
  gen->add_option("--out", gen_args.out, "Output dataset path (JSONL)")
      ->required();
  gen->add_flag("--force", gen_args.force, "Overwrite an existing output file");

  TrainArgs train_args;
  CLI::App* train = app.add_subcommand("train", "Train one model per seed");
  train->add_option("--dataset", train_args.dataset, "Dataset JSONL path")
      ->required();
  train->add_option("--out", train_args.out, "Run output directory")
      ->required();
  train->add_option("--config", train_args.config, "Training config JSON");
  train->add_option("--mode", train_args.mode,
                    "ipr | baseline | baseline_plus | supervised");
  train->add_option("--seeds", train_args.seeds, "Seed list")
      ->delimiter(',');
  train->add_option("--epochs", train_args.epochs, "Total epochs");
  train->add_option("--warmup-epochs", train_args.warmup_epochs,
                    "Warm-up epochs (precise data only)");
  train->add_option("--batch-size", train_args.batch_size, "Batch size");
  train->add_option("--alpha", train_args.alpha, "Precise loss weight");
  train->add_option("--mu", train_args.mu, "Contrastive loss weight");
  train->add_option("--weight-m", train_args.weight_m,
                    "Ambiguous loss weight ceiling");
  train->add_option("--growth-factor", train_args.growth_factor,
                    "Ambiguous weight ramp growth factor");
  train->add_option("--gamma", train_args.gamma, "Prototype momentum");
  train->add_option("--tau", train_args.tau, "Contrastive temperature");
  train->add_option("--learning-rate", train_args.learning_rate,
                    "AdamW learning rate");
  train->add_option("--weight-decay", train_args.weight_decay,
                    "AdamW weight decay");
  train->add_option("--lr-schedule", train_args.lr_schedule,
                    "Learning-rate schedule: constant or cosine");
  train->add_option("--embedding-dim", train_args.embedding_dim,
                    "Embedding dimension");
  train->add_flag("--standardize", train_args.standardize,
                  "Standardize features on non-test statistics");
  train->add_flag("--force", train_args.force,
                  "Overwrite an existing run directory");
  train->add_flag("--quiet", train_args.quiet, "Suppress per-epoch logging");

  EvalArgs eval_args;
  CLI::App* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  eval->add_option("--model", eval_args.model, "Checkpoint JSON path")
      ->required();
  eval->add_option("--dataset", eval_args.dataset, "Dataset JSONL path")
      ->required();
  eval->add_option("--split", eval_args.split, "D1 | D2 | D3 (default D3)");
  eval->add_flag("--standardize", eval_args.standardize,
                 "Standardize features on non-test statistics");

  ExportArgs export_args;
  CLI::App* exporter =
      app.add_subcommand("export-curves", "Merge run CSVs into one tidy table");
  exporter->add_option("--run-dir", export_args.run_dir, "Run directory")
      ->required();
  exporter->add_option("--out", export_args.out, "Output CSV path")
      ->required();
  exporter->add_flag("--force", export_args.force,
                     "Overwrite an existing output file");

  std::string validate_path;
  CLI::App* validate =
      app.add_subcommand("validate", "Check a dataset file for violations");
  validate->add_option("--dataset", validate_path, "Dataset JSONL path")
      ->required();

  try {
    app.parse(argc, argv);
    if (gen->parsed()) run_gen_data(gen_args);
    if (train->parsed()) run_train(train_args, *train);
    if (eval->parsed()) run_eval(eval_args);
    if (exporter->parsed()) run_export_curves(export_args);
    if (validate->parsed()) run_validate(validate_path);
    return 0;
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  } catch (const ipr::InputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ipr::ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const ipr::IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const ipr::NumericalError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
