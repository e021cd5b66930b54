// bmrc -- bidirectional MRC for aspect sentiment triplet extraction
// Command-line driver: train / predict / eval.
#include <CLI11.hpp>
#include <filesystem>
#include <iostream>

#include "bmrc/run_io.hpp"

namespace fs = std::filesystem;

namespace {

struct FlagOverrides {
  std::optional<double> delta;
  std::optional<double> tau;
  std::optional<std::string> direction;
  std::vector<uint64_t> seeds;
  std::optional<std::string> out;
};

void apply_overrides(bmrc::RunConfig& cfg, const FlagOverrides& flags) {
  if (flags.delta) cfg.infer.delta = *flags.delta;
  if (flags.tau) cfg.infer.tau = *flags.tau;
  if (flags.direction) cfg.direction = bmrc::parse_direction(*flags.direction);
  if (!flags.seeds.empty()) cfg.seeds = flags.seeds;
  if (flags.out) cfg.out_dir = *flags.out;
}

void validate_common(const bmrc::RunConfig& cfg) {
  cfg.encoder.validate();
  cfg.infer.validate();
  if (cfg.seeds.empty()) throw bmrc::ConfigError("at least one seed is required");
}

void validate_for_train(const bmrc::RunConfig& cfg) {
  validate_common(cfg);
  cfg.optimizer.validate();
  if (cfg.optimizer.head_lr <= 0.0 || cfg.optimizer.encoder_lr <= 0.0) {
    throw bmrc::ConfigError("learning rates must be > 0 for training");
  }
  if (cfg.train_path.empty()) throw bmrc::ConfigError("train_path is required");
  if (cfg.dev_path.empty()) throw bmrc::ConfigError("dev_path is required");
  for (const std::string& p : {cfg.train_path, cfg.dev_path}) {
    if (!fs::exists(p)) throw bmrc::ConfigError("dataset file does not exist: " + p);
  }
}

int cmd_train(const bmrc::RunConfig& cfg) {
  validate_for_train(cfg);
  bmrc::DatasetSplit train = bmrc::load_split(cfg.train_path, bmrc::SplitKind::Train);
  bmrc::DatasetSplit dev = bmrc::load_split(cfg.dev_path, bmrc::SplitKind::Dev);
  std::cout << "train: " << train.num_sentences() << " sentences, " << train.num_triplets()
            << " triplets; dev: " << dev.num_sentences() << " sentences, " << dev.num_triplets()
            << " triplets\n";
  bmrc::Vocabulary vocab = bmrc::Vocabulary::build({&train});

  for (uint64_t seed : cfg.seeds) {
    fs::path run_dir = fs::path(cfg.out_dir) / ("run_seed" + std::to_string(seed));
    fs::create_directories(run_dir);

    bmrc::BmrcModel model(cfg.encoder, vocab, seed);
    bmrc::OptimizerConfig opt = cfg.optimizer;
    opt.seed = seed;
    bmrc::FitOptions options;
    options.infer = cfg.infer;
    options.direction = cfg.direction;
    bmrc::FitResult result = bmrc::fit(model, train, dev, opt, options);

    std::ofstream log(run_dir / "metrics.log", std::ios::binary);
    for (const bmrc::EpochRecord& r : result.epochs) {
      log << bmrc::metrics_log_line(r) << '\n';
    }
    log << "best_epoch " << result.best_epoch << '\n';

    bmrc::save_vocabulary(vocab, (run_dir / "vocab.txt").string());
    bmrc::save_checkpoint(result.best_model ? *result.best_model : model,
                          (run_dir / "checkpoint.bmrc").string());
    const bmrc::EpochRecord& best = result.epochs[result.best_epoch - 1];
    std::cout << "seed " << seed << ": best epoch " << result.best_epoch << " dev F1 A-S "
              << best.dev[0].f1 << " O " << best.dev[1].f1 << " P " << best.dev[2].f1 << " T "
              << best.dev[3].f1 << " -> " << (run_dir / "checkpoint.bmrc").string() << '\n';
  }
  return 0;
}

int cmd_predict(const bmrc::RunConfig& cfg, const std::string& checkpoint_path,
                const std::string& vocab_path, const std::string& input_path,
                const std::string& output_path) {
  validate_common(cfg);
  std::string vp = vocab_path;
  if (vp.empty()) vp = (fs::path(checkpoint_path).parent_path() / "vocab.txt").string();
  bmrc::Vocabulary vocab = bmrc::load_vocabulary(vp);
  bmrc::BmrcModel model = bmrc::load_checkpoint(checkpoint_path, vocab);
  bmrc::DatasetSplit input = bmrc::load_split(input_path, bmrc::SplitKind::Test);

  std::vector<std::pair<std::string, std::vector<bmrc::TripletPrediction>>> records;
  for (const bmrc::AnnotatedSentence& s : input.sentences) {
    records.emplace_back(s.id, bmrc::extract_triplets(model, s, cfg.infer, cfg.direction));
  }
  bmrc::write_predictions(output_path, records);
  std::cout << "wrote " << records.size() << " records to " << output_path << '\n';
  return 0;
}

int cmd_eval(const std::vector<std::string>& pred_paths, const std::string& gold_path,
             const std::string& report_path) {
  bmrc::DatasetSplit gold_split = bmrc::load_split(gold_path, bmrc::SplitKind::Test);
  std::map<std::string, std::vector<bmrc::Triplet>> gold;
  for (const bmrc::AnnotatedSentence& s : gold_split.sentences) {
    auto& g = gold[s.id];
    for (const bmrc::GoldTriplet& t : s.triplets) g.push_back(bmrc::Triplet::from(t));
  }

  // Per run, per mode.
  std::array<std::vector<bmrc::PRF>, 4> per_mode_runs;
  for (const std::string& pred_path : pred_paths) {
    auto records = bmrc::read_predictions(pred_path);
    std::map<std::string, std::vector<bmrc::Triplet>> pred;
    for (const auto& [id, triplets] : records) {
      auto& p = pred[id];
      for (const bmrc::TripletPrediction& t : triplets) p.push_back(bmrc::Triplet::from(t));
    }
    std::vector<std::string> missing, extra;
    for (const auto& [id, _] : gold) {
      if (!pred.contains(id)) missing.push_back(id);
    }
    for (const auto& [id, _] : pred) {
      if (!gold.contains(id)) extra.push_back(id);
    }
    if (!missing.empty() || !extra.empty()) {
      std::ostringstream msg;
      msg << pred_path << ": sentence ids do not align with " << gold_path << ";";
      if (!missing.empty()) {
        msg << " missing:";
        for (const auto& id : missing) msg << ' ' << id;
      }
      if (!extra.empty()) {
        msg << " extra:";
        for (const auto& id : extra) msg << ' ' << id;
      }
      throw bmrc::DataError(msg.str());
    }
    for (size_t m = 0; m < bmrc::kAllMatchModes.size(); ++m) {
      per_mode_runs[m].push_back(bmrc::score_corpus(pred, gold, bmrc::kAllMatchModes[m]));
    }
  }

  std::array<bmrc::ReportRow, 4> rows;
  for (size_t m = 0; m < bmrc::kAllMatchModes.size(); ++m) {
    rows[m].mode = bmrc::kAllMatchModes[m];
    rows[m].aggregated = bmrc::aggregate_runs(per_mode_runs[m]);
    for (const bmrc::PRF& r : per_mode_runs[m]) rows[m].run_f1s.push_back(r.f1);
  }
  std::string report = bmrc::format_report(rows);
  std::cout << report;
  if (!report_path.empty()) {
    std::ofstream out(report_path, std::ios::binary);
    if (!out) throw bmrc::DataError("cannot write report file: " + report_path);
    out << report;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"bidirectional multi-turn MRC for aspect sentiment triplet extraction"};
  app.require_subcommand(1);

  std::string config_path;
  FlagOverrides flags;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "run configuration file (key = value lines)");
    cmd->add_option("--delta", flags.delta, "fusion threshold in [0,1)");
    cmd->add_option("--tau", flags.tau, "span decision threshold in (0,1)");
    cmd->add_option("--direction", flags.direction, "both|ao|oa")
        ->check(CLI::IsMember({"both", "ao", "oa"}));
    cmd->add_option("--seed", flags.seeds, "random seed (repeatable)");
    cmd->add_option("--out", flags.out, "output directory (train) or file (predict/eval)");
  };

  CLI::App* train = app.add_subcommand("train", "train one model per seed");
  add_common(train);

  CLI::App* predict = app.add_subcommand("predict", "extract triplets with a trained model");
  add_common(predict);
  std::string checkpoint_path, vocab_path, input_path;
  predict->add_option("--checkpoint", checkpoint_path, "checkpoint file")->required();
  predict->add_option("--vocab", vocab_path, "vocabulary file (default: vocab.txt next to checkpoint)");
  predict->add_option("--input", input_path, "dataset file to predict on")->required();

  CLI::App* eval = app.add_subcommand("eval", "score predictions against gold");
  add_common(eval);
  std::vector<std::string> pred_paths;
  std::string gold_path;
  eval->add_option("--pred", pred_paths, "predictions file (repeat for multi-run aggregation)")
      ->required();
  eval->add_option("--gold", gold_path, "gold dataset file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    bmrc::RunConfig cfg;
    if (!config_path.empty()) cfg = bmrc::parse_run_config(config_path);
    apply_overrides(cfg, flags);
    if (train->parsed()) return cmd_train(cfg);
    if (predict->parsed()) {
      std::string out = flags.out.value_or("predictions.tsv");
      return cmd_predict(cfg, checkpoint_path, vocab_path, input_path, out);
    }
    if (eval->parsed()) return cmd_eval(pred_paths, gold_path, flags.out.value_or(""));
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
