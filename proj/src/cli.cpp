#include "spoter/cli.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "spoter/config.hpp"
#include "spoter/errors.hpp"
#include "spoter/selftest.hpp"
#include "spoter/training.hpp"

namespace spoter::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// CLI11 consumes argument vectors in reverse order.
// Returns -1 to continue, otherwise the exit code (help prints and exits 0,
// malformed flags exit 2).
int parse_args(CLI::App& app, std::vector<std::string> args) {
  std::reverse(args.begin(), args.end());
  try {
    app.parse(std::move(args));
  } catch (const CLI::CallForHelp& e) {
    app.exit(e);
    return 0;
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }
  return -1;
}

template <typename Fn>
int guarded(Fn&& fn) {
  try {
    return fn();
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}

void require_exists(const std::string& path, const std::string& what) {
  if (!fs::exists(path)) throw ConfigError(what + " does not exist: " + path);
}

// Uniformly subsamples sequences longer than max_frames down to max_frames.
int subsample_long_sequences(Dataset& d, int max_frames) {
  int touched = 0;
  for (auto& seq : d.sequences) {
    const auto t_len = static_cast<long long>(seq.frames.size());
    if (t_len <= max_frames) continue;
    std::vector<PoseFrame> kept;
    kept.reserve(static_cast<std::size_t>(max_frames));
    for (long long i = 0; i < max_frames; ++i) {
      kept.push_back(seq.frames[static_cast<std::size_t>(i * t_len / max_frames)]);
    }
    seq.frames = std::move(kept);
    ++touched;
  }
  return touched;
}

std::vector<int> parse_topk_list(const std::string& spec) {
  std::vector<int> ks;
  std::stringstream ss(spec);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    ks.push_back(parse_int("topk", item));
  }
  if (ks.empty()) throw ConfigError("--topk needs at least one rank");
  return ks;
}

json stats_to_json(const EpochStats& st) {
  json j;
  j["epoch"] = st.epoch;
  j["loss"] = st.mean_loss;
  j["train_top1"] = st.train_top1;
  j["train_top5"] = st.train_top5;
  if (st.val_top1) {
    j["val_top1"] = *st.val_top1;
    j["val_top5"] = *st.val_top5;
  } else {
    j["val_top1"] = nullptr;
    j["val_top5"] = nullptr;
  }
  j["vsct_selected"] = st.vsct_selected;
  j["updates"] = st.sample_updates;
  j["seconds"] = st.seconds;
  return j;
}

void print_per_class_table(const PerClassAccuracy& per_class, const GlossVocabulary& vocab) {
  std::cout << "per-class accuracy:\n";
  for (const auto& [cls, score] : per_class) {
    const std::string name = cls < vocab.size() ? vocab.gloss(cls) : std::to_string(cls);
    std::cout << "  " << name << ": " << score.correct << "/" << score.total << " = "
              << score.accuracy << '\n';
  }
}

}  // namespace

int cmd_train(const std::vector<std::string>& args) {
  CLI::App app{"Train a pose-sequence sign classifier"};
  app.name("spoter train");

  std::string train_data, val_data, config_path, out_dir;
  std::optional<int> epochs, batch_size, encoder_layers, decoder_layers, heads, ff_dim,
      max_frames;
  std::optional<double> lr, momentum, weight_decay, vsct_gamma, vsct_tau, dropout_rate;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> init_mode, tau_base;
  bool no_normalization = false, no_augmentation = false, balanced = false, vsct = false;
  bool subsample_long = false;

  app.add_option("--train-data", train_data, "training dataset (JSON lines)");
  app.add_option("--val-data", val_data, "validation dataset (JSON lines)");
  app.add_option("--config", config_path, "key = value config file");
  app.add_option("--out", out_dir, "run directory")->required();
  app.add_option("--seed", seed, "run seed");
  app.add_option("--epochs", epochs, "training epochs");
  app.add_option("--lr", lr, "learning rate");
  app.add_option("--momentum", momentum, "SGD momentum");
  app.add_option("--weight-decay", weight_decay, "SGD weight decay");
  app.add_option("--batch-size", batch_size, "samples per optimizer step");
  app.add_flag("--no-normalization", no_normalization, "feed raw pixel coordinates");
  app.add_flag("--no-augmentation", no_augmentation, "disable geometric augmentation");
  app.add_flag("--balanced-sampling", balanced, "class-balanced sample stream");
  app.add_flag("--vsct", vsct, "validation score-conscious training");
  app.add_option("--vsct-gamma", vsct_gamma, "share of worst classes, (0, 1]");
  app.add_option("--vsct-tau", vsct_tau, "share of their samples, (0, 1]");
  app.add_option("--vsct-tau-base", tau_base, "tau base: restricted | full");
  app.add_option("--init", init_mode, "parameter init: faithful | standard");
  app.add_option("--encoder-layers", encoder_layers, "encoder layer count");
  app.add_option("--decoder-layers", decoder_layers, "decoder layer count");
  app.add_option("--heads", heads, "attention heads (must divide 242)");
  app.add_option("--ff-dim", ff_dim, "feed-forward width");
  app.add_option("--max-frames", max_frames, "maximum supported sequence length");
  app.add_option("--dropout", dropout_rate, "dropout rate, [0, 1)");
  app.add_flag("--subsample-long", subsample_long,
               "uniformly subsample sequences longer than max-frames");

  if (const int code = parse_args(app, args); code >= 0) return code;

  return guarded([&]() -> int {
    RunConfig cfg;
    if (!config_path.empty()) {
      require_exists(config_path, "config file");
      cfg = apply_config_values(parse_key_value_file(config_path), cfg);
    }
    if (!train_data.empty()) cfg.train_data_path = train_data;
    if (!val_data.empty()) cfg.val_data_path = val_data;
    if (seed) cfg.train.seed = *seed;
    if (epochs) cfg.train.epochs = *epochs;
    if (lr) cfg.train.learning_rate = *lr;
    if (momentum) cfg.train.momentum = *momentum;
    if (weight_decay) cfg.train.weight_decay = *weight_decay;
    if (batch_size) cfg.train.batch_size = *batch_size;
    if (no_normalization) cfg.train.use_normalization = false;
    if (no_augmentation) cfg.train.use_augmentation = false;
    if (balanced) cfg.train.use_balanced_sampling = true;
    if (vsct) cfg.train.use_vsct = true;
    if (vsct_gamma) cfg.vsct.gamma = *vsct_gamma;
    if (vsct_tau) cfg.vsct.tau = *vsct_tau;
    if (tau_base) cfg.vsct.tau_base = parse_tau_base(*tau_base);
    if (init_mode) cfg.init_mode = parse_init_mode(*init_mode);
    if (encoder_layers) cfg.model.encoder_layers = *encoder_layers;
    if (decoder_layers) cfg.model.decoder_layers = *decoder_layers;
    if (heads) cfg.model.heads = *heads;
    if (ff_dim) cfg.model.ff_dim = *ff_dim;
    if (max_frames) cfg.model.max_frames = *max_frames;
    if (dropout_rate) cfg.model.dropout_rate = *dropout_rate;
    if (subsample_long) cfg.subsample_long = true;

    if (cfg.train_data_path.empty()) throw ConfigError("--train-data is required");
    require_exists(cfg.train_data_path, "training dataset");
    if (!cfg.val_data_path.empty()) require_exists(cfg.val_data_path, "validation dataset");

    Dataset train_ds = load_dataset(cfg.train_data_path);
    if (train_ds.sequences.empty()) throw UsageError("training dataset is empty");
    cfg.model.num_classes = train_ds.vocabulary.size();
    cfg.validate();  // reject bad values before any computation

    std::optional<Dataset> val_ds;
    if (!cfg.val_data_path.empty()) {
      val_ds = load_dataset(cfg.val_data_path, train_ds.vocabulary);
    }
    if (cfg.train.use_vsct && !val_ds) {
      std::cerr << "warning: VSCT enabled without a validation split; per-class statistics "
                   "fall back to the training split\n";
    }
    if (cfg.subsample_long) {
      const int n = subsample_long_sequences(train_ds, cfg.model.max_frames) +
                    (val_ds ? subsample_long_sequences(*val_ds, cfg.model.max_frames) : 0);
      if (n > 0) {
        std::cerr << "note: uniformly subsampled " << n << " sequences longer than "
                  << cfg.model.max_frames << " frames\n";
      }
    }

    fs::create_directories(out_dir);
    {
      std::ofstream resolved(fs::path(out_dir) / "config.resolved");
      resolved << resolved_config_text(cfg);
      if (!resolved) throw IoError("cannot write config.resolved");
    }

    std::ofstream metrics(fs::path(out_dir) / "metrics.jsonl");
    if (!metrics) throw IoError("cannot write metrics.jsonl");

    Rng rng(cfg.train.seed);
    SpoterParams params = init_params(cfg.model, rng, cfg.init_mode);

    const auto t0 = std::chrono::steady_clock::now();
    auto history = train(params, cfg.model, train_ds, val_ds ? &*val_ds : nullptr, cfg.train,
                         &cfg.vsct, rng, [&metrics](const EpochStats& st) {
                           metrics << stats_to_json(st).dump() << '\n';
                           metrics.flush();  // each line is a complete record
                           return true;
                         });
    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    const fs::path ckpt_path = fs::path(out_dir) / "checkpoint.sptr";
    save_checkpoint(params, cfg.model, ckpt_path.string(), train_ds.vocabulary);

    json summary;
    summary["epochs_run"] = history.size();
    summary["classes"] = cfg.model.num_classes;
    summary["train_sequences"] = train_ds.size();
    summary["elapsed_seconds"] = elapsed;
    summary["checkpoint"] = "checkpoint.sptr";
    if (!history.empty()) {
      summary["final"] = stats_to_json(history.back());
    }
    {
      std::ofstream out(fs::path(out_dir) / "summary.json");
      out << summary.dump(2) << '\n';
      if (!out) throw IoError("cannot write summary.json");
    }

    if (!history.empty()) {
      const auto& last = history.back();
      std::cout << "trained " << history.size() << " epochs; final loss " << last.mean_loss
                << ", train top-1 " << last.train_top1;
      if (last.val_top1) std::cout << ", val top-1 " << *last.val_top1;
      std::cout << '\n';
    }
    std::cout << "run directory: " << out_dir << '\n';
    return 0;
  });
}

int cmd_eval(const std::vector<std::string>& args) {
  CLI::App app{"Evaluate a checkpoint on a dataset"};
  app.name("spoter eval");

  std::string model_path, data_path, mapping_path;
  std::string topk_spec = "1,5";
  bool no_normalization = false, subsample_long = false;

  app.add_option("--model", model_path, "checkpoint file")->required();
  app.add_option("--data", data_path, "evaluation dataset (JSON lines)")->required();
  app.add_option("--mapping", mapping_path,
                 "gloss mapping TSV translating data classes into model classes");
  auto* topk_opt =
      app.add_option("--topk", topk_spec, "comma-separated ranks (default 1,5)");
  app.add_flag("--no-normalization", no_normalization,
               "evaluate on raw pixel coordinates (for models trained that way)");
  app.add_flag("--subsample-long", subsample_long,
               "uniformly subsample sequences longer than the model's max frames");

  if (const int code = parse_args(app, args); code >= 0) return code;

  return guarded([&]() -> int {
    require_exists(model_path, "checkpoint");
    require_exists(data_path, "dataset");
    if (!mapping_path.empty()) require_exists(mapping_path, "mapping file");

    Checkpoint ck = load_checkpoint(model_path);
    if (ck.vocabulary.size() != ck.config.num_classes) {
      throw FormatError("checkpoint vocabulary does not match its class count");
    }

    Dataset data = load_dataset(data_path);
    if (data.sequences.empty()) throw UsageError("evaluation dataset is empty");

    if (!mapping_path.empty()) {
      const ClassMapping mapping =
          load_class_mapping(mapping_path, data.vocabulary, ck.vocabulary);
      const int before = data.size();
      data = map_labels(data, mapping, /*drop_unmapped=*/true);
      if (data.size() < before) {
        std::cerr << "warning: dropped " << (before - data.size())
                  << " sequences with unmapped glosses\n";
      }
      if (data.sequences.empty()) throw UsageError("no sequences left after mapping");
    } else if (!(data.vocabulary == ck.vocabulary)) {
      throw VocabularyError(
          "dataset vocabulary differs from the model's; supply --mapping to bridge them");
    }

    if (subsample_long) subsample_long_sequences(data, ck.config.max_frames);

    std::vector<int> ks;
    if (topk_opt->count() > 0) {
      ks = parse_topk_list(topk_spec);
      for (int k : ks) {
        if (k < 1 || k > ck.config.num_classes) {
          throw ConfigError("--topk rank " + std::to_string(k) + " out of [1, " +
                            std::to_string(ck.config.num_classes) + "]");
        }
      }
    } else {
      ks = {1, std::min(5, ck.config.num_classes)};  // clamp the stock ranks
      if (ks[0] == ks[1]) ks.pop_back();
    }

    const EvalResult result = evaluate(ck.params, ck.config, data, ks, !no_normalization);
    std::cout << "sequences: " << data.size() << ", classes: " << ck.config.num_classes << '\n';
    for (int k : ks) std::cout << "top-" << k << ": " << result.topk.at(k) << '\n';
    print_per_class_table(result.per_class, ck.vocabulary);
    return 0;
  });
}

int cmd_stats(const std::vector<std::string>& args) {
  CLI::App app{"Summarize a dataset file"};
  app.name("spoter stats");

  std::string data_path;
  app.add_option("--data", data_path, "dataset (JSON lines)")->required();

  if (const int code = parse_args(app, args); code >= 0) return code;

  return guarded([&]() -> int {
    require_exists(data_path, "dataset");
    const Dataset data = load_dataset(data_path);
    if (data.sequences.empty()) throw UsageError("dataset is empty");
    const DatasetStats stats = dataset_stats(data);
    std::cout << stats.instances << " sequences / " << stats.classes << " classes / "
              << stats.signers << " signers\n";
    std::cout << "classes with samples: " << stats.classes_with_samples << '\n';
    std::cout << "mean repetitions per class: " << stats.mean_repetitions << '\n';
    std::cout << "repetitions histogram (instances -> classes):\n";
    for (const auto& [reps, classes] : stats.repetition_histogram) {
      std::cout << "  " << reps << " -> " << classes << '\n';
    }
    return 0;
  });
}

int cmd_map(const std::vector<std::string>& args) {
  CLI::App app{"Translate a dataset's labels through a gloss mapping"};
  app.name("spoter map");

  std::string data_path, mapping_path, out_path;
  bool drop_unmapped = false;

  app.add_option("--data", data_path, "input dataset (JSON lines)")->required();
  app.add_option("--mapping", mapping_path, "gloss mapping TSV")->required();
  app.add_option("--out", out_path, "output dataset path")->required();
  app.add_flag("--drop-unmapped", drop_unmapped, "drop sequences whose gloss is not mapped");

  if (const int code = parse_args(app, args); code >= 0) return code;

  return guarded([&]() -> int {
    require_exists(data_path, "dataset");
    require_exists(mapping_path, "mapping file");

    const Dataset data = load_dataset(data_path);

    // The target vocabulary is everything the mapping file maps into.
    std::ifstream in(mapping_path);
    std::vector<std::string> targets;
    std::string line;
    while (std::getline(in, line)) {
      const auto hash = line.find('#');
      if (hash != std::string::npos) line.erase(hash);
      const auto tab = line.find('\t');
      if (tab == std::string::npos) continue;
      std::string t = line.substr(tab + 1);
      while (!t.empty() && (t.back() == '\r' || t.back() == ' ' || t.back() == '\t')) t.pop_back();
      if (!t.empty()) targets.push_back(t);
    }
    const GlossVocabulary target_vocab = GlossVocabulary::from_glosses(targets);
    const ClassMapping mapping = load_class_mapping(mapping_path, data.vocabulary, target_vocab);

    const Dataset mapped = map_labels(data, mapping, drop_unmapped);
    save_dataset(mapped, out_path);
    std::cout << "wrote " << mapped.size() << " sequences over " << mapped.vocabulary.size()
              << " classes to " << out_path << '\n';
    if (mapped.size() < data.size()) {
      std::cout << "dropped " << (data.size() - mapped.size()) << " unmapped sequences\n";
    }
    return 0;
  });
}

int cmd_selftest(const std::vector<std::string>& args) {
  CLI::App app{"Finite-difference verification of every gradient"};
  app.name("spoter selftest");

  std::optional<double> tol;
  std::optional<std::string> op;
  std::uint64_t seed = 20240901;
  app.add_option("--tol", tol, "override every op's threshold");
  app.add_option("--op", op, "restrict the suite to one op");
  app.add_option("--seed", seed, "seed for the randomized inputs");

  if (const int code = parse_args(app, args); code >= 0) return code;

  return guarded([&]() -> int {
    const auto checks = run_gradient_checks(op, tol, seed);
    bool all_pass = true;
    std::cout.precision(3);
    for (const auto& c : checks) {
      std::cout << (c.pass ? "PASS" : "FAIL") << "  " << c.op << "  max rel err "
                << std::scientific << c.max_rel_err << "  (threshold " << c.threshold << ")\n";
      all_pass = all_pass && c.pass;
    }
    if (!all_pass) {
      std::cerr << "failing ops:";
      for (const auto& c : checks) {
        if (!c.pass) std::cerr << ' ' << c.op;
      }
      std::cerr << '\n';
      return 1;
    }
    return 0;
  });
}

int run(const std::vector<std::string>& args) {
  static const std::string usage =
      "usage: spoter <train|eval|stats|map|selftest> [options]\n"
      "run 'spoter <command> --help' for the command's flags\n";
  if (args.empty()) {
    std::cerr << usage;
    return 2;
  }
  const std::string& cmd = args.front();
  const std::vector<std::string> rest(args.begin() + 1, args.end());
  if (cmd == "train") return cmd_train(rest);
  if (cmd == "eval") return cmd_eval(rest);
  if (cmd == "stats") return cmd_stats(rest);
  if (cmd == "map") return cmd_map(rest);
  if (cmd == "selftest") return cmd_selftest(rest);
  if (cmd == "--help" || cmd == "-h" || cmd == "help") {
    std::cout << usage;
    return 0;
  }
  std::cerr << "unknown command '" << cmd << "'\n" << usage;
  return 2;
}

int run(int argc, char** argv) {
  std::vector<std::string> args;
  args.reserve(static_cast<std::size_t>(argc > 0 ? argc - 1 : 0));
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args);
}

}  // namespace spoter::cli
