#pragma once

#include <chrono>
#include <cstdint>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "relcast/checkpoint.hpp"
#include "relcast/curation.hpp"
#include "relcast/data.hpp"
#include "relcast/error.hpp"
#include "relcast/harness.hpp"
#include "relcast/models.hpp"
#include "relcast/stats.hpp"
#include "relcast/synthgen.hpp"

namespace relcast::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

using Real = double;

struct Options {
  std::string config, data, out, model, checkpoint, clip;
  std::vector<std::string> inputs;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> horizon, length, threads;
  std::optional<std::string> mode;
  bool timing = false;
};

namespace detail {

inline nlohmann::json read_json(const std::string& path) {
  return parse_json_text(read_text_file(path), path);
}

inline void write_json(const std::string& path, const nlohmann::json& j) {
  write_text_file(path, j.dump(2) + "\n");
}

inline std::vector<ClipAnnotation> apply_length(std::vector<ClipAnnotation> clips, const Options& o) {
  if (!o.length) return clips;
  return length_subset(clips, *o.length);
}

/// Train/eval config file: {"model": ModelConfig, "run": RunConfig}.
struct TrainConfig {
  ModelConfig model;
  RunConfig run;
};

inline TrainConfig train_config(const Options& o) {
  TrainConfig c;
  if (o.config.empty()) return c;
  auto j = read_json(o.config);
  if (!j.is_object()) throw ConfigError("train config must be an object");
  for (const auto& [k, v] : j.items()) {
    (void)v;
    if (k != "model" && k != "run") throw ConfigError("train config: unknown key '" + k + "'");
  }
  if (j.contains("model")) c.model = model_config_from_json(j.at("model"));
  if (j.contains("run")) c.run = run_config_from_json(j.at("run"));
  return c;
}

inline void require_vocab(const ModelShape& shape, const Corpus& corpus, const std::string& data) {
  if (!(shape.vocab == corpus.vocab)) {
    throw DataError("vocabulary of '" + data + "' does not match the checkpoint (" +
                    std::to_string(corpus.vocab.num_objects()) + " objects, " +
                    std::to_string(corpus.vocab.num_predicates()) + " predicates vs " +
                    std::to_string(shape.num_objects()) + ", " + std::to_string(shape.num_predicates()) +
                    ")");
  }
  std::size_t dim = corpus_visual_dim(corpus.clips);
  if (dim != shape.visual_dim) {
    throw DataError("visual feature width " + std::to_string(dim) + " of '" + data +
                    "' does not match the checkpoint's " + std::to_string(shape.visual_dim));
  }
}

/// Split config: {"quantity_threshold", "key_frames", "min_distinct",
/// "max_frames", "split": {"mode", "per_class" | "total", "min_per_class"},
/// "seed"}.
struct SplitConfig {
  std::optional<double> quantity_threshold = 0.01;
  bool key_frames = true;
  std::size_t min_distinct = 3;
  std::size_t max_frames = kMaxClipFrames;
  SplitMode split = SplitMode::random(400);
  std::uint64_t seed = 0;
};

inline SplitConfig split_config(const Options& o) {
  SplitConfig c;
  if (!o.config.empty()) {
    auto j = read_json(o.config);
    static const char* known[] = {"quantity_threshold", "key_frames", "min_distinct", "max_frames", "split", "seed"};
    for (const auto& [k, v] : j.items()) {
      (void)v;
      if (std::find_if(std::begin(known), std::end(known), [&](const char* s) { return k == s; }) ==
          std::end(known))
        throw ConfigError("split config: unknown key '" + k + "'");
    }
    try {
      if (j.contains("quantity_threshold")) {
        if (j.at("quantity_threshold").is_null()) c.quantity_threshold.reset();
        else c.quantity_threshold = j.at("quantity_threshold").get<double>();
      }
      c.key_frames = j.value("key_frames", c.key_frames);
      c.min_distinct = j.value("min_distinct", c.min_distinct);
      c.max_frames = j.value("max_frames", c.max_frames);
      c.seed = j.value("seed", c.seed);
      if (j.contains("split")) {
        const auto& s = j.at("split");
        std::string mode = s.value("mode", std::string("random"));
        if (mode == "category_average") {
          c.split = SplitMode::category_average(s.value("per_class", std::size_t{50}));
        } else if (mode == "random") {
          c.split = SplitMode::random(s.value("total", std::size_t{400}), s.value("min_per_class", std::size_t{1}));
        } else {
          throw ConfigError("split config: mode must be category_average or random, got '" + mode + "'");
        }
      }
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("split config: ") + e.what());
    }
  }
  if (o.seed) c.seed = *o.seed;
  if (c.max_frames < 1) throw ConfigError("split config: max_frames must be at least 1");
  return c;
}

inline std::string triplet(const Vocabulary& v, const ClipAnnotation& c, std::size_t p) {
  return "<" + v.object_name(c.subject_category) + ", " + v.predicate_name(p) + ", " +
         v.object_name(c.object_category) + ">";
}

// --- verbs -----------------------------------------------------------------

inline int run_generate(const Options& o, std::ostream& out) {
  auto j = read_json(o.config);
  if (!j.is_object()) throw ConfigError("generator config must be an object");
  std::size_t n_clips = 500;
  try {
    n_clips = j.value("n_clips", n_clips);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("generator config: ") + e.what());
  }
  if (o.seed) j["seed"] = *o.seed;
  auto ds = generate_dataset(generator_config_from_json(j), n_clips);
  save_clips(o.out, ds.corpus);
  write_json(o.out + ".manifest.json", ds.manifest);
  out << nlohmann::json{{"out", o.out},
                        {"clips", ds.corpus.clips.size()},
                        {"config_hash", ds.manifest.at("config_hash")}}
             .dump()
      << "\n";
  return kOk;
}

inline int run_stats(const Options& o, std::ostream& out) {
  Corpus c = load_clips(o.data, {0});
  auto r = stats_report(c.clips, c.vocab);
  auto j = stats_to_json(r, c.vocab);
  if (!o.out.empty()) {
    write_json(o.out + ".json", j);
    write_text_file(o.out + ".objects.csv", object_counts_csv(r, c.vocab));
    write_text_file(o.out + ".predicates.csv", predicate_counts_csv(r, c.vocab));
    write_text_file(o.out + ".transitions.csv", transitions_csv(r.transitions, c.vocab));
    write_text_file(o.out + ".lengths.csv", length_histogram_csv(r));
  }
  out << j.dump(2) << "\n";
  return kOk;
}

inline int run_split(const Options& o, std::ostream& out, std::ostream& err) {
  SplitConfig cfg = split_config(o);
  Corpus c = load_clips(o.data, {0});
  nlohmann::json summary = {{"input_clips", c.clips.size()}};
  if (cfg.quantity_threshold) {
    auto q = quantity_filter(c, *cfg.quantity_threshold);
    summary["removed_predicates"] = q.removed_predicates;
    summary["dropped_frames"] = q.dropped_frames;
    summary["dropped_clips"] = q.dropped_clips;
    c = std::move(q.corpus);
  }
  std::vector<ClipAnnotation> kept;
  std::size_t rejected = 0;
  for (const auto& clip : c.clips) {
    std::optional<ClipAnnotation> k = clip;
    if (cfg.key_frames) k = select_key_frames(clip, cfg.min_distinct);
    if (!k) {
      ++rejected;
      continue;
    }
    kept.push_back(truncate_clip(*k, cfg.max_frames));
  }
  summary["rejected_clips"] = rejected;
  auto s = split_train_test(kept, cfg.split, cfg.seed);
  for (const auto& w : s.warnings) err << nlohmann::json{{"warning", w}}.dump() << "\n";
  save_clips(o.out + ".train.json", {c.vocab, s.train});
  save_clips(o.out + ".test.json", {c.vocab, s.test});
  summary["train"] = s.train.size();
  summary["test"] = s.test.size();
  out << summary.dump() << "\n";
  return kOk;
}

inline int run_train(const Options& o, std::ostream& out) {
  TrainConfig cfg = train_config(o);
  if (o.seed) cfg.model.seed = cfg.run.seed = *o.seed;
  if (o.horizon) cfg.run.horizon = *o.horizon;
  if (o.mode) cfg.run.mode = parse_mode(*o.mode);
  if (o.threads) cfg.run.threads = *o.threads;
  cfg.run.validate();
  Corpus c = load_clips(o.data);
  auto clips = apply_length(c.clips, o);
  auto model = make_model<Real>(o.model, cfg.model, shape_of(c));
  TrainResult r = train(*model, clips, cfg.run);
  auto meta = model_metadata(model->name(), model->config(), model->shape());
  meta["run_config"] = run_config_identity(cfg.run);
  write_checkpoint(o.out, meta, model->parameters());
  write_text_file(o.out + ".loss.csv", loss_curve_csv(r));
  nlohmann::json summary = {{"checkpoint", o.out},
                            {"model", model->name()},
                            {"clips", clips.size()},
                            {"epochs", r.epochs.size()},
                            {"initial_loss", r.initial_loss},
                            {"reached_target", r.reached_target},
                            {"decays", r.decays},
                            {"final_lr", r.final_lr},
                            {"config_hash", run_config_hash(model->name(), model->config(), cfg.run)}};
  if (!r.epochs.empty()) {
    summary["final_train_loss"] = r.epochs.back().train_loss;
    summary["final_val_accuracy"] = r.epochs.back().val_accuracy;
  }
  out << summary.dump() << "\n";
  return kOk;
}

inline int run_eval(const Options& o, std::ostream& out) {
  auto t0 = std::chrono::steady_clock::now();
  Checkpoint ck = read_checkpoint(o.checkpoint);
  auto model = load_model<Real>(o.checkpoint);
  RunConfig rc;
  if (ck.metadata.contains("run_config")) {
    try {
      rc = run_config_from_json(ck.metadata.at("run_config"));
    } catch (const ConfigError& e) {
      throw DataError("checkpoint '" + o.checkpoint + "': " + e.what());
    }
  }
  if (o.horizon) rc.horizon = *o.horizon;
  if (o.mode) rc.mode = parse_mode(*o.mode);
  if (o.threads) rc.threads = *o.threads;
  rc.validate();
  Corpus c = load_clips(o.data);
  require_vocab(model->shape(), c, o.data);
  auto clips = apply_length(c.clips, o);
  EvalReport r = evaluate_accuracy(*model, clips, rc.horizon, rc.mode, rc.threads);
  r.config_hash = run_config_hash(model->name(), model->config(), rc);
  if (o.timing) {
    r.runtime_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }
  std::string csv = eval_report_csv(r);
  if (!o.out.empty()) {
    write_json(o.out, eval_report_to_json(r, c.vocab));
    write_text_file(o.out + ".csv", csv);
  }
  out << csv;
  return kOk;
}

inline int run_forecast(const Options& o, std::ostream& out, std::ostream& err) {
  auto model = load_model<Real>(o.checkpoint);
  std::size_t horizon = o.horizon.value_or(1);
  Mode mode = o.mode ? parse_mode(*o.mode) : Mode::normal;
  Corpus c = load_clips(o.data);
  require_vocab(model->shape(), c, o.data);
  if (horizon == 0) return kOk;
  bool found = o.clip.empty();
  for (const auto& clip : c.clips) {
    if (!o.clip.empty() && clip.clip_id != o.clip) continue;
    found = true;
    // Same split as training and evaluation: the last `horizon` labels are
    // withheld.
    if (clip.frames.size() <= horizon) {
      err << nlohmann::json{{"warning", "clip '" + clip.clip_id + "' has " + std::to_string(clip.frames.size()) +
                                            " frames, too short for horizon " + std::to_string(horizon)}}
                 .dump()
          << "\n";
      continue;
    }
    std::size_t history = clip.frames.size() - horizon;
    Forecast f = model->forecast(forecast_context(clip, history, horizon, mode));
    for (std::size_t k = 0; k < f.ids.size(); ++k) {
      out << clip.clip_id << " t=" << (k + 1) << " " << triplet(c.vocab, clip, f.ids[k]) << " p="
          << fmt_metric(f.probs[k][f.ids[k]]) << "\n";
    }
  }
  if (!found) throw DataError("clip '" + o.clip + "' not found in '" + o.data + "'");
  return kOk;
}

inline int run_report(const Options& o, std::ostream& out) {
  if (o.inputs.empty()) throw ConfigError("report: no eval reports given");
  std::vector<nlohmann::json> reports;
  std::size_t max_h = 0;
  for (const auto& path : o.inputs) {
    auto j = read_json(path);
    try {
      max_h = std::max(max_h, j.at("horizon").get<std::size_t>());
      (void)j.at("model").get<std::string>();
      (void)j.at("mode").get<std::string>();
      (void)j.at("accuracy").get<double>();
      (void)j.at("map").get<double>();
      (void)j.at("instances").get<std::size_t>();
      (void)j.at("per_horizon_accuracy").get<std::vector<double>>();
    } catch (const nlohmann::json::exception& e) {
      throw DataError("'" + path + "' is not an eval report: " + e.what());
    }
    reports.push_back(std::move(j));
  }
  std::ostringstream os;
  os << "source,model,mode,horizon,instances,accuracy,map";
  for (std::size_t t = 1; t <= max_h; ++t) os << ",t" << t;
  os << "\n";
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const auto& j = reports[i];
    os << o.inputs[i] << "," << j.at("model").get<std::string>() << "," << j.at("mode").get<std::string>()
       << "," << j.at("horizon").get<std::size_t>() << "," << j.at("instances").get<std::size_t>() << ","
       << fmt_metric(j.at("accuracy").get<double>()) << "," << fmt_metric(j.at("map").get<double>());
    auto ph = j.at("per_horizon_accuracy").get<std::vector<double>>();
    for (std::size_t t = 0; t < max_h; ++t) os << "," << (t < ph.size() ? fmt_metric(ph[t]) : "");
    os << "\n";
  }
  if (!o.out.empty()) write_text_file(o.out, os.str());
  out << os.str();
  return kOk;
}

inline void error_record(std::ostream& err, const std::string& kind, int code, const std::string& msg) {
  err << nlohmann::json{{"error", kind}, {"exit_code", code}, {"message", msg}}.dump() << "\n";
}

}  // namespace detail

/// Runs one command; returns the process exit code.
inline int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"relcast: relationship forecasting pipeline", "relcast"};
  app.require_subcommand(1, 1);
  Options o;
  std::string model_help = "gct|transformer|stgcn|lstm|gru|pm";

  auto* gen = app.add_subcommand("generate", "Sample a synthetic corpus");
  gen->add_option("--config", o.config, "Generator config JSON")->required();
  gen->add_option("--out", o.out, "Output corpus JSON (manifest at <out>.manifest.json)")->required();
  gen->add_option("--seed", o.seed, "Seed override");

  auto* st = app.add_subcommand("stats", "Corpus statistics");
  st->add_option("--data", o.data, "Corpus JSON")->required();
  st->add_option("--out", o.out, "Output prefix for JSON and CSV tables");

  auto* sp = app.add_subcommand("split", "Curate and split a corpus");
  sp->add_option("--data", o.data, "Raw corpus JSON")->required();
  sp->add_option("--config", o.config, "Split config JSON");
  sp->add_option("--out", o.out, "Output prefix (<out>.train.json, <out>.test.json)")->required();
  sp->add_option("--seed", o.seed, "Seed override");

  auto* tr = app.add_subcommand("train", "Train a model and write a checkpoint");
  tr->add_option("--data", o.data, "Training corpus JSON")->required();
  tr->add_option("--model", o.model, model_help)->required();
  tr->add_option("--out", o.out, "Checkpoint path (loss curve at <out>.loss.csv)")->required();
  tr->add_option("--config", o.config, "Train config JSON {model, run}");
  tr->add_option("--seed", o.seed, "Seed override for weights and batches");
  tr->add_option("--horizon", o.horizon, "Forecast horizon T");
  tr->add_option("--mode", o.mode, "normal|observation");
  tr->add_option("--length", o.length, "Train on the 5|10|15 length subset");
  tr->add_option("--threads", o.threads, "Evaluation threads (0 = all cores)");

  auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint");
  ev->add_option("--checkpoint", o.checkpoint, "Checkpoint path")->required();
  ev->add_option("--data", o.data, "Test corpus JSON")->required();
  ev->add_option("--out", o.out, "Report JSON path (CSV at <out>.csv)");
  ev->add_option("--horizon", o.horizon, "Forecast horizon T");
  ev->add_option("--mode", o.mode, "normal|observation");
  ev->add_option("--length", o.length, "Evaluate on the 5|10|15 length subset");
  ev->add_option("--threads", o.threads, "Worker threads (0 = all cores)");
  ev->add_flag("--timing", o.timing, "Record wall-clock runtime in the report");

  auto* fc = app.add_subcommand("forecast", "Print forecast triplets for each clip");
  fc->add_option("--checkpoint", o.checkpoint, "Checkpoint path")->required();
  fc->add_option("--data", o.data, "Clip file (corpus JSON)")->required();
  fc->add_option("--horizon", o.horizon, "Steps to forecast");
  fc->add_option("--mode", o.mode, "normal|observation");
  fc->add_option("--clip", o.clip, "Only this clip id");

  auto* rp = app.add_subcommand("report", "Tabulate eval reports");
  rp->add_option("--data", o.inputs, "Eval report JSON files")->required();
  rp->add_option("--out", o.out, "Output CSV path");

  for (auto* sub : {gen, st, sp, tr, ev, fc, rp}) sub->fallthrough(false);

  if (argc > 1) {
    std::string verb = argv[1];
    if (!verb.empty() && verb[0] != '-' && !app.get_subcommand_no_throw(verb)) {
      detail::error_record(err, "UsageError", kUsage, "unknown command '" + verb + "'");
      err << app.help();
      return kUsage;
    }
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    detail::error_record(err, "UsageError", kUsage, e.what());
    const CLI::App* sub = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
    err << sub->help();
    return kUsage;
  }
  if (o.length) {
    const auto& ls = standard_lengths();
    if (std::find(ls.begin(), ls.end(), *o.length) == ls.end()) {
      detail::error_record(err, "UsageError", kUsage, "--length must be 5, 10 or 15");
      return kUsage;
    }
  }
  if (o.mode && *o.mode != "normal" && *o.mode != "observation") {
    detail::error_record(err, "UsageError", kUsage, "--mode must be normal or observation");
    return kUsage;
  }

  try {
    if (gen->parsed()) return detail::run_generate(o, out);
    if (st->parsed()) return detail::run_stats(o, out);
    if (sp->parsed()) return detail::run_split(o, out, err);
    if (tr->parsed()) return detail::run_train(o, out);
    if (ev->parsed()) return detail::run_eval(o, out);
    if (fc->parsed()) return detail::run_forecast(o, out, err);
    if (rp->parsed()) return detail::run_report(o, out);
  } catch (const NumericError& e) {
    detail::error_record(err, "NumericError", kNumeric, e.what());
    return kNumeric;
  } catch (const DataError& e) {
    detail::error_record(err, "DataError", kData, e.what());
    return kData;
  } catch (const ConfigError& e) {
    detail::error_record(err, "ConfigError", kData, e.what());
    return kData;
  } catch (const QuotaError& e) {
    detail::error_record(err, "QuotaError", kData, e.what());
    return kData;
  } catch (const Error& e) {
    detail::error_record(err, "Error", kData, e.what());
    return kData;
  } catch (const std::exception& e) {
    detail::error_record(err, "InternalError", kData, e.what());
    return kData;
  }
  return kUsage;
}

inline int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv{"relcast"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return dispatch(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace relcast::cli
