#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <iomanip>
#include <limits>
#include <memory>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "relcast/curation.hpp"
#include "relcast/data.hpp"
#include "relcast/error.hpp"
#include "relcast/models.hpp"
#include "relcast/optim.hpp"
#include "relcast/synthgen.hpp"

namespace relcast {

struct RunConfig {
  std::size_t batch_size = 16;
  double initial_lr = 5e-5;
  double decay_factor = 0.5;
  /// Epochs without validation improvement before the learning rate decays.
  std::size_t patience = 3;
  std::size_t max_epochs = 50;
  std::uint64_t seed = 0;
  /// Forecast horizon T; each clip yields H = len - T history frames.
  std::size_t horizon = 1;
  /// Evaluation mode.
  Mode mode = Mode::normal;
  /// Modes whose losses are summed during training; both modes lets one
  /// checkpoint serve both evaluation rows.
  std::vector<Mode> train_modes = {Mode::normal};
  double val_fraction = 0.1;
  /// Stop once the epoch's mean training loss falls below this value.
  std::optional<double> target_loss;
  /// Evaluation worker threads; 0 picks the hardware concurrency.
  std::size_t threads = 0;
  /// Finish with the weights of the epoch with the lowest validation loss.
  bool keep_best = true;

  void validate() const {
    if (batch_size < 1) throw ConfigError("run config: batch_size must be at least 1");
    if (!(initial_lr > 0.0)) throw ConfigError("run config: initial_lr must be positive");
    if (!(decay_factor > 0.0 && decay_factor <= 1.0)) throw ConfigError("run config: decay_factor must lie in (0, 1]");
    if (patience < 1) throw ConfigError("run config: patience must be at least 1");
    if (horizon < 1) throw ConfigError("run config: horizon must be at least 1");
    if (train_modes.empty()) throw ConfigError("run config: train_modes is empty");
    if (!(val_fraction >= 0.0 && val_fraction < 1.0)) throw ConfigError("run config: val_fraction must lie in [0, 1)");
  }

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

inline nlohmann::json run_config_to_json(const RunConfig& c) {
  nlohmann::json modes = nlohmann::json::array();
  for (Mode m : c.train_modes) modes.push_back(mode_name(m));
  nlohmann::json j = {{"batch_size", c.batch_size}, {"initial_lr", c.initial_lr},
                      {"decay_factor", c.decay_factor}, {"patience", c.patience},
                      {"max_epochs", c.max_epochs}, {"seed", c.seed},
                      {"horizon", c.horizon}, {"mode", mode_name(c.mode)},
                      {"train_modes", modes}, {"val_fraction", c.val_fraction},
                      {"threads", c.threads}, {"keep_best", c.keep_best}};
  j["target_loss"] = c.target_loss ? nlohmann::json(*c.target_loss) : nlohmann::json(nullptr);
  return j;
}

inline RunConfig run_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("run config must be an object");
  static const char* known[] = {"batch_size", "initial_lr", "decay_factor", "patience", "max_epochs",
                                "seed", "horizon", "mode", "train_modes", "val_fraction",
                                "target_loss", "threads", "keep_best"};
  for (const auto& [k, v] : j.items()) {
    (void)v;
    if (std::find_if(std::begin(known), std::end(known), [&](const char* s) { return k == s; }) ==
        std::end(known))
      throw ConfigError("run config: unknown key '" + k + "'");
  }
  RunConfig c;
  try {
    auto get = [&](const char* k, auto& dst) {
      if (j.contains(k)) dst = j.at(k).get<std::decay_t<decltype(dst)>>();
    };
    get("batch_size", c.batch_size);
    get("initial_lr", c.initial_lr);
    get("decay_factor", c.decay_factor);
    get("patience", c.patience);
    get("max_epochs", c.max_epochs);
    get("seed", c.seed);
    get("horizon", c.horizon);
    get("val_fraction", c.val_fraction);
    get("threads", c.threads);
    get("keep_best", c.keep_best);
    if (j.contains("mode")) c.mode = parse_mode(j.at("mode").get<std::string>());
    if (j.contains("train_modes")) {
      c.train_modes.clear();
      for (const auto& m : j.at("train_modes")) c.train_modes.push_back(parse_mode(m.get<std::string>()));
    }
    if (j.contains("target_loss") && !j.at("target_loss").is_null())
      c.target_loss = j.at("target_loss").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("run config: ") + e.what());
  }
  c.validate();
  return c;
}

/// Run config minus execution knobs that cannot change results (threads).
inline nlohmann::json run_config_identity(const RunConfig& c) {
  nlohmann::json j = run_config_to_json(c);
  j.erase("threads");
  return j;
}

/// FNV-1a over the canonical JSON of everything that defines a run.
inline std::string run_config_hash(const std::string& model, const ModelConfig& mc, const RunConfig& rc) {
  nlohmann::json j = {{"model", model}, {"model_config", model_config_to_json(mc)},
                      {"run_config", run_config_identity(rc)}};
  return hex64(fnv1a64(j.dump()));
}

// --- parallel prediction ------------------------------------------------

inline std::size_t worker_count(std::size_t requested, std::size_t jobs) {
  std::size_t n = requested ? requested : std::max(1u, std::thread::hardware_concurrency());
  return std::max<std::size_t>(1, std::min(n, jobs));
}

/// Runs fn(i) for i in [0, n) over `threads` workers. Results must be
/// written to per-index slots; the first exception is rethrown.
inline void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn) {
  std::size_t w = worker_count(threads, n);
  if (w <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(w);
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < w; ++t)
    pool.emplace_back([&, t] {
      try {
        for (std::size_t i = t; i < n; i += w) fn(i);
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

template <class T>
std::vector<Forecast> predict_all(const Forecaster<T>& model, const std::vector<ForecastInstance>& inst,
                                  Mode mode, std::size_t threads = 0) {
  std::vector<Forecast> out(inst.size());
  parallel_for(inst.size(), threads, [&](std::size_t i) { out[i] = model.forecast(inst[i], mode); });
  return out;
}

// --- metrics -----------------------------------------------------------

struct MapReport {
  double map = 0.0;
  /// AP per class; nullopt for classes without positives.
  std::vector<std::optional<double>> per_class;
  std::vector<std::size_t> excluded;
};

/// Per class: rank instances by that class's score (descending, ties in
/// instance order), AP = mean precision at each positive. mAP averages over
/// classes with at least one positive.
inline MapReport evaluate_map(const std::vector<std::vector<double>>& scores,
                              const std::vector<std::size_t>& labels) {
  if (scores.size() != labels.size()) {
    throw DimensionError("evaluate_map: " + std::to_string(scores.size()) + " score rows for " +
                         std::to_string(labels.size()) + " labels");
  }
  if (scores.empty()) throw ContractError("evaluate_map: no instances");
  const std::size_t k = scores[0].size();
  for (const auto& s : scores)
    if (s.size() != k) throw DimensionError("evaluate_map: ragged score rows");
  for (std::size_t l : labels)
    if (l >= k) throw IndexError("evaluate_map: label " + std::to_string(l) + " outside the score width");
  MapReport r;
  r.per_class.assign(k, std::nullopt);
  double total = 0;
  std::size_t used = 0;
  std::vector<std::size_t> order(scores.size());
  for (std::size_t c = 0; c < k; ++c) {
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a][c] > scores[b][c]; });
    double hits = 0, sum_prec = 0;
    for (std::size_t rank = 0; rank < order.size(); ++rank)
      if (labels[order[rank]] == c) {
        hits += 1;
        sum_prec += hits / static_cast<double>(rank + 1);
      }
    if (hits == 0) {
      r.excluded.push_back(c);
      continue;
    }
    r.per_class[c] = sum_prec / hits;
    total += sum_prec / hits;
    ++used;
  }
  r.map = used ? total / static_cast<double>(used) : 0.0;
  return r;
}

using ConfusionMatrix = std::vector<std::vector<std::size_t>>;  // [truth][prediction]

struct EvalReport {
  std::string model;
  Mode mode = Mode::normal;
  std::size_t horizon = 1;
  std::size_t instances = 0;
  /// Clips too short for the horizon.
  std::size_t skipped = 0;
  /// Instances lacking the evidence the mode needs.
  std::size_t excluded = 0;
  /// Headline accuracy: horizon 1.
  double accuracy = 0.0;
  std::vector<double> per_horizon;
  MapReport map;
  ConfusionMatrix confusion;
  std::optional<double> runtime_seconds;
  std::string config_hash;
};

/// Scores forecasts against ground truth. Accuracy at horizon t is the
/// fraction of instances whose step-t prediction matches; mAP and the
/// confusion matrix use step 1.
inline EvalReport score_forecasts(const std::vector<Forecast>& forecasts,
                                  const std::vector<std::vector<std::size_t>>& labels,
                                  std::size_t horizon, std::size_t num_predicates) {
  if (forecasts.size() != labels.size()) throw DimensionError("score_forecasts: size mismatch");
  if (forecasts.empty()) throw DataError("evaluation set is empty");
  EvalReport r;
  r.horizon = horizon;
  r.instances = forecasts.size();
  r.per_horizon.assign(horizon, 0.0);
  r.confusion.assign(num_predicates, std::vector<std::size_t>(num_predicates, 0));
  std::vector<std::vector<double>> scores;
  std::vector<std::size_t> first;
  for (std::size_t i = 0; i < forecasts.size(); ++i) {
    const auto& f = forecasts[i];
    if (f.ids.size() < horizon || labels[i].size() < horizon) {
      throw DimensionError("score_forecasts: instance " + std::to_string(i) + " shorter than the horizon");
    }
    for (std::size_t t = 0; t < horizon; ++t) r.per_horizon[t] += f.ids[t] == labels[i][t];
    r.confusion.at(labels[i][0]).at(f.ids[0]) += 1;
    scores.push_back(f.probs[0]);
    first.push_back(labels[i][0]);
  }
  for (auto& a : r.per_horizon) a /= static_cast<double>(forecasts.size());
  r.accuracy = r.per_horizon[0];
  r.map = evaluate_map(scores, first);
  return r;
}

/// Accuracy of `model` on every clip long enough for `horizon`.
template <class T>
EvalReport evaluate_accuracy(const Forecaster<T>& model, const std::vector<ClipAnnotation>& clips,
                             std::size_t horizon, Mode mode, std::size_t threads = 0) {
  std::size_t skipped = 0;
  auto inst = make_instances(clips, horizon, &skipped);
  std::vector<std::optional<Forecast>> raw(inst.size());
  parallel_for(inst.size(), threads, [&](std::size_t i) {
    try {
      raw[i] = model.forecast(inst[i], mode);
    } catch (const DataError&) {
      if (mode == Mode::normal) throw;
    }
  });
  std::vector<Forecast> forecasts;
  std::vector<std::vector<std::size_t>> labels;
  std::size_t excluded = 0;
  for (std::size_t i = 0; i < inst.size(); ++i) {
    if (!raw[i]) {
      ++excluded;
      continue;
    }
    forecasts.push_back(std::move(*raw[i]));
    labels.push_back(inst[i].future_labels());
  }
  EvalReport r = score_forecasts(forecasts, labels, horizon, model.shape().num_predicates());
  r.model = model.name();
  r.mode = mode;
  r.skipped = skipped;
  r.excluded = excluded;
  return r;
}

inline nlohmann::json eval_report_to_json(const EvalReport& r, const Vocabulary& vocab) {
  nlohmann::json ap = nlohmann::json::object();
  for (std::size_t c = 0; c < r.map.per_class.size(); ++c)
    ap[vocab.predicate_name(c)] = r.map.per_class[c] ? nlohmann::json(*r.map.per_class[c]) : nlohmann::json(nullptr);
  nlohmann::json excluded = nlohmann::json::array();
  for (std::size_t c : r.map.excluded) excluded.push_back(vocab.predicate_name(c));
  nlohmann::json j = {{"model", r.model},
                      {"mode", mode_name(r.mode)},
                      {"horizon", r.horizon},
                      {"instances", r.instances},
                      {"skipped", r.skipped},
                      {"excluded", r.excluded},
                      {"accuracy", r.accuracy},
                      {"per_horizon_accuracy", r.per_horizon},
                      {"map", r.map.map},
                      {"per_class_ap", ap},
                      {"classes_without_positives", excluded},
                      {"confusion", r.confusion},
                      {"predicates", vocab.predicates()},
                      {"config_hash", r.config_hash}};
  if (r.runtime_seconds) j["runtime_seconds"] = *r.runtime_seconds;
  return j;
}

inline std::string fmt_metric(double x) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(6) << x;
  return os.str();
}

/// One row: model, mode, accuracy, mAP, then t=1..T.
inline std::string eval_report_csv(const EvalReport& r) {
  std::ostringstream os;
  os << "model,mode,instances,accuracy,map";
  for (std::size_t t = 1; t <= r.horizon; ++t) os << ",t" << t;
  os << "\n" << r.model << "," << mode_name(r.mode) << "," << r.instances << ","
     << fmt_metric(r.accuracy) << "," << fmt_metric(r.map.map);
  for (double a : r.per_horizon) os << "," << fmt_metric(a);
  os << "\n";
  return os.str();
}

// --- training ----------------------------------------------------------

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_accuracy = 0.0;
  double val_loss = 0.0;
  double lr = 0.0;
};

struct TrainResult {
  double initial_loss = 0.0;
  std::vector<EpochLog> epochs;
  bool reached_target = false;
  std::size_t decays = 0;
  double final_lr = 0.0;
  /// Epoch whose weights the model holds after training; 0 for the initial weights.
  std::size_t best_epoch = 0;
};

inline std::string loss_curve_csv(const TrainResult& r) {
  std::ostringstream os;
  os << "epoch,train_loss,val_acc,val_loss,lr\n";
  os << std::setprecision(17);
  for (const auto& e : r.epochs)
    os << e.epoch << "," << e.train_loss << "," << e.val_accuracy << "," << e.val_loss << "," << e.lr << "\n";
  return os.str();
}

namespace detail {

inline std::string short_number(double x) {
  std::ostringstream os;
  os << x;
  return os.str();
}

template <class T>
double instance_loss(const Forecaster<T>& model, Tape<T>& tape, const ForecastInstance& inst,
                     const std::vector<Mode>& modes, double weight, bool backward) {
  double total = 0;
  const auto targets = inst.future_labels();
  for (Mode m : modes) {
    Var<T> loss = cross_entropy(model.teacher_forced_logits(tape, forecast_context(inst, m), targets), targets);
    total += static_cast<double>(loss.item());
    if (backward) tape.backward(scale(loss, static_cast<T>(weight)));
  }
  return total / static_cast<double>(modes.size());
}

template <class T>
double mean_loss(const Forecaster<T>& model, const std::vector<ForecastInstance>& inst,
                 const std::vector<Mode>& modes, std::size_t threads) {
  std::vector<double> l(inst.size());
  parallel_for(inst.size(), threads, [&](std::size_t i) {
    Tape<T> tape;
    l[i] = instance_loss(model, tape, inst[i], modes, 1.0, false);
  });
  double s = 0;
  for (double x : l) s += x;
  return s / static_cast<double>(inst.size());
}

}  // namespace detail

/// Mini-batch Adam on teacher-forced cross-entropy. Non-trainable models
/// are fitted by counting instead. Deterministic for a fixed seed.
template <class T>
TrainResult train(Forecaster<T>& model, const std::vector<ClipAnnotation>& clips, const RunConfig& cfg,
                  const std::function<void(const EpochLog&)>& on_epoch = {}) {
  cfg.validate();
  if (clips.empty()) throw DataError("training corpus is empty");
  TrainResult result;
  if (!model.trainable()) {
    model.fit(clips);
    return result;
  }
  auto all = make_instances(clips, cfg.horizon);
  if (all.empty()) {
    throw DataError("no training clip is longer than the horizon " + std::to_string(cfg.horizon));
  }
  std::mt19937_64 rng(cfg.seed);
  std::vector<std::size_t> idx(all.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::shuffle(idx.begin(), idx.end(), rng);
  std::size_t n_val = static_cast<std::size_t>(cfg.val_fraction * static_cast<double>(all.size()));
  if (n_val >= all.size()) n_val = 0;
  std::vector<ForecastInstance> train_set, val_set;
  std::vector<ClipAnnotation> val_clips;
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (i < n_val) {
      val_set.push_back(all[idx[i]]);
      val_clips.push_back(all[idx[i]].clip());
    } else {
      train_set.push_back(all[idx[i]]);
    }
  }
  const Mode val_mode = cfg.train_modes.front();

  AdamState<T> adam;
  adam.learning_rate = cfg.initial_lr;
  adam.decay_factor = cfg.decay_factor;
  PlateauScheduler plateau(cfg.patience);
  ParameterSet<T>& params = model.parameters();
  try {
    result.initial_loss = detail::mean_loss(model, train_set, cfg.train_modes, cfg.threads);
  } catch (const NumericError& err) {
    throw NumericError(std::string("training diverged before epoch 1 (initial weights): ") + err.what());
  }

  const bool keep_best = cfg.keep_best && !val_set.empty();
  double best_val_loss = std::numeric_limits<double>::infinity();
  std::vector<Tensor<T>> best_values;
  if (keep_best) {
    best_val_loss = detail::mean_loss(model, val_set, {val_mode}, cfg.threads);
    for (const auto& p : params) best_values.push_back(p->value);
  }

  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0;
    for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
      std::size_t e = std::min(order.size(), b + cfg.batch_size);
      params.zero_grad();
      const double w = 1.0 / static_cast<double>((e - b) * cfg.train_modes.size());
      for (std::size_t k = b; k < e; ++k) {
        const ForecastInstance& inst = train_set[order[k]];
        Tape<T> tape(true, &rng);
        double l;
        try {
          l = detail::instance_loss(model, tape, inst, cfg.train_modes, w, true);
        } catch (const NumericError& err) {
          throw NumericError("training diverged at epoch " + std::to_string(epoch) + ", clip '" +
                             inst.clip().clip_id + "', lr " + detail::short_number(adam.learning_rate) +
                             ": " + err.what());
        }
        if (!std::isfinite(l)) {
          throw NumericError("training diverged at epoch " + std::to_string(epoch) + ", clip '" +
                             inst.clip().clip_id + "': loss is " + std::to_string(l));
        }
        epoch_loss += l;
      }
      for (const auto& p : params)
        for (T g : p->grad.storage())
          if (!std::isfinite(static_cast<double>(g))) {
            throw NumericError("training diverged at epoch " + std::to_string(epoch) +
                               ": non-finite gradient in '" + p->name + "'");
          }
      adam_step(adam, params);
    }
    EpochLog log;
    log.epoch = epoch;
    log.train_loss = epoch_loss / static_cast<double>(train_set.size());
    log.lr = adam.learning_rate;
    if (!val_set.empty()) {
      log.val_accuracy = evaluate_accuracy(model, val_clips, cfg.horizon, val_mode, cfg.threads).accuracy;
      log.val_loss = detail::mean_loss(model, val_set, {val_mode}, cfg.threads);
      if (plateau.observe(log.val_accuracy, log.val_loss)) {
        lr_decay(adam);
        ++result.decays;
      }
      if (keep_best && log.val_loss < best_val_loss) {
        best_val_loss = log.val_loss;
        result.best_epoch = epoch;
        std::size_t k = 0;
        for (const auto& p : params) best_values[k++] = p->value;
      }
    } else {
      result.best_epoch = epoch;
    }
    result.epochs.push_back(log);
    if (on_epoch) on_epoch(log);
    if (cfg.target_loss && log.train_loss < *cfg.target_loss) {
      result.reached_target = true;
      break;
    }
  }
  result.final_lr = adam.learning_rate;
  if (keep_best) {
    std::size_t k = 0;
    for (const auto& p : params) p->value = best_values[k++];
  }
  return result;
}

// --- protocols -----------------------------------------------------------

struct SequenceRow {
  std::string model;
  std::vector<double> accuracy;  // t = 1..T
};

struct SequenceTable {
  std::size_t horizon = 5;
  std::vector<SequenceRow> rows;
};

/// Continual forecasting: each model's per-horizon accuracy, t = 1..T.
template <class T>
SequenceTable sequence_eval(const std::vector<const Forecaster<T>*>& models,
                            const std::vector<ClipAnnotation>& test, std::size_t horizon = 5,
                            Mode mode = Mode::normal, std::size_t threads = 0) {
  SequenceTable table;
  table.horizon = horizon;
  for (const auto* m : models)
    table.rows.push_back({m->name(), evaluate_accuracy(*m, test, horizon, mode, threads).per_horizon});
  return table;
}

inline std::string sequence_table_csv(const SequenceTable& t) {
  std::ostringstream os;
  os << "model";
  for (std::size_t k = 1; k <= t.horizon; ++k) os << ",t" << k;
  os << "\n";
  for (const auto& r : t.rows) {
    os << r.model;
    for (double a : r.accuracy) os << "," << fmt_metric(a);
    os << "\n";
  }
  return os.str();
}

struct ObservationReport {
  EvalReport normal, observation;
};

/// Both modes, same weights, same instances.
template <class T>
ObservationReport observation_eval(const Forecaster<T>& model, const std::vector<ClipAnnotation>& test,
                                   std::size_t horizon = 1, std::size_t threads = 0) {
  return {evaluate_accuracy(model, test, horizon, Mode::normal, threads),
          evaluate_accuracy(model, test, horizon, Mode::observation, threads)};
}

inline const std::vector<std::size_t>& standard_lengths() {
  static const std::vector<std::size_t> l = {5, 10, 15};
  return l;
}

/// The largest target length a clip reaches; clips shorter than every
/// target belong to no subset. Subsets are therefore disjoint.
inline std::optional<std::size_t> length_bucket(std::size_t frames, const std::vector<std::size_t>& lengths) {
  std::optional<std::size_t> best;
  for (std::size_t l : lengths)
    if (l <= frames && (!best || l > *best)) best = l;
  return best;
}

/// Clips of the `length` bucket, prefix-cut to exactly `length` frames.
inline std::vector<ClipAnnotation> length_subset(const std::vector<ClipAnnotation>& clips, std::size_t length,
                                                 const std::vector<std::size_t>& lengths = standard_lengths()) {
  std::vector<ClipAnnotation> out;
  for (const auto& c : clips)
    if (length_bucket(c.frames.size(), lengths) == length) out.push_back(truncate_clip(c, length));
  return out;
}

struct LengthRow {
  std::size_t length = 0;
  std::size_t clips = 0, train = 0, test = 0;
  EvalReport report;
};

/// Per length: cut the subset, split it (test_fraction, seeded), train a
/// fresh model from `factory`, evaluate.
template <class T>
std::vector<LengthRow> length_subset_eval(
    const std::function<std::unique_ptr<Forecaster<T>>()>& factory, const std::vector<ClipAnnotation>& clips,
    const RunConfig& cfg, const std::vector<std::size_t>& lengths = standard_lengths(),
    double test_fraction = 0.2) {
  std::vector<LengthRow> rows;
  for (std::size_t len : lengths) {
    auto subset = length_subset(clips, len, lengths);
    if (subset.empty()) throw DataError("length subset " + std::to_string(len) + " is empty");
    std::mt19937_64 rng(cfg.seed ^ (0x9e3779b97f4a7c15ULL * len));
    std::shuffle(subset.begin(), subset.end(), rng);
    std::size_t n_test = std::max<std::size_t>(1, static_cast<std::size_t>(test_fraction * subset.size()));
    if (n_test >= subset.size()) throw DataError("length subset " + std::to_string(len) + " is too small to split");
    std::vector<ClipAnnotation> test(subset.begin(), subset.begin() + static_cast<std::ptrdiff_t>(n_test));
    std::vector<ClipAnnotation> tr(subset.begin() + static_cast<std::ptrdiff_t>(n_test), subset.end());
    auto model = factory();
    train(*model, tr, cfg);
    rows.push_back({len, subset.size(), tr.size(), test.size(),
                    evaluate_accuracy(*model, test, cfg.horizon, cfg.mode, cfg.threads)});
  }
  return rows;
}

}  // namespace relcast
