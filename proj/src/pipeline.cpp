#include "gazepred/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <sstream>

#include "gazepred/error.hpp"
#include "gazepred/io.hpp"
#include "gazepred/parallel.hpp"
#include "gazepred/predict.hpp"
#include "gazepred/rng.hpp"
#include "gazepred/stats.hpp"

namespace gazepred {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

template <typename T>
void get_to(const json& j, const char* key, T& dst) {
  if (j.contains(key)) dst = j.at(key).get<T>();
}

json to_json(const ClassifierConfig& c) {
  return {{"peak_threshold", c.peak_threshold},
          {"onset_offset_threshold", c.onset_offset_threshold},
          {"min_saccade_ms", c.min_saccade_ms},
          {"min_fixation_ms", c.min_fixation_ms},
          {"max_saccade_ms", c.max_saccade_ms}};
}

ClassifierConfig classifier_from_json(const json& j) {
  ClassifierConfig c;
  get_to(j, "peak_threshold", c.peak_threshold);
  get_to(j, "onset_offset_threshold", c.onset_offset_threshold);
  get_to(j, "min_saccade_ms", c.min_saccade_ms);
  get_to(j, "min_fixation_ms", c.min_fixation_ms);
  get_to(j, "max_saccade_ms", c.max_saccade_ms);
  return c;
}

json to_json(const ColumnMapping& m) {
  json j = {{"time", m.time}, {"x", m.x}, {"y", m.y}, {"validity_zero_is_valid", m.validity_zero_is_valid}};
  j["validity"] = m.validity ? json(*m.validity) : json(nullptr);
  j["target_x"] = m.target_x ? json(*m.target_x) : json(nullptr);
  j["target_y"] = m.target_y ? json(*m.target_y) : json(nullptr);
  return j;
}

ColumnMapping mapping_from_json(const json& j) {
  ColumnMapping m;
  get_to(j, "time", m.time);
  get_to(j, "x", m.x);
  get_to(j, "y", m.y);
  get_to(j, "validity_zero_is_valid", m.validity_zero_is_valid);
  auto opt = [&](const char* key, std::optional<std::string>& dst) {
    if (!j.contains(key)) return;
    dst = j.at(key).is_null() ? std::nullopt : std::optional<std::string>(j.at(key).get<std::string>());
  };
  opt("validity", m.validity);
  opt("target_x", m.target_x);
  opt("target_y", m.target_y);
  return m;
}

json to_json(const FitOptions& o) {
  return {{"calibration_fraction", o.calibration_fraction}, {"min_saccades", o.min_saccades},
          {"max_evaluations", o.max_evaluations},           {"tolerance", o.tolerance},
          {"lead_ms", o.lead_ms},                           {"tail_ms", o.tail_ms}};
}

FitOptions fit_options_from_json(const json& j) {
  FitOptions o;
  get_to(j, "calibration_fraction", o.calibration_fraction);
  get_to(j, "min_saccades", o.min_saccades);
  get_to(j, "max_evaluations", o.max_evaluations);
  get_to(j, "tolerance", o.tolerance);
  get_to(j, "lead_ms", o.lead_ms);
  get_to(j, "tail_ms", o.tail_ms);
  return o;
}

std::string csv_double(double v) { return io::format_double(v); }

std::string pi_dir(int pi) { return "pi" + std::to_string(pi); }

// Config fields that do not influence any output.
json output_relevant(json j) {
  j.erase("jobs");
  j.erase("out_dir");
  return j;
}

}  // namespace

// ---------------------------------------------------------------- config

void RunConfig::validate() const {
  if (data.kind != "synthetic" && data.kind != "csv") throw ConfigError("data.kind must be 'synthetic' or 'csv'");
  if (data.kind == "synthetic") data.synthetic.validate();
  if (data.kind == "csv" && data.csv_dir.empty()) throw ConfigError("data.csv_dir is required for csv input");
  if (jobs < 1) throw ConfigError("jobs must be at least 1");
  if (velocity.window < 3 || velocity.window % 2 == 0) throw ConfigError("velocity window must be odd and >= 3");
  if (velocity.order < 1 || velocity.order >= velocity.window) throw ConfigError("velocity order out of range");
  classifier.validate();
  if (!(split.train_fraction >= 0.0) || !(split.test_fraction > 0.0) || split.train_fraction + split.test_fraction > 1.0)
    throw ConfigError("split fractions must be non-negative, test > 0, and sum to at most 1");
  if (pi_ms.empty()) throw ConfigError("pi_ms must list at least one prediction interval");
  std::set<int> seen;
  for (int pi : pi_ms) {
    if (pi <= 0) throw ConfigError("prediction intervals must be positive");
    if (!seen.insert(pi).second) throw ConfigError("duplicate prediction interval " + std::to_string(pi));
  }
  if (predictors.empty()) throw ConfigError("at least one predictor is required");
  for (const auto& p : predictors)
    if (std::find(known_predictors().begin(), known_predictors().end(), p) == known_predictors().end())
      throw ConfigError("unknown predictor '" + p + "'");
  opkf.filter.validate();
  if (opkf.fit_pi_ms <= 0) throw ConfigError("opkf.fit_pi_ms must be positive");
  lstm.train.validate();
  if (lstm.inference_stride < 1) throw ConfigError("lstm.inference_stride must be at least 1");
  const auto& e = evaluation;
  if (e.labels != "auto" && e.labels != "truth" && e.labels != "classified")
    throw ConfigError("evaluation.labels must be 'auto', 'truth' or 'classified'");
  if (!(e.alpha > 0.0 && e.alpha < 1.0)) throw ConfigError("evaluation.alpha must lie in (0, 1)");
  if (!(e.cdf_step_dva > 0.0) || !(e.cdf_max_dva > e.cdf_step_dva)) throw ConfigError("invalid CDF grid");
  if (e.progress_bins < 1) throw ConfigError("evaluation.progress_bins must be at least 1");
  if (!(e.progress_amp_hi >= e.progress_amp_lo)) throw ConfigError("invalid progress amplitude range");
  if (e.labels == "truth" && data.kind == "csv") throw ConfigError("truth labels exist only for synthetic data");
}

SynthConfig RunConfig::effective_synth() const {
  SynthConfig s = data.synthetic;
  s.seed = derive_seed(seed, 1);
  return s;
}

TrainConfig RunConfig::effective_train(int pi) const {
  TrainConfig t = lstm.train;
  t.seed = derive_seed(seed, 3);
  t.pi_ms = pi;
  return t;
}

std::uint64_t RunConfig::split_seed() const { return derive_seed(seed, 2); }

json to_json(const RunConfig& c) {
  json synth = to_json(c.data.synthetic);
  synth.erase("seed");
  json train = to_json(c.lstm.train);
  train.erase("seed");
  train.erase("pi_ms");
  return {
      {"seed", c.seed},
      {"jobs", c.jobs},
      {"out_dir", c.out_dir.string()},
      {"data",
       {{"kind", c.data.kind},
        {"csv_dir", c.data.csv_dir.string()},
        {"mapping", to_json(c.data.mapping)},
        {"synthetic", synth}}},
      {"velocity", {{"window", c.velocity.window}, {"order", c.velocity.order}}},
      {"classifier", to_json(c.classifier)},
      {"features", {{"mean_of_medians", c.features.mean_of_medians}}},
      {"split", {{"train_fraction", c.split.train_fraction}, {"test_fraction", c.split.test_fraction}}},
      {"pi_ms", c.pi_ms},
      {"predictors", c.predictors},
      {"opkf",
       {{"filter", to_json(c.opkf.filter)},
        {"fit", c.opkf.fit},
        {"fit_pi_ms", c.opkf.fit_pi_ms},
        {"fit_options", to_json(c.opkf.fit_options)}}},
      {"lstm", {{"train", train}, {"inference_stride", c.lstm.inference_stride}}},
      {"evaluation",
       {{"labels", c.evaluation.labels},
        {"metric", to_string(c.evaluation.metric)},
        {"min_records", c.evaluation.min_records},
        {"alpha", c.evaluation.alpha},
        {"cdf_max_dva", c.evaluation.cdf_max_dva},
        {"cdf_step_dva", c.evaluation.cdf_step_dva},
        {"progress_bins", c.evaluation.progress_bins},
        {"progress_amp_lo", c.evaluation.progress_amp_lo},
        {"progress_amp_hi", c.evaluation.progress_amp_hi}}},
  };
}

RunConfig run_config_from_json(const json& j) {
  RunConfig c;
  try {
    if (!j.is_object()) throw ConfigError("run config must be a JSON object");
    get_to(j, "seed", c.seed);
    get_to(j, "jobs", c.jobs);
    if (j.contains("out_dir")) c.out_dir = j.at("out_dir").get<std::string>();
    if (j.contains("data")) {
      const json& d = j.at("data");
      get_to(d, "kind", c.data.kind);
      if (d.contains("csv_dir")) c.data.csv_dir = d.at("csv_dir").get<std::string>();
      if (d.contains("mapping")) c.data.mapping = mapping_from_json(d.at("mapping"));
      if (d.contains("synthetic")) c.data.synthetic = synth_config_from_json(d.at("synthetic"));
    }
    if (j.contains("velocity")) {
      get_to(j.at("velocity"), "window", c.velocity.window);
      get_to(j.at("velocity"), "order", c.velocity.order);
    }
    if (j.contains("classifier")) c.classifier = classifier_from_json(j.at("classifier"));
    if (j.contains("features")) get_to(j.at("features"), "mean_of_medians", c.features.mean_of_medians);
    if (j.contains("split")) {
      get_to(j.at("split"), "train_fraction", c.split.train_fraction);
      get_to(j.at("split"), "test_fraction", c.split.test_fraction);
    }
    get_to(j, "pi_ms", c.pi_ms);
    get_to(j, "predictors", c.predictors);
    if (j.contains("opkf")) {
      const json& o = j.at("opkf");
      if (o.contains("filter")) c.opkf.filter = opkf_config_from_json(o.at("filter"));
      get_to(o, "fit", c.opkf.fit);
      get_to(o, "fit_pi_ms", c.opkf.fit_pi_ms);
      if (o.contains("fit_options")) c.opkf.fit_options = fit_options_from_json(o.at("fit_options"));
    }
    if (j.contains("lstm")) {
      const json& l = j.at("lstm");
      if (l.contains("train")) c.lstm.train = train_config_from_json(l.at("train"));
      get_to(l, "inference_stride", c.lstm.inference_stride);
    }
    if (j.contains("evaluation")) {
      const json& e = j.at("evaluation");
      get_to(e, "labels", c.evaluation.labels);
      if (e.contains("metric")) c.evaluation.metric = error_metric_from_string(e.at("metric").get<std::string>());
      get_to(e, "min_records", c.evaluation.min_records);
      get_to(e, "alpha", c.evaluation.alpha);
      get_to(e, "cdf_max_dva", c.evaluation.cdf_max_dva);
      get_to(e, "cdf_step_dva", c.evaluation.cdf_step_dva);
      get_to(e, "progress_bins", c.evaluation.progress_bins);
      get_to(e, "progress_amp_lo", c.evaluation.progress_amp_lo);
      get_to(e, "progress_amp_hi", c.evaluation.progress_amp_hi);
    }
  } catch (const json::exception& e) {
    throw ConfigError(std::string("invalid run config: ") + e.what());
  }
  return c;
}

RunConfig load_run_config(const fs::path& path) {
  json j;
  try {
    j = io::read_json_file(path);
  } catch (const json::exception& e) {
    throw ConfigError("cannot parse config " + path.string() + ": " + e.what());
  }
  return run_config_from_json(j);
}

const std::vector<std::string>& known_predictors() {
  static const std::vector<std::string> kNames = {"constant_position", "constant_velocity", "opkf", "lstm"};
  return kNames;
}

const std::vector<std::string>& stage_names() {
  static const std::vector<std::string> kNames = {"synth",     "ingest",     "classify", "features", "fit-opkf",
                                                  "train-lstm", "predict",   "evaluate", "report"};
  return kNames;
}

Split split_subjects(std::vector<std::string> ids, const SplitConfig& cfg, std::uint64_t seed) {
  std::sort(ids.begin(), ids.end());
  Rng rng(seed);
  shuffle(ids, rng);
  const auto n = static_cast<double>(ids.size());
  const auto n_train = static_cast<std::size_t>(std::floor(cfg.train_fraction * n + 0.5));
  const auto n_test = std::min(ids.size() - n_train, static_cast<std::size_t>(std::floor(cfg.test_fraction * n + 0.5)));
  Split s;
  s.train.assign(ids.begin(), ids.begin() + static_cast<long>(n_train));
  s.test.assign(ids.begin() + static_cast<long>(n_train), ids.begin() + static_cast<long>(n_train + n_test));
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

// ---------------------------------------------------------------- plumbing

Pipeline::Pipeline(RunConfig cfg) : cfg_(std::move(cfg)) { cfg_.validate(); }

fs::path Pipeline::rel(const fs::path& p) const { return p.lexically_relative(cfg_.out_dir); }

std::string Pipeline::data_stage() const { return cfg_.data.kind == "synthetic" ? "synth" : "ingest"; }

json Pipeline::stage_manifest(const std::string& stage) const {
  const fs::path p = cfg_.out_dir / "manifests" / (stage + ".json");
  if (!fs::exists(p)) return nullptr;
  return io::read_json_file(p);
}

void Pipeline::require_stage(const std::string& stage) const {
  const json m = stage_manifest(stage);
  if (m.is_null()) throw DependencyError(stage, "run `" + stage + "` first");
  for (const auto& [file, hash] : m.at("outputs").items()) {
    const fs::path p = cfg_.out_dir / file;
    if (!fs::exists(p) || io::sha256_file(p) != hash.get<std::string>())
      throw DependencyError(stage, "output " + file + " is missing or modified; re-run `" + stage + "`");
  }
}

std::string Pipeline::input_hash(const std::string& stage, const json& stage_cfg,
                                 const std::vector<std::string>& upstream) const {
  json h = {{"stage", stage}, {"config", stage_cfg}};
  for (const auto& u : upstream) {
    require_stage(u);
    h["upstream"][u] = stage_manifest(u).at("outputs");
  }
  return io::sha256_hex(h.dump());
}

bool Pipeline::cache_hit(const std::string& stage, const std::string& inputs_hash) const {
  const json m = stage_manifest(stage);
  if (m.is_null() || m.value("inputs_hash", "") != inputs_hash) return false;
  for (const auto& [file, hash] : m.at("outputs").items()) {
    const fs::path p = cfg_.out_dir / file;
    if (!fs::exists(p) || io::sha256_file(p) != hash.get<std::string>()) return false;
  }
  return true;
}

StageResult Pipeline::finish_stage(const std::string& stage, const std::string& inputs_hash,
                                   const std::vector<fs::path>& outputs, const json& extra) {
  json m = {{"stage", stage}, {"inputs_hash", inputs_hash}, {"outputs", json::object()}};
  if (!extra.is_null()) m["details"] = extra;
  StageResult r{stage, false, {}};
  for (const auto& p : outputs) {
    const std::string name = rel(p).generic_string();
    m["outputs"][name] = io::sha256_file(p);
    r.outputs.push_back(name);
  }
  io::write_json_file(cfg_.out_dir / "manifests" / (stage + ".json"), m);
  write_top_manifest();
  return r;
}

void Pipeline::write_top_manifest() const {
  json top = {{"config", output_relevant(to_json(cfg_))}, {"stages", json::object()}, {"files", json::object()}};
  for (const auto& s : stage_names()) {
    const json m = stage_manifest(s);
    if (m.is_null()) continue;
    top["stages"][s] = m.at("inputs_hash");
    for (const auto& [file, hash] : m.at("outputs").items()) top["files"][file] = hash;
  }
  io::write_json_file(cfg_.out_dir / "manifest.json", top);
}

std::vector<std::string> Pipeline::subject_ids() const {
  require_stage(data_stage());
  std::vector<std::string> ids;
  for (const auto& [file, hash] : stage_manifest(data_stage()).at("outputs").items()) {
    const fs::path p(file);
    if (p.parent_path() == "data" && p.extension() == ".csv") ids.push_back(p.stem().string());
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

Pipeline::Subject Pipeline::load_subject(const std::string& id) const {
  Subject s;
  const fs::path dir = cfg_.out_dir / "data";
  s.recording = ingest_csv(dir / (id + ".csv"));
  const fs::path labels = dir / (id + ".labels.json");
  if (fs::exists(labels)) {
    s.truth = segments_from_json(io::read_json_file(labels).at("segments"));
    s.has_truth = true;
  }
  return s;
}

bool Pipeline::use_truth_labels() const {
  if (cfg_.evaluation.labels == "truth") return true;
  if (cfg_.evaluation.labels == "classified") return false;
  return cfg_.data.kind == "synthetic";
}

std::vector<EventSegment> Pipeline::analysis_segments(const Subject& s) const {
  if (use_truth_labels()) {
    if (!s.has_truth) throw DataError("subject " + s.recording.subject_id + " has no ground-truth labels");
    return s.truth;
  }
  const fs::path p = cfg_.out_dir / "segments" / (s.recording.subject_id + ".json");
  if (!fs::exists(p)) throw DependencyError("classify", "no segments for subject " + s.recording.subject_id);
  return segments_from_json(io::read_json_file(p));
}

Split Pipeline::load_split() const {
  const json j = io::read_json_file(cfg_.out_dir / "split.json");
  return {j.at("train").get<std::vector<std::string>>(), j.at("test").get<std::vector<std::string>>()};
}

bool Pipeline::wants(const std::string& predictor) const {
  return std::find(cfg_.predictors.begin(), cfg_.predictors.end(), predictor) != cfg_.predictors.end();
}

// ---------------------------------------------------------------- data stages

namespace {

fs::path write_split(const fs::path& out, const std::vector<std::string>& ids, const RunConfig& cfg) {
  const Split s = split_subjects(ids, cfg.split, cfg.split_seed());
  const fs::path p = out / "split.json";
  io::write_json_file(p, {{"train", s.train}, {"test", s.test}});
  return p;
}

}  // namespace

StageResult Pipeline::synth() {
  if (cfg_.data.kind != "synthetic") throw ConfigError("`synth` needs data.kind = synthetic");
  const SynthConfig sc = cfg_.effective_synth();
  const json stage_cfg = {{"synthetic", to_json(sc)}, {"split", to_json(cfg_).at("split")}, {"seed", cfg_.seed}};
  const std::string h = input_hash("synth", stage_cfg, {});
  if (cache_hit("synth", h)) return {"synth", true, {}};

  const fs::path dir = cfg_.out_dir / "data";
  fs::remove_all(dir);
  fs::create_directories(dir);
  const auto cohort = generate_cohort(sc, cfg_.jobs);
  write_cohort(cohort, dir);
  std::vector<fs::path> outputs;
  std::vector<std::string> ids;
  for (const auto& s : cohort) {
    ids.push_back(s.recording.subject_id);
    outputs.push_back(dir / (s.recording.subject_id + ".csv"));
    outputs.push_back(dir / (s.recording.subject_id + ".labels.json"));
  }
  outputs.push_back(write_split(cfg_.out_dir, ids, cfg_));
  return finish_stage("synth", h, outputs);
}

StageResult Pipeline::ingest() {
  if (cfg_.data.kind != "csv") throw ConfigError("`ingest` needs data.kind = csv");
  const fs::path src = cfg_.data.csv_dir;
  if (!fs::is_directory(src)) throw DataError("csv_dir " + src.string() + " is not a directory");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(src))
    if (e.is_regular_file() && e.path().extension() == ".csv") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  if (files.empty()) throw EmptyInputError("no .csv files in " + src.string());

  json stage_cfg = {{"mapping", to_json(cfg_.data.mapping)}, {"split", to_json(cfg_).at("split")}, {"seed", cfg_.seed}};
  for (const auto& f : files) stage_cfg["inputs"][f.filename().string()] = io::sha256_file(f);
  const std::string h = input_hash("ingest", stage_cfg, {});
  if (cache_hit("ingest", h)) return {"ingest", true, {}};

  const fs::path dir = cfg_.out_dir / "data";
  fs::remove_all(dir);
  fs::create_directories(dir);
  std::vector<GazeRecording> recs(files.size());
  parallel_for(files.size(), cfg_.jobs, [&](std::size_t i) {
    recs[i] = ingest_csv(files[i], cfg_.data.mapping);
    validate_recording(recs[i]);
  });
  std::vector<fs::path> outputs;
  std::vector<std::string> ids;
  for (const auto& r : recs) {
    const fs::path p = dir / (r.subject_id + ".csv");
    export_csv_file(r, p);
    outputs.push_back(p);
    ids.push_back(r.subject_id);
  }
  outputs.push_back(write_split(cfg_.out_dir, ids, cfg_));
  return finish_stage("ingest", h, outputs);
}

StageResult Pipeline::classify() {
  const json full = to_json(cfg_);
  const std::string h =
      input_hash("classify", {{"velocity", full.at("velocity")}, {"classifier", full.at("classifier")}}, {data_stage()});
  if (cache_hit("classify", h)) return {"classify", true, {}};
  const auto ids = subject_ids();
  const fs::path dir = cfg_.out_dir / "segments";
  fs::remove_all(dir);
  fs::create_directories(dir);
  std::vector<fs::path> outputs(ids.size());
  parallel_for(ids.size(), cfg_.jobs, [&](std::size_t i) {
    const Subject s = load_subject(ids[i]);
    const VelocityTrace vel = compute_velocity(s.recording, cfg_.velocity);
    auto segs = classify_events(s.recording, vel, cfg_.classifier);
    attach_saccade_props(segs, s.recording, vel);
    outputs[i] = dir / (ids[i] + ".json");
    io::write_json_file(outputs[i], segments_to_json(segs));
  });
  return finish_stage("classify", h, outputs);
}

namespace {

std::vector<std::string> with_labels(std::vector<std::string> upstream, bool truth) {
  if (!truth) upstream.push_back("classify");
  return upstream;
}

}  // namespace

StageResult Pipeline::features() {
  const json full = to_json(cfg_);
  const json stage_cfg = {{"features", full.at("features")},
                          {"velocity", full.at("velocity")},
                          {"labels", use_truth_labels() ? "truth" : "classified"}};
  const std::string h = input_hash("features", stage_cfg, with_labels({data_stage()}, use_truth_labels()));
  if (cache_hit("features", h)) return {"features", true, {}};
  const auto ids = subject_ids();
  std::vector<SubjectFeatures> rows(ids.size());
  parallel_for(ids.size(), cfg_.jobs, [&](std::size_t i) {
    const Subject s = load_subject(ids[i]);
    const VelocityTrace vel = compute_velocity(s.recording, cfg_.velocity);
    rows[i] = compute_features(s.recording, vel, analysis_segments(s), cfg_.features);
  });
  const fs::path p = cfg_.out_dir / "features.csv";
  write_features_csv(rows, p);
  return finish_stage("features", h, {p});
}

// ---------------------------------------------------------------- models

StageResult Pipeline::fit_opkf() {
  const json full = to_json(cfg_);
  const json stage_cfg = {{"opkf", full.at("opkf")},
                          {"predictors", cfg_.predictors},
                          {"labels", use_truth_labels() ? "truth" : "classified"}};
  const std::string h = input_hash("fit-opkf", stage_cfg, with_labels({data_stage()}, use_truth_labels()));
  if (cache_hit("fit-opkf", h)) return {"fit-opkf", true, {}};
  const fs::path dir = cfg_.out_dir / "opkf";
  fs::remove_all(dir);
  if (!wants("opkf")) return finish_stage("fit-opkf", h, {}, {{"skipped", "opkf not selected"}});
  fs::create_directories(dir);

  const Split split = load_split();
  std::vector<fs::path> outputs(split.test.size());
  OpkfConfig filter = cfg_.opkf.filter;
  filter.pi_ms = cfg_.opkf.fit_pi_ms;
  parallel_for(split.test.size(), cfg_.jobs, [&](std::size_t i) {
    const Subject s = load_subject(split.test[i]);
    const auto segs = analysis_segments(s);
    json j;
    if (cfg_.opkf.fit) {
      try {
        j = to_json(fit_subject_params(s.recording, segs, filter.params, filter, cfg_.opkf.fit_options));
        j["fitted"] = true;
      } catch (const InsufficientDataError& e) {
        j = {{"params", to_json(filter.params)}, {"fitted", false}, {"reason", e.what()}};
      }
    } else {
      j = {{"params", to_json(filter.params)}, {"fitted", false}, {"reason", "fitting disabled"}};
    }
    outputs[i] = dir / (split.test[i] + ".json");
    io::write_json_file(outputs[i], j);
  });
  return finish_stage("fit-opkf", h, outputs);
}

StageResult Pipeline::train_lstm() {
  const json full = to_json(cfg_);
  const json stage_cfg = {
      {"lstm", full.at("lstm")}, {"pi_ms", cfg_.pi_ms}, {"predictors", cfg_.predictors}, {"seed", cfg_.seed}};
  const std::string h = input_hash("train-lstm", stage_cfg, {data_stage()});
  if (cache_hit("train-lstm", h)) return {"train-lstm", true, {}};
  const fs::path dir = cfg_.out_dir / "lstm";
  fs::remove_all(dir);
  if (!wants("lstm")) return finish_stage("train-lstm", h, {}, {{"skipped", "lstm not selected"}});
  fs::create_directories(dir);

  const Split split = load_split();
  if (split.train.empty()) throw ConfigError("lstm training needs train_fraction > 0");
  std::vector<GazeRecording> recs(split.train.size());
  parallel_for(split.train.size(), cfg_.jobs, [&](std::size_t i) { recs[i] = load_subject(split.train[i]).recording; });

  std::vector<fs::path> outputs;
  json details = json::object();
  for (int pi : cfg_.pi_ms) {
    const TrainConfig tc = cfg_.effective_train(pi);
    const auto [train, validation] = build_training_sets(recs, tc);
    if (train.size() == 0) throw InsufficientDataError("no training windows for PI " + std::to_string(pi));
    LstmModel model;
    model.initialize(tc.seed);
    const TrainResult res = lstm_train(std::move(model), train, validation, tc);
    const fs::path mp = dir / (pi_dir(pi) + ".json");
    const fs::path lp = dir / ("loss_" + pi_dir(pi) + ".csv");
    res.model.save(mp);
    write_loss_csv(res.history, lp);
    outputs.push_back(mp);
    outputs.push_back(lp);
    details[pi_dir(pi)] = {{"train_windows", train.size()},
                           {"validation_windows", validation.size()},
                           {"best_epoch", res.best_epoch},
                           {"initial_train_loss", res.initial_train_loss}};
  }
  return finish_stage("train-lstm", h, outputs, details);
}

StageResult Pipeline::predict() {
  const json full = to_json(cfg_);
  const json stage_cfg = {{"predictors", cfg_.predictors},
                          {"pi_ms", cfg_.pi_ms},
                          {"opkf_filter", full.at("opkf").at("filter")},
                          {"lstm_stride", cfg_.lstm.inference_stride},
                          {"labels", use_truth_labels() ? "truth" : "classified"}};
  std::vector<std::string> upstream = with_labels({data_stage()}, use_truth_labels());
  if (wants("opkf")) upstream.push_back("fit-opkf");
  if (wants("lstm")) upstream.push_back("train-lstm");
  const std::string h = input_hash("predict", stage_cfg, upstream);
  if (cache_hit("predict", h)) return {"predict", true, {}};

  const Split split = load_split();
  const fs::path root = cfg_.out_dir / "predictions";
  fs::remove_all(root);
  std::map<int, LstmModel> models;
  if (wants("lstm"))
    for (int pi : cfg_.pi_ms) models.emplace(pi, LstmModel::load(cfg_.out_dir / "lstm" / (pi_dir(pi) + ".json")));
  for (int pi : cfg_.pi_ms)
    for (const auto& p : cfg_.predictors) fs::create_directories(root / pi_dir(pi) / p);

  const std::size_t n = split.test.size();
  std::vector<std::vector<fs::path>> per_subject(n);
  parallel_for(n, cfg_.jobs, [&](std::size_t i) {
    const std::string& id = split.test[i];
    const Subject s = load_subject(id);
    const VelocityTrace vel = compute_velocity(s.recording, predictor_diff_config());
    std::vector<EventSegment> segs;
    OpkfConfig filter = cfg_.opkf.filter;
    if (wants("opkf")) {
      segs = analysis_segments(s);
      filter.params = plant_params_from_json(io::read_json_file(cfg_.out_dir / "opkf" / (id + ".json")).at("params"));
    }
    for (int pi : cfg_.pi_ms) {
      for (const auto& p : cfg_.predictors) {
        PredictionRun run;
        if (p == "constant_position") {
          run = baseline_predict(BaselineKind::ConstantPosition, s.recording, vel, pi);
        } else if (p == "constant_velocity") {
          run = baseline_predict(BaselineKind::ConstantVelocity, s.recording, vel, pi);
        } else if (p == "opkf") {
          filter.pi_ms = pi;
          run = opkf_predict_recording(s.recording, segs, filter);
        } else {
          run = lstm_predict_recording(models.at(pi), s.recording, pi, cfg_.lstm.inference_stride);
        }
        const fs::path out = root / pi_dir(pi) / p / (id + ".csv");
        write_run_csv(run, out);
        per_subject[i].push_back(out);
      }
    }
  });
  std::vector<fs::path> outputs;
  for (const auto& v : per_subject) outputs.insert(outputs.end(), v.begin(), v.end());
  std::sort(outputs.begin(), outputs.end());
  return finish_stage("predict", h, outputs);
}

// ---------------------------------------------------------------- evaluation

namespace {

struct ClassTables {
  std::map<std::string, SubjectStats> by_model;  // only models with enough data
};

void write_csv(const fs::path& p, const std::string& text, std::vector<fs::path>& outputs) {
  io::write_text_file(p, text);
  outputs.push_back(p);
}

}  // namespace

StageResult Pipeline::evaluate() {
  const json full = to_json(cfg_);
  const json stage_cfg = {{"config", output_relevant(full)}};
  std::vector<std::string> upstream = with_labels({data_stage(), "features", "predict"}, use_truth_labels());
  const std::string h = input_hash("evaluate", stage_cfg, upstream);
  if (cache_hit("evaluate", h)) return {"evaluate", true, {}};

  const auto& ev = cfg_.evaluation;
  const Split split = load_split();
  const auto features = read_features_csv(cfg_.out_dir / "features.csv");
  const std::size_t n = split.test.size();
  std::vector<Subject> subjects(n);
  std::vector<std::vector<EventSegment>> segs(n);
  parallel_for(n, cfg_.jobs, [&](std::size_t i) {
    subjects[i] = load_subject(split.test[i]);
    segs[i] = analysis_segments(subjects[i]);
  });

  std::vector<double> grid;
  const int steps = static_cast<int>(std::floor(ev.cdf_max_dva / ev.cdf_step_dva + 1e-9));
  for (int k = 0; k <= steps; ++k) grid.push_back(k * ev.cdf_step_dva);

  std::vector<fs::path> outputs;
  const fs::path reports = cfg_.out_dir / "reports";
  fs::remove_all(reports);

  for (int pi : cfg_.pi_ms) {
    const fs::path dir = reports / pi_dir(pi);
    fs::create_directories(dir);
    std::vector<std::string> notes;
    std::map<std::string, std::vector<std::pair<std::string, std::vector<ErrorRecord>>>> records;
    std::map<std::string, ProgressSamples> progress;
    json predictor_ids = json::object();

    for (const auto& p : cfg_.predictors) {
      auto& per = records[p];
      per.resize(n);
      std::vector<ProgressSamples> prog(n);
      parallel_for(n, cfg_.jobs, [&](std::size_t i) {
        const fs::path rp = cfg_.out_dir / "predictions" / pi_dir(pi) / p / (split.test[i] + ".csv");
        const PredictionRun run = read_run_csv(rp);
        if (run.pi_ms != pi || run.subject_id != split.test[i])
          throw AlignmentError("prediction file " + rp.string() + " does not match its subject or interval");
        per[i] = {split.test[i], score_run(run, subjects[i].recording, segs[i], ev.metric)};
        prog[i] = saccade_progress_samples(per[i].second, segs[i], ev.progress_amp_lo, ev.progress_amp_hi);
      });
      for (const auto& s : prog) progress[p].append(s);
      json ident = {{"id", p}};
      if (p == "opkf") ident["filter"] = full.at("opkf").at("filter");
      if (p == "lstm")
        ident["model_sha256"] = io::sha256_file(cfg_.out_dir / "lstm" / (pi_dir(pi) + ".json"));
      predictor_ids[p] = ident;
    }

    // CDFs and subject tables per class
    std::map<ErrorClass, ClassTables> tables;
    std::ostringstream t1;
    t1 << "predictor,class,n_subjects,median_of_medians,min,max,ratio,iqr\n";
    for (ErrorClass c : all_error_classes()) {
      const std::string cname = to_string(c);
      std::ostringstream cdf, prof;
      cdf << "error_dva";
      for (const auto& p : cfg_.predictors) cdf << ',' << p;
      cdf << '\n';
      std::map<std::string, std::vector<double>> curves;
      for (const auto& p : cfg_.predictors) {
        std::vector<double> pooled;
        for (const auto& [id, recs] : records[p]) {
          const auto e = class_errors(recs, c);
          pooled.insert(pooled.end(), e.begin(), e.end());
        }
        if (pooled.empty()) {
          notes.push_back(p + ": no " + cname + " records");
          curves[p].assign(grid.size(), std::numeric_limits<double>::quiet_NaN());
        } else {
          curves[p] = cdf_curve(pooled, grid);
        }
      }
      for (std::size_t k = 0; k < grid.size(); ++k) {
        cdf << csv_double(grid[k]);
        for (const auto& p : cfg_.predictors) cdf << ',' << csv_double(curves[p][k]);
        cdf << '\n';
      }
      write_csv(dir / ("cdf_" + cname + ".csv"), cdf.str(), outputs);

      prof << "predictor,subject_id,n,median,iqr,min,max\n";
      for (const auto& p : cfg_.predictors) {
        try {
          SubjectStats st = subject_stats(records[p], c, ev.min_records);
          for (const auto& s : st.subjects)
            prof << p << ',' << s.subject_id << ',' << s.count << ',' << csv_double(s.median) << ','
                 << csv_double(s.iqr) << ',' << csv_double(s.min) << ',' << csv_double(s.max) << '\n';
          t1 << p << ',' << cname << ',' << st.subjects.size() << ',' << csv_double(st.cohort_median) << ','
             << csv_double(st.cohort_min) << ',' << csv_double(st.cohort_max) << ',' << csv_double(st.cohort_ratio)
             << ',' << csv_double(st.cohort_iqr) << '\n';
          tables[c].by_model.emplace(p, std::move(st));
        } catch (const InsufficientDataError& e) {
          notes.push_back(p + " " + cname + ": " + e.what());
        }
      }
      write_csv(dir / ("subject_profiles_" + cname + ".csv"), prof.str(), outputs);
    }
    write_csv(dir / "table1_stats.csv", t1.str(), outputs);

    // feature correlations, one Bonferroni family per class
    std::ostringstream t2;
    t2 << "class,feature,predictor,n,r_s,p_value,significant,family_size\n";
    std::ostringstream kcc;
    kcc << "class,n_subjects,n_models,w\n";
    for (ErrorClass c : all_error_classes()) {
      const std::string cname = to_string(c);
      std::vector<ModelMedians> models;
      for (const auto& p : cfg_.predictors) {
        const auto it = tables[c].by_model.find(p);
        if (it != tables[c].by_model.end()) models.push_back(model_medians(p, it->second));
      }
      if (models.empty()) continue;
      std::vector<std::string> usable;
      for (const auto& f : feature_names()) {
        bool ok = true;
        for (const auto& m : models) {
          std::vector<double> x, y;
          for (const auto& row : features) {
            const auto v = feature_value(row, f);
            const auto it = m.medians.find(row.subject_id);
            if (!v || it == m.medians.end()) continue;
            x.push_back(*v);
            y.push_back(it->second);
          }
          const auto constant = [](const std::vector<double>& v) {
            return std::all_of(v.begin(), v.end(), [&](double a) { return a == v.front(); });
          };
          ok = ok && x.size() >= kMinCorrelationSubjects && !constant(x) && !constant(y);
        }
        if (ok) {
          usable.push_back(f);
        } else {
          notes.push_back(cname + " " + f + ": too few complete or distinct subjects for correlation");
        }
      }
      for (const auto& r : correlate_features(features, models, usable, ev.alpha))
        t2 << cname << ',' << r.feature << ',' << r.model << ',' << r.n << ',' << csv_double(r.r_s) << ','
           << csv_double(r.p_value) << ',' << (r.significant ? "true" : "false") << ',' << r.family_size << '\n';
      if (models.size() >= 2) {
        try {
          const Concordance k = model_concordance(models);
          kcc << cname << ',' << k.n_subjects << ',' << k.n_models << ',' << csv_double(k.w) << '\n';
        } catch (const DataError& e) {
          notes.push_back(cname + " concordance: " + e.what());
        } catch (const NumericalError& e) {
          notes.push_back(cname + " concordance: " + e.what());
        }
      }
    }
    write_csv(dir / "table2_correlations.csv", t2.str(), outputs);
    write_csv(dir / "kcc.csv", kcc.str(), outputs);

    std::ostringstream prog, cep;
    prog << "predictor,bin,t_lo,t_hi,count,median,n_saccades\n";
    cep << "predictor,offset_ms,count,median\n";
    for (const auto& p : cfg_.predictors) {
      try {
        const ProgressCurve curve = saccade_progress_curve(progress[p], ev.progress_bins);
        for (std::size_t b = 0; b < curve.bins.size(); ++b) {
          const auto& bin = curve.bins[b];
          prog << p << ',' << b << ',' << csv_double(bin.t_lo) << ',' << csv_double(bin.t_hi) << ',' << bin.count << ','
               << csv_double(bin.median) << ',' << curve.n_saccades << '\n';
        }
      } catch (const InsufficientDataError& e) {
        notes.push_back(p + " saccade progress: " + e.what());
      }
      std::vector<ErrorRecord> all;
      for (const auto& [id, recs] : records[p]) all.insert(all.end(), recs.begin(), recs.end());
      for (const auto& pt : cep_curve(all))
        cep << p << ',' << pt.offset_ms << ',' << pt.count << ',' << csv_double(pt.median) << '\n';
    }
    write_csv(dir / "saccade_progress.csv", prog.str(), outputs);
    write_csv(dir / "cep_curve.csv", cep.str(), outputs);

    json bundle = {{"pi_ms", pi},
                   {"config", output_relevant(full)},
                   {"seeds",
                    {{"master", cfg_.seed},
                     {"synthetic", cfg_.effective_synth().seed},
                     {"split", cfg_.split_seed()},
                     {"lstm", cfg_.effective_train(pi).seed}}},
                   {"labels", use_truth_labels() ? "truth" : "classified"},
                   {"test_subjects", split.test},
                   {"predictors", predictor_ids},
                   {"notes", notes},
                   {"files", json::object()}};
    for (const auto& f : outputs)
      if (f.parent_path() == dir) bundle["files"][f.filename().string()] = io::sha256_file(f);
    const fs::path mp = dir / "manifest.json";
    io::write_json_file(mp, bundle);
    outputs.push_back(mp);
  }
  return finish_stage("evaluate", h, outputs);
}

StageResult Pipeline::report() {
  const std::string h = input_hash("report", {{"pi_ms", cfg_.pi_ms}, {"predictors", cfg_.predictors}}, {"evaluate"});
  if (cache_hit("report", h)) return {"report", true, {}};
  const fs::path reports = cfg_.out_dir / "reports";

  // per PI: predictor -> class -> subject -> median
  std::map<int, std::map<std::string, std::map<std::string, std::map<std::string, double>>>> medians;
  for (int pi : cfg_.pi_ms) {
    for (ErrorClass c : all_error_classes()) {
      const io::CsvTable t = io::read_csv_file(reports / pi_dir(pi) / ("subject_profiles_" + to_string(c) + ".csv"));
      const int cp = t.column("predictor"), cs = t.column("subject_id"), cm = t.column("median");
      if (cp < 0 || cs < 0 || cm < 0) throw DataError("subject profile table lacks required columns");
      for (const auto& r : t.rows)
        medians[pi][r[static_cast<std::size_t>(cp)]][to_string(c)][r[static_cast<std::size_t>(cs)]] =
            io::parse_double(r[static_cast<std::size_t>(cm)]);
    }
  }
  std::vector<int> pis = cfg_.pi_ms;
  std::sort(pis.begin(), pis.end());

  std::ostringstream sweep;
  sweep << "predictor,class,pi_ms,n_subjects,median_of_medians\n";
  for (const auto& p : cfg_.predictors) {
    for (ErrorClass c : all_error_classes()) {
      for (int pi : pis) {
        const auto& m = medians[pi][p][to_string(c)];
        if (m.empty()) continue;
        std::vector<double> v;
        for (const auto& [id, x] : m) v.push_back(x);
        sweep << p << ',' << to_string(c) << ',' << pi << ',' << v.size() << ',' << csv_double(stats::median(v)) << '\n';
      }
    }
  }
  std::ostringstream mono;
  mono << "predictor,n_subjects,n_non_decreasing,fraction\n";
  for (const auto& p : cfg_.predictors) {
    std::size_t total = 0, ok = 0;
    for (const auto& [id, x0] : medians[pis.front()][p]["all"]) {
      bool present = true, nondecreasing = true;
      double prev = -std::numeric_limits<double>::infinity();
      for (int pi : pis) {
        const auto& m = medians[pi][p]["all"];
        const auto it = m.find(id);
        if (it == m.end()) {
          present = false;
          break;
        }
        nondecreasing = nondecreasing && it->second >= prev;
        prev = it->second;
      }
      if (!present) continue;
      ++total;
      ok += nondecreasing ? 1 : 0;
    }
    mono << p << ',' << total << ',' << ok << ','
         << csv_double(total ? static_cast<double>(ok) / static_cast<double>(total)
                             : std::numeric_limits<double>::quiet_NaN())
         << '\n';
  }
  std::vector<fs::path> outputs;
  write_csv(reports / "pi_sweep.csv", sweep.str(), outputs);
  write_csv(reports / "pi_monotonicity.csv", mono.str(), outputs);
  return finish_stage("report", h, outputs);
}

StageResult Pipeline::run_stage(const std::string& name) {
  if (name == "synth") return synth();
  if (name == "ingest") return ingest();
  if (name == "classify") return classify();
  if (name == "features") return features();
  if (name == "fit-opkf") return fit_opkf();
  if (name == "train-lstm") return train_lstm();
  if (name == "predict") return predict();
  if (name == "evaluate") return evaluate();
  if (name == "report") return report();
  throw ConfigError("unknown stage '" + name + "'");
}

std::vector<StageResult> Pipeline::run_all() {
  std::vector<StageResult> out;
  for (const auto& s : stage_names()) {
    if ((s == "synth" || s == "ingest") && s != data_stage()) continue;
    out.push_back(run_stage(s));
  }
  return out;
}

}  // namespace gazepred
