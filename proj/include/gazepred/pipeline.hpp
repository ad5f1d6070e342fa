#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "gazepred/classify.hpp"
#include "gazepred/features.hpp"
#include "gazepred/lstm.hpp"
#include "gazepred/metrics.hpp"
#include "gazepred/opkf.hpp"
#include "gazepred/signal.hpp"
#include "gazepred/synth.hpp"

namespace gazepred {

struct DataSourceConfig {
  std::string kind = "synthetic";  ///< "synthetic" or "csv"
  std::filesystem::path csv_dir;
  ColumnMapping mapping;
  SynthConfig synthetic;
};

struct SplitConfig {
  double train_fraction = 0.5;
  double test_fraction = 0.5;
};

struct OpkfStageConfig {
  OpkfConfig filter;
  bool fit = true;
  /// Prediction interval used by the fitting objective; fitted parameters are
  /// shared by every evaluated interval.
  int fit_pi_ms = 40;
  FitOptions fit_options;
};

struct LstmStageConfig {
  TrainConfig train;
  /// Predictions are issued at every `inference_stride`-th sample.
  int inference_stride = 1;
};

struct EvaluationConfig {
  /// Segments used for features, fitting and scoring: "truth" (generator
  /// labels), "classified", or "auto" (truth when every subject has labels).
  std::string labels = "auto";
  ErrorMetric metric = ErrorMetric::Planar;
  std::size_t min_records = kMinSubjectRecords;
  double alpha = 0.05;
  double cdf_max_dva = 20.0;
  double cdf_step_dva = 0.05;
  int progress_bins = 10;
  double progress_amp_lo = 10.0;
  double progress_amp_hi = 20.0;
};

struct RunConfig {
  /// Master seed; the generator, split and training seeds derive from it.
  std::uint64_t seed = 1;
  int jobs = 1;
  std::filesystem::path out_dir = "gazepred_out";
  DataSourceConfig data;
  DiffConfig velocity;
  ClassifierConfig classifier;
  FeatureConfig features;
  SplitConfig split;
  std::vector<int> pi_ms = {25, 40, 60};
  std::vector<std::string> predictors = {"constant_velocity", "opkf", "lstm"};
  OpkfStageConfig opkf;
  LstmStageConfig lstm;
  EvaluationConfig evaluation;

  void validate() const;
  SynthConfig effective_synth() const;
  TrainConfig effective_train(int pi_ms) const;
  std::uint64_t split_seed() const;
};

nlohmann::json to_json(const RunConfig& cfg);
RunConfig run_config_from_json(const nlohmann::json& j);
RunConfig load_run_config(const std::filesystem::path& path);

const std::vector<std::string>& known_predictors();
const std::vector<std::string>& stage_names();

struct Split {
  std::vector<std::string> train;
  std::vector<std::string> test;
};

/// Seeded subject-level split of the sorted subject ids.
Split split_subjects(std::vector<std::string> ids, const SplitConfig& cfg, std::uint64_t seed);

/// Outcome of one stage invocation.
struct StageResult {
  std::string stage;
  bool cached = false;  ///< inputs unchanged and outputs intact, nothing recomputed
  std::vector<std::string> outputs;
};

class Pipeline {
 public:
  explicit Pipeline(RunConfig cfg);

  const RunConfig& config() const { return cfg_; }
  const std::filesystem::path& out_dir() const { return cfg_.out_dir; }

  StageResult synth();
  StageResult ingest();
  StageResult classify();
  StageResult features();
  StageResult fit_opkf();
  StageResult train_lstm();
  StageResult predict();
  StageResult evaluate();
  StageResult report();

  /// Runs a stage by its command name.
  StageResult run_stage(const std::string& name);
  /// Every stage in order (synth or ingest first, by data source).
  std::vector<StageResult> run_all();

 private:
  struct Subject {
    GazeRecording recording;
    std::vector<EventSegment> truth;
    bool has_truth = false;
  };

  std::string data_stage() const;
  nlohmann::json stage_manifest(const std::string& stage) const;
  void require_stage(const std::string& stage) const;
  bool cache_hit(const std::string& stage, const std::string& inputs_hash) const;
  StageResult finish_stage(const std::string& stage, const std::string& inputs_hash,
                           const std::vector<std::filesystem::path>& outputs, const nlohmann::json& extra = {});
  void write_top_manifest() const;
  std::string input_hash(const std::string& stage, const nlohmann::json& stage_cfg,
                         const std::vector<std::string>& upstream) const;

  std::vector<std::string> subject_ids() const;
  Subject load_subject(const std::string& id) const;
  std::vector<EventSegment> analysis_segments(const Subject& s) const;
  bool use_truth_labels() const;
  Split load_split() const;
  bool wants(const std::string& predictor) const;

  std::filesystem::path rel(const std::filesystem::path& p) const;

  RunConfig cfg_;
};

}  // namespace gazepred
