#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "gazepred/predict.hpp"
#include "gazepred/signal.hpp"

namespace gazepred {

inline constexpr int kWindowMs = 100;

struct WindowSample {
  std::vector<double> input;  ///< kWindowMs x 2, row-major (vx, vy) in dva/s, oldest first
  double dx = 0.0;            ///< displacement from window end to window end + pi (dva)
  double dy = 0.0;
};

/// Window-end indices e such that samples [e - 99, e + pi] are valid and the
/// velocity over [e - 99, e] is defined.
std::vector<std::size_t> window_ends(const GazeRecording& rec, const VelocityTrace& vel, int pi_ms);
std::vector<WindowSample> make_windows(const GazeRecording& rec, const VelocityTrace& vel, int pi_ms);

/// Two stacked LSTM layers (hidden 32) read the scaled velocity window; the
/// last hidden state passes through FC 32->32 ReLU, FC 32->16 ReLU, and a
/// linear 16->2 output (displacement in dva). Gate order i, f, g, o with one
/// bias vector per LSTM layer.
class LstmModel {
 public:
  static constexpr int kInput = 2;
  static constexpr int kHidden = 32;
  static constexpr int kFc1 = 32;
  static constexpr int kFc2 = 16;
  static constexpr int kOutput = 2;

  struct Tensor {
    std::string name;
    int rows = 0;
    int cols = 0;
    std::size_t offset = 0;
    std::size_t size() const { return static_cast<std::size_t>(rows) * cols; }
  };

  LstmModel();

  static const std::vector<Tensor>& layout();
  static std::size_t parameter_count();

  /// Uniform(-1/sqrt(fan), 1/sqrt(fan)) initialization; fan is the hidden size
  /// for LSTM tensors and the input width for linear layers.
  void initialize(std::uint64_t seed);

  Eigen::VectorXd& parameters() { return params_; }
  const Eigen::VectorXd& parameters() const { return params_; }
  double input_scale() const { return input_scale_; }

  /// Batched forward: `inputs[t]` is 2 x B (dva/s). Returns 2 x B displacements.
  Eigen::MatrixXd forward(const std::vector<Eigen::MatrixXd>& inputs) const;
  /// Single window (row-major T x 2).
  std::pair<double, double> forward(const std::vector<double>& window) const;

  /// Mean Euclidean loss over the batch and its gradient w.r.t. all parameters.
  double loss_and_gradient(const std::vector<Eigen::MatrixXd>& inputs, const Eigen::MatrixXd& targets,
                           Eigen::VectorXd& grad) const;
  double loss(const std::vector<Eigen::MatrixXd>& inputs, const Eigen::MatrixXd& targets) const;

  nlohmann::json to_json() const;
  static LstmModel from_json(const nlohmann::json& j);
  void save(const std::filesystem::path& path) const;
  static LstmModel load(const std::filesystem::path& path);

 private:
  Eigen::VectorXd params_;
  double input_scale_ = 0.01;
};

/// Mean Euclidean distance between 2 x B predictions and targets.
double mean_euclidean(const Eigen::MatrixXd& pred, const Eigen::MatrixXd& targets);

struct TrainConfig {
  int batch_size = 256;
  double learning_rate = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  int epochs = 10;
  int patience = 3;
  double validation_fraction = 0.1;  ///< of training subjects
  std::uint64_t seed = 7;
  /// Upper bound on windows drawn per subject (0 = all).
  std::size_t max_windows_per_subject = 0;
  int pi_ms = 40;

  void validate() const;
};

nlohmann::json to_json(const TrainConfig& c);
TrainConfig train_config_from_json(const nlohmann::json& j);

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
};

struct TrainResult {
  LstmModel model;
  std::vector<EpochRecord> history;
  double initial_train_loss = 0.0;
  int best_epoch = 0;
};

/// In-memory window set: velocity inputs (T x 2 per window) and targets.
struct WindowSet {
  std::vector<double> inputs;   ///< n * kWindowMs * 2
  std::vector<double> targets;  ///< n * 2
  std::size_t size() const { return targets.size() / 2; }
  void append(const WindowSample& w);
  void append(const GazeRecording& rec, const VelocityTrace& vel, std::size_t end, int pi_ms);
  /// Builds the time-major batch for the given window indices.
  void batch(const std::vector<std::size_t>& idx, std::size_t from, std::size_t to, std::vector<Eigen::MatrixXd>& in,
             Eigen::MatrixXd& tgt) const;
};

/// Mini-batch Adam with per-epoch shuffling. Throws DivergenceError on a
/// non-finite loss. When `validation` is empty no early stopping happens.
TrainResult lstm_train(LstmModel model, const WindowSet& train, const WindowSet& validation, const TrainConfig& cfg,
                       const std::function<void(const EpochRecord&)>& on_epoch = {});

/// Builds train/validation window sets from training subjects; validation
/// subjects are a seeded subset of `validation_fraction` of the recordings.
std::pair<WindowSet, WindowSet> build_training_sets(const std::vector<GazeRecording>& recs, const TrainConfig& cfg);

void write_loss_csv(const std::vector<EpochRecord>& history, const std::filesystem::path& path);

/// Predictions at issue times that are multiples of `stride` (others masked).
PredictionRun lstm_predict_recording(const LstmModel& model, const GazeRecording& rec, int pi_ms, int stride = 1);

}  // namespace gazepred
