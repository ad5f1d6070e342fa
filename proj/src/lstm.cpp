#include "gazepred/lstm.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include "gazepred/error.hpp"
#include "gazepred/io.hpp"
#include "gazepred/rng.hpp"

namespace gazepred {

using Eigen::MatrixXd;
using Eigen::VectorXd;

std::vector<std::size_t> window_ends(const GazeRecording& rec, const VelocityTrace& vel, int pi_ms) {
  if (pi_ms <= 0) throw ConfigError("prediction interval must be positive");
  if (vel.size() != rec.size()) throw AlignmentError("velocity trace and recording differ in length");
  const std::size_t n = rec.size();
  const std::size_t pi = static_cast<std::size_t>(pi_ms);
  std::vector<std::size_t> ends;
  if (n < kWindowMs + pi) return ends;
  // run length of consecutive usable samples ending at i
  std::vector<std::size_t> good_run(n, 0);
  std::vector<std::size_t> valid_run(n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    const bool valid = rec.samples[i].valid;
    valid_run[i] = valid ? (i ? valid_run[i - 1] : 0) + 1 : 0;
    good_run[i] = valid && vel.valid(i) ? (i ? good_run[i - 1] : 0) + 1 : 0;
  }
  for (std::size_t e = kWindowMs - 1; e + pi < n; ++e) {
    if (good_run[e] >= static_cast<std::size_t>(kWindowMs) && valid_run[e + pi] >= pi + kWindowMs) ends.push_back(e);
  }
  return ends;
}

std::vector<WindowSample> make_windows(const GazeRecording& rec, const VelocityTrace& vel, int pi_ms) {
  std::vector<WindowSample> out;
  const std::size_t pi = static_cast<std::size_t>(pi_ms);
  for (std::size_t e : window_ends(rec, vel, pi_ms)) {
    WindowSample w;
    w.input.resize(kWindowMs * 2);
    for (int t = 0; t < kWindowMs; ++t) {
      const std::size_t i = e + 1 - kWindowMs + static_cast<std::size_t>(t);
      w.input[static_cast<std::size_t>(2 * t)] = vel.vx[i];
      w.input[static_cast<std::size_t>(2 * t + 1)] = vel.vy[i];
    }
    w.dx = rec.samples[e + pi].x_dva - rec.samples[e].x_dva;
    w.dy = rec.samples[e + pi].y_dva - rec.samples[e].y_dva;
    out.push_back(std::move(w));
  }
  return out;
}

const std::vector<LstmModel::Tensor>& LstmModel::layout() {
  static const std::vector<Tensor> kLayout = [] {
    std::vector<Tensor> t = {{"lstm1.weight_ih", 4 * kHidden, kInput},  {"lstm1.weight_hh", 4 * kHidden, kHidden},
                             {"lstm1.bias", 4 * kHidden, 1},            {"lstm2.weight_ih", 4 * kHidden, kHidden},
                             {"lstm2.weight_hh", 4 * kHidden, kHidden}, {"lstm2.bias", 4 * kHidden, 1},
                             {"fc1.weight", kFc1, kHidden},             {"fc1.bias", kFc1, 1},
                             {"fc2.weight", kFc2, kFc1},                {"fc2.bias", kFc2, 1},
                             {"out.weight", kOutput, kFc2},             {"out.bias", kOutput, 1}};
    std::size_t off = 0;
    for (auto& x : t) {
      x.offset = off;
      off += x.size();
    }
    return t;
  }();
  return kLayout;
}

std::size_t LstmModel::parameter_count() {
  const auto& l = layout();
  return l.back().offset + l.back().size();
}

LstmModel::LstmModel() : params_(VectorXd::Zero(static_cast<Eigen::Index>(parameter_count()))) {}

void LstmModel::initialize(std::uint64_t seed) {
  Rng rng(seed);
  for (const auto& t : layout()) {
    const bool recurrent = t.name.rfind("lstm", 0) == 0;
    double fan = recurrent ? kHidden : 0.0;
    if (!recurrent) {
      // bias shares the bound of its weight
      const std::string weight = t.name.substr(0, t.name.find('.')) + ".weight";
      for (const auto& w : layout())
        if (w.name == weight) fan = w.cols;
    }
    const double bound = 1.0 / std::sqrt(fan);
    for (std::size_t k = 0; k < t.size(); ++k)
      params_[static_cast<Eigen::Index>(t.offset + k)] = rng.uniform(-bound, bound);
  }
}

namespace {

using CMap = Eigen::Map<const MatrixXd>;
using Map = Eigen::Map<MatrixXd>;

struct Views {
  CMap w_ih1, w_hh1, b1, w_ih2, w_hh2, b2, fc1_w, fc1_b, fc2_w, fc2_b, out_w, out_b;
};

CMap view(const VectorXd& p, const LstmModel::Tensor& t) {
  return CMap(p.data() + t.offset, t.rows, t.cols);
}
Map view(VectorXd& p, const LstmModel::Tensor& t) { return Map(p.data() + t.offset, t.rows, t.cols); }

Views views(const VectorXd& p) {
  const auto& l = LstmModel::layout();
  return {view(p, l[0]), view(p, l[1]), view(p, l[2]),  view(p, l[3]),  view(p, l[4]),  view(p, l[5]),
          view(p, l[6]), view(p, l[7]), view(p, l[8]), view(p, l[9]), view(p, l[10]), view(p, l[11])};
}

MatrixXd sigmoid(const MatrixXd& z) { return (1.0 / (1.0 + (-z.array()).exp())).matrix(); }

// Written through exp, which Eigen vectorizes for doubles.
template <typename Derived>
MatrixXd tanh_of(const Eigen::MatrixBase<Derived>& z) {
  return (1.0 - 2.0 / ((2.0 * z.array()).exp() + 1.0)).matrix();
}

struct LayerCache {
  std::vector<MatrixXd> i, f, g, o, c, tanh_c, h;  // per step, H x B
};

constexpr int H = LstmModel::kHidden;

// Runs one LSTM layer over the sequence; fills the cache when given.
void lstm_layer(const CMap& w_ih, const CMap& w_hh, const CMap& b, const std::vector<MatrixXd>& xs,
                std::vector<MatrixXd>& hs, LayerCache* cache) {
  const Eigen::Index batch = xs.front().cols();
  MatrixXd h = MatrixXd::Zero(H, batch);
  MatrixXd c = MatrixXd::Zero(H, batch);
  hs.resize(xs.size());
  if (cache) {
    for (auto* v : {&cache->i, &cache->f, &cache->g, &cache->o, &cache->c, &cache->tanh_c, &cache->h}) v->resize(xs.size());
  }
  MatrixXd z(4 * H, batch);
  for (std::size_t t = 0; t < xs.size(); ++t) {
    z.noalias() = w_ih * xs[t];
    z.noalias() += w_hh * h;
    z.colwise() += b.col(0);
    MatrixXd gi = sigmoid(z.topRows(H));
    MatrixXd gf = sigmoid(z.middleRows(H, H));
    MatrixXd gg = tanh_of(z.middleRows(2 * H, H));
    MatrixXd go = sigmoid(z.bottomRows(H));
    c = (gf.array() * c.array() + gi.array() * gg.array()).matrix();
    MatrixXd tc = tanh_of(c);
    h = (go.array() * tc.array()).matrix();
    hs[t] = h;
    if (cache) {
      cache->i[t] = std::move(gi);
      cache->f[t] = std::move(gf);
      cache->g[t] = std::move(gg);
      cache->o[t] = std::move(go);
      cache->c[t] = c;
      cache->tanh_c[t] = std::move(tc);
      cache->h[t] = h;
    }
  }
}

// Backpropagates through one layer. dh_out[t] holds the gradient arriving at
// h_t from above; returns gradients w.r.t. the layer inputs when requested.
void lstm_layer_backward(const CMap& w_ih, const CMap& w_hh, const std::vector<MatrixXd>& xs, const LayerCache& cache,
                         const std::vector<MatrixXd>& dh_out, Map dw_ih, Map dw_hh, Map db,
                         std::vector<MatrixXd>* dxs) {
  const std::size_t T = xs.size();
  const Eigen::Index batch = xs.front().cols();
  MatrixXd dh_next = MatrixXd::Zero(H, batch);
  MatrixXd dc_next = MatrixXd::Zero(H, batch);
  MatrixXd dz(4 * H, batch);
  if (dxs) dxs->assign(T, MatrixXd());
  for (std::size_t s = T; s-- > 0;) {
    MatrixXd dh = dh_next;
    if (dh_out[s].size()) dh += dh_out[s];
    const auto& i = cache.i[s].array();
    const auto& f = cache.f[s].array();
    const auto& g = cache.g[s].array();
    const auto& o = cache.o[s].array();
    const auto& tc = cache.tanh_c[s].array();
    const MatrixXd dc = (dc_next.array() + dh.array() * o * (1.0 - tc * tc)).matrix();
    const MatrixXd c_prev = s ? cache.c[s - 1] : MatrixXd::Zero(H, batch);
    dz.topRows(H) = (dc.array() * g * i * (1.0 - i)).matrix();
    dz.middleRows(H, H) = (dc.array() * c_prev.array() * f * (1.0 - f)).matrix();
    dz.middleRows(2 * H, H) = (dc.array() * i * (1.0 - g * g)).matrix();
    dz.bottomRows(H) = (dh.array() * tc * o * (1.0 - o)).matrix();
    dc_next = (dc.array() * f).matrix();
    dw_ih.noalias() += dz * xs[s].transpose();
    if (s) dw_hh.noalias() += dz * cache.h[s - 1].transpose();
    db.col(0) += dz.rowwise().sum();
    dh_next.noalias() = w_hh.transpose() * dz;
    if (dxs) (*dxs)[s].noalias() = w_ih.transpose() * dz;
  }
}

std::vector<MatrixXd> scaled(const std::vector<MatrixXd>& inputs, double scale) {
  std::vector<MatrixXd> xs(inputs.size());
  for (std::size_t t = 0; t < inputs.size(); ++t) xs[t] = inputs[t] * scale;
  return xs;
}

void check_inputs(const std::vector<MatrixXd>& inputs) {
  if (inputs.empty()) throw ConfigError("LSTM input sequence is empty");
  const Eigen::Index b = inputs.front().cols();
  for (const auto& x : inputs)
    if (x.rows() != LstmModel::kInput || x.cols() != b || b == 0)
      throw ConfigError("LSTM input shape mismatch: expected 2 x B per step");
}

}  // namespace

double mean_euclidean(const MatrixXd& pred, const MatrixXd& targets) {
  if (pred.rows() != targets.rows() || pred.cols() != targets.cols() || pred.cols() == 0)
    throw ConfigError("prediction and target shapes differ");
  return (pred - targets).colwise().norm().mean();
}

MatrixXd LstmModel::forward(const std::vector<MatrixXd>& inputs) const {
  check_inputs(inputs);
  const Views v = views(params_);
  const auto xs = scaled(inputs, input_scale_);
  std::vector<MatrixXd> h1, h2;
  lstm_layer(v.w_ih1, v.w_hh1, v.b1, xs, h1, nullptr);
  lstm_layer(v.w_ih2, v.w_hh2, v.b2, h1, h2, nullptr);
  MatrixXd a1 = v.fc1_w * h2.back();
  a1.colwise() += v.fc1_b.col(0);
  a1 = a1.cwiseMax(0.0);
  MatrixXd a2 = v.fc2_w * a1;
  a2.colwise() += v.fc2_b.col(0);
  a2 = a2.cwiseMax(0.0);
  MatrixXd y = v.out_w * a2;
  y.colwise() += v.out_b.col(0);
  return y;
}

std::pair<double, double> LstmModel::forward(const std::vector<double>& window) const {
  if (window.empty() || window.size() % 2 != 0) throw ConfigError("LSTM window must hold (vx, vy) pairs");
  std::vector<MatrixXd> in(window.size() / 2, MatrixXd(2, 1));
  for (std::size_t t = 0; t < in.size(); ++t) {
    in[t](0, 0) = window[2 * t];
    in[t](1, 0) = window[2 * t + 1];
  }
  const MatrixXd y = forward(in);
  return {y(0, 0), y(1, 0)};
}

double LstmModel::loss(const std::vector<MatrixXd>& inputs, const MatrixXd& targets) const {
  return mean_euclidean(forward(inputs), targets);
}

double LstmModel::loss_and_gradient(const std::vector<MatrixXd>& inputs, const MatrixXd& targets,
                                    VectorXd& grad) const {
  check_inputs(inputs);
  const Views v = views(params_);
  const auto& l = layout();
  const Eigen::Index batch = inputs.front().cols();
  if (targets.rows() != kOutput || targets.cols() != batch) throw ConfigError("target shape mismatch");

  const auto xs = scaled(inputs, input_scale_);
  std::vector<MatrixXd> h1, h2;
  LayerCache c1, c2;
  lstm_layer(v.w_ih1, v.w_hh1, v.b1, xs, h1, &c1);
  lstm_layer(v.w_ih2, v.w_hh2, v.b2, h1, h2, &c2);
  MatrixXd z1 = v.fc1_w * h2.back();
  z1.colwise() += v.fc1_b.col(0);
  const MatrixXd a1 = z1.cwiseMax(0.0);
  MatrixXd z2 = v.fc2_w * a1;
  z2.colwise() += v.fc2_b.col(0);
  const MatrixXd a2 = z2.cwiseMax(0.0);
  MatrixXd y = v.out_w * a2;
  y.colwise() += v.out_b.col(0);

  const MatrixXd diff = y - targets;
  const Eigen::RowVectorXd norms = diff.colwise().norm();
  const double loss = norms.mean();

  grad.setZero(static_cast<Eigen::Index>(parameter_count()));
  MatrixXd dy = MatrixXd::Zero(kOutput, batch);
  for (Eigen::Index b = 0; b < batch; ++b)
    if (norms(b) > 0.0) dy.col(b) = diff.col(b) / (norms(b) * static_cast<double>(batch));

  view(grad, l[10]).noalias() += dy * a2.transpose();
  view(grad, l[11]).col(0) += dy.rowwise().sum();
  MatrixXd dz2 = v.out_w.transpose() * dy;
  dz2.array() *= (z2.array() > 0.0).cast<double>();
  view(grad, l[8]).noalias() += dz2 * a1.transpose();
  view(grad, l[9]).col(0) += dz2.rowwise().sum();
  MatrixXd dz1 = v.fc2_w.transpose() * dz2;
  dz1.array() *= (z1.array() > 0.0).cast<double>();
  view(grad, l[6]).noalias() += dz1 * h2.back().transpose();
  view(grad, l[7]).col(0) += dz1.rowwise().sum();

  std::vector<MatrixXd> dh2(xs.size());
  dh2.back() = v.fc1_w.transpose() * dz1;
  std::vector<MatrixXd> dh1;
  lstm_layer_backward(v.w_ih2, v.w_hh2, h1, c2, dh2, view(grad, l[3]), view(grad, l[4]), view(grad, l[5]), &dh1);
  lstm_layer_backward(v.w_ih1, v.w_hh1, xs, c1, dh1, view(grad, l[0]), view(grad, l[1]), view(grad, l[2]), nullptr);
  return loss;
}

nlohmann::json LstmModel::to_json() const {
  nlohmann::json tensors = nlohmann::json::array();
  for (const auto& t : layout()) {
    const CMap m = view(params_, t);
    std::vector<double> data;
    data.reserve(t.size());
    for (int r = 0; r < t.rows; ++r)
      for (int c = 0; c < t.cols; ++c) data.push_back(m(r, c));
    nlohmann::json shape = t.cols == 1 ? nlohmann::json::array({t.rows}) : nlohmann::json::array({t.rows, t.cols});
    tensors.push_back({{"name", t.name}, {"shape", shape}, {"data", data}});
  }
  return {{"format", "gazepred-lstm-v1"},
          {"input", "causal velocity window, 100 x (vx, vy) dva/s"},
          {"input_scale", input_scale_},
          {"parameter_count", parameter_count()},
          {"tensors", tensors}};
}

LstmModel LstmModel::from_json(const nlohmann::json& j) {
  LstmModel m;
  try {
    m.input_scale_ = j.at("input_scale").get<double>();
    const auto& tensors = j.at("tensors");
    if (tensors.size() != layout().size()) throw DataError("LSTM weight file has the wrong number of tensors");
    for (std::size_t k = 0; k < layout().size(); ++k) {
      const auto& t = layout()[k];
      const auto& o = tensors[k];
      if (o.at("name").get<std::string>() != t.name) throw DataError("unexpected tensor " + o.at("name").dump());
      const auto shape = o.at("shape").get<std::vector<int>>();
      const bool ok = t.cols == 1 ? shape == std::vector<int>{t.rows} : shape == std::vector<int>{t.rows, t.cols};
      if (!ok) throw DataError("tensor " + t.name + " has the wrong shape");
      const auto data = o.at("data").get<std::vector<double>>();
      if (data.size() != t.size()) throw DataError("tensor " + t.name + " has the wrong size");
      Map mm = view(m.params_, t);
      for (int r = 0; r < t.rows; ++r)
        for (int c = 0; c < t.cols; ++c) mm(r, c) = data[static_cast<std::size_t>(r * t.cols + c)];
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("invalid LSTM weight file: ") + e.what());
  }
  return m;
}

void LstmModel::save(const std::filesystem::path& path) const { io::write_json_file(path, to_json()); }
LstmModel LstmModel::load(const std::filesystem::path& path) { return from_json(io::read_json_file(path)); }

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("batch_size must be positive");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0)) throw ConfigError("Adam betas must lie in [0, 1)");
  if (!(epsilon > 0.0)) throw ConfigError("epsilon must be positive");
  if (epochs < 1) throw ConfigError("epochs must be positive");
  if (patience < 1) throw ConfigError("patience must be positive");
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0)) throw ConfigError("validation_fraction must lie in [0, 1)");
  if (pi_ms <= 0) throw ConfigError("pi_ms must be positive");
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"batch_size", c.batch_size},     {"learning_rate", c.learning_rate},
          {"beta1", c.beta1},               {"beta2", c.beta2},
          {"epsilon", c.epsilon},           {"epochs", c.epochs},
          {"patience", c.patience},         {"validation_fraction", c.validation_fraction},
          {"seed", c.seed},                 {"max_windows_per_subject", c.max_windows_per_subject},
          {"pi_ms", c.pi_ms}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  TrainConfig c;
  auto get = [&](const char* key, auto& dst) {
    if (j.contains(key)) dst = j.at(key).get<std::decay_t<decltype(dst)>>();
  };
  try {
    get("batch_size", c.batch_size);
    get("learning_rate", c.learning_rate);
    get("beta1", c.beta1);
    get("beta2", c.beta2);
    get("epsilon", c.epsilon);
    get("epochs", c.epochs);
    get("patience", c.patience);
    get("validation_fraction", c.validation_fraction);
    get("seed", c.seed);
    get("max_windows_per_subject", c.max_windows_per_subject);
    get("pi_ms", c.pi_ms);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("invalid training config: ") + e.what());
  }
  return c;
}

void WindowSet::append(const WindowSample& w) {
  if (w.input.size() != static_cast<std::size_t>(kWindowMs * 2)) throw ConfigError("window input must be 100 x 2");
  inputs.insert(inputs.end(), w.input.begin(), w.input.end());
  targets.push_back(w.dx);
  targets.push_back(w.dy);
}

void WindowSet::append(const GazeRecording& rec, const VelocityTrace& vel, std::size_t end, int pi_ms) {
  for (int t = 0; t < kWindowMs; ++t) {
    const std::size_t i = end + 1 - kWindowMs + static_cast<std::size_t>(t);
    inputs.push_back(vel.vx[i]);
    inputs.push_back(vel.vy[i]);
  }
  const std::size_t tgt = end + static_cast<std::size_t>(pi_ms);
  targets.push_back(rec.samples[tgt].x_dva - rec.samples[end].x_dva);
  targets.push_back(rec.samples[tgt].y_dva - rec.samples[end].y_dva);
}

void WindowSet::batch(const std::vector<std::size_t>& idx, std::size_t from, std::size_t to,
                      std::vector<MatrixXd>& in, MatrixXd& tgt) const {
  const Eigen::Index b = static_cast<Eigen::Index>(to - from);
  in.assign(kWindowMs, MatrixXd(2, b));
  tgt.resize(2, b);
  for (Eigen::Index k = 0; k < b; ++k) {
    const std::size_t w = idx[from + static_cast<std::size_t>(k)];
    const double* src = inputs.data() + w * kWindowMs * 2;
    for (int t = 0; t < kWindowMs; ++t) {
      in[static_cast<std::size_t>(t)](0, k) = src[2 * t];
      in[static_cast<std::size_t>(t)](1, k) = src[2 * t + 1];
    }
    tgt(0, k) = targets[2 * w];
    tgt(1, k) = targets[2 * w + 1];
  }
}

namespace {

double evaluate_loss(const LstmModel& model, const WindowSet& set, int batch_size) {
  if (set.size() == 0) return std::numeric_limits<double>::quiet_NaN();
  std::vector<std::size_t> idx(set.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::vector<MatrixXd> in;
  MatrixXd tgt;
  double sum = 0.0;
  for (std::size_t from = 0; from < idx.size(); from += static_cast<std::size_t>(batch_size)) {
    const std::size_t to = std::min(idx.size(), from + static_cast<std::size_t>(batch_size));
    set.batch(idx, from, to, in, tgt);
    sum += model.loss(in, tgt) * static_cast<double>(to - from);
  }
  return sum / static_cast<double>(set.size());
}

}  // namespace

TrainResult lstm_train(LstmModel model, const WindowSet& train, const WindowSet& validation, const TrainConfig& cfg,
                       const std::function<void(const EpochRecord&)>& on_epoch) {
  cfg.validate();
  if (train.size() == 0) throw InsufficientDataError("training needs at least one window");
  const std::size_t np = LstmModel::parameter_count();
  VectorXd m1 = VectorXd::Zero(static_cast<Eigen::Index>(np));
  VectorXd m2 = VectorXd::Zero(static_cast<Eigen::Index>(np));
  VectorXd grad;
  Rng rng(derive_seed(cfg.seed, 0x5eed));

  TrainResult result;
  result.initial_train_loss = evaluate_loss(model, train, cfg.batch_size);
  LstmModel best = model;
  double best_val = std::numeric_limits<double>::infinity();
  int since_best = 0;
  long step = 0;

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<MatrixXd> in;
  MatrixXd tgt;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    shuffle(order, rng);
    double sum = 0.0;
    int batch_no = 0;
    for (std::size_t from = 0; from < order.size(); from += static_cast<std::size_t>(cfg.batch_size), ++batch_no) {
      const std::size_t to = std::min(order.size(), from + static_cast<std::size_t>(cfg.batch_size));
      train.batch(order, from, to, in, tgt);
      const double loss = model.loss_and_gradient(in, tgt, grad);
      if (!std::isfinite(loss) || !grad.allFinite())
        throw DivergenceError("non-finite training loss", epoch, batch_no);
      sum += loss * static_cast<double>(to - from);
      ++step;
      m1 = cfg.beta1 * m1 + (1.0 - cfg.beta1) * grad;
      m2 = cfg.beta2 * m2 + (1.0 - cfg.beta2) * grad.cwiseProduct(grad);
      const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
      model.parameters().array() -=
          cfg.learning_rate * (m1.array() / c1) / ((m2.array() / c2).sqrt() + cfg.epsilon);
    }
    EpochRecord rec{epoch, sum / static_cast<double>(train.size()), evaluate_loss(model, validation, cfg.batch_size)};
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec);
    const double score = validation.size() ? rec.val_loss : rec.train_loss;
    if (score < best_val) {
      best_val = score;
      best = model;
      result.best_epoch = epoch;
      since_best = 0;
    } else if (validation.size() && ++since_best >= cfg.patience) {
      break;
    }
  }
  result.model = std::move(best);
  return result;
}

std::pair<WindowSet, WindowSet> build_training_sets(const std::vector<GazeRecording>& recs, const TrainConfig& cfg) {
  cfg.validate();
  std::vector<std::size_t> order(recs.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(cfg.seed, 0x5711));
  shuffle(order, rng);
  std::size_t n_val = static_cast<std::size_t>(std::llround(cfg.validation_fraction * recs.size()));
  if (cfg.validation_fraction > 0.0 && recs.size() >= 2) n_val = std::max<std::size_t>(n_val, 1);
  n_val = std::min(n_val, recs.size() > 0 ? recs.size() - 1 : 0);
  std::vector<bool> is_val(recs.size(), false);
  for (std::size_t k = 0; k < n_val; ++k) is_val[order[k]] = true;

  WindowSet train, val;
  for (std::size_t r = 0; r < recs.size(); ++r) {
    const VelocityTrace vel = compute_velocity(recs[r], predictor_diff_config());
    std::vector<std::size_t> ends = window_ends(recs[r], vel, cfg.pi_ms);
    if (cfg.max_windows_per_subject && ends.size() > cfg.max_windows_per_subject) {
      Rng pick(derive_seed(cfg.seed, 1000 + r));
      shuffle(ends, pick);
      ends.resize(cfg.max_windows_per_subject);
      std::sort(ends.begin(), ends.end());
    }
    for (std::size_t e : ends) (is_val[r] ? val : train).append(recs[r], vel, e, cfg.pi_ms);
  }
  return {std::move(train), std::move(val)};
}

void write_loss_csv(const std::vector<EpochRecord>& history, const std::filesystem::path& path) {
  std::ostringstream out;
  out << "epoch,train_loss,val_loss\n";
  for (const auto& h : history)
    out << h.epoch << ',' << io::format_double(h.train_loss) << ',' << io::format_double(h.val_loss) << '\n';
  io::write_text_file(path, out.str());
}

PredictionRun lstm_predict_recording(const LstmModel& model, const GazeRecording& rec, int pi_ms, int stride) {
  if (stride < 1) throw ConfigError("stride must be positive");
  validate_recording(rec);
  const VelocityTrace vel = compute_velocity(rec, predictor_diff_config());
  PredictionRun run = make_run("lstm", rec, pi_ms);
  const std::size_t n = rec.size();
  std::vector<std::size_t> good_run(n, 0);
  for (std::size_t i = 0; i < n; ++i)
    good_run[i] = rec.samples[i].valid && vel.valid(i) ? (i ? good_run[i - 1] : 0) + 1 : 0;
  std::vector<std::size_t> issue;
  for (std::size_t i = 0; i < n; i += static_cast<std::size_t>(stride))
    if (good_run[i] >= static_cast<std::size_t>(kWindowMs) && i + static_cast<std::size_t>(pi_ms) < n) issue.push_back(i);

  constexpr std::size_t kBatch = 256;
  std::vector<MatrixXd> in;
  for (std::size_t from = 0; from < issue.size(); from += kBatch) {
    const std::size_t to = std::min(issue.size(), from + kBatch);
    const Eigen::Index b = static_cast<Eigen::Index>(to - from);
    in.assign(kWindowMs, MatrixXd(2, b));
    for (Eigen::Index k = 0; k < b; ++k) {
      const std::size_t e = issue[from + static_cast<std::size_t>(k)];
      for (int t = 0; t < kWindowMs; ++t) {
        const std::size_t i = e + 1 - kWindowMs + static_cast<std::size_t>(t);
        in[static_cast<std::size_t>(t)](0, k) = vel.vx[i];
        in[static_cast<std::size_t>(t)](1, k) = vel.vy[i];
      }
    }
    const MatrixXd y = model.forward(in);
    for (Eigen::Index k = 0; k < b; ++k) {
      const std::size_t e = issue[from + static_cast<std::size_t>(k)];
      run.x[e] = rec.samples[e].x_dva + y(0, k);
      run.y[e] = rec.samples[e].y_dva + y(1, k);
      run.valid[e] = true;
    }
  }
  apply_truth_mask(run, rec);
  return run;
}

}  // namespace gazepred
