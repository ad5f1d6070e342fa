#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "gazepred/classify.hpp"
#include "gazepred/error.hpp"
#include "gazepred/features.hpp"
#include "gazepred/metrics.hpp"
#include "gazepred/opkf.hpp"
#include "gazepred/pipeline.hpp"
#include "gazepred/plant.hpp"
#include "gazepred/predict.hpp"
#include "gazepred/stats.hpp"
#include "gazepred/synth.hpp"

namespace py = pybind11;
using namespace gazepred;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

nlohmann::json parse(const std::string& text) { return text.empty() ? nlohmann::json::object() : nlohmann::json::parse(text); }

std::vector<double> to_vector(const Array& a) {
  const auto r = a.unchecked<1>();
  std::vector<double> v(static_cast<std::size_t>(r.shape(0)));
  for (py::ssize_t i = 0; i < r.shape(0); ++i) v[static_cast<std::size_t>(i)] = r(i);
  return v;
}

py::array_t<double> from_vector(const std::vector<double>& v) {
  return py::array_t<double>(static_cast<py::ssize_t>(v.size()), v.data());
}

GazeRecording make_recording(const Array& x, const Array& y, const py::object& valid) {
  const auto xs = to_vector(x), ys = to_vector(y);
  if (xs.size() != ys.size()) throw AlignmentError("x and y differ in length");
  GazeRecording rec;
  rec.samples.resize(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) rec.samples[i] = {static_cast<std::int64_t>(i), xs[i], ys[i], true};
  if (!valid.is_none()) {
    const auto arr = py::array_t<bool, py::array::c_style | py::array::forcecast>::ensure(valid);
    if (!arr || arr.ndim() != 1 || static_cast<std::size_t>(arr.shape(0)) != xs.size())
      throw AlignmentError("valid must be a 1-D array as long as x");
    const auto v = arr.unchecked<1>();
    for (std::size_t i = 0; i < xs.size(); ++i) rec.samples[i].valid = v(static_cast<py::ssize_t>(i));
  }
  return rec;
}

PlantParams plant_params(const std::string& text) {
  nlohmann::json j = to_json(PlantParams{});
  j.merge_patch(parse(text));
  return plant_params_from_json(j);
}

py::dict recording_dict(const GazeRecording& rec) {
  std::vector<double> t, x, y, tx, ty;
  std::vector<bool> valid;
  for (const auto& s : rec.samples) {
    t.push_back(static_cast<double>(s.t_ms));
    x.push_back(s.x_dva);
    y.push_back(s.y_dva);
    valid.push_back(s.valid);
  }
  for (const auto& s : rec.targets) {
    tx.push_back(s.x_dva);
    ty.push_back(s.y_dva);
  }
  py::dict d;
  d["subject_id"] = rec.subject_id;
  d["t_ms"] = from_vector(t);
  d["x"] = from_vector(x);
  d["y"] = from_vector(y);
  d["valid"] = py::array_t<bool>(py::cast(valid));
  d["target_x"] = from_vector(tx);
  d["target_y"] = from_vector(ty);
  return d;
}

py::dict run_dict(const PredictionRun& run) {
  py::dict d;
  d["x"] = from_vector(run.x);
  d["y"] = from_vector(run.y);
  d["valid"] = py::array_t<bool>(py::cast(run.valid));
  return d;
}

}  // namespace

PYBIND11_MODULE(_gazepred, m) {
  m.doc() = "Native core of the gazepred toolkit";

  auto base = py::register_exception<Error>(m, "GazepredError", PyExc_RuntimeError);
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  auto data = py::register_exception<DataError>(m, "DataError", base.ptr());
  py::register_exception<InsufficientDataError>(m, "InsufficientDataError", data.ptr());
  py::register_exception<NumericalError>(m, "NumericalError", base.ptr());

  m.def("default_config_json", [] { return to_json(RunConfig{}).dump(); });
  m.def(
      "run_pipeline",
      [](const std::string& config_json, const std::vector<std::string>& stages) {
        Pipeline p(run_config_from_json(parse(config_json)));
        std::vector<StageResult> results;
        if (stages.empty()) {
          results = p.run_all();
        } else {
          for (const auto& s : stages) results.push_back(p.run_stage(s));
        }
        py::list out;
        for (const auto& r : results) out.append(py::make_tuple(r.stage, r.cached, r.outputs));
        return out;
      },
      py::arg("config_json"), py::arg("stages") = std::vector<std::string>{});

  m.def(
      "generate_subject",
      [](const std::string& synth_json, int index) {
        const auto s = generate_subject(synth_config_from_json(parse(synth_json)), index);
        py::dict d = recording_dict(s.recording);
        d["truth_json"] = segments_to_json(s.truth).dump();
        d["noise_sigma"] = s.noise_sigma;
        d["speed_factor"] = s.speed_factor;
        d["params_json"] = to_json(s.params).dump();
        return d;
      },
      py::arg("synth_json"), py::arg("index"));

  m.def(
      "simulate_saccade",
      [](double start, double target, const std::string& params_json, double dt_ms) {
        const auto traj = simulate_saccade(plant_params(params_json), start, target, dt_ms);
        py::array_t<double> a({static_cast<py::ssize_t>(traj.size()), static_cast<py::ssize_t>(4)});
        auto w = a.mutable_unchecked<2>();
        for (std::size_t k = 0; k < traj.size(); ++k) {
          const auto i = static_cast<py::ssize_t>(k);
          w(i, 0) = traj[k].theta;
          w(i, 1) = traj[k].omega;
          w(i, 2) = traj[k].f_ag;
          w(i, 3) = traj[k].f_ant;
        }
        return a;
      },
      py::arg("start_dva"), py::arg("target_dva"), py::arg("params_json") = "", py::arg("dt_ms") = 1.0);

  m.def(
      "velocity",
      [](const Array& x, const Array& y, const py::object& valid, int window, int order, bool causal) {
        const auto rec = make_recording(x, y, valid);
        DiffConfig cfg;
        cfg.window = window;
        cfg.order = order;
        cfg.causal = causal;
        const auto v = compute_velocity(rec, cfg);
        return py::make_tuple(from_vector(v.vx), from_vector(v.vy));
      },
      py::arg("x"), py::arg("y"), py::arg("valid") = py::none(), py::arg("window") = DiffConfig{}.window,
      py::arg("order") = DiffConfig{}.order, py::arg("causal") = DiffConfig{}.causal);

  m.def(
      "classify",
      [](const Array& x, const Array& y, const py::object& valid) {
        const auto rec = make_recording(x, y, valid);
        const auto vel = compute_velocity(rec);
        auto segs = classify_events(rec, vel);
        attach_saccade_props(segs, rec, vel);
        return segments_to_json(segs).dump();
      },
      py::arg("x"), py::arg("y"), py::arg("valid") = py::none());

  m.def(
      "predict",
      [](const std::string& predictor, const Array& x, const Array& y, const py::object& valid,
         int pi_ms, const std::string& segments_json, const std::string& opkf_json) {
        const auto rec = make_recording(x, y, valid);
        if (predictor == "constant_position" || predictor == "constant_velocity") {
          const auto kind =
              predictor == "constant_position" ? BaselineKind::ConstantPosition : BaselineKind::ConstantVelocity;
          return run_dict(baseline_predict(kind, rec, compute_velocity(rec, predictor_diff_config()), pi_ms));
        }
        if (predictor == "opkf") {
          OpkfConfig cfg = opkf_config_from_json(parse(opkf_json));
          cfg.pi_ms = pi_ms;
          const auto segs = segments_json.empty() ? std::vector<EventSegment>{}
                                                  : segments_from_json(nlohmann::json::parse(segments_json));
          return run_dict(opkf_predict_recording(rec, segs, cfg));
        }
        throw ConfigError("unknown predictor '" + predictor + "'");
      },
      py::arg("predictor"), py::arg("x"), py::arg("y"), py::arg("valid") = py::none(), py::arg("pi_ms") = 40,
      py::arg("segments_json") = "", py::arg("opkf_json") = "");

  m.def(
      "gaze_error",
      [](double xp, double yp, double xt, double yt, const std::string& metric) {
        return gaze_error(xp, yp, xt, yt, error_metric_from_string(metric));
      },
      py::arg("x_pred"), py::arg("y_pred"), py::arg("x_true"), py::arg("y_true"), py::arg("metric") = "planar");

  m.def("quantile", [](const Array& v, double p) { return stats::quantile(to_vector(v), p); }, py::arg("values"),
        py::arg("p"));
  m.def(
      "spearman",
      [](const Array& x, const Array& y) {
        const auto r = stats::spearman(to_vector(x), to_vector(y));
        return py::make_tuple(r.r_s, r.p_value);
      },
      py::arg("x"), py::arg("y"));
  m.def("kendall_w", [](const std::vector<std::vector<double>>& scores) { return stats::kendall_w(scores); },
        py::arg("scores"));
}
