#include <cmath>

#include <doctest.h>

#include "gazepred/classify.hpp"
#include "gazepred/error.hpp"
#include "gazepred/plant.hpp"
#include "gazepred/synth.hpp"
#include "helpers.hpp"

using namespace gazepred;

namespace {

VelocityTrace velocity_of(std::vector<double> v) {
  VelocityTrace t;
  t.vx = v;
  t.vy.assign(v.size(), 0.0);
  t.v_radial = std::move(v);
  return t;
}

std::size_t count_saccades(const std::vector<EventSegment>& segs) {
  std::size_t n = 0;
  for (const auto& s : segs) n += s.kind == EventKind::Saccade;
  return n;
}

}  // namespace

TEST_SUITE("classify") {
  TEST_CASE("zero velocity is a single fixation") {
    const auto rec = testutil::constant_recording(500, 1.0, -2.0);
    const auto segs = classify_events(rec, velocity_of(std::vector<double>(500, 0.0)));
    REQUIRE(segs.size() == 1);
    CHECK(segs[0].kind == EventKind::Fixation);
    CHECK(segs[0].start_idx == 0);
    CHECK(segs[0].end_idx == 499);
  }

  TEST_CASE("invalid block inside a fixation becomes a blink") {
    auto rec = testutil::constant_recording(400);
    for (std::size_t i = 200; i < 250; ++i) rec.samples[i].valid = false;
    const auto segs = classify_events(rec, compute_velocity(rec));
    REQUIRE(segs.size() == 3);
    CHECK(segs[0].kind == EventKind::Fixation);
    CHECK(segs[1].kind == EventKind::Blink);
    CHECK(segs[1].start_idx == 200);
    CHECK(segs[1].end_idx == 249);
    CHECK(segs[2].kind == EventKind::Fixation);
  }

  TEST_CASE("plant saccade boundaries match the generator") {
    const PlantModel model(PlantParams{});
    const auto ps = model.pulse_step(0.0, 10.0);
    PlantState s = model.equilibrium(0.0);
    const double onset = 300.0;
    std::vector<double> theta, omega;
    for (int k = 0; k < 1000; ++k) {
      theta.push_back(s.theta);
      omega.push_back(s.omega);
      s = model.advance(s, ps, k - onset, 1.0);
    }
    std::size_t true_start = 0, true_end = 0;
    for (std::size_t k = 0; k < omega.size(); ++k) {
      if (std::abs(omega[k]) > 20.0) {
        if (true_start == 0) true_start = k;
        true_end = k;
      }
    }
    REQUIRE(true_start > 0);
    const auto rec = testutil::make_recording(theta.size(), [&](std::size_t i) { return theta[i]; });
    const auto segs = classify_events(rec, compute_velocity(rec));
    REQUIRE(count_saccades(segs) == 1);
    for (const auto& sg : segs) {
      if (sg.kind != EventKind::Saccade) continue;
      CHECK(std::abs(static_cast<long>(sg.start_idx) - static_cast<long>(true_start)) <= 4);
      CHECK(std::abs(static_cast<long>(sg.end_idx) - static_cast<long>(true_end)) <= 4);
      REQUIRE(sg.props);
      CHECK(sg.props->amplitude_dva == doctest::Approx(10.0).epsilon(0.02));
      CHECK(sg.props->duration_ms == static_cast<int>(sg.length()));
    }
  }

  TEST_CASE("saccade properties") {
    auto rec = testutil::make_recording(10, [](std::size_t i) { return static_cast<double>(i); },
                                        [](std::size_t i) { return 0.5 * static_cast<double>(i); });
    VelocityTrace vel = velocity_of({0, 100, 200, 300, 400, 500, 600, 700, 800, 900});
    const auto p = saccade_props(rec, vel, 2, 5);
    CHECK(p.amplitude_dva == doctest::Approx(std::hypot(3.0, 1.5)));
    CHECK(p.duration_ms == 4);
    CHECK(p.sample_count == 4);
    CHECK(p.peak_vel == 500.0);
    CHECK(p.mean_vel == doctest::Approx(350.0));
  }

  TEST_CASE("short and long high-velocity runs become Other") {
    std::vector<double> v(600, 0.0);
    for (std::size_t i = 100; i < 103; ++i) v[i] = 300.0;  // 3 ms: too short
    for (std::size_t i = 300; i < 470; ++i) v[i] = 300.0;  // 170 ms: too long
    const auto rec = testutil::constant_recording(600);
    const auto segs = classify_events(rec, velocity_of(v));
    CHECK(count_saccades(segs) == 0);
    const auto lab = label_samples(segs, 600);
    CHECK(lab[101] == EventKind::Other);
    CHECK(lab[400] == EventKind::Other);
    CHECK(lab[50] == EventKind::Fixation);
  }

  TEST_CASE("short gaps between events are Other") {
    std::vector<double> v(300, 0.0);
    for (std::size_t i = 100; i < 120; ++i) v[i] = 300.0;
    for (std::size_t i = 140; i < 160; ++i) v[i] = 300.0;
    const auto segs = classify_events(testutil::constant_recording(300), velocity_of(v));
    const auto lab = label_samples(segs, 300);
    CHECK(lab[130] == EventKind::Other);
    CHECK(lab[110] == EventKind::Saccade);
    CHECK(count_saccades(segs) == 2);
  }

  TEST_CASE("segments tile random recordings") {
    Rng rng(21);
    for (int trial = 0; trial < 50; ++trial) {
      const std::size_t n = 50 + rng.below(2000);
      std::vector<double> v(n);
      double level = 0.0;
      for (auto& x : v) {
        if (rng.uniform() < 0.02) level = rng.uniform() < 0.5 ? 0.0 : rng.uniform(0.0, 600.0);
        x = level + rng.uniform(0.0, 30.0);
      }
      auto rec = testutil::constant_recording(n);
      for (std::size_t i = 0; i < n; ++i) {
        if (rng.uniform() < 0.01) rec.samples[i].valid = false;
        if (rng.uniform() < 0.01) v[i] = std::nan("");
      }
      const auto segs = classify_events(rec, velocity_of(v));
      CHECK_NOTHROW(check_tiling(segs, n));
      for (std::size_t i = 1; i < segs.size(); ++i) CHECK(segs[i].kind != segs[i - 1].kind);
      const auto lab = label_samples(segs, n);
      for (std::size_t i = 0; i < n; ++i)
        if (!rec.samples[i].valid) CHECK(lab[i] == EventKind::Blink);
    }
  }

  TEST_CASE("raising the peak threshold never adds saccades") {
    SynthConfig cfg;
    cfg.n_subjects = 3;
    cfg.duration_s = 8.0;
    cfg.noise_sigma_min = 0.05;
    cfg.noise_sigma_max = 0.2;
    for (int s = 0; s < cfg.n_subjects; ++s) {
      const auto subj = generate_subject(cfg, s);
      const auto vel = compute_velocity(subj.recording);
      std::size_t prev = SIZE_MAX;
      for (double thr : {40.0, 60.0, 100.0, 150.0, 250.0, 400.0, 800.0}) {
        ClassifierConfig cc;
        cc.peak_threshold = thr;
        const auto n = count_saccades(classify_events(subj.recording, vel, cc));
        CHECK(n <= prev);
        prev = n;
      }
    }
  }

  TEST_CASE("misaligned velocity trace") {
    CHECK_THROWS_AS(classify_events(testutil::constant_recording(10), velocity_of(std::vector<double>(9, 0.0))),
                    AlignmentError);
    std::vector<EventSegment> gap = {testutil::seg(EventKind::Fixation, 0, 4), testutil::seg(EventKind::Fixation, 6, 9)};
    CHECK_THROWS_AS(check_tiling(gap, 10), AlignmentError);
  }

  TEST_CASE("detection F1 against generator labels") {
    SynthConfig cfg;
    cfg.n_subjects = 20;
    const auto cohort = generate_cohort(cfg);
    std::size_t tp = 0, fp = 0, fn = 0;
    for (const auto& subj : cohort) {
      const auto segs = classify_events(subj.recording, compute_velocity(subj.recording));
      std::vector<const EventSegment*> truth, found;
      for (const auto& s : subj.truth)
        if (s.kind == EventKind::Saccade) truth.push_back(&s);
      for (const auto& s : segs)
        if (s.kind == EventKind::Saccade) found.push_back(&s);
      std::vector<bool> used(truth.size(), false);
      for (const auto* f : found) {
        bool hit = false;
        for (std::size_t t = 0; t < truth.size() && !hit; ++t) {
          if (!used[t] && f->start_idx <= truth[t]->end_idx && truth[t]->start_idx <= f->end_idx) {
            used[t] = true;
            hit = true;
          }
        }
        hit ? ++tp : ++fp;
      }
      for (bool u : used) fn += !u;
    }
    const double f1 = 2.0 * tp / static_cast<double>(2 * tp + fp + fn);
    CHECK(f1 >= 0.95);
  }

  TEST_CASE("fixation noise threshold") {
    const auto rec = testutil::constant_recording(200);
    const std::vector<EventSegment> segs = {testutil::seg(EventKind::Fixation, 0, 199)};
    CHECK(fixation_noise_threshold(rec, velocity_of(std::vector<double>(200, 0.5)), segs) == 0.5);

    const auto rec100 = testutil::constant_recording(100);
    std::vector<double> v(100);
    for (std::size_t i = 0; i < 100; ++i) v[i] = static_cast<double>(100 - i);
    // sorted 1..100, rank 0.9 * 99 = 89.1 -> 90 + 0.1 * (91 - 90)
    const double oracle = 90.0 + 0.1 * (91.0 - 90.0);
    CHECK(fixation_noise_threshold(rec100, velocity_of(v), {testutil::seg(EventKind::Fixation, 0, 99)}) ==
          doctest::Approx(oracle).epsilon(1e-12));
    CHECK(oracle == doctest::Approx(90.1));

    CHECK_THROWS_AS(
        fixation_noise_threshold(rec100, velocity_of(v), {testutil::seg(EventKind::Fixation, 0, 49),
                                                           testutil::seg(EventKind::Saccade, 50, 99)}),
        InsufficientDataError);
  }

  TEST_CASE("fixation noise threshold increases with injected noise") {
    double prev = 0.0;
    for (double sigma : {0.1, 0.3, 0.9}) {
      SynthConfig cfg;
      cfg.n_subjects = 1;
      cfg.duration_s = 10.0;
      cfg.noise_sigma_min = cfg.noise_sigma_max = sigma;
      const auto subj = generate_subject(cfg, 0);
      const double thr = fixation_noise_threshold(subj.recording, compute_velocity(subj.recording), subj.truth);
      CHECK(thr > prev);
      prev = thr;
    }
  }

  TEST_CASE("online classifier") {
    OnlineClassifier oc;
    CHECK(oc.push(5.0) == EventKind::Fixation);
    CHECK(oc.push(150.0) == EventKind::Saccade);
    CHECK(oc.regime_age() == 1);
    CHECK(oc.push(50.0) == EventKind::Saccade);
    CHECK(oc.push(10.0) == EventKind::Fixation);
    CHECK(oc.push(std::nan("")) == EventKind::Blink);
    CHECK(oc.push(5.0) == EventKind::Fixation);
    oc.reset();
    CHECK(oc.current() == EventKind::Fixation);
  }

  TEST_CASE("segment JSON round trip") {
    std::vector<EventSegment> segs = {testutil::seg(EventKind::Fixation, 0, 99), testutil::saccade(100, 139, 12.5),
                                      testutil::seg(EventKind::Blink, 140, 200)};
    const auto back = segments_from_json(segments_to_json(segs));
    REQUIRE(back.size() == 3);
    CHECK(back[1].kind == EventKind::Saccade);
    REQUIRE(back[1].props);
    CHECK(back[1].props->amplitude_dva == 12.5);
    CHECK(back[2].end_idx == 200);
    CHECK(saccade_class(back[1]) == SaccadeClass::Large);
    CHECK(saccade_class(testutil::saccade(0, 10, 9.99)) == SaccadeClass::Small);
    CHECK(saccade_class(back[0]) == SaccadeClass::None);
  }
}
