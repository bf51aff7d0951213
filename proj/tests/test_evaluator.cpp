#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "glymph/evaluator.hpp"
#include "glymph/preprocess.hpp"
#include "glymph/rng.hpp"

using namespace glymph;

namespace {

// a square-region synthetic "subject": ventricles, SAS, aqueduct and
// reference laid out as disjoint blocks on a 16x16 grid
GraderMasks block_masks() {
  GraderMasks m;
  for (int p = 0; p < 2; ++p) {
    Tensor<std::uint8_t> vent({16, 16}), sas({16, 16}), aq({16, 16});
    for (int i = 2; i < 6; ++i)
      for (int j = 2; j < 6; ++j) vent.at(i, j) = 1;
    for (int i = 10; i < 14; ++i)
      for (int j = 2; j < 14; ++j) sas.at(i, j) = 1;
    for (int i = 7; i < 9; ++i)
      for (int j = 2; j < 6; ++j) aq.at(i, j) = 1;
    m.ventricle[p] = vent;
    m.sas[p] = sas;
    m.aqueduct[p] = aq;
  }
  return m;
}

GradedPair flat_pair(double time_hours, double vent, double sas, double aq,
                     double elsewhere = 0.2, double anchor = 0.9) {
  GradedPair g;
  g.time_hours = time_hours;
  GraderMasks m = block_masks();
  for (int p = 0; p < 2; ++p) {
    Tensor<double> img = Tensor<double>::full({16, 16}, elsewhere);
    for (Eigen::Index i = 0; i < img.size(); ++i) {
      if (m.ventricle[p][i]) img[i] = vent;
      if (m.sas[p][i]) img[i] = sas;
      if (m.aqueduct[p][i]) img[i] = aq;
    }
    // a constant bright block outside the graded regions, like the
    // reference tissue that anchors the normalization chain
    img.at(15, 14) = anchor;
    img.at(15, 15) = anchor;
    g.planes[p] = std::move(img);
  }
  return g;
}

} // namespace

TEST_CASE("metrics match the arithmetic examples") {
  Tensor<double> p({1, 2}, {0.0, 1.0}), t({1, 2}, {0.0, 0.0});
  ErrorMetrics m = eval_metrics<double>({p}, {t});
  CHECK(m.mse == doctest::Approx(0.5));
  CHECK(m.mae == doctest::Approx(0.5));

  ErrorMetrics zero = eval_metrics<double>({t}, {t});
  CHECK(zero.mse == 0.0);
  CHECK(zero.mae == 0.0);

  CHECK_THROWS_AS(eval_metrics<double>({}, {}), Error);
}

TEST_CASE("mae squared never exceeds mse") {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    Tensor<double> p({3, 5}), t({3, 5});
    for (Eigen::Index i = 0; i < p.size(); ++i) {
      p[i] = rng.normal();
      t[i] = rng.normal();
    }
    ErrorMetrics m = eval_metrics<double>({p}, {t});
    CHECK(m.mae * m.mae <= m.mse + 1e-15);
  }
}

TEST_CASE("difference maps are absolute differences with mean equal to MAE") {
  Rng rng(7);
  Tensor<double> a({4, 4}), b({4, 4});
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    a[i] = rng.uniform01();
    b[i] = rng.uniform01();
  }
  Tensor<double> d = difference_map(a, b);
  for (Eigen::Index i = 0; i < d.size(); ++i) {
    CHECK(d[i] == doctest::Approx(std::abs(a[i] - b[i])));
    CHECK(d[i] >= 0.0);
  }
  ErrorMetrics m = eval_metrics<double>({a}, {b});
  CHECK(d.values().mean() == doctest::Approx(m.mae).epsilon(1e-12));

  Tensor<double> same = difference_map(a, a);
  CHECK(same.values().maxCoeff() == 0.0);
}

TEST_CASE("grade_reflux separates the pair-gradable grades") {
  GraderMasks masks = block_masks();
  GradedPair baseline = flat_pair(0.0, 0.18, 0.18, 0.18);

  // no enhancement anywhere
  CHECK(grade_reflux(flat_pair(24.0, 0.18, 0.70, 0.5), baseline, masks).grade == 0);
  // lasting enhancement, clearly below isointensity
  RefluxGrade g3 = grade_reflux(flat_pair(24.0, 0.40, 0.80, 0.5), baseline, masks);
  CHECK(g3.grade == 3);
  CHECK(g3.enhancement_24h == doctest::Approx(0.22));
  CHECK(g3.ratio_24h == doctest::Approx(0.5));
  // isointense with the SAS
  CHECK(grade_reflux(flat_pair(24.0, 0.75, 0.80, 0.6), baseline, masks).grade == 4);
}

TEST_CASE("grade_reflux recognizes the transient grades from a series") {
  GraderMasks masks = block_masks();
  std::vector<GradedPair> series{
      flat_pair(0.0, 0.18, 0.18, 0.18),
      flat_pair(6.0, 0.50, 0.60, 0.55), // transient ventricular enrichment
      flat_pair(24.0, 0.20, 0.80, 0.45),
  };
  CHECK(grade_reflux(series, masks).grade == 2);

  std::vector<GradedPair> aq_only{
      flat_pair(0.0, 0.18, 0.18, 0.18),
      flat_pair(6.0, 0.19, 0.60, 0.45), // supra-aqueductal sign only
      flat_pair(24.0, 0.20, 0.80, 0.40),
  };
  CHECK(grade_reflux(aq_only, masks).grade == 1);

  std::vector<GradedPair> silent{
      flat_pair(0.0, 0.18, 0.18, 0.18),
      flat_pair(6.0, 0.19, 0.60, 0.20),
      flat_pair(24.0, 0.20, 0.80, 0.21),
  };
  CHECK(grade_reflux(silent, masks).grade == 0);

  // a lasting grade keeps priority over earlier transient enhancement
  std::vector<GradedPair> lasting{
      flat_pair(0.0, 0.18, 0.18, 0.18),
      flat_pair(6.0, 0.50, 0.60, 0.55),
      flat_pair(24.0, 0.78, 0.80, 0.6),
  };
  CHECK(grade_reflux(lasting, masks).grade == 4);
}

TEST_CASE("grade_reflux input validation") {
  GraderMasks masks = block_masks();
  GradedPair baseline = flat_pair(0.0, 0.18, 0.18, 0.18);
  CHECK_THROWS_AS(grade_reflux(std::vector<GradedPair>{baseline}, masks), Error);

  GraderMasks empty = masks;
  empty.ventricle[0] = Tensor<std::uint8_t>({16, 16});
  empty.ventricle[1] = Tensor<std::uint8_t>({16, 16});
  CHECK_THROWS_AS(grade_reflux(flat_pair(24.0, 0.4, 0.8, 0.5), baseline, empty), Error);
}

TEST_CASE("raising ventricle intensity never lowers the grade") {
  GraderMasks masks = block_masks();
  GradedPair baseline = flat_pair(0.0, 0.18, 0.18, 0.18);
  int prev = -1;
  for (double vent = 0.18; vent <= 0.81; vent += 0.03) {
    const int g = grade_reflux(flat_pair(24.0, vent, 0.80, 0.5), baseline, masks).grade;
    CHECK(g >= prev);
    prev = g;
  }
  CHECK(prev == 4);
}

TEST_CASE("grading is invariant under joint rescaling through the normalization chain") {
  GraderMasks masks = block_masks();
  auto normalized = [&](double scale) {
    // raw-intensity pair and baseline, both rescaled, then min-max normalized
    GradedPair base =
        flat_pair(0.0, 0.18 * scale, 0.18 * scale, 0.18 * scale, 0.02 * scale, 0.9 * scale);
    GradedPair pair =
        flat_pair(24.0, 0.40 * scale, 0.80 * scale, 0.50 * scale, 0.02 * scale, 0.9 * scale);
    for (int p = 0; p < 2; ++p) {
      base.planes[p] = minmax_slice(base.planes[p]);
      pair.planes[p] = minmax_slice(pair.planes[p]);
    }
    return grade_reflux(pair, base, masks).grade;
  };
  const int reference = normalized(1.0);
  CHECK(reference == 3);
  CHECK(normalized(0.25) == reference);
  CHECK(normalized(7.0) == reference);
}

TEST_CASE("grade_reflux recovers phantom ground truth (noise-free smoke test)") {
  for (int grade : {0, 3, 4}) {
    for (int rep = 0; rep < 2; ++rep) {
      phantom::PhantomSubject s =
          phantom::generate_subject(derive_seed(777 + grade, rep), 64, grade);
      phantom::SimulationResult sim = phantom::simulate_tracer(s, {0.0, 24.0});
      phantom::RenderOptions ro;
      ro.noise_sigma = 0.0;
      phantom::TimePointImage base = phantom::render_pair(s, sim.concentration[0], 0.0, 1, ro);
      phantom::TimePointImage at24 = phantom::render_pair(s, sim.concentration[1], 24.0, 2, ro);

      GradedPair base_pair, pair24;
      base_pair.time_hours = 0.0;
      pair24.time_hours = 24.0;
      for (int p = 0; p < 2; ++p) {
        auto ref = s.mask(p, phantom::Region::Reference);
        base_pair.planes[p] = normalize_slice(base.pair.plane(p), ref);
        pair24.planes[p] = normalize_slice(at24.pair.plane(p), ref);
      }
      RefluxGrade rg = grade_reflux(pair24, base_pair, GraderMasks::of_subject(s));
      CHECK(rg.grade == grade);
    }
  }
}

TEST_CASE("transition matrices are row-stochastic counts") {
  TransitionMatrix id = transition_matrix({0, 3, 4, 3}, {0, 3, 4, 3});
  CHECK(id.p[0][0] == 1.0);
  CHECK(id.p[3][3] == 1.0);
  CHECK(id.p[4][4] == 1.0);
  CHECK(id.row_counts[3] == 2);
  CHECK(id.diagonal_mass() == 1.0);

  TransitionMatrix m = transition_matrix({3, 3, 3, 3}, {3, 3, 3, 4});
  CHECK(m.p[3][3] == doctest::Approx(0.75));
  CHECK(m.p[3][4] == doctest::Approx(0.25));
  CHECK(m.row_counts[3] == 4);

  for (int r = 0; r < 5; ++r) {
    double sum = 0.0;
    for (int c = 0; c < 5; ++c) sum += m.p[r][c];
    if (m.row_counts[r] > 0) CHECK(sum == doctest::Approx(1.0).epsilon(1e-9));
    else CHECK(sum == 0.0);
  }

  CHECK_THROWS_AS(transition_matrix({1, 2}, {1}), Error);
  CHECK_THROWS_AS(transition_matrix({5}, {0}), Error);
}

TEST_CASE("report tables carry one column per configuration") {
  std::vector<MetricReport> reports{{"pre-injection", 7e-3, 3.8e-2, 1e-3, 1e-2, 80},
                                    {"1-2h", 2e-3, 1.8e-2, 9e-4, 9e-3, 95}};
  auto rows = report_table(reports);
  REQUIRE(rows.size() == 6);
  CHECK(rows[0] == std::vector<std::string>{"metric", "pre-injection", "1-2h"});
  CHECK(rows[1][0] == "test_mse");
  CHECK(rows[1][1] == format_number(7e-3));
  CHECK(rows[5][2] == "95");

  auto empty = report_table({});
  CHECK(empty.size() == 6);
  CHECK(empty[0].size() == 1);
}
