#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "glymph/phantom.hpp"

using namespace glymph;
using namespace glymph::phantom;

namespace {

long mask_count(const Tensor<std::uint8_t>& m) {
  long n = 0;
  for (Eigen::Index i = 0; i < m.size(); ++i) n += m[i] ? 1 : 0;
  return n;
}

} // namespace

TEST_CASE("subject generation is deterministic per seed") {
  PhantomSubject a = generate_subject(42, 64, 3);
  PhantomSubject b = generate_subject(42, 64, 3);
  for (int p = 0; p < kPlaneCount; ++p)
    for (Eigen::Index i = 0; i < a.planes[p].size(); ++i)
      CHECK(a.planes[p][i] == b.planes[p][i]);
  CHECK(a.kinetics.reflux_coefficient == b.kinetics.reflux_coefficient);
  CHECK(a.kinetics.csf_diffusivity == b.kinetics.csf_diffusivity);

  PhantomSubject c = generate_subject(43, 64, 3);
  bool differs = false;
  for (Eigen::Index i = 0; i < a.planes[0].size() && !differs; ++i)
    differs = a.planes[0][i] != c.planes[0][i];
  CHECK(differs);
}

TEST_CASE("region maps are single-valued, so masks are pairwise disjoint") {
  PhantomSubject s = generate_subject(7, 64, 4);
  for (int p = 0; p < kPlaneCount; ++p) {
    Tensor<int> sum({64, 64});
    for (Region r : {Region::Parenchyma, Region::Sas, Region::Aqueduct, Region::Ventricle,
                     Region::Reference, Region::Background}) {
      auto m = s.mask(p, r);
      for (Eigen::Index i = 0; i < m.size(); ++i) sum[i] += m[i];
    }
    for (Eigen::Index i = 0; i < sum.size(); ++i) CHECK(sum[i] == 1);
  }
}

TEST_CASE("every compartment is non-empty and the SAS hugs the parenchyma") {
  for (std::uint64_t seed : {1ull, 9ull, 77ull}) {
    PhantomSubject s = generate_subject(seed, 64, 3);
    for (int p = 0; p < kPlaneCount; ++p) {
      const auto& map = s.planes[p];
      CHECK(mask_count(s.mask(p, Region::Parenchyma)) > 0);
      CHECK(mask_count(s.mask(p, Region::Sas)) > 0);
      CHECK(mask_count(s.mask(p, Region::Aqueduct)) > 0);
      CHECK(mask_count(s.mask(p, Region::Ventricle)) > 0);
      CHECK(mask_count(s.mask(p, Region::Reference)) > 0);

      // some parenchyma boundary pixel has an SAS 4-neighbour
      long touching = 0;
      for (int i = 1; i < 63; ++i)
        for (int j = 1; j < 63; ++j) {
          if (map.at(i, j) != static_cast<std::uint8_t>(Region::Parenchyma)) continue;
          for (auto [di, dj] : {std::pair{0, 1}, {0, -1}, {1, 0}, {-1, 0}})
            if (map.at(i + di, j + dj) == static_cast<std::uint8_t>(Region::Sas)) ++touching;
        }
      CHECK(touching > 20);
    }
  }
}

TEST_CASE("ventricle area stays within the configured fraction of parenchyma") {
  GeometryBounds bounds;
  for (int seed = 0; seed < 100; ++seed) {
    PhantomSubject s = generate_subject(static_cast<std::uint64_t>(seed), 64, 4);
    for (int p = 0; p < kPlaneCount; ++p) {
      const double vent = static_cast<double>(mask_count(s.mask(p, Region::Ventricle)));
      const double par = static_cast<double>(mask_count(s.mask(p, Region::Parenchyma)));
      const double frac = vent / par;
      CHECK(frac >= bounds.vent_area_min);
      CHECK(frac <= bounds.vent_area_max);
    }
  }
}

TEST_CASE("reflux coefficient increases strictly with the true grade") {
  for (std::uint64_t seed : {5ull, 6ull, 7ull}) {
    double prev = -1.0;
    for (int grade = 0; grade <= 4; ++grade) {
      PhantomSubject s = generate_subject(seed, 64, grade);
      CHECK(s.kinetics.reflux_coefficient > prev);
      prev = s.kinetics.reflux_coefficient;
    }
  }
}

TEST_CASE("generation rejects unsupported parameters") {
  CHECK_THROWS_AS(generate_subject(1, 100, 0), Error);
  CHECK_THROWS_AS(generate_subject(1, 64, 5), Error);
}

TEST_CASE("the baseline field is zero and mass accounting holds") {
  PhantomSubject s = generate_subject(11, 64, 3);
  SimulationResult sim = simulate_tracer(s, default_schedule());
  CHECK(sim.max_step_mass_drift < 1e-6);
  CHECK(sim.injected_total == doctest::Approx(0.25).epsilon(1e-4));
  CHECK(sim.injected_total <= 0.25);

  for (int p = 0; p < kPlaneCount; ++p) {
    CHECK(total_mass(sim.concentration[0][p]) == 0.0);
    // concentrations stay non-negative
    for (const auto& per_time : sim.concentration)
      CHECK(per_time[p].values().minCoeff() >= 0.0);

    double peak = 0.0;
    std::size_t peak_at = 0;
    for (std::size_t ti = 0; ti < sim.times.size(); ++ti) {
      const double m = total_mass(sim.concentration[ti][p]);
      CHECK(m <= 0.25 * sim.dose * (1.0 + 1e-9));
      if (m > peak) {
        peak = m;
        peak_at = ti;
      }
    }
    CHECK(sim.times[peak_at] == 24.0);
    for (std::size_t ti = 0; ti < sim.times.size(); ++ti)
      if (sim.times[ti] != 24.0) CHECK(total_mass(sim.concentration[ti][p]) < peak);
    CHECK(total_mass(sim.concentration.back()[p]) < 0.01 * peak);
  }
}

TEST_CASE("explicit solver rejects an unstable configured time step") {
  PhantomSubject s = generate_subject(3, 64, 0);
  SolverOptions opts;
  opts.time_step_hours = 10.0;
  try {
    simulate_tracer(s, default_schedule(), opts);
    FAIL("expected a stability error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::Config);
  }
}

TEST_CASE("schedules must be increasing and non-negative") {
  PhantomSubject s = generate_subject(3, 64, 0);
  CHECK_THROWS_AS(simulate_tracer(s, {0.0, 2.0, 1.0}), Error);
  CHECK_THROWS_AS(simulate_tracer(s, {-1.0, 2.0}), Error);
}

TEST_CASE("noise-free rendering is anatomical at baseline and monotone in concentration") {
  PhantomSubject s = generate_subject(13, 64, 4);
  RenderOptions opts;
  opts.noise_sigma = 0.0;

  // with the point-spread proxy disabled the baseline is the pure anatomy map
  std::array<Tensor<double>, 2> zero{Tensor<double>({64, 64}), Tensor<double>({64, 64})};
  RenderOptions sharp = opts;
  sharp.smoothing_passes = 0;
  TimePointImage base = render_pair(s, zero, 0.0, 5, sharp);
  for (int p = 0; p < kPlaneCount; ++p)
    for (Eigen::Index i = 0; i < base.pair.plane(p).size(); ++i)
      CHECK(base.pair.plane(p)[i] ==
            baseline_intensity(static_cast<Region>(s.planes[p][i]), opts));

  SimulationResult sim = simulate_tracer(s, {0.0, 24.0});
  TimePointImage one = render_pair(s, sim.concentration[1], 24.0, 5, opts);
  std::array<Tensor<double>, 2> doubled = sim.concentration[1];
  for (auto& f : doubled) f.values() *= 2.0;
  TimePointImage two = render_pair(s, doubled, 24.0, 5, opts);
  for (int p = 0; p < kPlaneCount; ++p)
    for (Eigen::Index i = 0; i < one.pair.plane(p).size(); ++i) {
      if (sim.concentration[1][p][i] > 0.0)
        CHECK(two.pair.plane(p)[i] > one.pair.plane(p)[i]);
      CHECK(one.pair.plane(p)[i] >= 0.0);
    }
}

TEST_CASE("the reference ROI never enhances (noise-free)") {
  PhantomSubject s = generate_subject(17, 64, 4);
  SimulationResult sim = simulate_tracer(s, default_schedule());
  RenderOptions opts;
  opts.noise_sigma = 0.0;
  for (int p = 0; p < kPlaneCount; ++p) {
    auto ref = s.mask(p, Region::Reference);
    double first_mean = -1.0;
    for (std::size_t ti = 0; ti < sim.times.size(); ++ti) {
      TimePointImage img = render_pair(s, sim.concentration[ti], sim.times[ti], 5, opts);
      double sum = 0;
      long n = 0;
      for (Eigen::Index i = 0; i < ref.size(); ++i)
        if (ref[i]) {
          sum += img.pair.plane(p)[i];
          ++n;
        }
      const double mean = sum / static_cast<double>(n);
      if (first_mean < 0) first_mean = mean;
      CHECK(mean == first_mean);
    }
  }
}

TEST_CASE("noise is seeded and clamped to non-negative signals") {
  PhantomSubject s = generate_subject(19, 64, 0);
  std::array<Tensor<double>, 2> zero{Tensor<double>({64, 64}), Tensor<double>({64, 64})};
  RenderOptions opts;
  opts.noise_sigma = 0.05;
  TimePointImage a = render_pair(s, zero, 0.0, 123, opts);
  TimePointImage b = render_pair(s, zero, 0.0, 123, opts);
  TimePointImage c = render_pair(s, zero, 0.0, 124, opts);
  bool differs = false;
  for (Eigen::Index i = 0; i < a.pair.sagittal.size(); ++i) {
    CHECK(a.pair.sagittal[i] == b.pair.sagittal[i]);
    CHECK(a.pair.sagittal[i] >= 0.0);
    differs = differs || a.pair.sagittal[i] != c.pair.sagittal[i];
  }
  CHECK(differs);
}

TEST_CASE("grade counts follow the mix by largest remainder") {
  auto grades = grade_counts(10, {{0, 0.2}, {3, 0.5}, {4, 0.3}});
  REQUIRE(grades.size() == 10);
  int c0 = 0, c3 = 0, c4 = 0;
  for (int g : grades) (g == 0 ? c0 : g == 3 ? c3 : c4) += 1;
  CHECK(c0 == 2);
  CHECK(c3 == 5);
  CHECK(c4 == 3);

  CHECK_THROWS_AS(grade_counts(10, {{0, 0.5}, {3, 0.6}}), Error);
  CHECK_THROWS_AS(grade_counts(10, {{7, 1.0}}), Error);
}

TEST_CASE("cohorts are deterministic and carry the requested grades") {
  CohortConfig cfg;
  cfg.n = 6;
  cfg.seed = 5;
  cfg.schedule = {0.0, 1.5, 24.0};
  auto a = generate_cohort(cfg);
  auto b = generate_cohort(cfg);
  REQUIRE(a.size() == 6);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].subject.subject_id == b[i].subject.subject_id);
    CHECK(a[i].subject.true_grade == b[i].subject.true_grade);
    for (Eigen::Index t = 0; t < a[i].images[1].pair.sagittal.size(); ++t)
      CHECK(a[i].images[1].pair.sagittal[t] == b[i].images[1].pair.sagittal[t]);
  }
  int c0 = 0, c3 = 0, c4 = 0;
  for (const auto& s : a) (s.subject.true_grade == 0 ? c0 : s.subject.true_grade == 3 ? c3 : c4) += 1;
  CHECK(c0 == 2);
  CHECK(c3 == 2);
  CHECK(c4 == 2);
}

TEST_CASE("the 24 h ventricle/SAS concentration ratio rises with the grade") {
  // smoke version; the acceptance suite measures this over 100 subjects
  double prev = -1.0;
  for (int grade : {0, 3, 4}) {
    double ratio = 0.0;
    const int reps = 4;
    for (int rep = 0; rep < reps; ++rep) {
      PhantomSubject s = generate_subject(derive_seed(900 + grade, rep), 64, grade);
      SimulationResult sim = simulate_tracer(s, {0.0, 24.0});
      double vent = 0, sas = 0;
      long nv = 0, ns = 0;
      for (int p = 0; p < kPlaneCount; ++p) {
        auto vm = s.mask(p, Region::Ventricle), sm = s.mask(p, Region::Sas);
        for (Eigen::Index i = 0; i < vm.size(); ++i) {
          if (vm[i]) {
            vent += sim.concentration[1][p][i];
            ++nv;
          }
          if (sm[i]) {
            sas += sim.concentration[1][p][i];
            ++ns;
          }
        }
      }
      ratio += (vent / nv) / (sas / ns);
    }
    ratio /= reps;
    CHECK(ratio > prev);
    prev = ratio;
  }
}
