#pragma once

#include <array>
#include <cmath>
#include <string>
#include <vector>

#include "glymph/csv.hpp"
#include "glymph/phantom.hpp"
#include "glymph/tensor.hpp"

namespace glymph {

// ---------------------------------------------------------------------------
// Image-error metrics
// ---------------------------------------------------------------------------

struct ErrorMetrics {
  double mse = 0.0;
  double mae = 0.0;
};

/// Means over all samples, planes and pixels jointly.
template <typename S>
ErrorMetrics eval_metrics(const std::vector<Tensor<S>>& predictions,
                          const std::vector<Tensor<S>>& targets) {
  if (predictions.empty()) fail(ErrorKind::Value, "eval_metrics: empty prediction set");
  if (predictions.size() != targets.size())
    fail(ErrorKind::Shape, "eval_metrics: prediction/target count mismatch");
  double se = 0.0, ae = 0.0;
  long n = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const auto& p = predictions[i];
    const auto& t = targets[i];
    if (!p.same_shape(t)) fail(ErrorKind::Shape, "eval_metrics: shape mismatch at sample " +
                                                     std::to_string(i));
    for (Eigen::Index j = 0; j < p.size(); ++j) {
      const double d = static_cast<double>(p[j]) - static_cast<double>(t[j]);
      se += d * d;
      ae += std::abs(d);
    }
    n += p.size();
  }
  return {se / static_cast<double>(n), ae / static_cast<double>(n)};
}

/// Pixelwise absolute difference; its mean equals the pair's MAE.
template <typename S>
Tensor<S> difference_map(const Tensor<S>& pred, const Tensor<S>& target) {
  if (!pred.same_shape(target)) fail(ErrorKind::Shape, "difference_map: shape mismatch");
  Tensor<S> out = Tensor<S>::uninit(pred.shape());
  out.values() = (pred.values() - target.values()).abs();
  return out;
}

// ---------------------------------------------------------------------------
// Ventricular reflux grading
//
// A deterministic ROI-statistic stand-in for the visual grading scale:
// ventricular enhancement is the mean ventricle intensity above the baseline
// ventricle mean on [0,1]-normalized pairs, and isointensity is the
// ventricle/SAS mean ratio at 24 hours. Thresholds are calibrated so the
// grader recovers the generator's ground-truth grade on noise-free phantoms.
// ---------------------------------------------------------------------------

struct GraderThresholds {
  double enhancement = 0.1;  // theta_e, on [0,1]-scaled intensity above baseline
  double isointensity = 0.8; // tau, ventricle/SAS mean ratio
};

/// Per-plane region masks the grader needs.
struct GraderMasks {
  std::array<Tensor<std::uint8_t>, phantom::kPlaneCount> ventricle;
  std::array<Tensor<std::uint8_t>, phantom::kPlaneCount> sas;
  std::array<Tensor<std::uint8_t>, phantom::kPlaneCount> aqueduct; // may be empty masks

  static GraderMasks of_subject(const phantom::PhantomSubject& s) {
    GraderMasks m;
    for (int p = 0; p < phantom::kPlaneCount; ++p) {
      m.ventricle[static_cast<std::size_t>(p)] = s.mask(p, phantom::Region::Ventricle);
      m.sas[static_cast<std::size_t>(p)] = s.mask(p, phantom::Region::Sas);
      m.aqueduct[static_cast<std::size_t>(p)] = s.mask(p, phantom::Region::Aqueduct);
    }
    return m;
  }
};

/// One [0,1]-normalized sagittal/axial pair, stored as a 2 x H x W tensor or
/// as two planes.
struct GradedPair {
  double time_hours = 24.0;
  std::array<Tensor<double>, phantom::kPlaneCount> planes;

  template <typename S>
  static GradedPair from_tensor(const Tensor<S>& pair, double time_hours = 24.0) {
    if (pair.rank() != 3 || pair.extent(0) != 2)
      fail(ErrorKind::Shape, "GradedPair: expected a 2 x H x W tensor, got " +
                                 pair.shape_string());
    GradedPair g;
    g.time_hours = time_hours;
    const int h = pair.extent(1), w = pair.extent(2);
    for (int p = 0; p < 2; ++p) {
      Tensor<double> plane({h, w});
      const Eigen::Index off = static_cast<Eigen::Index>(p) * h * w;
      for (Eigen::Index i = 0; i < plane.size(); ++i)
        plane[i] = static_cast<double>(pair[off + i]);
      g.planes[static_cast<std::size_t>(p)] = std::move(plane);
    }
    return g;
  }
};

struct RefluxGrade {
  int grade = 0;
  // decision statistics, kept for audit
  double enhancement_24h = 0.0;
  double ratio_24h = 0.0;
  double max_transient_enhancement = 0.0; // ventricles, before 24 h
  double max_aqueduct_enhancement = 0.0;  // over the whole series
};

namespace detail {

inline double pooled_masked_mean(const GradedPair& pair,
                                 const std::array<Tensor<std::uint8_t>, 2>& masks) {
  double sum = 0.0;
  long count = 0;
  for (int p = 0; p < 2; ++p) {
    const auto& img = pair.planes[static_cast<std::size_t>(p)];
    const auto& m = masks[static_cast<std::size_t>(p)];
    if (m.size() == 0) continue;
    if (!(m.rank() == 2 && img.shape() == m.shape()))
      fail(ErrorKind::Shape, "grade_reflux: image and mask shapes must match");
    for (Eigen::Index i = 0; i < img.size(); ++i)
      if (m[i]) {
        sum += img[i];
        ++count;
      }
  }
  if (count == 0) fail(ErrorKind::Value, "grade_reflux: empty mask");
  return sum / static_cast<double>(count);
}

} // namespace detail

/// Grades a full normalized series (baseline first, 24 h pair required).
/// With only {baseline, 24 h} the reachable grades are {0, 3, 4}; mid-series
/// pairs enable the transient grades 1 and 2.
inline RefluxGrade grade_reflux(const std::vector<GradedPair>& series, const GraderMasks& masks,
                                const GraderThresholds& thr = {}) {
  bool has_mid_series = false;
  for (const auto& p : series) has_mid_series = has_mid_series || (p.time_hours > 0.0 && p.time_hours < 24.0);
  if (series.size() < 2)
    fail(ErrorKind::Value, "grade_reflux: need at least a baseline and a 24 h pair");
  const GradedPair* baseline = nullptr;
  const GradedPair* at24 = nullptr;
  for (const auto& p : series) {
    if (p.time_hours == 0.0 && !baseline) baseline = &p;
    if (std::abs(p.time_hours - 24.0) < 1e-9) at24 = &p;
  }
  if (!baseline) baseline = &series.front();
  if (!at24) fail(ErrorKind::Value, "grade_reflux: series has no 24 h pair");

  const double vent_base = detail::pooled_masked_mean(*baseline, masks.ventricle);
  const double aq_base = detail::pooled_masked_mean(*baseline, masks.aqueduct);

  RefluxGrade out;
  for (const auto& p : series) {
    if (&p == baseline) continue;
    const double e_vent = detail::pooled_masked_mean(p, masks.ventricle) - vent_base;
    const double e_aq = detail::pooled_masked_mean(p, masks.aqueduct) - aq_base;
    out.max_aqueduct_enhancement = std::max(out.max_aqueduct_enhancement, e_aq);
    if (p.time_hours < 24.0)
      out.max_transient_enhancement = std::max(out.max_transient_enhancement, e_vent);
  }
  out.enhancement_24h = detail::pooled_masked_mean(*at24, masks.ventricle) - vent_base;
  out.ratio_24h = detail::pooled_masked_mean(*at24, masks.ventricle) /
                  detail::pooled_masked_mean(*at24, masks.sas);

  if (out.enhancement_24h >= thr.enhancement)
    out.grade = out.ratio_24h >= thr.isointensity ? 4 : 3;
  else if (has_mid_series && out.max_transient_enhancement >= thr.enhancement)
    out.grade = 2;
  else if (has_mid_series && out.max_aqueduct_enhancement >= thr.enhancement)
    out.grade = 1;
  else
    out.grade = 0; // without mid-series pairs the reachable grades are {0, 3, 4}
  return out;
}

/// Grades a single 24 h pair against its baseline pair (grades {0, 3, 4}).
inline RefluxGrade grade_reflux(const GradedPair& pair24, const GradedPair& baseline,
                                const GraderMasks& masks, const GraderThresholds& thr = {}) {
  GradedPair base = baseline;
  base.time_hours = 0.0;
  GradedPair at24 = pair24;
  at24.time_hours = 24.0;
  return grade_reflux(std::vector<GradedPair>{base, at24}, masks, thr);
}

// ---------------------------------------------------------------------------
// Grade transition matrices
// ---------------------------------------------------------------------------

/// 5x5 row-stochastic agreement matrix: rows are grades on real images,
/// columns grades on predicted images. Rows with no observations stay zero.
struct TransitionMatrix {
  std::array<std::array<double, 5>, 5> p{};
  std::array<long, 5> row_counts{};

  double diagonal_mass() const {
    long diag = 0, total = 0;
    for (int g = 0; g < 5; ++g) {
      diag += static_cast<long>(std::llround(p[static_cast<std::size_t>(g)][static_cast<std::size_t>(g)] *
                                             static_cast<double>(row_counts[static_cast<std::size_t>(g)])));
      total += row_counts[static_cast<std::size_t>(g)];
    }
    return total ? static_cast<double>(diag) / static_cast<double>(total) : 0.0;
  }
};

inline TransitionMatrix transition_matrix(const std::vector<int>& grades_real,
                                          const std::vector<int>& grades_predicted) {
  if (grades_real.size() != grades_predicted.size())
    fail(ErrorKind::Shape, "transition_matrix: grade list length mismatch");
  TransitionMatrix m;
  std::array<std::array<long, 5>, 5> counts{};
  for (std::size_t i = 0; i < grades_real.size(); ++i) {
    const int r = grades_real[i], c = grades_predicted[i];
    if (r < 0 || r > 4 || c < 0 || c > 4)
      fail(ErrorKind::Value, "transition_matrix: grades must lie in 0..4");
    counts[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)] += 1;
    m.row_counts[static_cast<std::size_t>(r)] += 1;
  }
  for (int r = 0; r < 5; ++r)
    if (m.row_counts[static_cast<std::size_t>(r)] > 0)
      for (int c = 0; c < 5; ++c)
        m.p[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)] =
            static_cast<double>(counts[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)]) /
            static_cast<double>(m.row_counts[static_cast<std::size_t>(r)]);
  return m;
}

inline std::vector<std::vector<std::string>> transition_matrix_rows(const TransitionMatrix& m) {
  std::vector<std::vector<std::string>> rows;
  rows.push_back({"real\\predicted", "0", "1", "2", "3", "4", "count"});
  for (int r = 0; r < 5; ++r) {
    std::vector<std::string> row{std::to_string(r)};
    for (int c = 0; c < 5; ++c)
      row.push_back(format_number(m.p[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)]));
    row.push_back(std::to_string(m.row_counts[static_cast<std::size_t>(r)]));
    rows.push_back(std::move(row));
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Metric reports (the Table-2-analog layout)
// ---------------------------------------------------------------------------

struct MetricReport {
  std::string label; // input-stage configuration
  double test_mse = 0.0;
  double test_mae = 0.0;
  double train_mse = 0.0;
  double train_mae = 0.0;
  int best_test_epoch = 0;
};

/// One row per evaluation metric, one column per input-stage configuration.
inline std::vector<std::vector<std::string>> report_table(const std::vector<MetricReport>& rs) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> header{"metric"};
  for (const auto& r : rs) header.push_back(r.label);
  rows.push_back(header);
  auto push_metric = [&](const std::string& name, auto getter) {
    std::vector<std::string> row{name};
    for (const auto& r : rs) row.push_back(format_number(getter(r)));
    rows.push_back(std::move(row));
  };
  push_metric("test_mse", [](const MetricReport& r) { return r.test_mse; });
  push_metric("test_mae", [](const MetricReport& r) { return r.test_mae; });
  push_metric("train_mse", [](const MetricReport& r) { return r.train_mse; });
  push_metric("train_mae", [](const MetricReport& r) { return r.train_mae; });
  std::vector<std::string> epochs{"best_test_epoch"};
  for (const auto& r : rs) epochs.push_back(std::to_string(r.best_test_epoch));
  rows.push_back(std::move(epochs));
  return rows;
}

inline std::string format_table(const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width;
  for (const auto& row : rows)
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (width.size() <= c) width.push_back(0);
      width[c] = std::max(width[c], row[c].size());
    }
  std::string out;
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      out += row[c];
      if (c + 1 < row.size()) out += std::string(width[c] - row[c].size() + 2, ' ');
    }
    out += '\n';
  }
  return out;
}

} // namespace glymph
