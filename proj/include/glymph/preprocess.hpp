#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "glymph/phantom.hpp"
#include "glymph/tensor.hpp"

namespace glymph {

/// One training/evaluation item: input channels stacked as
/// [sag(t1), ax(t1), sag(t2), ax(t2), ...] in chronological order, target is
/// the 24-hour pair in the same layout. All values in [0, 1].
template <typename S>
struct Sample {
  std::string subject_id;
  Tensor<S> input;  // (2*T) x H x W
  Tensor<S> target; // 2 x H x W
  std::vector<double> input_times;
};

template <typename S>
struct Dataset {
  std::string split; // "train" or "test"
  std::vector<Sample<S>> samples;

  int size() const { return static_cast<int>(samples.size()); }
};

/// Divides every pixel by the mean signal over the reference ROI, so the
/// ROI mean of the result is exactly 1.
inline Tensor<double> normalize_reference(const Tensor<double>& image,
                                          const Tensor<std::uint8_t>& reference_mask) {
  if (!(image.rank() == 2 && reference_mask.rank() == 2 &&
        image.shape() == reference_mask.shape()))
    fail(ErrorKind::Shape, "normalize_reference: image and mask shapes must match");
  double sum = 0.0;
  long count = 0;
  for (Eigen::Index i = 0; i < image.size(); ++i) {
    if (reference_mask[i]) {
      sum += image[i];
      ++count;
    }
  }
  if (count == 0) fail(ErrorKind::Value, "normalize_reference: empty reference mask");
  const double mean = sum / static_cast<double>(count);
  if (std::abs(mean) < 1e-9)
    fail(ErrorKind::Value, "normalize_reference: reference mean is numerically zero");
  Tensor<double> out(image.shape());
  out.values() = image.values() / mean;
  return out;
}

/// Per-slice min-max scaling to [0, 1]; a constant slice maps to all zeros.
inline Tensor<double> minmax_slice(const Tensor<double>& image) {
  const double lo = image.values().minCoeff();
  const double hi = image.values().maxCoeff();
  Tensor<double> out(image.shape());
  if (hi - lo <= 0.0) return out;
  out.values() = (image.values() - lo) / (hi - lo);
  return out;
}

/// The full per-slice normalization chain: reference division, then min-max.
inline Tensor<double> normalize_slice(const Tensor<double>& image,
                                      const Tensor<std::uint8_t>& reference_mask) {
  return minmax_slice(normalize_reference(image, reference_mask));
}

namespace detail {

inline const phantom::TimePointImage& find_time(const phantom::SubjectSeries& series,
                                                double hours) {
  for (const auto& img : series.images)
    if (std::abs(img.time_hours - hours) < 1e-9) return img;
  fail(ErrorKind::Value, "subject " + series.subject.subject_id +
                             " has no image at t = " + std::to_string(hours) + " h");
}

} // namespace detail

/// Builds one Sample from a subject's raw time series. Every channel is
/// normalized independently (reference division then per-slice min-max); the
/// target pair is normalized identically.
template <typename S>
Sample<S> assemble_sample(const phantom::SubjectSeries& series,
                          const std::vector<double>& input_times, double target_time = 24.0) {
  if (input_times.empty()) fail(ErrorKind::Value, "assemble_sample: no input times");
  const int n = series.subject.grid_size;
  const int channels = 2 * static_cast<int>(input_times.size());

  Sample<S> sample;
  sample.subject_id = series.subject.subject_id;
  sample.input_times = input_times;
  sample.input = Tensor<S>({channels, n, n});
  sample.target = Tensor<S>({2, n, n});

  auto write_channel = [&](Tensor<S>& dst, int channel, const Tensor<double>& raw, int plane) {
    const Tensor<double> norm = normalize_slice(
        raw, series.subject.mask(plane, phantom::Region::Reference));
    S* out = dst.data() + static_cast<Eigen::Index>(channel) * n * n;
    for (Eigen::Index i = 0; i < norm.size(); ++i) out[i] = static_cast<S>(norm[i]);
  };

  int channel = 0;
  for (double t : input_times) {
    const auto& img = detail::find_time(series, t);
    write_channel(sample.input, channel++, img.pair.sagittal, phantom::kSagittal);
    write_channel(sample.input, channel++, img.pair.axial, phantom::kAxial);
  }
  const auto& target = detail::find_time(series, target_time);
  write_channel(sample.target, 0, target.pair.sagittal, phantom::kSagittal);
  write_channel(sample.target, 1, target.pair.axial, phantom::kAxial);
  return sample;
}

struct SplitIndices {
  std::vector<int> train, test;
};

/// Deterministic shuffled subject split. Both sides must be non-empty.
inline SplitIndices split_cohort(int n_subjects, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0))
    fail(ErrorKind::Value, "train_fraction must lie strictly between 0 and 1");
  const int n_train = static_cast<int>(std::llround(train_fraction * n_subjects));
  if (n_train <= 0 || n_train >= n_subjects)
    fail(ErrorKind::Value, "degenerate split: " + std::to_string(n_train) + "/" +
                               std::to_string(n_subjects - n_train));
  std::vector<int> order(static_cast<std::size_t>(n_subjects));
  for (int i = 0; i < n_subjects; ++i) order[static_cast<std::size_t>(i)] = i;
  Rng rng(seed);
  rng.shuffle(order);
  SplitIndices split;
  split.train.assign(order.begin(), order.begin() + n_train);
  split.test.assign(order.begin() + n_train, order.end());
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.test.begin(), split.test.end());
  return split;
}

template <typename S>
Dataset<S> build_dataset(const std::vector<phantom::SubjectSeries>& cohort,
                         const std::vector<int>& subject_indices,
                         const std::vector<double>& input_times, const std::string& split_tag,
                         double target_time = 24.0) {
  Dataset<S> ds;
  ds.split = split_tag;
  ds.samples.reserve(subject_indices.size());
  for (int idx : subject_indices)
    ds.samples.push_back(
        assemble_sample<S>(cohort[static_cast<std::size_t>(idx)], input_times, target_time));
  return ds;
}

} // namespace glymph
