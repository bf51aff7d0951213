#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "glymph/rng.hpp"
#include "glymph/tensor.hpp"

namespace glymph::phantom {

// ---------------------------------------------------------------------------
// Synthetic subjects: procedural two-plane brain phantoms with grade-
// conditioned tracer kinetics. Each plane is an independent 2D world; the
// sagittal and axial geometries differ but share the subject's kinetic
// parameters.
// ---------------------------------------------------------------------------

enum class Region : std::uint8_t {
  Background = 0,
  Parenchyma = 1,
  Sas = 2,       // subarachnoid-space rim around the parenchyma
  Aqueduct = 3,  // third-ventricle / aqueduct region
  Ventricle = 4, // lateral-ventricle region
  Reference = 5, // reference ROI (orbital-fat analog), never enhances
};

inline constexpr int kPlaneCount = 2;
inline constexpr int kSagittal = 0;
inline constexpr int kAxial = 1;
inline const char* plane_name(int p) { return p == kSagittal ? "sag" : "ax"; }

using RegionMap = Tensor<std::uint8_t>; // grid_size x grid_size region codes

struct ImagePair {
  Tensor<double> sagittal; // grid x grid raw signal
  Tensor<double> axial;

  const Tensor<double>& plane(int p) const { return p == kSagittal ? sagittal : axial; }
  Tensor<double>& plane(int p) { return p == kSagittal ? sagittal : axial; }
};

struct TimePointImage {
  double time_hours = 0.0;
  ImagePair pair;
};

/// Kinetic parameters of one subject. Gate rates are derived from the true
/// grade at generation time; reflux_coefficient is the grade-monotone
/// severity index (jitter bands never overlap across grades).
struct Kinetics {
  double csf_diffusivity = 3.0;    // grid^2/hour inside CSF spaces
  double tissue_diffusivity = 0.15; // grid^2/hour inside parenchyma
  double inflow_fraction = 0.25;   // fraction of the injected dose reaching the grid
  double inflow_decay_hours = 12.0;
  double inflow_rise_hours = 0.75;
  double elimination_rate = 0.015; // 1/hour, applied everywhere
  double reflux_coefficient = 0.0; // strictly increasing in true_grade
  double aqueduct_gate_rate = 0.0; // SAS -> aqueduct exchange, 1/hour
  double ventricle_gate_rate = 0.0; // aqueduct -> ventricle exchange, 1/hour
  double ventricle_window_hours = std::numeric_limits<double>::infinity();
  // after the window closes (transient grade 2) the ventricles drain back
  // into the aqueduct at this rate
  double ventricle_drain_rate = 0.5;
};

struct GeometryBounds {
  double vent_area_min = 0.02; // ventricle area as a fraction of parenchyma area
  double vent_area_max = 0.30;
};

struct PhantomSubject {
  std::string subject_id;
  std::uint64_t seed = 0;
  int grid_size = 64;
  int true_grade = 0;
  Kinetics kinetics;
  std::array<RegionMap, kPlaneCount> planes;

  Tensor<std::uint8_t> mask(int plane, Region r) const {
    const RegionMap& m = planes[static_cast<std::size_t>(plane)];
    Tensor<std::uint8_t> out(m.shape());
    for (Eigen::Index i = 0; i < m.size(); ++i)
      out[i] = m[i] == static_cast<std::uint8_t>(r) ? 1 : 0;
    return out;
  }
};

inline const std::vector<double>& default_schedule() {
  static const std::vector<double> s{0.0, 1.5, 4.0, 6.0, 8.0, 24.0, 48.0, 696.0};
  return s;
}

/// Time codes used in file names: 1.5 -> "t1p5".
inline std::string time_code(double hours) {
  char buf[32];
  if (hours == static_cast<long>(hours))
    std::snprintf(buf, sizeof buf, "t%ld", static_cast<long>(hours));
  else
    std::snprintf(buf, sizeof buf, "t%ldp%ld", static_cast<long>(hours),
                  static_cast<long>(std::llround((hours - std::floor(hours)) * 10)));
  return buf;
}

// ---------------------------------------------------------------------------
// Geometry
// ---------------------------------------------------------------------------

namespace detail {

struct Ellipse {
  double cx, cy, rx, ry;
  bool contains(double x, double y) const {
    const double u = (x - cx) / rx, v = (y - cy) / ry;
    return u * u + v * v <= 1.0;
  }
  double rho(double x, double y) const {
    const double u = (x - cx) / rx, v = (y - cy) / ry;
    return u * u + v * v;
  }
};

inline double jitter(Rng& rng, double base, double rel) {
  return base * (1.0 + rel * (rng.uniform01() - 0.5) * 2.0);
}

} // namespace detail

/// Deterministic per-seed geometry: parenchyma ellipse, SAS rim ring,
/// plane-specific ventricle and aqueduct regions carved out of the
/// parenchyma, and a reference ROI disc outside all CSF compartments.
inline RegionMap generate_plane(Rng& rng, int n, int plane) {
  RegionMap map({n, n});
  const double nn = static_cast<double>(n);
  const double cx = nn * (0.52 + 0.02 * (rng.uniform01() - 0.5));
  const double cy = nn * (0.45 + 0.02 * (rng.uniform01() - 0.5));
  const double rx = detail::jitter(rng, plane == kSagittal ? 0.30 * nn : 0.27 * nn, 0.05);
  const double ry = detail::jitter(rng, plane == kSagittal ? 0.25 * nn : 0.29 * nn, 0.05);
  const detail::Ellipse head{cx, cy, rx, ry};
  const double sas_outer = 1.0 + detail::jitter(rng, 0.26, 0.10);

  std::vector<detail::Ellipse> vents;
  detail::Ellipse aqueduct{};
  if (plane == kSagittal) {
    vents.push_back({cx - 0.08 * rx, cy - detail::jitter(rng, 0.18, 0.2) * ry,
                     detail::jitter(rng, 0.30, 0.15) * rx, detail::jitter(rng, 0.24, 0.15) * ry});
    aqueduct = {cx + 0.10 * rx, cy + 0.42 * ry, 0.08 * rx, detail::jitter(rng, 0.26, 0.1) * ry};
  } else {
    const double off = detail::jitter(rng, 0.30, 0.12) * rx;
    const double vrx = detail::jitter(rng, 0.17, 0.15) * rx;
    const double vry = detail::jitter(rng, 0.33, 0.15) * ry;
    vents.push_back({cx - off, cy - 0.10 * ry, vrx, vry});
    vents.push_back({cx + off, cy - 0.10 * ry, vrx, vry});
    aqueduct = {cx, cy + 0.38 * ry, 0.07 * rx, detail::jitter(rng, 0.22, 0.1) * ry};
  }
  // reference ROI in the lower-left corner, beyond the smoothing kernel's
  // reach from any enhancing tissue
  const detail::Ellipse reference{0.14 * nn, 0.86 * nn, 0.05 * nn, 0.04 * nn};

  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) {
      const double y = i + 0.5, x = j + 0.5;
      Region r = Region::Background;
      const double rho = head.rho(x, y);
      if (rho <= 1.0) {
        r = Region::Parenchyma;
        for (const auto& v : vents)
          if (v.contains(x, y)) r = Region::Ventricle;
        if (r == Region::Parenchyma && aqueduct.contains(x, y)) r = Region::Aqueduct;
      } else if (rho <= sas_outer * sas_outer) {
        r = Region::Sas;
      } else if (reference.contains(x, y)) {
        r = Region::Reference;
      }
      map.at(i, j) = static_cast<std::uint8_t>(r);
    }
  }
  return map;
}

inline Kinetics kinetics_for_grade(Rng& rng, int grade) {
  Kinetics k;
  k.csf_diffusivity = detail::jitter(rng, k.csf_diffusivity, 0.10);
  k.tissue_diffusivity = detail::jitter(rng, k.tissue_diffusivity, 0.10);
  k.inflow_fraction = 0.25; // hard cap; per-subject variation goes into the signal gain
  k.inflow_decay_hours = detail::jitter(rng, k.inflow_decay_hours, 0.08);
  k.inflow_rise_hours = detail::jitter(rng, k.inflow_rise_hours, 0.10);
  k.elimination_rate = detail::jitter(rng, k.elimination_rate, 0.08);

  // severity index: jitter bands are narrower than the gaps between grades
  static constexpr double severity[5] = {0.0, 0.25, 0.5, 0.75, 1.0};
  k.reflux_coefficient = severity[grade] * (1.0 + 0.05 * (rng.uniform01() - 0.5));

  switch (grade) {
    case 0:
      break;
    case 1:
      k.aqueduct_gate_rate = detail::jitter(rng, 0.60, 0.10);
      break;
    case 2:
      k.aqueduct_gate_rate = detail::jitter(rng, 1.30, 0.10);
      k.ventricle_gate_rate = detail::jitter(rng, 1.30, 0.10);
      k.ventricle_window_hours = detail::jitter(rng, 6.0, 0.10);
      break;
    case 3:
      k.aqueduct_gate_rate = detail::jitter(rng, 0.80, 0.10);
      k.ventricle_gate_rate = detail::jitter(rng, 0.045, 0.10);
      break;
    case 4:
      k.aqueduct_gate_rate = detail::jitter(rng, 2.50, 0.08);
      k.ventricle_gate_rate = detail::jitter(rng, 2.50, 0.08);
      break;
    default:
      fail(ErrorKind::Value, "unsupported reflux grade " + std::to_string(grade));
  }
  return k;
}

inline PhantomSubject generate_subject(std::uint64_t seed, int grid_size, int grade_target) {
  if (grid_size != 64 && grid_size != 128 && grid_size != 256)
    fail(ErrorKind::Value, "unsupported grid size " + std::to_string(grid_size) +
                               " (expected 64, 128 or 256)");
  if (grade_target < 0 || grade_target > 4)
    fail(ErrorKind::Value, "reflux grade must be in 0..4");
  PhantomSubject s;
  s.seed = seed;
  s.grid_size = grid_size;
  s.true_grade = grade_target;
  Rng rng(seed);
  s.planes[kSagittal] = generate_plane(rng, grid_size, kSagittal);
  s.planes[kAxial] = generate_plane(rng, grid_size, kAxial);
  s.kinetics = kinetics_for_grade(rng, grade_target);
  // diffusivities are stated in grid cells; keep transport physically
  // comparable across grid sizes
  const double scale = static_cast<double>(grid_size) / 64.0;
  s.kinetics.csf_diffusivity *= scale * scale;
  s.kinetics.tissue_diffusivity *= scale * scale;
  return s;
}

// ---------------------------------------------------------------------------
// Transport simulation
// ---------------------------------------------------------------------------

struct SolverOptions {
  double time_step_hours = 0.0; // 0 = derive from the stability bound
  double stability_safety = 0.8;
};

struct SimulationResult {
  std::vector<double> times;
  std::vector<std::array<Tensor<double>, kPlaneCount>> concentration; // per time, per plane
  double max_step_mass_drift = 0.0; // relative accounting error per step
  double injected_total = 0.0;      // per plane, fraction of the injected dose
  double dose = 0.0;                // dose in concentration units (one grid's cell count)
};

namespace detail {

struct Face {
  int a, b;
  double conductance;
};

inline bool diffusive(Region r) {
  return r == Region::Parenchyma || r == Region::Sas || r == Region::Aqueduct ||
         r == Region::Ventricle;
}

// Tracer moves freely between parenchyma and SAS; the aqueduct region and the
// ventricles are walled compartments that exchange only through the grade
// gates.
inline bool connected(Region a, Region b) {
  if (a == b) return diffusive(a);
  const bool a_open = a == Region::Parenchyma || a == Region::Sas;
  const bool b_open = b == Region::Parenchyma || b == Region::Sas;
  return a_open && b_open;
}

inline double region_diffusivity(Region r, const Kinetics& k) {
  switch (r) {
    case Region::Parenchyma:
      return k.tissue_diffusivity;
    case Region::Sas:
    case Region::Aqueduct:
    case Region::Ventricle:
      return k.csf_diffusivity;
    default:
      return 0.0;
  }
}

struct PlaneTopology {
  std::vector<Face> faces;
  std::vector<int> sas_cells, aqueduct_cells, ventricle_cells, domain_cells;

  static PlaneTopology build(const RegionMap& map, const Kinetics& k) {
    PlaneTopology topo;
    const int n = map.extent(0);
    auto region_at = [&](int idx) { return static_cast<Region>(map[idx]); };
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < n; ++j) {
        const int idx = i * n + j;
        const Region r = region_at(idx);
        if (diffusive(r)) topo.domain_cells.push_back(idx);
        if (r == Region::Sas) topo.sas_cells.push_back(idx);
        if (r == Region::Aqueduct) topo.aqueduct_cells.push_back(idx);
        if (r == Region::Ventricle) topo.ventricle_cells.push_back(idx);
        for (auto [di, dj] : {std::pair{0, 1}, std::pair{1, 0}}) {
          const int i2 = i + di, j2 = j + dj;
          if (i2 >= n || j2 >= n) continue;
          const int idx2 = i2 * n + j2;
          const Region r2 = region_at(idx2);
          if (!connected(r, r2)) continue;
          const double da = region_diffusivity(r, k), db = region_diffusivity(r2, k);
          if (da <= 0.0 || db <= 0.0) continue;
          topo.faces.push_back({idx, idx2, 2.0 * da * db / (da + db)});
        }
      }
    }
    return topo;
  }
};

// Conservative relaxation of the destination cells toward the source
// compartment's mean, removing exactly the transferred mass from the source
// cells (proportionally to their content). Transfers are capped so no cell
// goes negative.
//
// drain_compartment empties the source exponentially instead, moving the
// mass into the destination; used for the transient-reflux washout.
inline double apply_gate(std::vector<double>& c, const std::vector<int>& from,
                         const std::vector<int>& to, double rate, double dt) {
  if (rate <= 0.0 || from.empty() || to.empty()) return 0.0;
  double from_mass = 0.0;
  for (int idx : from) from_mass += c[static_cast<std::size_t>(idx)];
  double from_mean = from_mass / static_cast<double>(from.size());
  double wanted = 0.0;
  for (int idx : to) wanted += dt * rate * (from_mean - c[static_cast<std::size_t>(idx)]);
  if (wanted == 0.0) return 0.0;
  double scale = 1.0;
  if (wanted > 0.0 && wanted > from_mass) scale = from_mass / wanted;
  // apply destination updates (possibly scaled), collect the exact total
  double moved = 0.0;
  for (int idx : to) {
    const double d = scale * dt * rate * (from_mean - c[static_cast<std::size_t>(idx)]);
    c[static_cast<std::size_t>(idx)] += d;
    moved += d;
  }
  if (moved > 0.0) {
    if (from_mass <= 0.0) return 0.0;
    const double f = moved / from_mass;
    for (int idx : from) c[static_cast<std::size_t>(idx)] *= (1.0 - f);
  } else {
    const double add = -moved / static_cast<double>(from.size());
    for (int idx : from) c[static_cast<std::size_t>(idx)] += add;
  }
  return moved;
}

inline void drain_compartment(std::vector<double>& c, const std::vector<int>& from,
                              const std::vector<int>& to, double rate, double dt) {
  if (rate <= 0.0 || from.empty() || to.empty()) return;
  const double f = std::min(1.0, dt * rate);
  double moved = 0.0;
  for (int idx : from) {
    moved += c[static_cast<std::size_t>(idx)] * f;
    c[static_cast<std::size_t>(idx)] *= (1.0 - f);
  }
  const double add = moved / static_cast<double>(to.size());
  for (int idx : to) c[static_cast<std::size_t>(idx)] += add;
}

} // namespace detail

/// Inflow rate at time t (per hour, fraction of the unit dose). A difference
/// of exponentials: fast rise, slow decay, total integral equal to
/// inflow_fraction.
inline double inflow_rate(const Kinetics& k, double t) {
  const double a = k.inflow_decay_hours, b = k.inflow_rise_hours;
  const double norm = k.inflow_fraction / (a - b);
  return norm * (std::exp(-t / a) - std::exp(-t / b));
}

/// Explicit finite-difference transport on both planes with the SAS-rim
/// source, first-order elimination and the grade gates. Snapshots are taken
/// exactly at the scheduled times; time 0 is the pre-injection baseline.
inline SimulationResult simulate_tracer(const PhantomSubject& subject,
                                        const std::vector<double>& schedule,
                                        const SolverOptions& opts = {}) {
  for (std::size_t i = 1; i < schedule.size(); ++i)
    if (schedule[i] <= schedule[i - 1])
      fail(ErrorKind::Value, "schedule times must be strictly increasing");
  if (!schedule.empty() && schedule.front() < 0.0)
    fail(ErrorKind::Value, "schedule times must be non-negative");

  const Kinetics& k = subject.kinetics;
  const double d_max = std::max(k.csf_diffusivity, k.tissue_diffusivity);
  const double stable_dt = 1.0 / (4.0 * d_max);
  double dt = opts.time_step_hours > 0.0 ? opts.time_step_hours
                                         : opts.stability_safety * stable_dt;
  const double gate_max = std::max({k.aqueduct_gate_rate, k.ventricle_gate_rate,
                                    k.ventricle_drain_rate, k.elimination_rate, 1e-12});
  dt = std::min(dt, 0.2 / gate_max);
  if (dt > stable_dt)
    fail(ErrorKind::Config,
         "time step " + std::to_string(dt) + " h violates the explicit stability bound " +
             std::to_string(stable_dt) + " h");

  const int n = subject.grid_size;
  const Eigen::Index cells = static_cast<Eigen::Index>(n) * n;

  SimulationResult result;
  result.times = schedule;
  result.concentration.resize(schedule.size());
  // concentration is measured in units of dose per cell: a unit dose spread
  // uniformly over the whole grid would give c = 1 everywhere
  result.dose = static_cast<double>(cells);

  for (int plane = 0; plane < kPlaneCount; ++plane) {
    const auto topo =
        detail::PlaneTopology::build(subject.planes[static_cast<std::size_t>(plane)], k);
    std::vector<double> c(static_cast<std::size_t>(cells), 0.0);
    std::vector<double> delta(static_cast<std::size_t>(cells), 0.0);
    const double per_sas_cell = 1.0 / static_cast<double>(topo.sas_cells.size());

    double t = 0.0;
    double injected = 0.0;
    std::size_t next_snap = 0;
    auto snapshot = [&](std::size_t s) {
      Tensor<double> field({n, n});
      for (Eigen::Index i = 0; i < cells; ++i) field[i] = c[static_cast<std::size_t>(i)];
      result.concentration[s][static_cast<std::size_t>(plane)] = std::move(field);
    };
    while (next_snap < schedule.size() && schedule[next_snap] <= t + 1e-12) {
      snapshot(next_snap);
      ++next_snap;
    }

    while (next_snap < schedule.size()) {
      const double step = std::min(dt, schedule[next_snap] - t);
      double mass_before = 0.0;
      for (int idx : topo.domain_cells) mass_before += c[static_cast<std::size_t>(idx)];

      // diffusion, flux form (conservative by construction)
      for (const auto& f : topo.faces) {
        const double flux = step * f.conductance *
                            (c[static_cast<std::size_t>(f.b)] - c[static_cast<std::size_t>(f.a)]);
        delta[static_cast<std::size_t>(f.a)] += flux;
        delta[static_cast<std::size_t>(f.b)] -= flux;
      }
      for (int idx : topo.domain_cells) {
        c[static_cast<std::size_t>(idx)] += delta[static_cast<std::size_t>(idx)];
        delta[static_cast<std::size_t>(idx)] = 0.0;
      }

      // SAS-rim source (midpoint rule; cumulative injection capped at the
      // configured dose fraction)
      const double injected_step =
          std::min(step * inflow_rate(k, t + 0.5 * step) * result.dose,
                   k.inflow_fraction * result.dose - injected);
      if (injected_step > 0.0) {
        for (int idx : topo.sas_cells)
          c[static_cast<std::size_t>(idx)] += injected_step * per_sas_cell;
        injected += injected_step;
      }

      // grade gates
      detail::apply_gate(c, topo.sas_cells, topo.aqueduct_cells, k.aqueduct_gate_rate, step);
      if (t < k.ventricle_window_hours)
        detail::apply_gate(c, topo.aqueduct_cells, topo.ventricle_cells, k.ventricle_gate_rate,
                           step);
      else if (k.ventricle_gate_rate > 0.0)
        detail::drain_compartment(c, topo.ventricle_cells, topo.aqueduct_cells,
                                  k.ventricle_drain_rate, step);

      // first-order elimination
      double eliminated = 0.0;
      const double keep = 1.0 - step * k.elimination_rate;
      for (int idx : topo.domain_cells) {
        eliminated += c[static_cast<std::size_t>(idx)] * step * k.elimination_rate;
        c[static_cast<std::size_t>(idx)] *= keep;
      }

      double mass_after = 0.0;
      for (int idx : topo.domain_cells) mass_after += c[static_cast<std::size_t>(idx)];
      const double expected = mass_before + injected_step - eliminated;
      const double drift = std::abs(mass_after - expected) / std::max(expected, 1e-12);
      result.max_step_mass_drift = std::max(result.max_step_mass_drift, drift);

      t += step;
      if (t + 1e-12 >= schedule[next_snap]) {
        snapshot(next_snap);
        ++next_snap;
      }
    }
    result.injected_total = injected / result.dose;
  }
  return result;
}

inline double total_mass(const Tensor<double>& field) { return field.values().sum(); }

// ---------------------------------------------------------------------------
// Signal rendering
// ---------------------------------------------------------------------------

struct RenderOptions {
  double background_intensity = 0.02;
  double parenchyma_intensity = 0.55;
  double csf_intensity = 0.18;
  double reference_intensity = 0.95;
  // Signal gain per unit concentration. Calibrated so the enhanced SAS stays
  // below the reference-ROI intensity: the reference is then the brightest
  // tissue at every time point and per-slice min-max scaling keeps a stable
  // anchor across the series.
  double enhancement_gain = 5.0;
  // Parenchyma enhances less per unit concentration (extracellular volume
  // fraction); also keeps the enhanced rim below the reference.
  double parenchyma_gain_factor = 0.15;
  double noise_sigma = 0.005; // absolute, on the raw signal scale
  // scanner point-spread proxy: passes of a separable [1 2 1]/4 kernel over
  // the noise-free signal before noise is added
  int smoothing_passes = 3;
};

inline double baseline_intensity(Region r, const RenderOptions& o) {
  switch (r) {
    case Region::Parenchyma:
      return o.parenchyma_intensity;
    case Region::Sas:
    case Region::Aqueduct:
    case Region::Ventricle:
      return o.csf_intensity;
    case Region::Reference:
      return o.reference_intensity;
    default:
      return o.background_intensity;
  }
}

namespace detail {

// separable [1 2 1]/4 smoothing with clamped edges
inline void smooth121(Tensor<double>& img) {
  const int h = img.extent(0), w = img.extent(1);
  Tensor<double> tmp = Tensor<double>::uninit(img.shape());
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j) {
      const double l = img.at(i, std::max(0, j - 1));
      const double r = img.at(i, std::min(w - 1, j + 1));
      tmp.at(i, j) = 0.25 * l + 0.5 * img.at(i, j) + 0.25 * r;
    }
  for (int i = 0; i < h; ++i)
    for (int j = 0; j < w; ++j) {
      const double u = tmp.at(std::max(0, i - 1), j);
      const double d = tmp.at(std::min(h - 1, i + 1), j);
      img.at(i, j) = 0.25 * u + 0.5 * tmp.at(i, j) + 0.25 * d;
    }
}

} // namespace detail

/// T1-like signal: baseline * (1 + gain * concentration), blurred by the
/// point-spread proxy, plus additive Gaussian noise, clamped to non-negative
/// values. Noise-free rendering is monotone in concentration and leaves the
/// reference ROI mean untouched across time points.
inline TimePointImage render_pair(const PhantomSubject& subject,
                                  const std::array<Tensor<double>, kPlaneCount>& concentration,
                                  double time_hours, std::uint64_t noise_seed,
                                  const RenderOptions& opts = {}) {
  TimePointImage out;
  out.time_hours = time_hours;
  Rng rng(noise_seed);
  for (int plane = 0; plane < kPlaneCount; ++plane) {
    const RegionMap& map = subject.planes[static_cast<std::size_t>(plane)];
    const Tensor<double>& c = concentration[static_cast<std::size_t>(plane)];
    Tensor<double> img(map.shape());
    for (Eigen::Index i = 0; i < map.size(); ++i) {
      const Region r = static_cast<Region>(map[i]);
      double gain = opts.enhancement_gain;
      if (r == Region::Parenchyma) gain *= opts.parenchyma_gain_factor;
      img[i] = baseline_intensity(r, opts) * (1.0 + gain * c[i]);
    }
    for (int pass = 0; pass < opts.smoothing_passes; ++pass) detail::smooth121(img);
    if (opts.noise_sigma > 0.0)
      for (Eigen::Index i = 0; i < img.size(); ++i)
        img[i] = std::max(0.0, img[i] + rng.normal(0.0, opts.noise_sigma));
    out.pair.plane(plane) = std::move(img);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Cohorts
// ---------------------------------------------------------------------------

struct CohortConfig {
  int n = 96;
  std::uint64_t seed = 1;
  int grid_size = 64;
  std::map<int, double> grade_mix = {{0, 1.0 / 3.0}, {3, 1.0 / 3.0}, {4, 1.0 / 3.0}};
  double noise_sigma = 0.005;
  std::vector<double> schedule = default_schedule();
  RenderOptions render;
  SolverOptions solver;
};

struct SubjectSeries {
  PhantomSubject subject;
  std::vector<TimePointImage> images;
  double max_step_mass_drift = 0.0;
};

/// Largest-remainder apportionment of n subjects over the grade mix;
/// deterministic, ties broken by grade order.
inline std::vector<int> grade_counts(int n, const std::map<int, double>& mix) {
  double total = 0.0;
  for (auto& [grade, p] : mix) {
    if (grade < 0 || grade > 4) fail(ErrorKind::Value, "grade_mix keys must be grades 0..4");
    if (p < 0.0) fail(ErrorKind::Value, "grade_mix proportions must be non-negative");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9)
    fail(ErrorKind::Value, "grade_mix proportions must sum to 1");
  std::vector<std::pair<int, double>> items(mix.begin(), mix.end());
  std::vector<int> counts(items.size(), 0);
  int assigned = 0;
  std::vector<std::pair<double, std::size_t>> remainders;
  for (std::size_t i = 0; i < items.size(); ++i) {
    const double exact = items[i].second * n;
    counts[i] = static_cast<int>(std::floor(exact + 1e-9));
    assigned += counts[i];
    remainders.push_back({exact - counts[i], i});
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (int i = 0; assigned < n; ++i, ++assigned) counts[remainders[static_cast<std::size_t>(i)].second] += 1;
  std::vector<int> per_subject;
  for (std::size_t i = 0; i < items.size(); ++i)
    per_subject.insert(per_subject.end(), static_cast<std::size_t>(counts[i]), items[i].first);
  return per_subject;
}

inline SubjectSeries simulate_subject(const PhantomSubject& subject, const CohortConfig& cfg) {
  SubjectSeries series;
  series.subject = subject;
  SimulationResult sim = simulate_tracer(subject, cfg.schedule, cfg.solver);
  series.max_step_mass_drift = sim.max_step_mass_drift;
  RenderOptions render = cfg.render;
  render.noise_sigma = cfg.noise_sigma;
  series.images.reserve(cfg.schedule.size());
  for (std::size_t ti = 0; ti < cfg.schedule.size(); ++ti) {
    const std::uint64_t noise_seed = derive_seed(subject.seed, 1000 + ti);
    series.images.push_back(
        render_pair(subject, sim.concentration[ti], cfg.schedule[ti], noise_seed, render));
  }
  return series;
}

/// n subjects with per-subject derived seeds; deterministic and independent
/// of evaluation order, so subjects may be simulated concurrently.
inline std::vector<SubjectSeries> generate_cohort(const CohortConfig& cfg) {
  const std::vector<int> grades = grade_counts(cfg.n, cfg.grade_mix);
  std::vector<SubjectSeries> cohort(static_cast<std::size_t>(cfg.n));
#pragma omp parallel for schedule(dynamic)
  for (int i = 0; i < cfg.n; ++i) {
    PhantomSubject subject =
        generate_subject(derive_seed(cfg.seed, static_cast<std::uint64_t>(i)), cfg.grid_size,
                         grades[static_cast<std::size_t>(i)]);
    char id[16];
    std::snprintf(id, sizeof id, "s%04d", i);
    subject.subject_id = id;
    cohort[static_cast<std::size_t>(i)] = simulate_subject(subject, cfg);
  }
  return cohort;
}

} // namespace glymph::phantom
