#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "glymph/error.hpp"

namespace glymph {

/// Workspace layout:
///   cohort/                     raw phantom images + region maps + manifest
///   datasets/{label}/           preprocessed samples + manifest
///   runs/{label}/               checkpoint, loss_curve.csv, predictions/
///   reports/                    metric tables, transition matrices, panels
///   resolved.conf               copy of the fully resolved configuration
class Workspace {
public:
  explicit Workspace(std::string root) : root_(std::move(root)) {}

  const std::string& root() const { return root_; }
  std::string cohort_dir() const { return root_ + "/cohort"; }
  std::string cohort_manifest() const { return cohort_dir() + "/manifest.txt"; }
  std::string dataset_dir(const std::string& label) const { return root_ + "/datasets/" + label; }
  std::string dataset_manifest(const std::string& label) const {
    return dataset_dir(label) + "/manifest.txt";
  }
  std::string run_dir(const std::string& label) const { return root_ + "/runs/" + label; }
  std::string checkpoint_path(const std::string& label) const {
    return run_dir(label) + "/checkpoint.glck";
  }
  std::string loss_curve_path(const std::string& label) const {
    return run_dir(label) + "/loss_curve.csv";
  }
  std::string predictions_dir(const std::string& label) const {
    return run_dir(label) + "/predictions";
  }
  std::string reports_dir() const { return root_ + "/reports"; }
  std::string resolved_config_path() const { return root_ + "/resolved.conf"; }
  std::string lock_path() const { return root_ + "/.lock"; }

  void ensure_root() const { std::filesystem::create_directories(root_); }
  static void ensure_dir(const std::string& path) { std::filesystem::create_directories(path); }

  void require_file(const std::string& path, const std::string& produced_by) const {
    if (!std::filesystem::exists(path))
      fail(ErrorKind::MissingArtifact,
           "missing " + path + "; run `glymph " + produced_by + "` first");
  }

private:
  std::string root_;
};

/// One-invocation-at-a-time guard; holds an exclusively created lock file
/// for the lifetime of the object.
class WorkspaceLock {
public:
  explicit WorkspaceLock(const Workspace& ws);
  ~WorkspaceLock();
  WorkspaceLock(const WorkspaceLock&) = delete;
  WorkspaceLock& operator=(const WorkspaceLock&) = delete;

private:
  std::string path_;
};

// ---------------------------------------------------------------------------
// Manifests
// ---------------------------------------------------------------------------

struct CohortEntry {
  std::string subject_id;
  std::uint64_t seed = 0;
  int grade = 0;
  std::vector<double> times;
  // per plane: region-map path; per (time, plane): image path, all relative
  // to the cohort directory
  std::vector<std::string> region_paths; // [sagittal, axial]
  std::vector<std::string> image_paths;  // time-major, sagittal then axial
};

struct CohortManifest {
  int grid_size = 0;
  std::vector<CohortEntry> entries;
};

void write_cohort_manifest(const CohortManifest& manifest, const std::string& path);
CohortManifest read_cohort_manifest(const std::string& path);

struct DatasetEntry {
  std::string subject_id;
  std::string split; // "train" or "test"
  std::vector<double> input_times;
  std::string input_path;  // relative to the dataset directory
  std::string target_path;
};

struct DatasetManifest {
  std::string label;
  std::vector<DatasetEntry> entries;
};

void write_dataset_manifest(const DatasetManifest& manifest, const std::string& path);
DatasetManifest read_dataset_manifest(const std::string& path);

} // namespace glymph
