#include "glymph/workspace.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cstdio>
#include <sstream>

#include "glymph/csv.hpp"
#include "glymph/tensor.hpp"

namespace glymph {

WorkspaceLock::WorkspaceLock(const Workspace& ws) : path_(ws.lock_path()) {
  ws.ensure_root();
  const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
  if (fd < 0)
    fail(ErrorKind::Value,
         "workspace is locked (" + path_ + " exists); remove the file if the previous run died");
  const std::string pid = std::to_string(::getpid()) + "\n";
  [[maybe_unused]] auto n = ::write(fd, pid.data(), pid.size());
  ::close(fd);
}

WorkspaceLock::~WorkspaceLock() { std::remove(path_.c_str()); }

namespace {

std::vector<std::string> split_ws(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream in(line);
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

} // namespace

void write_cohort_manifest(const CohortManifest& manifest, const std::string& path) {
  std::ostringstream out;
  out << "# glymph cohort manifest\n";
  out << "grid_size " << manifest.grid_size << "\n";
  for (const auto& e : manifest.entries) {
    out << e.subject_id << " " << e.seed << " " << e.grade << " times";
    for (double t : e.times) out << " " << format_number(t);
    for (const auto& p : e.region_paths) out << " " << p;
    for (const auto& p : e.image_paths) out << " " << p;
    out << "\n";
  }
  write_file_bytes(path, out.str());
}

CohortManifest read_cohort_manifest(const std::string& path) {
  std::istringstream in(read_file_bytes(path));
  CohortManifest manifest;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    auto tokens = split_ws(line);
    if (tokens.size() == 2 && tokens[0] == "grid_size") {
      manifest.grid_size = std::stoi(tokens[1]);
      continue;
    }
    if (tokens.size() < 5) fail(ErrorKind::IoCorrupt, path + ": malformed cohort manifest line");
    CohortEntry e;
    e.subject_id = tokens[0];
    e.seed = std::stoull(tokens[1]);
    e.grade = std::stoi(tokens[2]);
    if (tokens[3] != "times") fail(ErrorKind::IoCorrupt, path + ": malformed cohort manifest line");
    std::size_t i = 4;
    while (i < tokens.size() && (std::isdigit(static_cast<unsigned char>(tokens[i][0])) ||
                                 tokens[i][0] == '.'))
      e.times.push_back(std::stod(tokens[i++]));
    const std::size_t expected_paths = 2 + 2 * e.times.size();
    if (tokens.size() - i != expected_paths)
      fail(ErrorKind::IoCorrupt, path + ": cohort manifest path count mismatch for " +
                                     e.subject_id);
    e.region_paths = {tokens[i], tokens[i + 1]};
    for (std::size_t k = i + 2; k < tokens.size(); ++k) e.image_paths.push_back(tokens[k]);
    manifest.entries.push_back(std::move(e));
  }
  if (manifest.grid_size == 0) fail(ErrorKind::IoCorrupt, path + ": missing grid_size");
  return manifest;
}

void write_dataset_manifest(const DatasetManifest& manifest, const std::string& path) {
  std::ostringstream out;
  out << "# glymph dataset manifest\n";
  out << "label " << manifest.label << "\n";
  for (const auto& e : manifest.entries) {
    out << e.subject_id << " " << e.split << " times";
    for (double t : e.input_times) out << " " << format_number(t);
    out << " " << e.input_path << " " << e.target_path << "\n";
  }
  write_file_bytes(path, out.str());
}

DatasetManifest read_dataset_manifest(const std::string& path) {
  std::istringstream in(read_file_bytes(path));
  DatasetManifest manifest;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == '#') continue;
    auto tokens = split_ws(line);
    if (tokens.size() == 2 && tokens[0] == "label") {
      manifest.label = tokens[1];
      continue;
    }
    if (tokens.size() < 6) fail(ErrorKind::IoCorrupt, path + ": malformed dataset manifest line");
    DatasetEntry e;
    e.subject_id = tokens[0];
    e.split = tokens[1];
    if (tokens[2] != "times") fail(ErrorKind::IoCorrupt, path + ": malformed dataset manifest line");
    for (std::size_t i = 3; i + 2 < tokens.size(); ++i) e.input_times.push_back(std::stod(tokens[i]));
    e.input_path = tokens[tokens.size() - 2];
    e.target_path = tokens[tokens.size() - 1];
    manifest.entries.push_back(std::move(e));
  }
  if (manifest.label.empty()) fail(ErrorKind::IoCorrupt, path + ": missing dataset label");
  return manifest;
}

} // namespace glymph
