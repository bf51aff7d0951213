#include "glymph/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>

#include "glymph/csv.hpp"
#include "glymph/error.hpp"

namespace glymph {

const std::vector<double>& ExperimentConfig::times_for(const std::string& label) const {
  auto it = ablation_times.find(label);
  if (it == ablation_times.end())
    fail(ErrorKind::Config, "unknown ablation label '" + label + "'");
  return it->second;
}

int ExperimentConfig::in_channels_for(const std::string& label) const {
  return 2 * static_cast<int>(times_for(label).size());
}

void ExperimentConfig::override_master_seed(std::uint64_t n) {
  cohort_seed = n;
  split_seed = n + 1;
  model_seed = n + 2;
  train_seed = n + 3;
}

namespace {

[[noreturn]] void bad(const std::string& key, int line, const std::string& why) {
  fail(ErrorKind::Config,
       "config line " + std::to_string(line) + ", key '" + key + "': " + why);
}

double parse_double(const std::string& key, int line, const std::string& v) {
  double out = 0.0;
  const char* begin = v.data();
  const char* end = v.data() + v.size();
  auto res = std::from_chars(begin, end, out);
  if (res.ec != std::errc{} || res.ptr != end) bad(key, line, "expected a number, got '" + v + "'");
  return out;
}

long parse_int(const std::string& key, int line, const std::string& v) {
  long out = 0;
  auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc{} || res.ptr != v.data() + v.size())
    bad(key, line, "expected an integer, got '" + v + "'");
  return out;
}

std::uint64_t parse_u64(const std::string& key, int line, const std::string& v) {
  std::uint64_t out = 0;
  auto res = std::from_chars(v.data(), v.data() + v.size(), out);
  if (res.ec != std::errc{} || res.ptr != v.data() + v.size())
    bad(key, line, "expected a non-negative integer, got '" + v + "'");
  return out;
}

bool parse_bool(const std::string& key, int line, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  bad(key, line, "expected true/false, got '" + v + "'");
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : v) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (!std::isspace(static_cast<unsigned char>(c))) {
      cur += c;
    }
  }
  if (!cur.empty() || !out.empty()) out.push_back(cur);
  return out;
}

std::string trim(const std::string& s) {
  std::size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

} // namespace

ExperimentConfig parse_config(const std::string& text) {
  ExperimentConfig cfg;
  std::istringstream in(text);
  std::string raw;
  int line_no = 0;
  bool labels_set = false;

  while (std::getline(in, raw)) {
    ++line_no;
    const std::size_t hash = raw.find('#');
    std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      fail(ErrorKind::Config, "config line " + std::to_string(line_no) +
                                  ": expected 'key = value', got '" + line + "'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));

    if (key == "cohort.n") {
      const long v = parse_int(key, line_no, value);
      if (v < 2) bad(key, line_no, "cohort needs at least 2 subjects");
      cfg.cohort_n = static_cast<int>(v);
    } else if (key == "cohort.seed") {
      cfg.cohort_seed = parse_u64(key, line_no, value);
    } else if (key == "cohort.grid_size") {
      const long v = parse_int(key, line_no, value);
      if (v != 64 && v != 128 && v != 256) bad(key, line_no, "grid_size must be 64, 128 or 256");
      cfg.grid_size = static_cast<int>(v);
    } else if (key == "cohort.grade_mix") {
      std::map<int, double> mix;
      double sum = 0.0;
      for (const std::string& item : split_list(value)) {
        const std::size_t colon = item.find(':');
        if (colon == std::string::npos)
          bad(key, line_no, "expected grade:proportion pairs, got '" + item + "'");
        const long grade = parse_int(key, line_no, item.substr(0, colon));
        const double p = parse_double(key, line_no, item.substr(colon + 1));
        if (grade < 0 || grade > 4) bad(key, line_no, "grades must lie in 0..4");
        if (p < 0.0) bad(key, line_no, "proportions must be non-negative");
        mix[static_cast<int>(grade)] = p;
        sum += p;
      }
      if (mix.empty()) bad(key, line_no, "empty grade mix");
      if (std::abs(sum - 1.0) > 1e-6) bad(key, line_no, "proportions must sum to 1");
      cfg.grade_mix = mix;
    } else if (key == "cohort.noise_sigma") {
      const double v = parse_double(key, line_no, value);
      if (v < 0.0) bad(key, line_no, "noise sigma must be non-negative");
      cfg.noise_sigma = v;
    } else if (key == "cohort.transient_grades") {
      cfg.transient_grades = parse_bool(key, line_no, value);
    } else if (key == "split.train_fraction") {
      const double v = parse_double(key, line_no, value);
      if (!(v > 0.0 && v < 1.0)) bad(key, line_no, "train fraction must lie in (0, 1)");
      cfg.train_fraction = v;
    } else if (key == "split.seed") {
      cfg.split_seed = parse_u64(key, line_no, value);
    } else if (key == "model.base_features") {
      const long v = parse_int(key, line_no, value);
      if (v < 1 || v > 512) bad(key, line_no, "base_features must lie in 1..512");
      cfg.base_features = static_cast<int>(v);
    } else if (key == "model.depth") {
      const long v = parse_int(key, line_no, value);
      if (v < 1 || v > 6) bad(key, line_no, "depth must lie in 1..6");
      cfg.depth = static_cast<int>(v);
    } else if (key == "model.seed") {
      cfg.model_seed = parse_u64(key, line_no, value);
    } else if (key == "training.loss") {
      if (value == "l1") cfg.loss_kind = LossKind::L1;
      else if (value == "l2") cfg.loss_kind = LossKind::L2;
      else bad(key, line_no, "loss must be 'l1' or 'l2'");
    } else if (key == "training.epochs") {
      const long v = parse_int(key, line_no, value);
      if (v < 1) bad(key, line_no, "epochs must be positive");
      cfg.epochs = static_cast<int>(v);
    } else if (key == "training.batch_size") {
      const long v = parse_int(key, line_no, value);
      if (v < 1) bad(key, line_no, "batch_size must be positive");
      cfg.batch_size = static_cast<int>(v);
    } else if (key == "training.learning_rate") {
      const double v = parse_double(key, line_no, value);
      if (!(v > 0.0)) bad(key, line_no, "learning_rate must be positive");
      cfg.learning_rate = v;
    } else if (key == "training.seed") {
      cfg.train_seed = parse_u64(key, line_no, value);
    } else if (key == "training.log_every") {
      const long v = parse_int(key, line_no, value);
      if (v < 1) bad(key, line_no, "log_every must be positive");
      cfg.log_every = static_cast<int>(v);
    } else if (key == "ablation.labels") {
      std::vector<std::string> labels = split_list(value);
      if (labels.empty()) bad(key, line_no, "at least one ablation label required");
      for (const auto& l : labels)
        if (!ExperimentConfig::default_ablation_times().count(l))
          bad(key, line_no, "unknown ablation label '" + l + "'");
      cfg.ablation_labels = labels;
      labels_set = true;
    } else if (key.rfind("ablation.", 0) == 0) {
      const std::string label = key.substr(9);
      if (!ExperimentConfig::default_ablation_times().count(label))
        bad(key, line_no, "unknown key");
      std::vector<double> times;
      for (const std::string& item : split_list(value))
        times.push_back(parse_double(key, line_no, item));
      if (times.empty()) bad(key, line_no, "at least one time point required");
      for (std::size_t i = 0; i < times.size(); ++i) {
        if (times[i] < 0.0) bad(key, line_no, "time points must be non-negative");
        if (i > 0 && times[i] <= times[i - 1])
          bad(key, line_no, "time points must be strictly increasing");
      }
      cfg.ablation_times[label] = times;
    } else if (key == "paths.workspace") {
      if (value.empty()) bad(key, line_no, "workspace path must not be empty");
      cfg.workspace = value;
    } else {
      fail(ErrorKind::Config,
           "config line " + std::to_string(line_no) + ": unknown key '" + key + "'");
    }
  }
  (void)labels_set;
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  return parse_config(read_file_bytes(path));
}

std::string serialize_config(const ExperimentConfig& c) {
  std::ostringstream out;
  out << "# resolved experiment configuration\n";
  out << "cohort.n = " << c.cohort_n << "\n";
  out << "cohort.seed = " << c.cohort_seed << "\n";
  out << "cohort.grid_size = " << c.grid_size << "\n";
  out << "cohort.grade_mix = ";
  bool first = true;
  for (auto& [g, p] : c.grade_mix) {
    if (!first) out << ",";
    out << g << ":" << format_number(p);
    first = false;
  }
  out << "\n";
  out << "cohort.noise_sigma = " << format_number(c.noise_sigma) << "\n";
  out << "cohort.transient_grades = " << (c.transient_grades ? "true" : "false") << "\n";
  out << "split.train_fraction = " << format_number(c.train_fraction) << "\n";
  out << "split.seed = " << c.split_seed << "\n";
  out << "model.base_features = " << c.base_features << "\n";
  out << "model.depth = " << c.depth << "\n";
  out << "model.seed = " << c.model_seed << "\n";
  out << "training.loss = " << loss_name(c.loss_kind) << "\n";
  out << "training.epochs = " << c.epochs << "\n";
  out << "training.batch_size = " << c.batch_size << "\n";
  out << "training.learning_rate = " << format_number(c.learning_rate) << "\n";
  out << "training.seed = " << c.train_seed << "\n";
  out << "training.log_every = " << c.log_every << "\n";
  out << "ablation.labels = ";
  for (std::size_t i = 0; i < c.ablation_labels.size(); ++i)
    out << (i ? "," : "") << c.ablation_labels[i];
  out << "\n";
  for (auto& [label, times] : c.ablation_times) {
    out << "ablation." << label << " = ";
    for (std::size_t i = 0; i < times.size(); ++i) out << (i ? "," : "") << format_number(times[i]);
    out << "\n";
  }
  out << "paths.workspace = " << c.workspace << "\n";
  return out.str();
}

} // namespace glymph
