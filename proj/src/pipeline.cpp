#include "glymph/pipeline.hpp"

#include <cmath>
#include <cstdio>
#include <iostream>
#include <set>

#include "glymph/csv.hpp"
#include "glymph/evaluator.hpp"
#include "glymph/grad_check.hpp"
#include "glymph/pgm.hpp"
#include "glymph/phantom.hpp"
#include "glymph/preprocess.hpp"
#include "glymph/trainer.hpp"
#include "glymph/unet.hpp"

namespace glymph::pipeline {

namespace {

std::string image_rel_path(const std::string& subject, int plane, double t) {
  return subject + "/" + phantom::plane_name(plane) + "_" + phantom::time_code(t) + ".glt";
}

std::string regions_rel_path(const std::string& subject, int plane) {
  return subject + "/" + std::string(phantom::plane_name(plane)) + "_regions.glt";
}

Tensor<std::uint8_t> load_regions(const std::string& path) {
  Tensor<double> raw = read_glt<double>(path);
  Tensor<std::uint8_t> out(raw.shape());
  for (Eigen::Index i = 0; i < raw.size(); ++i)
    out[i] = static_cast<std::uint8_t>(std::lround(raw[i]));
  return out;
}

phantom::PhantomSubject subject_from_disk(const Workspace& ws, const CohortEntry& entry,
                                          int grid_size) {
  phantom::PhantomSubject s;
  s.subject_id = entry.subject_id;
  s.seed = entry.seed;
  s.grid_size = grid_size;
  s.true_grade = entry.grade;
  for (int p = 0; p < phantom::kPlaneCount; ++p)
    s.planes[static_cast<std::size_t>(p)] =
        load_regions(ws.cohort_dir() + "/" + entry.region_paths[static_cast<std::size_t>(p)]);
  return s;
}

phantom::SubjectSeries series_from_disk(const Workspace& ws, const CohortEntry& entry,
                                        int grid_size, const std::vector<double>& times) {
  phantom::SubjectSeries series;
  series.subject = subject_from_disk(ws, entry, grid_size);
  for (double t : times) {
    bool known = false;
    for (double have : entry.times) known = known || std::abs(have - t) < 1e-9;
    if (!known)
      fail(ErrorKind::Value, "subject " + entry.subject_id + " has no stored image at t = " +
                                 format_number(t) + " h");
    phantom::TimePointImage img;
    img.time_hours = t;
    img.pair.sagittal =
        read_glt<double>(ws.cohort_dir() + "/" + image_rel_path(entry.subject_id, 0, t));
    img.pair.axial =
        read_glt<double>(ws.cohort_dir() + "/" + image_rel_path(entry.subject_id, 1, t));
    series.images.push_back(std::move(img));
  }
  return series;
}

UNetConfig model_config(const ExperimentConfig& cfg, const std::string& label) {
  UNetConfig mc;
  mc.in_channels = cfg.in_channels_for(label);
  mc.out_channels = 2;
  mc.base_features = cfg.base_features;
  mc.depth = cfg.depth;
  mc.seed = cfg.model_seed;
  return mc;
}

Dataset<Scalar> load_split(const Workspace& ws, const DatasetManifest& manifest,
                           const std::string& label, const std::string& split) {
  Dataset<Scalar> ds;
  ds.split = split;
  for (const auto& e : manifest.entries) {
    if (e.split != split) continue;
    Sample<Scalar> sample;
    sample.subject_id = e.subject_id;
    sample.input_times = e.input_times;
    sample.input = read_glt<Scalar>(ws.dataset_dir(label) + "/" + e.input_path);
    sample.target = read_glt<Scalar>(ws.dataset_dir(label) + "/" + e.target_path);
    ds.samples.push_back(std::move(sample));
  }
  return ds;
}

std::vector<std::string> active_labels(const ExperimentConfig& cfg, const std::string& label) {
  if (label.empty()) return cfg.ablation_labels;
  (void)cfg.times_for(label); // validates the name
  return {label};
}

} // namespace

void run_simulate(const ExperimentConfig& cfg, const Workspace& ws) {
  for (auto& [grade, p] : cfg.grade_mix)
    if ((grade == 1 || grade == 2) && p > 0.0 && !cfg.transient_grades)
      fail(ErrorKind::Config,
           "grade_mix includes transient grade " + std::to_string(grade) +
               "; set cohort.transient_grades = true to enable grades 1-2");

  phantom::CohortConfig cc;
  cc.n = cfg.cohort_n;
  cc.seed = cfg.cohort_seed;
  cc.grid_size = cfg.grid_size;
  cc.grade_mix = cfg.grade_mix;
  cc.noise_sigma = cfg.noise_sigma;
  const auto cohort = phantom::generate_cohort(cc);

  CohortManifest manifest;
  manifest.grid_size = cfg.grid_size;
  for (const auto& series : cohort) {
    const auto& s = series.subject;
    Workspace::ensure_dir(ws.cohort_dir() + "/" + s.subject_id);
    CohortEntry entry;
    entry.subject_id = s.subject_id;
    entry.seed = s.seed;
    entry.grade = s.true_grade;
    for (int p = 0; p < phantom::kPlaneCount; ++p) {
      const std::string rel = regions_rel_path(s.subject_id, p);
      Tensor<double> regions({s.grid_size, s.grid_size});
      const auto& map = s.planes[static_cast<std::size_t>(p)];
      for (Eigen::Index i = 0; i < map.size(); ++i) regions[i] = map[i];
      write_glt(regions, ws.cohort_dir() + "/" + rel);
      entry.region_paths.push_back(rel);
    }
    for (const auto& img : series.images) {
      entry.times.push_back(img.time_hours);
      for (int p = 0; p < phantom::kPlaneCount; ++p) {
        const std::string rel = image_rel_path(s.subject_id, p, img.time_hours);
        write_glt(img.pair.plane(p), ws.cohort_dir() + "/" + rel);
        entry.image_paths.push_back(rel);
      }
    }
    manifest.entries.push_back(std::move(entry));
  }
  write_cohort_manifest(manifest, ws.cohort_manifest());
  std::cout << "simulate: wrote " << manifest.entries.size() << " subjects to " << ws.cohort_dir()
            << "\n";
}

void run_preprocess(const ExperimentConfig& cfg, const Workspace& ws) {
  ws.require_file(ws.cohort_manifest(), "simulate");
  const CohortManifest cohort = read_cohort_manifest(ws.cohort_manifest());
  const int n = static_cast<int>(cohort.entries.size());
  const SplitIndices split = split_cohort(n, cfg.train_fraction, cfg.split_seed);

  auto split_of = [&](int idx) {
    for (int t : split.test)
      if (t == idx) return std::string("test");
    return std::string("train");
  };

  for (const std::string& label : cfg.ablation_labels) {
    const std::vector<double>& times = cfg.times_for(label);
    Workspace::ensure_dir(ws.dataset_dir(label));
    DatasetManifest manifest;
    manifest.label = label;
    for (int idx = 0; idx < n; ++idx) {
      const auto& entry = cohort.entries[static_cast<std::size_t>(idx)];
      std::vector<double> needed = times;
      needed.push_back(24.0);
      phantom::SubjectSeries series = series_from_disk(ws, entry, cohort.grid_size, needed);
      Sample<double> sample = assemble_sample<double>(series, times);

      DatasetEntry de;
      de.subject_id = entry.subject_id;
      de.split = split_of(idx);
      de.input_times = times;
      de.input_path = entry.subject_id + "_input.glt";
      de.target_path = entry.subject_id + "_target.glt";
      write_glt(sample.input, ws.dataset_dir(label) + "/" + de.input_path);
      write_glt(sample.target, ws.dataset_dir(label) + "/" + de.target_path);
      manifest.entries.push_back(std::move(de));
    }
    write_dataset_manifest(manifest, ws.dataset_manifest(label));
    std::cout << "preprocess: " << label << ": " << split.train.size() << " train / "
              << split.test.size() << " test samples\n";
  }
}

void run_train(const ExperimentConfig& cfg, const Workspace& ws, const std::string& label) {
  ws.require_file(ws.dataset_manifest(label), "preprocess");
  const DatasetManifest manifest = read_dataset_manifest(ws.dataset_manifest(label));
  if (!manifest.entries.empty() && manifest.entries.front().input_times != cfg.times_for(label))
    fail(ErrorKind::Config, "dataset for '" + label +
                                "' was preprocessed with different input times; re-run preprocess");
  Dataset<Scalar> train_ds = load_split(ws, manifest, label, "train");
  Dataset<Scalar> test_ds = load_split(ws, manifest, label, "test");

  UNet<Scalar> model(model_config(cfg, label));
  TrainConfig tc;
  tc.loss_kind = cfg.loss_kind;
  tc.epochs = cfg.epochs;
  tc.batch_size = cfg.batch_size;
  tc.learning_rate = cfg.learning_rate;
  tc.seed = cfg.train_seed;
  tc.log_every = cfg.log_every;
  LossCurve curve = train(model, train_ds, test_ds, tc);

  Workspace::ensure_dir(ws.run_dir(label));
  save_checkpoint(model, ws.checkpoint_path(label));
  CsvRows rows{{"epoch", "train_loss", "test_loss"}};
  for (const auto& r : curve.records)
    rows.push_back({r.epoch, r.train_loss, r.test_loss});
  emit_csv(rows, ws.loss_curve_path(label));
  std::cout << "train: " << label << ": " << curve.records.size()
            << " loss records, final train loss "
            << format_number(curve.records.back().train_loss) << "\n";
}

void run_predict(const ExperimentConfig& cfg, const Workspace& ws, const std::string& label) {
  ws.require_file(ws.dataset_manifest(label), "preprocess");
  ws.require_file(ws.checkpoint_path(label), "train");
  const DatasetManifest manifest = read_dataset_manifest(ws.dataset_manifest(label));
  Dataset<Scalar> test_ds = load_split(ws, manifest, label, "test");
  UNet<Scalar> model = load_checkpoint<Scalar>(ws.checkpoint_path(label), model_config(cfg, label));

  Workspace::ensure_dir(ws.predictions_dir(label));
  std::vector<Tensor<Scalar>> preds = predict(model, test_ds, cfg.batch_size);
  for (std::size_t i = 0; i < preds.size(); ++i)
    write_glt(preds[i],
              ws.predictions_dir(label) + "/" + test_ds.samples[i].subject_id + ".glt");
  std::cout << "predict: " << label << ": wrote " << preds.size() << " predicted pairs\n";
}

void run_evaluate(const ExperimentConfig& cfg, const Workspace& ws, const std::string& label) {
  ws.require_file(ws.dataset_manifest(label), "preprocess");
  ws.require_file(ws.checkpoint_path(label), "train");
  ws.require_file(ws.loss_curve_path(label), "train");
  const DatasetManifest manifest = read_dataset_manifest(ws.dataset_manifest(label));
  Dataset<Scalar> train_ds = load_split(ws, manifest, label, "train");
  Dataset<Scalar> test_ds = load_split(ws, manifest, label, "test");
  UNet<Scalar> model = load_checkpoint<Scalar>(ws.checkpoint_path(label), model_config(cfg, label));

  auto metrics_for = [&](Dataset<Scalar>& ds, ErrorMetrics* raw) {
    std::vector<Tensor<Scalar>> clamped = predict(model, ds, cfg.batch_size);
    std::vector<Tensor<Scalar>> targets;
    for (auto& s : ds.samples) targets.push_back(s.target);
    if (raw) {
      // unclamped forward for the secondary metric
      std::vector<Tensor<Scalar>> raw_preds;
      for (auto& s : ds.samples) {
        std::vector<int> shape = s.input.shape();
        shape.insert(shape.begin(), 1);
        Tensor<Scalar> in = Tensor<Scalar>::uninit(shape);
        std::copy_n(s.input.data(), s.input.size(), in.data());
        Tensor<Scalar> out = model.forward(in, Mode::Eval);
        Tensor<Scalar> squeezed = Tensor<Scalar>::uninit(s.target.shape());
        std::copy_n(out.data(), out.size(), squeezed.data());
        raw_preds.push_back(std::move(squeezed));
      }
      *raw = eval_metrics(raw_preds, targets);
    }
    return eval_metrics(clamped, targets);
  };

  ErrorMetrics test_raw;
  const ErrorMetrics test = metrics_for(test_ds, &test_raw);
  const ErrorMetrics train = metrics_for(train_ds, nullptr);

  // best-test-loss epoch from the stored curve
  const auto curve = parse_csv(read_file_bytes(ws.loss_curve_path(label)));
  int best_epoch = 0;
  double best_loss = std::numeric_limits<double>::infinity();
  for (std::size_t i = 1; i < curve.size(); ++i) {
    const double tl = std::stod(curve[i][2]);
    if (tl < best_loss) {
      best_loss = tl;
      best_epoch = std::stoi(curve[i][0]);
    }
  }

  Workspace::ensure_dir(ws.reports_dir());
  CsvRows rows{{"metric", "value"},
               {"test_mse", test.mse},
               {"test_mae", test.mae},
               {"train_mse", train.mse},
               {"train_mae", train.mae},
               {"test_mse_raw", test_raw.mse},
               {"test_mae_raw", test_raw.mae},
               {"best_test_epoch", best_epoch}};
  emit_csv(rows, ws.reports_dir() + "/" + label + "_metrics.csv");

  // difference-map panels for a few test subjects
  const std::string panel_dir = ws.reports_dir() + "/" + label + "_panels";
  Workspace::ensure_dir(panel_dir);
  std::vector<Tensor<Scalar>> preds = predict(model, test_ds, cfg.batch_size);
  for (std::size_t i = 0; i < std::min<std::size_t>(3, preds.size()); ++i) {
    const auto& sample = test_ds.samples[i];
    for (int p = 0; p < 2; ++p) {
      const int h = sample.target.extent(1), w = sample.target.extent(2);
      auto plane_of = [&](const Tensor<Scalar>& t) {
        Tensor<Scalar> out({h, w});
        std::copy_n(t.data() + static_cast<Eigen::Index>(p) * h * w, out.size(), out.data());
        return out;
      };
      const std::string stem =
          panel_dir + "/" + sample.subject_id + "_" + phantom::plane_name(p);
      Tensor<Scalar> pred_plane = plane_of(preds[i]);
      Tensor<Scalar> target_plane = plane_of(sample.target);
      export_image(pred_plane, stem + "_pred.pgm");
      export_image(target_plane, stem + "_target.pgm");
      export_image(difference_map(pred_plane, target_plane), stem + "_diff.pgm");
    }
  }
  std::cout << "evaluate: " << label << ": test MSE " << format_number(test.mse) << ", test MAE "
            << format_number(test.mae) << ", best test epoch " << best_epoch << "\n";
}

void run_grade(const ExperimentConfig& cfg, const Workspace& ws, const std::string& label) {
  ws.require_file(ws.cohort_manifest(), "simulate");
  ws.require_file(ws.dataset_manifest(label), "preprocess");
  const CohortManifest cohort = read_cohort_manifest(ws.cohort_manifest());
  const DatasetManifest manifest = read_dataset_manifest(ws.dataset_manifest(label));

  std::vector<int> grades_true, grades_real, grades_pred;
  CsvRows grade_rows{{"subject", "true_grade", "grade_on_real", "grade_on_predicted"}};
  for (const auto& e : manifest.entries) {
    if (e.split != "test") continue;
    const std::string pred_path = ws.predictions_dir(label) + "/" + e.subject_id + ".glt";
    ws.require_file(pred_path, "predict");
    const CohortEntry* entry = nullptr;
    for (const auto& c : cohort.entries)
      if (c.subject_id == e.subject_id) entry = &c;
    if (!entry) fail(ErrorKind::IoCorrupt, "subject " + e.subject_id + " missing from cohort");

    phantom::SubjectSeries base_series =
        series_from_disk(ws, *entry, cohort.grid_size, {0.0});
    const auto& subject = base_series.subject;
    GraderMasks masks = GraderMasks::of_subject(subject);

    GradedPair baseline;
    baseline.time_hours = 0.0;
    for (int p = 0; p < 2; ++p)
      baseline.planes[static_cast<std::size_t>(p)] = normalize_slice(
          base_series.images[0].pair.plane(p), subject.mask(p, phantom::Region::Reference));

    const Tensor<Scalar> target =
        read_glt<Scalar>(ws.dataset_dir(label) + "/" + e.target_path);
    const Tensor<Scalar> prediction = read_glt<Scalar>(pred_path);

    const RefluxGrade on_real = grade_reflux(GradedPair::from_tensor(target), baseline, masks);
    const RefluxGrade on_pred = grade_reflux(GradedPair::from_tensor(prediction), baseline, masks);
    grades_true.push_back(entry->grade);
    grades_real.push_back(on_real.grade);
    grades_pred.push_back(on_pred.grade);
    grade_rows.push_back({e.subject_id, entry->grade, on_real.grade, on_pred.grade});
  }
  if (grades_true.empty()) fail(ErrorKind::Value, "grade: no test subjects");

  Workspace::ensure_dir(ws.reports_dir());
  emit_csv(grade_rows, ws.reports_dir() + "/" + label + "_grades.csv");

  const TransitionMatrix tm = transition_matrix(grades_real, grades_pred);
  CsvRows tm_rows;
  for (auto& row : transition_matrix_rows(tm)) {
    std::vector<CsvValue> cells;
    for (auto& cell : row) cells.push_back(cell);
    tm_rows.push_back(std::move(cells));
  }
  emit_csv(tm_rows, ws.reports_dir() + "/" + label + "_transition.csv");
  std::cout << "grade: " << label << ": " << grades_true.size() << " test subjects, diagonal mass "
            << format_number(tm.diagonal_mass()) << "\n";
}

void run_report(const ExperimentConfig& cfg, const Workspace& ws) {
  std::vector<MetricReport> reports;
  for (const std::string& label : cfg.ablation_labels) {
    const std::string path = ws.reports_dir() + "/" + label + "_metrics.csv";
    ws.require_file(path, "evaluate --label " + label);
    const auto rows = parse_csv(read_file_bytes(path));
    MetricReport r;
    r.label = label;
    for (std::size_t i = 1; i < rows.size(); ++i) {
      const std::string& key = rows[i][0];
      const std::string& value = rows[i][1];
      if (key == "test_mse") r.test_mse = std::stod(value);
      else if (key == "test_mae") r.test_mae = std::stod(value);
      else if (key == "train_mse") r.train_mse = std::stod(value);
      else if (key == "train_mae") r.train_mae = std::stod(value);
      else if (key == "best_test_epoch") r.best_test_epoch = std::stoi(value);
    }
    reports.push_back(std::move(r));
  }
  const auto table = report_table(reports);
  CsvRows rows;
  for (auto& row : table) {
    std::vector<CsvValue> cells;
    for (auto& cell : row) cells.push_back(cell);
    rows.push_back(std::move(cells));
  }
  Workspace::ensure_dir(ws.reports_dir());
  emit_csv(rows, ws.reports_dir() + "/summary.csv");
  std::cout << format_table(table);
}

namespace {

// small local references for the selftest; the unit-test suite carries the
// full versions
template <typename S>
Tensor<S> conv_reference(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& b) {
  const int nb = x.extent(0), ci_n = x.extent(1), h = x.extent(2), wd = x.extent(3);
  const int co_n = w.extent(0);
  Tensor<S> out({nb, co_n, h, wd});
  for (int bt = 0; bt < nb; ++bt)
    for (int co = 0; co < co_n; ++co)
      for (int i = 0; i < h; ++i)
        for (int j = 0; j < wd; ++j) {
          S acc = b[co];
          for (int ci = 0; ci < ci_n; ++ci)
            for (int ki = 0; ki < 3; ++ki)
              for (int kj = 0; kj < 3; ++kj) {
                const int r = i + ki - 1, s = j + kj - 1;
                if (r < 0 || r >= h || s < 0 || s >= wd) continue;
                acc = std::fma(x.at(bt, ci, r, s), w.at(co, ci, ki, kj), acc);
              }
          out.at(bt, co, i, j) = acc;
        }
  return out;
}

int check(bool ok, const char* name) {
  std::cout << (ok ? "[ok]   " : "[FAIL] ") << name << "\n";
  return ok ? 0 : 1;
}

} // namespace

int run_selftest() {
  int failures = 0;
  Rng rng(20240501);

  // convolution oracle, bit equality
  {
    bool ok = true;
    for (int trial = 0; trial < 25 && ok; ++trial) {
      const int nb = 1 + static_cast<int>(rng.below(2));
      const int ci = 1 + static_cast<int>(rng.below(4));
      const int co = 1 + static_cast<int>(rng.below(5));
      const int h = 1 + static_cast<int>(rng.below(12));
      const int wd = 1 + static_cast<int>(rng.below(24));
      Tensor<Scalar> x({nb, ci, h, wd}), w({co, ci, 3, 3}), b({co});
      for (Eigen::Index i = 0; i < x.size(); ++i) x[i] = static_cast<Scalar>(rng.normal());
      for (Eigen::Index i = 0; i < w.size(); ++i) w[i] = static_cast<Scalar>(rng.normal());
      for (Eigen::Index i = 0; i < b.size(); ++i) b[i] = static_cast<Scalar>(rng.normal());
      Tensor<Scalar> got = conv3x3(x, w, b);
      Tensor<Scalar> ref = conv_reference(x, w, b);
      for (Eigen::Index i = 0; i < got.size(); ++i) ok = ok && got[i] == ref[i];
    }
    failures += check(ok, "conv3x3 matches the nested-loop reference bit for bit");
  }

  // per-layer gradient checks in double precision
  {
    Tensor<double> x({1, 2, 6, 6}), w({3, 2, 3, 3}), b({3}), proj({1, 3, 6, 6});
    for (Eigen::Index i = 0; i < x.size(); ++i) x[i] = rng.normal();
    for (Eigen::Index i = 0; i < w.size(); ++i) w[i] = rng.normal();
    for (Eigen::Index i = 0; i < b.size(); ++i) b[i] = rng.normal();
    for (Eigen::Index i = 0; i < proj.size(); ++i) proj[i] = rng.normal();
    auto f = [&]() { return (conv3x3(x, w, b).values() * proj.values()).sum(); };
    conv3x3_backward(proj, x, w, b);
    const double err = std::max({max_relative_grad_error(f, x, 1e-5),
                                 max_relative_grad_error(f, w, 1e-5),
                                 max_relative_grad_error(f, b, 1e-5)});
    failures += check(err < 1e-4, "conv3x3 gradients match central finite differences");
  }
  {
    UNetConfig cfg{2, 2, 2, 2, 99, 1024};
    UNet<double> net(cfg);
    Tensor<double> batch({1, 2, 8, 8}), target({1, 2, 8, 8});
    for (Eigen::Index i = 0; i < batch.size(); ++i) batch[i] = 0.5 + 0.2 * rng.normal();
    for (Eigen::Index i = 0; i < target.size(); ++i) target[i] = 0.5 + 0.2 * rng.normal();
    auto f = [&]() {
      Tensor<double> out = net.forward(batch, Mode::Train);
      return (out.values() - target.values()).square().mean();
    };
    UNetTrace<double> trace;
    Tensor<double> out = net.forward(batch, Mode::Train, trace);
    Tensor<double> gout(out.shape());
    gout.values() = 2.0 * (out.values() - target.values()) / static_cast<double>(out.size());
    net.zero_grad();
    net.backward(trace, gout);
    double worst = 0.0;
    for (auto& p : net.trainable_params())
      worst = std::max(worst, max_relative_grad_error(f, *p.tensor, 1e-6));
    failures += check(worst < 1e-3, "u-net end-to-end gradients match finite differences");
  }

  // adam against the scalar recurrence
  {
    Tensor<double> p({1}, {0.25});
    std::vector<NamedParam<double>> params{{"p", &p}};
    AdamState<double> st;
    double m = 0, v = 0, ref = 0.25;
    bool ok = true;
    for (int t = 1; t <= 20; ++t) {
      const double g = rng.normal();
      p.ensure_grad()[0] = g;
      adam_step(params, st);
      m = 0.9 * m + 0.1 * g;
      v = 0.999 * v + 0.001 * g * g;
      ref -= 1e-3 * (m / (1 - std::pow(0.9, t))) /
             (std::sqrt(v / (1 - std::pow(0.999, t))) + 1e-8);
      ok = ok && std::abs(p[0] - ref) < 1e-12;
    }
    failures += check(ok, "adam matches the scalar update recurrence");
  }
  return failures;
}

int dispatch(const std::string& subcommand, const ExperimentConfig& cfg,
             const std::string& label) {
  if (subcommand == "selftest") return run_selftest() == 0 ? 0 : 1;

  const Workspace ws(cfg.workspace);
  WorkspaceLock lock(ws);
  write_file_bytes(ws.resolved_config_path(), serialize_config(cfg));

  if (subcommand == "simulate") {
    run_simulate(cfg, ws);
  } else if (subcommand == "preprocess") {
    run_preprocess(cfg, ws);
  } else if (subcommand == "train") {
    for (const auto& l : active_labels(cfg, label)) run_train(cfg, ws, l);
  } else if (subcommand == "predict") {
    for (const auto& l : active_labels(cfg, label)) run_predict(cfg, ws, l);
  } else if (subcommand == "evaluate") {
    for (const auto& l : active_labels(cfg, label)) run_evaluate(cfg, ws, l);
  } else if (subcommand == "grade") {
    for (const auto& l : active_labels(cfg, label)) run_grade(cfg, ws, l);
  } else if (subcommand == "report") {
    run_report(cfg, ws);
  } else {
    fail(ErrorKind::Value, "unknown subcommand '" + subcommand + "'");
  }
  return 0;
}

} // namespace glymph::pipeline
