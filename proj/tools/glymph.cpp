// glymph: synthetic CSF-tracer workbench (simulate, preprocess, train,
// predict, evaluate, grade, report, selftest).

#include <CLI11.hpp>

#include <malloc.h>

#include <cstdint>
#include <iostream>

#include "glymph/config.hpp"
#include "glymph/pipeline.hpp"

int main(int argc, char** argv) {
  // large tensors churn through the allocator; keep freed arenas mapped
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);

  CLI::App app{"glymph: desk-scale CSF tracer distribution workbench"};
  app.require_subcommand(1);

  std::string config_path;
  std::string workspace;
  std::string label;
  std::int64_t seed = -1;
  app.add_option("--config", config_path, "experiment configuration file (key = value lines)");
  app.add_option("--workspace", workspace, "workspace directory (overrides paths.workspace)");
  app.add_option("--seed", seed,
                 "master seed override: cohort/split/model/training seeds become n..n+3");
  app.add_option("--label", label, "ablation label for the per-label stages");

  for (const char* name : {"simulate", "preprocess", "train", "predict", "evaluate", "grade",
                           "report", "selftest"})
    app.add_subcommand(name);

  CLI11_PARSE(app, argc, argv);

  try {
    glymph::ExperimentConfig cfg =
        config_path.empty() ? glymph::ExperimentConfig{} : glymph::load_config(config_path);
    if (!workspace.empty()) cfg.workspace = workspace;
    if (seed >= 0) cfg.override_master_seed(static_cast<std::uint64_t>(seed));
    const std::string subcommand = app.get_subcommands().front()->get_name();
    return glymph::pipeline::dispatch(subcommand, cfg, label);
  } catch (const glymph::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
