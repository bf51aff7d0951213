#pragma once

#include <string>

#include "glymph/config.hpp"
#include "glymph/workspace.hpp"

namespace glymph::pipeline {

/// Production scalar type; tests instantiate the templated core in double
/// where the contracts require it.
using Scalar = float;

void run_simulate(const ExperimentConfig& cfg, const Workspace& ws);
void run_preprocess(const ExperimentConfig& cfg, const Workspace& ws);
void run_train(const ExperimentConfig& cfg, const Workspace& ws, const std::string& label);
void run_predict(const ExperimentConfig& cfg, const Workspace& ws, const std::string& label);
void run_evaluate(const ExperimentConfig& cfg, const Workspace& ws, const std::string& label);
void run_grade(const ExperimentConfig& cfg, const Workspace& ws, const std::string& label);
void run_report(const ExperimentConfig& cfg, const Workspace& ws);

/// Gradient-check and oracle suite; returns the number of failed checks and
/// prints one line per check.
int run_selftest();

/// Routes one subcommand under the workspace lock, writing the resolved
/// configuration copy first. An empty label means "all active labels" for
/// the per-label stages. Returns a process exit status.
int dispatch(const std::string& subcommand, const ExperimentConfig& cfg, const std::string& label);

} // namespace glymph::pipeline
