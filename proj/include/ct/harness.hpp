#pragma once

#include "ct/metrics.hpp"
#include "ct/scenario.hpp"

namespace ct {

struct RunRecord {
  Scenario scenario;
  EvalReport report;
  double wall_time_s = 0.0;
  int iterations = 0;  // optimization iterations executed across all windows
  std::string trajectory_path;
  int peak_adjoint_pixels = 0;  // pixels allowed to carry adjoints per iteration

  // canonical form zeroes the wall time so records can be compared bit-wise
  // across deterministic re-runs
  std::string to_json(bool canonical = false) const;
};

// Video copying task: reference rendered on ref_scene along the ground-truth
// motion, optimization on target_scene, metrics against the known trajectory.
RunRecord cmd_copy_task(const Scenario& scenario, const std::string& out_dir);

struct ParamAblation {
  std::string kind;  // "time" | "focal"
  std::vector<double> method_errors;   // one per run: mean |recovered - gt| over the clip
  std::vector<double> control_errors;  // parameter held at its random init
  double method_median = 0.0;
  double control_median = 0.0;
  std::string to_json() const;
};

// Recovery of the timing / focal parameter from clips where only that
// parameter varies; each run draws a fresh random initial value.
ParamAblation cmd_ablate_param(const std::string& kind, int runs, int clip_len,
                               const Scenario& base, const std::string& out_dir);

struct GuidanceSweepRow {
  int n = 0;
  double ate_mean = 0.0;
  double ate_std = 0.0;
  double je_mean = 0.0;
  int peak_adjoint_pixels = 0;
};

std::vector<GuidanceSweepRow> cmd_ablate_guidance(const std::vector<int>& sample_counts,
                                                  const Scenario& base, int seeds,
                                                  const std::string& out_dir);

struct LandscapeResult {
  Tensor grid;
  std::string matrix_path;
};

LandscapeResult cmd_landscape(LandscapeLoss kind, const Scenario& base,
                              const std::string& out_dir);

// Interpolates the trajectory to fps_multiplier x keyframes, renders the
// frames and writes the tabular trajectory export next to them.
void cmd_render_export(const std::string& trajectory_path, const std::string& scene_name,
                       int fps_multiplier, const Scenario& base, const std::string& out_dir);

double median(std::vector<double> v);

}  // namespace ct
