#pragma once

// End-to-end compositions used by the CLI: the evaluation suite on a trained
// checkpoint and the nested-scale sweep.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "hclab/eval.hpp"
#include "hclab/geometry.hpp"
#include "hclab/io.hpp"
#include "hclab/model.hpp"
#include "hclab/train.hpp"

namespace hclab {

enum class EvalTask { ZeroShot, FewShot, Probe, Discovery, Variants };

EvalTask parse_eval_task(const std::string& name);

/// Reports for one task on the test split. Variants yields an alignment and a
/// differentiation report per axis; the others yield one report.
std::vector<EvalReport> run_eval(EvalTask task, const ModelState& m, const Dataset& ds, std::size_t k,
                                 const ProbeConfig& probe, std::uint64_t seed);

struct ScaleResult {
  std::size_t scale = 0;
  ModelState model;
  std::vector<MetricsRow> metrics;
  GeometryReport report;
  std::vector<EvalReport> evals;
  double zeroshot_acc = 0.0;
  double alignment = 0.0;  // mean over axes
  double differentiation = 0.0;
  std::optional<FdrResult> attribute_fdr_init;
};

/// Subsample, train from the shared init, analyze and evaluate one scale.
ScaleResult run_scale(const RunConfig& cfg, const Dataset& full, std::size_t scale);

std::string trend_csv_header(const SynthConfig& synth);
std::string trend_csv_row(const ScaleResult& r);
std::string eval_csv(const std::vector<ScaleResult>& results, std::uint64_t seed);

/// Runs every scale and writes trend.csv, eval.csv and per-scale files under
/// `out_dir`. trend.csv is rewritten after each scale.
std::vector<ScaleResult> run_sweep(const RunConfig& cfg, const std::filesystem::path& out_dir);

}  // namespace hclab
