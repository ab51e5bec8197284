#pragma once

// Self-check suites run by `hclab verify` and the acceptance binary. Each
// suite synthesizes its own seeded instances and reports the first failing
// one as JSON.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "hclab/io.hpp"
#include "hclab/model.hpp"
#include "hclab/train.hpp"

namespace hclab {

struct SuiteResult {
  std::string suite;
  bool passed = false;
  std::string detail;
  Json failing_instance;  // null when passed
};

struct GradCheck {
  double max_rel_error = 0.0;
  std::string worst_block;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
  std::size_t entries = 0;
};

/// Central differences with step h on every trainable entry. The relative
/// error of an entry is |a - f| / max(|a|, |f|, floor).
GradCheck check_gradients(const ModelState& m, const Batch& batch, const ReplayBatch* replay, const TrainConfig& cfg,
                          double h = 1e-6, double floor = 1e-2);

/// The i-th seeded small configuration (d_in 8, d_emb 4, batch 6), cycling
/// through encoder, replay, label and temperature modes.
struct GradInstance {
  ModelState model;
  Batch batch;
  std::optional<ReplayBatch> replay;
  TrainConfig cfg;
  Json describe() const;
};
GradInstance gradient_instance(std::uint64_t seed, std::size_t i);

SuiteResult suite_gradient_fd(std::uint64_t seed, std::size_t configs = 20);
SuiteResult suite_hessian_span(std::uint64_t seed, std::size_t instances = 10);
SuiteResult suite_taylor_remainder(std::uint64_t seed, std::size_t instances = 10);
SuiteResult suite_first_order(std::uint64_t seed, std::size_t instances = 10);
/// Uses the checkpoint's textual prototypes when given, a seeded fresh model otherwise.
SuiteResult suite_span_orthogonality(const ModelState* checkpoint, std::uint64_t seed);
SuiteResult suite_qr(std::uint64_t seed);
SuiteResult suite_svd(std::uint64_t seed);
SuiteResult suite_hungarian(std::uint64_t seed);

std::vector<SuiteResult> run_verify(const ModelState* checkpoint, std::uint64_t seed);

}  // namespace hclab
