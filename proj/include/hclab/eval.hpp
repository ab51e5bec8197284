#pragma once

// Frozen-embedding evaluation protocols: nearest-prototype zero-shot,
// SimpleShot few-shot, logistic / two-layer probes, semi-supervised k-means
// with Hungarian matching, and the cross-variant alignment / differentiation
// tasks. Ties always break toward the lowest index.

#include <cstdint>
#include <string>
#include <vector>

#include "hclab/geometry.hpp"
#include "hclab/numeric.hpp"
#include "hclab/synth.hpp"

namespace hclab {

struct ClassBreakdown {
  std::size_t label = 0;
  std::size_t n = 0;
  std::size_t correct = 0;
};

struct EvalReport {
  std::string task;
  double accuracy = 0.0;
  std::size_t n = 0;
  std::size_t correct = 0;
  std::vector<ClassBreakdown> details;
};

/// accuracy = correct / n from per-row truth and prediction.
EvalReport make_report(std::string task, const std::vector<std::size_t>& truth, const std::vector<std::size_t>& pred);

struct ProbeConfig {
  double lr = 2.0;
  std::size_t steps = 300;
  double l2 = 1e-4;
  std::uint64_t seed = 0;
  std::size_t hidden = 0;  // 0 = logistic / softmax regression
};

EvalReport zero_shot_ncc(const Matrix& embs, const std::vector<std::size_t>& labels, const PrototypeSet& prototypes);

EvalReport simpleshot(const Matrix& support, const std::vector<std::size_t>& support_labels, const Matrix& query,
                      const std::vector<std::size_t>& query_labels, std::size_t k, std::uint64_t seed);

/// Single-label probe: softmax regression over the classes present in
/// training (binary labels reduce to logistic regression).
class LinearProbe {
 public:
  static LinearProbe fit(const Matrix& x, const std::vector<std::size_t>& y, const ProbeConfig& cfg);
  /// Class scores (n x classes).
  Matrix decision_function(const Matrix& x) const;
  std::vector<std::size_t> predict(const Matrix& x) const;
  const std::vector<std::size_t>& classes() const { return classes_; }

 private:
  std::vector<std::size_t> classes_;
  Matrix w1_;  // hidden x d, empty for the linear probe
  std::vector<double> b1_;
  Matrix w2_;  // classes x (d or hidden)
  std::vector<double> b2_;
};

EvalReport linear_probe(const Matrix& train, const std::vector<std::size_t>& train_labels, const Matrix& test,
                        const std::vector<std::size_t>& test_labels, const ProbeConfig& cfg);

/// Multi-label probe with per-label sigmoid + binary cross-entropy. A test row
/// counts as correct only when every label is predicted correctly.
EvalReport linear_probe_multilabel(const Matrix& train, const Matrix& train_labels, const Matrix& test,
                                   const Matrix& test_labels, const ProbeConfig& cfg);

/// Accuracy over unlabeled points: known class i <-> cluster i; novel
/// clusters are matched to novel classes by maximum-overlap assignment.
double clustering_accuracy(const std::vector<std::size_t>& cluster_of, const std::vector<std::size_t>& truth,
                           const std::vector<std::size_t>& known_classes, std::size_t k_total);

struct KMeansResult {
  EvalReport report;
  std::vector<std::size_t> unlabeled_clusters;
  std::size_t iterations = 0;
};

KMeansResult ssl_kmeans(const Matrix& labeled, const std::vector<std::size_t>& labels, const Matrix& unlabeled,
                        const std::vector<std::size_t>& unlabeled_truth, std::size_t k_total, std::uint64_t seed);

struct VariantTaskResult {
  EvalReport alignment;
  EvalReport differentiation;
};

/// `values` holds the variant value index of each row on the axis.
VariantTaskResult variant_tasks(const Matrix& embs, const std::vector<std::size_t>& species_ids,
                                const std::vector<int>& values, const std::vector<Split>& splits,
                                const std::string& axis, const ProbeConfig& probe);

}  // namespace hclab
