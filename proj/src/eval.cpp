#include "hclab/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <set>

#include "hclab/kernels.hpp"

namespace hclab {

EvalReport make_report(std::string task, const std::vector<std::size_t>& truth, const std::vector<std::size_t>& pred) {
  if (truth.size() != pred.size()) throw Error(ErrorCode::DimensionMismatch, "truth/prediction lengths differ");
  EvalReport rep;
  rep.task = std::move(task);
  rep.n = truth.size();
  std::map<std::size_t, ClassBreakdown> per_class;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    auto& c = per_class[truth[i]];
    c.label = truth[i];
    ++c.n;
    if (pred[i] == truth[i]) {
      ++c.correct;
      ++rep.correct;
    }
  }
  for (const auto& [label, c] : per_class) rep.details.push_back(c);
  rep.accuracy = rep.n ? static_cast<double>(rep.correct) / static_cast<double>(rep.n) : 0.0;
  return rep;
}

namespace {

std::size_t argmax_row(std::span<const double> row) {
  std::size_t best = 0;
  for (std::size_t j = 1; j < row.size(); ++j)
    if (row[j] > row[best]) best = j;
  return best;
}

std::size_t nearest(std::span<const double> x, const Matrix& centers) {
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centers.rows(); ++c) {
    double d = 0.0;
    const auto row = centers.row(c);
    for (std::size_t k = 0; k < x.size(); ++k) d += (x[k] - row[k]) * (x[k] - row[k]);
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  return best;
}

Matrix take_rows(const Matrix& m, const std::vector<std::size_t>& rows) {
  Matrix out(rows.size(), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) std::copy(m.row(rows[i]).begin(), m.row(rows[i]).end(), out.row(i).begin());
  return out;
}

std::vector<double> column_sums(const Matrix& g) {
  std::vector<double> s(g.cols(), 0.0);
  for (std::size_t i = 0; i < g.rows(); ++i)
    for (std::size_t j = 0; j < g.cols(); ++j) s[j] += g(i, j);
  return s;
}

enum class Output { Softmax, Sigmoid };

// Shallow classifier trained by full-batch gradient descent on mean loss + l2.
struct Shallow {
  Matrix w1;
  std::vector<double> b1;
  Matrix w2;
  std::vector<double> b2;

  Matrix hidden(const Matrix& x) const {
    Matrix h = kernels::affine_rows(x, w1, b1);
    for (auto& v : h.data()) v = std::tanh(v);
    return h;
  }

  Matrix scores(const Matrix& x) const {
    if (w1.empty()) return kernels::affine_rows(x, w2, b2);
    return kernels::affine_rows(hidden(x), w2, b2);
  }
};

Shallow train_shallow(const Matrix& x, const Matrix& targets, Output out, const ProbeConfig& cfg) {
  const std::size_t n = x.rows();
  const std::size_t d = x.cols();
  const std::size_t c = targets.cols();
  Shallow net;
  Rng rng(cfg.seed);
  if (cfg.hidden > 0) {
    net.w1 = Matrix::gaussian(cfg.hidden, d, rng, 1.0 / std::sqrt(static_cast<double>(d)));
    net.b1.assign(cfg.hidden, 0.0);
    net.w2 = Matrix::gaussian(c, cfg.hidden, rng, 1.0 / std::sqrt(static_cast<double>(cfg.hidden)));
  } else {
    net.w2 = Matrix(c, d);
  }
  net.b2.assign(c, 0.0);
  const double inv_n = 1.0 / static_cast<double>(n);

  for (std::size_t step = 0; step < cfg.steps; ++step) {
    Matrix h;
    if (!net.w1.empty()) h = net.hidden(x);
    const Matrix& feats = net.w1.empty() ? x : h;
    Matrix g = kernels::affine_rows(feats, net.w2, net.b2);
    for (std::size_t i = 0; i < n; ++i) {
      auto row = g.row(i);
      if (out == Output::Softmax) {
        const double mx = *std::max_element(row.begin(), row.end());
        double z = 0.0;
        for (auto& v : row) z += (v = std::exp(v - mx));
        for (std::size_t j = 0; j < c; ++j) row[j] = (row[j] / z - targets(i, j)) * inv_n;
      } else {
        for (std::size_t j = 0; j < c; ++j) row[j] = (1.0 / (1.0 + std::exp(-row[j])) - targets(i, j)) * inv_n;
      }
    }
    Matrix dw2 = kernels::matmul_atb(g, feats);
    const auto db2 = column_sums(g);
    if (!net.w1.empty()) {
      Matrix dh = kernels::matmul_ab(g, net.w2);
      for (std::size_t i = 0; i < dh.data().size(); ++i) dh.data()[i] *= 1.0 - h.data()[i] * h.data()[i];
      Matrix dw1 = kernels::matmul_atb(dh, x);
      const auto db1 = column_sums(dh);
      for (std::size_t i = 0; i < dw1.data().size(); ++i)
        net.w1.data()[i] -= cfg.lr * (dw1.data()[i] + cfg.l2 * net.w1.data()[i]);
      for (std::size_t i = 0; i < db1.size(); ++i) net.b1[i] -= cfg.lr * db1[i];
    }
    for (std::size_t i = 0; i < dw2.data().size(); ++i)
      net.w2.data()[i] -= cfg.lr * (dw2.data()[i] + cfg.l2 * net.w2.data()[i]);
    for (std::size_t i = 0; i < db2.size(); ++i) net.b2[i] -= cfg.lr * db2[i];
  }
  return net;
}

}  // namespace

EvalReport zero_shot_ncc(const Matrix& embs, const std::vector<std::size_t>& labels, const PrototypeSet& prototypes) {
  if (labels.size() != embs.rows()) throw Error(ErrorCode::DimensionMismatch, "one label per embedding");
  const std::set<std::size_t> known(prototypes.species_ids.begin(), prototypes.species_ids.end());
  for (std::size_t l : labels)
    if (!known.count(l)) throw Error(ErrorCode::MissingPrototype, "no prototype for species " + std::to_string(l));
  const Matrix sims = kernels::matmul_abt(embs, prototypes.mu);
  std::vector<std::size_t> pred(embs.rows());
  for (std::size_t i = 0; i < embs.rows(); ++i) pred[i] = prototypes.species_ids[argmax_row(sims.row(i))];
  return make_report("zeroshot", labels, pred);
}

EvalReport simpleshot(const Matrix& support, const std::vector<std::size_t>& support_labels, const Matrix& query,
                      const std::vector<std::size_t>& query_labels, std::size_t k, std::uint64_t seed) {
  if (k == 0) throw Error(ErrorCode::InsufficientSupport, "k must be >= 1");
  if (support_labels.size() != support.rows() || query_labels.size() != query.rows())
    throw Error(ErrorCode::DimensionMismatch, "one label per row");
  std::map<std::size_t, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < support_labels.size(); ++i) by_class[support_labels[i]].push_back(i);

  Rng rng(seed);
  std::vector<std::size_t> classes;
  std::vector<std::vector<std::size_t>> chosen;
  for (auto& [label, rows] : by_class) {
    if (rows.size() < k) {
      throw Error(ErrorCode::InsufficientSupport,
                  "class " + std::to_string(label) + " has " + std::to_string(rows.size()) + " < k support points");
    }
    // Partial Fisher-Yates keeps the draw order independent of later classes.
    for (std::size_t i = 0; i < k && rows.size() > k; ++i) std::swap(rows[i], rows[i + rng.index(rows.size() - i)]);
    std::vector<std::size_t> pick(rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(k));
    std::sort(pick.begin(), pick.end());
    classes.push_back(label);
    chosen.push_back(std::move(pick));
  }

  // CL2N: subtract the support mean, then L2-normalize.
  std::vector<double> mean(support.cols(), 0.0);
  std::size_t total = 0;
  for (const auto& rows : chosen)
    for (std::size_t r : rows) {
      for (std::size_t j = 0; j < mean.size(); ++j) mean[j] += support(r, j);
      ++total;
    }
  for (auto& v : mean) v /= static_cast<double>(total);
  auto transform = [&](std::span<const double> x) {
    std::vector<double> v(x.begin(), x.end());
    for (std::size_t j = 0; j < v.size(); ++j) v[j] -= mean[j];
    const double n = norm2(v);
    if (n > 0.0)
      for (auto& e : v) e /= n;
    return v;
  };

  Matrix centroids(classes.size(), support.cols());
  for (std::size_t c = 0; c < classes.size(); ++c) {
    auto row = centroids.row(c);
    for (std::size_t r : chosen[c]) {
      const auto v = transform(support.row(r));
      for (std::size_t j = 0; j < v.size(); ++j) row[j] += v[j];
    }
    for (auto& v : row) v /= static_cast<double>(chosen[c].size());
  }
  std::vector<std::size_t> pred(query.rows());
  for (std::size_t i = 0; i < query.rows(); ++i) pred[i] = classes[nearest(transform(query.row(i)), centroids)];
  return make_report("fewshot", query_labels, pred);
}

LinearProbe LinearProbe::fit(const Matrix& x, const std::vector<std::size_t>& y, const ProbeConfig& cfg) {
  if (y.size() != x.rows()) throw Error(ErrorCode::DimensionMismatch, "one label per training row");
  if (cfg.steps == 0) throw Error(ErrorCode::ConfigInvalid, "probe steps must be >= 1");
  LinearProbe p;
  p.classes_ = y;
  std::sort(p.classes_.begin(), p.classes_.end());
  p.classes_.erase(std::unique(p.classes_.begin(), p.classes_.end()), p.classes_.end());
  if (p.classes_.size() < 2) throw Error(ErrorCode::SingleClassTrain, "probe training data has a single class");
  Matrix targets(x.rows(), p.classes_.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    const auto it = std::lower_bound(p.classes_.begin(), p.classes_.end(), y[i]);
    targets(i, static_cast<std::size_t>(it - p.classes_.begin())) = 1.0;
  }
  Shallow net = train_shallow(x, targets, Output::Softmax, cfg);
  p.w1_ = std::move(net.w1);
  p.b1_ = std::move(net.b1);
  p.w2_ = std::move(net.w2);
  p.b2_ = std::move(net.b2);
  return p;
}

Matrix LinearProbe::decision_function(const Matrix& x) const {
  Shallow net{w1_, b1_, w2_, b2_};
  return net.scores(x);
}

std::vector<std::size_t> LinearProbe::predict(const Matrix& x) const {
  const Matrix s = decision_function(x);
  std::vector<std::size_t> out(x.rows());
  for (std::size_t i = 0; i < x.rows(); ++i) out[i] = classes_[argmax_row(s.row(i))];
  return out;
}

EvalReport linear_probe(const Matrix& train, const std::vector<std::size_t>& train_labels, const Matrix& test,
                        const std::vector<std::size_t>& test_labels, const ProbeConfig& cfg) {
  const auto probe = LinearProbe::fit(train, train_labels, cfg);
  return make_report("probe", test_labels, probe.predict(test));
}

EvalReport linear_probe_multilabel(const Matrix& train, const Matrix& train_labels, const Matrix& test,
                                   const Matrix& test_labels, const ProbeConfig& cfg) {
  if (train_labels.rows() != train.rows() || test_labels.rows() != test.rows() ||
      train_labels.cols() != test_labels.cols())
    throw Error(ErrorCode::DimensionMismatch, "multi-label shapes");
  for (std::size_t j = 0; j < train_labels.cols(); ++j) {
    bool pos = false, neg = false;
    for (std::size_t i = 0; i < train_labels.rows(); ++i) (train_labels(i, j) > 0.5 ? pos : neg) = true;
    if (!pos || !neg) throw Error(ErrorCode::SingleClassTrain, "label " + std::to_string(j) + " has a single class");
  }
  const Shallow net = train_shallow(train, train_labels, Output::Sigmoid, cfg);
  const Matrix s = net.scores(test);
  std::vector<std::size_t> truth(test.rows(), 1), pred(test.rows(), 1);
  for (std::size_t i = 0; i < test.rows(); ++i)
    for (std::size_t j = 0; j < s.cols(); ++j)
      if ((s(i, j) > 0.0) != (test_labels(i, j) > 0.5)) pred[i] = 0;
  auto rep = make_report("probe_multilabel", truth, pred);
  rep.details.clear();
  return rep;
}

double clustering_accuracy(const std::vector<std::size_t>& cluster_of, const std::vector<std::size_t>& truth,
                           const std::vector<std::size_t>& known_classes, std::size_t k_total) {
  if (cluster_of.size() != truth.size()) throw Error(ErrorCode::DimensionMismatch, "cluster/truth lengths");
  if (truth.empty()) return 0.0;
  const std::size_t n_known = known_classes.size();
  std::map<std::size_t, std::size_t> known_index;
  for (std::size_t i = 0; i < n_known; ++i) known_index[known_classes[i]] = i;

  std::vector<std::size_t> novel;
  for (std::size_t t : truth)
    if (!known_index.count(t)) novel.push_back(t);
  std::sort(novel.begin(), novel.end());
  novel.erase(std::unique(novel.begin(), novel.end()), novel.end());
  const std::size_t n_novel_clusters = k_total > n_known ? k_total - n_known : 0;

  std::size_t correct = 0;
  const std::size_t side = std::max(novel.size(), n_novel_clusters);
  Matrix overlap(side, side);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const auto it = known_index.find(truth[i]);
    if (it != known_index.end()) {
      if (cluster_of[i] == it->second) ++correct;
      continue;
    }
    if (cluster_of[i] < n_known || cluster_of[i] >= k_total) continue;
    const auto cls = static_cast<std::size_t>(std::lower_bound(novel.begin(), novel.end(), truth[i]) - novel.begin());
    overlap(cluster_of[i] - n_known, cls) -= 1.0;
  }
  if (side > 0) {
    const auto match = hungarian_assign(overlap);
    correct += static_cast<std::size_t>(std::llround(-match.cost));
  }
  return static_cast<double>(correct) / static_cast<double>(truth.size());
}

KMeansResult ssl_kmeans(const Matrix& labeled, const std::vector<std::size_t>& labels, const Matrix& unlabeled,
                        const std::vector<std::size_t>& unlabeled_truth, std::size_t k_total, std::uint64_t seed) {
  if (labels.size() != labeled.rows() || unlabeled_truth.size() != unlabeled.rows())
    throw Error(ErrorCode::DimensionMismatch, "one label per row");
  if (labeled.rows() && unlabeled.rows() && labeled.cols() != unlabeled.cols())
    throw Error(ErrorCode::DimensionMismatch, "labeled/unlabeled dimensions");
  std::vector<std::size_t> known(labels);
  std::sort(known.begin(), known.end());
  known.erase(std::unique(known.begin(), known.end()), known.end());
  if (k_total < known.size() || k_total == 0) {
    throw Error(ErrorCode::KTooSmall, "k_total=" + std::to_string(k_total) + " < " + std::to_string(known.size()) +
                                          " labeled classes");
  }
  const std::size_t d = labeled.rows() ? labeled.cols() : unlabeled.cols();
  std::vector<std::size_t> labeled_cluster(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i)
    labeled_cluster[i] = static_cast<std::size_t>(std::lower_bound(known.begin(), known.end(), labels[i]) - known.begin());

  Matrix centroids(k_total, d);
  std::vector<std::size_t> counts(k_total, 0);
  for (std::size_t i = 0; i < labeled.rows(); ++i) {
    auto row = centroids.row(labeled_cluster[i]);
    for (std::size_t j = 0; j < d; ++j) row[j] += labeled(i, j);
    ++counts[labeled_cluster[i]];
  }
  for (std::size_t c = 0; c < known.size(); ++c)
    for (auto& v : centroids.row(c)) v /= static_cast<double>(counts[c]);

  // k-means++ over the unlabeled points for the remaining clusters.
  Rng rng(seed);
  for (std::size_t c = known.size(); c < k_total; ++c) {
    if (unlabeled.rows() == 0) break;
    std::vector<double> dist(unlabeled.rows(), std::numeric_limits<double>::infinity());
    for (std::size_t i = 0; i < unlabeled.rows(); ++i)
      for (std::size_t e = 0; e < c; ++e) {
        double s = 0.0;
        for (std::size_t j = 0; j < d; ++j) s += (unlabeled(i, j) - centroids(e, j)) * (unlabeled(i, j) - centroids(e, j));
        dist[i] = std::min(dist[i], s);
      }
    if (c == 0) std::fill(dist.begin(), dist.end(), 1.0);
    const double total = ordered_sum(dist);
    std::size_t pick = 0;
    if (total > 0.0) {
      const double target = rng.uniform() * total;
      double acc = 0.0;
      pick = unlabeled.rows() - 1;
      for (std::size_t i = 0; i < unlabeled.rows(); ++i) {
        acc += dist[i];
        if (acc > target) {
          pick = i;
          break;
        }
      }
    }
    std::copy(unlabeled.row(pick).begin(), unlabeled.row(pick).end(), centroids.row(c).begin());
  }

  KMeansResult res;
  std::vector<std::size_t> assign(unlabeled.rows(), k_total);
  for (res.iterations = 0; res.iterations < 100;) {
    bool changed = false;
    for (std::size_t i = 0; i < unlabeled.rows(); ++i) {
      const std::size_t c = nearest(unlabeled.row(i), centroids);
      if (c != assign[i]) {
        assign[i] = c;
        changed = true;
      }
    }
    ++res.iterations;
    if (!changed) break;
    Matrix next(k_total, d);
    std::fill(counts.begin(), counts.end(), 0);
    for (std::size_t i = 0; i < labeled.rows(); ++i) {
      auto row = next.row(labeled_cluster[i]);
      for (std::size_t j = 0; j < d; ++j) row[j] += labeled(i, j);
      ++counts[labeled_cluster[i]];
    }
    for (std::size_t i = 0; i < unlabeled.rows(); ++i) {
      auto row = next.row(assign[i]);
      for (std::size_t j = 0; j < d; ++j) row[j] += unlabeled(i, j);
      ++counts[assign[i]];
    }
    for (std::size_t c = 0; c < k_total; ++c) {
      if (counts[c] == 0) continue;  // empty cluster keeps its centroid
      for (std::size_t j = 0; j < d; ++j) centroids(c, j) = next(c, j) / static_cast<double>(counts[c]);
    }
  }

  res.unlabeled_clusters = assign;
  const double acc = clustering_accuracy(assign, unlabeled_truth, known, k_total);
  res.report.task = "discovery";
  res.report.n = unlabeled.rows();
  res.report.correct = static_cast<std::size_t>(std::llround(acc * static_cast<double>(unlabeled.rows())));
  res.report.accuracy = res.report.n ? static_cast<double>(res.report.correct) / static_cast<double>(res.report.n) : 0.0;
  return res;
}

VariantTaskResult variant_tasks(const Matrix& embs, const std::vector<std::size_t>& species_ids,
                                const std::vector<int>& values, const std::vector<Split>& splits,
                                const std::string& axis, const ProbeConfig& probe) {
  const std::size_t n = embs.rows();
  if (species_ids.size() != n || values.size() != n || splits.size() != n)
    throw Error(ErrorCode::DimensionMismatch, "variant_tasks: per-row labels must match embeddings");

  // Alignment on held-out rows: species means from value 0, queries from value 1.
  std::map<std::size_t, std::array<std::vector<std::size_t>, 2>> groups;
  for (std::size_t i = 0; i < n; ++i)
    if (splits[i] == Split::Test && (values[i] == 0 || values[i] == 1))
      groups[species_ids[i]][static_cast<std::size_t>(values[i])].push_back(i);
  std::vector<std::size_t> qualifying;
  for (const auto& [sid, g] : groups)
    if (!g[0].empty() && !g[1].empty()) qualifying.push_back(sid);
  if (qualifying.size() < 2) {
    throw Error(ErrorCode::NoQualifyingSpecies,
                "axis '" + axis + "' needs >= 2 species with both values in the test split");
  }
  Matrix means(qualifying.size(), embs.cols());
  std::vector<std::size_t> truth, pred;
  for (std::size_t c = 0; c < qualifying.size(); ++c) {
    const auto& rows = groups[qualifying[c]][0];
    auto row = means.row(c);
    for (std::size_t r : rows)
      for (std::size_t j = 0; j < row.size(); ++j) row[j] += embs(r, j);
    for (auto& v : row) v /= static_cast<double>(rows.size());
  }
  for (std::size_t c = 0; c < qualifying.size(); ++c)
    for (std::size_t r : groups[qualifying[c]][1]) {
      truth.push_back(qualifying[c]);
      pred.push_back(qualifying[nearest(embs.row(r), means)]);
    }
  VariantTaskResult out;
  out.alignment = make_report("alignment:" + axis, truth, pred);

  // Differentiation: pooled-species probe on the variant value.
  std::vector<std::size_t> tr, te;
  std::vector<std::size_t> ytr, yte;
  for (std::size_t i = 0; i < n; ++i) {
    if (values[i] != 0 && values[i] != 1) continue;
    if (splits[i] == Split::Train) {
      tr.push_back(i);
      ytr.push_back(static_cast<std::size_t>(values[i]));
    } else {
      te.push_back(i);
      yte.push_back(static_cast<std::size_t>(values[i]));
    }
  }
  out.differentiation = linear_probe(take_rows(embs, tr), ytr, take_rows(embs, te), yte, probe);
  out.differentiation.task = "differentiation:" + axis;
  return out;
}

}  // namespace hclab
