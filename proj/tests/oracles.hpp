#pragma once

#include <algorithm>
#include <numeric>
#include <vector>

namespace oracles {

// Exhaustive maximum over injective novel-cluster -> novel-class maps.
inline double brute_accuracy(const std::vector<std::size_t>& cl, const std::vector<std::size_t>& truth, std::size_t n_known,
                      std::size_t k_total) {
  std::vector<std::size_t> novel;
  for (auto t : truth)
    if (t >= n_known) novel.push_back(t);
  std::sort(novel.begin(), novel.end());
  novel.erase(std::unique(novel.begin(), novel.end()), novel.end());
  const std::size_t nc = k_total - n_known;
  const std::size_t side = std::max(nc, novel.size());
  std::vector<std::size_t> perm(side);
  std::iota(perm.begin(), perm.end(), 0);
  std::size_t best = 0;
  do {
    std::size_t c = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
      if (truth[i] < n_known) {
        c += cl[i] == truth[i];
      } else if (cl[i] >= n_known && cl[i] < k_total) {
        const std::size_t cls = perm[cl[i] - n_known];
        c += cls < novel.size() && novel[cls] == truth[i];
      }
    }
    best = std::max(best, c);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return static_cast<double>(best) / static_cast<double>(truth.size());
}

}  // namespace oracles
