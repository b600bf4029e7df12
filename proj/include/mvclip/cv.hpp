#pragma once

// Stratified k-fold splits over case indices.

#include <algorithm>
#include <span>
#include <string>
#include <vector>

#include "mvclip/errors.hpp"
#include "mvclip/util.hpp"

namespace mvclip {

struct FoldSplit {
  std::size_t index = 0;
  std::vector<std::size_t> train;       // case indices, ascending
  std::vector<std::size_t> validation;  // case indices, ascending
};

// Each class is shuffled with its own seeded stream and dealt round-robin over
// the folds, the negatives continuing where the positives stopped, so fold
// sizes differ by at most one and per-fold class counts by at most one.
inline std::vector<FoldSplit> kfold_split(std::span<const int> labels, std::size_t k, std::uint64_t seed) {
  if (k == 0) throw ValidationError("kfold_split: k must be positive");
  if (k > labels.size()) {
    throw ValidationError("kfold_split: k = " + std::to_string(k) + " exceeds " + std::to_string(labels.size()) +
                          " cases");
  }
  std::vector<std::size_t> pos, neg;
  for (std::size_t i = 0; i < labels.size(); ++i) (labels[i] == 1 ? pos : neg).push_back(i);
  Rng rng_pos(derive_seed(seed, "kfold.positive"));
  Rng rng_neg(derive_seed(seed, "kfold.negative"));
  std::shuffle(pos.begin(), pos.end(), rng_pos);
  std::shuffle(neg.begin(), neg.end(), rng_neg);

  std::vector<std::size_t> fold_of(labels.size());
  std::size_t slot = 0;
  for (std::size_t i : pos) fold_of[i] = slot++ % k;
  for (std::size_t i : neg) fold_of[i] = slot++ % k;

  std::vector<FoldSplit> folds(k);
  for (std::size_t f = 0; f < k; ++f) folds[f].index = f;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    for (std::size_t f = 0; f < k; ++f) (fold_of[i] == f ? folds[f].validation : folds[f].train).push_back(i);
  }
  return folds;
}

}  // namespace mvclip
