// Licensed under the Apache License 2.0 (see LICENSE file).

#include "tsync/evaluate.hpp"

#include <algorithm>
#include <cstdlib>
#include <unordered_map>
#include <unordered_set>

namespace tsync::eval {

Metrics evaluate(const std::vector<std::pair<std::size_t, std::size_t>>& predicted,
                 const corpus::GroundTruthAlignment& gt, std::size_t tolerance) {
  std::unordered_map<std::size_t, std::size_t> truth;
  for (const auto& [a, b] : gt.pairs) truth.emplace(a, b);

  Metrics m;
  m.predicted = predicted.size();
  std::unordered_set<std::size_t> seen;
  std::vector<double> offsets;
  std::size_t hits = 0;
  for (const auto& [a, b] : predicted) {
    auto it = truth.find(a);
    if (it == truth.end()) continue;
    seen.insert(a);
    const auto off = static_cast<double>(b > it->second ? b - it->second : it->second - b);
    offsets.push_back(off);
    if (off <= static_cast<double>(tolerance)) ++hits;
  }
  m.comparable = offsets.size();
  if (!truth.empty()) m.coverage = static_cast<double>(seen.size()) / static_cast<double>(truth.size());
  if (m.predicted > 0) m.hit_rate = static_cast<double>(hits) / static_cast<double>(m.predicted);
  if (!offsets.empty()) {
    double sum = 0.0;
    for (double o : offsets) sum += o;
    m.mean_offset = sum / static_cast<double>(offsets.size());
    std::sort(offsets.begin(), offsets.end());
    const std::size_t mid = offsets.size() / 2;
    m.median_offset = offsets.size() % 2 ? offsets[mid] : 0.5 * (offsets[mid - 1] + offsets[mid]);
  }
  return m;
}

}  // namespace tsync::eval
