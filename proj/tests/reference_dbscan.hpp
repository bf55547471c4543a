#pragma once

// Brute-force DBSCAN used as a test oracle. Written from the definition
// rather than as a traversal: core points are found by exhaustive distance
// checks, clusters are connected components of the core graph (union-find),
// and clusters are numbered by their lowest core index. A border point
// belongs to the lowest-numbered cluster among its core neighbours, which is
// what breadth-first expansion in index order produces.

#include <algorithm>
#include <numeric>
#include <vector>

#include "ramp3d/geometry.hpp"

namespace ramp3d::testing {

inline std::vector<int> reference_dbscan(const std::vector<Vec3>& pts, double eps, int min_pts) {
  const std::size_t n = pts.size();
  auto near = [&](std::size_t i, std::size_t j) {
    const Vec3 d = pts[i] - pts[j];
    return dot(d, d) <= eps * eps;
  };
  std::vector<bool> core(n, false);
  for (std::size_t i = 0; i < n; ++i) {
    int count = 0;
    for (std::size_t j = 0; j < n; ++j) count += near(i, j) ? 1 : 0;
    core[i] = count >= min_pts;
  }
  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (core[i] && core[j] && near(i, j)) {
        const std::size_t a = find(i), b = find(j);
        parent[std::max(a, b)] = std::min(a, b);
      }
  // roots are the lowest core index of each component; number them in order
  std::vector<int> number(n, -1);
  int next = 0;
  for (std::size_t i = 0; i < n; ++i)
    if (core[i] && find(i) == i) number[i] = next++;
  std::vector<int> label(n, -1);
  for (std::size_t i = 0; i < n; ++i) {
    if (core[i]) {
      label[i] = number[find(i)];
      continue;
    }
    int best = -1;
    for (std::size_t j = 0; j < n; ++j)
      if (core[j] && near(i, j)) {
        const int c = number[find(j)];
        if (best < 0 || c < best) best = c;
      }
    label[i] = best;
  }
  return label;
}

/// Largest cluster by size, ties to the cluster containing the lowest index.
inline std::vector<std::size_t> reference_largest(const std::vector<int>& label) {
  int clusters = 0;
  for (int l : label) clusters = std::max(clusters, l + 1);
  if (clusters == 0) return {};
  std::vector<std::size_t> size(static_cast<std::size_t>(clusters), 0);
  for (int l : label)
    if (l >= 0) ++size[static_cast<std::size_t>(l)];
  // cluster numbers follow lowest core index, but the lowest member may be a
  // border point, so compute it explicitly
  std::vector<std::size_t> first(size.size(), label.size());
  for (std::size_t i = 0; i < label.size(); ++i)
    if (label[i] >= 0) first[static_cast<std::size_t>(label[i])] = std::min(first[static_cast<std::size_t>(label[i])], i);
  std::size_t best = 0;
  for (std::size_t c = 1; c < size.size(); ++c)
    if (size[c] > size[best] || (size[c] == size[best] && first[c] < first[best])) best = c;
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < label.size(); ++i)
    if (label[i] == static_cast<int>(best)) out.push_back(i);
  return out;
}

}  // namespace ramp3d::testing
