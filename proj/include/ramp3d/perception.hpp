#pragma once

// Labeled point clouds, ground-truth action masks and mask-space geometry:
// instance projection, DBSCAN filtering, centroid, IoU, top-down depth
// rendering and 2D-to-3D backprojection.

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <istream>
#include <limits>
#include <numbers>
#include <numeric>
#include <optional>
#include <ostream>
#include <string>
#include <unordered_map>
#include <vector>

#include "canonical_json.hpp"
#include "error.hpp"
#include "geometry.hpp"
#include "rng.hpp"
#include "scene_gen.hpp"
#include "warehouse.hpp"

namespace ramp3d {

enum class SemanticClass : std::uint8_t { kBox = 0, kPalletCell = 1, kShelfCell = 2, kDistractor = 3, kFloor = 4 };

constexpr std::string_view to_string(SemanticClass c) {
  switch (c) {
    case SemanticClass::kBox: return "box";
    case SemanticClass::kPalletCell: return "pallet-cell";
    case SemanticClass::kShelfCell: return "shelf-cell";
    case SemanticClass::kDistractor: return "distractor";
    case SemanticClass::kFloor: return "floor";
  }
  return "?";
}

inline constexpr std::uint8_t kNoColor = 255;

struct LabeledPointCloud {
  std::vector<Vec3> points;
  std::vector<EntityId> instance;
  std::vector<SemanticClass> semantic;
  std::vector<std::uint8_t> color;  // Color for box points, kNoColor otherwise
  double resolution = 0.05;
  double floor_resolution = 0.25;

  std::size_t size() const { return points.size(); }
  void push(const Vec3& p, EntityId id, SemanticClass cls, std::uint8_t c = kNoColor) {
    points.push_back(p);
    instance.push_back(id);
    semantic.push_back(cls);
    color.push_back(c);
  }
  bool operator==(const LabeledPointCloud&) const = default;
};

struct CloudConfig {
  double resolution = 0.05;
  double floor_resolution = 0.25;  // floor points are sparser; they are never action targets
  std::uint64_t seed = 0;
};

namespace detail {

inline int strata(double extent, double resolution) {
  return std::max(1, static_cast<int>(std::lround(extent / resolution)));
}

// Jittered n x n grid over a square of side `size` centred at the origin of
// the (a, b) plane.
template <class Emit>
void sample_square(Rng& rng, double size, double resolution, Emit&& emit) {
  const int n = strata(size, resolution);
  const double step = size / n;
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < n; ++j) {
      const double a = -0.5 * size + (i + rng.uniform01()) * step;
      const double b = -0.5 * size + (j + rng.uniform01()) * step;
      emit(a, b);
    }
}

inline void sample_box(LabeledPointCloud& cloud, Rng rng, const BoxItem& box, double size, double resolution) {
  const Yaw2 yaw = Yaw2::from_radians(box.yaw);
  const double h = 0.5 * size;
  const auto color = static_cast<std::uint8_t>(box.color);
  auto put = [&](Vec3 local) { cloud.push(box.position + yaw.rotate(local), box.id, SemanticClass::kBox, color); };
  for (double sign : {-1.0, 1.0}) {
    sample_square(rng, size, resolution, [&](double a, double b) { put({sign * h, a, b}); });
    sample_square(rng, size, resolution, [&](double a, double b) { put({a, sign * h, b}); });
    sample_square(rng, size, resolution, [&](double a, double b) { put({a, b, sign * h}); });
  }
}

inline void sample_cylinder(LabeledPointCloud& cloud, Rng rng, const Distractor& d, double resolution) {
  const double r = d.radius();
  const double height = d.height();
  const int n_theta = std::max(8, strata(2.0 * std::numbers::pi * r, resolution));
  const int n_z = strata(height, resolution);
  for (int i = 0; i < n_theta; ++i)
    for (int j = 0; j < n_z; ++j) {
      const double theta = (i + rng.uniform01()) * 2.0 * std::numbers::pi / n_theta;
      const double z = (j + rng.uniform01()) * height / n_z;
      cloud.push({d.position.x + r * std::cos(theta), d.position.y + r * std::sin(theta), z}, d.id,
                 SemanticClass::kDistractor);
    }
  sample_square(rng, 2.0 * r, resolution, [&](double a, double b) {
    if (a * a + b * b <= r * r)
      cloud.push({d.position.x + a, d.position.y + b, height}, d.id, SemanticClass::kDistractor);
  });
}

}  // namespace detail

/// Omniscient stratified sampling of every exposed surface. Each entity draws
/// from its own stream split(seed, entity id), so moving one box leaves every
/// other entity's points unchanged. Point order: boxes, empty-cell deck
/// patches, distractors, floor.
inline LabeledPointCloud synthesize_cloud(const SceneState& state, const CloudConfig& cfg = {}) {
  if (!(cfg.resolution > 0.0) || !(cfg.floor_resolution > 0.0))
    throw Error(ErrorCode::kInvalidArgument, "resolution must be positive");
  const Rng root(cfg.seed);
  const auto& g = state.geometry;
  LabeledPointCloud cloud;
  cloud.resolution = cfg.resolution;
  cloud.floor_resolution = cfg.floor_resolution;
  for (const auto& b : state.boxes) detail::sample_box(cloud, root.split(b.id), b, g.box_size, cfg.resolution);
  for (const auto& s : state.surfaces) {
    const Yaw2 yaw = s.rotation();
    const SemanticClass cls = is_pallet(s.kind) ? SemanticClass::kPalletCell : SemanticClass::kShelfCell;
    for (const auto& c : s.cells) {
      if (!c.occupants.empty()) continue;
      Rng rng = root.split(c.id);
      detail::sample_square(rng, g.box_size, cfg.resolution, [&](double a, double b) {
        cloud.push(c.center + yaw.rotate({a, b, 0.0}), c.id, cls);
      });
    }
  }
  for (const auto& d : state.distractors) detail::sample_cylinder(cloud, root.split(d.id), d, cfg.resolution);
  Rng floor_rng = root.split(kFloorId);
  detail::sample_square(floor_rng, 2.0 * g.floor_half_extent, cfg.floor_resolution,
                        [&](double a, double b) { cloud.push({a, b, 0.0}, kFloorId, SemanticClass::kFloor); });
  return cloud;
}

inline LabeledPointCloud synthesize_cloud(const SceneState& state, double resolution, std::uint64_t seed) {
  CloudConfig cfg;
  cfg.resolution = resolution;
  cfg.seed = seed;
  return synthesize_cloud(state, cfg);
}

// ---------------------------------------------------------------- masks

using Mask = std::vector<bool>;

namespace detail {

// libstdc++ stores vector<bool> as whole words, least significant bit first.
// Other libraries take the per-bit path.
#if defined(__GLIBCXX__)
inline constexpr bool kWordMasks = true;
inline constexpr std::size_t kMaskWordBits = 8 * sizeof(std::_Bit_type);

inline std::size_t mask_word_count(const Mask& m) { return (m.size() + kMaskWordBits - 1) / kMaskWordBits; }

/// Word k with bits past the end cleared.
inline std::_Bit_type mask_word(const Mask& m, std::size_t k) {
  const std::_Bit_type w = m.begin()._M_p[k];
  const std::size_t tail = m.size() - k * kMaskWordBits;
  return tail >= kMaskWordBits ? w : w & ((std::_Bit_type{1} << tail) - 1);
}
#else
inline constexpr bool kWordMasks = false;
#endif

}  // namespace detail

/// Calls f(i) for every set index, in increasing order.
template <class F>
void for_each_set(const Mask& m, F&& f) {
  if constexpr (detail::kWordMasks) {
    for (std::size_t k = 0; k < detail::mask_word_count(m); ++k)
      for (auto bits = detail::mask_word(m, k); bits; bits &= bits - 1)
        f(k * detail::kMaskWordBits + static_cast<std::size_t>(std::countr_zero(bits)));
  } else {
    for (std::size_t i = 0; i < m.size(); ++i)
      if (m[i]) f(i);
  }
}

inline std::size_t popcount(const Mask& m) {
  if constexpr (detail::kWordMasks) {
    std::size_t n = 0;
    for (std::size_t k = 0; k < detail::mask_word_count(m); ++k)
      n += static_cast<std::size_t>(std::popcount(detail::mask_word(m, k)));
    return n;
  } else {
    return static_cast<std::size_t>(std::count(m.begin(), m.end(), true));
  }
}

inline Mask instance_mask(const LabeledPointCloud& cloud, EntityId id) {
  Mask m(cloud.size(), false);
  for (std::size_t i = 0; i < cloud.size(); ++i)
    if (cloud.instance[i] == id) m[i] = true;
  return m;
}

struct ActionMaskPair {
  Mask pick;
  Mask target;
  double done_probability = 0.0;
  bool operator==(const ActionMaskPair&) const = default;
};

/// Entity whose points form the putdown target: the cell for an empty
/// column, the base box for a stack top.
inline EntityId target_entity(const SceneState& state, const PutdownSlot& slot) {
  if (const auto* top = std::get_if<StackTop>(&slot)) return top->base;
  const CellSlot* c = state.find_cell(std::get<FreeCell>(slot).column);
  if (!c) throw Error(ErrorCode::kUnknownEntity, "no such cell");
  return c->id;
}

/// Centre of the target entity: deck centre of a cell or centre of the base box.
inline Vec3 target_center(const SceneState& state, const PutdownSlot& slot) {
  if (const auto* top = std::get_if<StackTop>(&slot)) {
    const BoxItem* b = state.find_box(top->base);
    if (!b) throw Error(ErrorCode::kUnknownEntity, "no such box");
    return b->position;
  }
  const CellSlot* c = state.find_cell(std::get<FreeCell>(slot).column);
  if (!c) throw Error(ErrorCode::kUnknownEntity, "no such cell");
  return c->center;
}

inline ActionMaskPair gt_action_masks(const LabeledPointCloud& cloud, const SceneState& state, const Action& action,
                                      double done_probability = 0.0) {
  ActionMaskPair out{instance_mask(cloud, action.pickup), instance_mask(cloud, target_entity(state, action.putdown)),
                     done_probability};
  if (popcount(out.pick) == 0) throw Error(ErrorCode::kEntityAbsentFromCloud, "pickup has no points");
  if (popcount(out.target) == 0) throw Error(ErrorCode::kEntityAbsentFromCloud, "putdown target has no points");
  return out;
}

struct InstanceCoverage {
  EntityId instance = 0;
  double coverage = 0.0;  // |mask ∩ instance| / |instance|
  bool operator==(const InstanceCoverage&) const = default;
};

/// Instance with the highest fraction of its points selected; ties go to the
/// lowest id.
inline InstanceCoverage mask_to_instance(const LabeledPointCloud& cloud, const Mask& mask) {
  if (mask.size() != cloud.size()) throw Error(ErrorCode::kDimensionMismatch, "mask length differs from cloud");
  EntityId max_id = 0;
  for (auto id : cloud.instance) max_id = std::max(max_id, id);
  std::vector<std::size_t> selected(cloud.size() ? max_id + 1 : 0, 0);
  std::vector<std::size_t> total(selected.size(), 0);
  for (auto id : cloud.instance) ++total[id];
  for_each_set(mask, [&](std::size_t i) { ++selected[cloud.instance[i]]; });
  std::optional<InstanceCoverage> best;
  for (EntityId id = 0; id < selected.size(); ++id) {
    if (selected[id] == 0) continue;
    const double cov = static_cast<double>(selected[id]) / static_cast<double>(total[id]);
    if (!best || cov > best->coverage) best = InstanceCoverage{id, cov};
  }
  if (!best) throw Error(ErrorCode::kEmptyMask, "mask selects no points");
  return *best;
}

inline double mask_iou(const Mask& a, const Mask& b) {
  if (a.size() != b.size()) throw Error(ErrorCode::kDimensionMismatch, "masks index different clouds");
  std::size_t inter = 0;
  std::size_t uni = 0;
  if constexpr (detail::kWordMasks) {
    for (std::size_t k = 0; k < detail::mask_word_count(a); ++k) {
      const auto wa = detail::mask_word(a, k), wb = detail::mask_word(b, k);
      inter += static_cast<std::size_t>(std::popcount(wa & wb));
      uni += static_cast<std::size_t>(std::popcount(wa | wb));
    }
  } else {
    for (std::size_t i = 0; i < a.size(); ++i) {
      inter += (a[i] && b[i]) ? 1 : 0;
      uni += (a[i] || b[i]) ? 1 : 0;
    }
  }
  if (uni == 0) throw Error(ErrorCode::kBothEmpty, "IoU of two empty masks");
  return static_cast<double>(inter) / static_cast<double>(uni);
}

// ---------------------------------------------------------------- DBSCAN

struct DbscanConfig {
  double eps = 0.15;
  int min_pts = 5;  // neighbourhood count including the point itself
};

struct DbscanResult {
  std::vector<std::size_t> indices;  // retained input indices, ascending
  bool all_noise = false;
  int cluster_count = 0;
};

/// Full labelling: -1 noise, otherwise cluster number in discovery order.
/// Clusters grow breadth-first from the lowest-index unvisited core point and
/// a border point joins the first cluster that reaches it.
inline std::vector<int> dbscan_labels(const std::vector<Vec3>& pts, const DbscanConfig& cfg) {
  if (!(cfg.eps > 0.0)) throw Error(ErrorCode::kInvalidArgument, "eps must be positive");
  if (cfg.min_pts < 1) throw Error(ErrorCode::kInvalidArgument, "min_pts must be at least 1");
  const std::size_t n = pts.size();
  // Points bucketed by eps-sized grid cell. Work happens on `sp`, the points
  // sorted by cell ("rank" space); `cells` holds each cell's rank range.
  using Key = std::array<std::int64_t, 3>;
  std::vector<Key> key(n);
  for (std::size_t i = 0; i < n; ++i)
    key[i] = {static_cast<std::int64_t>(std::floor(pts[i].x / cfg.eps)),
              static_cast<std::int64_t>(std::floor(pts[i].y / cfg.eps)),
              static_cast<std::int64_t>(std::floor(pts[i].z / cfg.eps))};
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return key[a] < key[b]; });
  std::vector<Vec3> sp(n);
  std::vector<std::size_t> rank_of(n);
  for (std::size_t r = 0; r < n; ++r) {
    sp[r] = pts[order[r]];
    rank_of[order[r]] = r;
  }
  struct CellRange {
    Key key;
    std::size_t begin, end;
  };
  std::vector<CellRange> cells;
  std::vector<std::size_t> cell_of(n);
  for (std::size_t r = 0; r < n; ++r) {
    if (cells.empty() || cells.back().key != key[order[r]]) cells.push_back({key[order[r]], r, r});
    cells.back().end = r + 1;
    cell_of[r] = cells.size() - 1;
  }
  // Neighbouring cells per cell, own cell first, flattened:
  // adjacent[adj_begin[c] .. adj_begin[c + 1]).
  std::vector<std::size_t> adjacent, adj_begin{0};
  for (std::size_t c = 0; c < cells.size(); ++c) {
    adjacent.push_back(c);
    for (std::int64_t dx = -1; dx <= 1; ++dx)
      for (std::int64_t dy = -1; dy <= 1; ++dy)
        for (std::int64_t dz = -1; dz <= 1; ++dz) {
          if (dx == 0 && dy == 0 && dz == 0) continue;
          const Key k{cells[c].key[0] + dx, cells[c].key[1] + dy, cells[c].key[2] + dz};
          auto it = std::lower_bound(cells.begin(), cells.end(), k,
                                     [](const CellRange& r, const Key& x) { return r.key < x; });
          if (it != cells.end() && it->key == k) adjacent.push_back(static_cast<std::size_t>(it - cells.begin()));
        }
    adj_begin.push_back(adjacent.size());
  }

  const double eps = cfg.eps;
  const double eps2 = eps * eps;
  // Squared distance from coordinate v to the slab [k * eps, (k + 1) * eps).
  auto slab_gap2 = [eps](double v, std::int64_t k) {
    const double lo = static_cast<double>(k) * eps, hi = lo + eps;
    const double d = v < lo ? lo - v : (v > hi ? v - hi : 0.0);
    return d * d;
  };
  auto reachable = [&](const Vec3& p, const CellRange& cell) {
    return slab_gap2(p.x, cell.key[0]) + slab_gap2(p.y, cell.key[1]) + slab_gap2(p.z, cell.key[2]) <=
           eps2 * (1.0 + 1e-9);
  };
  auto within = [&](const Vec3& p, std::size_t s) {
    const double dx = sp[s].x - p.x, dy = sp[s].y - p.y, dz = sp[s].z - p.z;
    return dx * dx + dy * dy + dz * dz <= eps2;
  };
  // Stops counting once min_pts neighbours are found.
  auto is_core = [&](std::size_t r) {
    const Vec3 p = sp[r];
    const std::size_t c0 = cell_of[r];
    int count = 0;
    for (std::size_t a = adj_begin[c0]; a < adj_begin[c0 + 1]; ++a) {
      const CellRange& cell = cells[adjacent[a]];
      if (!reachable(p, cell)) continue;
      for (std::size_t s = cell.begin; s < cell.end; ++s)
        if (within(p, s) && ++count >= cfg.min_pts) return true;
    }
    return false;
  };

  // Which cluster reaches a border point first depends only on the order in
  // which clusters are started, not on the queue order inside one cluster.
  constexpr int kUnvisited = -2;
  std::vector<int> lab(n, kUnvisited);
  // Points not yet in a cluster, per cell: open[cells[c].begin .. open_end[c]),
  // in any order; slot[r] is r's position there.
  std::vector<std::size_t> open(n), slot(n), open_end(cells.size());
  std::iota(open.begin(), open.end(), 0);
  std::iota(slot.begin(), slot.end(), 0);
  for (std::size_t c = 0; c < cells.size(); ++c) open_end[c] = cells[c].end;
  auto claim = [&](std::size_t r) {
    const std::size_t c = cell_of[r], last = --open_end[c], k = slot[r];
    std::swap(open[k], open[last]);
    slot[open[k]] = k;
    slot[r] = last;
  };
  int cluster = 0;
  std::vector<std::size_t> queue;
  // Adds the unclustered neighbours of core point r to the current cluster.
  auto absorb = [&](std::size_t r) {
    const Vec3 p = sp[r];
    const std::size_t c0 = cell_of[r];
    for (std::size_t a = adj_begin[c0]; a < adj_begin[c0 + 1]; ++a) {
      const std::size_t c = adjacent[a];
      if (open_end[c] == cells[c].begin || !reachable(p, cells[c])) continue;
      for (std::size_t k = cells[c].begin; k < open_end[c];) {
        const std::size_t s = open[k];
        if (!within(p, s)) {
          ++k;
          continue;
        }
        const bool unvisited = lab[s] == kUnvisited;
        lab[s] = cluster;
        claim(s);  // moves another open point into position k
        if (unvisited) queue.push_back(s);
      }
    }
  };
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t r = rank_of[i];
    if (lab[r] != kUnvisited) continue;
    if (!is_core(r)) {
      lab[r] = -1;
      continue;
    }
    lab[r] = cluster;
    claim(r);
    queue.clear();
    absorb(r);
    for (std::size_t q = 0; q < queue.size(); ++q)
      if (is_core(queue[q])) absorb(queue[q]);
    ++cluster;
  }
  std::vector<int> label(n);
  for (std::size_t i = 0; i < n; ++i) label[i] = lab[rank_of[i]];
  return label;
}

inline DbscanResult dbscan_largest_cluster(const std::vector<Vec3>& pts, const DbscanConfig& cfg = {}) {
  const auto label = dbscan_labels(pts, cfg);
  DbscanResult out;
  for (int l : label) out.cluster_count = std::max(out.cluster_count, l + 1);
  if (out.cluster_count == 0) {
    out.all_noise = true;
    return out;
  }
  std::vector<std::size_t> size(static_cast<std::size_t>(out.cluster_count), 0);
  std::vector<std::size_t> first(static_cast<std::size_t>(out.cluster_count), pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (label[i] < 0) continue;
    const auto c = static_cast<std::size_t>(label[i]);
    ++size[c];
    first[c] = std::min(first[c], i);
  }
  std::size_t best = 0;
  for (std::size_t c = 1; c < size.size(); ++c)
    if (size[c] > size[best] || (size[c] == size[best] && first[c] < first[best])) best = c;
  for (std::size_t i = 0; i < pts.size(); ++i)
    if (label[i] == static_cast<int>(best)) out.indices.push_back(i);
  return out;
}

/// Restricts a mask to its largest DBSCAN cluster. Returns an empty mask when
/// every selected point is noise.
inline Mask dbscan_filter(const LabeledPointCloud& cloud, const Mask& mask, const DbscanConfig& cfg = {}) {
  if (mask.size() != cloud.size()) throw Error(ErrorCode::kDimensionMismatch, "mask length differs from cloud");
  std::vector<std::size_t> idx;
  std::vector<Vec3> pts;
  idx.reserve(popcount(mask));
  pts.reserve(idx.capacity());
  for_each_set(mask, [&](std::size_t i) {
    idx.push_back(i);
    pts.push_back(cloud.points[i]);
  });
  Mask out(mask.size(), false);
  for (std::size_t k : dbscan_largest_cluster(pts, cfg).indices) out[idx[k]] = true;
  return out;
}

/// Mean of the selected points.
inline Vec3 freeform_putdown_point(const LabeledPointCloud& cloud, const Mask& mask) {
  if (mask.size() != cloud.size()) throw Error(ErrorCode::kDimensionMismatch, "mask length differs from cloud");
  Vec3 sum;
  std::size_t n = 0;
  for_each_set(mask, [&](std::size_t i) {
    sum = sum + cloud.points[i];
    ++n;
  });
  if (n == 0) throw Error(ErrorCode::kEmptyAfterFilter, "no points left for the putdown centroid");
  return sum / static_cast<double>(n);
}

// ---------------------------------------------------------------- RLE

/// COCO-style run lengths over the flat bitset, starting with a run of zeros.
inline std::vector<std::uint32_t> rle_encode(const Mask& m) {
  std::vector<std::uint32_t> counts;
  bool current = false;
  std::uint32_t run = 0;
  for (bool b : m) {
    if (b != current) {
      counts.push_back(run);
      run = 0;
      current = b;
    }
    ++run;
  }
  counts.push_back(run);
  return counts;
}

inline Mask rle_decode(const std::vector<std::uint32_t>& counts, std::size_t size) {
  Mask m;
  m.reserve(size);
  bool value = false;
  for (std::uint32_t c : counts) {
    if (m.size() + c > size) throw Error(ErrorCode::kCorruptSample, "run lengths exceed mask size");
    m.insert(m.end(), c, value);
    value = !value;
  }
  if (m.size() != size) throw Error(ErrorCode::kCorruptSample, "run lengths do not cover the mask");
  return m;
}

inline Json rle_to_json(const Mask& m) { return Json{{"size", m.size()}, {"counts", rle_encode(m)}}; }

inline Mask rle_from_json(const Json& j) {
  if (!j.is_object() || !j.contains("size") || !j.contains("counts"))
    throw Error(ErrorCode::kProtocolViolation, "mask must be {size, counts}");
  return rle_decode(j.at("counts").get<std::vector<std::uint32_t>>(), j.at("size").get<std::size_t>());
}

// ---------------------------------------------------------------- depth

struct DepthImage {
  int width = 0;
  int height = 0;
  std::vector<double> depth;  // row-major, 0 = no hit

  double at(int u, int v) const { return depth[static_cast<std::size_t>(v) * static_cast<std::size_t>(width) + static_cast<std::size_t>(u)]; }
};

/// Straight-down camera `height` metres above `center`.
inline CameraView topdown_camera(double height = 10.0, const Intrinsics& k = {}, Vec3 center = {}) {
  return {k, look_at({center.x, center.y, center.z + height}, center)};
}

struct PixelProjection {
  double u = 0.0;
  double v = 0.0;
  double depth = 0.0;  // along the optical axis
};

inline PixelProjection project(const Vec3& world, const Intrinsics& k, const Pose& camera_to_world) {
  const Vec3 c = camera_to_world.apply_inverse(world);
  return {k.fx * c.x / c.z + k.cx, k.fy * c.y / c.z + k.cy, c.z};
}

namespace detail {

inline void ray_aabb(const Vec3& o, const Vec3& d, const Aabb& box, double& best) {
  double t0 = 0.0;
  double t1 = best;
  const std::array<double, 3> oo{o.x, o.y, o.z}, dd{d.x, d.y, d.z}, lo{box.lo.x, box.lo.y, box.lo.z},
      hi{box.hi.x, box.hi.y, box.hi.z};
  for (int a = 0; a < 3; ++a) {
    if (dd[a] == 0.0) {
      if (oo[a] < lo[a] || oo[a] > hi[a]) return;
      continue;
    }
    double ta = (lo[a] - oo[a]) / dd[a];
    double tb = (hi[a] - oo[a]) / dd[a];
    if (ta > tb) std::swap(ta, tb);
    t0 = std::max(t0, ta);
    t1 = std::min(t1, tb);
    if (t0 > t1) return;
  }
  if (t0 < best) best = t0;
}

inline void ray_cylinder(const Vec3& o, const Vec3& d, const Vec3& base, double r, double h, double& best) {
  // top cap
  if (d.z != 0.0) {
    const double t = (h - o.z) / d.z;
    if (t > 0.0 && t < best) {
      const double x = o.x + t * d.x - base.x;
      const double y = o.y + t * d.y - base.y;
      if (x * x + y * y <= r * r) best = t;
    }
  }
  const double ox = o.x - base.x;
  const double oy = o.y - base.y;
  const double a = d.x * d.x + d.y * d.y;
  if (a == 0.0) return;
  const double b = 2.0 * (ox * d.x + oy * d.y);
  const double c = ox * ox + oy * oy - r * r;
  const double disc = b * b - 4.0 * a * c;
  if (disc < 0.0) return;
  const double t = (-b - std::sqrt(disc)) / (2.0 * a);
  if (t <= 0.0 || t >= best) return;
  const double z = o.z + t * d.z;
  if (z >= 0.0 && z <= h) best = t;
}

}  // namespace detail

/// Solid geometry seen by the depth renderer: pallet bodies up to the deck,
/// shelf boards, boxes, distractor cylinders and the floor plane.
inline DepthImage render_topdown_depth(const SceneState& state, const Intrinsics& k, const Pose& camera_to_world) {
  const auto& g = state.geometry;
  std::vector<Aabb> solids;
  for (const auto& s : state.surfaces) {
    const Aabb fp = s.footprint(g);
    if (is_pallet(s.kind)) {
      solids.push_back(fp);
    } else {
      for (double z : g.shelf_layer_heights)
        solids.push_back({{fp.lo.x, fp.lo.y, z - g.shelf_board_thickness}, {fp.hi.x, fp.hi.y, z}});
    }
  }
  struct Oriented {
    Vec3 center;
    Yaw2 yaw;
  };
  std::vector<Oriented> boxes;
  for (const auto& b : state.boxes) boxes.push_back({b.position, Yaw2::from_radians(b.yaw)});
  const double h = 0.5 * g.box_size;
  const Aabb unit{{-h, -h, -h}, {h, h, h}};

  DepthImage img{k.width, k.height, std::vector<double>(static_cast<std::size_t>(k.width) * static_cast<std::size_t>(k.height), 0.0)};
  const Vec3 o = camera_to_world.translation;
  for (int v = 0; v < k.height; ++v)
    for (int u = 0; u < k.width; ++u) {
      const Vec3 dir_cam{(u + 0.5 - k.cx) / k.fx, (v + 0.5 - k.cy) / k.fy, 1.0};
      const Vec3 d = camera_to_world.rotation * dir_cam;  // unit optical-axis component, so t is z-depth
      double best = std::numeric_limits<double>::infinity();
      if (d.z < 0.0 && o.z > 0.0) best = -o.z / d.z;
      for (const auto& a : solids) detail::ray_aabb(o, d, a, best);
      for (const auto& b : boxes)
        detail::ray_aabb(b.yaw.unrotate(o - b.center), b.yaw.unrotate(d), unit, best);
      for (const auto& dist : state.distractors)
        detail::ray_cylinder(o, d, dist.position, dist.radius(), dist.height(), best);
      img.depth[static_cast<std::size_t>(v) * static_cast<std::size_t>(k.width) + static_cast<std::size_t>(u)] =
          std::isfinite(best) ? best : 0.0;
    }
  return img;
}

/// Inverse pinhole projection of a continuous pixel position using the depth
/// stored at the pixel containing it.
inline Vec3 backproject_2d(double u, double v, const DepthImage& img, const Intrinsics& k, const Pose& camera_to_world) {
  if (!(u >= 0.0 && v >= 0.0 && u < img.width && v < img.height))
    throw Error(ErrorCode::kOutOfBounds, "pixel outside the image");
  const double z = img.at(static_cast<int>(u), static_cast<int>(v));
  if (!(z > 0.0) || !std::isfinite(z)) throw Error(ErrorCode::kInvalidDepth, "no valid depth at pixel");
  const Vec3 cam{(u - k.cx) * z / k.fx, (v - k.cy) * z / k.fy, z};
  return camera_to_world.apply(cam);
}

// ---------------------------------------------------------------- cloud files

/// Binary layout, little-endian:
///   "RAMPPC01" | u32 version | u64 count | f64 resolution | f64 floor_resolution
///   | u32 len | field list (len bytes, ASCII)
///   | count rows of f64 x, f64 y, f64 z, u32 instance, u8 semantic, u8 color
inline constexpr char kCloudMagic[8] = {'R', 'A', 'M', 'P', 'P', 'C', '0', '1'};
inline constexpr std::uint32_t kCloudVersion = 1;
inline constexpr std::string_view kCloudFields = "x:f64,y:f64,z:f64,instance:u32,semantic:u8,color:u8";

namespace detail {

template <class T>
void put_le(std::string& out, T value) {
  std::uint64_t bits = 0;
  if constexpr (std::is_floating_point_v<T>) {
    static_assert(sizeof(T) == 8);
    std::memcpy(&bits, &value, 8);
  } else {
    bits = static_cast<std::uint64_t>(value);
  }
  if constexpr (std::endian::native == std::endian::little) {
    out.append(reinterpret_cast<const char*>(&bits), sizeof(T));
  } else {
    for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
  }
}

template <class T>
T get_le(const std::string& in, std::size_t& pos) {
  if (pos + sizeof(T) > in.size()) throw Error(ErrorCode::kCorruptSample, "truncated cloud file");
  std::uint64_t bits = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i)
    bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[pos + i])) << (8 * i);
  pos += sizeof(T);
  if constexpr (std::is_floating_point_v<T>) {
    T value;
    std::memcpy(&value, &bits, 8);
    return value;
  } else {
    return static_cast<T>(bits);
  }
}

}  // namespace detail

namespace detail {

constexpr std::size_t kCloudRecordBytes = 3 * 8 + 4 + 1 + 1;

inline std::string cloud_header(const LabeledPointCloud& c) {
  std::string out(kCloudMagic, 8);
  put_le<std::uint32_t>(out, kCloudVersion);
  put_le<std::uint64_t>(out, c.size());
  put_le<double>(out, c.resolution);
  put_le<double>(out, c.floor_resolution);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(kCloudFields.size()));
  out += kCloudFields;
  return out;
}

template <class T>
char* write_le(char* dst, T value) {
  std::uint64_t bits = 0;
  if constexpr (std::is_floating_point_v<T>) {
    std::memcpy(&bits, &value, 8);
  } else {
    bits = static_cast<std::uint64_t>(value);
  }
  if constexpr (std::endian::native == std::endian::little) {
    std::memcpy(dst, &bits, sizeof(T));
  } else {
    for (std::size_t i = 0; i < sizeof(T); ++i) dst[i] = static_cast<char>((bits >> (8 * i)) & 0xff);
  }
  return dst + sizeof(T);
}

inline void put_record(char* dst, const LabeledPointCloud& c, std::size_t i) {
  dst = write_le<double>(dst, c.points[i].x);
  dst = write_le<double>(dst, c.points[i].y);
  dst = write_le<double>(dst, c.points[i].z);
  dst = write_le<std::uint32_t>(dst, c.instance[i]);
  dst = write_le<std::uint8_t>(dst, static_cast<std::uint8_t>(c.semantic[i]));
  write_le<std::uint8_t>(dst, c.color[i]);
}

}  // namespace detail

inline std::string encode_cloud(const LabeledPointCloud& c) {
  std::string out = detail::cloud_header(c);
  const std::size_t base = out.size();
  out.resize(base + c.size() * detail::kCloudRecordBytes);
  for (std::size_t i = 0; i < c.size(); ++i) detail::put_record(out.data() + base + i * detail::kCloudRecordBytes, c, i);
  return out;
}

inline LabeledPointCloud decode_cloud(const std::string& bytes) {
  if (bytes.size() < 8 || std::memcmp(bytes.data(), kCloudMagic, 8) != 0)
    throw Error(ErrorCode::kSchemaMismatch, "not a point cloud file");
  std::size_t pos = 8;
  if (detail::get_le<std::uint32_t>(bytes, pos) != kCloudVersion)
    throw Error(ErrorCode::kSchemaMismatch, "unsupported cloud version");
  const auto count = detail::get_le<std::uint64_t>(bytes, pos);
  LabeledPointCloud c;
  c.resolution = detail::get_le<double>(bytes, pos);
  c.floor_resolution = detail::get_le<double>(bytes, pos);
  const auto len = detail::get_le<std::uint32_t>(bytes, pos);
  if (pos + len > bytes.size() || bytes.compare(pos, len, kCloudFields) != 0)
    throw Error(ErrorCode::kSchemaMismatch, "unexpected cloud field list");
  pos += len;
  if (bytes.size() - pos != count * 30) throw Error(ErrorCode::kCorruptSample, "cloud row data has wrong length");
  for (std::uint64_t i = 0; i < count; ++i) {
    const double x = detail::get_le<double>(bytes, pos);
    const double y = detail::get_le<double>(bytes, pos);
    const double z = detail::get_le<double>(bytes, pos);
    const auto id = detail::get_le<std::uint32_t>(bytes, pos);
    const auto sem = detail::get_le<std::uint8_t>(bytes, pos);
    const auto col = detail::get_le<std::uint8_t>(bytes, pos);
    if (sem > static_cast<std::uint8_t>(SemanticClass::kFloor)) throw Error(ErrorCode::kCorruptSample, "bad semantic class");
    c.push({x, y, z}, id, static_cast<SemanticClass>(sem), col);
  }
  return c;
}

/// Debug form: a header object then one [x, y, z, instance, semantic, color]
/// array per line.
inline void write_cloud_ndjson(std::ostream& out, const LabeledPointCloud& c) {
  out << canonical_dump(Json{{"count", c.size()},
                             {"resolution", c.resolution},
                             {"floor_resolution", c.floor_resolution},
                             {"fields", kCloudFields}})
      << '\n';
  for (std::size_t i = 0; i < c.size(); ++i)
    out << canonical_dump(Json::array({c.points[i].x, c.points[i].y, c.points[i].z, c.instance[i],
                                       static_cast<int>(c.semantic[i]), static_cast<int>(c.color[i])}))
        << '\n';
}

/// Header bytes, then each point record as four words: the bit patterns of
/// x, y, z and instance | semantic << 32 | color << 40.
inline std::string cloud_digest(const LabeledPointCloud& c) {
  Fnv1a64 h;
  h.update(detail::cloud_header(c));
  for (std::size_t i = 0; i < c.size(); ++i) {
    h.update_word(std::bit_cast<std::uint64_t>(c.points[i].x));
    h.update_word(std::bit_cast<std::uint64_t>(c.points[i].y));
    h.update_word(std::bit_cast<std::uint64_t>(c.points[i].z));
    h.update_word(static_cast<std::uint64_t>(c.instance[i]) |
                  static_cast<std::uint64_t>(static_cast<std::uint8_t>(c.semantic[i])) << 32 |
                  static_cast<std::uint64_t>(c.color[i]) << 40);
  }
  return hex_digest(h.hash);
}

}  // namespace ramp3d
