#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "phytac/errors.hpp"
#include "phytac/matrix.hpp"

namespace phytac {

struct Vec3 {
  double x = 0.0, y = 0.0, z = 0.0;

  Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  double norm() const { return std::sqrt(dot(*this)); }
  Vec3 normalized() const {
    const double n = norm();
    return n > 0.0 ? Vec3{x / n, y / n, z / n} : Vec3{0.0, 0.0, 0.0};
  }
};

// Rigid transform: p -> R p + t. R is row-major.
struct Pose {
  std::array<double, 9> r = {1, 0, 0, 0, 1, 0, 0, 0, 1};
  Vec3 t;

  Vec3 apply(const Vec3& p) const {
    return {r[0] * p.x + r[1] * p.y + r[2] * p.z + t.x,
            r[3] * p.x + r[4] * p.y + r[5] * p.z + t.y,
            r[6] * p.x + r[7] * p.y + r[8] * p.z + t.z};
  }

  Pose inverse() const {
    Pose inv;
    // R^T and -R^T t
    inv.r = {r[0], r[3], r[6], r[1], r[4], r[7], r[2], r[5], r[8]};
    inv.t = {-(r[0] * t.x + r[3] * t.y + r[6] * t.z),
             -(r[1] * t.x + r[4] * t.y + r[7] * t.z),
             -(r[2] * t.x + r[5] * t.y + r[8] * t.z)};
    return inv;
  }

  // a.compose(b) applies b first, then a.
  Pose compose(const Pose& b) const {
    Pose c;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        double s = 0.0;
        for (int k = 0; k < 3; ++k) s += r[3 * i + k] * b.r[3 * k + j];
        c.r[3 * i + j] = s;
      }
    c.t = apply(b.t);
    return c;
  }

  double det() const {
    return r[0] * (r[4] * r[8] - r[5] * r[7]) -
           r[1] * (r[3] * r[8] - r[5] * r[6]) +
           r[2] * (r[3] * r[7] - r[4] * r[6]);
  }

  // Orthonormal with det +1, to 1e-9.
  void validate() const {
    double worst = 0.0;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) {
        double s = 0.0;
        for (int k = 0; k < 3; ++k) s += r[3 * k + i] * r[3 * k + j];
        worst = std::max(worst, std::abs(s - (i == j ? 1.0 : 0.0)));
      }
    if (worst > 1e-9)
      throw contract_error("pose rotation not orthonormal (|R^T R - I| = " +
                           std::to_string(worst) + ")");
    if (std::abs(det() - 1.0) > 1e-9)
      throw contract_error("pose rotation determinant is not +1");
  }

  static Pose rotation_z(double angle_rad) {
    const double c = std::cos(angle_rad), s = std::sin(angle_rad);
    Pose p;
    p.r = {c, -s, 0, s, c, 0, 0, 0, 1};
    return p;
  }
  static Pose rotation_x(double angle_rad) {
    const double c = std::cos(angle_rad), s = std::sin(angle_rad);
    Pose p;
    p.r = {1, 0, 0, 0, c, -s, 0, s, c};
    return p;
  }
  static Pose rotation_y(double angle_rad) {
    const double c = std::cos(angle_rad), s = std::sin(angle_rad);
    Pose p;
    p.r = {c, 0, s, 0, 1, 0, -s, 0, c};
    return p;
  }
  static Pose translation(double x, double y, double z) {
    Pose p;
    p.t = {x, y, z};
    return p;
  }
};

// Object surface points inside the rectangular fingertip window, in the
// fingertip frame (mm). depth_map holds the rasterized z per sensor cell.
struct ContactPatch {
  std::vector<Vec3> points;
  double window_w = 0.0;
  double window_h = 0.0;
  Mat depth_map;  // rows x cols, z in mm
};

// Raw per-patch quality statistics, before per-candidate-set normalization.
struct PatchMetrics {
  double s_rough = 0.0;  // mm, RMS residual of the best-fit plane
  double c_n = 0.0;      // mean clamped alignment with the mean normal, [0,1]
  double u_c = 0.0;      // curvature dispersion (coefficient of variation)
};

struct GraspCandidate {
  Pose pose;  // fingertip <- object
  double score_s = 0.0;
};

// Per-candidate min-max-normalized cost terms, each in [0,1]; 0 means best
// in the set. The combined cost weights these directly.
struct NormalizedCosts {
  double roughness = 0.0;
  double normal_inconsistency = 0.0;  // normalized (1 - c_n)
  double curvature_dispersion = 0.0;
};

struct RankedCandidate {
  GraspCandidate candidate;
  std::size_t original_index = 0;
  PatchMetrics raw;
  NormalizedCosts costs;
  double f_cost = 0.0;
  double w_p = 0.0;
};

struct RankWeights {
  double alpha = 0.2;
  double beta = 0.6;
  double gamma = 0.2;
  double delta = 0.5;
};

// ---------------------------------------------------------------------------
// Patch extraction

// Transform object points into the fingertip frame and keep those inside the
// window: |x| <= w/2 and |y| <= h/2. The depth map takes, per cell, the z of
// the point nearest that cell's center; empty cells are filled by iterated
// neighbor averaging.
inline ContactPatch extract_patch(const std::vector<Vec3>& object_points,
                                  const Pose& pose, double w, double h,
                                  std::size_t grid_rows,
                                  std::size_t grid_cols) {
  if (!(w > 0.0) || !(h > 0.0))
    throw contract_error("extract_patch: window must be positive");
  if (grid_rows == 0 || grid_cols == 0)
    throw contract_error("extract_patch: empty sensor grid");
  pose.validate();

  ContactPatch patch;
  patch.window_w = w;
  patch.window_h = h;
  for (const Vec3& p : object_points) {
    const Vec3 q = pose.apply(p);
    if (std::abs(q.x) <= w / 2.0 && std::abs(q.y) <= h / 2.0)
      patch.points.push_back(q);
  }
  if (patch.points.size() < 10)
    throw insufficient_contact_error(
        "insufficient contact: only " + std::to_string(patch.points.size()) +
        " points inside the fingertip window");

  // Nearest point per cell.
  Mat depth(grid_rows, grid_cols,
            std::numeric_limits<double>::quiet_NaN());
  Mat best_d2(grid_rows, grid_cols, std::numeric_limits<double>::infinity());
  const double cw = w / static_cast<double>(grid_cols);
  const double ch = h / static_cast<double>(grid_rows);
  for (const Vec3& q : patch.points) {
    if (!std::isfinite(q.z))
      throw contract_error("extract_patch: non-finite point depth");
    auto clamp_idx = [](double v, std::size_t n) {
      const auto i = static_cast<long long>(std::floor(v));
      return static_cast<std::size_t>(
          std::clamp<long long>(i, 0, static_cast<long long>(n) - 1));
    };
    const std::size_t c = clamp_idx((q.x + w / 2.0) / cw, grid_cols);
    const std::size_t r = clamp_idx((q.y + h / 2.0) / ch, grid_rows);
    const double cx = -w / 2.0 + (static_cast<double>(c) + 0.5) * cw;
    const double cy = -h / 2.0 + (static_cast<double>(r) + 0.5) * ch;
    const double d2 = (q.x - cx) * (q.x - cx) + (q.y - cy) * (q.y - cy);
    if (d2 < best_d2(r, c)) {
      best_d2(r, c) = d2;
      depth(r, c) = q.z;
    }
  }

  // Jacobi-style hole fill: every empty cell with at least one filled
  // 4-neighbor takes the average of those neighbors, all updates from the
  // previous pass (order-independent).
  bool any_hole = true;
  while (any_hole) {
    any_hole = false;
    Mat next = depth;
    bool filled_one = false;
    for (std::size_t r = 0; r < grid_rows; ++r)
      for (std::size_t c = 0; c < grid_cols; ++c) {
        if (!std::isnan(depth(r, c))) continue;
        double sum = 0.0;
        int n = 0;
        if (r > 0 && !std::isnan(depth(r - 1, c))) sum += depth(r - 1, c), ++n;
        if (r + 1 < grid_rows && !std::isnan(depth(r + 1, c)))
          sum += depth(r + 1, c), ++n;
        if (c > 0 && !std::isnan(depth(r, c - 1))) sum += depth(r, c - 1), ++n;
        if (c + 1 < grid_cols && !std::isnan(depth(r, c + 1)))
          sum += depth(r, c + 1), ++n;
        if (n > 0) {
          next(r, c) = sum / n;
          filled_one = true;
        } else {
          any_hole = true;
        }
      }
    depth = std::move(next);
    if (any_hole && !filled_one)
      throw numeric_error("extract_patch: disconnected empty grid");
  }
  patch.depth_map = std::move(depth);
  return patch;
}

// ---------------------------------------------------------------------------
// Normals and curvature

struct NormalsCurvature {
  std::vector<Vec3> normals;       // unit, oriented toward +z
  std::vector<double> curvature;   // lambda0 / (lambda0+lambda1+lambda2)
  std::vector<bool> degenerate;    // true where the neighborhood collapsed
};

// PCA over the k nearest neighbors (plus the point itself): normal is the
// smallest-variance direction, curvature the normalized smallest eigenvalue.
inline NormalsCurvature estimate_normals_curvature(const ContactPatch& patch,
                                                   std::size_t k = 12) {
  const std::size_t n = patch.points.size();
  if (k < 4) throw contract_error("estimate_normals_curvature: k < 4");
  if (n < k + 1)
    throw contract_error(
        "estimate_normals_curvature: patch has " + std::to_string(n) +
        " points, needs at least k+1 = " + std::to_string(k + 1));

  NormalsCurvature out;
  out.normals.resize(n);
  out.curvature.resize(n);
  out.degenerate.assign(n, false);

  std::vector<std::pair<double, std::size_t>> dist(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3& pi = patch.points[i];
    for (std::size_t j = 0; j < n; ++j) {
      const Vec3 d = patch.points[j] - pi;
      dist[j] = {d.dot(d), j};
    }
    dist[i].first = -1.0;  // the point itself sorts first
    std::partial_sort(dist.begin(), dist.begin() + static_cast<long>(k + 1),
                      dist.end());

    Vec3 mean{0, 0, 0};
    for (std::size_t s = 0; s <= k; ++s) {
      const Vec3& p = patch.points[dist[s].second];
      mean = mean + p;
    }
    mean = mean * (1.0 / static_cast<double>(k + 1));
    std::array<std::array<double, 3>, 3> cov{};
    for (std::size_t s = 0; s <= k; ++s) {
      const Vec3 d = patch.points[dist[s].second] - mean;
      const double v[3] = {d.x, d.y, d.z};
      for (int a = 0; a < 3; ++a)
        for (int b = 0; b < 3; ++b) cov[a][b] += v[a] * v[b];
    }
    const double trace = cov[0][0] + cov[1][1] + cov[2][2];
    if (trace <= 1e-24) {
      out.normals[i] = {0, 0, 1};
      out.curvature[i] = 0.0;
      out.degenerate[i] = true;
      continue;
    }
    const Eig3 eig = sym_eig3(cov);
    Vec3 nrm{eig.vectors[0][0], eig.vectors[0][1], eig.vectors[0][2]};
    if (nrm.z < 0.0) nrm = nrm * -1.0;
    out.normals[i] = nrm;
    const double lsum = eig.values[0] + eig.values[1] + eig.values[2];
    out.curvature[i] = std::max(0.0, eig.values[0]) / lsum;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Patch metrics

inline PatchMetrics patch_metrics(const ContactPatch& patch,
                                  const NormalsCurvature& nc) {
  const std::size_t n = patch.points.size();
  if (nc.normals.size() != n || nc.curvature.size() != n)
    throw contract_error("patch_metrics: normals/curvature not for this patch");

  PatchMetrics m;

  // Roughness: RMS orthogonal residual of the total-least-squares plane,
  // which is the square root of the smallest covariance eigenvalue.
  Vec3 centroid{0, 0, 0};
  for (const Vec3& p : patch.points) centroid = centroid + p;
  centroid = centroid * (1.0 / static_cast<double>(n));
  std::array<std::array<double, 3>, 3> cov{};
  for (const Vec3& p : patch.points) {
    const Vec3 d = p - centroid;
    const double v[3] = {d.x, d.y, d.z};
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) cov[a][b] += v[a] * v[b] / n;
  }
  const Eig3 eig = sym_eig3(cov);
  m.s_rough = std::sqrt(std::max(0.0, eig.values[0]));

  // Normal consistency: mean of max(0, n_i . n_bar).
  Vec3 sum{0, 0, 0};
  for (const Vec3& nrm : nc.normals) sum = sum + nrm;
  const Vec3 nbar = sum.normalized();
  double cn = 0.0;
  for (const Vec3& nrm : nc.normals) cn += std::max(0.0, nrm.dot(nbar));
  m.c_n = cn / static_cast<double>(n);

  // Curvature dispersion: coefficient of variation (population std / mean).
  double cmean = 0.0;
  for (double c : nc.curvature) cmean += c;
  cmean /= static_cast<double>(n);
  if (cmean <= 0.0) {
    m.u_c = 0.0;
  } else {
    double var = 0.0;
    for (double c : nc.curvature) var += (c - cmean) * (c - cmean);
    var /= static_cast<double>(n);
    m.u_c = std::sqrt(var) / cmean;
  }
  return m;
}

// ---------------------------------------------------------------------------
// Ranking

namespace detail {

// Min-max over a cost column; a degenerate (all-equal) column maps to 0.
inline std::vector<double> minmax_normalize(const std::vector<double>& v) {
  const auto [lo_it, hi_it] = std::minmax_element(v.begin(), v.end());
  const double lo = *lo_it, hi = *hi_it;
  std::vector<double> out(v.size(), 0.0);
  const double span = hi - lo;
  if (span <= 1e-15 * std::max(1.0, std::abs(hi))) return out;
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = (v[i] - lo) / span;
  return out;
}

}  // namespace detail

inline double combine_costs(const NormalizedCosts& c, const RankWeights& w) {
  return w.alpha * c.roughness + w.beta * c.normal_inconsistency +
         w.gamma * c.curvature_dispersion;
}

inline double pose_cost(double score_s, double f_cost, double delta) {
  return delta * (1.0 - score_s) + (1.0 - delta) * f_cost;
}

// Rank a candidate set ascending by the combined cost W_p. Cost terms are
// min-max normalized across the set (roughness, 1 - c_n, and curvature
// dispersion); ties broken by higher score, then original index.
inline std::vector<RankedCandidate> rank_candidates(
    const std::vector<GraspCandidate>& candidates,
    const std::vector<PatchMetrics>& raw, const RankWeights& w) {
  if (candidates.empty())
    throw contract_error("rank_candidates: empty candidate set");
  if (raw.size() != candidates.size())
    throw contract_error("rank_candidates: metrics count mismatch");
  if (w.alpha < 0 || w.beta < 0 || w.gamma < 0 || w.delta < 0 || w.delta > 1)
    throw contract_error("rank_candidates: weights out of range");
  if (std::abs(w.alpha + w.beta + w.gamma - 1.0) > 1e-9)
    throw contract_error("rank_candidates: alpha+beta+gamma must equal 1");

  const std::size_t n = candidates.size();
  std::vector<double> rough(n), inc(n), disp(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (candidates[i].score_s < 0.0 || candidates[i].score_s > 1.0)
      throw contract_error("rank_candidates: score outside [0,1]");
    if (raw[i].c_n < 0.0 || raw[i].c_n > 1.0 || raw[i].s_rough < 0.0 ||
        raw[i].u_c < 0.0)
      throw contract_error("rank_candidates: raw metrics out of range");
    rough[i] = raw[i].s_rough;
    inc[i] = 1.0 - raw[i].c_n;
    disp[i] = raw[i].u_c;
  }
  const std::vector<double> nr = detail::minmax_normalize(rough);
  const std::vector<double> ni = detail::minmax_normalize(inc);
  const std::vector<double> nd = detail::minmax_normalize(disp);

  std::vector<RankedCandidate> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i].candidate = candidates[i];
    out[i].original_index = i;
    out[i].raw = raw[i];
    out[i].costs = {nr[i], ni[i], nd[i]};
    out[i].f_cost = combine_costs(out[i].costs, w);
    out[i].w_p = pose_cost(candidates[i].score_s, out[i].f_cost, w.delta);
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const RankedCandidate& a, const RankedCandidate& b) {
                     if (a.w_p != b.w_p) return a.w_p < b.w_p;
                     if (a.candidate.score_s != b.candidate.score_s)
                       return a.candidate.score_s > b.candidate.score_s;
                     return a.original_index < b.original_index;
                   });
  return out;
}

// One scene = one candidate set with raw metrics.
struct Scene {
  std::vector<GraspCandidate> candidates;
  std::vector<PatchMetrics> metrics;
};

// Fraction of scenes where, restricted to the top-n candidates by planner
// score, the combined-cost winner differs from the plain score winner.
inline double mismatch_rate(const std::vector<Scene>& scenes, std::size_t n,
                            const RankWeights& w) {
  if (n == 0) throw contract_error("mismatch_rate: n must be >= 1");
  if (scenes.empty()) return 0.0;
  std::size_t mismatches = 0;
  for (const Scene& scene : scenes) {
    if (scene.candidates.size() < n)
      throw contract_error("mismatch_rate: scene smaller than top-n");
    std::vector<std::size_t> order(scene.candidates.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) {
                       return scene.candidates[a].score_s >
                              scene.candidates[b].score_s;
                     });
    std::vector<GraspCandidate> top;
    std::vector<PatchMetrics> top_metrics;
    for (std::size_t i = 0; i < n; ++i) {
      top.push_back(scene.candidates[order[i]]);
      top_metrics.push_back(scene.metrics[order[i]]);
    }
    const std::vector<RankedCandidate> ranked =
        rank_candidates(top, top_metrics, w);
    // order[0] is the best-score candidate; ranked.front() the cost winner.
    if (ranked.front().original_index != 0) ++mismatches;
  }
  return static_cast<double>(mismatches) / static_cast<double>(scenes.size());
}

}  // namespace phytac
