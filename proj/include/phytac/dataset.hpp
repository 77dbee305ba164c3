#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "phytac/errors.hpp"
#include "phytac/geometry.hpp"
#include "phytac/plant.hpp"
#include "phytac/rng.hpp"
#include "phytac/serialize.hpp"

namespace phytac {

// Depth of a candidate's center point below the sensor plane, mm.
constexpr double kCandidateStandoff = 5.0;

// Parameters for one synthetic object class: a superquadric with an
// optional radial ridge/bump displacement field.
struct ClassParams {
  double size_min = 18.0;  // semi-axis range, mm
  double size_max = 32.0;
  double shape_min = 0.6;  // superquadric exponent range (curvature character)
  double shape_max = 1.4;
  double texture_amplitude = 0.4;  // peak geometric displacement, mm
  double mass_min = 0.05;          // kg
  double mass_max = 0.4;
  std::size_t samples_u = 96;  // longitude x latitude sampling
  std::size_t samples_v = 48;
  Texture texture_class = Texture::smooth;
  std::array<double, kTextureCount> friction = {0.3, 0.5, 0.8, 1.0};

  void validate() const {
    if (!(size_min > 0.0) || !(size_max >= size_min))
      throw config_error("object class: size range must be positive");
    if (!(shape_min > 0.0) || !(shape_max >= shape_min) || shape_max > 2.0)
      throw config_error("object class: shape exponents must lie in (0, 2]");
    if (!(texture_amplitude >= 0.0) || texture_amplitude >= 0.25 * size_min)
      throw config_error(
          "object class: texture amplitude must be small against size");
    if (!(mass_min > 0.0) || !(mass_max >= mass_min))
      throw config_error("object class: mass range must be positive");
    if (samples_u < 16 || samples_v < 8)
      throw config_error("object class: surface sampling too sparse");
    for (double mu : friction)
      if (!(mu > 0.1) || mu > 1.5)
        throw config_error("object class: friction must lie in (0.1, 1.5]");
  }
};

// A point-sampled closed surface with outward normals plus its physical
// labels: the per-object side of one record.
struct ObjectSpec {
  std::string id = "superquadric";
  std::vector<Vec3> points;
  std::vector<Vec3> normals;
  double mass_kg = 0.1;
  Texture texture_class = Texture::smooth;
  double friction_mu = 0.5;

  void validate() const {
    if (points.empty() || points.size() != normals.size())
      throw contract_error("object: empty or inconsistent surface sampling");
    if (!(mass_kg > 0.0)) throw contract_error("object: mass must be > 0");
    if (!(friction_mu > 0.1) || friction_mu > 1.5)
      throw contract_error("object: friction must lie in (0.1, 1.5]");
  }
};

namespace detail {

inline Vec3 cross(const Vec3& a, const Vec3& b) {
  return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z,
          a.x * b.y - a.y * b.x};
}

inline double signed_pow(double t, double e) {
  return (t < 0.0 ? -1.0 : 1.0) * std::pow(std::abs(t), e);
}

// Relative strength of the geometric displacement per texture class.
inline double displacement_gain(Texture t) {
  constexpr std::array<double, kTextureCount> gain = {0.0, 0.4, 0.7, 1.0};
  return gain[static_cast<std::size_t>(t)];
}

// Angular displacement pattern: bumps for grains, longitudinal ridges.
inline double surface_bump(Texture t, double omega, double beta) {
  switch (t) {
    case Texture::smooth:
      return 0.0;
    case Texture::fine_grain:
      return std::sin(10.0 * omega) * std::cos(7.0 * beta);
    case Texture::coarse_grain:
      return std::sin(5.0 * omega) * std::cos(4.0 * beta);
    case Texture::ridged:
      return std::sin(8.0 * omega);
  }
  return 0.0;
}

struct SuperquadricShape {
  double a, b, c, e1, e2, amplitude;
  Texture texture;

  Vec3 at(double omega, double beta) const {
    const double cb = signed_pow(std::cos(beta), e1);
    Vec3 p{a * cb * signed_pow(std::cos(omega), e2),
           b * cb * signed_pow(std::sin(omega), e2),
           c * signed_pow(std::sin(beta), e1)};
    if (amplitude > 0.0) {
      const double n = p.norm();
      if (n > 0.0)
        p = p + p * (amplitude * surface_bump(texture, omega, beta) / n);
    }
    return p;
  }

  Vec3 normal_at(double omega, double beta) const {
    const double h = 1e-5;
    const Vec3 du = at(omega + h, beta) - at(omega - h, beta);
    const Vec3 dv = at(omega, beta + h) - at(omega, beta - h);
    Vec3 n = cross(du, dv).normalized();
    if (n.dot(at(omega, beta)) < 0.0) n = n * -1.0;  // origin is inside
    return n;
  }
};

}  // namespace detail

// Deterministic stand-in for a scanned object: a superquadric surface with a
// texture-dependent displacement field, sampled on a pole-free angular grid.
inline ObjectSpec synthesize_object(Rng& rng, const ClassParams& params) {
  params.validate();
  detail::SuperquadricShape shape;
  shape.a = rng.uniform(params.size_min, params.size_max);
  shape.b = rng.uniform(params.size_min, params.size_max);
  shape.c = rng.uniform(params.size_min, params.size_max);
  shape.e1 = rng.uniform(params.shape_min, params.shape_max);
  shape.e2 = rng.uniform(params.shape_min, params.shape_max);
  shape.amplitude =
      params.texture_amplitude * detail::displacement_gain(params.texture_class);
  shape.texture = params.texture_class;

  ObjectSpec obj;
  obj.mass_kg = rng.uniform(params.mass_min, params.mass_max);
  obj.texture_class = params.texture_class;
  obj.friction_mu =
      params.friction[static_cast<std::size_t>(params.texture_class)];
  obj.points.reserve(params.samples_u * params.samples_v);
  obj.normals.reserve(params.samples_u * params.samples_v);
  for (std::size_t j = 0; j < params.samples_v; ++j) {
    // Equal-area latitude bands keep the sampled density near-uniform.
    const double beta =
        std::asin(2.0 * (static_cast<double>(j) + 0.5) /
                      static_cast<double>(params.samples_v) -
                  1.0);
    for (std::size_t i = 0; i < params.samples_u; ++i) {
      const double omega =
          -M_PI + 2.0 * M_PI * (static_cast<double>(i) + 0.5) /
                      static_cast<double>(params.samples_u);
      obj.points.push_back(shape.at(omega, beta));
      obj.normals.push_back(shape.normal_at(omega, beta));
    }
  }
  obj.validate();
  return obj;
}

namespace detail {

// RMS distance of nearby surface points from the tangent plane at point i.
inline std::vector<double> surface_flatness(const ObjectSpec& obj,
                                            double radius) {
  const std::size_t n = obj.points.size();
  const double r2 = radius * radius;
  std::vector<double> proxy(n, std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < n; ++i) {
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t j = 0; j < n; ++j) {
      const Vec3 d = obj.points[j] - obj.points[i];
      if (d.dot(d) > r2) continue;
      const double e = obj.normals[i].dot(d);
      sum += e * e;
      ++count;
    }
    if (count >= 8) proxy[i] = std::sqrt(sum / static_cast<double>(count));
  }
  return proxy;
}

// Sensor pose looking along -normal with the site at a fixed standoff depth.
inline Pose candidate_pose(const Vec3& site, const Vec3& normal) {
  const Vec3 z = normal.normalized() * -1.0;
  Vec3 seed{1.0, 0.0, 0.0};
  const double ax = std::abs(z.x), ay = std::abs(z.y), az = std::abs(z.z);
  if (ay <= ax && ay <= az)
    seed = {0.0, 1.0, 0.0};
  else if (az <= ax && az <= ay)
    seed = {0.0, 0.0, 1.0};
  const Vec3 x = cross(seed, z).normalized();
  const Vec3 y = cross(z, x);
  Pose pose;
  pose.r = {x.x, x.y, x.z, y.x, y.y, y.z, z.x, z.y, z.z};
  const Vec3 rq = pose.apply(site);  // rotation only so far (t = 0)
  pose.t = Vec3{-rq.x, -rq.y, -rq.z + kCandidateStandoff};
  return pose;
}

}  // namespace detail

// Candidate generator standing in for an external pose proposer: antipodal
// -style sensor poses centered on surface points, scored by local flatness.
// The first candidate sits on the flattest region of the surface.
inline std::vector<GraspCandidate> synthesize_candidates(const ObjectSpec& obj,
                                                         Rng& rng,
                                                         std::size_t n) {
  if (n < 1) throw contract_error("candidates: need n >= 1");
  obj.validate();
  const std::vector<double> proxy = detail::surface_flatness(obj, 7.0);
  std::size_t flattest = 0;
  for (std::size_t i = 1; i < proxy.size(); ++i)
    if (proxy[i] < proxy[flattest]) flattest = i;

  std::vector<GraspCandidate> out;
  out.reserve(n);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t site =
        (k == 0) ? flattest : rng.uniform_int(obj.points.size());
    GraspCandidate cand;
    cand.pose = detail::candidate_pose(obj.points[site], obj.normals[site]);
    const double p = std::isfinite(proxy[site]) ? proxy[site] : 2.0;
    cand.score_s = std::clamp(0.97 - 1.2 * p, 0.03, 0.97);
    out.push_back(cand);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Record schema and on-disk dataset
// ---------------------------------------------------------------------------

// Scalar header of each record, followed by three grid-sized planes:
// patch depth map, current imprint, optimal imprint.
constexpr std::size_t kRecordHeaderDims = 10;
constexpr std::size_t kFieldGraspIndex = 0;
constexpr std::size_t kFieldObjectIndex = 1;
constexpr std::size_t kFieldTexture = 2;
constexpr std::size_t kFieldMass = 3;
constexpr std::size_t kFieldFriction = 4;
constexpr std::size_t kFieldCommandU = 5;
constexpr std::size_t kFieldFeedbackU = 6;
constexpr std::size_t kFieldUStar = 7;
constexpr std::size_t kFieldFStar = 8;
constexpr std::size_t kFieldForce = 9;

struct GenConfig {
  std::size_t object_count = 4;
  std::size_t grasps_per_object = 3;
  std::size_t frames_per_grasp = 10;
  std::size_t grid_rows = 32;
  std::size_t grid_cols = 32;
  double window_w = 20.0;
  double window_h = 20.0;
  double sweep_overshoot = 0.2;  // mm of extra closing past the optimum
  std::uint64_t seed = 1;
  PlantConfig plant;
  ClassParams object_params;

  std::size_t grid_size() const { return grid_rows * grid_cols; }
  std::size_t record_dims() const {
    return kRecordHeaderDims + 3 * grid_size();
  }

  void validate() const {
    if (grasps_per_object < 1 || frames_per_grasp < 2)
      throw config_error("dataset: need >= 1 grasp and >= 2 frames per grasp");
    if (grid_rows < 8 || grid_cols < 8)
      throw config_error("dataset: sensor grid must be at least 8x8");
    if (!(window_w > 0.0) || !(window_h > 0.0))
      throw config_error("dataset: contact window must be positive");
    if (!(sweep_overshoot > 0.0))
      throw config_error("dataset: sweep must pass the optimal closing point");
    plant.validate();
    object_params.validate();
  }
};

struct ObjectInfo {
  std::string id;
  double mass_kg = 0.0;
  Texture texture = Texture::smooth;
  double friction_mu = 0.0;
};

struct GraspInfo {
  std::size_t object_index = 0;
  double score_s = 0.0;
  double u_star_mm = 0.0;
  double f_star_n = 0.0;
  std::size_t first_record = 0;
  std::size_t frame_count = 0;
};

struct DatasetManifest {
  std::uint32_t version = phyt::kVersion;
  std::size_t grid_rows = 0;
  std::size_t grid_cols = 0;
  double window_w = 0.0;
  double window_h = 0.0;
  double aperture_max = 0.0;
  double contact_aperture = 0.0;
  std::uint64_t seed = 0;
  std::size_t record_count = 0;
  std::size_t dims = 0;
  std::vector<std::uint64_t> offsets;
  std::vector<ObjectInfo> objects;
  std::vector<GraspInfo> grasps;
};

// One dataset entry: the object/physics labels, the contact patch (as its
// rasterized depth map), the aperture pair, and the imprint pair.
struct GraspRecord {
  std::size_t grasp_index = 0;
  std::size_t object_index = 0;
  std::string object_id;
  Texture texture = Texture::smooth;
  double mass_kg = 0.0;
  double friction_mu = 0.0;
  double command_u = 0.0;
  double feedback_u = 0.0;
  double u_star_mm = 0.0;
  double f_star_n = 0.0;
  double force_n = 0.0;
  ContactPatch patch;
  ImprintImage imprint_current;
  ImprintImage imprint_optimal;
};

namespace detail {

inline nlohmann::ordered_json manifest_to_json(const DatasetManifest& m) {
  nlohmann::ordered_json j;
  j["version"] = m.version;
  j["grid_rows"] = m.grid_rows;
  j["grid_cols"] = m.grid_cols;
  j["window_w"] = m.window_w;
  j["window_h"] = m.window_h;
  j["aperture_max"] = m.aperture_max;
  j["contact_aperture"] = m.contact_aperture;
  j["seed"] = m.seed;
  j["record_count"] = m.record_count;
  j["dims"] = m.dims;
  j["offsets"] = m.offsets;
  j["objects"] = nlohmann::ordered_json::array();
  for (const ObjectInfo& o : m.objects)
    j["objects"].push_back({{"id", o.id},
                            {"mass_kg", o.mass_kg},
                            {"texture", texture_name(o.texture)},
                            {"friction_mu", o.friction_mu}});
  j["grasps"] = nlohmann::ordered_json::array();
  for (const GraspInfo& g : m.grasps)
    j["grasps"].push_back({{"object_index", g.object_index},
                           {"score_s", g.score_s},
                           {"u_star_mm", g.u_star_mm},
                           {"f_star_n", g.f_star_n},
                           {"first_record", g.first_record},
                           {"frame_count", g.frame_count}});
  return j;
}

inline DatasetManifest manifest_from_json(const nlohmann::json& j) {
  DatasetManifest m;
  try {
    m.version = j.at("version").get<std::uint32_t>();
    m.grid_rows = j.at("grid_rows").get<std::size_t>();
    m.grid_cols = j.at("grid_cols").get<std::size_t>();
    m.window_w = j.at("window_w").get<double>();
    m.window_h = j.at("window_h").get<double>();
    m.aperture_max = j.at("aperture_max").get<double>();
    m.contact_aperture = j.at("contact_aperture").get<double>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.record_count = j.at("record_count").get<std::size_t>();
    m.dims = j.at("dims").get<std::size_t>();
    m.offsets = j.at("offsets").get<std::vector<std::uint64_t>>();
    for (const auto& o : j.at("objects")) {
      ObjectInfo info;
      info.id = o.at("id").get<std::string>();
      info.mass_kg = o.at("mass_kg").get<double>();
      info.texture = texture_from_name(o.at("texture").get<std::string>());
      info.friction_mu = o.at("friction_mu").get<double>();
      m.objects.push_back(info);
    }
    for (const auto& g : j.at("grasps")) {
      GraspInfo info;
      info.object_index = g.at("object_index").get<std::size_t>();
      info.score_s = g.at("score_s").get<double>();
      info.u_star_mm = g.at("u_star_mm").get<double>();
      info.f_star_n = g.at("f_star_n").get<double>();
      info.first_record = g.at("first_record").get<std::size_t>();
      info.frame_count = g.at("frame_count").get<std::size_t>();
      m.grasps.push_back(info);
    }
  } catch (const nlohmann::json::exception& e) {
    throw artifact_error(std::string("manifest field error: ") + e.what());
  }
  return m;
}

// Strictly decreasing aperture schedule from u0 to u1 with jittered interior
// spacing (non-uniform steps make the closing dynamics identifiable).
inline std::vector<double> sweep_apertures(Rng& rng, double u0, double u1,
                                           std::size_t frames) {
  std::vector<double> out(frames);
  const double last = static_cast<double>(frames - 1);
  for (std::size_t i = 0; i < frames; ++i) {
    double t = static_cast<double>(i) / last;
    if (i > 0 && i + 1 < frames)
      t += 0.5 * rng.uniform(-0.5, 0.5) / last;  // |jitter| < half a step
    out[i] = u0 + (u1 - u0) * t;
  }
  return out;
}

}  // namespace detail

// Generates the full synthetic dataset: per object a superquadric surface
// and candidate poses; per grasp an aperture sweep from first contact to
// just past the force optimum, with the optimal imprint rendered noise-free
// at the analytic optimal aperture. Writes manifest.json + records.bin.
inline DatasetManifest generate_dataset(const GenConfig& cfg,
                                        const std::string& out_dir) {
  cfg.validate();
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec || !fs::is_directory(out_dir))
    throw artifact_error("cannot create dataset directory: " + out_dir);

  DatasetManifest m;
  m.grid_rows = cfg.grid_rows;
  m.grid_cols = cfg.grid_cols;
  m.window_w = cfg.window_w;
  m.window_h = cfg.window_h;
  m.aperture_max = cfg.plant.aperture_max;
  m.contact_aperture = cfg.plant.contact_aperture;
  m.seed = cfg.seed;
  m.dims = cfg.record_dims();

  phyt::Writer writer(out_dir + "/records.bin",
                      static_cast<std::uint32_t>(m.dims));
  Rng root(cfg.seed);
  std::vector<double> row(m.dims);
  std::size_t grasp_index = 0;

  for (std::size_t oi = 0; oi < cfg.object_count; ++oi) {
    ClassParams params = cfg.object_params;
    params.texture_class =
        static_cast<Texture>(oi % static_cast<std::size_t>(kTextureCount));
    Rng obj_rng = root.derive(1000 + oi);
    ObjectSpec obj = synthesize_object(obj_rng, params);
    obj.id = "object-" + std::to_string(oi);
    m.objects.push_back(
        {obj.id, obj.mass_kg, obj.texture_class, obj.friction_mu});

    const std::vector<GraspCandidate> cands =
        synthesize_candidates(obj, obj_rng, cfg.grasps_per_object);
    const Material mat{obj.texture_class, obj.mass_kg, obj.friction_mu};

    for (std::size_t gi = 0; gi < cands.size(); ++gi, ++grasp_index) {
      const ContactPatch patch =
          extract_patch(obj.points, cands[gi].pose, cfg.window_w, cfg.window_h,
                        cfg.grid_rows, cfg.grid_cols);
      const double u_star = optimal_aperture(patch, mat, cfg.plant);
      const double f_star =
          optimal_force(mat.mass_kg, mat.friction_mu, cfg.plant);
      Rng grasp_rng = obj_rng.derive(500 + gi);
      const ImprintImage x_s = render_imprint(patch, u_star, cfg.plant,
                                              mat.texture, grasp_rng, 0.0);
      const std::vector<double> apertures = detail::sweep_apertures(
          grasp_rng, cfg.plant.contact_aperture,
          u_star - cfg.sweep_overshoot, cfg.frames_per_grasp);

      double prev_mean = -std::numeric_limits<double>::infinity();
      for (std::size_t fi = 0; fi < apertures.size(); ++fi) {
        const double u = apertures[fi];
        const double force = contact_force(patch, u, cfg.plant, mat.texture);
        ImprintImage x_c;
        double mean = 0.0;
        for (int attempt = 0;; ++attempt) {
          if (attempt >= 100)
            throw numeric_error(
                "dataset: imprint intensity failed to increase along sweep");
          x_c = render_imprint(patch, u, cfg.plant, mat.texture, grasp_rng);
          mean = x_c.mean();
          if (fi == 0 || mean >= prev_mean + 1e-6) break;
        }
        prev_mean = mean;

        row[kFieldGraspIndex] = static_cast<double>(grasp_index);
        row[kFieldObjectIndex] = static_cast<double>(oi);
        row[kFieldTexture] = static_cast<double>(mat.texture);
        row[kFieldMass] = mat.mass_kg;
        row[kFieldFriction] = mat.friction_mu;
        row[kFieldCommandU] = u;
        row[kFieldFeedbackU] = u;  // commanded aperture is achieved exactly
        row[kFieldUStar] = u_star;
        row[kFieldFStar] = f_star;
        row[kFieldForce] = force;
        const std::size_t g = cfg.grid_size();
        std::copy(patch.depth_map.begin(), patch.depth_map.end(),
                  row.begin() + kRecordHeaderDims);
        std::copy(x_c.pix.begin(), x_c.pix.end(),
                  row.begin() + kRecordHeaderDims + g);
        std::copy(x_s.pix.begin(), x_s.pix.end(),
                  row.begin() + kRecordHeaderDims + 2 * g);
        m.offsets.push_back(writer.write_record(row));
      }
      m.grasps.push_back({oi, cands[gi].score_s, u_star, f_star,
                          grasp_index * cfg.frames_per_grasp,
                          cfg.frames_per_grasp});
    }
  }
  writer.finish();
  m.record_count = m.offsets.size();

  std::ofstream mf(out_dir + "/manifest.json", std::ios::binary);
  if (!mf) throw artifact_error("cannot write manifest in " + out_dir);
  mf << detail::manifest_to_json(m).dump(2) << "\n";
  if (!mf.flush()) throw artifact_error("manifest write failed in " + out_dir);
  return m;
}

inline DatasetManifest load_manifest(const std::string& dir) {
  std::ifstream f(dir + "/manifest.json", std::ios::binary);
  if (!f) throw artifact_error("missing dataset manifest in " + dir);
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(f);
  } catch (const nlohmann::json::exception& e) {
    throw artifact_error(std::string("manifest parse failure: ") + e.what());
  }
  DatasetManifest m = detail::manifest_from_json(j);
  if (m.version != phyt::kVersion)
    throw artifact_error("unsupported dataset version " +
                         std::to_string(m.version));
  if (m.offsets.size() != m.record_count)
    throw artifact_error("manifest offsets do not match record count");
  if (m.dims != kRecordHeaderDims + 3 * m.grid_rows * m.grid_cols)
    throw artifact_error("manifest dims do not match sensor grid");
  std::size_t total = 0;
  for (const GraspInfo& g : m.grasps) {
    if (g.first_record != total || g.frame_count == 0 ||
        g.object_index >= m.objects.size())
      throw artifact_error("manifest grasp table is inconsistent");
    total += g.frame_count;
  }
  if (total != m.record_count)
    throw artifact_error("manifest grasp table does not cover all records");
  return m;
}

// Streaming, validating reader over a generated dataset directory.
class DatasetReader {
 public:
  explicit DatasetReader(const std::string& dir)
      : manifest_(load_manifest(dir)), reader_(dir + "/records.bin") {
    if (reader_.dims() != manifest_.dims)
      throw artifact_error("records.bin dims do not match manifest");
  }

  const DatasetManifest& manifest() const { return manifest_; }

  // Reads and validates the next record; false once the dataset is done.
  bool next(GraspRecord& out) {
    if (index_ == manifest_.record_count) {
      std::vector<double> extra;
      if (!drained_ && reader_.next_record(extra))
        throw artifact_error("records.bin holds more records than manifest");
      drained_ = true;
      return false;
    }
    std::vector<double> row;
    if (!reader_.next_record(row))
      throw artifact_error("records.bin ended before manifest record count");
    unpack(row, out);
    validate(out, row);
    ++index_;
    return true;
  }

 private:
  static std::size_t as_index(double v, std::size_t bound, const char* what) {
    const double r = std::round(v);
    if (!(std::abs(v - r) <= 1e-9) || r < 0.0 ||
        r >= static_cast<double>(bound))
      throw artifact_error(std::string("record field out of range: ") + what);
    return static_cast<std::size_t>(r);
  }

  void unpack(const std::vector<double>& row, GraspRecord& out) const {
    const std::size_t g = manifest_.grid_rows * manifest_.grid_cols;
    out.grasp_index =
        as_index(row[kFieldGraspIndex], manifest_.grasps.size(), "grasp");
    out.object_index =
        as_index(row[kFieldObjectIndex], manifest_.objects.size(), "object");
    out.object_id = manifest_.objects[out.object_index].id;
    out.texture = static_cast<Texture>(as_index(
        row[kFieldTexture], static_cast<std::size_t>(kTextureCount),
        "texture"));
    out.mass_kg = row[kFieldMass];
    out.friction_mu = row[kFieldFriction];
    out.command_u = row[kFieldCommandU];
    out.feedback_u = row[kFieldFeedbackU];
    out.u_star_mm = row[kFieldUStar];
    out.f_star_n = row[kFieldFStar];
    out.force_n = row[kFieldForce];
    out.patch.points.clear();
    out.patch.window_w = manifest_.window_w;
    out.patch.window_h = manifest_.window_h;
    out.patch.depth_map = Mat(manifest_.grid_rows, manifest_.grid_cols);
    std::copy(row.begin() + kRecordHeaderDims,
              row.begin() + kRecordHeaderDims + g,
              out.patch.depth_map.begin());
    out.imprint_current.rows = manifest_.grid_rows;
    out.imprint_current.cols = manifest_.grid_cols;
    out.imprint_current.pix.assign(row.begin() + kRecordHeaderDims + g,
                                   row.begin() + kRecordHeaderDims + 2 * g);
    out.imprint_optimal.rows = manifest_.grid_rows;
    out.imprint_optimal.cols = manifest_.grid_cols;
    out.imprint_optimal.pix.assign(row.begin() + kRecordHeaderDims + 2 * g,
                                   row.end());
  }

  void fail(const std::string& what) const {
    throw artifact_error("record " + std::to_string(index_) +
                         " invalid: " + what);
  }

  void validate(const GraspRecord& rec, const std::vector<double>& row) {
    for (double v : row)
      if (!std::isfinite(v)) fail("non-finite field");
    const GraspInfo& grasp = manifest_.grasps[rec.grasp_index];
    if (grasp.first_record > index_ ||
        index_ >= grasp.first_record + grasp.frame_count)
      fail("record outside its grasp block");
    if (rec.object_index != grasp.object_index)
      fail("object does not match grasp table");
    if (!(rec.mass_kg > 0.0)) fail("mass must be > 0");
    if (!(rec.friction_mu > 0.1) || rec.friction_mu > 1.5)
      fail("friction outside (0.1, 1.5]");
    const ObjectInfo& obj = manifest_.objects[rec.object_index];
    if (std::abs(rec.mass_kg - obj.mass_kg) > 1e-5 * std::max(1.0, obj.mass_kg))
      fail("mass disagrees with manifest");
    if (rec.texture != obj.texture) fail("texture disagrees with manifest");
    for (double u : {rec.command_u, rec.feedback_u, rec.u_star_mm})
      if (!(u >= 0.0) || u > manifest_.aperture_max)
        fail("aperture outside [0, aperture_max]");
    if (!(rec.f_star_n >= 0.0) || !(rec.force_n >= 0.0))
      fail("negative force");
    for (std::size_t k = 0; k < rec.patch.depth_map.size(); ++k)
      if (!(rec.patch.depth_map[k] > 0.0)) fail("non-positive patch depth");
    if (!rec.imprint_current.in_unit_range() ||
        !rec.imprint_optimal.in_unit_range())
      fail("imprint outside [0, 1]");

    if (rec.grasp_index != current_grasp_) {
      if (rec.grasp_index != current_grasp_ + 1 && index_ != 0)
        fail("grasp blocks out of order");
      current_grasp_ = rec.grasp_index;
      prev_feedback_ = std::numeric_limits<double>::infinity();
      prev_mean_ = -std::numeric_limits<double>::infinity();
      first_optimal_ = rec.imprint_optimal.pix;
      first_u_star_ = rec.u_star_mm;
      first_f_star_ = rec.f_star_n;
    } else {
      if (rec.imprint_optimal.pix != first_optimal_)
        fail("optimal imprint changed within a grasp");
      if (rec.u_star_mm != first_u_star_ || rec.f_star_n != first_f_star_)
        fail("grasp optimum changed within a grasp");
    }
    if (rec.feedback_u > prev_feedback_ + 1e-9)
      fail("feedback aperture increased within a grasp");
    const double mean = rec.imprint_current.mean();
    if (mean < prev_mean_ - 1e-9)
      fail("imprint mean intensity decreased within a grasp");
    prev_feedback_ = rec.feedback_u;
    prev_mean_ = mean;
  }

  DatasetManifest manifest_;
  phyt::Reader reader_;
  std::size_t index_ = 0;
  bool drained_ = false;
  std::size_t current_grasp_ = static_cast<std::size_t>(-1);
  double prev_feedback_ = std::numeric_limits<double>::infinity();
  double prev_mean_ = -std::numeric_limits<double>::infinity();
  std::vector<double> first_optimal_;
  double first_u_star_ = 0.0;
  double first_f_star_ = 0.0;
};

}  // namespace phytac
