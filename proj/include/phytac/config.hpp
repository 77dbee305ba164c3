#pragma once

#include <cstdint>
#include <fstream>
#include <initializer_list>
#include <sstream>
#include <string>

#include <nlohmann/json.hpp>

#include "phytac/codec.hpp"
#include "phytac/control.hpp"
#include "phytac/dataset.hpp"
#include "phytac/diffusion.hpp"
#include "phytac/errors.hpp"
#include "phytac/geometry.hpp"
#include "phytac/plant.hpp"

namespace phytac {

enum class GoalSource { oracle, ldm };

inline const char* goal_source_name(GoalSource g) {
  return g == GoalSource::oracle ? "oracle" : "ldm";
}

inline GoalSource goal_source_from_name(const std::string& name) {
  if (name == "oracle") return GoalSource::oracle;
  if (name == "ldm") return GoalSource::ldm;
  throw config_error("experiment.goal must be \"oracle\" or \"ldm\", got \"" +
                     name + "\"");
}

struct GeometryConfig {
  RankWeights weights;
  std::size_t top_n = 5;

  void validate() const {
    if (weights.alpha < 0 || weights.beta < 0 || weights.gamma < 0 ||
        weights.delta < 0 || weights.delta > 1)
      throw config_error("geometry: ranking weights out of range");
    if (std::abs(weights.alpha + weights.beta + weights.gamma - 1.0) > 1e-9)
      throw config_error("geometry: alpha+beta+gamma must equal 1");
    if (top_n < 1) throw config_error("geometry: top_n must be >= 1");
  }
};

struct ExperimentConfig {
  std::size_t episodes = 50;        // per policy x object-class cell
  double fixed_force_factor = 2.0;  // preset as a multiple of reference F*
  double tol_f = 0.15;              // FOSG band half-width above F*
  std::size_t holdout = 50;         // trailing records scored by eval
  GoalSource goal = GoalSource::oracle;
  double start_closure = 1.0;        // mm past first contact at episode start
  double start_closure_jitter = 0.3; // mm of seeded per-episode variation
  double open_loop_sigma_mm = 0.8;   // planner width error for the baseline

  void validate() const {
    if (episodes < 1) throw config_error("experiment: episodes must be >= 1");
    if (!(fixed_force_factor > 0.0))
      throw config_error("experiment: fixed_force_factor must be > 0");
    if (!(tol_f >= 0.0)) throw config_error("experiment: tol_f must be >= 0");
    if (holdout < 1) throw config_error("experiment: holdout must be >= 1");
    if (!(start_closure > 0.0))
      throw config_error("experiment: start_closure must be > 0");
    if (!(start_closure_jitter >= 0.0))
      throw config_error("experiment: start_closure_jitter must be >= 0");
    if (!(open_loop_sigma_mm >= 0.0))
      throw config_error("experiment: open_loop_sigma_mm must be >= 0");
  }
};

// Every module's tunables in one file. The plant section and the global seed
// are wired into the dataset section after parsing, so they are stated once.
struct RunConfig {
  std::uint64_t seed = 1;
  std::string out_dir = "out";
  PlantConfig plant;
  CodecConfig codec;
  DiffusionConfig diffusion;
  ControlConfig control;
  GeometryConfig geometry;
  GenConfig dataset;
  ExperimentConfig experiment;

  void wire() {
    dataset.plant = plant;
    dataset.seed = seed;
  }

  void validate() const {
    plant.validate();
    codec.validate();
    diffusion.validate();
    control.validate();
    geometry.validate();
    dataset.validate();
    experiment.validate();
  }
};

namespace detail {

using json = nlohmann::json;

inline void require_known_keys(const json& j, const std::string& section,
                               std::initializer_list<const char*> allowed) {
  if (!j.is_object())
    throw config_error("config: section \"" + section +
                       "\" must be an object");
  for (const auto& item : j.items()) {
    bool known = false;
    for (const char* k : allowed)
      if (item.key() == k) {
        known = true;
        break;
      }
    if (!known)
      throw config_error("config: unknown key \"" +
                         (section.empty() ? item.key()
                                          : section + "." + item.key()) +
                         "\"");
  }
}

inline double get_real(const json& j, const std::string& where) {
  if (!j.is_number())
    throw config_error("config: \"" + where + "\" must be a number");
  return j.get<double>();
}

inline std::uint64_t get_unsigned(const json& j, const std::string& where) {
  if (!j.is_number_unsigned())
    throw config_error("config: \"" + where +
                       "\" must be a non-negative integer");
  return j.get<std::uint64_t>();
}

inline std::size_t get_count(const json& j, const std::string& where) {
  return static_cast<std::size_t>(get_unsigned(j, where));
}

inline std::string get_string(const json& j, const std::string& where) {
  if (!j.is_string())
    throw config_error("config: \"" + where + "\" must be a string");
  return j.get<std::string>();
}

template <std::size_t N>
inline std::array<double, N> get_real_array(const json& j,
                                            const std::string& where) {
  if (!j.is_array() || j.size() != N)
    throw config_error("config: \"" + where + "\" must be an array of " +
                       std::to_string(N) + " numbers");
  std::array<double, N> out{};
  for (std::size_t i = 0; i < N; ++i)
    out[i] = get_real(j[i], where + "[" + std::to_string(i) + "]");
  return out;
}

// Applies `set(value_json, full_key)` if the key is present.
template <class F>
inline void maybe(const json& j, const std::string& section, const char* key,
                  F set) {
  const auto it = j.find(key);
  if (it == j.end()) return;
  set(*it, section.empty() ? std::string(key) : section + "." + key);
}

inline void parse_plant(const json& j, PlantConfig& p) {
  require_known_keys(j, "plant",
                     {"stiffness_k", "texture_amplitude", "imprint_gain",
                      "baseline_intensity", "gravity_g", "safety_s",
                      "aperture_max", "contact_aperture", "force_max",
                      "sensor_noise_sigma"});
  maybe(j, "plant", "stiffness_k", [&](const json& v, const std::string& w) {
    p.stiffness_k = get_real_array<kTextureCount>(v, w);
  });
  maybe(j, "plant", "texture_amplitude",
        [&](const json& v, const std::string& w) {
          p.texture_amplitude = get_real_array<kTextureCount>(v, w);
        });
  maybe(j, "plant", "imprint_gain", [&](const json& v, const std::string& w) {
    p.imprint_gain = get_real(v, w);
  });
  maybe(j, "plant", "baseline_intensity",
        [&](const json& v, const std::string& w) {
          p.baseline_intensity = get_real(v, w);
        });
  maybe(j, "plant", "gravity_g", [&](const json& v, const std::string& w) {
    p.gravity_g = get_real(v, w);
  });
  maybe(j, "plant", "safety_s", [&](const json& v, const std::string& w) {
    p.safety_s = get_real(v, w);
  });
  maybe(j, "plant", "aperture_max", [&](const json& v, const std::string& w) {
    p.aperture_max = get_real(v, w);
  });
  maybe(j, "plant", "contact_aperture",
        [&](const json& v, const std::string& w) {
          p.contact_aperture = get_real(v, w);
        });
  maybe(j, "plant", "force_max", [&](const json& v, const std::string& w) {
    p.force_max = get_real(v, w);
  });
  maybe(j, "plant", "sensor_noise_sigma",
        [&](const json& v, const std::string& w) {
          p.sensor_noise_sigma = get_real(v, w);
        });
}

inline void parse_codec(const json& j, CodecConfig& c) {
  require_known_keys(
      j, "codec", {"m", "hidden", "epochs", "batch", "lr", "e_warm",
                   "lambda_kl"});
  maybe(j, "codec", "m", [&](const json& v, const std::string& w) {
    c.m = get_count(v, w);
  });
  maybe(j, "codec", "hidden", [&](const json& v, const std::string& w) {
    c.hidden = get_count(v, w);
  });
  maybe(j, "codec", "epochs", [&](const json& v, const std::string& w) {
    c.epochs = get_count(v, w);
  });
  maybe(j, "codec", "batch", [&](const json& v, const std::string& w) {
    c.batch = get_count(v, w);
  });
  maybe(j, "codec", "lr", [&](const json& v, const std::string& w) {
    c.lr = get_real(v, w);
  });
  maybe(j, "codec", "e_warm", [&](const json& v, const std::string& w) {
    c.e_warm = get_real(v, w);
  });
  maybe(j, "codec", "lambda_kl", [&](const json& v, const std::string& w) {
    c.lambda_kl = get_real(v, w);
  });
}

inline void parse_diffusion(const json& j, DiffusionConfig& d) {
  require_known_keys(j, "diffusion",
                     {"T", "beta_min", "beta_max", "ddim_steps", "hidden",
                      "steps", "batch", "lr"});
  maybe(j, "diffusion", "T", [&](const json& v, const std::string& w) {
    d.T = get_count(v, w);
  });
  maybe(j, "diffusion", "beta_min", [&](const json& v, const std::string& w) {
    d.beta_min = get_real(v, w);
  });
  maybe(j, "diffusion", "beta_max", [&](const json& v, const std::string& w) {
    d.beta_max = get_real(v, w);
  });
  maybe(j, "diffusion", "ddim_steps",
        [&](const json& v, const std::string& w) {
          d.ddim_steps = get_count(v, w);
        });
  maybe(j, "diffusion", "hidden", [&](const json& v, const std::string& w) {
    d.hidden = get_count(v, w);
  });
  maybe(j, "diffusion", "steps", [&](const json& v, const std::string& w) {
    d.steps = get_count(v, w);
  });
  maybe(j, "diffusion", "batch", [&](const json& v, const std::string& w) {
    d.batch = get_count(v, w);
  });
  maybe(j, "diffusion", "lr", [&](const json& v, const std::string& w) {
    d.lr = get_real(v, w);
  });
}

inline void parse_control(const json& j, ControlConfig& c) {
  require_known_keys(j, "control",
                     {"q_weight", "r_weight", "forgetting", "p0", "delta_in",
                      "window_frames", "du_limit", "resynth_every",
                      "frame_budget", "goal_force_factor"});
  maybe(j, "control", "q_weight", [&](const json& v, const std::string& w) {
    c.q_weight = get_real(v, w);
  });
  maybe(j, "control", "r_weight", [&](const json& v, const std::string& w) {
    c.r_weight = get_real(v, w);
  });
  maybe(j, "control", "forgetting", [&](const json& v, const std::string& w) {
    c.forgetting = get_real(v, w);
  });
  maybe(j, "control", "p0", [&](const json& v, const std::string& w) {
    c.p0 = get_real(v, w);
  });
  maybe(j, "control", "delta_in", [&](const json& v, const std::string& w) {
    c.delta_in = get_real(v, w);
  });
  maybe(j, "control", "window_frames",
        [&](const json& v, const std::string& w) {
          c.window_frames = get_count(v, w);
        });
  maybe(j, "control", "du_limit", [&](const json& v, const std::string& w) {
    c.du_limit = get_real(v, w);
  });
  maybe(j, "control", "resynth_every",
        [&](const json& v, const std::string& w) {
          c.resynth_every = get_count(v, w);
        });
  maybe(j, "control", "frame_budget",
        [&](const json& v, const std::string& w) {
          c.frame_budget = get_count(v, w);
        });
  maybe(j, "control", "goal_force_factor",
        [&](const json& v, const std::string& w) {
          c.goal_force_factor = get_real(v, w);
        });
}

inline void parse_geometry(const json& j, GeometryConfig& g) {
  require_known_keys(j, "geometry",
                     {"alpha", "beta", "gamma", "delta", "top_n"});
  maybe(j, "geometry", "alpha", [&](const json& v, const std::string& w) {
    g.weights.alpha = get_real(v, w);
  });
  maybe(j, "geometry", "beta", [&](const json& v, const std::string& w) {
    g.weights.beta = get_real(v, w);
  });
  maybe(j, "geometry", "gamma", [&](const json& v, const std::string& w) {
    g.weights.gamma = get_real(v, w);
  });
  maybe(j, "geometry", "delta", [&](const json& v, const std::string& w) {
    g.weights.delta = get_real(v, w);
  });
  maybe(j, "geometry", "top_n", [&](const json& v, const std::string& w) {
    g.top_n = get_count(v, w);
  });
}

inline void parse_object_class(const json& j, ClassParams& o) {
  require_known_keys(j, "dataset.object",
                     {"size_min", "size_max", "shape_min", "shape_max",
                      "texture_amplitude", "mass_min", "mass_max", "samples_u",
                      "samples_v", "friction"});
  maybe(j, "dataset.object", "size_min",
        [&](const json& v, const std::string& w) {
          o.size_min = get_real(v, w);
        });
  maybe(j, "dataset.object", "size_max",
        [&](const json& v, const std::string& w) {
          o.size_max = get_real(v, w);
        });
  maybe(j, "dataset.object", "shape_min",
        [&](const json& v, const std::string& w) {
          o.shape_min = get_real(v, w);
        });
  maybe(j, "dataset.object", "shape_max",
        [&](const json& v, const std::string& w) {
          o.shape_max = get_real(v, w);
        });
  maybe(j, "dataset.object", "texture_amplitude",
        [&](const json& v, const std::string& w) {
          o.texture_amplitude = get_real(v, w);
        });
  maybe(j, "dataset.object", "mass_min",
        [&](const json& v, const std::string& w) {
          o.mass_min = get_real(v, w);
        });
  maybe(j, "dataset.object", "mass_max",
        [&](const json& v, const std::string& w) {
          o.mass_max = get_real(v, w);
        });
  maybe(j, "dataset.object", "samples_u",
        [&](const json& v, const std::string& w) {
          o.samples_u = get_count(v, w);
        });
  maybe(j, "dataset.object", "samples_v",
        [&](const json& v, const std::string& w) {
          o.samples_v = get_count(v, w);
        });
  maybe(j, "dataset.object", "friction",
        [&](const json& v, const std::string& w) {
          o.friction = get_real_array<kTextureCount>(v, w);
        });
}

inline void parse_dataset(const json& j, GenConfig& d) {
  require_known_keys(j, "dataset",
                     {"object_count", "grasps_per_object", "frames_per_grasp",
                      "grid_rows", "grid_cols", "window_w", "window_h",
                      "sweep_overshoot", "object"});
  maybe(j, "dataset", "object_count",
        [&](const json& v, const std::string& w) {
          d.object_count = get_count(v, w);
        });
  maybe(j, "dataset", "grasps_per_object",
        [&](const json& v, const std::string& w) {
          d.grasps_per_object = get_count(v, w);
        });
  maybe(j, "dataset", "frames_per_grasp",
        [&](const json& v, const std::string& w) {
          d.frames_per_grasp = get_count(v, w);
        });
  maybe(j, "dataset", "grid_rows", [&](const json& v, const std::string& w) {
    d.grid_rows = get_count(v, w);
  });
  maybe(j, "dataset", "grid_cols", [&](const json& v, const std::string& w) {
    d.grid_cols = get_count(v, w);
  });
  maybe(j, "dataset", "window_w", [&](const json& v, const std::string& w) {
    d.window_w = get_real(v, w);
  });
  maybe(j, "dataset", "window_h", [&](const json& v, const std::string& w) {
    d.window_h = get_real(v, w);
  });
  maybe(j, "dataset", "sweep_overshoot",
        [&](const json& v, const std::string& w) {
          d.sweep_overshoot = get_real(v, w);
        });
  maybe(j, "dataset", "object", [&](const json& v, const std::string&) {
    parse_object_class(v, d.object_params);
  });
}

inline void parse_experiment(const json& j, ExperimentConfig& e) {
  require_known_keys(j, "experiment",
                     {"episodes", "fixed_force_factor", "tol_f", "holdout",
                      "goal", "start_closure", "start_closure_jitter",
                      "open_loop_sigma_mm"});
  maybe(j, "experiment", "episodes",
        [&](const json& v, const std::string& w) {
          e.episodes = get_count(v, w);
        });
  maybe(j, "experiment", "fixed_force_factor",
        [&](const json& v, const std::string& w) {
          e.fixed_force_factor = get_real(v, w);
        });
  maybe(j, "experiment", "tol_f", [&](const json& v, const std::string& w) {
    e.tol_f = get_real(v, w);
  });
  maybe(j, "experiment", "holdout", [&](const json& v, const std::string& w) {
    e.holdout = get_count(v, w);
  });
  maybe(j, "experiment", "goal", [&](const json& v, const std::string& w) {
    e.goal = goal_source_from_name(get_string(v, w));
  });
  maybe(j, "experiment", "start_closure",
        [&](const json& v, const std::string& w) {
          e.start_closure = get_real(v, w);
        });
  maybe(j, "experiment", "start_closure_jitter",
        [&](const json& v, const std::string& w) {
          e.start_closure_jitter = get_real(v, w);
        });
  maybe(j, "experiment", "open_loop_sigma_mm",
        [&](const json& v, const std::string& w) {
          e.open_loop_sigma_mm = get_real(v, w);
        });
}

}  // namespace detail

// Parse a full run configuration from JSON text. Absent sections and keys
// keep their defaults; unknown keys anywhere are rejected.
inline RunConfig parse_config(const std::string& text) {
  namespace dj = detail;
  dj::json j;
  try {
    j = dj::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw config_error(std::string("config: invalid JSON: ") + e.what());
  }
  RunConfig rc;
  dj::require_known_keys(j, "",
                         {"seed", "out", "plant", "codec", "diffusion",
                          "control", "geometry", "dataset", "experiment"});
  dj::maybe(j, "", "seed", [&](const dj::json& v, const std::string& w) {
    rc.seed = dj::get_unsigned(v, w);
  });
  dj::maybe(j, "", "out", [&](const dj::json& v, const std::string& w) {
    rc.out_dir = dj::get_string(v, w);
  });
  dj::maybe(j, "", "plant", [&](const dj::json& v, const std::string&) {
    dj::parse_plant(v, rc.plant);
  });
  dj::maybe(j, "", "codec", [&](const dj::json& v, const std::string&) {
    dj::parse_codec(v, rc.codec);
  });
  dj::maybe(j, "", "diffusion", [&](const dj::json& v, const std::string&) {
    dj::parse_diffusion(v, rc.diffusion);
  });
  dj::maybe(j, "", "control", [&](const dj::json& v, const std::string&) {
    dj::parse_control(v, rc.control);
  });
  dj::maybe(j, "", "geometry", [&](const dj::json& v, const std::string&) {
    dj::parse_geometry(v, rc.geometry);
  });
  dj::maybe(j, "", "dataset", [&](const dj::json& v, const std::string&) {
    dj::parse_dataset(v, rc.dataset);
  });
  dj::maybe(j, "", "experiment", [&](const dj::json& v, const std::string&) {
    dj::parse_experiment(v, rc.experiment);
  });
  rc.wire();
  rc.validate();
  return rc;
}

// A missing or unreadable configuration file is a configuration problem, not
// a missing pipeline artifact.
inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw config_error("config: cannot open " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

// Complete defaults as a JSON document (documentation and round-trip tests).
inline std::string default_config_text() {
  const RunConfig rc;
  nlohmann::ordered_json j;
  j["seed"] = rc.seed;
  j["out"] = rc.out_dir;
  j["plant"] = {{"stiffness_k", rc.plant.stiffness_k},
                {"texture_amplitude", rc.plant.texture_amplitude},
                {"imprint_gain", rc.plant.imprint_gain},
                {"baseline_intensity", rc.plant.baseline_intensity},
                {"gravity_g", rc.plant.gravity_g},
                {"safety_s", rc.plant.safety_s},
                {"aperture_max", rc.plant.aperture_max},
                {"contact_aperture", rc.plant.contact_aperture},
                {"force_max", rc.plant.force_max},
                {"sensor_noise_sigma", rc.plant.sensor_noise_sigma}};
  j["codec"] = {{"m", rc.codec.m},         {"hidden", rc.codec.hidden},
                {"epochs", rc.codec.epochs}, {"batch", rc.codec.batch},
                {"lr", rc.codec.lr},       {"e_warm", rc.codec.e_warm},
                {"lambda_kl", rc.codec.lambda_kl}};
  j["diffusion"] = {{"T", rc.diffusion.T},
                    {"beta_min", rc.diffusion.beta_min},
                    {"beta_max", rc.diffusion.beta_max},
                    {"ddim_steps", rc.diffusion.ddim_steps},
                    {"hidden", rc.diffusion.hidden},
                    {"steps", rc.diffusion.steps},
                    {"batch", rc.diffusion.batch},
                    {"lr", rc.diffusion.lr}};
  j["control"] = {{"q_weight", rc.control.q_weight},
                  {"r_weight", rc.control.r_weight},
                  {"forgetting", rc.control.forgetting},
                  {"p0", rc.control.p0},
                  {"delta_in", rc.control.delta_in},
                  {"window_frames", rc.control.window_frames},
                  {"du_limit", rc.control.du_limit},
                  {"resynth_every", rc.control.resynth_every},
                  {"frame_budget", rc.control.frame_budget},
                  {"goal_force_factor", rc.control.goal_force_factor}};
  j["geometry"] = {{"alpha", rc.geometry.weights.alpha},
                   {"beta", rc.geometry.weights.beta},
                   {"gamma", rc.geometry.weights.gamma},
                   {"delta", rc.geometry.weights.delta},
                   {"top_n", rc.geometry.top_n}};
  j["dataset"] = {
      {"object_count", rc.dataset.object_count},
      {"grasps_per_object", rc.dataset.grasps_per_object},
      {"frames_per_grasp", rc.dataset.frames_per_grasp},
      {"grid_rows", rc.dataset.grid_rows},
      {"grid_cols", rc.dataset.grid_cols},
      {"window_w", rc.dataset.window_w},
      {"window_h", rc.dataset.window_h},
      {"sweep_overshoot", rc.dataset.sweep_overshoot},
      {"object",
       {{"size_min", rc.dataset.object_params.size_min},
        {"size_max", rc.dataset.object_params.size_max},
        {"shape_min", rc.dataset.object_params.shape_min},
        {"shape_max", rc.dataset.object_params.shape_max},
        {"texture_amplitude", rc.dataset.object_params.texture_amplitude},
        {"mass_min", rc.dataset.object_params.mass_min},
        {"mass_max", rc.dataset.object_params.mass_max},
        {"samples_u", rc.dataset.object_params.samples_u},
        {"samples_v", rc.dataset.object_params.samples_v},
        {"friction", rc.dataset.object_params.friction}}}};
  j["experiment"] = {
      {"episodes", rc.experiment.episodes},
      {"fixed_force_factor", rc.experiment.fixed_force_factor},
      {"tol_f", rc.experiment.tol_f},
      {"holdout", rc.experiment.holdout},
      {"goal", goal_source_name(rc.experiment.goal)},
      {"start_closure", rc.experiment.start_closure},
      {"start_closure_jitter", rc.experiment.start_closure_jitter},
      {"open_loop_sigma_mm", rc.experiment.open_loop_sigma_mm}};
  return j.dump(2) + "\n";
}

}  // namespace phytac
