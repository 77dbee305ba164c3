#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>

#include "phytac/errors.hpp"
#include "phytac/geometry.hpp"
#include "phytac/image.hpp"
#include "phytac/rng.hpp"

namespace phytac {

enum class Texture : int { smooth = 0, fine_grain = 1, coarse_grain = 2,
                           ridged = 3 };
constexpr int kTextureCount = 4;

inline const char* texture_name(Texture t) {
  switch (t) {
    case Texture::smooth: return "smooth";
    case Texture::fine_grain: return "fine_grain";
    case Texture::coarse_grain: return "coarse_grain";
    case Texture::ridged: return "ridged";
  }
  return "?";
}

inline Texture texture_from_name(const std::string& name) {
  for (int i = 0; i < kTextureCount; ++i)
    if (name == texture_name(static_cast<Texture>(i)))
      return static_cast<Texture>(i);
  throw config_error("unknown texture class: " + name);
}

// What a grasped object looks like to the plant.
struct Material {
  Texture texture = Texture::smooth;
  double mass_kg = 0.1;
  double friction_mu = 0.5;
};

// Quasi-static linear-elastic gel model. The gel front advances half the
// aperture closure per finger: at `contact_aperture` it touches the nearest
// patch point, and closing by du pushes it du/2 deeper.
struct PlantConfig {
  std::array<double, kTextureCount> stiffness_k = {0.08, 0.10, 0.12,
                                                   0.15};  // N/mm^3
  std::array<double, kTextureCount> texture_amplitude = {0.0, 0.05, 0.09,
                                                         0.14};
  double imprint_gain = 2.5;         // intensity per mm penetration
  double baseline_intensity = 0.06;  // no-contact image level
  double gravity_g = 9.81;           // m/s^2
  double safety_s = 1.05;            // F* margin above the slip boundary
  double aperture_max = 60.0;        // mm
  double contact_aperture = 30.0;    // mm, first gel-object contact
  double force_max = 25.0;           // N
  double sensor_noise_sigma = 0.002;

  void validate() const {
    for (double k : stiffness_k)
      if (!(k > 0.0)) throw config_error("plant: stiffness_k must be > 0");
    for (double a : texture_amplitude)
      if (a < 0.0) throw config_error("plant: texture_amplitude must be >= 0");
    if (!(baseline_intensity >= 0.0 && baseline_intensity < 1.0))
      throw config_error("plant: baseline_intensity must be in [0,1)");
    if (!(safety_s >= 1.0)) throw config_error("plant: safety_s must be >= 1");
    if (!(aperture_max > 0.0))
      throw config_error("plant: aperture_max must be > 0");
    if (!(contact_aperture > 0.0 && contact_aperture <= aperture_max))
      throw config_error("plant: contact_aperture outside (0, aperture_max]");
    if (!(force_max > 0.0)) throw config_error("plant: force_max must be > 0");
    if (imprint_gain < 0.0 || sensor_noise_sigma < 0.0 || gravity_g <= 0.0)
      throw config_error("plant: gain/noise/gravity out of range");
  }

  double stiffness(Texture t) const {
    return stiffness_k[static_cast<int>(t)];
  }
  double amplitude(Texture t) const {
    return texture_amplitude[static_cast<int>(t)];
  }
};

struct PlantState {
  double aperture_u = 0.0;   // mm
  double normal_force = 0.0; // N
  bool slipping = true;
  bool clamped = false;      // last step hit an aperture bound
  ImprintImage imprint;
};

namespace detail {

inline double patch_min_depth(const ContactPatch& patch) {
  double d = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < patch.depth_map.size(); ++k)
    d = std::min(d, patch.depth_map[k]);
  return d;
}

inline double gel_front(const ContactPatch& patch, double aperture_u,
                        const PlantConfig& cfg) {
  return patch_min_depth(patch) + 0.5 * (cfg.contact_aperture - aperture_u);
}

// Per-cell penetration in mm; 0 outside contact.
inline double penetration(const ContactPatch& patch, double z_surface,
                          std::size_t r, std::size_t c) {
  return std::max(0.0, z_surface - patch.depth_map(r, c));
}

// Force without the safety-limit check (bisection probes past the limit).
inline double contact_force_raw(const ContactPatch& patch, double aperture_u,
                                const PlantConfig& cfg, Texture texture) {
  const double z_s = gel_front(patch, aperture_u, cfg);
  const std::size_t rows = patch.depth_map.rows();
  const std::size_t cols = patch.depth_map.cols();
  const double cell_area = (patch.window_w / static_cast<double>(cols)) *
                           (patch.window_h / static_cast<double>(rows));
  double sum = 0.0;
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c)
      sum += penetration(patch, z_s, r, c);
  return cfg.stiffness(texture) * sum * cell_area;
}

// Deterministic per-cell grain in [-1, 1], fixed per (cell, texture).
inline double grain(std::size_t r, std::size_t c, Texture t) {
  const std::uint64_t h = Rng::mix64(
      (static_cast<std::uint64_t>(r) << 40) ^
      (static_cast<std::uint64_t>(c) << 16) ^
      static_cast<std::uint64_t>(static_cast<int>(t) + 1));
  return 2.0 * (static_cast<double>(h >> 11) * 0x1.0p-53) - 1.0;
}

}  // namespace detail

inline double contact_force(const ContactPatch& patch, double aperture_u,
                            const PlantConfig& cfg, Texture texture) {
  if (!(aperture_u >= 0.0 && aperture_u <= cfg.aperture_max))
    throw contract_error("contact_force: aperture outside [0, aperture_max]");
  const double f = detail::contact_force_raw(patch, aperture_u, cfg, texture);
  if (f > cfg.force_max)
    throw force_limit_error("force limit: " + std::to_string(f) + " N > " +
                            std::to_string(cfg.force_max) + " N");
  return f;
}

// Pressure-proxy image: baseline plus gain x penetration, with a fixed
// texture pattern inside the contact region, clamped to [0,1]; optional
// sensor noise is added afterward and the result re-clamped so images stay
// valid codec inputs.
inline ImprintImage render_imprint(const ContactPatch& patch,
                                   double aperture_u, const PlantConfig& cfg,
                                   Texture texture, Rng& rng,
                                   double noise_sigma) {
  if (!(aperture_u >= 0.0 && aperture_u <= cfg.aperture_max))
    throw contract_error("render_imprint: aperture outside [0, aperture_max]");
  const double z_s = detail::gel_front(patch, aperture_u, cfg);
  const std::size_t rows = patch.depth_map.rows();
  const std::size_t cols = patch.depth_map.cols();
  ImprintImage img(rows, cols);
  const double ridge_period_cells = static_cast<double>(cols) / 5.0;
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      const double p = detail::penetration(patch, z_s, r, c);
      double v = cfg.baseline_intensity + cfg.imprint_gain * p;
      if (p > 0.0) {
        const double pattern =
            texture == Texture::ridged
                ? std::sin(6.283185307179586 * static_cast<double>(c) /
                           ridge_period_cells)
                : detail::grain(r, c, texture);
        v += cfg.amplitude(texture) * pattern;
      }
      img.at(r, c) = std::clamp(v, 0.0, 1.0);
    }
  }
  if (noise_sigma > 0.0)
    for (double& v : img.pix)
      v = std::clamp(v + noise_sigma * rng.normal(), 0.0, 1.0);
  return img;
}

inline ImprintImage render_imprint(const ContactPatch& patch,
                                   double aperture_u, const PlantConfig& cfg,
                                   Texture texture, Rng& rng) {
  return render_imprint(patch, aperture_u, cfg, texture, rng,
                        cfg.sensor_noise_sigma);
}

// Two-finger friction balance: the minimal safe normal force per finger.
inline double optimal_force(double mass_kg, double friction_mu,
                            const PlantConfig& cfg) {
  if (mass_kg < 0.0) throw contract_error("optimal_force: negative mass");
  if (!(friction_mu > 0.0))
    throw contract_error("optimal_force: friction_mu must be > 0");
  const double f = cfg.safety_s * mass_kg * cfg.gravity_g /
                   (2.0 * friction_mu);
  if (f > cfg.force_max)
    throw force_limit_error(
        "optimal force " + std::to_string(f) +
        " N exceeds force_max; object not graspable under this config");
  return f;
}

// Aperture where the noise-free contact force equals target_f, by bisection
// on the monotone force curve to 1e-6 mm. Works on the raw curve, so targets
// past force_max still invert (useful when constructing goal imprints).
inline double aperture_for_force(const ContactPatch& patch, double target_f,
                                 const PlantConfig& cfg, Texture texture) {
  if (!(target_f >= 0.0))
    throw contract_error("aperture_for_force: target force must be >= 0");
  double hi = cfg.contact_aperture;  // zero force at first contact
  double lo = 0.0;
  if (target_f <= 0.0) return hi;
  if (detail::contact_force_raw(patch, lo, cfg, texture) < target_f)
    throw numeric_error(
        "aperture_for_force: target force not bracketed within the aperture "
        "range");
  while (hi - lo > 1e-6) {
    const double mid = 0.5 * (lo + hi);
    if (detail::contact_force_raw(patch, mid, cfg, texture) >= target_f)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

// Aperture where contact force equals the optimal force.
inline double optimal_aperture(const ContactPatch& patch,
                               const Material& material,
                               const PlantConfig& cfg) {
  const double f_star = optimal_force(material.mass_kg, material.friction_mu,
                                      cfg);
  return aperture_for_force(patch, f_star, cfg, material.texture);
}

inline bool slip_predicate(double normal_force, const Material& material,
                           const PlantConfig& cfg) {
  return 2.0 * material.friction_mu * normal_force <
         material.mass_kg * cfg.gravity_g;
}

// Evaluate the plant at an absolute aperture (used to start episodes).
inline PlantState plant_at(const ContactPatch& patch, double aperture_u,
                           const Material& material, const PlantConfig& cfg,
                           Rng& rng) {
  PlantState s;
  s.aperture_u = aperture_u;
  s.normal_force = contact_force(patch, aperture_u, cfg, material.texture);
  s.slipping = slip_predicate(s.normal_force, material, cfg);
  s.imprint = render_imprint(patch, aperture_u, cfg, material.texture, rng);
  return s;
}

// Quasi-static step: commanded aperture change is achieved exactly, apart
// from clamping at the actuator bounds (flagged).
inline PlantState step(const PlantState& state, double delta_u,
                       const ContactPatch& patch, const Material& material,
                       const PlantConfig& cfg, Rng& rng) {
  double u = state.aperture_u + delta_u;
  bool clamped = false;
  if (u < 0.0) {
    u = 0.0;
    clamped = true;
  } else if (u > cfg.aperture_max) {
    u = cfg.aperture_max;
    clamped = true;
  }
  PlantState next = plant_at(patch, u, material, cfg, rng);
  next.clamped = clamped;
  return next;
}

}  // namespace phytac
