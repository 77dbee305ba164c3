#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "phytac/plant.hpp"
#include "phytac/rng.hpp"

using namespace phytac;

namespace {

// Exact flat patch: every cell at the same depth.
ContactPatch flat_patch(double depth, double w = 20.0, double h = 20.0,
                        std::size_t rows = 8, std::size_t cols = 8) {
  ContactPatch p;
  p.window_w = w;
  p.window_h = h;
  p.depth_map = Mat(rows, cols, depth);
  for (std::size_t i = 0; i < 16; ++i)
    p.points.push_back({-8.0 + i, 0.0, depth});
  return p;
}

ContactPatch random_patch(Rng& rng, double lo = 4.0, double hi = 8.0) {
  ContactPatch p = flat_patch(lo);
  for (std::size_t k = 0; k < p.depth_map.size(); ++k)
    p.depth_map[k] = rng.uniform(lo, hi);
  return p;
}

}  // namespace

TEST_CASE("plant config validation") {
  PlantConfig cfg;
  cfg.validate();
  PlantConfig bad = cfg;
  bad.stiffness_k[1] = 0.0;
  CHECK_THROWS_AS(bad.validate(), config_error);
  bad = cfg;
  bad.safety_s = 0.9;
  CHECK_THROWS_AS(bad.validate(), config_error);
  bad = cfg;
  bad.baseline_intensity = 1.0;
  CHECK_THROWS_AS(bad.validate(), config_error);
  bad = cfg;
  bad.contact_aperture = 70.0;  // beyond aperture_max
  CHECK_THROWS_AS(bad.validate(), config_error);
}

TEST_CASE("no interpenetration means zero force") {
  const PlantConfig cfg;
  const ContactPatch p = flat_patch(5.0);
  CHECK(contact_force(p, cfg.contact_aperture, cfg, Texture::smooth) == 0.0);
  CHECK(contact_force(p, cfg.aperture_max, cfg, Texture::smooth) == 0.0);
}

TEST_CASE("uniform penetration gives the closed-form force") {
  const PlantConfig cfg;
  const ContactPatch p = flat_patch(5.0);  // 20x20 mm window, area 400 mm^2
  // Closing 0.2 mm below first contact advances the gel 0.1 mm.
  const double u = cfg.contact_aperture - 0.2;
  const double expected = cfg.stiffness(Texture::smooth) * 0.1 * 400.0;
  CHECK(contact_force(p, u, cfg, Texture::smooth) ==
        Catch::Approx(expected).epsilon(1e-12));
}

TEST_CASE("force is non-increasing in aperture across random patches") {
  const PlantConfig cfg;
  Rng rng(101);
  for (int trial = 0; trial < 1000; ++trial) {
    const ContactPatch p = random_patch(rng);
    const Texture tex = static_cast<Texture>(trial % kTextureCount);
    double prev = std::numeric_limits<double>::infinity();
    for (double u = 20.0; u <= 32.0; u += 0.5) {
      const double f = detail::contact_force_raw(p, u, cfg, tex);
      CHECK(f <= prev + 1e-12);
      CHECK(f >= 0.0);
      prev = f;
    }
  }
}

TEST_CASE("force equals stiffness times integrated penetration") {
  const PlantConfig cfg;
  Rng rng(103);
  for (int trial = 0; trial < 50; ++trial) {
    const ContactPatch p = random_patch(rng);
    const double u = rng.uniform(22.0, 30.0);
    const double f = detail::contact_force_raw(p, u, cfg, Texture::fine_grain);
    // Brute-force recomputation from the definition.
    const double z_surf =
        detail::patch_min_depth(p) + 0.5 * (cfg.contact_aperture - u);
    const double cell_area = (p.window_w / 8.0) * (p.window_h / 8.0);
    double sum = 0.0;
    for (std::size_t k = 0; k < p.depth_map.size(); ++k)
      sum += std::max(0.0, z_surf - p.depth_map[k]) * cell_area;
    const double expected = cfg.stiffness(Texture::fine_grain) * sum;
    if (expected > 0.0)
      CHECK(std::abs(f - expected) / expected <= 1e-9);
    else
      CHECK(f == 0.0);
  }
}

TEST_CASE("force limit and aperture bounds raise errors") {
  const PlantConfig cfg;
  const ContactPatch p = flat_patch(5.0);
  CHECK_THROWS_AS(contact_force(p, 0.0, cfg, Texture::smooth),
                  force_limit_error);  // 15 mm penetration is way past 25 N
  CHECK_THROWS_AS(contact_force(p, -1.0, cfg, Texture::smooth),
                  contract_error);
  CHECK_THROWS_AS(contact_force(p, cfg.aperture_max + 1.0, cfg,
                                Texture::smooth),
                  contract_error);
}

TEST_CASE("zero-contact imprint is the uniform baseline") {
  const PlantConfig cfg;
  const ContactPatch p = flat_patch(5.0);
  Rng rng(7);
  const ImprintImage img =
      render_imprint(p, cfg.contact_aperture, cfg, Texture::ridged, rng, 0.0);
  for (double v : img.pix) CHECK(v == cfg.baseline_intensity);
}

TEST_CASE("deeper penetration renders brighter") {
  PlantConfig cfg;
  cfg.sensor_noise_sigma = 0.0;
  ContactPatch p = flat_patch(5.0);
  p.depth_map(2, 2) = 5.1;  // shallower cell -> less penetration
  Rng rng(7);
  const ImprintImage img =
      render_imprint(p, cfg.contact_aperture - 0.4, cfg, Texture::smooth, rng);
  CHECK(img.at(1, 1) > img.at(2, 2));
  CHECK(img.in_unit_range());
}

TEST_CASE("rendering is deterministic in the seed") {
  const PlantConfig cfg;
  const ContactPatch p = flat_patch(5.0);
  Rng a(99), b(99);
  const ImprintImage ia =
      render_imprint(p, cfg.contact_aperture - 1.0, cfg, Texture::coarse_grain,
                     a);
  const ImprintImage ib =
      render_imprint(p, cfg.contact_aperture - 1.0, cfg, Texture::coarse_grain,
                     b);
  CHECK(ia.pix == ib.pix);
  // And noise-free rendering ignores the generator entirely.
  Rng c(1), d(2);
  const ImprintImage ic = render_imprint(p, 28.0, cfg, Texture::ridged, c, 0.0);
  const ImprintImage id = render_imprint(p, 28.0, cfg, Texture::ridged, d, 0.0);
  CHECK(ic.pix == id.pix);
}

TEST_CASE("deep contact saturates inside [0,1]") {
  PlantConfig cfg;
  cfg.force_max = 1e9;  // let the render happen
  const ContactPatch p = flat_patch(5.0);
  Rng rng(5);
  const ImprintImage img = render_imprint(p, 10.0, cfg, Texture::ridged, rng);
  CHECK(img.in_unit_range());
  CHECK(img.at(0, 0) == 1.0);
}

TEST_CASE("optimal force follows the two-finger friction balance") {
  PlantConfig cfg;
  cfg.safety_s = 1.0;
  CHECK(optimal_force(0.1, 0.5, cfg) == Catch::Approx(0.981).margin(1e-12));
  CHECK(optimal_force(0.1, 1.0, cfg) ==
        Catch::Approx(0.981 / 2.0).margin(1e-12));
  CHECK(optimal_force(0.0, 0.5, cfg) == 0.0);
  CHECK_THROWS_AS(optimal_force(0.1, 0.0, cfg), contract_error);
  CHECK_THROWS_AS(optimal_force(0.1, -0.5, cfg), contract_error);
  CHECK_THROWS_AS(optimal_force(100.0, 0.5, cfg), force_limit_error);
}

TEST_CASE("optimal aperture hits the optimal force by bisection") {
  const PlantConfig cfg;
  Rng rng(109);
  for (int trial = 0; trial < 20; ++trial) {
    const ContactPatch p = random_patch(rng, 4.0, 6.0);
    Material mat;
    mat.texture = static_cast<Texture>(trial % kTextureCount);
    mat.mass_kg = rng.uniform(0.05, 0.4);
    mat.friction_mu = rng.uniform(0.3, 1.0);
    const double u_star = optimal_aperture(p, mat, cfg);
    const double f_star = optimal_force(mat.mass_kg, mat.friction_mu, cfg);
    CHECK(std::abs(contact_force(p, u_star, cfg, mat.texture) - f_star) <=
          1e-4);
    CHECK(optimal_aperture(p, mat, cfg) == u_star);  // deterministic
  }
}

TEST_CASE("stiffer material needs less closing") {
  const PlantConfig cfg;
  const ContactPatch p = flat_patch(5.0);
  Material soft{Texture::smooth, 0.2, 0.5};
  Material stiff{Texture::ridged, 0.2, 0.5};
  CHECK(optimal_aperture(p, stiff, cfg) > optimal_aperture(p, soft, cfg));
}

TEST_CASE("unreachable optimal force reports a bracket error") {
  const PlantConfig cfg;
  ContactPatch p = flat_patch(5.0, 2.0, 2.0);  // tiny 4 mm^2 window
  Material mat{Texture::smooth, 0.485, 0.5};   // F* ~ 5 N > F(0) ~ 4.8 N
  CHECK_THROWS_AS(optimal_aperture(p, mat, cfg), numeric_error);
}

TEST_CASE("zero-mass object grasps open at first contact") {
  const PlantConfig cfg;
  const ContactPatch p = flat_patch(5.0);
  Material mat{Texture::smooth, 0.0, 0.5};
  CHECK(optimal_aperture(p, mat, cfg) == cfg.contact_aperture);
}

TEST_CASE("step is quasi-static and flags clamping") {
  const PlantConfig cfg;
  const ContactPatch p = flat_patch(5.0);
  const Material mat{Texture::fine_grain, 0.1, 0.5};
  Rng rng(11);
  PlantState s = plant_at(p, 29.0, mat, cfg, rng);
  const PlantState same = step(s, 0.0, p, mat, cfg, rng);
  CHECK(same.aperture_u == s.aperture_u);
  CHECK(same.normal_force == s.normal_force);
  CHECK(same.slipping == s.slipping);
  CHECK_FALSE(same.clamped);

  const PlantState open = step(s, 100.0, p, mat, cfg, rng);
  CHECK(open.clamped);
  CHECK(open.aperture_u == cfg.aperture_max);
  CHECK(open.normal_force == 0.0);
  CHECK(open.slipping);
}

TEST_CASE("safety factor separates the slip boundary") {
  const PlantConfig cfg;
  Rng rng(113);
  for (int trial = 0; trial < 50; ++trial) {
    const ContactPatch p = random_patch(rng, 4.0, 6.0);
    Material mat;
    mat.texture = static_cast<Texture>(trial % kTextureCount);
    mat.mass_kg = rng.uniform(0.05, 0.4);
    mat.friction_mu = rng.uniform(0.3, 1.0);
    const double u_star = optimal_aperture(p, mat, cfg);
    PlantState at_star = plant_at(p, u_star, mat, cfg, rng);
    CHECK_FALSE(at_star.slipping);
    PlantState opened = plant_at(p, u_star * 1.02, mat, cfg, rng);
    CHECK(opened.slipping);
  }
}
