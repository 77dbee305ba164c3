#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numeric>
#include <vector>

#include "phytac/diffusion.hpp"

using namespace phytac;

namespace {

ImprintImage blob_image(std::size_t grid, Rng& rng) {
  ImprintImage out(grid, grid);
  const double cx = rng.uniform(-5.0, 5.0), cy = rng.uniform(-5.0, 5.0);
  const double radius = rng.uniform(4.0, 9.0);
  for (std::size_t r = 0; r < grid; ++r)
    for (std::size_t c = 0; c < grid; ++c) {
      const double x = -10.0 + 20.0 * (static_cast<double>(c) + 0.5) /
                                   static_cast<double>(grid);
      const double y = -10.0 + 20.0 * (static_cast<double>(r) + 0.5) /
                                   static_cast<double>(grid);
      const double d2 = (x - cx) * (x - cx) + (y - cy) * (y - cy);
      out.at(r, c) = std::exp(-d2 / (2.0 * radius));
    }
  return out;
}

Mat blob_depth(std::size_t grid, Rng& rng) {
  Mat d(grid, grid);
  const double cx = rng.uniform(-4.0, 4.0), cy = rng.uniform(-4.0, 4.0);
  const double curvature = rng.uniform(20.0, 50.0);
  for (std::size_t r = 0; r < grid; ++r)
    for (std::size_t c = 0; c < grid; ++c) {
      const double x = -10.0 + 20.0 * (static_cast<double>(c) + 0.5) /
                                   static_cast<double>(grid);
      const double y = -10.0 + 20.0 * (static_cast<double>(r) + 0.5) /
                                   static_cast<double>(grid);
      d(r, c) = 5.0 +
                ((x - cx) * (x - cx) + (y - cy) * (y - cy)) / (2.0 * curvature);
    }
  return d;
}

// Codec with every weight perturbed, so encoded latents are nonzero smooth
// functions of the image without spending time on codec training.
CodecParams scrambled_codec(std::size_t grid, std::size_t m, Rng& rng) {
  CodecConfig cfg;
  cfg.m = m;
  cfg.hidden = 32;
  CodecParams p = init_codec(grid, grid, cfg, rng);
  for (double& v : p.w) v += 0.2 * rng.normal();
  return p;
}

std::vector<GraspRecord> synthetic_records(std::size_t count,
                                           std::size_t grid, Rng& rng) {
  std::vector<GraspRecord> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    GraspRecord& r = out[i];
    r.grasp_index = i / 2;
    r.object_index = i / 4;
    r.object_id = "obj";
    r.texture = static_cast<Texture>(i % static_cast<std::size_t>(
                                             kTextureCount));
    r.mass_kg = rng.uniform(0.05, 0.4);
    r.friction_mu = 0.5;
    r.command_u = 28.0;
    r.feedback_u = 28.0;
    r.u_star_mm = 27.0;
    r.f_star_n = 1.0;
    r.force_n = 0.5;
    r.patch.window_w = r.patch.window_h = 20.0;
    r.patch.depth_map = blob_depth(grid, rng);
    r.imprint_current = blob_image(grid, rng);
    r.imprint_optimal = blob_image(grid, rng);
  }
  return out;
}

DiffusionConfig tiny_config() {
  DiffusionConfig cfg;
  cfg.hidden = 64;
  cfg.steps = 300;
  cfg.batch = 16;
  cfg.lr = 2e-3;
  return cfg;
}

}  // namespace

TEST_CASE("schedule construction and invariants") {
  const NoiseSchedule s = make_schedule(200, 1e-4, 0.02);
  CHECK(s.T == 200);
  CHECK(s.alpha_bar.size() == 201);
  CHECK(s.alpha_bar[0] == 1.0);
  for (std::size_t t = 1; t <= s.T; ++t) {
    CHECK(s.alpha_bar[t] > 0.0);
    CHECK(s.alpha_bar[t] < s.alpha_bar[t - 1]);
  }

  // A long schedule corrupts essentially everything by the last step.
  const NoiseSchedule lng = make_schedule(1000, 1e-4, 0.02);
  CHECK(lng.alpha_bar[1000] < 0.01);

  CHECK_THROWS_AS(make_schedule(1, 1e-4, 0.02), contract_error);
  CHECK_THROWS_AS(make_schedule(200, 0.0, 0.02), contract_error);
  CHECK_THROWS_AS(make_schedule(200, 0.03, 0.02), contract_error);
  CHECK_THROWS_AS(make_schedule(200, 1e-4, 1.0), contract_error);

  NoiseSchedule bad = s;
  bad.alpha_bar[0] = 0.999;
  CHECK_THROWS_AS(bad.validate(), contract_error);
  bad = s;
  bad.alpha_bar[5] = bad.alpha_bar[4];
  CHECK_THROWS_AS(bad.validate(), contract_error);
  bad = s;
  bad.alpha_bar[7] = -0.1;
  CHECK_THROWS_AS(bad.validate(), contract_error);
}

TEST_CASE("forward noising endpoints and variance preservation") {
  const NoiseSchedule s = make_schedule(1000, 1e-4, 0.02);
  Rng rng(11);
  LatentVector z0(6), eps(6);
  for (double& v : z0) v = rng.uniform(-1.0, 1.0);
  for (double& v : eps) v = rng.normal();

  // t = 0 keeps the latent untouched.
  CHECK(forward_noise(z0, 0, s, eps) == z0);

  // At the end of a long schedule the output is essentially the noise.
  const LatentVector zT = forward_noise(z0, s.T, s, eps);
  for (std::size_t i = 0; i < z0.size(); ++i)
    CHECK(zT[i] == Catch::Approx(eps[i]).margin(0.01));

  // Unit-variance data stays unit-variance at every depth.
  const NoiseSchedule s200 = make_schedule(200, 1e-4, 0.02);
  double sum = 0.0, sum2 = 0.0;
  const std::size_t n = 100000;
  for (std::size_t i = 0; i < n; ++i) {
    const LatentVector a{rng.normal()}, e{rng.normal()};
    const std::size_t t = 1 + rng.uniform_int(s200.T);
    const double v = forward_noise(a, t, s200, e)[0];
    sum += v;
    sum2 += v * v;
  }
  const double mean = sum / static_cast<double>(n);
  const double var = sum2 / static_cast<double>(n) - mean * mean;
  CHECK(var == Catch::Approx(1.0).margin(0.05));

  CHECK_THROWS_AS(forward_noise(z0, s.T + 1, s, eps), contract_error);
  CHECK_THROWS_AS(forward_noise(z0, 3, s, LatentVector(5)), contract_error);
}

TEST_CASE("one-shot inversion recovers the clean latent") {
  const NoiseSchedule s = make_schedule(200, 1e-4, 0.02);
  Rng rng(13);
  double worst = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    LatentVector z0(8), eps(8);
    for (double& v : z0) v = 2.0 * rng.normal();
    for (double& v : eps) v = rng.normal();
    const std::size_t t = 1 + rng.uniform_int(s.T);
    const LatentVector back =
        ddim_step(forward_noise(z0, t, s, eps), eps, t, 0, s);
    for (std::size_t i = 0; i < z0.size(); ++i)
      worst = std::max(worst, std::abs(back[i] - z0[i]));
  }
  CHECK(worst <= 1e-10);

  // Equal corruption levels make the step a no-op.
  NoiseSchedule flat;
  flat.T = 2;
  flat.alpha_bar = {1.0, 0.5, 0.5};
  const LatentVector z{0.7, -0.3}, e{1.1, 0.4};
  CHECK(ddim_step(z, e, 2, 1, flat) == z);

  CHECK_THROWS_AS(ddim_step(z, e, 2, 2, s), contract_error);
  CHECK_THROWS_AS(ddim_step(z, e, 1, 2, s), contract_error);
  CHECK_THROWS_AS(ddim_step(z, e, s.T + 1, 0, s), contract_error);
  CHECK_THROWS_AS(ddim_step(z, LatentVector(3), 2, 1, s), contract_error);
}

TEST_CASE("exact-noise chain lands on the single data point") {
  const NoiseSchedule s = make_schedule(200, 1e-4, 0.02);
  const LatentVector target{0.8, -0.4, 0.15, 1.2};
  Rng rng(17);
  const std::vector<std::size_t> ts = ddim_timesteps(s.T, 20);

  for (int trial = 0; trial < 20; ++trial) {
    // Start either from a noised copy of the target or from pure noise.
    LatentVector z(target.size());
    if (trial % 2 == 0) {
      LatentVector eps(target.size());
      for (double& v : eps) v = rng.normal();
      z = forward_noise(target, s.T, s, eps);
    } else {
      for (double& v : z) v = rng.normal();
    }
    for (std::size_t k = 0; k + 1 < ts.size(); ++k) {
      const double a = s.alpha_bar[ts[k]];
      LatentVector eps_hat(z.size());
      for (std::size_t i = 0; i < z.size(); ++i)
        eps_hat[i] =
            (z[i] - std::sqrt(a) * target[i]) / std::sqrt(1.0 - a);
      z = ddim_step(z, eps_hat, ts[k], ts[k + 1], s);
    }
    for (std::size_t i = 0; i < z.size(); ++i)
      CHECK(z[i] == Catch::Approx(target[i]).margin(1e-8));
  }
}

TEST_CASE("gaussian-oracle sampling reproduces the target moments") {
  const NoiseSchedule s = make_schedule(200, 1e-4, 0.02);
  const double mu = 0.0, sigma = 0.6;
  const std::size_t m = 8, draws = 10000, steps = 20;
  const std::vector<std::size_t> ts = ddim_timesteps(s.T, steps);
  Rng rng(19);
  double sum = 0.0, sum2 = 0.0;
  for (std::size_t i = 0; i < draws; ++i) {
    LatentVector z(m);
    for (double& v : z) v = rng.normal();
    for (std::size_t k = 0; k + 1 < ts.size(); ++k) {
      const LatentVector e = gaussian_oracle_eps(z, ts[k], s, mu, sigma);
      z = ddim_step(z, e, ts[k], ts[k + 1], s);
    }
    for (double v : z) {
      sum += v;
      sum2 += v * v;
    }
  }
  const double cnt = static_cast<double>(draws * m);
  const double mean = sum / cnt;
  const double var = sum2 / cnt - mean * mean;
  CHECK(std::abs(mean - mu) <= 0.05 * sigma);
  CHECK(var == Catch::Approx(sigma * sigma).epsilon(0.05));

  CHECK_THROWS_AS(gaussian_oracle_eps(LatentVector(2), 0, s, 0.0, 1.0),
                  contract_error);
  CHECK_THROWS_AS(gaussian_oracle_eps(LatentVector(2), s.T + 1, s, 0.0, 1.0),
                  contract_error);
  CHECK_THROWS_AS(gaussian_oracle_eps(LatentVector(2), 5, s, 0.0, -1.0),
                  contract_error);
}

TEST_CASE("condition embedding shape and determinism") {
  const ConditionVector c = make_condition(0.2, 0.4, Texture::coarse_grain);
  CHECK(c.e_m.size() == kMassEmbedDim);
  CHECK(c.e_t.size() == static_cast<std::size_t>(kTextureCount));
  CHECK(c.c.size() == c.e_m.size() + c.e_t.size());
  double onehot = 0.0;
  for (double v : c.e_t) {
    CHECK((v == 0.0 || v == 1.0));
    onehot += v;
  }
  CHECK(onehot == 1.0);
  CHECK(c.e_t[static_cast<std::size_t>(Texture::coarse_grain)] == 1.0);
  for (double v : c.e_m) {
    CHECK(v >= -1.0);
    CHECK(v <= 1.0);
  }

  // Zero mass embeds as alternating sin(0), cos(0).
  const ConditionVector z = make_condition(0.0, 0.4, Texture::smooth);
  for (std::size_t k = 0; k < kMassEmbedDim / 2; ++k) {
    CHECK(z.e_m[2 * k] == 0.0);
    CHECK(z.e_m[2 * k + 1] == 1.0);
  }

  // Distinct masses embed distinctly.
  const ConditionVector a = make_condition(0.1, 0.4, Texture::smooth);
  double delta = 0.0;
  for (std::size_t i = 0; i < a.e_m.size(); ++i)
    delta += std::abs(a.e_m[i] - z.e_m[i]);
  CHECK(delta > 0.1);

  const ConditionVector b = make_condition(0.2, 0.4, Texture::coarse_grain);
  CHECK(b.c == c.c);

  CHECK_THROWS_AS(make_condition(-0.1, 0.4, Texture::smooth), contract_error);
  CHECK_THROWS_AS(make_condition(0.1, 0.0, Texture::smooth), contract_error);
  CHECK_THROWS_AS(make_condition(0.1, 0.4, static_cast<Texture>(9)),
                  contract_error);
}

TEST_CASE("depth maps rescale into the unit image range") {
  Mat d(2, 2);
  d(0, 0) = 5.0;
  d(0, 1) = 6.0;
  d(1, 0) = 7.0;
  d(1, 1) = 9.0;
  const ImprintImage im = depth_as_image(d);
  CHECK(im.at(0, 0) == 0.0);
  CHECK(im.at(0, 1) == Catch::Approx(0.25).margin(1e-15));
  CHECK(im.at(1, 0) == Catch::Approx(0.5).margin(1e-15));
  CHECK(im.at(1, 1) == 1.0);

  const ImprintImage flat = depth_as_image(Mat(3, 3, 4.2));
  for (double v : flat.pix) CHECK(v == 0.0);

  Mat bad(1, 2);
  bad(0, 1) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(depth_as_image(bad), contract_error);
  CHECK_THROWS_AS(depth_as_image(Mat()), contract_error);
}

TEST_CASE("fresh denoiser predicts zero noise deterministically") {
  Rng rng(23);
  DiffusionConfig cfg = tiny_config();
  const DenoiserParams p = init_denoiser(8, 12, cfg, rng);
  const ConditionVector cond = make_condition(0.2, 0.4, Texture::fine_grain);
  LatentVector z_t(8), z_in(8), z_cdp(8);
  for (double& v : z_t) v = rng.normal();
  for (double& v : z_in) v = rng.normal();
  for (double& v : z_cdp) v = rng.normal();

  const LatentVector e = predict_noise(p, z_t, z_in, z_cdp, 100, cond);
  REQUIRE(e.size() == 8);
  for (double v : e) CHECK(v == 0.0);
  CHECK(predict_noise(p, z_t, z_in, z_cdp, 100, cond) == e);

  CHECK_THROWS_AS(predict_noise(p, LatentVector(7), z_in, z_cdp, 100, cond),
                  contract_error);
  CHECK_THROWS_AS(
      predict_noise(p, z_t, z_in, z_cdp, cfg.T + 1, cond), contract_error);
  ConditionVector shrunk = cond;
  shrunk.c.pop_back();
  CHECK_THROWS_AS(predict_noise(p, z_t, z_in, z_cdp, 100, shrunk),
                  contract_error);
}

TEST_CASE("denoiser analytic gradient matches finite differences") {
  Rng rng(29);
  DiffusionConfig cfg = tiny_config();
  cfg.hidden = 16;
  const std::size_t m = 6;
  const detail::DenoiserLayout L(m, cfg.hidden, 12);

  for (int point = 0; point < 3; ++point) {
    DenoiserParams p = init_denoiser(m, 12, cfg, rng);
    for (double& v : p.w) v += 0.3 * rng.normal();

    const ConditionVector cond =
        make_condition(rng.uniform(0.0, 0.4), 0.4, Texture::coarse_grain);
    LatentVector z_t(m), z_in(m), z_cdp(m), eps(m);
    for (double& v : z_t) v = rng.normal();
    for (double& v : z_in) v = rng.normal();
    for (double& v : z_cdp) v = rng.normal();
    for (double& v : eps) v = rng.normal();
    const std::size_t t = 1 + rng.uniform_int(cfg.T);
    std::vector<double> u;
    detail::assemble_input(z_t, z_in, z_cdp, t, cfg.T, cond, L, u);

    std::vector<double> grad(L.total, 0.0);
    detail::denoiser_loss_grad(p.w, L, u.data(), eps.data(), &grad);
    const auto loss_fn = [&](const std::vector<double>& w) {
      return detail::denoiser_loss_grad(w, L, u.data(), eps.data(), nullptr);
    };
    const double err = check_gradient(loss_fn, p.w, grad, 80, rng);
    INFO("parameter point " << point);
    CHECK(err <= 1e-4);
  }
}

TEST_CASE("zero predictor scores the expected noise energy") {
  Rng rng(31);
  DiffusionConfig cfg = tiny_config();
  const std::size_t m = 8;
  const DenoiserParams p = init_denoiser(m, 12, cfg, rng);
  const detail::DenoiserLayout L(m, p.hidden, p.c_dim);
  const NoiseSchedule s = make_schedule(cfg.T, cfg.beta_min, cfg.beta_max);
  const ConditionVector cond = make_condition(0.3, 0.4, Texture::smooth);

  double total = 0.0;
  const std::size_t n = 4000;
  std::vector<double> u;
  for (std::size_t i = 0; i < n; ++i) {
    LatentVector z0(m), eps(m);
    for (double& v : z0) v = rng.normal();
    for (double& v : eps) v = rng.normal();
    const std::size_t t = 1 + rng.uniform_int(cfg.T);
    const LatentVector z_t = forward_noise(z0, t, s, eps);
    detail::assemble_input(z_t, z0, z0, t, cfg.T, cond, L, u);
    total += detail::denoiser_loss_grad(p.w, L, u.data(), eps.data(), nullptr);
  }
  const double mean_loss = total / static_cast<double>(n);
  CHECK(mean_loss ==
        Catch::Approx(static_cast<double>(m)).epsilon(0.05));
}

TEST_CASE("training halves the objective and responds to conditioning") {
  Rng data_rng(37);
  const std::size_t grid = 12, m = 8;
  const CodecParams codec = scrambled_codec(grid, m, data_rng);
  const std::vector<GraspRecord> records =
      synthetic_records(24, grid, data_rng);

  const DiffusionConfig cfg = tiny_config();
  Rng rng(41);
  const TrainedDenoiser td = train_denoiser(records, codec, cfg, rng);
  REQUIRE(td.loss_history.size() == cfg.steps);

  const std::size_t w = 20;
  const double head =
      std::accumulate(td.loss_history.begin(), td.loss_history.begin() + w,
                      0.0) /
      static_cast<double>(w);
  const double tail =
      std::accumulate(td.loss_history.end() - w, td.loss_history.end(), 0.0) /
      static_cast<double>(w);
  INFO("head " << head << " tail " << tail);
  CHECK(tail <= 0.5 * head);

  // Trained prediction reacts to the texture class.
  const RecordLatents lat = encode_record(codec, records[0], 0.4);
  Rng nrng(43);
  LatentVector z_t(m);
  for (double& v : z_t) v = nrng.normal();
  const ConditionVector ca = make_condition(0.2, td.params.mass_max,
                                            Texture::smooth);
  const ConditionVector cb = make_condition(0.2, td.params.mass_max,
                                            Texture::ridged);
  const LatentVector ea =
      predict_noise(td.params, z_t, lat.z_in, lat.z_cdp, 120, ca);
  const LatentVector eb =
      predict_noise(td.params, z_t, lat.z_in, lat.z_cdp, 120, cb);
  double delta = 0.0;
  for (std::size_t i = 0; i < ea.size(); ++i)
    delta += std::abs(ea[i] - eb[i]);
  CHECK(delta > 0.0);

  // Same seed, same run.
  Rng r2(41);
  const TrainedDenoiser again = train_denoiser(records, codec, cfg, r2);
  CHECK(again.loss_history == td.loss_history);
  CHECK(again.params.w == td.params.w);

  CHECK_THROWS_AS(train_denoiser({}, codec, cfg, rng), contract_error);
  std::vector<GraspRecord> weightless = records;
  for (GraspRecord& r : weightless) r.mass_kg = 0.0;
  CHECK_THROWS_AS(train_denoiser(weightless, codec, cfg, rng),
                  contract_error);
}

TEST_CASE("ddim timestep grids are even and strictly decreasing") {
  const std::vector<std::size_t> full = ddim_timesteps(200, 20);
  REQUIRE(full.size() == 21);
  for (std::size_t k = 0; k < full.size(); ++k)
    CHECK(full[k] == 200 - 10 * k);

  const std::vector<std::size_t> rough = ddim_timesteps(10, 3);
  CHECK(rough == std::vector<std::size_t>{10, 7, 3, 0});

  const std::vector<std::size_t> dense = ddim_timesteps(6, 6);
  CHECK(dense == std::vector<std::size_t>{6, 5, 4, 3, 2, 1, 0});

  CHECK_THROWS_AS(ddim_timesteps(200, 0), contract_error);
  CHECK_THROWS_AS(ddim_timesteps(200, 201), contract_error);
}

TEST_CASE("goal sampling is seeded and honors the zero-predictor algebra") {
  Rng rng(47);
  const std::size_t grid = 12, m = 8;
  const CodecParams codec = scrambled_codec(grid, m, rng);
  DiffusionConfig cfg = tiny_config();
  DenoiserParams p = init_denoiser(m, 12, cfg, rng);
  p.mass_max = 0.4;
  const NoiseSchedule s = make_schedule(cfg.T, cfg.beta_min, cfg.beta_max);

  Rng img_rng(53);
  const ImprintImage x_c = blob_image(grid, img_rng);
  const Mat depth = blob_depth(grid, img_rng);

  Rng s1(59), s2(59), s3(60);
  const GoalSample a =
      sample_goal(p, codec, x_c, depth, 0.2, Texture::smooth, 20, s, s1);
  const GoalSample b =
      sample_goal(p, codec, x_c, depth, 0.2, Texture::smooth, 20, s, s2);
  const GoalSample c =
      sample_goal(p, codec, x_c, depth, 0.2, Texture::smooth, 20, s, s3);
  CHECK(a.z_g == b.z_g);
  CHECK(a.x_g.pix == b.x_g.pix);
  CHECK(a.z_g != c.z_g);

  // A zero predictor only rescales the start: z_g = z_start / sqrt(abar_T).
  Rng replay(59);
  LatentVector start(m);
  for (double& v : start) v = replay.normal();
  const double gain = 1.0 / std::sqrt(s.alpha_bar[s.T]);
  for (std::size_t i = 0; i < m; ++i)
    CHECK(a.z_g[i] == Catch::Approx(gain * start[i]).margin(1e-9));
  const ImprintImage direct = decode(codec, a.z_g);
  CHECK(a.x_g.pix == direct.pix);

  // Contract violations.
  const NoiseSchedule other = make_schedule(100, 1e-4, 0.02);
  Rng s4(61);
  CHECK_THROWS_AS(sample_goal(p, codec, x_c, depth, 0.2, Texture::smooth, 20,
                              other, s4),
                  contract_error);
  CodecParams small = scrambled_codec(grid, 4, rng);
  CHECK_THROWS_AS(sample_goal(p, small, x_c, depth, 0.2, Texture::smooth, 20,
                              s, s4),
                  contract_error);
  CHECK_THROWS_AS(sample_goal(p, codec, x_c, depth, -1.0, Texture::smooth, 20,
                              s, s4),
                  contract_error);
}

TEST_CASE("denoiser parameters round-trip through the container") {
  Rng rng(67);
  DiffusionConfig cfg = tiny_config();
  cfg.hidden = 16;
  DenoiserParams p = init_denoiser(6, 12, cfg, rng);
  p.mass_max = 0.35;
  for (double& v : p.w) v = 0.2 * rng.normal();

  const std::string dir =
      (std::filesystem::temp_directory_path() / "phytac-denoiser-params.bin")
          .string();
  save_denoiser(p, dir);
  const DenoiserParams q = load_denoiser(dir);
  CHECK(q.m == p.m);
  CHECK(q.hidden == p.hidden);
  CHECK(q.c_dim == p.c_dim);
  CHECK(q.T == p.T);
  CHECK(q.mass_max == Catch::Approx(p.mass_max).margin(1e-6));
  REQUIRE(q.w.size() == p.w.size());
  for (std::size_t i = 0; i < p.w.size(); ++i)
    CHECK(q.w[i] == Catch::Approx(p.w[i]).margin(1e-6));
  std::filesystem::remove(dir);

  // A codec parameter file is a different section.
  CodecParams cp = init_codec(8, 8, CodecConfig{}, rng);
  const std::string cpath =
      (std::filesystem::temp_directory_path() / "phytac-codec-as-denoiser.bin")
          .string();
  save_codec(cp, cpath);
  CHECK_THROWS_AS(load_denoiser(cpath), artifact_error);
  std::filesystem::remove(cpath);
}

TEST_CASE("diffusion config validation") {
  DiffusionConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  DiffusionConfig bad = cfg;
  bad.T = 1;
  CHECK_THROWS_AS(bad.validate(), config_error);
  bad = cfg;
  bad.beta_min = 0.0;
  CHECK_THROWS_AS(bad.validate(), config_error);
  bad = cfg;
  bad.beta_max = 1.0;
  CHECK_THROWS_AS(bad.validate(), config_error);
  bad = cfg;
  bad.beta_min = 0.05;
  bad.beta_max = 0.02;
  CHECK_THROWS_AS(bad.validate(), config_error);
  bad = cfg;
  bad.ddim_steps = 0;
  CHECK_THROWS_AS(bad.validate(), config_error);
  bad = cfg;
  bad.ddim_steps = bad.T + 1;
  CHECK_THROWS_AS(bad.validate(), config_error);
  bad = cfg;
  bad.hidden = 2;
  CHECK_THROWS_AS(bad.validate(), config_error);
  bad = cfg;
  bad.steps = 0;
  CHECK_THROWS_AS(bad.validate(), config_error);
  bad = cfg;
  bad.batch = 0;
  CHECK_THROWS_AS(bad.validate(), config_error);
  bad = cfg;
  bad.lr = 0.0;
  CHECK_THROWS_AS(bad.validate(), config_error);
}
