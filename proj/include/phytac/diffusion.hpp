#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "phytac/codec.hpp"
#include "phytac/dataset.hpp"
#include "phytac/errors.hpp"
#include "phytac/optimizer.hpp"
#include "phytac/rng.hpp"

namespace phytac {

constexpr std::size_t kTimeEmbedDim = 16;
constexpr std::size_t kMassEmbedDim = 8;

struct DiffusionConfig {
  std::size_t T = 200;
  double beta_min = 1e-4;
  double beta_max = 0.02;
  std::size_t ddim_steps = 20;
  std::size_t hidden = 128;  // width of both trunk layers
  std::size_t steps = 2000;  // training steps
  std::size_t batch = 32;
  double lr = 1e-3;

  void validate() const {
    if (T < 2) throw config_error("diffusion: T must be >= 2");
    if (!(beta_min > 0.0) || !(beta_max >= beta_min) || !(beta_max < 1.0))
      throw config_error("diffusion: need 0 < beta_min <= beta_max < 1");
    if (ddim_steps < 1 || ddim_steps > T)
      throw config_error("diffusion: ddim_steps must be in [1, T]");
    if (hidden < 4) throw config_error("diffusion: hidden width must be >= 4");
    if (steps < 1 || batch < 1)
      throw config_error("diffusion: steps and batch size must be >= 1");
    if (!(lr > 0.0)) throw config_error("diffusion: learning rate must be > 0");
  }
};

// Variance-preserving corruption grid. alpha_bar[0] = 1 (clean data); the
// sequence decreases strictly toward pure noise.
struct NoiseSchedule {
  std::size_t T = 0;
  std::vector<double> alpha_bar;  // length T + 1

  void validate() const {
    if (T < 2 || alpha_bar.size() != T + 1)
      throw contract_error("noise schedule: needs T >= 2 and T+1 entries");
    if (alpha_bar[0] != 1.0)
      throw contract_error("noise schedule: alpha_bar[0] must be 1");
    for (std::size_t t = 1; t <= T; ++t) {
      if (!std::isfinite(alpha_bar[t]) || !(alpha_bar[t] > 0.0) ||
          !(alpha_bar[t] < alpha_bar[t - 1]))
        throw contract_error(
            "noise schedule: alpha_bar must decrease strictly within (0, 1]");
    }
  }
};

inline NoiseSchedule make_schedule(std::size_t T, double beta_min,
                                   double beta_max) {
  if (T < 2) throw contract_error("make_schedule: T must be >= 2");
  if (!(beta_min > 0.0) || !(beta_max >= beta_min) || !(beta_max < 1.0))
    throw contract_error("make_schedule: need 0 < beta_min <= beta_max < 1");
  NoiseSchedule s;
  s.T = T;
  s.alpha_bar.assign(T + 1, 1.0);
  for (std::size_t t = 1; t <= T; ++t) {
    const double beta =
        beta_min + (beta_max - beta_min) * static_cast<double>(t - 1) /
                       static_cast<double>(T - 1);
    s.alpha_bar[t] = s.alpha_bar[t - 1] * (1.0 - beta);
  }
  s.validate();
  return s;
}

// z_t = sqrt(abar_t) z0 + sqrt(1 - abar_t) eps. t = 0 returns z0 unchanged.
inline LatentVector forward_noise(const LatentVector& z0, std::size_t t,
                                  const NoiseSchedule& s,
                                  const LatentVector& eps) {
  if (t > s.T) throw contract_error("forward_noise: t out of range");
  if (eps.size() != z0.size())
    throw contract_error("forward_noise: noise length does not match latent");
  const double a = s.alpha_bar[t];
  const double ca = std::sqrt(a), cn = std::sqrt(1.0 - a);
  LatentVector out(z0.size());
  for (std::size_t i = 0; i < z0.size(); ++i)
    out[i] = ca * z0[i] + cn * eps[i];
  return out;
}

// Deterministic reverse step from t to t_prev:
//   sqrt(abar'/abar) (z_t - sqrt(1-abar) eps_hat) + sqrt(1-abar') eps_hat.
inline LatentVector ddim_step(const LatentVector& z_t,
                              const LatentVector& eps_hat, std::size_t t,
                              std::size_t t_prev, const NoiseSchedule& s) {
  if (!(t_prev < t) || t > s.T)
    throw contract_error("ddim_step: need 0 <= t_prev < t <= T");
  if (eps_hat.size() != z_t.size())
    throw contract_error("ddim_step: prediction length does not match latent");
  const double a = s.alpha_bar[t], ap = s.alpha_bar[t_prev];
  const double scale = std::sqrt(ap / a);
  const double c1 = std::sqrt(1.0 - a), c2 = std::sqrt(1.0 - ap);
  LatentVector out(z_t.size());
  for (std::size_t i = 0; i < z_t.size(); ++i)
    out[i] = scale * (z_t[i] - c1 * eps_hat[i]) + c2 * eps_hat[i];
  return out;
}

// Conditional mean E[eps | z_t] when the clean latents are N(mu, sigma^2 I):
//   sqrt(1-abar) (z_t - sqrt(abar) mu) / (abar sigma^2 + 1 - abar).
// Plugging this in place of a trained network exercises the sampler alone.
inline LatentVector gaussian_oracle_eps(const LatentVector& z_t, std::size_t t,
                                        const NoiseSchedule& s, double mu,
                                        double sigma) {
  if (t < 1 || t > s.T)
    throw contract_error("gaussian_oracle_eps: t out of range");
  if (!(sigma >= 0.0))
    throw contract_error("gaussian_oracle_eps: sigma must be >= 0");
  const double a = s.alpha_bar[t];
  const double gain = std::sqrt(1.0 - a) / (a * sigma * sigma + 1.0 - a);
  const double shift = std::sqrt(a) * mu;
  LatentVector out(z_t.size());
  for (std::size_t i = 0; i < z_t.size(); ++i)
    out[i] = gain * (z_t[i] - shift);
  return out;
}

// Physical conditioning: sinusoidal embedding of normalized mass plus a
// texture one-hot, concatenated.
struct ConditionVector {
  std::vector<double> e_m;
  std::vector<double> e_t;
  std::vector<double> c;
};

inline ConditionVector make_condition(double mass_kg, double mass_max,
                                      Texture texture) {
  if (!(mass_kg >= 0.0))
    throw contract_error("condition: mass must be >= 0");
  if (!(mass_max > 0.0))
    throw contract_error("condition: mass_max must be > 0");
  const int ti = static_cast<int>(texture);
  if (ti < 0 || ti >= kTextureCount)
    throw contract_error("condition: unknown texture class");
  const double v = mass_kg / mass_max;
  ConditionVector out;
  out.e_m.resize(kMassEmbedDim);
  for (std::size_t k = 0; k < kMassEmbedDim / 2; ++k) {
    const double f =
        3.14159265358979323846 * std::pow(2.0, static_cast<double>(k));
    out.e_m[2 * k] = std::sin(f * v);
    out.e_m[2 * k + 1] = std::cos(f * v);
  }
  out.e_t.assign(static_cast<std::size_t>(kTextureCount), 0.0);
  out.e_t[static_cast<std::size_t>(ti)] = 1.0;
  out.c = out.e_m;
  out.c.insert(out.c.end(), out.e_t.begin(), out.e_t.end());
  return out;
}

// Patch depth rescaled into [0, 1] (nearest surface -> 0, farthest -> 1) so
// the geometry can pass through the imprint codec. A flat map becomes zeros.
inline ImprintImage depth_as_image(const Mat& depth) {
  if (depth.rows() == 0 || depth.cols() == 0)
    throw contract_error("depth_as_image: empty depth map");
  double lo = depth[0], hi = depth[0];
  for (double v : depth) {
    if (!std::isfinite(v))
      throw contract_error("depth_as_image: non-finite depth");
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  ImprintImage out(depth.rows(), depth.cols());
  const double span = hi - lo;
  if (span > 0.0)
    for (std::size_t k = 0; k < out.pix.size(); ++k)
      out.pix[k] = (depth[k] - lo) / span;
  return out;
}

// Dense noise predictor on [z_t || z_in || z_cdp || time embedding || C],
// two tanh trunk layers, each followed by a feature-wise scale/shift
// generated linearly from C. The scale/shift generators and the output
// layer start at zero, so a fresh network predicts eps = 0 everywhere.
struct DenoiserParams {
  std::size_t m = 0;       // latent length
  std::size_t hidden = 0;  // trunk width
  std::size_t c_dim = 0;   // condition length
  std::size_t T = 0;       // schedule length baked at training time
  double mass_max = 0.0;   // mass normalization baked at training time
  std::vector<double> w;

  void validate() const;
};

namespace detail {

struct DenoiserLayout {
  std::size_t n_in = 0, h = 0, m = 0, c = 0;
  std::size_t w1 = 0, b1 = 0, f1 = 0, f1b = 0;
  std::size_t w2 = 0, b2 = 0, f2 = 0, f2b = 0;
  std::size_t w3 = 0, b3 = 0, total = 0;

  DenoiserLayout(std::size_t latent, std::size_t hidden, std::size_t c_dim)
      : n_in(3 * latent + kTimeEmbedDim + c_dim),
        h(hidden),
        m(latent),
        c(c_dim) {
    std::size_t at = 0;
    auto block = [&at](std::size_t n) {
      const std::size_t off = at;
      at += n;
      return off;
    };
    w1 = block(h * n_in);
    b1 = block(h);
    f1 = block(2 * h * c);
    f1b = block(2 * h);
    w2 = block(h * h);
    b2 = block(h);
    f2 = block(2 * h * c);
    f2b = block(2 * h);
    w3 = block(m * h);
    b3 = block(m);
    total = at;
  }
};

inline void time_embedding(std::size_t t, std::size_t T, double* out) {
  const double u = static_cast<double>(t) / static_cast<double>(T);
  for (std::size_t k = 0; k < kTimeEmbedDim / 2; ++k) {
    const double f =
        3.14159265358979323846 * std::pow(2.0, static_cast<double>(k));
    out[2 * k] = std::sin(f * u);
    out[2 * k + 1] = std::cos(f * u);
  }
}

// Concatenate [z_t || z_in || z_cdp || time embedding || C] into u.
inline void assemble_input(const LatentVector& z_t, const LatentVector& z_in,
                           const LatentVector& z_cdp, std::size_t t,
                           std::size_t T, const ConditionVector& cond,
                           const DenoiserLayout& L, std::vector<double>& u) {
  if (z_t.size() != L.m || z_in.size() != L.m || z_cdp.size() != L.m)
    throw contract_error("denoiser: latent length does not match network");
  if (cond.c.size() != L.c)
    throw contract_error("denoiser: condition length does not match network");
  if (t > T) throw contract_error("denoiser: t out of range");
  u.resize(L.n_in);
  double* p = u.data();
  p = std::copy(z_t.begin(), z_t.end(), p);
  p = std::copy(z_in.begin(), z_in.end(), p);
  p = std::copy(z_cdp.begin(), z_cdp.end(), p);
  time_embedding(t, T, p);
  p += kTimeEmbedDim;
  std::copy(cond.c.begin(), cond.c.end(), p);
}

struct DenoiserTrace {
  std::vector<double> h1, s1, t1, g1;
  std::vector<double> h2, s2, t2, g2;
  std::vector<double> out;
};

inline void denoiser_forward(const std::vector<double>& w,
                             const DenoiserLayout& L, const double* u,
                             DenoiserTrace& t) {
  const double* cond = u + 3 * L.m + kTimeEmbedDim;
  t.h1.resize(L.h);
  t.s1.resize(L.h);
  t.t1.resize(L.h);
  t.g1.resize(L.h);
  t.h2.resize(L.h);
  t.s2.resize(L.h);
  t.t2.resize(L.h);
  t.g2.resize(L.h);
  t.out.resize(L.m);

  matvec(w.data() + L.w1, L.h, L.n_in, u, w.data() + L.b1, t.h1.data());
  for (double& v : t.h1) v = std::tanh(v);
  matvec(w.data() + L.f1, L.h, L.c, cond, w.data() + L.f1b, t.s1.data());
  matvec(w.data() + L.f1 + L.h * L.c, L.h, L.c, cond,
         w.data() + L.f1b + L.h, t.t1.data());
  for (std::size_t i = 0; i < L.h; ++i)
    t.g1[i] = (1.0 + t.s1[i]) * t.h1[i] + t.t1[i];

  matvec(w.data() + L.w2, L.h, L.h, t.g1.data(), w.data() + L.b2,
         t.h2.data());
  for (double& v : t.h2) v = std::tanh(v);
  matvec(w.data() + L.f2, L.h, L.c, cond, w.data() + L.f2b, t.s2.data());
  matvec(w.data() + L.f2 + L.h * L.c, L.h, L.c, cond,
         w.data() + L.f2b + L.h, t.t2.data());
  for (std::size_t i = 0; i < L.h; ++i)
    t.g2[i] = (1.0 + t.s2[i]) * t.h2[i] + t.t2[i];

  matvec(w.data() + L.w3, L.m, L.h, t.g2.data(), w.data() + L.b3,
         t.out.data());
}

// Squared-error loss sum_i (out_i - eps_i)^2 with gradients accumulated into
// *grad when given; the expectation of the loss at out = 0 is m.
inline double denoiser_loss_grad(const std::vector<double>& w,
                                 const DenoiserLayout& L, const double* u,
                                 const double* eps_target,
                                 std::vector<double>* grad) {
  DenoiserTrace t;
  denoiser_forward(w, L, u, t);
  double loss = 0.0;
  std::vector<double> dout(L.m);
  for (std::size_t i = 0; i < L.m; ++i) {
    const double r = t.out[i] - eps_target[i];
    loss += r * r;
    dout[i] = 2.0 * r;
  }
  if (!grad) return loss;

  const double* cond = u + 3 * L.m + kTimeEmbedDim;
  double* g = grad->data();
  std::vector<double> dg2(L.h), da2(L.h), dg1(L.h), da1(L.h);

  outer_acc(g + L.w3, g + L.b3, L.m, L.h, dout.data(), t.g2.data());
  matvec_t(w.data() + L.w3, L.m, L.h, dout.data(), dg2.data());

  std::vector<double> ds(L.h);
  for (std::size_t i = 0; i < L.h; ++i) ds[i] = dg2[i] * t.h2[i];
  outer_acc(g + L.f2, g + L.f2b, L.h, L.c, ds.data(), cond);
  outer_acc(g + L.f2 + L.h * L.c, g + L.f2b + L.h, L.h, L.c, dg2.data(),
            cond);
  for (std::size_t i = 0; i < L.h; ++i)
    da2[i] = dg2[i] * (1.0 + t.s2[i]) * (1.0 - t.h2[i] * t.h2[i]);

  outer_acc(g + L.w2, g + L.b2, L.h, L.h, da2.data(), t.g1.data());
  matvec_t(w.data() + L.w2, L.h, L.h, da2.data(), dg1.data());

  for (std::size_t i = 0; i < L.h; ++i) ds[i] = dg1[i] * t.h1[i];
  outer_acc(g + L.f1, g + L.f1b, L.h, L.c, ds.data(), cond);
  outer_acc(g + L.f1 + L.h * L.c, g + L.f1b + L.h, L.h, L.c, dg1.data(),
            cond);
  for (std::size_t i = 0; i < L.h; ++i)
    da1[i] = dg1[i] * (1.0 + t.s1[i]) * (1.0 - t.h1[i] * t.h1[i]);

  outer_acc(g + L.w1, g + L.b1, L.h, L.n_in, da1.data(), u);
  return loss;
}

}  // namespace detail

inline void DenoiserParams::validate() const {
  if (m < 2 || hidden < 4 || c_dim <= kMassEmbedDim || T < 2)
    throw contract_error("denoiser params: degenerate dimensions");
  if (!(mass_max > 0.0))
    throw contract_error("denoiser params: mass_max must be > 0");
  if (w.size() != detail::DenoiserLayout(m, hidden, c_dim).total)
    throw contract_error("denoiser params: weight vector has wrong size");
  for (double v : w)
    if (!std::isfinite(v))
      throw contract_error("denoiser params: non-finite weight");
}

inline DenoiserParams init_denoiser(std::size_t m, std::size_t c_dim,
                                    const DiffusionConfig& cfg, Rng& rng) {
  cfg.validate();
  DenoiserParams p;
  p.m = m;
  p.hidden = cfg.hidden;
  p.c_dim = c_dim;
  p.T = cfg.T;
  p.mass_max = 1.0;
  const detail::DenoiserLayout L(m, cfg.hidden, c_dim);
  p.w.assign(L.total, 0.0);
  const double s1 = 1.0 / std::sqrt(static_cast<double>(L.n_in));
  for (std::size_t i = L.w1; i < L.w1 + L.h * L.n_in; ++i)
    p.w[i] = s1 * rng.normal();
  const double s2 = 1.0 / std::sqrt(static_cast<double>(L.h));
  for (std::size_t i = L.w2; i < L.w2 + L.h * L.h; ++i)
    p.w[i] = s2 * rng.normal();
  p.validate();
  return p;
}

inline LatentVector predict_noise(const DenoiserParams& p,
                                  const LatentVector& z_t,
                                  const LatentVector& z_in,
                                  const LatentVector& z_cdp, std::size_t t,
                                  const ConditionVector& cond) {
  p.validate();
  const detail::DenoiserLayout L(p.m, p.hidden, p.c_dim);
  std::vector<double> u;
  detail::assemble_input(z_t, z_in, z_cdp, t, p.T, cond, L, u);
  detail::DenoiserTrace tr;
  detail::denoiser_forward(p.w, L, u.data(), tr);
  return tr.out;
}

// Codec latents plus conditioning for one dataset record.
struct RecordLatents {
  LatentVector z0;     // encoded optimal imprint (the target)
  LatentVector z_in;   // encoded current imprint
  LatentVector z_cdp;  // encoded patch depth
  ConditionVector cond;
};

inline RecordLatents encode_record(const CodecParams& codec,
                                   const GraspRecord& r, double mass_max) {
  RecordLatents out;
  out.z0 = encode(codec, r.imprint_optimal).mean;
  out.z_in = encode(codec, r.imprint_current).mean;
  out.z_cdp = encode(codec, depth_as_image(r.patch.depth_map)).mean;
  out.cond = make_condition(r.mass_kg, mass_max, r.texture);
  return out;
}

struct TrainedDenoiser {
  DenoiserParams params;
  std::vector<double> loss_history;  // batch-mean objective per step
};

inline TrainedDenoiser train_denoiser(const std::vector<GraspRecord>& records,
                                      const CodecParams& codec,
                                      const DiffusionConfig& cfg, Rng& rng) {
  cfg.validate();
  codec.validate();
  if (records.empty()) throw contract_error("train_denoiser: no records");
  double mass_max = 0.0;
  for (const GraspRecord& r : records) mass_max = std::max(mass_max, r.mass_kg);
  if (!(mass_max > 0.0))
    throw contract_error("train_denoiser: records carry no positive mass");

  std::vector<RecordLatents> lat;
  lat.reserve(records.size());
  for (const GraspRecord& r : records)
    lat.push_back(encode_record(codec, r, mass_max));

  const NoiseSchedule sched = make_schedule(cfg.T, cfg.beta_min, cfg.beta_max);
  TrainedDenoiser out;
  out.params = init_denoiser(codec.m, lat[0].cond.c.size(), cfg, rng);
  out.params.mass_max = mass_max;
  const detail::DenoiserLayout L(out.params.m, out.params.hidden,
                                 out.params.c_dim);
  AdamState adam(cfg.lr);
  std::vector<double> grad(L.total), u;
  LatentVector eps(codec.m);

  for (std::size_t step = 0; step < cfg.steps; ++step) {
    std::fill(grad.begin(), grad.end(), 0.0);
    double batch_loss = 0.0;
    for (std::size_t b = 0; b < cfg.batch; ++b) {
      const std::size_t idx = rng.uniform_int(records.size());
      const std::size_t t = 1 + rng.uniform_int(cfg.T);
      for (double& e : eps) e = rng.normal();
      const LatentVector z_t = forward_noise(lat[idx].z0, t, sched, eps);
      detail::assemble_input(z_t, lat[idx].z_in, lat[idx].z_cdp, t, cfg.T,
                             lat[idx].cond, L, u);
      batch_loss += detail::denoiser_loss_grad(out.params.w, L, u.data(),
                                               eps.data(), &grad);
    }
    if (!std::isfinite(batch_loss))
      throw numeric_error("train_denoiser: non-finite loss at step " +
                          std::to_string(step));
    const double inv = 1.0 / static_cast<double>(cfg.batch);
    for (double& v : grad) v *= inv;
    adam.step(out.params.w, grad, "denoiser");
    out.loss_history.push_back(batch_loss * inv);
  }
  return out;
}

// Reverse-pass grid: steps+1 marks from T down to 0, evenly spaced.
inline std::vector<std::size_t> ddim_timesteps(std::size_t T,
                                               std::size_t steps) {
  if (steps < 1 || steps > T)
    throw contract_error("ddim_timesteps: steps must be in [1, T]");
  std::vector<std::size_t> ts(steps + 1);
  for (std::size_t k = 0; k <= steps; ++k)
    ts[k] = static_cast<std::size_t>(
        std::llround(static_cast<double>(T) *
                     static_cast<double>(steps - k) /
                     static_cast<double>(steps)));
  for (std::size_t k = 1; k <= steps; ++k)
    if (ts[k] >= ts[k - 1])
      throw contract_error("ddim_timesteps: grid collapsed");
  return ts;
}

struct GoalSample {
  LatentVector z_g;
  ImprintImage x_g;
};

// Denoise a seeded N(0, I) start down the DDIM grid, conditioned on the
// current imprint, the patch depth, and the object physics.
inline GoalSample sample_goal(const DenoiserParams& p,
                              const CodecParams& codec,
                              const ImprintImage& x_c, const Mat& patch_depth,
                              double mass_kg, Texture texture,
                              std::size_t steps, const NoiseSchedule& s,
                              Rng& rng) {
  p.validate();
  codec.validate();
  if (p.m != codec.m)
    throw contract_error("sample_goal: denoiser and codec disagree on m");
  if (s.T != p.T)
    throw contract_error("sample_goal: schedule does not match the denoiser");
  const LatentVector z_in = encode(codec, x_c).mean;
  const LatentVector z_cdp = encode(codec, depth_as_image(patch_depth)).mean;
  const ConditionVector cond = make_condition(mass_kg, p.mass_max, texture);
  if (cond.c.size() != p.c_dim)
    throw contract_error("sample_goal: condition length mismatch");

  LatentVector z(p.m);
  for (double& v : z) v = rng.normal();
  const std::vector<std::size_t> ts = ddim_timesteps(s.T, steps);
  for (std::size_t k = 0; k + 1 < ts.size(); ++k) {
    const LatentVector eps_hat =
        predict_noise(p, z, z_in, z_cdp, ts[k], cond);
    z = ddim_step(z, eps_hat, ts[k], ts[k + 1], s);
  }
  GoalSample out;
  out.x_g = decode(codec, z);
  out.z_g = std::move(z);
  return out;
}

inline void save_denoiser(const DenoiserParams& p, const std::string& path) {
  p.validate();
  phyt::Writer w(path, 0);
  w.write_record({kDenoiserSection, static_cast<double>(p.m),
                  static_cast<double>(p.hidden),
                  static_cast<double>(p.c_dim), static_cast<double>(p.T),
                  p.mass_max});
  w.write_record(p.w);
  w.finish();
}

inline DenoiserParams load_denoiser(const std::string& path) {
  phyt::Reader r(path);
  if (r.dims() != 0)
    throw artifact_error("not a parameter file (fixed-dims container): " +
                         path);
  std::vector<double> header;
  if (!r.next_record(header) || header.size() != 6)
    throw artifact_error("parameter file missing section header: " + path);
  if (header[0] != kDenoiserSection)
    throw artifact_error("parameter file holds a different section: " + path);
  DenoiserParams p;
  p.m = static_cast<std::size_t>(header[1]);
  p.hidden = static_cast<std::size_t>(header[2]);
  p.c_dim = static_cast<std::size_t>(header[3]);
  p.T = static_cast<std::size_t>(header[4]);
  p.mass_max = header[5];
  if (!r.next_record(p.w))
    throw artifact_error("parameter file missing weights: " + path);
  p.validate();
  return p;
}

}  // namespace phytac
