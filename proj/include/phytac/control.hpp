#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "phytac/codec.hpp"
#include "phytac/errors.hpp"
#include "phytac/matrix.hpp"
#include "phytac/plant.hpp"
#include "phytac/rng.hpp"

namespace phytac {

using ScaleVector = std::vector<double>;

constexpr double kScaleFloor = 1e-6;

struct ControlConfig {
  double q_weight = 1.0;
  double r_weight = 1.0;
  double forgetting = 0.995;  // RLS forgetting factor
  double p0 = 1e8;            // initial RLS covariance scale
  double delta_in = 0.15;     // hold threshold on D_c
  std::size_t window_frames = 10;
  double du_limit = 1.0;      // per-step aperture increment bound, mm
  std::size_t resynth_every = 5;
  std::size_t frame_budget = 100;
  double goal_force_factor = 1.07;  // goal force as a multiple of F*

  void validate() const {
    if (!(q_weight > 0.0) || !(r_weight > 0.0))
      throw config_error("control: q_weight and r_weight must be > 0");
    if (!(forgetting > 0.0 && forgetting <= 1.0))
      throw config_error("control: forgetting factor outside (0, 1]");
    if (!(p0 > 0.0)) throw config_error("control: p0 must be > 0");
    if (!(delta_in > 0.0)) throw config_error("control: delta_in must be > 0");
    if (window_frames < 1)
      throw config_error("control: window_frames must be >= 1");
    if (!(du_limit > 0.0)) throw config_error("control: du_limit must be > 0");
    if (resynth_every < 1)
      throw config_error("control: resynth_every must be >= 1");
    if (!(goal_force_factor >= 1.0))
      throw config_error("control: goal_force_factor must be >= 1");
  }
};

// Per-dimension population standard deviation of the training latents,
// floored so the normalization never divides by zero.
inline ScaleVector fit_scale(const std::vector<LatentVector>& latents) {
  if (latents.size() < 2)
    throw contract_error("fit_scale: need at least 2 latents");
  const std::size_t m = latents[0].size();
  for (const LatentVector& z : latents)
    if (z.size() != m)
      throw contract_error("fit_scale: latents of mixed length");
  ScaleVector scale(m);
  const double inv = 1.0 / static_cast<double>(latents.size());
  for (std::size_t j = 0; j < m; ++j) {
    double mean = 0.0;
    for (const LatentVector& z : latents) mean += z[j];
    mean *= inv;
    double var = 0.0;
    for (const LatentVector& z : latents)
      var += (z[j] - mean) * (z[j] - mean);
    scale[j] = std::max(std::sqrt(var * inv), kScaleFloor);
  }
  return scale;
}

inline LatentVector latent_error(const LatentVector& z_c,
                                 const LatentVector& z_g,
                                 const ScaleVector& scale) {
  if (z_c.size() != z_g.size() || z_c.size() != scale.size())
    throw contract_error("latent_error: mismatched vector lengths");
  LatentVector e(z_c.size());
  for (std::size_t j = 0; j < e.size(); ++j) {
    if (!(scale[j] > 0.0))
      throw contract_error("latent_error: scale entries must be positive");
    e[j] = (z_c[j] - z_g[j]) / scale[j];
  }
  return e;
}

// D_c, the monitored error distance.
inline double error_distance(const LatentVector& e) {
  double s = 0.0;
  for (double v : e) s += v * v;
  return std::sqrt(s);
}

// Linear latent dynamics e' = A e + B du + d identified online; the constant
// disturbance d is estimated but deliberately left out of gain synthesis, so
// its residual is absorbed by feedback and the hold rule.
struct DynamicsEstimate {
  Mat A;    // m x m
  Mat B;    // m x 1
  Mat d;    // m x 1
  Mat cov;  // (m+2) x (m+2), shared across output rows
  double forgetting = 0.995;
  double p0 = 1e8;
  std::size_t samples = 0;
  bool cov_reset = false;  // covariance lost positive definiteness once

  std::size_t m() const { return A.rows(); }

  void validate() const {
    const std::size_t n = A.rows();
    if (n == 0 || A.cols() != n || B.rows() != n || B.cols() != 1 ||
        d.rows() != n || d.cols() != 1 || cov.rows() != n + 2 ||
        cov.cols() != n + 2)
      throw contract_error("dynamics estimate: inconsistent shapes");
    if (!(forgetting > 0.0 && forgetting <= 1.0))
      throw contract_error("dynamics estimate: forgetting outside (0, 1]");
    if (!A.all_finite() || !B.all_finite() || !d.all_finite() ||
        !cov.all_finite())
      throw contract_error("dynamics estimate: non-finite entries");
  }
};

// Contraction rate of the prior dynamics model, also the fallback A when an
// identified model turns out to be unstabilizable.
constexpr double kPriorDecay = 0.9;

// Conservative prior before any data: a mildly contracting A and a small
// random B, so the very first gain exists and barely moves the gripper.
inline DynamicsEstimate init_dynamics(std::size_t m, const ControlConfig& cfg,
                                      Rng& rng) {
  if (m == 0) throw contract_error("init_dynamics: empty latent");
  DynamicsEstimate est;
  est.A = Mat::identity(m) * kPriorDecay;
  est.B = Mat(m, 1);
  for (std::size_t i = 0; i < m; ++i) est.B(i, 0) = 0.05 * rng.normal();
  est.d = Mat(m, 1);
  est.cov = Mat::identity(m + 2) * cfg.p0;
  est.forgetting = cfg.forgetting;
  est.p0 = cfg.p0;
  return est;
}

// One recursive least-squares step on the regressor [e_prev; du_prev; 1].
// The covariance is symmetrized every step; if it still loses positive
// definiteness it is reset to the initial prior and the event is flagged.
inline DynamicsEstimate rls_update(DynamicsEstimate est,
                                   const LatentVector& e_prev, double du_prev,
                                   const LatentVector& e_next) {
  est.validate();
  const std::size_t m = est.m();
  if (e_prev.size() != m || e_next.size() != m)
    throw contract_error("rls_update: latent length does not match estimate");
  for (double v : e_prev)
    if (!std::isfinite(v)) throw contract_error("rls_update: non-finite e_prev");
  for (double v : e_next)
    if (!std::isfinite(v)) throw contract_error("rls_update: non-finite e_next");
  if (!std::isfinite(du_prev))
    throw contract_error("rls_update: non-finite du_prev");

  const std::size_t n = m + 2;
  std::vector<double> phi(n);
  for (std::size_t j = 0; j < m; ++j) phi[j] = e_prev[j];
  phi[m] = du_prev;
  phi[m + 1] = 1.0;

  // pphi = cov * phi, denom = lambda + phi' cov phi.
  std::vector<double> pphi(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += est.cov(i, j) * phi[j];
    pphi[i] = s;
  }
  double quad = 0.0;
  for (std::size_t j = 0; j < n; ++j) quad += phi[j] * pphi[j];
  double denom = est.forgetting + quad;
  if (!(denom > 0.0) || !std::isfinite(denom)) {
    est.cov = Mat::identity(n) * est.p0;
    est.cov_reset = true;
    for (std::size_t i = 0; i < n; ++i) pphi[i] = est.p0 * phi[i];
    quad = 0.0;
    for (std::size_t j = 0; j < n; ++j) quad += phi[j] * pphi[j];
    denom = est.forgetting + quad;
  }

  std::vector<double> gain(n);
  for (std::size_t i = 0; i < n; ++i) gain[i] = pphi[i] / denom;

  // Row-wise parameter update: theta_i = [A_i, B_i, d_i].
  for (std::size_t i = 0; i < m; ++i) {
    double pred = est.B(i, 0) * phi[m] + est.d(i, 0);
    for (std::size_t j = 0; j < m; ++j) pred += est.A(i, j) * phi[j];
    const double r = e_next[i] - pred;
    for (std::size_t j = 0; j < m; ++j) est.A(i, j) += r * gain[j];
    est.B(i, 0) += r * gain[m];
    est.d(i, 0) += r * gain[m + 1];
  }

  // cov = (cov - gain * (cov phi)') / lambda, then symmetrize.
  const double inv_l = 1.0 / est.forgetting;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      est.cov(i, j) = (est.cov(i, j) - gain[i] * pphi[j]) * inv_l;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) {
      const double s = 0.5 * (est.cov(i, j) + est.cov(j, i));
      est.cov(i, j) = s;
      est.cov(j, i) = s;
    }
  bool ok = est.cov.all_finite();
  for (std::size_t i = 0; ok && i < n; ++i)
    if (!(est.cov(i, i) > 0.0)) ok = false;
  if (!ok) {
    est.cov = Mat::identity(n) * est.p0;
    est.cov_reset = true;
  }
  ++est.samples;
  return est;
}

struct LqrGain {
  Mat P;  // m x m Riccati solution
  Mat K;  // 1 x m feedback gain
  double q_weight = 1.0;
  double r_weight = 1.0;
};

// Fixed-point Riccati iteration from P = Q; the closed loop is verified
// stable before the gain is returned.
inline LqrGain solve_dare(const Mat& A, const Mat& B, const Mat& Q,
                          const Mat& R) {
  const std::size_t m = A.rows();
  if (m == 0 || A.cols() != m)
    throw contract_error("solve_dare: A must be square");
  if (B.rows() != m || B.cols() == 0)
    throw contract_error("solve_dare: B rows must match A");
  if (Q.rows() != m || Q.cols() != m)
    throw contract_error("solve_dare: Q must match A");
  if (R.rows() != B.cols() || R.cols() != B.cols())
    throw contract_error("solve_dare: R must match the input dimension");
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = i; j < m; ++j)
      if (std::abs(Q(i, j) - Q(j, i)) > 1e-12)
        throw contract_error("solve_dare: Q must be symmetric");
  for (std::size_t i = 0; i < m; ++i)
    if (Q(i, i) < 0.0)
      throw contract_error("solve_dare: Q must be positive semidefinite");
  for (std::size_t i = 0; i < R.rows(); ++i) {
    for (std::size_t j = i; j < R.cols(); ++j)
      if (std::abs(R(i, j) - R(j, i)) > 1e-12)
        throw contract_error("solve_dare: R must be symmetric");
    if (!(R(i, i) > 0.0))
      throw contract_error("solve_dare: R must be positive definite");
  }

  const Mat At = A.transpose();
  const Mat Bt = B.transpose();
  Mat P = Q;
  bool converged = false;
  for (int it = 0; it < 10000; ++it) {
    const Mat PA = matmul(P, A);
    const Mat PB = matmul(P, B);
    const Mat gram = R + matmul(Bt, PB);
    Mat KP;
    try {
      KP = solve_linear(gram, matmul(Bt, PA));
    } catch (const numeric_error&) {
      throw numeric_error("solve_dare: unstabilizable estimate");
    }
    Mat next = Q + matmul(At, PA) - matmul(matmul(At, PB), KP);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = i + 1; j < m; ++j) {
        const double s = 0.5 * (next(i, j) + next(j, i));
        next(i, j) = s;
        next(j, i) = s;
      }
    if (!next.all_finite())
      throw numeric_error("solve_dare: unstabilizable estimate");
    const double delta = (next - P).max_abs();
    P = next;
    if (delta <= 1e-10) {
      converged = true;
      break;
    }
  }
  if (!converged)
    throw numeric_error("solve_dare: unstabilizable estimate");

  LqrGain g;
  g.P = P;
  const Mat gram = R + matmul(Bt, matmul(P, B));
  g.K = solve_linear(gram, matmul(Bt, matmul(P, A)));
  const Mat closed = A - matmul(B, g.K);
  if (!(spectral_radius(closed) < 1.0))
    throw numeric_error("solve_dare: unstabilizable estimate");
  return g;
}

// du = -K e, clamped to the per-step actuator bound.
inline double control_step(const LqrGain& gain, const LatentVector& e_c,
                           double du_limit, bool* clamped = nullptr) {
  if (gain.K.rows() != 1 || gain.K.cols() != e_c.size())
    throw contract_error("control_step: gain does not match error length");
  if (!(du_limit > 0.0))
    throw contract_error("control_step: du_limit must be > 0");
  double du = 0.0;
  for (std::size_t j = 0; j < e_c.size(); ++j) du -= gain.K(0, j) * e_c[j];
  const double bounded = std::clamp(du, -du_limit, du_limit);
  if (clamped) *clamped = bounded != du;
  return bounded;
}

// Sliding-window stopping rule: hold once the last window_frames error
// distances all sit at or below delta_in and the safety predicate agrees.
class HoldMonitor {
 public:
  HoldMonitor(double delta_in, std::size_t window_frames)
      : delta_in_(delta_in), buf_(window_frames, 0.0) {
    if (!(delta_in > 0.0))
      throw contract_error("hold monitor: delta_in must be > 0");
    if (window_frames < 1)
      throw contract_error("hold monitor: window_frames must be >= 1");
  }

  double delta_in() const { return delta_in_; }
  std::size_t window_frames() const { return buf_.size(); }
  bool full() const { return count_ >= buf_.size(); }

  bool update(double d_c, bool safety_ok) {
    if (!(d_c >= 0.0))
      throw contract_error("hold monitor: d_c must be >= 0");
    buf_[count_ % buf_.size()] = d_c;
    ++count_;
    if (!safety_ok || count_ < buf_.size()) return false;
    for (double v : buf_)
      if (v > delta_in_) return false;
    return true;
  }

 private:
  double delta_in_;
  std::vector<double> buf_;
  std::size_t count_ = 0;
};

inline bool hold_update(HoldMonitor& mon, double d_c, bool safety_ok) {
  return mon.update(d_c, safety_ok);
}

// One grasp attempt: the scene the plant simulates plus where the gripper
// starts.
struct GraspEpisode {
  ContactPatch patch;
  Material material;
  PlantConfig plant;
  double start_aperture = 0.0;
};

struct ServoFrame {
  std::size_t frame = 0;
  double aperture = 0.0;
  double force = 0.0;
  double d_c = 0.0;
  double du = 0.0;
  bool clamped = false;
  bool slipping = false;
  bool hold = false;
};

struct ServoTrace {
  std::vector<ServoFrame> frames;
  bool held = false;
  std::size_t hold_frame = 0;  // valid when held
  bool safety_failure = false;
  bool cov_reset = false;
  std::size_t dare_failures = 0;  // re-syntheses that kept the old gain
  double final_aperture = 0.0;
  double final_force = 0.0;
  bool final_slipping = true;
};

// Closed-loop latent servo: encode the imprint, normalize the error against
// the goal, refine the dynamics online, re-synthesize the gain periodically,
// and command clamped aperture increments until the hold rule fires or the
// frame budget runs out. The passed-in estimate may be warm-started offline.
inline ServoTrace run_servo(const GraspEpisode& ep, const CodecParams& codec,
                            const LatentVector& z_g, const ScaleVector& scale,
                            DynamicsEstimate est, const ControlConfig& cfg,
                            Rng& rng) {
  cfg.validate();
  ep.plant.validate();
  est.validate();
  codec.validate();
  if (z_g.size() != codec.m || est.m() != codec.m || scale.size() != codec.m)
    throw contract_error("run_servo: latent dimensions disagree");

  ServoTrace tr;
  const Mat Q = Mat::identity(codec.m) * cfg.q_weight;
  Mat R(1, 1);
  R(0, 0) = cfg.r_weight;

  PlantState st;
  try {
    st = plant_at(ep.patch, ep.start_aperture, ep.material, ep.plant, rng);
  } catch (const force_limit_error&) {
    tr.safety_failure = true;
    return tr;
  }

  // A warm-started estimate from few rank-deficient samples can be wildly
  // unstable; falling back to the contracting prior with the identified
  // input column keeps the loop moving (and the identifier excited) rather
  // than freezing at zero gain.
  LqrGain gain;
  try {
    gain = solve_dare(est.A, est.B, Q, R);
  } catch (const numeric_error&) {
    ++tr.dare_failures;
    try {
      gain = solve_dare(Mat::identity(codec.m) * kPriorDecay, est.B, Q, R);
    } catch (const numeric_error&) {
      gain.P = Q;
      gain.K = Mat(1, codec.m);
    }
  }

  HoldMonitor mon(cfg.delta_in, cfg.window_frames);
  LatentVector e_prev;
  double du_prev = 0.0;
  bool have_prev = false;

  for (std::size_t frame = 0; frame < cfg.frame_budget; ++frame) {
    const LatentVector z_c = encode(codec, st.imprint).mean;
    const LatentVector e_c = latent_error(z_c, z_g, scale);
    const double d_c = error_distance(e_c);

    if (have_prev) est = rls_update(est, e_prev, du_prev, e_c);
    if (frame > 0 && frame % cfg.resynth_every == 0) {
      try {
        gain = solve_dare(est.A, est.B, Q, R);
      } catch (const numeric_error&) {
        ++tr.dare_failures;  // keep the previous gain
      }
    }

    const bool safety_ok = !st.slipping;
    const bool hold = hold_update(mon, d_c, safety_ok);
    bool clamped = false;
    const double du =
        hold ? 0.0 : control_step(gain, e_c, cfg.du_limit, &clamped);
    tr.frames.push_back({frame, st.aperture_u, st.normal_force, d_c, du,
                         clamped, st.slipping, hold});
    if (hold) {
      tr.held = true;
      tr.hold_frame = frame;
      break;
    }

    const double before = st.aperture_u;
    try {
      st = step(st, du, ep.patch, ep.material, ep.plant, rng);
    } catch (const force_limit_error&) {
      tr.safety_failure = true;
      break;
    }
    e_prev = e_c;
    du_prev = st.aperture_u - before;  // actual, after clamping at bounds
    have_prev = true;
  }

  tr.cov_reset = est.cov_reset;
  tr.final_aperture = st.aperture_u;
  tr.final_force = st.normal_force;
  tr.final_slipping = st.slipping;
  return tr;
}

}  // namespace phytac
