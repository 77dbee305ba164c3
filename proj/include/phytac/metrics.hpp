#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>

#include "phytac/control.hpp"
#include "phytac/errors.hpp"
#include "phytac/image.hpp"

namespace phytac {

constexpr double kPsnrCsvCap = 99.0;  // dB, stands in for +inf in reports

struct ImageMetrics {
  double mae = 0.0;
  double rmse = 0.0;
  double psnr_db = 0.0;
  double ssim = 0.0;
};

inline double mae(const ImprintImage& x, const ImprintImage& y) {
  x.require_same_shape(y, "mae");
  double s = 0.0;
  for (std::size_t i = 0; i < x.pix.size(); ++i)
    s += std::abs(x.pix[i] - y.pix[i]);
  return s / static_cast<double>(x.pix.size());
}

inline double mse(const ImprintImage& x, const ImprintImage& y) {
  x.require_same_shape(y, "mse");
  double s = 0.0;
  for (std::size_t i = 0; i < x.pix.size(); ++i) {
    const double d = x.pix[i] - y.pix[i];
    s += d * d;
  }
  return s / static_cast<double>(x.pix.size());
}

inline double rmse(const ImprintImage& x, const ImprintImage& y) {
  return std::sqrt(mse(x, y));
}

// Identical images report +inf; cap with psnr_for_csv when serializing.
inline double psnr(const ImprintImage& x, const ImprintImage& y,
                   double peak = 1.0) {
  if (!(peak > 0.0)) throw contract_error("psnr: peak must be > 0");
  const double m = mse(x, y);
  if (m == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(peak * peak / m);
}

inline double psnr_for_csv(double psnr_db) {
  return std::min(psnr_db, kPsnrCsvCap);
}

// Mean structural similarity over 8x8 windows at stride 4, population
// moments, stabilizers c1 = (K1 L)^2 and c2 = (K2 L)^2 with K1 = 0.01,
// K2 = 0.03 and dynamic range L = 1.
inline double ssim(const ImprintImage& x, const ImprintImage& y) {
  x.require_same_shape(y, "ssim");
  constexpr std::size_t kWin = 8;
  constexpr std::size_t kStride = 4;
  if (x.rows < kWin || x.cols < kWin)
    throw contract_error("ssim: image smaller than the 8x8 window");
  constexpr double c1 = 0.01 * 0.01;
  constexpr double c2 = 0.03 * 0.03;
  const double inv_n = 1.0 / static_cast<double>(kWin * kWin);

  double total = 0.0;
  std::size_t windows = 0;
  for (std::size_t r0 = 0; r0 + kWin <= x.rows; r0 += kStride)
    for (std::size_t c0 = 0; c0 + kWin <= x.cols; c0 += kStride) {
      double sx = 0.0, sy = 0.0, sxx = 0.0, syy = 0.0, sxy = 0.0;
      for (std::size_t r = r0; r < r0 + kWin; ++r)
        for (std::size_t c = c0; c < c0 + kWin; ++c) {
          const double a = x.at(r, c);
          const double b = y.at(r, c);
          sx += a;
          sy += b;
          sxx += a * a;
          syy += b * b;
          sxy += a * b;
        }
      const double mx = sx * inv_n;
      const double my = sy * inv_n;
      const double vx = sxx * inv_n - mx * mx;
      const double vy = syy * inv_n - my * my;
      const double cov = sxy * inv_n - mx * my;
      total += ((2.0 * mx * my + c1) * (2.0 * cov + c2)) /
               ((mx * mx + my * my + c1) * (vx + vy + c2));
      ++windows;
    }
  return total / static_cast<double>(windows);
}

inline ImageMetrics image_metrics(const ImprintImage& x,
                                  const ImprintImage& y) {
  ImageMetrics m;
  m.mae = mae(x, y);
  m.rmse = rmse(x, y);
  m.psnr_db = psnr(x, y);
  m.ssim = ssim(x, y);
  return m;
}

// Grasp-state ladder: each level adds a requirement on top of the previous.
struct GraspOutcome {
  bool sug = false;   // holding at episode end with force and no slip
  bool stg = false;   // sug and no slip event after the hold engaged
  bool fosg = false;  // stg and final force within [F*, (1+tol_f) F*]
};

inline GraspOutcome classify_outcome(const ServoTrace& trace, double f_star,
                                     double tol_f = 0.15) {
  if (!(f_star > 0.0))
    throw contract_error("classify_outcome: f_star must be > 0");
  if (!(tol_f >= 0.0))
    throw contract_error("classify_outcome: tol_f must be >= 0");
  GraspOutcome out;
  out.sug = trace.held && !trace.safety_failure && trace.final_force > 0.0 &&
            !trace.final_slipping;
  bool slip_after_hold = false;
  if (trace.held)
    for (std::size_t i = trace.hold_frame; i < trace.frames.size(); ++i)
      if (trace.frames[i].slipping) slip_after_hold = true;
  out.stg = out.sug && !slip_after_hold;
  out.fosg = out.stg && trace.final_force >= f_star &&
             trace.final_force <= (1.0 + tol_f) * f_star;
  return out;
}

}  // namespace phytac
