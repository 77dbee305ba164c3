#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "phytac/errors.hpp"

namespace phytac {

// Single-channel sensor image on a fixed grid, intensities nominally in
// [0, 1]. Stored row-major as doubles; files hold 32-bit floats.
struct ImprintImage {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> pix;

  ImprintImage() = default;
  ImprintImage(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), pix(r * c, fill) {}

  double& at(std::size_t r, std::size_t c) { return pix[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return pix[r * cols + c]; }

  std::size_t size() const { return pix.size(); }

  bool same_shape(const ImprintImage& o) const {
    return rows == o.rows && cols == o.cols;
  }

  void require_same_shape(const ImprintImage& o, const char* where) const {
    if (!same_shape(o))
      throw contract_error(std::string(where) + ": grid mismatch " +
                           std::to_string(rows) + "x" + std::to_string(cols) +
                           " vs " + std::to_string(o.rows) + "x" +
                           std::to_string(o.cols));
  }

  double mean() const {
    if (pix.empty()) return 0.0;
    double s = 0.0;
    for (double v : pix) s += v;
    return s / static_cast<double>(pix.size());
  }

  bool in_unit_range() const {
    for (double v : pix)
      if (!(v >= 0.0 && v <= 1.0)) return false;
    return true;
  }

  bool all_finite() const {
    for (double v : pix)
      if (!std::isfinite(v)) return false;
    return true;
  }
};

}  // namespace phytac
