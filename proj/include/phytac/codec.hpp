#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "phytac/errors.hpp"
#include "phytac/image.hpp"
#include "phytac/optimizer.hpp"
#include "phytac/rng.hpp"
#include "phytac/serialize.hpp"

namespace phytac {

using LatentVector = std::vector<double>;

// Section tags for PHYT parameter files.
constexpr double kCodecSection = 1.0;
constexpr double kDenoiserSection = 2.0;

struct CodecConfig {
  std::size_t m = 16;       // latent dimension
  std::size_t hidden = 64;  // width of both hidden layers
  std::size_t epochs = 50;
  std::size_t batch = 32;
  double lr = 1e-3;
  double e_warm = 10.0;     // KL warm-up length, epochs
  double lambda_kl = 1e-3;  // KL weight after warm-up

  void validate() const {
    if (m < 2) throw config_error("codec: latent dimension must be >= 2");
    if (hidden < 4) throw config_error("codec: hidden width must be >= 4");
    if (epochs < 1 || batch < 1)
      throw config_error("codec: epochs and batch size must be >= 1");
    if (!(lr > 0.0)) throw config_error("codec: learning rate must be > 0");
    if (!(e_warm >= 1.0)) throw config_error("codec: e_warm must be >= 1");
    if (!(lambda_kl >= 0.0)) throw config_error("codec: lambda_kl must be >= 0");
  }
};

namespace detail {

// Offsets of every weight block inside the flat parameter vector.
struct CodecLayout {
  std::size_t g = 0, h = 0, m = 0;
  std::size_t enc_w1 = 0, enc_b1 = 0, enc_w2 = 0, enc_b2 = 0;
  std::size_t enc_wm = 0, enc_bm = 0, enc_wl = 0, enc_bl = 0;
  std::size_t dec_w1 = 0, dec_b1 = 0, dec_w2 = 0, dec_b2 = 0;
  std::size_t dec_w3 = 0, dec_b3 = 0, total = 0;

  CodecLayout(std::size_t grid, std::size_t hidden, std::size_t latent)
      : g(grid), h(hidden), m(latent) {
    std::size_t at = 0;
    auto block = [&at](std::size_t n) {
      const std::size_t off = at;
      at += n;
      return off;
    };
    enc_w1 = block(h * g);
    enc_b1 = block(h);
    enc_w2 = block(h * h);
    enc_b2 = block(h);
    enc_wm = block(m * h);
    enc_bm = block(m);
    enc_wl = block(m * h);
    enc_bl = block(m);
    dec_w1 = block(h * m);
    dec_b1 = block(h);
    dec_w2 = block(h * h);
    dec_b2 = block(h);
    dec_w3 = block(g * h);
    dec_b3 = block(g);
    total = at;
  }
};

inline void matvec(const double* w, std::size_t rows, std::size_t cols,
                   const double* x, const double* b, double* y) {
  for (std::size_t i = 0; i < rows; ++i) {
    double s = b ? b[i] : 0.0;
    const double* wi = w + i * cols;
    for (std::size_t j = 0; j < cols; ++j) s += wi[j] * x[j];
    y[i] = s;
  }
}

// dx = W^T dy (accumulating into a zeroed buffer).
inline void matvec_t(const double* w, std::size_t rows, std::size_t cols,
                     const double* dy, double* dx) {
  std::fill(dx, dx + cols, 0.0);
  for (std::size_t i = 0; i < rows; ++i) {
    const double* wi = w + i * cols;
    const double d = dy[i];
    if (d == 0.0) continue;
    for (std::size_t j = 0; j < cols; ++j) dx[j] += d * wi[j];
  }
}

// gW += dy x^T and gb += dy.
inline void outer_acc(double* gw, double* gb, std::size_t rows,
                      std::size_t cols, const double* dy, const double* x) {
  for (std::size_t i = 0; i < rows; ++i) {
    double* gi = gw + i * cols;
    const double d = dy[i];
    gb[i] += d;
    if (d == 0.0) continue;
    for (std::size_t j = 0; j < cols; ++j) gi[j] += d * x[j];
  }
}

}  // namespace detail

// Dense variational codec: centered image -> two tanh layers -> (mean,
// logvar); latent -> two tanh layers -> (1 + tanh)/2 image. All weights live
// in one flat vector so the optimizer and the gradient checker see the whole
// model.
struct CodecParams {
  std::size_t rows = 0, cols = 0;
  std::size_t hidden = 0, m = 0;
  std::vector<double> w;

  std::size_t grid() const { return rows * cols; }
  detail::CodecLayout layout() const { return {grid(), hidden, m}; }

  void validate() const {
    if (m < 2 || hidden < 1 || rows == 0 || cols == 0)
      throw contract_error("codec params: degenerate dimensions");
    if (w.size() != layout().total)
      throw contract_error("codec params: weight vector has wrong size");
    for (double v : w)
      if (!std::isfinite(v))
        throw contract_error("codec params: non-finite weight");
  }
};

struct EncodeResult {
  LatentVector mean;
  LatentVector logvar;
};

// Hidden layers start at random scaled weights; both encoder heads and the
// decoder output layer start at zero, so an untrained codec encodes any
// image to (0, 0) and decodes anything to the output midpoint 0.5.
inline CodecParams init_codec(std::size_t rows, std::size_t cols,
                              const CodecConfig& cfg, Rng& rng) {
  cfg.validate();
  if (rows == 0 || cols == 0)
    throw contract_error("codec: empty sensor grid");
  CodecParams p;
  p.rows = rows;
  p.cols = cols;
  p.hidden = cfg.hidden;
  p.m = cfg.m;
  const detail::CodecLayout L = p.layout();
  p.w.assign(L.total, 0.0);
  auto fill = [&](std::size_t off, std::size_t rows_n, std::size_t cols_n) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(cols_n));
    for (std::size_t k = 0; k < rows_n * cols_n; ++k)
      p.w[off + k] = scale * rng.normal();
  };
  fill(L.enc_w1, L.h, L.g);
  fill(L.enc_w2, L.h, L.h);
  fill(L.dec_w1, L.h, L.m);
  fill(L.dec_w2, L.h, L.h);
  return p;
}

namespace detail {

// Forward activations kept for the backward pass. xc is the centered
// encoder input 2x - 1.
struct CodecTrace {
  std::vector<double> xc, h1, h2, mu, lv, z, g1, g2, y;
};

inline void codec_forward(const std::vector<double>& w, const CodecLayout& L,
                          const double* x, const double* eps,
                          CodecTrace& t) {
  t.xc.resize(L.g);
  for (std::size_t i = 0; i < L.g; ++i) t.xc[i] = 2.0 * x[i] - 1.0;
  t.h1.resize(L.h);
  t.h2.resize(L.h);
  t.mu.resize(L.m);
  t.lv.resize(L.m);
  t.z.resize(L.m);
  t.g1.resize(L.h);
  t.g2.resize(L.h);
  t.y.resize(L.g);
  matvec(w.data() + L.enc_w1, L.h, L.g, t.xc.data(), w.data() + L.enc_b1,
         t.h1.data());
  for (double& v : t.h1) v = std::tanh(v);
  matvec(w.data() + L.enc_w2, L.h, L.h, t.h1.data(), w.data() + L.enc_b2,
         t.h2.data());
  for (double& v : t.h2) v = std::tanh(v);
  matvec(w.data() + L.enc_wm, L.m, L.h, t.h2.data(), w.data() + L.enc_bm,
         t.mu.data());
  matvec(w.data() + L.enc_wl, L.m, L.h, t.h2.data(), w.data() + L.enc_bl,
         t.lv.data());
  for (std::size_t j = 0; j < L.m; ++j)
    t.z[j] = t.mu[j] + (eps ? std::exp(0.5 * t.lv[j]) * eps[j] : 0.0);
  matvec(w.data() + L.dec_w1, L.h, L.m, t.z.data(), w.data() + L.dec_b1,
         t.g1.data());
  for (double& v : t.g1) v = std::tanh(v);
  matvec(w.data() + L.dec_w2, L.h, L.h, t.g1.data(), w.data() + L.dec_b2,
         t.g2.data());
  for (double& v : t.g2) v = std::tanh(v);
  matvec(w.data() + L.dec_w3, L.g, L.h, t.g2.data(), w.data() + L.dec_b3,
         t.y.data());
  for (double& v : t.y) v = 0.5 * (1.0 + std::tanh(v));
}

// Loss = mean-abs reconstruction + omega * KL; accumulates the full-model
// gradient into *grad when given. Returns the loss.
inline double codec_loss_grad(const std::vector<double>& w,
                              const CodecLayout& L, const double* x,
                              const double* eps, double omega,
                              std::vector<double>* grad) {
  CodecTrace t;
  codec_forward(w, L, x, eps, t);
  double loss = 0.0;
  for (std::size_t i = 0; i < L.g; ++i) loss += std::abs(t.y[i] - x[i]);
  loss /= static_cast<double>(L.g);
  double kl = 0.0;
  for (std::size_t j = 0; j < L.m; ++j)
    kl += 0.5 * (t.mu[j] * t.mu[j] + std::exp(t.lv[j]) - 1.0 - t.lv[j]);
  loss += omega * kl;
  if (!grad) return loss;

  std::vector<double> dd3(L.g), dg2(L.h), dd2(L.h), dg1(L.h), dd1(L.h),
      dz(L.m), dmu(L.m), dlv(L.m), dh2(L.h), buf(L.h), da2(L.h), dh1(L.h),
      da1(L.h);
  const double inv_g = 1.0 / static_cast<double>(L.g);
  for (std::size_t i = 0; i < L.g; ++i) {
    const double diff = t.y[i] - x[i];
    const double dy = diff > 0.0 ? inv_g : (diff < 0.0 ? -inv_g : 0.0);
    dd3[i] = dy * 2.0 * t.y[i] * (1.0 - t.y[i]);  // y = (1 + tanh)/2
  }
  double* g = grad->data();
  outer_acc(g + L.dec_w3, g + L.dec_b3, L.g, L.h, dd3.data(), t.g2.data());
  matvec_t(w.data() + L.dec_w3, L.g, L.h, dd3.data(), dg2.data());
  for (std::size_t i = 0; i < L.h; ++i)
    dd2[i] = dg2[i] * (1.0 - t.g2[i] * t.g2[i]);
  outer_acc(g + L.dec_w2, g + L.dec_b2, L.h, L.h, dd2.data(), t.g1.data());
  matvec_t(w.data() + L.dec_w2, L.h, L.h, dd2.data(), dg1.data());
  for (std::size_t i = 0; i < L.h; ++i)
    dd1[i] = dg1[i] * (1.0 - t.g1[i] * t.g1[i]);
  outer_acc(g + L.dec_w1, g + L.dec_b1, L.h, L.m, dd1.data(), t.z.data());
  matvec_t(w.data() + L.dec_w1, L.h, L.m, dd1.data(), dz.data());

  for (std::size_t j = 0; j < L.m; ++j) {
    dmu[j] = dz[j] + omega * t.mu[j];
    const double s = eps ? 0.5 * std::exp(0.5 * t.lv[j]) * eps[j] : 0.0;
    dlv[j] = dz[j] * s + omega * 0.5 * (std::exp(t.lv[j]) - 1.0);
  }
  outer_acc(g + L.enc_wm, g + L.enc_bm, L.m, L.h, dmu.data(), t.h2.data());
  outer_acc(g + L.enc_wl, g + L.enc_bl, L.m, L.h, dlv.data(), t.h2.data());
  matvec_t(w.data() + L.enc_wm, L.m, L.h, dmu.data(), dh2.data());
  matvec_t(w.data() + L.enc_wl, L.m, L.h, dlv.data(), buf.data());
  for (std::size_t i = 0; i < L.h; ++i) dh2[i] += buf[i];
  for (std::size_t i = 0; i < L.h; ++i)
    da2[i] = dh2[i] * (1.0 - t.h2[i] * t.h2[i]);
  outer_acc(g + L.enc_w2, g + L.enc_b2, L.h, L.h, da2.data(), t.h1.data());
  matvec_t(w.data() + L.enc_w2, L.h, L.h, da2.data(), dh1.data());
  for (std::size_t i = 0; i < L.h; ++i)
    da1[i] = dh1[i] * (1.0 - t.h1[i] * t.h1[i]);
  outer_acc(g + L.enc_w1, g + L.enc_b1, L.h, L.g, da1.data(), t.xc.data());
  return loss;
}

}  // namespace detail

inline EncodeResult encode(const CodecParams& p, const ImprintImage& x) {
  if (x.rows != p.rows || x.cols != p.cols)
    throw contract_error("encode: image grid does not match codec");
  const detail::CodecLayout L = p.layout();
  detail::CodecTrace t;
  detail::codec_forward(p.w, L, x.pix.data(), nullptr, t);
  return {std::move(t.mu), std::move(t.lv)};
}

inline ImprintImage decode(const CodecParams& p, const LatentVector& z) {
  if (z.size() != p.m)
    throw contract_error("decode: latent length does not match codec");
  const detail::CodecLayout L = p.layout();
  ImprintImage out(p.rows, p.cols);
  std::vector<double> g1(L.h), g2(L.h);
  detail::matvec(p.w.data() + L.dec_w1, L.h, L.m, z.data(),
                 p.w.data() + L.dec_b1, g1.data());
  for (double& v : g1) v = std::tanh(v);
  detail::matvec(p.w.data() + L.dec_w2, L.h, L.h, g1.data(),
                 p.w.data() + L.dec_b2, g2.data());
  for (double& v : g2) v = std::tanh(v);
  detail::matvec(p.w.data() + L.dec_w3, L.g, L.h, g2.data(),
                 p.w.data() + L.dec_b3, out.pix.data());
  for (double& v : out.pix) v = 0.5 * (1.0 + std::tanh(v));
  return out;
}

inline double kl_divergence(const LatentVector& mean,
                            const LatentVector& logvar) {
  if (mean.size() != logvar.size())
    throw contract_error("kl_divergence: mismatched vector lengths");
  double kl = 0.0;
  for (std::size_t j = 0; j < mean.size(); ++j)
    kl += 0.5 *
          (mean[j] * mean[j] + std::exp(logvar[j]) - 1.0 - logvar[j]);
  return kl;
}

// Linear KL warm-up: 0 at epoch 0, full weight from e_warm onward.
inline double kl_weight(std::size_t epoch, double e_warm, double lambda_kl) {
  if (!(e_warm >= 1.0))
    throw contract_error("kl_weight: e_warm must be >= 1");
  return std::min(1.0, static_cast<double>(epoch) / e_warm) * lambda_kl;
}

struct TrainedCodec {
  CodecParams params;
  std::vector<double> loss_history;  // mean per-sample loss per epoch
};

inline TrainedCodec train_codec(const std::vector<ImprintImage>& images,
                                const CodecConfig& cfg, Rng& rng) {
  cfg.validate();
  if (images.empty()) throw contract_error("train_codec: no images");
  for (const ImprintImage& im : images)
    if (im.rows != images[0].rows || im.cols != images[0].cols)
      throw contract_error("train_codec: images on different grids");

  TrainedCodec out;
  out.params = init_codec(images[0].rows, images[0].cols, cfg, rng);
  const detail::CodecLayout L = out.params.layout();
  AdamState adam(cfg.lr);
  std::vector<std::size_t> order(images.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::vector<double> grad(L.total);
  std::vector<double> eps(L.m);

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double omega = kl_weight(epoch, cfg.e_warm, cfg.lambda_kl);
    // The sampling noise fades out over the warm-up window. A freshly
    // initialized model emits z = N(0, I) regardless of the input, and the
    // zero state is a stationary point of the deterministic loss (every
    // decoder activation vanishes at z = 0), so early noise is what breaks
    // the symmetry; kept at unit scale it instead drowns the small code the
    // encoder is starting to form, so it decays as the KL weight ramps in.
    const double noise_amp =
        std::max(0.0, 1.0 - static_cast<double>(epoch) / cfg.e_warm);
    for (std::size_t i = order.size(); i > 1; --i)
      std::swap(order[i - 1], order[rng.uniform_int(i)]);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch);
      std::fill(grad.begin(), grad.end(), 0.0);
      for (std::size_t k = start; k < stop; ++k) {
        for (double& e : eps) e = noise_amp * rng.normal();
        const double loss = detail::codec_loss_grad(
            out.params.w, L, images[order[k]].pix.data(), eps.data(), omega,
            &grad);
        if (!std::isfinite(loss))
          throw numeric_error("train_codec: non-finite loss at epoch " +
                              std::to_string(epoch) + ", sample " +
                              std::to_string(k));
        epoch_loss += loss;
      }
      const double inv = 1.0 / static_cast<double>(stop - start);
      for (double& v : grad) v *= inv;
      adam.step(out.params.w, grad, "codec");
    }
    out.loss_history.push_back(epoch_loss /
                               static_cast<double>(order.size()));
  }
  return out;
}

// Mean per-pixel L1 of deterministic reconstructions over a set of images.
inline double mean_l1_reconstruction(const CodecParams& p,
                                     const std::vector<ImprintImage>& images) {
  if (images.empty()) throw contract_error("no images to evaluate");
  double total = 0.0;
  for (const ImprintImage& x : images) {
    const ImprintImage y = decode(p, encode(p, x).mean);
    double l1 = 0.0;
    for (std::size_t k = 0; k < x.pix.size(); ++k)
      l1 += std::abs(x.pix[k] - y.pix[k]);
    total += l1 / static_cast<double>(x.pix.size());
  }
  return total / static_cast<double>(images.size());
}

// L1 of the best constant predictor: the per-pixel mean image.
inline double mean_image_baseline_l1(const std::vector<ImprintImage>& images) {
  if (images.empty()) throw contract_error("no images to evaluate");
  ImprintImage mean(images[0].rows, images[0].cols);
  for (const ImprintImage& x : images) {
    x.require_same_shape(mean, "baseline");
    for (std::size_t k = 0; k < x.pix.size(); ++k) mean.pix[k] += x.pix[k];
  }
  for (double& v : mean.pix) v /= static_cast<double>(images.size());
  double total = 0.0;
  for (const ImprintImage& x : images) {
    double l1 = 0.0;
    for (std::size_t k = 0; k < x.pix.size(); ++k)
      l1 += std::abs(x.pix[k] - mean.pix[k]);
    total += l1 / static_cast<double>(x.pix.size());
  }
  return total / static_cast<double>(images.size());
}

inline void save_codec(const CodecParams& p, const std::string& path) {
  p.validate();
  phyt::Writer w(path, 0);
  w.write_record({kCodecSection, static_cast<double>(p.rows),
                  static_cast<double>(p.cols), static_cast<double>(p.hidden),
                  static_cast<double>(p.m)});
  w.write_record(p.w);
  w.finish();
}

inline CodecParams load_codec(const std::string& path) {
  phyt::Reader r(path);
  if (r.dims() != 0)
    throw artifact_error("not a parameter file (fixed-dims container): " +
                         path);
  std::vector<double> header;
  if (!r.next_record(header) || header.size() != 5)
    throw artifact_error("parameter file missing section header: " + path);
  if (header[0] != kCodecSection)
    throw artifact_error("parameter file holds a different section: " + path);
  CodecParams p;
  p.rows = static_cast<std::size_t>(header[1]);
  p.cols = static_cast<std::size_t>(header[2]);
  p.hidden = static_cast<std::size_t>(header[3]);
  p.m = static_cast<std::size_t>(header[4]);
  if (!r.next_record(p.w))
    throw artifact_error("parameter file missing weights: " + path);
  p.validate();
  return p;
}

}  // namespace phytac
