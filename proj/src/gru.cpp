#include "macforge/gru.hpp"

#include <cmath>
#include <vector>

#include <Eigen/Dense>

#include "macforge/error.hpp"

namespace macforge::model {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using CMat = Eigen::Map<const RowMat>;
using MMat = Eigen::Map<RowMat>;
using CVec = Eigen::Map<const Eigen::VectorXd>;
using MVec = Eigen::Map<Eigen::VectorXd>;

std::size_t layer_params(int in, int h) {
  return static_cast<std::size_t>(3 * h) * (in + h) + static_cast<std::size_t>(6 * h);
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

GruStack::GruStack(GruShape shape, std::size_t offset) : shape_(shape), offset_(offset) {
  if (shape.vocab < 1 || shape.embed < 1 || shape.hidden < 1 || shape.layers < 1) {
    throw ConfigError("GRU dimensions must be >= 1");
  }
  param_count_ = static_cast<std::size_t>(shape.vocab) * shape.embed;
  cache_size_ = 0;
  for (int l = 0; l < shape.layers; ++l) {
    param_count_ += layer_params(layer_input(l), shape.hidden);
    cache_size_ += static_cast<std::size_t>(layer_input(l)) + 5 * static_cast<std::size_t>(shape.hidden);
  }
}

std::size_t GruStack::state_size() const {
  return static_cast<std::size_t>(shape_.layers) * shape_.hidden;
}

std::size_t GruStack::layer_offset(int l) const {
  std::size_t off = offset_ + static_cast<std::size_t>(shape_.vocab) * shape_.embed;
  for (int k = 0; k < l; ++k) off += layer_params(layer_input(k), shape_.hidden);
  return off;
}

std::size_t GruStack::layer_cache_offset(int l) const {
  std::size_t off = 0;
  for (int k = 0; k < l; ++k) off += static_cast<std::size_t>(layer_input(k)) + 5 * shape_.hidden;
  return off;
}

const double* GruStack::top(const double* state) const {
  return state + static_cast<std::size_t>(shape_.layers - 1) * shape_.hidden;
}

void GruStack::init(std::span<double> params, Rng& rng) const {
  auto uniform = [&](double a) { return (2.0 * uniform01(rng) - 1.0) * a; };
  double* e = params.data() + embed_offset();
  for (std::size_t i = 0; i < static_cast<std::size_t>(shape_.vocab) * shape_.embed; ++i) {
    e[i] = uniform(1.0);
  }
  const int h = shape_.hidden;
  const double k = 1.0 / std::sqrt(static_cast<double>(h));
  for (int l = 0; l < shape_.layers; ++l) {
    double* p = params.data() + layer_offset(l);
    const std::size_t weights = static_cast<std::size_t>(3 * h) * (layer_input(l) + h);
    for (std::size_t i = 0; i < weights; ++i) p[i] = uniform(k);
    for (std::size_t i = 0; i < static_cast<std::size_t>(6 * h); ++i) p[weights + i] = 0.0;
  }
}

void GruStack::step(std::span<const double> params, int token, const double* h_prev,
                    double* h_next, double* cache) const {
  if (token < 0 || token >= shape_.vocab) throw EncodingError("token id outside model vocabulary");
  const int h = shape_.hidden;
  // Scratch reused across calls on this thread.
  thread_local std::vector<double> scratch;
  scratch.resize(static_cast<std::size_t>(6 * h) + 5 * static_cast<std::size_t>(h));
  double* gx = scratch.data();
  double* gh = gx + 3 * h;
  double* z = gh + 3 * h;
  double* r = z + h;
  double* n = r + h;

  const double* x = params.data() + embed_offset() + static_cast<std::size_t>(token) * shape_.embed;
  for (int l = 0; l < shape_.layers; ++l) {
    const int in = layer_input(l);
    const double* p = params.data() + layer_offset(l);
    CMat wx(p, 3 * h, in);
    CMat wh(p + static_cast<std::size_t>(3 * h) * in, 3 * h, h);
    const double* bx = p + static_cast<std::size_t>(3 * h) * (in + h);
    const double* bh = bx + 3 * h;
    const double* hp = h_prev + static_cast<std::size_t>(l) * h;
    double* hn = h_next + static_cast<std::size_t>(l) * h;

    MVec(gx, 3 * h).noalias() = wx * CVec(x, in) + CVec(bx, 3 * h);
    MVec(gh, 3 * h).noalias() = wh * CVec(hp, h) + CVec(bh, 3 * h);
    for (int i = 0; i < h; ++i) {
      z[i] = sigmoid(gx[i] + gh[i]);
      r[i] = sigmoid(gx[h + i] + gh[h + i]);
      n[i] = std::tanh(gx[2 * h + i] + r[i] * gh[2 * h + i]);
    }
    if (cache != nullptr) {
      double* c = cache + layer_cache_offset(l);
      std::copy(x, x + in, c);
      c += in;
      std::copy(hp, hp + h, c);
      std::copy(z, z + h, c + h);
      std::copy(r, r + h, c + 2 * h);
      std::copy(n, n + h, c + 3 * h);
      std::copy(gh + 2 * h, gh + 3 * h, c + 4 * h);
    }
    for (int i = 0; i < h; ++i) hn[i] = (1.0 - z[i]) * n[i] + z[i] * hp[i];
    x = hn;
  }
}

void GruStack::step_backward(std::span<const double> params, std::span<double> grad, int token,
                             const double* cache, double* dh) const {
  const int h = shape_.hidden;
  thread_local std::vector<double> scratch;
  scratch.resize(static_cast<std::size_t>(6 * h) + static_cast<std::size_t>(shape_.hidden + shape_.embed));
  double* dgx = scratch.data();
  double* dgh = dgx + 3 * h;
  double* dx = dgh + 3 * h;

  for (int l = shape_.layers - 1; l >= 0; --l) {
    const int in = layer_input(l);
    const double* p = params.data() + layer_offset(l);
    double* g = grad.data() + layer_offset(l);
    const double* c = cache + layer_cache_offset(l);
    const double* x = c;
    const double* hp = c + in;
    const double* z = hp + h;
    const double* r = z + h;
    const double* n = r + h;
    const double* ghn = n + h;
    double* dhl = dh + static_cast<std::size_t>(l) * h;

    for (int i = 0; i < h; ++i) {
      const double dout = dhl[i];
      const double dn = dout * (1.0 - z[i]);
      const double dz = dout * (hp[i] - n[i]);
      const double dan = dn * (1.0 - n[i] * n[i]);
      const double dr = dan * ghn[i];
      const double daz = dz * z[i] * (1.0 - z[i]);
      const double dar = dr * r[i] * (1.0 - r[i]);
      dgx[i] = daz;
      dgx[h + i] = dar;
      dgx[2 * h + i] = dan;
      dgh[i] = daz;
      dgh[h + i] = dar;
      dgh[2 * h + i] = dan * r[i];
      dhl[i] = dout * z[i];  // direct path to h_prev
    }

    CMat wx(p, 3 * h, in);
    CMat wh(p + static_cast<std::size_t>(3 * h) * in, 3 * h, h);
    MMat gwx(g, 3 * h, in);
    MMat gwh(g + static_cast<std::size_t>(3 * h) * in, 3 * h, h);
    double* gbx = g + static_cast<std::size_t>(3 * h) * (in + h);
    double* gbh = gbx + 3 * h;

    CVec vdgx(dgx, 3 * h);
    CVec vdgh(dgh, 3 * h);
    gwx.noalias() += vdgx * CVec(x, in).transpose();
    gwh.noalias() += vdgh * CVec(hp, h).transpose();
    MVec(gbx, 3 * h) += vdgx;
    MVec(gbh, 3 * h) += vdgh;
    MVec(dhl, h).noalias() += wh.transpose() * vdgh;
    MVec(dx, in).noalias() = wx.transpose() * vdgx;

    if (l > 0) {
      MVec(dh + static_cast<std::size_t>(l - 1) * h, h) += MVec(dx, in);
    } else {
      double* ge = grad.data() + embed_offset() + static_cast<std::size_t>(token) * shape_.embed;
      MVec(ge, in) += MVec(dx, in);
    }
  }
}

}  // namespace macforge::model
