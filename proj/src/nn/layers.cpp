#include "pedflow/nn/layers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "pedflow/error.hpp"
#include "pedflow/kernels.hpp"

namespace pedflow::nn {

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

void LstmStep::resize(int input, int hidden) {
  const auto h = static_cast<std::size_t>(hidden);
  xh.resize(static_cast<std::size_t>(input) + h);
  gates.resize(4 * h);
  c_prev.resize(h);
  c.resize(h);
  tanh_c.resize(h);
  this->h.resize(h);
}

void lstm_forward(const LstmView& cell, std::span<const double> x, std::span<const double> h_prev,
                  std::span<const double> c_prev, LstmStep& out) {
  const auto in = static_cast<std::size_t>(cell.input);
  const auto hd = static_cast<std::size_t>(cell.hidden);
  out.resize(cell.input, cell.hidden);
  std::copy(x.begin(), x.end(), out.xh.begin());
  std::copy(h_prev.begin(), h_prev.end(), out.xh.begin() + static_cast<std::ptrdiff_t>(in));
  std::copy(c_prev.begin(), c_prev.end(), out.c_prev.begin());
  double* pre = out.gates.data();
  std::copy(cell.b, cell.b + 4 * hd, pre);
  kernels::gemv(cell.w, 4 * hd, cell.cols(), out.xh.data(), pre);
  for (std::size_t k = 0; k < hd; ++k) {
    const double i = sigmoid(pre[k]);
    const double f = sigmoid(pre[hd + k]);
    const double g = std::tanh(pre[2 * hd + k]);
    const double o = sigmoid(pre[3 * hd + k]);
    pre[k] = i;
    pre[hd + k] = f;
    pre[2 * hd + k] = g;
    pre[3 * hd + k] = o;
    out.c[k] = f * c_prev[k] + i * g;
    out.tanh_c[k] = std::tanh(out.c[k]);
    out.h[k] = o * out.tanh_c[k];
  }
}

void lstm_backward(const LstmView& cell, const LstmStep& step, std::span<const double> dh,
                   std::span<const double> dc, double* dw, double* db, std::span<double> dx,
                   std::span<double> dh_prev, std::span<double> dc_prev, std::vector<double>& scratch) {
  const auto in = static_cast<std::size_t>(cell.input);
  const auto hd = static_cast<std::size_t>(cell.hidden);
  scratch.assign(4 * hd + in + hd, 0.0);
  double* dpre = scratch.data();
  double* dxh = scratch.data() + 4 * hd;
  const double* gt = step.gates.data();
  for (std::size_t k = 0; k < hd; ++k) {
    const double i = gt[k], f = gt[hd + k], g = gt[2 * hd + k], o = gt[3 * hd + k];
    const double tc = step.tanh_c[k];
    const double dck = dc[k] + dh[k] * o * (1.0 - tc * tc);
    dpre[k] = dck * g * i * (1.0 - i);
    dpre[hd + k] = dck * step.c_prev[k] * f * (1.0 - f);
    dpre[2 * hd + k] = dck * i * (1.0 - g * g);
    dpre[3 * hd + k] = dh[k] * tc * o * (1.0 - o);
    dc_prev[k] = dck * f;
  }
  kernels::ger(dw, 4 * hd, cell.cols(), dpre, step.xh.data());
  for (std::size_t k = 0; k < 4 * hd; ++k) db[k] += dpre[k];
  kernels::gemv_t(cell.w, 4 * hd, cell.cols(), dpre, dxh);
  if (!dx.empty()) std::copy(dxh, dxh + in, dx.begin());
  std::copy(dxh + in, dxh + in + hd, dh_prev.begin());
}

std::pair<std::vector<double>, std::vector<double>> recurrent_cell(const LstmView& cell, std::span<const double> x,
                                                                   std::span<const double> h,
                                                                   std::span<const double> c) {
  if (x.size() != static_cast<std::size_t>(cell.input) || h.size() != static_cast<std::size_t>(cell.hidden) ||
      c.size() != static_cast<std::size_t>(cell.hidden))
    throw Error(ErrorCode::ShapeMismatch, "recurrent cell input sizes do not match its weights");
  LstmStep step;
  lstm_forward(cell, x, h, c, step);
  return {step.h, step.c};
}

void attention_forward(std::span<const double> query, std::span<const double> keys, std::span<const double> values,
                       int n, std::span<const std::uint8_t> mask, std::span<double> weights,
                       std::span<double> out) {
  const std::size_t d = query.size();
  const std::size_t dv = out.size();
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  double max_score = -std::numeric_limits<double>::infinity();
  for (int j = 0; j < n; ++j) {
    if (!mask.empty() && mask[static_cast<std::size_t>(j)] == 0) continue;
    const double s = kernels::dot(query, keys.subspan(static_cast<std::size_t>(j) * d, d)) * scale;
    weights[static_cast<std::size_t>(j)] = s;
    max_score = std::max(max_score, s);
  }
  double total = 0.0;
  for (int j = 0; j < n; ++j) {
    auto& w = weights[static_cast<std::size_t>(j)];
    if (!mask.empty() && mask[static_cast<std::size_t>(j)] == 0) {
      w = 0.0;
      continue;
    }
    w = std::exp(w - max_score);
    total += w;
  }
  std::fill(out.begin(), out.end(), 0.0);
  if (total == 0.0) return;  // every position masked
  for (int j = 0; j < n; ++j) {
    auto& w = weights[static_cast<std::size_t>(j)];
    w /= total;
    if (w != 0.0) kernels::axpy(w, values.subspan(static_cast<std::size_t>(j) * dv, dv), out);
  }
}

void attention_backward(std::span<const double> query, std::span<const double> keys, std::span<const double> values,
                        int n, std::span<const double> weights, std::span<const double> dout,
                        std::span<double> dquery, std::span<double> dkeys, std::span<double> dvalues) {
  const std::size_t d = query.size();
  const std::size_t dv = dout.size();
  const double scale = 1.0 / std::sqrt(static_cast<double>(d));
  std::vector<double> dw(static_cast<std::size_t>(n));
  double weighted = 0.0;
  for (int j = 0; j < n; ++j) {
    const auto ju = static_cast<std::size_t>(j);
    dw[ju] = kernels::dot(dout, values.subspan(ju * dv, dv));
    weighted += weights[ju] * dw[ju];
    kernels::axpy(weights[ju], dout, dvalues.subspan(ju * dv, dv));
  }
  for (int j = 0; j < n; ++j) {
    const auto ju = static_cast<std::size_t>(j);
    const double ds = weights[ju] * (dw[ju] - weighted) * scale;
    if (ds == 0.0) continue;
    kernels::axpy(ds, keys.subspan(ju * d, d), dquery);
    kernels::axpy(ds, query, dkeys.subspan(ju * d, d));
  }
}

AttentionResult attention(std::span<const double> query, const std::vector<std::vector<double>>& keys,
                          const std::vector<std::vector<double>>& values, std::span<const std::uint8_t> mask) {
  if (keys.empty() || keys.size() != values.size())
    throw Error(ErrorCode::ShapeMismatch, "attention needs as many values as keys, and at least one");
  if (!mask.empty() && mask.size() != keys.size())
    throw Error(ErrorCode::ShapeMismatch, "attention mask length differs from key count");
  const std::size_t dv = values.front().size();
  std::vector<double> k_flat, v_flat;
  for (std::size_t j = 0; j < keys.size(); ++j) {
    if (keys[j].size() != query.size() || values[j].size() != dv)
      throw Error(ErrorCode::ShapeMismatch, "attention key/value widths are inconsistent");
    k_flat.insert(k_flat.end(), keys[j].begin(), keys[j].end());
    v_flat.insert(v_flat.end(), values[j].begin(), values[j].end());
  }
  AttentionResult r{std::vector<double>(dv), std::vector<double>(keys.size())};
  attention_forward(query, k_flat, v_flat, static_cast<int>(keys.size()), mask, r.weights, r.output);
  return r;
}

}  // namespace pedflow::nn
