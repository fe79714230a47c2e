#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

namespace pedflow::nn {

double sigmoid(double x);

/// LSTM weights: w is 4H x (input + hidden) row-major, acting on [x; h];
/// gate blocks in order input, forget, candidate, output.
struct LstmView {
  const double* w = nullptr;
  const double* b = nullptr;
  int input = 0;
  int hidden = 0;

  std::size_t cols() const { return static_cast<std::size_t>(input + hidden); }
};

/// Values kept from one forward step for the backward pass.
struct LstmStep {
  std::vector<double> xh;     // [x; h_prev]
  std::vector<double> gates;  // activated i, f, g, o
  std::vector<double> c_prev;
  std::vector<double> c;
  std::vector<double> tanh_c;
  std::vector<double> h;

  void resize(int input, int hidden);
};

void lstm_forward(const LstmView& cell, std::span<const double> x, std::span<const double> h_prev,
                  std::span<const double> c_prev, LstmStep& out);

/// Accumulates weight gradients into dw/db and writes input and state
/// gradients. dx may be empty when the input gradient is not needed.
void lstm_backward(const LstmView& cell, const LstmStep& step, std::span<const double> dh,
                   std::span<const double> dc, double* dw, double* db, std::span<double> dx,
                   std::span<double> dh_prev, std::span<double> dc_prev, std::vector<double>& scratch);

/// Single update of the recurrent cell, returning (h', c').
std::pair<std::vector<double>, std::vector<double>> recurrent_cell(const LstmView& cell, std::span<const double> x,
                                                                   std::span<const double> h,
                                                                   std::span<const double> c);

/// Scaled dot-product attention over n keys of width d with values of width dv
/// (keys and values row-major). Positions with mask[j] == 0 get exactly zero
/// weight; an empty mask admits every position.
void attention_forward(std::span<const double> query, std::span<const double> keys, std::span<const double> values,
                       int n, std::span<const std::uint8_t> mask, std::span<double> weights,
                       std::span<double> out);

/// Gradients of the attention output w.r.t. query, keys and values
/// (accumulated into dquery, dkeys, dvalues).
void attention_backward(std::span<const double> query, std::span<const double> keys, std::span<const double> values,
                        int n, std::span<const double> weights, std::span<const double> dout,
                        std::span<double> dquery, std::span<double> dkeys, std::span<double> dvalues);

struct AttentionResult {
  std::vector<double> output;
  std::vector<double> weights;
};

AttentionResult attention(std::span<const double> query, const std::vector<std::vector<double>>& keys,
                          const std::vector<std::vector<double>>& values, std::span<const std::uint8_t> mask = {});

}  // namespace pedflow::nn
