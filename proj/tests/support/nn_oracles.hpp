#pragma once

// Finite-difference oracle and random fixtures for the network tests.

#include <cmath>
#include <string>
#include <vector>

#include "pedflow/nn/model.hpp"
#include "pedflow/random.hpp"

namespace pedflow::testing {

inline nn::ModelConfig tiny_config() {
  nn::ModelConfig c;
  c.nodes = 3;
  c.edges = 4;
  c.window = 3;
  c.occupancy_cells = 4;
  c.bird_cells = 9;
  c.max_history = 4;
  c.local_embed = 3;
  c.encoder_hidden = 8;
  c.decoder_hidden = 8;
  c.attention_dim = 8;
  c.decoder_steps = 4;
  return c;
}

inline features::Sample random_sample(const nn::ModelConfig& c, Rng& rng) {
  features::Sample s;
  auto& w = s.local;
  w.steps = c.window;
  w.nodes = c.nodes;
  w.occupancy_cells = c.occupancy_cells;
  w.bird_cells = c.bird_cells;
  for (int t = 0; t < c.window; ++t) {
    for (int k = 0; k < 2 * c.nodes; ++k) w.rel_pos.push_back(rng.uniform(-12.0, 12.0));
    for (int k = 0; k < c.occupancy_cells; ++k) w.occupancy.push_back(static_cast<std::uint16_t>(rng.index(4)));
    for (int k = 0; k < c.bird_cells; ++k) w.bird.push_back(static_cast<std::uint8_t>(rng.index(256)));
    w.edge.push_back(static_cast<std::int16_t>(rng.index(static_cast<std::size_t>(c.edges))));
    w.signal.push_back(rng.uniform());
    w.valid.push_back(t == 0 ? 0 : 1);
  }
  s.global.goal = static_cast<int>(rng.index(static_cast<std::size_t>(c.nodes)));
  const std::size_t len = 1 + rng.index(static_cast<std::size_t>(c.max_history));
  for (std::size_t i = 0; i < len; ++i) s.global.edge_history.push_back(static_cast<int>(rng.index(static_cast<std::size_t>(c.edges))));
  s.target_delta = {rng.uniform(-0.3, 0.3), rng.uniform(-0.3, 0.3)};
  s.target_edge = static_cast<int>(rng.index(static_cast<std::size_t>(c.edges)));
  return s;
}

/// Every parameter uniform in [-scale, scale]: a generic point away from the
/// near-linear regime of a fresh initialization.
inline nn::ModelParams random_params(const nn::ModelConfig& c, Rng& rng, double scale = 1.0) {
  nn::ModelParams p(c);
  for (double& v : p.data()) v = rng.uniform(-scale, scale);
  return p;
}

struct TensorCheck {
  std::string name;
  double rel_error = 0.0;
};

/// Per-tensor relative error |a - n| / max(|a|, |n|, floor) between the
/// analytic gradient and central differences with step eps.
inline std::vector<TensorCheck> gradient_check(const nn::ModelParams& params, const features::Sample& sample,
                                               const nn::LossWeights& w, double eps = 1e-6, double floor = 1e-7) {
  nn::ForwardCache cache;
  std::vector<double> analytic(params.size(), 0.0);
  nn::loss_and_gradient(params, sample, w, analytic, cache);
  nn::ModelParams probe = params;
  std::vector<TensorCheck> out;
  for (const auto& t : params.tensors()) {
    double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
    for (std::size_t k = 0; k < t.size(); ++k) {
      const std::size_t i = t.offset + k;
      const double orig = probe.data()[i];
      probe.data()[i] = orig + eps;
      const double lp = nn::loss(nn::forward(probe, sample), sample.target_delta, sample.target_edge, w);
      probe.data()[i] = orig - eps;
      const double lm = nn::loss(nn::forward(probe, sample), sample.target_delta, sample.target_edge, w);
      probe.data()[i] = orig;
      const double numeric = (lp - lm) / (2.0 * eps);
      diff2 += (analytic[i] - numeric) * (analytic[i] - numeric);
      a2 += analytic[i] * analytic[i];
      n2 += numeric * numeric;
    }
    out.push_back({t.name, std::sqrt(diff2) / std::max({std::sqrt(a2), std::sqrt(n2), floor})});
  }
  return out;
}

}  // namespace pedflow::testing
