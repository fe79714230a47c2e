#include "pedflow/nn/model.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

#include "pedflow/error.hpp"
#include "pedflow/kernels.hpp"
#include "pedflow/scenario.hpp"

namespace pedflow::nn {

namespace {

constexpr std::array<const char*, kLocalStreams> kStreamNames = {"pos", "occupancy", "bird", "edge", "signal"};

void require_positive(int v, const char* name) {
  if (v <= 0) throw Error(ErrorCode::InvalidConfig, std::string("model config: ") + name + " must be positive");
}

int stream_input(const ModelConfig& c, int s) {
  switch (s) {
    case 0: return c.pos_input();
    case 1: return c.occupancy_cells;
    case 2: return c.bird_cells;
    case 3: return c.edges;
    default: return 1;
  }
}

// Dense y = b + W x.
void affine(const double* w, const double* b, std::size_t rows, std::size_t cols, const double* x, double* y) {
  std::copy(b, b + rows, y);
  kernels::gemv(w, rows, cols, x, y);
}

LstmView lstm_view(const ModelParams& p, std::size_t w_off, std::size_t b_off, int input, int hidden) {
  return {p.data().data() + w_off, p.data().data() + b_off, input, hidden};
}

// Fills stream inputs from the sample's window.
void build_inputs(const ModelConfig& c, const features::Sample& s, ForwardCache& cache) {
  const auto n = static_cast<std::size_t>(c.window);
  const features::LocalWindow& w = s.local;
  for (int st = 0; st < kLocalStreams; ++st) {
    auto& stream = cache.local[st];
    stream.input = stream_input(c, st);
    stream.x.assign(n * static_cast<std::size_t>(stream.input), 0.0);
  }
  const auto nodes = static_cast<std::size_t>(c.nodes);
  for (std::size_t t = 0; t < n; ++t) {
    double* xp = cache.local[0].x.data() + t * static_cast<std::size_t>(c.pos_input());
    const double* rel = w.rel_pos.data() + t * nodes * 2;
    for (std::size_t k = 0; k < nodes; ++k) {
      xp[2 * k] = rel[2 * k] / c.pos_scale;
      xp[2 * k + 1] = rel[2 * k + 1] / c.pos_scale;
      xp[2 * nodes + k] = std::hypot(rel[2 * k], rel[2 * k + 1]) / c.pos_scale;
    }
    if (t > 0) {
      // p[t] - p[t-1] from the first node's relative vector.
      const double* prev = rel - nodes * 2;
      xp[3 * nodes] = (prev[0] - rel[0]) / c.disp_scale;
      xp[3 * nodes + 1] = (prev[1] - rel[1]) / c.disp_scale;
    }
    xp[3 * nodes + 2] = w.valid[t];

    double* xo = cache.local[1].x.data() + t * static_cast<std::size_t>(c.occupancy_cells);
    const std::uint16_t* occ = w.occupancy.data() + t * static_cast<std::size_t>(c.occupancy_cells);
    for (int k = 0; k < c.occupancy_cells; ++k) xo[k] = occ[k] / c.occupancy_scale;

    double* xb = cache.local[2].x.data() + t * static_cast<std::size_t>(c.bird_cells);
    const std::uint8_t* bird = w.bird.data() + t * static_cast<std::size_t>(c.bird_cells);
    for (int k = 0; k < c.bird_cells; ++k) xb[k] = bird[k] / 255.0;

    if (w.edge[t] >= 0) cache.local[3].x[t * static_cast<std::size_t>(c.edges) + static_cast<std::size_t>(w.edge[t])] = 1.0;
    cache.local[4].x[t] = w.signal[t];
  }

  auto& g = cache.global;
  g.input = c.global_input();
  const std::size_t steps = std::max<std::size_t>(1, s.global.edge_history.size());
  g.x.assign(steps * static_cast<std::size_t>(g.input), 0.0);
  for (std::size_t t = 0; t < steps; ++t) {
    double* xg = g.x.data() + t * static_cast<std::size_t>(g.input);
    if (t < s.global.edge_history.size()) xg[s.global.edge_history[t]] = 1.0;
    xg[c.edges + s.global.goal] = 1.0;
  }
}

// Embedding + LSTM over one stream; returns the final hidden state.
void run_stream(const ModelParams& p, ForwardCache::Stream& stream, std::size_t ew, std::size_t eb, std::size_t lw,
                std::size_t lb, std::size_t steps, bool embedded = false) {
  const ModelConfig& c = p.config();
  const auto e = static_cast<std::size_t>(c.local_embed);
  const auto h = static_cast<std::size_t>(c.encoder_hidden);
  const auto in = static_cast<std::size_t>(stream.input);
  stream.emb.resize(steps * e);
  stream.steps.resize(steps);
  const double* base = p.data().data();
  const LstmView cell = lstm_view(p, lw, lb, c.local_embed, c.encoder_hidden);
  const std::vector<double> zero(h, 0.0);
  for (std::size_t t = 0; t < steps; ++t) {
    double* emb = stream.emb.data() + t * e;
    if (!embedded) affine(base + ew, base + eb, e, in, stream.x.data() + t * in, emb);
    const std::span<const double> hp = t == 0 ? std::span<const double>(zero) : stream.steps[t - 1].h;
    const std::span<const double> cp = t == 0 ? std::span<const double>(zero) : stream.steps[t - 1].c;
    lstm_forward(cell, {emb, e}, hp, cp, stream.steps[t]);
  }
}

void back_stream(const ModelParams& p, const ForwardCache::Stream& stream, std::size_t ew, std::size_t eb,
                 std::size_t lw, std::size_t lb, std::span<const double> dh_last, std::span<double> grad,
                 std::vector<double>& scratch) {
  const ModelConfig& c = p.config();
  const auto e = static_cast<std::size_t>(c.local_embed);
  const auto h = static_cast<std::size_t>(c.encoder_hidden);
  const auto in = static_cast<std::size_t>(stream.input);
  const LstmView cell = lstm_view(p, lw, lb, c.local_embed, c.encoder_hidden);
  std::vector<double> dh(dh_last.begin(), dh_last.end()), dc(h, 0.0), dh_prev(h), dc_prev(h), demb(e);
  double* g = grad.data();
  for (std::size_t t = stream.steps.size(); t-- > 0;) {
    lstm_backward(cell, stream.steps[t], dh, dc, g + lw, g + lb, demb, dh_prev, dc_prev, scratch);
    kernels::ger(g + ew, e, in, demb.data(), stream.x.data() + t * in);
    for (std::size_t k = 0; k < e; ++k) g[eb + k] += demb[k];
    std::swap(dh, dh_prev);
    std::swap(dc, dc_prev);
  }
}

void embed_bird_memo(const ModelParams& p, const features::Sample& sample, ForwardCache& cache) {
  constexpr std::size_t kMaxEntries = 1 << 14;
  const ModelConfig& c = p.config();
  const Layout& L = p.layout();
  const auto e = static_cast<std::size_t>(c.local_embed);
  const auto cells = static_cast<std::size_t>(c.bird_cells);
  auto& stream = cache.local[2];
  stream.emb.resize(static_cast<std::size_t>(c.window) * e);
  const double* base = p.data().data();
  for (std::size_t t = 0; t < static_cast<std::size_t>(c.window); ++t) {
    const std::uint8_t* bird = sample.local.bird.data() + t * cells;
    const std::uint64_t key = fnv1a64(std::string_view(reinterpret_cast<const char*>(bird), cells));
    auto it = cache.bird_memo.find(key);
    if (it == cache.bird_memo.end() || !std::equal(bird, bird + cells, it->second.key.begin())) {
      if (cache.bird_memo.size() >= kMaxEntries) cache.bird_memo.clear();
      ForwardCache::BirdEntry entry{{bird, bird + cells}, std::vector<double>(e)};
      affine(base + L.embed_w[2], base + L.embed_b[2], e, cells, stream.x.data() + t * cells, entry.emb.data());
      it = cache.bird_memo.insert_or_assign(key, std::move(entry)).first;
    }
    std::copy(it->second.emb.begin(), it->second.emb.end(), stream.emb.begin() + static_cast<std::ptrdiff_t>(t * e));
  }
}

}  // namespace

void ModelConfig::validate() const {
  require_positive(nodes, "nodes");
  require_positive(edges, "edges");
  require_positive(window, "window");
  require_positive(occupancy_cells, "occupancy_cells");
  require_positive(bird_cells, "bird_cells");
  require_positive(max_history, "max_history");
  require_positive(local_embed, "local_embed");
  require_positive(encoder_hidden, "encoder_hidden");
  require_positive(decoder_hidden, "decoder_hidden");
  require_positive(attention_dim, "attention_dim");
  require_positive(decoder_steps, "decoder_steps");
  if (!(pos_scale > 0.0) || !(disp_scale > 0.0) || !(occupancy_scale > 0.0))
    throw Error(ErrorCode::InvalidConfig, "model config: scales must be positive");
}

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = nlohmann::json{{"nodes", c.nodes},
                     {"edges", c.edges},
                     {"window", c.window},
                     {"occupancy_cells", c.occupancy_cells},
                     {"bird_cells", c.bird_cells},
                     {"max_history", c.max_history},
                     {"local_embed", c.local_embed},
                     {"encoder_hidden", c.encoder_hidden},
                     {"decoder_hidden", c.decoder_hidden},
                     {"attention_dim", c.attention_dim},
                     {"decoder_steps", c.decoder_steps},
                     {"share_local", c.share_local},
                     {"pos_scale", c.pos_scale},
                     {"disp_scale", c.disp_scale},
                     {"occupancy_scale", c.occupancy_scale}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  ModelConfig d;
  c.nodes = j.value("nodes", d.nodes);
  c.edges = j.value("edges", d.edges);
  c.window = j.value("window", d.window);
  c.occupancy_cells = j.value("occupancy_cells", d.occupancy_cells);
  c.bird_cells = j.value("bird_cells", d.bird_cells);
  c.max_history = j.value("max_history", d.max_history);
  c.local_embed = j.value("local_embed", d.local_embed);
  c.encoder_hidden = j.value("encoder_hidden", d.encoder_hidden);
  c.decoder_hidden = j.value("decoder_hidden", d.decoder_hidden);
  c.attention_dim = j.value("attention_dim", d.attention_dim);
  c.decoder_steps = j.value("decoder_steps", d.decoder_steps);
  c.share_local = j.value("share_local", d.share_local);
  c.pos_scale = j.value("pos_scale", d.pos_scale);
  c.disp_scale = j.value("disp_scale", d.disp_scale);
  c.occupancy_scale = j.value("occupancy_scale", d.occupancy_scale);
}

ModelConfig model_config_for(const features::FeatureConfig& fc, int nodes, int edges) {
  ModelConfig c;
  c.nodes = nodes;
  c.edges = edges;
  c.window = fc.window;
  c.occupancy_cells = fc.occupancy_cells();
  c.bird_cells = fc.bird_cells();
  c.max_history = fc.max_history;
  c.occupancy_scale = fc.rings;
  return c;
}

ModelParams::ModelParams(const ModelConfig& config) : config_(config) {
  config.validate();
  std::size_t offset = 0;
  auto add = [&](std::string name, int rows, int cols) {
    tensors_.push_back({std::move(name), rows, cols, offset});
    offset += tensors_.back().size();
    return tensors_.back().offset;
  };
  const int e = config.local_embed, h = config.encoder_hidden, d = config.decoder_hidden, a = config.attention_dim;
  for (int s = 0; s < kLocalStreams; ++s) {
    const std::string n = kStreamNames[static_cast<std::size_t>(s)];
    layout_.embed_w[s] = add("embed." + n + ".weight", e, stream_input(config, s));
    layout_.embed_b[s] = add("embed." + n + ".bias", e, 1);
  }
  for (int s = 0; s < kLocalStreams; ++s) {
    if (config.share_local && s > 0) {
      layout_.lstm_w[s] = layout_.lstm_w[0];
      layout_.lstm_b[s] = layout_.lstm_b[0];
      continue;
    }
    const std::string n = config.share_local ? "local" : kStreamNames[static_cast<std::size_t>(s)];
    layout_.lstm_w[s] = add("lstm." + n + ".weight", 4 * h, e + h);
    layout_.lstm_b[s] = add("lstm." + n + ".bias", 4 * h, 1);
  }
  layout_.global_embed_w = add("global.embed.weight", e, config.global_input());
  layout_.global_embed_b = add("global.embed.bias", e, 1);
  layout_.global_lstm_w = add("global.lstm.weight", 4 * h, e + h);
  layout_.global_lstm_b = add("global.lstm.bias", 4 * h, 1);
  layout_.fuse_w = add("fusion.weight", d, config.fusion_input());
  layout_.fuse_b = add("fusion.bias", d, 1);
  layout_.dec_w = add("decoder.lstm.weight", 4 * d, d + d);
  layout_.dec_b = add("decoder.lstm.bias", 4 * d, 1);
  layout_.att_q = add("attention.query", a, h);
  layout_.att_k = add("attention.key", a, d);
  layout_.att_v = add("attention.value", a, d);
  layout_.head_p_w = add("head.delta.weight", 2, config.head_input());
  layout_.head_p_b = add("head.delta.bias", 2, 1);
  layout_.head_e_w = add("head.edge.weight", config.edges, config.head_input());
  layout_.head_e_b = add("head.edge.bias", config.edges, 1);
  layout_.total = offset;
  data_.assign(offset, 0.0);
}

const TensorInfo& ModelParams::info(std::string_view name) const {
  for (const auto& t : tensors_)
    if (t.name == name) return t;
  throw Error(ErrorCode::InvalidConfig, "unknown parameter tensor " + std::string(name));
}

std::span<double> ModelParams::tensor(std::string_view name) {
  const TensorInfo& t = info(name);
  return std::span<double>(data_).subspan(t.offset, t.size());
}

std::span<const double> ModelParams::tensor(std::string_view name) const {
  const TensorInfo& t = info(name);
  return std::span<const double>(data_).subspan(t.offset, t.size());
}

ModelParams init_params(const ModelConfig& config, std::uint64_t seed) {
  ModelParams p(config);
  Rng rng(seed);
  for (const TensorInfo& t : p.tensors()) {
    auto view = p.tensor(t.name);
    const bool bias = t.cols == 1;
    if (bias) {
      if (t.name.find("lstm") != std::string::npos) {
        const int h = t.rows / 4;
        for (int k = h; k < 2 * h; ++k) view[static_cast<std::size_t>(k)] = 1.0;
      }
      continue;
    }
    const double limit = std::sqrt(6.0 / (t.rows + t.cols));
    for (double& v : view) v = rng.uniform(-limit, limit);
  }
  return p;
}

int Prediction::argmax_edge() const {
  return static_cast<int>(std::max_element(edge_probs.begin(), edge_probs.end()) - edge_probs.begin());
}

void check_sample(const ModelConfig& c, const features::Sample& s) {
  const features::LocalWindow& w = s.local;
  const auto n = static_cast<std::size_t>(c.window);
  const bool ok = w.steps == c.window && w.nodes == c.nodes && w.occupancy_cells == c.occupancy_cells &&
                  w.bird_cells == c.bird_cells && w.rel_pos.size() == n * static_cast<std::size_t>(c.nodes) * 2 &&
                  w.occupancy.size() == n * static_cast<std::size_t>(c.occupancy_cells) &&
                  w.bird.size() == n * static_cast<std::size_t>(c.bird_cells) && w.edge.size() == n &&
                  w.signal.size() == n && w.valid.size() == n;
  if (!ok) throw Error(ErrorCode::ShapeMismatch, "sample window does not match the model configuration");
  for (const auto e : w.edge)
    if (e < -1 || e >= c.edges) throw Error(ErrorCode::ShapeMismatch, "window edge index out of range");
  if (s.global.goal < 0 || s.global.goal >= c.nodes) throw Error(ErrorCode::ShapeMismatch, "goal node out of range");
  if (s.global.edge_history.size() > static_cast<std::size_t>(c.max_history))
    throw Error(ErrorCode::ShapeMismatch, "edge history longer than max_history");
  for (const int e : s.global.edge_history)
    if (e < 0 || e >= c.edges) throw Error(ErrorCode::ShapeMismatch, "edge history index out of range");
}

const Prediction& forward(const ModelParams& p, const features::Sample& sample, ForwardCache& cache) {
  const ModelConfig& c = p.config();
  check_sample(c, sample);
  const Layout& L = p.layout();
  const double* base = p.data().data();
  const auto h = static_cast<std::size_t>(c.encoder_hidden);
  const auto d = static_cast<std::size_t>(c.decoder_hidden);
  const auto a = static_cast<std::size_t>(c.attention_dim);
  const auto k_steps = static_cast<std::size_t>(c.decoder_steps);
  const auto n_edges = static_cast<std::size_t>(c.edges);

  build_inputs(c, sample, cache);
  if (cache.memoize_bird) embed_bird_memo(p, sample, cache);
  for (int s = 0; s < kLocalStreams; ++s)
    run_stream(p, cache.local[s], L.embed_w[s], L.embed_b[s], L.lstm_w[s], L.lstm_b[s],
               static_cast<std::size_t>(c.window), s == 2 && cache.memoize_bird);
  run_stream(p, cache.global, L.global_embed_w, L.global_embed_b, L.global_lstm_w, L.global_lstm_b,
             cache.global.x.size() / static_cast<std::size_t>(cache.global.input));

  cache.hcat.resize(6 * h);
  std::copy_n(cache.global.steps.back().h.begin(), h, cache.hcat.begin());
  for (int s = 0; s < kLocalStreams; ++s)
    std::copy_n(cache.local[s].steps.back().h.begin(), h, cache.hcat.begin() + static_cast<std::ptrdiff_t>((s + 1) * h));
  cache.z.resize(d);
  affine(base + L.fuse_w, base + L.fuse_b, d, 6 * h, cache.hcat.data(), cache.z.data());
  for (double& v : cache.z) v = std::tanh(v);

  const LstmView dec = lstm_view(p, L.dec_w, L.dec_b, c.decoder_hidden, c.decoder_hidden);
  cache.dec.resize(k_steps);
  cache.dec_h.resize(k_steps * d);
  const std::vector<double> zero(d, 0.0);
  for (std::size_t k = 0; k < k_steps; ++k) {
    const std::span<const double> hp = k == 0 ? std::span<const double>(zero) : cache.dec[k - 1].h;
    const std::span<const double> cp = k == 0 ? std::span<const double>(zero) : cache.dec[k - 1].c;
    lstm_forward(dec, cache.z, hp, cp, cache.dec[k]);
    std::copy(cache.dec[k].h.begin(), cache.dec[k].h.end(), cache.dec_h.begin() + static_cast<std::ptrdiff_t>(k * d));
  }

  const std::vector<double>& h_pos = cache.local[0].steps.back().h;
  cache.q.assign(a, 0.0);
  kernels::gemv(base + L.att_q, a, h, h_pos.data(), cache.q.data());
  cache.keys.assign(k_steps * a, 0.0);
  cache.values.assign(k_steps * a, 0.0);
  for (std::size_t k = 0; k < k_steps; ++k) {
    kernels::gemv(base + L.att_k, a, d, cache.dec_h.data() + k * d, cache.keys.data() + k * a);
    kernels::gemv(base + L.att_v, a, d, cache.dec_h.data() + k * d, cache.values.data() + k * a);
  }
  cache.alpha.resize(k_steps);
  cache.attended.resize(a);
  attention_forward(cache.q, cache.keys, cache.values, c.decoder_steps, {}, cache.alpha, cache.attended);

  cache.head_in.resize(a + d);
  std::copy(cache.attended.begin(), cache.attended.end(), cache.head_in.begin());
  std::copy(cache.dec.back().h.begin(), cache.dec.back().h.end(), cache.head_in.begin() + static_cast<std::ptrdiff_t>(a));

  Prediction& pred = cache.pred;
  double raw[2];
  affine(base + L.head_p_w, base + L.head_p_b, 2, a + d, cache.head_in.data(), raw);
  pred.delta_p = {c.disp_scale * raw[0], c.disp_scale * raw[1]};
  pred.edge_logits.resize(n_edges);
  affine(base + L.head_e_w, base + L.head_e_b, n_edges, a + d, cache.head_in.data(), pred.edge_logits.data());
  const double mx = *std::max_element(pred.edge_logits.begin(), pred.edge_logits.end());
  pred.edge_probs.resize(n_edges);
  double total = 0.0;
  for (std::size_t k = 0; k < n_edges; ++k) {
    pred.edge_probs[k] = std::exp(pred.edge_logits[k] - mx);
    total += pred.edge_probs[k];
  }
  for (double& v : pred.edge_probs) v /= total;
  return pred;
}

Prediction forward(const ModelParams& params, const features::Sample& sample) {
  ForwardCache cache;
  return forward(params, sample, cache);
}

double loss(const Prediction& pred, Vec2 target_delta, int target_edge, const LossWeights& w) {
  if (target_edge < 0 || static_cast<std::size_t>(target_edge) >= pred.edge_logits.size())
    throw Error(ErrorCode::ShapeMismatch, "target edge out of range");
  const Vec2 diff = pred.delta_p - target_delta;
  const double mse = 0.5 * (diff.x * diff.x + diff.y * diff.y);
  const double mx = *std::max_element(pred.edge_logits.begin(), pred.edge_logits.end());
  double total = 0.0;
  for (const double l : pred.edge_logits) total += std::exp(l - mx);
  const double nll = std::log(total) + mx - pred.edge_logits[static_cast<std::size_t>(target_edge)];
  return w.pos * mse + w.edge * nll;
}

double loss_and_gradient(const ModelParams& p, const features::Sample& sample, const LossWeights& w,
                         std::span<double> grad, ForwardCache& cache) {
  if (grad.size() != p.size()) throw Error(ErrorCode::ShapeMismatch, "gradient buffer size differs from params");
  const Prediction& pred = forward(p, sample, cache);
  const double value = loss(pred, sample.target_delta, sample.target_edge, w);

  const ModelConfig& c = p.config();
  const Layout& L = p.layout();
  const double* base = p.data().data();
  double* g = grad.data();
  const auto h = static_cast<std::size_t>(c.encoder_hidden);
  const auto d = static_cast<std::size_t>(c.decoder_hidden);
  const auto a = static_cast<std::size_t>(c.attention_dim);
  const auto k_steps = static_cast<std::size_t>(c.decoder_steps);
  const auto n_edges = static_cast<std::size_t>(c.edges);
  std::vector<double> scratch;

  // Heads.
  std::vector<double> dlogits(n_edges);
  for (std::size_t k = 0; k < n_edges; ++k) dlogits[k] = w.edge * pred.edge_probs[k];
  dlogits[static_cast<std::size_t>(sample.target_edge)] -= w.edge;
  const double draw[2] = {w.pos * (pred.delta_p.x - sample.target_delta.x) * c.disp_scale,
                          w.pos * (pred.delta_p.y - sample.target_delta.y) * c.disp_scale};
  std::vector<double> dhead(a + d, 0.0);
  kernels::ger(g + L.head_e_w, n_edges, a + d, dlogits.data(), cache.head_in.data());
  for (std::size_t k = 0; k < n_edges; ++k) g[L.head_e_b + k] += dlogits[k];
  kernels::gemv_t(base + L.head_e_w, n_edges, a + d, dlogits.data(), dhead.data());
  kernels::ger(g + L.head_p_w, 2, a + d, draw, cache.head_in.data());
  g[L.head_p_b] += draw[0];
  g[L.head_p_b + 1] += draw[1];
  kernels::gemv_t(base + L.head_p_w, 2, a + d, draw, dhead.data());

  // Attention.
  std::vector<double> dq(a, 0.0), dkeys(k_steps * a, 0.0), dvalues(k_steps * a, 0.0);
  attention_backward(cache.q, cache.keys, cache.values, c.decoder_steps, cache.alpha,
                     std::span<const double>(dhead).first(a), dq, dkeys, dvalues);
  std::vector<double> ddec(k_steps * d, 0.0);
  std::copy(dhead.begin() + static_cast<std::ptrdiff_t>(a), dhead.end(),
            ddec.begin() + static_cast<std::ptrdiff_t>((k_steps - 1) * d));
  for (std::size_t k = 0; k < k_steps; ++k) {
    const double* dh = cache.dec_h.data() + k * d;
    kernels::ger(g + L.att_k, a, d, dkeys.data() + k * a, dh);
    kernels::gemv_t(base + L.att_k, a, d, dkeys.data() + k * a, ddec.data() + k * d);
    kernels::ger(g + L.att_v, a, d, dvalues.data() + k * a, dh);
    kernels::gemv_t(base + L.att_v, a, d, dvalues.data() + k * a, ddec.data() + k * d);
  }
  const std::vector<double>& h_pos = cache.local[0].steps.back().h;
  std::vector<double> dh_pos(h, 0.0);
  kernels::ger(g + L.att_q, a, h, dq.data(), h_pos.data());
  kernels::gemv_t(base + L.att_q, a, h, dq.data(), dh_pos.data());

  // Decoder, fed z at every step.
  const LstmView dec = lstm_view(p, L.dec_w, L.dec_b, c.decoder_hidden, c.decoder_hidden);
  std::vector<double> dz(d, 0.0), dx(d), dhn(d, 0.0), dcn(d, 0.0), dh_prev(d), dc_prev(d);
  for (std::size_t k = k_steps; k-- > 0;) {
    for (std::size_t j = 0; j < d; ++j) dhn[j] += ddec[k * d + j];
    lstm_backward(dec, cache.dec[k], dhn, dcn, g + L.dec_w, g + L.dec_b, dx, dh_prev, dc_prev, scratch);
    for (std::size_t j = 0; j < d; ++j) dz[j] += dx[j];
    std::swap(dhn, dh_prev);
    std::swap(dcn, dc_prev);
  }

  // Fusion.
  for (std::size_t j = 0; j < d; ++j) dz[j] *= 1.0 - cache.z[j] * cache.z[j];
  std::vector<double> dhcat(6 * h, 0.0);
  kernels::ger(g + L.fuse_w, d, 6 * h, dz.data(), cache.hcat.data());
  for (std::size_t j = 0; j < d; ++j) g[L.fuse_b + j] += dz[j];
  kernels::gemv_t(base + L.fuse_w, d, 6 * h, dz.data(), dhcat.data());
  for (std::size_t j = 0; j < h; ++j) dhcat[h + j] += dh_pos[j];

  back_stream(p, cache.global, L.global_embed_w, L.global_embed_b, L.global_lstm_w, L.global_lstm_b,
              std::span<const double>(dhcat).first(h), grad, scratch);
  for (int s = 0; s < kLocalStreams; ++s)
    back_stream(p, cache.local[s], L.embed_w[s], L.embed_b[s], L.lstm_w[s], L.lstm_b[s],
                std::span<const double>(dhcat).subspan(static_cast<std::size_t>(s + 1) * h, h), grad, scratch);
  return value;
}

}  // namespace pedflow::nn
