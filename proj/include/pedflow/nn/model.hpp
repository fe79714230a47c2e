#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "pedflow/features.hpp"
#include "pedflow/nn/layers.hpp"
#include "pedflow/random.hpp"

namespace pedflow::nn {

struct ModelConfig {
  // Shapes fixed by the scenario and the feature configuration.
  int nodes = 4;
  int edges = 8;
  int window = 20;
  int occupancy_cells = 32;
  int bird_cells = 2500;
  int max_history = 8;
  // Architecture.
  int local_embed = 16;
  int encoder_hidden = 64;
  int decoder_hidden = 128;
  int attention_dim = 64;
  int decoder_steps = 4;
  bool share_local = false;  // one LSTM for all local streams
  // Input and output scaling.
  double pos_scale = 10.0;    // meters
  double disp_scale = 0.3;    // meters per step
  double occupancy_scale = 4.0;

  int pos_input() const { return 3 * nodes + 3; }
  int global_input() const { return edges + nodes; }
  int fusion_input() const { return 6 * encoder_hidden; }
  int head_input() const { return attention_dim + decoder_hidden; }

  /// Throws InvalidConfig on non-positive sizes or scales.
  void validate() const;
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

void to_json(nlohmann::json& j, const ModelConfig& c);
void from_json(const nlohmann::json& j, ModelConfig& c);

ModelConfig model_config_for(const features::FeatureConfig& fc, int nodes, int edges);

struct TensorInfo {
  std::string name;
  int rows = 0;
  int cols = 0;
  std::size_t offset = 0;

  std::size_t size() const { return static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols); }
};

inline constexpr int kLocalStreams = 5;  // position, occupancy, bird map, edge, signal

/// Offsets of every tensor in the flat parameter vector.
struct Layout {
  std::size_t embed_w[kLocalStreams];
  std::size_t embed_b[kLocalStreams];
  std::size_t lstm_w[kLocalStreams];  // equal entries when shared
  std::size_t lstm_b[kLocalStreams];
  std::size_t global_embed_w, global_embed_b, global_lstm_w, global_lstm_b;
  std::size_t fuse_w, fuse_b;
  std::size_t dec_w, dec_b;
  std::size_t att_q, att_k, att_v;
  std::size_t head_p_w, head_p_b, head_e_w, head_e_b;
  std::size_t total = 0;
};

/// All network weights in one flat vector with named views.
class ModelParams {
 public:
  ModelParams() = default;
  /// Zero-filled parameters. Throws InvalidConfig for an invalid config.
  explicit ModelParams(const ModelConfig& config);

  const ModelConfig& config() const { return config_; }
  const Layout& layout() const { return layout_; }
  const std::vector<TensorInfo>& tensors() const { return tensors_; }
  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::size_t size() const { return data_.size(); }

  /// Throws InvalidConfig for an unknown name.
  const TensorInfo& info(std::string_view name) const;
  std::span<double> tensor(std::string_view name);
  std::span<const double> tensor(std::string_view name) const;

  friend bool operator==(const ModelParams& a, const ModelParams& b) {
    return a.config_ == b.config_ && a.data_ == b.data_;
  }

 private:
  ModelConfig config_;
  Layout layout_{};
  std::vector<TensorInfo> tensors_;
  std::vector<double> data_;
};

/// Xavier-uniform weights, zero biases, forget-gate biases 1.
ModelParams init_params(const ModelConfig& config, std::uint64_t seed);

struct Prediction {
  Vec2 delta_p;
  std::vector<double> edge_logits;
  std::vector<double> edge_probs;

  int argmax_edge() const;
};

struct LossWeights {
  double pos = 1.0;
  double edge = 1.0;
};

/// Intermediate values of one forward pass. Reusable across calls.
struct ForwardCache {
  struct Stream {
    int input = 0;
    std::vector<double> x;    // steps * input
    std::vector<double> emb;  // steps * embed
    std::vector<LstmStep> steps;
  };
  Stream local[kLocalStreams];
  Stream global;
  std::vector<double> hcat, z;
  std::vector<LstmStep> dec;
  std::vector<double> dec_h;  // decoder_steps * decoder_hidden
  std::vector<double> q, keys, values, alpha, attended, head_in;
  Prediction pred;

  /// Inference only: remembers bird-map embeddings by content so a window
  /// sliding over the same step records embeds each map once. Clear it when
  /// the parameters change.
  bool memoize_bird = false;
  struct BirdEntry {
    std::vector<std::uint8_t> key;
    std::vector<double> emb;
  };
  std::unordered_map<std::uint64_t, BirdEntry> bird_memo;
};

/// Throws ShapeMismatch when the sample does not fit the config.
void check_sample(const ModelConfig& config, const features::Sample& sample);

Prediction forward(const ModelParams& params, const features::Sample& sample);
const Prediction& forward(const ModelParams& params, const features::Sample& sample, ForwardCache& cache);

/// lambda_pos * mean over the two coordinates of the squared position error
/// + lambda_edge * negative log-likelihood of the target edge.
double loss(const Prediction& pred, Vec2 target_delta, int target_edge, const LossWeights& w = {});

/// Forward + backward for one sample. grad (same layout as params) is
/// accumulated into; returns the loss.
double loss_and_gradient(const ModelParams& params, const features::Sample& sample, const LossWeights& w,
                         std::span<double> grad, ForwardCache& cache);

/// Checkpoint container:
///   "PFCKPT01" | u32 version | u64 n + n bytes config JSON | u32 tensor count
///   | per tensor: u16 name length, name, u8 dtype (1 = f64 little-endian),
///     u8 rank, u32 dims[rank], raw data.
inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const ModelParams& params, const std::filesystem::path& path);
/// Throws VersionMismatch, ParseError or Io.
ModelParams load_checkpoint(const std::filesystem::path& path);

}  // namespace pedflow::nn
