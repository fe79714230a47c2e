#include "pedflow/nn/train.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <thread>

#include "pedflow/error.hpp"
#include "pedflow/kernels.hpp"

namespace pedflow::nn {

namespace {

void invalid(const std::string& what) { throw Error(ErrorCode::InvalidConfig, "train config: " + what); }

// Per-sample gradients for one batch. Each sample gets its own buffer so the
// reduction below adds them in batch order whatever the thread count.
class BatchWorker {
 public:
  BatchWorker(const ModelParams& params, int threads, int batch_size)
      : params_(params), threads_(std::max(1, threads)), caches_(static_cast<std::size_t>(threads_)) {
    if (threads_ > 1) buffers_.assign(static_cast<std::size_t>(batch_size), std::vector<double>(params.size()));
    else buffers_.assign(1, std::vector<double>(params.size()));
  }

  /// Writes the mean gradient of the batch into `grad` and the per-sample
  /// losses into `losses[idx]`.
  void run(const std::vector<features::Sample>& samples, std::span<const std::size_t> batch,
           const std::vector<char>& drop, const LossWeights& w, std::span<double> grad, std::vector<double>& losses) {
    std::fill(grad.begin(), grad.end(), 0.0);
    staged_.resize(static_cast<std::size_t>(threads_));
    // Sample j of the batch, with its history dropped when flagged.
    auto input = [&](std::size_t j, std::size_t slot) -> const features::Sample& {
      const features::Sample& s = samples[batch[j]];
      if (!drop[j]) return s;
      staged_[slot] = s;
      features::drop_history(staged_[slot].local);
      return staged_[slot];
    };
    if (threads_ == 1) {
      for (std::size_t j = 0; j < batch.size(); ++j) {
        const std::size_t idx = batch[j];
        auto& buf = buffers_[0];
        std::fill(buf.begin(), buf.end(), 0.0);
        losses[idx] = loss_and_gradient(params_, input(j, 0), w, buf, caches_[0]);
        check(losses[idx], idx);
        kernels::axpy(1.0, buf, grad);
      }
    } else {
      std::vector<std::exception_ptr> errors(static_cast<std::size_t>(threads_));
      const std::size_t per = (batch.size() + static_cast<std::size_t>(threads_) - 1) / static_cast<std::size_t>(threads_);
      {
        std::vector<std::jthread> pool;
        for (int t = 0; t < threads_; ++t) {
          pool.emplace_back([&, t] {
            try {
              const std::size_t lo = static_cast<std::size_t>(t) * per;
              const std::size_t hi = std::min(batch.size(), lo + per);
              for (std::size_t j = lo; j < hi; ++j) {
                auto& buf = buffers_[j];
                std::fill(buf.begin(), buf.end(), 0.0);
                losses[batch[j]] = loss_and_gradient(params_, input(j, static_cast<std::size_t>(t)), w, buf,
                                                     caches_[static_cast<std::size_t>(t)]);
              }
            } catch (...) {
              errors[static_cast<std::size_t>(t)] = std::current_exception();
            }
          });
        }
      }
      for (auto& e : errors)
        if (e) std::rethrow_exception(e);
      for (std::size_t j = 0; j < batch.size(); ++j) {
        check(losses[batch[j]], batch[j]);
        kernels::axpy(1.0, buffers_[j], grad);
      }
    }
    const double n = static_cast<double>(batch.size());
    for (double& g : grad) g /= n;
  }

 private:
  static void check(double value, std::size_t idx) {
    if (!std::isfinite(value))
      throw Error(ErrorCode::NonFiniteLoss, "loss is " + std::to_string(value) + " at sample " + std::to_string(idx));
  }

  const ModelParams& params_;
  int threads_;
  std::vector<ForwardCache> caches_;
  std::vector<std::vector<double>> buffers_;
  std::vector<features::Sample> staged_;  // one per thread
};

}  // namespace

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) invalid("learning_rate must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) invalid("betas must lie in [0, 1)");
  if (!(adam_eps > 0.0)) invalid("adam_eps must be positive");
  if (epochs < 1) invalid("epochs must be >= 1");
  if (batch_size < 1) invalid("batch_size must be >= 1");
  if (!(weights.pos >= 0.0) || !(weights.edge >= 0.0)) invalid("loss weights must be >= 0");
  if (!(plateau_factor > 0.0 && plateau_factor < 1.0)) invalid("plateau_factor must lie in (0, 1)");
  if (plateau_patience < 0) invalid("plateau_patience must be >= 0");
  if (!(plateau_threshold >= 0.0)) invalid("plateau_threshold must be >= 0");
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0)) invalid("validation_fraction must lie in [0, 1)");
  if (threads < 1) invalid("threads must be >= 1");
  if (!(history_dropout >= 0.0 && history_dropout <= 1.0)) invalid("history_dropout must lie in [0, 1]");
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = nlohmann::json{{"learning_rate", c.learning_rate},
                     {"beta1", c.beta1},
                     {"beta2", c.beta2},
                     {"adam_eps", c.adam_eps},
                     {"epochs", c.epochs},
                     {"batch_size", c.batch_size},
                     {"lambda_pos", c.weights.pos},
                     {"lambda_edge", c.weights.edge},
                     {"seed", c.seed},
                     {"plateau_factor", c.plateau_factor},
                     {"plateau_patience", c.plateau_patience},
                     {"plateau_threshold", c.plateau_threshold},
                     {"validation_fraction", c.validation_fraction},
                     {"threads", c.threads},
                     {"history_dropout", c.history_dropout}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  TrainConfig d;
  c.learning_rate = j.value("learning_rate", d.learning_rate);
  c.beta1 = j.value("beta1", d.beta1);
  c.beta2 = j.value("beta2", d.beta2);
  c.adam_eps = j.value("adam_eps", d.adam_eps);
  c.epochs = j.value("epochs", d.epochs);
  c.batch_size = j.value("batch_size", d.batch_size);
  c.weights.pos = j.value("lambda_pos", d.weights.pos);
  c.weights.edge = j.value("lambda_edge", d.weights.edge);
  c.seed = j.value("seed", d.seed);
  c.plateau_factor = j.value("plateau_factor", d.plateau_factor);
  c.plateau_patience = j.value("plateau_patience", d.plateau_patience);
  c.plateau_threshold = j.value("plateau_threshold", d.plateau_threshold);
  c.validation_fraction = j.value("validation_fraction", d.validation_fraction);
  c.threads = j.value("threads", d.threads);
  c.history_dropout = j.value("history_dropout", d.history_dropout);
}

Split split_indices(std::size_t n, double validation_fraction, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);
  std::size_t n_val = n < 2 ? 0 : static_cast<std::size_t>(std::llround(validation_fraction * static_cast<double>(n)));
  n_val = std::min(n_val, n - std::min<std::size_t>(n, 1));
  Split s;
  s.validation.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
  s.train.assign(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
  std::sort(s.validation.begin(), s.validation.end());
  std::sort(s.train.begin(), s.train.end());
  return s;
}

double mean_loss(const ModelParams& params, const std::vector<features::Sample>& samples,
                 std::span<const std::size_t> indices, const LossWeights& w) {
  if (samples.empty()) throw Error(ErrorCode::EmptyDataset, "no samples");
  ForwardCache cache;
  double total = 0.0;
  std::size_t count = 0;
  auto one = [&](std::size_t i) {
    const Prediction& pred = forward(params, samples[i], cache);
    total += loss(pred, samples[i].target_delta, samples[i].target_edge, w);
    ++count;
  };
  if (indices.empty()) {
    for (std::size_t i = 0; i < samples.size(); ++i) one(i);
  } else {
    for (const std::size_t i : indices) one(i);
  }
  return total / static_cast<double>(count);
}

TrainResult train(const std::vector<features::Sample>& samples, const ModelParams& initial, const TrainConfig& cfg,
                  std::optional<Split> split, const EpochCallback& on_epoch) {
  cfg.validate();
  if (samples.empty()) throw Error(ErrorCode::EmptyDataset, "training set is empty");
  for (const auto& s : samples) check_sample(initial.config(), s);

  TrainResult result;
  result.split = split ? std::move(*split) : split_indices(samples.size(), cfg.validation_fraction, cfg.seed);
  const Split& sp = result.split;
  if (sp.train.empty()) throw Error(ErrorCode::EmptyDataset, "training split is empty");
  for (const auto i : sp.train)
    if (i >= samples.size()) throw Error(ErrorCode::InvalidConfig, "split index out of range");
  for (const auto i : sp.validation)
    if (i >= samples.size()) throw Error(ErrorCode::InvalidConfig, "split index out of range");

  ModelParams params = initial;
  const std::size_t n_params = params.size();
  std::vector<double> grad(n_params), m(n_params, 0.0), v(n_params, 0.0);
  std::vector<double> losses(samples.size(), 0.0);
  BatchWorker worker(params, cfg.threads, cfg.batch_size);
  Rng rng(cfg.seed ^ 0x5deece66dULL);
  Rng drop_rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<char> drop;

  double lr = cfg.learning_rate;
  double best = std::numeric_limits<double>::infinity();
  double plateau_best = std::numeric_limits<double>::infinity();
  int bad_epochs = 0;
  long step = 0;
  result.params = params;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    std::vector<std::size_t> order = sp.train;
    rng.shuffle(order);
    for (std::size_t lo = 0; lo < order.size(); lo += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t hi = std::min(order.size(), lo + static_cast<std::size_t>(cfg.batch_size));
      drop.assign(hi - lo, 0);
      if (cfg.history_dropout > 0.0)
        for (auto& d : drop) d = drop_rng.uniform() < cfg.history_dropout;
      worker.run(samples, std::span<const std::size_t>(order).subspan(lo, hi - lo), drop, cfg.weights, grad, losses);
      ++step;
      const kernels::AdamCoeffs c{cfg.beta1, cfg.beta2, lr / (1.0 - std::pow(cfg.beta1, static_cast<double>(step))),
                                  1.0 / std::sqrt(1.0 - std::pow(cfg.beta2, static_cast<double>(step))), cfg.adam_eps};
      kernels::adam(params.data(), grad, m, v, c);
    }
    double train_loss = 0.0;
    for (const std::size_t i : sp.train) train_loss += losses[i];
    train_loss /= static_cast<double>(sp.train.size());
    const double val_loss = sp.validation.empty() ? train_loss : mean_loss(params, samples, sp.validation, cfg.weights);
    if (!std::isfinite(val_loss))
      throw Error(ErrorCode::NonFiniteLoss, "validation loss is not finite after epoch " + std::to_string(epoch));

    const EpochStats stats{epoch, train_loss, val_loss, lr};
    result.curve.push_back(stats);
    if (val_loss < best) {
      best = val_loss;
      result.params = params;
      result.best_epoch = epoch;
    }
    if (val_loss < plateau_best * (1.0 - cfg.plateau_threshold)) {
      plateau_best = val_loss;
      bad_epochs = 0;
    } else if (++bad_epochs > cfg.plateau_patience) {
      lr *= cfg.plateau_factor;
      bad_epochs = 0;
    }
    if (on_epoch) on_epoch(stats);
  }
  return result;
}

Evaluation evaluate(const ModelParams& params, const std::vector<features::Sample>& samples,
                    std::span<const std::size_t> indices) {
  if (samples.empty()) throw Error(ErrorCode::EmptyDataset, "evaluation set is empty");
  ForwardCache cache;
  Evaluation ev;
  double err = 0.0;
  std::size_t hits = 0;
  auto one = [&](const features::Sample& s) {
    const Prediction& pred = forward(params, s, cache);
    err += norm(pred.delta_p - s.target_delta);
    if (pred.argmax_edge() == s.target_edge) ++hits;
    ++ev.count;
  };
  if (indices.empty()) {
    for (const auto& s : samples) one(s);
  } else {
    for (const std::size_t i : indices) one(samples[i]);
  }
  ev.position_error = err / static_cast<double>(ev.count);
  ev.edge_accuracy = static_cast<double>(hits) / static_cast<double>(ev.count);
  return ev;
}

}  // namespace pedflow::nn
