#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <ostream>
#include <vector>

#include <json.hpp>

#include "samlm/eval.hpp"
#include "samlm/model.hpp"
#include "samlm/parallel.hpp"

namespace samlm {

struct TrainConfig {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::size_t batch_size = 20;
  std::size_t max_epochs = 100;
  std::size_t patience = 3;
  double clip_norm = 5.0;  // <= 0 disables clipping
  std::uint64_t seed = 1;
  std::size_t threads = 0;  // 0: SAMLM_THREADS

  void validate() const {
    if (!(lr > 0.0)) throw Error("train config: lr must be positive");
    if (!(beta1 > 0.0 && beta1 < 1.0) || !(beta2 > 0.0 && beta2 < 1.0)) {
      throw Error("train config: betas must lie in (0, 1)");
    }
    if (patience < 1) throw Error("train config: patience must be at least 1");
    if (batch_size < 1) throw Error("train config: batch size must be at least 1");
  }

  nlohmann::json to_json() const {
    return {{"lr", lr},           {"beta1", beta1},         {"beta2", beta2},
            {"eps", eps},         {"batch_size", batch_size}, {"max_epochs", max_epochs},
            {"patience", patience}, {"clip_norm", clip_norm}, {"seed", seed}};
  }
};

struct AdamState {
  std::vector<Mat> m;
  std::vector<Mat> v;
  std::uint64_t t = 0;

  static AdamState for_params(const ParamStore& store) {
    AdamState s;
    s.m = store.zero_grads_like();
    s.v = store.zero_grads_like();
    return s;
  }
};

// Bias-corrected Adam on store.grads(); gradients are zeroed afterwards.
inline void adam_step(ParamStore& store, AdamState& state, double lr, double beta1 = 0.9, double beta2 = 0.999,
                      double eps = 1e-8) {
  for (ParamId id = 0; id < store.size(); ++id) {
    if (!all_finite(store.grad(id))) throw Error("non-finite gradient in '" + store.name(id) + "'");
  }
  if (state.m.size() != store.size()) state = AdamState::for_params(store);
  ++state.t;
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(state.t));
  for (ParamId id = 0; id < store.size(); ++id) {
    Mat& value = store.value(id);
    Mat& grad = store.grad(id);
    Mat& m = state.m[id];
    Mat& v = state.v[id];
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double g = grad[i];
      m[i] = beta1 * m[i] + (1.0 - beta1) * g;
      v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
      value[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
    }
    grad.fill(0.0);
  }
}

// Rescales all gradients so their global L2 norm is at most max_norm.
// Returns the norm before clipping.
inline double clip_grad_norm(Grads& grads, double max_norm) {
  const double norm = global_grad_norm(grads);
  if (max_norm > 0.0 && norm > max_norm) {
    const double s = max_norm / norm;
    for (Mat& g : grads) g *= s;
  }
  return norm;
}

struct EpochRecord {
  std::size_t epoch = 0;
  double train_ppl = 0.0;
  double valid_ppl = 0.0;
  double seconds = 0.0;
};

struct TrainResult {
  std::vector<Mat> best_values;
  std::vector<Mat> last_values;
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
  double best_valid_nll = std::numeric_limits<double>::infinity();

  double best_valid_ppl() const { return std::exp(best_valid_nll); }
};

inline void write_history_csv(std::ostream& out, const std::vector<EpochRecord>& history) {
  out << "epoch,train_ppl,valid_ppl,seconds\n";
  out.precision(10);
  for (const auto& r : history) {
    out << r.epoch << ',' << r.train_ppl << ',' << r.valid_ppl << ',' << r.seconds << '\n';
  }
}

// Shuffled batches of similar-length documents: shuffle, sort pools of 50
// batches by length, cut into batches, shuffle the batch order.
inline std::vector<std::vector<std::size_t>> make_batches(const std::vector<IndexedDocument>& docs,
                                                          std::size_t batch_size, Rng& rng) {
  std::vector<std::size_t> order(docs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  rng.shuffle(order);
  const std::size_t pool = batch_size * 50;
  for (std::size_t start = 0; start < order.size(); start += pool) {
    const auto first = order.begin() + static_cast<std::ptrdiff_t>(start);
    const auto last = order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), start + pool));
    std::stable_sort(first, last, [&](std::size_t a, std::size_t b) {
      return docs[a].text_ids.size() < docs[b].text_ids.size();
    });
  }
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < order.size(); start += batch_size) {
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), start + batch_size)));
  }
  rng.shuffle(batches);
  return batches;
}

// Forward + backward over one batch with token-mean scaling. Returns the
// summed NLL and token count. With several threads each shard accumulates
// into its own buffer; shards are summed in order.
inline std::pair<double, std::size_t> batch_gradients(SamModel& model, const std::vector<IndexedDocument>& docs,
                                                      const std::vector<std::size_t>& batch, std::size_t threads) {
  std::size_t tokens = 0;
  for (std::size_t i : batch) tokens += docs[i].text_ids.size();
  const double scale = 1.0 / static_cast<double>(tokens);
  const std::size_t shards = std::max<std::size_t>(1, std::min(threads, batch.size()));
  std::vector<double> nll(shards, 0.0);
  if (shards == 1) {
    for (std::size_t i : batch) {
      const auto pass = forward_document(model, docs[i], true);
      backward_document(model, pass, scale, model.params.grads());
      nll[0] += pass.total_nll;
    }
  } else {
    std::vector<Grads> buffers(shards);
    parallel_shards(batch.size(), shards, [&](std::size_t begin, std::size_t end, std::size_t s) {
      buffers[s] = model.params.zero_grads_like();
      for (std::size_t j = begin; j < end; ++j) {
        const auto pass = forward_document(model, docs[batch[j]], true);
        backward_document(model, pass, scale, buffers[s]);
        nll[s] += pass.total_nll;
      }
    });
    for (const auto& buf : buffers) {
      for (ParamId id = 0; id < buf.size(); ++id) model.params.grad(id) += buf[id];
    }
  }
  return {std::accumulate(nll.begin(), nll.end(), 0.0), tokens};
}

using EpochCallback = std::function<void(const EpochRecord&)>;

// Mini-batch Adam with early stopping on validation NLL. On return the model
// holds the best epoch's parameters.
inline TrainResult train(SamModel& model, const std::vector<IndexedDocument>& train_docs,
                         const std::vector<IndexedDocument>& valid_docs, const TrainConfig& cfg,
                         const EpochCallback& on_epoch = {}) {
  cfg.validate();
  if (train_docs.empty() || valid_docs.empty()) throw Error("train: empty training or validation split");
  const std::size_t threads = cfg.threads > 0 ? cfg.threads : worker_threads();
  Rng rng(cfg.seed);
  AdamState adam = AdamState::for_params(model.params);
  TrainResult result;
  std::size_t since_best = 0;
  model.params.zero_grad();

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    double train_nll = 0.0;
    std::size_t train_tokens = 0;
    for (const auto& batch : make_batches(train_docs, cfg.batch_size, rng)) {
      const auto [nll, tokens] = batch_gradients(model, train_docs, batch, threads);
      train_nll += nll;
      train_tokens += tokens;
      clip_grad_norm(model.params.grads(), cfg.clip_norm);
      adam_step(model.params, adam, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps);
    }
    const auto valid = perplexity(model, valid_docs, "train", "valid", threads);
    const double valid_nll = valid.mean_nll();
    if (!std::isfinite(valid_nll)) {
      throw Error("validation NLL is not finite at epoch " + std::to_string(epoch) +
                  " (try a smaller learning rate or a clip norm)");
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_ppl = std::exp(train_nll / static_cast<double>(train_tokens));
    rec.valid_ppl = valid.perplexity;
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec);

    if (valid_nll < result.best_valid_nll) {
      result.best_valid_nll = valid_nll;
      result.best_epoch = epoch;
      result.best_values = model.params.values();
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      break;
    }
  }
  result.last_values = model.params.values();
  model.params.values() = result.best_values;
  return result;
}

}  // namespace samlm
