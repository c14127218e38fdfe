#pragma once

#include <string>

#include "samlm/tensor.hpp"

namespace samlm {

// Gated recurrent unit without gate biases:
//   z  = sigmoid(Wz w + Uz h')
//   r  = sigmoid(Wr w + Ur h')
//   c  = tanh(Wc w + Uc (h' . r))
//   h  = (1 - z) . c + z . h'
// Weights live in a ParamStore under "<prefix>.Wz" etc.
struct GruCell {
  std::string prefix;
  std::size_t input_dim = 0;
  std::size_t hidden_dim = 0;
  ParamId Wz = 0, Uz = 0, Wr = 0, Ur = 0, Wc = 0, Uc = 0;

  static GruCell create(ParamStore& store, std::string prefix, std::size_t input_dim, std::size_t hidden_dim,
                        Rng& rng, double init_bound = 0.1) {
    GruCell cell{std::move(prefix), input_dim, hidden_dim};
    auto make = [&](const char* name, std::size_t cols) {
      Mat m(hidden_dim, cols);
      init_uniform(m, rng, init_bound);
      return store.add(cell.prefix + "." + name, std::move(m));
    };
    cell.Wz = make("Wz", input_dim);
    cell.Uz = make("Uz", hidden_dim);
    cell.Wr = make("Wr", input_dim);
    cell.Ur = make("Ur", hidden_dim);
    cell.Wc = make("Wc", input_dim);
    cell.Uc = make("Uc", hidden_dim);
    return cell;
  }

  // Re-attaches to weights already present in `store` (e.g. from a checkpoint).
  static GruCell bind(const ParamStore& store, std::string prefix) {
    GruCell cell{std::move(prefix)};
    cell.Wz = store.id(cell.prefix + ".Wz");
    cell.Uz = store.id(cell.prefix + ".Uz");
    cell.Wr = store.id(cell.prefix + ".Wr");
    cell.Ur = store.id(cell.prefix + ".Ur");
    cell.Wc = store.id(cell.prefix + ".Wc");
    cell.Uc = store.id(cell.prefix + ".Uc");
    cell.hidden_dim = store.value(cell.Wz).rows();
    cell.input_dim = store.value(cell.Wz).cols();
    for (ParamId id : {cell.Wr, cell.Wc}) {
      if (store.value(id).rows() != cell.hidden_dim || store.value(id).cols() != cell.input_dim) {
        throw Error("GRU '" + cell.prefix + "': inconsistent input weight shapes");
      }
    }
    for (ParamId id : {cell.Uz, cell.Ur, cell.Uc}) {
      if (store.value(id).rows() != cell.hidden_dim || store.value(id).cols() != cell.hidden_dim) {
        throw Error("GRU '" + cell.prefix + "': inconsistent recurrent weight shapes");
      }
    }
    return cell;
  }
};

struct GruCache {
  Mat w;
  Mat h_prev;
  Mat z;
  Mat r;
  Mat candidate;
  Mat h_prev_reset;  // h_prev . r
};

inline Mat gru_step(const GruCell& cell, const ParamStore& store, const Mat& w, const Mat& h_prev,
                    GruCache* cache = nullptr) {
  if (w.rows() != cell.input_dim || w.cols() != 1) {
    throw Error("GRU '" + cell.prefix + "': input has " + std::to_string(w.rows()) + " rows, expected " +
                std::to_string(cell.input_dim));
  }
  if (h_prev.rows() != cell.hidden_dim || h_prev.cols() != 1) {
    throw Error("GRU '" + cell.prefix + "': hidden state has wrong shape");
  }
  Mat z = sigmoid(add(matvec(store.value(cell.Wz), w), matvec(store.value(cell.Uz), h_prev)));
  Mat r = sigmoid(add(matvec(store.value(cell.Wr), w), matvec(store.value(cell.Ur), h_prev)));
  Mat hr = hadamard(h_prev, r);
  Mat c = tanh(add(matvec(store.value(cell.Wc), w), matvec(store.value(cell.Uc), hr)));
  Mat h(cell.hidden_dim, 1);
  for (std::size_t i = 0; i < h.size(); ++i) h[i] = (1.0 - z[i]) * c[i] + z[i] * h_prev[i];
  if (cache) {
    cache->w = w;
    cache->h_prev = h_prev;
    cache->z = std::move(z);
    cache->r = std::move(r);
    cache->candidate = std::move(c);
    cache->h_prev_reset = std::move(hr);
  }
  return h;
}

struct GruInputGrads {
  Mat dw;
  Mat dh_prev;
};

// Accumulates weight gradients into `grads`; returns gradients of the inputs.
inline GruInputGrads gru_backward(const GruCell& cell, const ParamStore& store, const GruCache& cache, const Mat& dh,
                                  Grads& grads) {
  const std::size_t n = cell.hidden_dim;
  Mat dc(n, 1), dz_pre(n, 1);
  Mat dh_prev(n, 1);
  for (std::size_t i = 0; i < n; ++i) {
    const double z = cache.z[i];
    const double c = cache.candidate[i];
    dh_prev[i] = dh[i] * z;
    const double dz = dh[i] * (cache.h_prev[i] - c);
    dz_pre[i] = dz * z * (1.0 - z);
    dc[i] = dh[i] * (1.0 - z) * (1.0 - c * c);  // through tanh
  }

  add_outer(grads[cell.Wc], dc, cache.w);
  add_outer(grads[cell.Uc], dc, cache.h_prev_reset);
  Mat dw = matvec_transposed(store.value(cell.Wc), dc);
  const Mat dhr = matvec_transposed(store.value(cell.Uc), dc);

  Mat dr_pre(n, 1);
  for (std::size_t i = 0; i < n; ++i) {
    const double r = cache.r[i];
    dh_prev[i] += dhr[i] * r;
    dr_pre[i] = dhr[i] * cache.h_prev[i] * r * (1.0 - r);
  }

  add_outer(grads[cell.Wz], dz_pre, cache.w);
  add_outer(grads[cell.Uz], dz_pre, cache.h_prev);
  add_outer(grads[cell.Wr], dr_pre, cache.w);
  add_outer(grads[cell.Ur], dr_pre, cache.h_prev);
  dw += matvec_transposed(store.value(cell.Wz), dz_pre);
  dw += matvec_transposed(store.value(cell.Wr), dr_pre);
  dh_prev += matvec_transposed(store.value(cell.Uz), dz_pre);
  dh_prev += matvec_transposed(store.value(cell.Ur), dr_pre);
  return {std::move(dw), std::move(dh_prev)};
}

}  // namespace samlm
