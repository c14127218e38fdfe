#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "samlm/random.hpp"

namespace samlm {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Dense row-major matrix of doubles. Column vectors are n x 1.
class Mat {
 public:
  Mat() = default;
  Mat(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Mat(std::size_t rows, std::size_t cols, std::vector<double> data)
      : rows_(rows), cols_(cols), data_(std::move(data)) {
    if (data_.size() != rows * cols) throw Error("Mat: data length does not match shape");
  }

  static Mat column(std::initializer_list<double> values) {
    return Mat(values.size(), 1, std::vector<double>(values));
  }
  static Mat column(std::vector<double> values) {
    const std::size_t n = values.size();
    return Mat(n, 1, std::move(values));
  }
  static Mat identity(std::size_t n) {
    Mat m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> data() { return data_; }
  std::span<const double> data() const { return data_; }
  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  bool same_shape(const Mat& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }
  void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

  Mat& operator+=(const Mat& o);
  Mat& operator*=(double s) {
    for (double& x : data_) x *= s;
    return *this;
  }

  friend bool operator==(const Mat&, const Mat&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

namespace detail {
inline void require_same(const Mat& a, const Mat& b, const char* op) {
  if (!a.same_shape(b)) {
    throw Error(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                std::to_string(b.cols()));
  }
}
inline void require_column(const Mat& v, const char* op) {
  if (v.cols() != 1) throw Error(std::string(op) + ": expected a column vector");
}
}  // namespace detail

inline Mat& Mat::operator+=(const Mat& o) {
  detail::require_same(*this, o, "add");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
  return *this;
}

// m * v
inline Mat matvec(const Mat& m, const Mat& v) {
  detail::require_column(v, "matvec");
  if (m.cols() != v.rows()) throw Error("matvec: shape mismatch");
  Mat out(m.rows(), 1);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const auto row = m.row(r);
    double acc = 0.0;
    for (std::size_t c = 0; c < row.size(); ++c) acc += row[c] * v[c];
    out[r] = acc;
  }
  return out;
}

// m^T * v
inline Mat matvec_transposed(const Mat& m, const Mat& v) {
  detail::require_column(v, "matvec_transposed");
  if (m.rows() != v.rows()) throw Error("matvec_transposed: shape mismatch");
  Mat out(m.cols(), 1);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const double vr = v[r];
    if (vr == 0.0) continue;
    const auto row = m.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) out[c] += row[c] * vr;
  }
  return out;
}

// m += scale * a * b^T
inline void add_outer(Mat& m, const Mat& a, const Mat& b, double scale = 1.0) {
  if (m.rows() != a.size() || m.cols() != b.size()) throw Error("add_outer: shape mismatch");
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const double ar = scale * a[r];
    if (ar == 0.0) continue;
    auto row = m.row(r);
    for (std::size_t c = 0; c < row.size(); ++c) row[c] += ar * b[c];
  }
}

inline double dot(const Mat& a, const Mat& b) {
  detail::require_same(a, b, "dot");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

inline Mat add(const Mat& a, const Mat& b) {
  Mat out = a;
  out += b;
  return out;
}

inline Mat sub(const Mat& a, const Mat& b) {
  detail::require_same(a, b, "sub");
  Mat out = a;
  for (std::size_t i = 0; i < a.size(); ++i) out[i] -= b[i];
  return out;
}

inline Mat scale(const Mat& a, double s) {
  Mat out = a;
  out *= s;
  return out;
}

inline Mat hadamard(const Mat& a, const Mat& b) {
  detail::require_same(a, b, "hadamard");
  Mat out = a;
  for (std::size_t i = 0; i < a.size(); ++i) out[i] *= b[i];
  return out;
}

inline double sigmoid(double x) {
  // Split by sign so exp never overflows.
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline Mat sigmoid(const Mat& a) {
  Mat out = a;
  for (double& x : out.data()) x = sigmoid(x);
  return out;
}

inline Mat tanh(const Mat& a) {
  Mat out = a;
  for (double& x : out.data()) x = std::tanh(x);
  return out;
}

// Stacks two column vectors.
inline Mat concat(const Mat& a, const Mat& b) {
  detail::require_column(a, "concat");
  detail::require_column(b, "concat");
  Mat out(a.rows() + b.rows(), 1);
  std::copy(a.data().begin(), a.data().end(), out.data().begin());
  std::copy(b.data().begin(), b.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(a.rows()));
  return out;
}

// Rows [begin, begin + n) of a column vector.
inline Mat slice(const Mat& v, std::size_t begin, std::size_t n) {
  detail::require_column(v, "slice");
  if (begin + n > v.rows()) throw Error("slice: out of range");
  Mat out(n, 1);
  for (std::size_t i = 0; i < n; ++i) out[i] = v[begin + i];
  return out;
}

inline Mat row_as_column(const Mat& m, std::size_t r) {
  if (r >= m.rows()) throw Error("row_as_column: row " + std::to_string(r) + " out of range");
  const auto row = m.row(r);
  return Mat(m.cols(), 1, std::vector<double>(row.begin(), row.end()));
}

inline void add_to_row(Mat& m, std::size_t r, const Mat& v, double s = 1.0) {
  if (r >= m.rows() || v.size() != m.cols()) throw Error("add_to_row: shape mismatch");
  auto row = m.row(r);
  for (std::size_t c = 0; c < row.size(); ++c) row[c] += s * v[c];
}

// Max-subtracted softmax over a column vector.
inline Mat softmax(const Mat& v) {
  detail::require_column(v, "softmax");
  if (v.rows() == 0) throw Error("softmax: empty input");
  const double mx = *std::max_element(v.data().begin(), v.data().end());
  Mat out(v.rows(), 1);
  double total = 0.0;
  for (std::size_t i = 0; i < v.rows(); ++i) {
    out[i] = std::exp(v[i] - mx);
    total += out[i];
  }
  for (double& x : out.data()) x /= total;
  return out;
}

// log(sum(exp(v))), stable.
inline double log_sum_exp(const Mat& v) {
  const double mx = *std::max_element(v.data().begin(), v.data().end());
  double total = 0.0;
  for (double x : v.data()) total += std::exp(x - mx);
  return mx + std::log(total);
}

inline double squared_norm(const Mat& a) { return dot(a, a); }

inline bool all_finite(const Mat& a) {
  return std::all_of(a.data().begin(), a.data().end(), [](double x) { return std::isfinite(x); });
}

inline void init_uniform(Mat& m, Rng& rng, double bound = 0.1) {
  for (double& x : m.data()) x = rng.uniform(-bound, bound);
}

using ParamId = std::size_t;
using Grads = std::vector<Mat>;

// Named parameter tensors with a matching gradient buffer per entry. Entries
// are addressed by ParamId (insertion index); names are unique.
class ParamStore {
 public:
  ParamId add(std::string name, Mat value) {
    if (index_.count(name) != 0) throw Error("ParamStore: duplicate parameter '" + name + "'");
    const ParamId id = values_.size();
    index_.emplace(name, id);
    names_.push_back(std::move(name));
    grads_.emplace_back(value.rows(), value.cols());
    values_.push_back(std::move(value));
    return id;
  }

  bool contains(std::string_view name) const { return index_.find(std::string(name)) != index_.end(); }

  ParamId id(std::string_view name) const {
    const auto it = index_.find(std::string(name));
    if (it == index_.end()) throw Error("ParamStore: no parameter named '" + std::string(name) + "'");
    return it->second;
  }

  std::size_t size() const { return values_.size(); }
  const std::string& name(ParamId id) const { return names_.at(id); }
  const std::vector<std::string>& names() const { return names_; }

  Mat& value(ParamId id) { return values_.at(id); }
  const Mat& value(ParamId id) const { return values_.at(id); }
  Mat& value(std::string_view name) { return values_.at(id(name)); }
  const Mat& value(std::string_view name) const { return values_.at(id(name)); }
  Mat& grad(ParamId id) { return grads_.at(id); }
  const Mat& grad(ParamId id) const { return grads_.at(id); }
  Mat& grad(std::string_view name) { return grads_.at(id(name)); }

  Grads& grads() { return grads_; }
  const Grads& grads() const { return grads_; }
  std::vector<Mat>& values() { return values_; }
  const std::vector<Mat>& values() const { return values_; }

  void zero_grad() {
    for (Mat& g : grads_) g.fill(0.0);
  }

  // Fresh zeroed buffer shaped like the gradients, for per-worker accumulation.
  Grads zero_grads_like() const {
    Grads out;
    out.reserve(values_.size());
    for (const Mat& v : values_) out.emplace_back(v.rows(), v.cols());
    return out;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const Mat& v : values_) n += v.size();
    return n;
  }

 private:
  std::vector<std::string> names_;
  std::vector<Mat> values_;
  std::vector<Mat> grads_;
  std::map<std::string, ParamId, std::less<>> index_;
};

inline double global_grad_norm(const Grads& grads) {
  double total = 0.0;
  for (const Mat& g : grads) total += squared_norm(g);
  return std::sqrt(total);
}

struct GradCheckEntry {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

struct GradCheckReport {
  std::vector<GradCheckEntry> entries;
  double tol = 0.0;
  bool passed = true;

  double max_error() const {
    double m = 0.0;
    for (const auto& e : entries) m = std::max(m, e.max_rel_error);
    return m;
  }
};

// Returns the loss and accumulates its gradient into store.grads().
using LossFn = std::function<double(ParamStore&)>;

// Central-difference check of every parameter entry. The relative error of
// one coordinate is |a - n| / max(|a|, |n|, abs_floor); abs_floor keeps
// coordinates whose true gradient is ~0 from dividing rounding noise by ~0.
inline GradCheckReport grad_check(const LossFn& f, ParamStore& store, double eps = 1e-5,
                                  double tol = 1e-4, double abs_floor = 1e-4) {
  if (!(eps >= 1e-7 && eps <= 1e-4)) throw Error("grad_check: eps must lie in [1e-7, 1e-4]");
  store.zero_grad();
  const double base = f(store);
  if (!std::isfinite(base)) throw Error("grad_check: loss is not finite");
  const Grads analytic = store.grads();

  GradCheckReport report;
  report.tol = tol;
  for (ParamId id = 0; id < store.size(); ++id) {
    GradCheckEntry entry;
    entry.name = store.name(id);
    Mat& value = store.value(id);
    for (std::size_t i = 0; i < value.size(); ++i) {
      const double saved = value[i];
      value[i] = saved + eps;
      store.zero_grad();
      const double plus = f(store);
      value[i] = saved - eps;
      store.zero_grad();
      const double minus = f(store);
      value[i] = saved;
      if (!std::isfinite(plus) || !std::isfinite(minus)) {
        throw Error("grad_check: loss is not finite while perturbing " + entry.name);
      }
      const double numeric = (plus - minus) / (2.0 * eps);
      const double a = analytic[id][i];
      const double denom = std::max({std::abs(a), std::abs(numeric), abs_floor});
      const double rel = std::abs(a - numeric) / denom;
      if (i == 0 || rel > entry.max_rel_error) {
        entry.max_rel_error = rel;
        entry.worst_index = i;
        entry.analytic = a;
        entry.numeric = numeric;
      }
    }
    if (entry.max_rel_error > tol) report.passed = false;
    report.entries.push_back(std::move(entry));
  }
  store.grads() = analytic;
  return report;
}

}  // namespace samlm
