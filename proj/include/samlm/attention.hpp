#pragma once

#include <iomanip>
#include <istream>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "samlm/gru.hpp"
#include "samlm/tensor.hpp"

namespace samlm {

// Softmax attention with bilinear scores s_k = cand_k^T M h. Candidates are
// d~ x 1, h is d x 1, M is d~ x d. Title-word attention and attribute
// attention are both this block with different matrices and candidate sets.
struct AttentionResult {
  Mat context;  // sum_k weight_k cand_k
  Mat weights;  // K x 1
  Mat projected_query;  // M h, kept for backward
};

inline AttentionResult attend(const Mat& M, std::span<const Mat> candidates, const Mat& h_prev) {
  if (candidates.empty()) throw Error("attention: empty candidate set");
  if (M.cols() != h_prev.rows() || h_prev.cols() != 1) throw Error("attention: query has wrong shape");
  AttentionResult out;
  out.projected_query = matvec(M, h_prev);
  Mat scores(candidates.size(), 1);
  for (std::size_t k = 0; k < candidates.size(); ++k) {
    if (candidates[k].rows() != M.rows() || candidates[k].cols() != 1) {
      throw Error("attention: candidate " + std::to_string(k) + " has wrong shape");
    }
    scores[k] = dot(candidates[k], out.projected_query);
  }
  out.weights = softmax(scores);
  out.context = Mat(M.rows(), 1);
  for (std::size_t k = 0; k < candidates.size(); ++k) {
    const double w = out.weights[k];
    for (std::size_t i = 0; i < M.rows(); ++i) out.context[i] += w * candidates[k][i];
  }
  return out;
}

struct AttentionGrads {
  std::vector<Mat> dcandidates;
  Mat dh_prev;
};

// Accumulates dL/dM into dM.
inline AttentionGrads attend_backward(const Mat& M, std::span<const Mat> candidates, const Mat& h_prev,
                                      const AttentionResult& fwd, const Mat& dcontext, Mat& dM) {
  const std::size_t K = candidates.size();
  Mat dweights(K, 1);
  double mean = 0.0;
  for (std::size_t k = 0; k < K; ++k) {
    dweights[k] = dot(candidates[k], dcontext);
    mean += fwd.weights[k] * dweights[k];
  }
  AttentionGrads out;
  out.dcandidates.reserve(K);
  Mat dquery(M.rows(), 1);
  for (std::size_t k = 0; k < K; ++k) {
    const double w = fwd.weights[k];
    const double dscore = w * (dweights[k] - mean);
    Mat dc = scale(dcontext, w);
    for (std::size_t i = 0; i < dc.size(); ++i) {
      dc[i] += dscore * fwd.projected_query[i];
      dquery[i] += dscore * candidates[k][i];
    }
    out.dcandidates.push_back(std::move(dc));
  }
  add_outer(dM, dquery, h_prev);
  out.dh_prev = matvec_transposed(M, dquery);
  return out;
}

struct TitleEncoding {
  std::vector<Mat> states;  // one d~ x 1 state per title word
  std::vector<GruCache> caches;

  const Mat& last() const { return states.back(); }
  std::size_t length() const { return states.size(); }
};

// Runs the title GRU left to right from a zero state over rows of the
// embedding matrix E (vocab x d).
inline TitleEncoding encode_title(const GruCell& encoder, const ParamStore& store, std::span<const int> title_ids,
                                  ParamId embedding) {
  if (title_ids.empty()) throw Error("encode_title: empty title");
  const Mat& E = store.value(embedding);
  TitleEncoding enc;
  enc.states.reserve(title_ids.size());
  enc.caches.resize(title_ids.size());
  Mat state(encoder.hidden_dim, 1);
  for (std::size_t t = 0; t < title_ids.size(); ++t) {
    state = gru_step(encoder, store, row_as_column(E, static_cast<std::size_t>(title_ids[t])), state, &enc.caches[t]);
    enc.states.push_back(state);
  }
  return enc;
}

// BPTT through the title encoder given dL/d(state_t) for every t.
inline void encode_title_backward(const GruCell& encoder, const ParamStore& store, std::span<const int> title_ids,
                                  ParamId embedding, const TitleEncoding& enc, std::span<const Mat> dstates,
                                  Grads& grads) {
  Mat carry(encoder.hidden_dim, 1);
  for (std::size_t t = enc.length(); t-- > 0;) {
    Mat dh = add(dstates[t], carry);
    auto g = gru_backward(encoder, store, enc.caches[t], dh, grads);
    add_to_row(grads[embedding], static_cast<std::size_t>(title_ids[t]), g.dw);
    carry = std::move(g.dh_prev);
  }
}

struct TitleAttention {
  ParamId M1 = 0;
};

struct AttributeAttention {
  ParamId M2 = 0;
};

inline AttentionResult title_context(const TitleAttention& att, const ParamStore& store, const TitleEncoding& enc,
                                     const Mat& h_prev) {
  return attend(store.value(att.M1), enc.states, h_prev);
}

inline AttentionResult attribute_context(const AttributeAttention& att, const ParamStore& store,
                                         std::span<const Mat> candidates, const Mat& h_prev) {
  return attend(store.value(att.M2), candidates, h_prev);
}

// Per-step attention weights collected during a forward pass or generation.
// alpha is m x n (title words by main-text steps), beta is K x n.
struct AttentionTrace {
  Mat alpha;
  Mat beta;
  std::vector<std::string> attribute_names;

  bool empty() const { return alpha.empty() && beta.empty(); }
  std::size_t steps() const { return alpha.empty() ? beta.cols() : alpha.cols(); }
};

// Builds an m x n matrix from n columns of height m.
inline Mat stack_columns(const std::vector<Mat>& cols) {
  if (cols.empty()) return {};
  Mat out(cols.front().rows(), cols.size());
  for (std::size_t j = 0; j < cols.size(); ++j) {
    for (std::size_t i = 0; i < out.rows(); ++i) out(i, j) = cols[j][i];
  }
  return out;
}

namespace detail {
inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.push_back(std::move(cur));
      cur.clear();
    } else if (c != '\r') {
      cur += c;
    }
  }
  fields.push_back(std::move(cur));
  return fields;
}
}  // namespace detail

// CSV: header row = "" then the main-text tokens; then one row per title word
// (alpha block) and one row per attribute (beta block), values to 6 decimals.
inline void write_attention_csv(std::ostream& out, const AttentionTrace& trace, const std::vector<std::string>& title_tokens,
                                const std::vector<std::string>& text_tokens) {
  if (trace.empty()) throw Error("attention trace is empty");
  const std::size_t n = trace.steps();
  if (text_tokens.size() != n) throw Error("attention export: token count does not match trace length");
  if (!trace.alpha.empty() && trace.alpha.rows() != title_tokens.size()) {
    throw Error("attention export: title length does not match trace");
  }
  if (!trace.beta.empty() && trace.beta.rows() != trace.attribute_names.size()) {
    throw Error("attention export: attribute names do not match trace");
  }
  out << "";
  for (const auto& t : text_tokens) out << ',' << detail::csv_field(t);
  out << '\n';
  auto write_row = [&](const std::string& label, const Mat& m, std::size_t r) {
    out << detail::csv_field(label);
    for (std::size_t j = 0; j < n; ++j) {
      std::ostringstream cell;
      cell << std::fixed << std::setprecision(6) << m(r, j);
      out << ',' << cell.str();
    }
    out << '\n';
  };
  for (std::size_t r = 0; r < trace.alpha.rows(); ++r) write_row(title_tokens[r], trace.alpha, r);
  for (std::size_t r = 0; r < trace.beta.rows(); ++r) write_row(trace.attribute_names[r], trace.beta, r);
}

struct AttentionTable {
  std::vector<std::string> columns;
  std::vector<std::string> row_labels;
  std::vector<std::vector<double>> values;
};

inline AttentionTable read_attention_csv(std::istream& in) {
  AttentionTable table;
  std::string line;
  if (!std::getline(in, line)) throw Error("attention CSV: missing header");
  auto header = detail::split_csv_line(line);
  table.columns.assign(header.begin() + 1, header.end());
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto fields = detail::split_csv_line(line);
    if (fields.size() != header.size()) throw Error("attention CSV: ragged row");
    table.row_labels.push_back(fields[0]);
    std::vector<double> row;
    for (std::size_t j = 1; j < fields.size(); ++j) row.push_back(std::stod(fields[j]));
    table.values.push_back(std::move(row));
  }
  return table;
}

}  // namespace samlm
