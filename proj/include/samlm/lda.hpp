#pragma once

#include <algorithm>
#include <numeric>
#include <ostream>
#include <string>
#include <vector>

#include "samlm/corpus.hpp"
#include "samlm/random.hpp"

namespace samlm {

struct LdaConfig {
  std::size_t n_topics = 5;
  double alpha = 0.0;  // <= 0 means 50 / n_topics
  double beta = 0.01;
  std::size_t iterations = 1000;
  std::uint64_t seed = 1;

  double effective_alpha() const { return alpha > 0.0 ? alpha : 50.0 / static_cast<double>(n_topics); }

  void validate() const {
    if (n_topics < 2) throw Error("lda: need at least 2 topics");
    if (!(beta > 0.0)) throw Error("lda: beta must be positive");
  }
};

// Collapsed Gibbs state. Counts are always consistent with `assignments`.
struct TopicModel {
  std::size_t n_topics = 0;
  std::size_t vocab_size = 0;
  double alpha = 0.0;
  double beta = 0.0;
  std::vector<std::vector<int>> docs;
  std::vector<std::vector<int>> assignments;
  std::vector<std::size_t> topic_word;  // n_topics x vocab_size
  std::vector<std::size_t> topic_total;
  std::vector<std::size_t> doc_topic;   // n_docs x n_topics
  std::size_t sweeps = 0;
  Rng rng;

  std::size_t& tw(std::size_t k, std::size_t w) { return topic_word[k * vocab_size + w]; }
  std::size_t tw(std::size_t k, std::size_t w) const { return topic_word[k * vocab_size + w]; }
  std::size_t& dt(std::size_t d, std::size_t k) { return doc_topic[d * n_topics + k]; }
  std::size_t dt(std::size_t d, std::size_t k) const { return doc_topic[d * n_topics + k]; }

  // Recounts from assignments and compares with the running tables.
  bool consistent() const {
    std::vector<std::size_t> tw2(topic_word.size()), tt2(n_topics), dt2(doc_topic.size());
    for (std::size_t d = 0; d < docs.size(); ++d) {
      if (assignments[d].size() != docs[d].size()) return false;
      for (std::size_t i = 0; i < docs[d].size(); ++i) {
        const auto k = static_cast<std::size_t>(assignments[d][i]);
        if (k >= n_topics) return false;
        ++tw2[k * vocab_size + static_cast<std::size_t>(docs[d][i])];
        ++tt2[k];
        ++dt2[d * n_topics + k];
      }
    }
    return tw2 == topic_word && tt2 == topic_total && dt2 == doc_topic;
  }
};

// Random initial assignments; no sweeps yet.
inline TopicModel lda_init(std::vector<std::vector<int>> docs, std::size_t vocab_size, const LdaConfig& cfg) {
  cfg.validate();
  if (docs.empty()) throw Error("lda: no documents");
  if (vocab_size == 0) throw Error("lda: empty vocabulary");
  TopicModel m;
  m.n_topics = cfg.n_topics;
  m.vocab_size = vocab_size;
  m.alpha = cfg.effective_alpha();
  m.beta = cfg.beta;
  m.rng = Rng(cfg.seed);
  m.docs = std::move(docs);
  m.topic_word.assign(m.n_topics * vocab_size, 0);
  m.topic_total.assign(m.n_topics, 0);
  m.doc_topic.assign(m.docs.size() * m.n_topics, 0);
  m.assignments.resize(m.docs.size());
  std::size_t total_tokens = 0;
  for (std::size_t d = 0; d < m.docs.size(); ++d) {
    for (int w : m.docs[d]) {
      if (w < 0 || static_cast<std::size_t>(w) >= vocab_size) throw Error("lda: word id out of range");
      const auto k = m.rng.index(m.n_topics);
      m.assignments[d].push_back(static_cast<int>(k));
      ++m.tw(k, static_cast<std::size_t>(w));
      ++m.topic_total[k];
      ++m.dt(d, k);
      ++total_tokens;
    }
  }
  if (total_tokens == 0) throw Error("lda: empty vocabulary (no tokens)");
  return m;
}

// One pass over every token in document order.
inline void lda_sweep(TopicModel& m) {
  const double vbeta = static_cast<double>(m.vocab_size) * m.beta;
  std::vector<double> cumulative(m.n_topics);
  for (std::size_t d = 0; d < m.docs.size(); ++d) {
    for (std::size_t i = 0; i < m.docs[d].size(); ++i) {
      const auto w = static_cast<std::size_t>(m.docs[d][i]);
      auto k = static_cast<std::size_t>(m.assignments[d][i]);
      --m.tw(k, w);
      --m.topic_total[k];
      --m.dt(d, k);
      double acc = 0.0;
      for (std::size_t t = 0; t < m.n_topics; ++t) {
        acc += (static_cast<double>(m.dt(d, t)) + m.alpha) * (static_cast<double>(m.tw(t, w)) + m.beta) /
               (static_cast<double>(m.topic_total[t]) + vbeta);
        cumulative[t] = acc;
      }
      const double u = m.rng.uniform() * acc;
      k = static_cast<std::size_t>(std::upper_bound(cumulative.begin(), cumulative.end(), u) - cumulative.begin());
      if (k >= m.n_topics) k = m.n_topics - 1;
      m.assignments[d][i] = static_cast<int>(k);
      ++m.tw(k, w);
      ++m.topic_total[k];
      ++m.dt(d, k);
    }
  }
  ++m.sweeps;
}

inline TopicModel lda_fit(std::vector<std::vector<int>> docs, std::size_t vocab_size, const LdaConfig& cfg) {
  TopicModel m = lda_init(std::move(docs), vocab_size, cfg);
  for (std::size_t it = 0; it < cfg.iterations; ++it) lda_sweep(m);
  return m;
}

// argmax_k (n_dk + alpha) / (n_d + K alpha); ties go to the lowest topic.
inline std::vector<int> assign_categories(const TopicModel& m) {
  std::vector<int> labels(m.docs.size());
  for (std::size_t d = 0; d < m.docs.size(); ++d) {
    const double denom = static_cast<double>(m.docs[d].size()) + static_cast<double>(m.n_topics) * m.alpha;
    std::size_t best = 0;
    double best_p = -1.0;
    for (std::size_t k = 0; k < m.n_topics; ++k) {
      const double p = (static_cast<double>(m.dt(d, k)) + m.alpha) / denom;
      if (p > best_p) {
        best_p = p;
        best = k;
      }
    }
    labels[d] = static_cast<int>(best);
  }
  return labels;
}

// Per topic, words ranked by topic-word count (ties lexicographic), at most k.
inline std::vector<std::vector<std::string>> top_words(const TopicModel& m, const Vocabulary& vocab, std::size_t k) {
  std::vector<std::vector<std::string>> out(m.n_topics);
  for (std::size_t t = 0; t < m.n_topics; ++t) {
    std::vector<std::size_t> ids;
    for (std::size_t w = 0; w < m.vocab_size; ++w) {
      if (m.tw(t, w) > 0) ids.push_back(w);
    }
    std::sort(ids.begin(), ids.end(), [&](std::size_t a, std::size_t b) {
      if (m.tw(t, a) != m.tw(t, b)) return m.tw(t, a) > m.tw(t, b);
      return vocab.token(static_cast<int>(a)) < vocab.token(static_cast<int>(b));
    });
    for (std::size_t i = 0; i < ids.size() && i < k; ++i) out[t].push_back(vocab.token(static_cast<int>(ids[i])));
  }
  return out;
}

inline void write_top_words(std::ostream& out, const std::vector<std::vector<std::string>>& topics) {
  for (std::size_t t = 0; t < topics.size(); ++t) out << "topic-" << t << '\t' << join(topics[t]) << '\n';
}

// Word ids for LDA: main-text tokens with specials dropped.
inline std::vector<std::vector<int>> lda_documents(const std::vector<Document>& docs, const Vocabulary& vocab) {
  std::vector<std::vector<int>> out;
  out.reserve(docs.size());
  for (const auto& d : docs) {
    std::vector<int> ids;
    for (const auto& t : d.text) {
      if (auto id = vocab.find(t); id && !vocab.is_special(*id)) ids.push_back(*id);
    }
    out.push_back(std::move(ids));
  }
  return out;
}

// Copies `docs` with category = "topic-<k>" from the fitted labels.
inline std::vector<Document> label_documents(std::vector<Document> docs, const std::vector<int>& labels) {
  if (labels.size() != docs.size()) throw Error("label_documents: label count mismatch");
  for (std::size_t i = 0; i < docs.size(); ++i) docs[i].category = "topic-" + std::to_string(labels[i]);
  return docs;
}

}  // namespace samlm
