#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "samlm/corpus.hpp"
#include "samlm/eval.hpp"

namespace samlm {

// Interpolated Kneser-Ney with one absolute discount per order.
//
// Adjusted counts: the highest order, and any n-gram that starts with the
// BOS symbol, use raw counts; every other lower-order n-gram uses the number
// of distinct left extensions seen one order up. Documents are scored as
// BOS x_1 ... x_n with x_n = EOS; PAD serves as BOS and is never predicted,
// so distributions range over the remaining |V| - 1 ids.
class NgramModel {
 public:
  using Key = std::vector<int>;

  struct ContextStats {
    double total = 0.0;        // sum of adjusted counts over followers
    std::size_t distinct = 0;  // number of followers with a nonzero count
  };

  NgramModel() = default;

  static NgramModel fit(const std::vector<IndexedDocument>& docs, std::size_t vocab_size, std::size_t order = 5) {
    if (order < 1) throw Error("ngram: order must be at least 1");
    if (docs.empty()) throw Error("ngram: empty corpus");
    NgramModel m;
    m.order_ = order;
    m.vocab_size_ = vocab_size;
    std::vector<std::map<Key, double>> raw(order + 1);
    for (const auto& doc : docs) {
      std::vector<int> s;
      s.reserve(doc.text_ids.size() + 1);
      s.push_back(kBos);
      s.insert(s.end(), doc.text_ids.begin(), doc.text_ids.end());
      for (std::size_t j = 1; j < s.size(); ++j) {
        for (std::size_t k = 1; k <= order && k <= j + 1; ++k) {
          raw[k][Key(s.begin() + static_cast<std::ptrdiff_t>(j + 1 - k), s.begin() + static_cast<std::ptrdiff_t>(j + 1))] += 1.0;
        }
      }
    }
    m.counts_.assign(order + 1, {});
    m.counts_[order] = raw[order];
    for (std::size_t k = 1; k < order; ++k) {
      for (const auto& [key, c] : raw[k]) {
        if (key.front() == kBos) m.counts_[k][key] = c;
      }
      for (const auto& [key, c] : raw[k + 1]) {
        m.counts_[k][Key(key.begin() + 1, key.end())] += 1.0;
      }
    }
    m.estimate_discounts();
    m.build_context_tables();
    return m;
  }

  std::size_t order() const { return order_; }
  std::size_t vocab_size() const { return vocab_size_; }
  const std::vector<double>& discounts() const { return discounts_; }
  const std::map<Key, double>& counts(std::size_t k) const { return counts_.at(k); }

  // P(w | history); only the last order-1 history tokens are used.
  double prob(std::span<const int> history, int w) const {
    const std::size_t h = std::min(history.size(), order_ - 1);
    return prob_at(history.subspan(history.size() - h), w);
  }

  double log_prob(std::span<const int> history, int w) const { return std::log(prob(history, w)); }

  // NLL of each main-text token of one document, EOS included.
  std::vector<double> document_nll(const IndexedDocument& doc) const {
    std::vector<int> s{kBos};
    std::vector<double> out;
    for (int w : doc.text_ids) {
      out.push_back(-log_prob(s, w));
      s.push_back(w);
    }
    return out;
  }

  PerplexityReport perplexity(const std::vector<IndexedDocument>& docs, std::string corpus_id = "corpus") const {
    std::size_t tokens = 0, unk = 0;
    double total = 0.0, unk_nll = 0.0;
    for (const auto& d : docs) {
      const auto nll = document_nll(d);
      for (std::size_t i = 0; i < nll.size(); ++i) {
        total += nll[i];
        if (d.text_ids[i] == Vocabulary::kUnkId) {
          ++unk;
          unk_nll += nll[i];
        }
      }
      tokens += nll.size();
    }
    return make_report(std::to_string(order_) + "-gram-kn", std::move(corpus_id), tokens, total, unk, unk_nll);
  }

  // First line: JSON header. Then "order<TAB>ids<TAB>adjusted_count" lines,
  // sorted by order and then by id sequence.
  void save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write n-gram model: " + path.string());
    nlohmann::json header{{"format", "samlm-ngram"},
                          {"version", 1},
                          {"smoothing", "interpolated-kneser-ney-single-discount"},
                          {"order", order_},
                          {"vocab_size", vocab_size_},
                          {"bos", kBos},
                          {"discounts", std::vector<double>(discounts_.begin() + 1, discounts_.end())}};
    out << header.dump() << '\n';
    for (std::size_t k = 1; k <= order_; ++k) {
      for (const auto& [key, c] : counts_[k]) {
        out << k << '\t';
        for (std::size_t i = 0; i < key.size(); ++i) out << (i ? " " : "") << key[i];
        out << '\t' << static_cast<long long>(c) << '\n';
      }
    }
  }

  static NgramModel load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot read n-gram model: " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw Error("n-gram model has no header");
    const auto header = nlohmann::json::parse(line);
    if (header.value("format", "") != "samlm-ngram") throw Error("not a samlm n-gram model: " + path.string());
    NgramModel m;
    m.order_ = header.at("order").get<std::size_t>();
    m.vocab_size_ = header.at("vocab_size").get<std::size_t>();
    m.counts_.assign(m.order_ + 1, {});
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      std::istringstream fields(line);
      std::string k_str, ids, count;
      std::getline(fields, k_str, '\t');
      std::getline(fields, ids, '\t');
      std::getline(fields, count, '\t');
      std::istringstream id_stream(ids);
      Key key;
      int id = 0;
      while (id_stream >> id) key.push_back(id);
      m.counts_.at(std::stoul(k_str))[key] = std::stod(count);
    }
    m.estimate_discounts();
    m.build_context_tables();
    return m;
  }

  static constexpr int kBos = Vocabulary::kPadId;

 private:
  double prob_at(std::span<const int> history, int w) const {
    if (history.empty()) {
      const auto& [total, distinct] = unigram_stats_;
      const double uniform = 1.0 / static_cast<double>(vocab_size_ - 1);
      const double d = discounts_[1];
      const double c = lookup(1, Key{w});
      return std::max(c - d, 0.0) / total + d * static_cast<double>(distinct) / total * uniform;
    }
    const std::size_t k = history.size() + 1;
    const double lower = prob_at(history.subspan(1), w);
    const auto it = contexts_[k].find(Key(history.begin(), history.end()));
    if (it == contexts_[k].end()) return lower;
    const auto& [total, distinct] = it->second;
    Key full(history.begin(), history.end());
    full.push_back(w);
    const double d = discounts_[k];
    return std::max(lookup(k, full) - d, 0.0) / total + d * static_cast<double>(distinct) / total * lower;
  }

  double lookup(std::size_t k, const Key& key) const {
    const auto it = counts_[k].find(key);
    return it == counts_[k].end() ? 0.0 : it->second;
  }

  // D = n1 / (n1 + 2 n2) over adjusted counts; 0.5 when that is outside (0, 1].
  void estimate_discounts() {
    discounts_.assign(order_ + 1, 0.0);
    for (std::size_t k = 1; k <= order_; ++k) {
      double n1 = 0, n2 = 0;
      for (const auto& [key, c] : counts_[k]) {
        if (c == 1.0) ++n1;
        if (c == 2.0) ++n2;
      }
      const double d = n1 > 0 ? n1 / (n1 + 2.0 * n2) : 0.0;
      discounts_[k] = (d > 0.0 && d <= 1.0) ? d : 0.5;
    }
  }

  void build_context_tables() {
    contexts_.assign(order_ + 1, {});
    unigram_stats_ = {};
    for (const auto& [key, c] : counts_[1]) {
      unigram_stats_.total += c;
      ++unigram_stats_.distinct;
    }
    if (unigram_stats_.total <= 0.0) throw Error("ngram: no unigram counts");
    for (std::size_t k = 2; k <= order_; ++k) {
      for (const auto& [key, c] : counts_[k]) {
        auto& stats = contexts_[k][Key(key.begin(), key.end() - 1)];
        stats.total += c;
        ++stats.distinct;
      }
    }
  }

  std::size_t order_ = 0;
  std::size_t vocab_size_ = 0;
  std::vector<std::map<Key, double>> counts_;  // index = n-gram length
  std::vector<std::map<Key, ContextStats>> contexts_;
  ContextStats unigram_stats_;
  std::vector<double> discounts_;
};

}  // namespace samlm
