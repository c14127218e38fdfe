#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <ostream>
#include <string>
#include <vector>

#include "samlm/corpus.hpp"
#include "samlm/model.hpp"
#include "samlm/parallel.hpp"

namespace samlm {

struct PerplexityReport {
  std::string model_id;
  std::string corpus_id;
  std::size_t tokens = 0;
  double total_nll = 0.0;
  double perplexity = 0.0;
  std::size_t unk_tokens = 0;
  double unk_nll = 0.0;

  double mean_nll() const { return total_nll / static_cast<double>(tokens); }
};

inline PerplexityReport make_report(std::string model_id, std::string corpus_id, std::size_t tokens, double total_nll,
                                    std::size_t unk_tokens = 0, double unk_nll = 0.0) {
  if (tokens == 0) throw Error("perplexity: no tokens to score");
  PerplexityReport r;
  r.model_id = std::move(model_id);
  r.corpus_id = std::move(corpus_id);
  r.tokens = tokens;
  r.total_nll = total_nll;
  r.perplexity = std::exp(total_nll / static_cast<double>(tokens));
  r.unk_tokens = unk_tokens;
  r.unk_nll = unk_nll;
  return r;
}

// Per-document NLL vectors in document order. Parallel over documents; the
// result does not depend on the thread count.
inline std::vector<DocumentPass> score_documents(const SamModel& model, const std::vector<IndexedDocument>& docs,
                                                 std::size_t threads = worker_threads()) {
  std::vector<DocumentPass> passes(docs.size());
  parallel_shards(docs.size(), threads, [&](std::size_t begin, std::size_t end, std::size_t) {
    for (std::size_t i = begin; i < end; ++i) passes[i] = forward_document(model, docs[i], false);
  });
  return passes;
}

// Scores main-text tokens (EOS and UNK included); titles are conditioning
// only and never scored.
inline PerplexityReport perplexity(const SamModel& model, const std::vector<IndexedDocument>& docs,
                                   std::string model_id = "model", std::string corpus_id = "corpus",
                                   std::size_t threads = worker_threads()) {
  const auto passes = score_documents(model, docs, threads);
  std::size_t tokens = 0, unk = 0;
  double total = 0.0, unk_nll = 0.0;
  for (const auto& pass : passes) {
    for (std::size_t i = 0; i < pass.tokens(); ++i) {
      total += pass.per_word_nll[i];
      if (pass.targets[i] == Vocabulary::kUnkId) {
        ++unk;
        unk_nll += pass.per_word_nll[i];
      }
    }
    tokens += pass.tokens();
  }
  return make_report(std::move(model_id), std::move(corpus_id), tokens, total, unk, unk_nll);
}

inline void write_perplexity_csv(std::ostream& out, const std::vector<PerplexityReport>& reports) {
  out << "model,corpus,tokens,total_nll,perplexity,unk_tokens,unk_nll\n";
  out.precision(10);
  for (const auto& r : reports) {
    out << r.model_id << ',' << r.corpus_id << ',' << r.tokens << ',' << r.total_nll << ',' << r.perplexity << ','
        << r.unk_tokens << ',' << r.unk_nll << '\n';
  }
}

struct WordDelta {
  std::string word;
  double mean_delta = 0.0;  // mean NLL(model_b) - NLL(model_a), nats
  std::size_t count = 0;
};

struct CategoryDeltas {
  std::string category;
  std::vector<WordDelta> improved;
  std::vector<WordDelta> alike;
  std::vector<WordDelta> worse;
};

struct WordDeltaReport {
  std::vector<CategoryDeltas> categories;
};

struct DeltaThresholds {
  double threshold = 0.05;  // |mean delta| >= threshold -> improved/worse
  std::size_t min_count = 5;
};

// Per-category comparison of two models on the same documents. Documents
// without a category are grouped under "all".
inline WordDeltaReport word_delta(const SamModel& model_a, const SamModel& model_b,
                                  const std::vector<IndexedDocument>& docs, const Vocabulary& vocab,
                                  const AttributeInventory& attrs, const DeltaThresholds& th = {}) {
  if (model_a.config.vocab_size != model_b.config.vocab_size || model_a.config.vocab_size != vocab.size()) {
    throw Error("word_delta: models do not share a vocabulary");
  }
  const auto pa = score_documents(model_a, docs);
  const auto pb = score_documents(model_b, docs);

  struct Acc {
    double sum = 0.0;
    std::size_t count = 0;
  };
  std::map<std::string, std::map<int, Acc>> by_category;
  for (std::size_t d = 0; d < docs.size(); ++d) {
    const std::string cat =
        docs[d].category_id ? attrs.categories.token(*docs[d].category_id) : std::string("all");
    auto& accs = by_category[cat];
    for (std::size_t i = 0; i < pa[d].tokens(); ++i) {
      auto& acc = accs[pa[d].targets[i]];
      acc.sum += pb[d].per_word_nll[i] - pa[d].per_word_nll[i];
      ++acc.count;
    }
  }

  WordDeltaReport report;
  for (const auto& [cat, accs] : by_category) {
    CategoryDeltas cd;
    cd.category = cat;
    for (const auto& [id, acc] : accs) {
      if (acc.count < th.min_count) continue;
      WordDelta wd{vocab.token(id), acc.sum / static_cast<double>(acc.count), acc.count};
      if (wd.mean_delta <= -th.threshold) {
        cd.improved.push_back(wd);
      } else if (wd.mean_delta >= th.threshold) {
        cd.worse.push_back(wd);
      } else {
        cd.alike.push_back(wd);
      }
    }
    auto by_word = [](const WordDelta& a, const WordDelta& b) { return a.word < b.word; };
    std::sort(cd.improved.begin(), cd.improved.end(), by_word);
    std::sort(cd.alike.begin(), cd.alike.end(), by_word);
    std::sort(cd.worse.begin(), cd.worse.end(), by_word);
    std::stable_sort(cd.improved.begin(), cd.improved.end(),
                     [](const auto& a, const auto& b) { return a.mean_delta < b.mean_delta; });
    std::stable_sort(cd.worse.begin(), cd.worse.end(),
                     [](const auto& a, const auto& b) { return a.mean_delta > b.mean_delta; });
    std::stable_sort(cd.alike.begin(), cd.alike.end(), [](const auto& a, const auto& b) {
      return std::abs(a.mean_delta) < std::abs(b.mean_delta);
    });
    report.categories.push_back(std::move(cd));
  }
  return report;
}

inline void write_word_delta_csv(std::ostream& out, const WordDeltaReport& report) {
  out << "category,bucket,rank,word,mean_delta,count\n";
  out.precision(6);
  for (const auto& cd : report.categories) {
    auto rows = [&](const char* bucket, const std::vector<WordDelta>& list) {
      for (std::size_t i = 0; i < list.size(); ++i) {
        out << cd.category << ',' << bucket << ',' << i + 1 << ',' << list[i].word << ',' << std::fixed
            << list[i].mean_delta << std::defaultfloat << ',' << list[i].count << '\n';
      }
    };
    rows("improved", cd.improved);
    rows("alike", cd.alike);
    rows("worse", cd.worse);
  }
}

// Side-by-side text table of the top `k` words per bucket.
inline void write_word_delta_table(std::ostream& out, const WordDeltaReport& report, std::size_t k = 10) {
  for (const auto& cd : report.categories) {
    out << "category: " << cd.category << '\n';
    out << "  improved                 alike                    worse\n";
    for (std::size_t i = 0; i < k; ++i) {
      auto cell = [&](const std::vector<WordDelta>& list) {
        std::string s = i < list.size() ? list[i].word : "";
        s.resize(std::max<std::size_t>(s.size(), 25), ' ');
        return s;
      };
      if (i >= cd.improved.size() && i >= cd.alike.size() && i >= cd.worse.size()) break;
      out << "  " << cell(cd.improved) << cell(cd.alike) << cell(cd.worse) << '\n';
    }
  }
}

}  // namespace samlm
