#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "samlm/attention.hpp"
#include "samlm/corpus.hpp"
#include "samlm/model.hpp"

namespace samlm {

enum class Strategy { Greedy, Sample };

inline Strategy parse_strategy(std::string_view s) {
  if (s == "greedy") return Strategy::Greedy;
  if (s == "sample") return Strategy::Sample;
  throw Error("unknown decoding strategy '" + std::string(s) + "' (expected greedy or sample)");
}

struct Vocabularies {
  Vocabulary words = Vocabulary::words();
  AttributeInventory attrs;
};

struct GenRequest {
  Tokens title;
  std::optional<std::string> author;
  std::optional<std::string> category;
  std::size_t max_len = 50;
  double temperature = 1.0;
  Strategy strategy = Strategy::Greedy;
  std::uint64_t seed = 1;
};

struct GenResult {
  Tokens title;
  Tokens tokens;  // ends with <eos> when generation terminated on EOS
  std::vector<int> ids;
  std::vector<double> probabilities;
  AttentionTrace trace;
  std::vector<std::string> warnings;
};

// Masked, temperature-scaled next-token distribution. PAD (the BOS symbol)
// and UNK get zero mass; the rest is renormalized.
inline Mat next_token_distribution(const Mat& logits, double temperature) {
  if (!(temperature > 0.0)) throw Error("temperature must be positive");
  Mat scaled(logits.rows(), 1, -std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    if (static_cast<int>(i) == Vocabulary::kPadId || static_cast<int>(i) == Vocabulary::kUnkId) continue;
    scaled[i] = logits[i] / temperature;
  }
  return softmax(scaled);
}

// Lowest index among the maxima, skipping masked ids.
inline int greedy_choice(const Mat& logits) {
  int best = -1;
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    const int id = static_cast<int>(i);
    if (id == Vocabulary::kPadId || id == Vocabulary::kUnkId) continue;
    if (best < 0 || logits[i] > logits[static_cast<std::size_t>(best)]) best = id;
  }
  return best;
}

inline int sample_index(const Mat& probs, Rng& rng) {
  const double u = rng.uniform();
  double acc = 0.0;
  int last_positive = 0;
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    if (probs[i] <= 0.0) continue;
    acc += probs[i];
    last_positive = static_cast<int>(i);
    if (u < acc) return last_positive;
  }
  return last_positive;
}

struct ResolvedConditioning {
  std::vector<int> title_ids;
  std::optional<int> author_id;
  std::optional<int> category_id;
  std::vector<std::string> warnings;
};

inline ResolvedConditioning resolve(const SamModel& model, const Vocabularies& vocabs, const GenRequest& req) {
  ResolvedConditioning rc;
  const auto& t = model.traits;
  if (t.needs_title()) {
    for (const auto& tok : req.title) {
      const auto id = vocabs.words.find(tok);
      if (!id) rc.warnings.push_back("title token '" + tok + "' is out of vocabulary; using <unk>");
      rc.title_ids.push_back(id.value_or(Vocabulary::kUnkId));
    }
  } else if (!req.title.empty()) {
    rc.warnings.push_back("title ignored by variant " + std::string(to_string(model.config.variant)));
  }
  auto attribute = [&](const std::optional<std::string>& value, const Vocabulary& inv, bool used, const char* what)
      -> std::optional<int> {
    if (!value) return std::nullopt;
    if (!used) {
      rc.warnings.push_back(std::string(what) + " ignored by variant " + std::string(to_string(model.config.variant)));
      return std::nullopt;
    }
    const auto id = inv.find(*value);
    if (!id) rc.warnings.push_back(std::string(what) + " '" + *value + "' is unknown; using <unk> " + what);
    return id.value_or(Vocabulary::kUnkId);
  };
  rc.author_id = attribute(req.author, vocabs.attrs.authors, t.author, "author");
  rc.category_id = attribute(req.category, vocabs.attrs.categories, t.category, "category");
  return rc;
}

inline GenResult generate(const SamModel& model, const Vocabularies& vocabs, const GenRequest& req) {
  if (req.max_len < 1) throw Error("generate: max_len must be at least 1");
  if (req.strategy == Strategy::Sample && !(req.temperature > 0.0)) throw Error("generate: temperature must be positive");
  auto rc = resolve(model, vocabs, req);
  GenResult result;
  result.warnings = std::move(rc.warnings);
  for (int id : rc.title_ids) result.title.push_back(vocabs.words.token(id));

  Decoder decoder(model, "request", rc.title_ids, rc.author_id, rc.category_id);
  Rng rng(req.seed);
  std::vector<Mat> alpha_cols, beta_cols;
  int input = Vocabulary::kPadId;
  for (std::size_t step = 0; step < req.max_len; ++step) {
    StepOutput out = decoder.step(input);
    int chosen = 0;
    double p = 0.0;
    if (req.strategy == Strategy::Greedy) {
      chosen = greedy_choice(out.logits);
      p = next_token_distribution(out.logits, 1.0)[static_cast<std::size_t>(chosen)];
    } else {
      const Mat probs = next_token_distribution(out.logits, req.temperature);
      chosen = sample_index(probs, rng);
      p = probs[static_cast<std::size_t>(chosen)];
    }
    if (!out.alpha.empty()) alpha_cols.push_back(std::move(out.alpha));
    if (!out.beta.empty()) beta_cols.push_back(std::move(out.beta));
    result.ids.push_back(chosen);
    result.tokens.push_back(vocabs.words.token(chosen));
    result.probabilities.push_back(p);
    if (chosen == Vocabulary::kEosId) break;
    input = chosen;
  }
  result.trace.alpha = stack_columns(alpha_cols);
  result.trace.beta = stack_columns(beta_cols);
  if (!result.trace.beta.empty()) result.trace.attribute_names = model.attribute_names();
  return result;
}

inline double kl_divergence(const Mat& p, const Mat& q) {
  double kl = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] > 0.0) kl += p[i] * std::log(p[i] / q[i]);
  }
  return kl;
}

// Jensen-Shannon divergence in nats (at most ln 2).
inline double js_divergence(const Mat& p, const Mat& q) {
  Mat mid(p.rows(), 1);
  for (std::size_t i = 0; i < p.size(); ++i) mid[i] = 0.5 * (p[i] + q[i]);
  return 0.5 * kl_divergence(p, mid) + 0.5 * kl_divergence(q, mid);
}

struct StyleVariation {
  GenResult original;
  GenResult varied;
  double divergence = 0.0;     // mean per-step JS along the original's path
  double token_overlap = 0.0;  // Jaccard overlap of the two token sets
};

// Regenerates `source` with the author replaced by `fake_author`; title,
// category and decoding settings (from `settings`) are shared.
inline StyleVariation style_variation(const SamModel& model, const Vocabularies& vocabs, const Document& source,
                                      const std::string& fake_author, const GenRequest& settings = {}) {
  if (!model.traits.author) {
    throw Error("style variation needs an author-conditioned variant, got " + std::string(to_string(model.config.variant)));
  }
  GenRequest req = settings;
  req.title = source.title.value_or(Tokens{});
  req.category = source.category;
  req.author = source.author;
  if (!req.author) throw Error("style variation: source document '" + source.id + "' has no author");

  StyleVariation sv;
  sv.original = generate(model, vocabs, req);
  req.author = fake_author;
  sv.varied = generate(model, vocabs, req);

  GenRequest orig_req = req;
  orig_req.author = source.author;
  const auto rc_orig = resolve(model, vocabs, orig_req);
  const auto rc_fake = resolve(model, vocabs, req);
  Decoder a(model, source.id, rc_orig.title_ids, rc_orig.author_id, rc_orig.category_id);
  Decoder b(model, source.id, rc_fake.title_ids, rc_fake.author_id, rc_fake.category_id);
  double total = 0.0;
  int input = Vocabulary::kPadId;
  for (int id : sv.original.ids) {
    const Mat pa = softmax(a.step(input).logits);
    const Mat pb = softmax(b.step(input).logits);
    total += js_divergence(pa, pb);
    input = id;
  }
  sv.divergence = total / static_cast<double>(sv.original.ids.size());

  const std::set<std::string> sa(sv.original.tokens.begin(), sv.original.tokens.end());
  const std::set<std::string> sb(sv.varied.tokens.begin(), sv.varied.tokens.end());
  std::size_t shared = 0;
  for (const auto& t : sa) shared += sb.count(t);
  const std::size_t uni = sa.size() + sb.size() - shared;
  sv.token_overlap = uni == 0 ? 1.0 : static_cast<double>(shared) / static_cast<double>(uni);
  return sv;
}

inline void export_attention(const AttentionTrace& trace, const Tokens& title_tokens, const Tokens& text_tokens,
                             const std::filesystem::path& path) {
  if (trace.empty()) throw Error("export_attention: trace is empty");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write attention CSV: " + path.string());
  write_attention_csv(out, trace, title_tokens, text_tokens);
  if (!out) throw Error("failed writing attention CSV: " + path.string());
}

inline void export_attention(const GenResult& result, const std::filesystem::path& path) {
  export_attention(result.trace, result.title, result.tokens, path);
}

inline nlohmann::json to_json(const GenResult& r, const std::string& attention_csv_path = "") {
  nlohmann::json j;
  j["tokens"] = r.tokens;
  j["probabilities"] = r.probabilities;
  j["warnings"] = r.warnings;
  j["attention_csv_path"] = attention_csv_path;
  return j;
}

}  // namespace samlm
