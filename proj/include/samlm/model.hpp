#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "samlm/attention.hpp"
#include "samlm/corpus.hpp"
#include "samlm/gru.hpp"
#include "samlm/tensor.hpp"

namespace samlm {

enum class Variant {
  Rnn,
  RnnState,
  RnnBow,
  SamCat,
  SamTitleAtt,
  SamTitleAttState,
  SamAuAtt,
  SamTitleAuAtt,
  SamTitleStateAuAtt,
};

inline constexpr std::array<Variant, 9> kAllVariants{
    Variant::Rnn,         Variant::RnnState, Variant::RnnBow,        Variant::SamCat,
    Variant::SamTitleAtt, Variant::SamTitleAttState, Variant::SamAuAtt, Variant::SamTitleAuAtt,
    Variant::SamTitleStateAuAtt};

inline std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::Rnn: return "RNN";
    case Variant::RnnState: return "RNN-State";
    case Variant::RnnBow: return "RNN-BOW";
    case Variant::SamCat: return "SAM-Cat";
    case Variant::SamTitleAtt: return "SAM-Title-Att";
    case Variant::SamTitleAttState: return "SAM-Title-Att-State";
    case Variant::SamAuAtt: return "SAM-Au-Att";
    case Variant::SamTitleAuAtt: return "SAM-Title-Au-Att";
    case Variant::SamTitleStateAuAtt: return "SAM-Title-State-Au-Att";
  }
  return "?";
}

inline Variant parse_variant(std::string_view name) {
  for (Variant v : kAllVariants) {
    if (to_string(v) == name) return v;
  }
  throw Error("unknown variant '" + std::string(name) + "'");
}

// Which attributes a variant reads and how.
struct VariantTraits {
  bool title_encoder = false;    // runs the title GRU
  bool title_attention = false;  // title context is an attention candidate
  bool title_state = false;      // h0 from the title's last state
  bool bow = false;              // projected mean title embedding as context
  bool author = false;
  bool category = false;

  std::size_t candidates() const {
    return static_cast<std::size_t>(title_attention) + static_cast<std::size_t>(author) +
           static_cast<std::size_t>(category);
  }
  bool uses_context() const { return bow || candidates() > 0; }
  bool needs_title() const { return title_encoder || bow; }
};

inline VariantTraits traits_of(Variant v) {
  VariantTraits t;
  switch (v) {
    case Variant::Rnn: break;
    case Variant::RnnState: t.title_encoder = t.title_state = true; break;
    case Variant::RnnBow: t.bow = true; break;
    case Variant::SamCat: t.category = true; break;
    case Variant::SamTitleAtt: t.title_encoder = t.title_attention = true; break;
    case Variant::SamTitleAttState: t.title_encoder = t.title_attention = t.title_state = true; break;
    case Variant::SamAuAtt: t.author = true; break;
    case Variant::SamTitleAuAtt: t.title_encoder = t.title_attention = t.author = true; break;
    case Variant::SamTitleStateAuAtt:
      t.title_encoder = t.title_attention = t.title_state = t.author = true;
      break;
  }
  return t;
}

struct ModelConfig {
  Variant variant = Variant::Rnn;
  std::size_t hidden = 200;    // d; also the word embedding size
  std::size_t attr_dim = 200;  // d~
  std::size_t vocab_size = 0;
  std::size_t n_authors = 1;
  std::size_t n_categories = 1;
  std::uint64_t seed = 1;
  double init_bound = 0.1;

  void validate() const {
    if (hidden < 1 || attr_dim < 1) throw Error("model config: dimensions must be at least 1");
    if (vocab_size < 4) throw Error("model config: vocabulary too small");
    const auto t = traits_of(variant);
    if (t.author && n_authors < 1) throw Error("model config: " + std::string(to_string(variant)) + " needs authors");
    if (t.category && n_categories < 1) {
      throw Error("model config: " + std::string(to_string(variant)) + " needs categories");
    }
  }

  nlohmann::json to_json() const {
    return {{"variant", std::string(to_string(variant))},
            {"hidden", hidden},
            {"attr_dim", attr_dim},
            {"vocab_size", vocab_size},
            {"n_authors", n_authors},
            {"n_categories", n_categories},
            {"seed", seed},
            {"init_bound", init_bound}};
  }

  static ModelConfig from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.variant = parse_variant(j.at("variant").get<std::string>());
    c.hidden = j.at("hidden").get<std::size_t>();
    c.attr_dim = j.at("attr_dim").get<std::size_t>();
    c.vocab_size = j.at("vocab_size").get<std::size_t>();
    c.n_authors = j.value("n_authors", std::size_t{1});
    c.n_categories = j.value("n_categories", std::size_t{1});
    c.seed = j.value("seed", std::uint64_t{1});
    c.init_bound = j.value("init_bound", 0.1);
    return c;
  }
};

struct SamModel {
  ModelConfig config;
  VariantTraits traits;
  ParamStore params;

  ParamId embedding = 0;   // vocab x d, row = E^T x
  ParamId out_weight = 0;  // vocab x d
  ParamId out_bias = 0;    // vocab x 1
  GruCell main;
  std::optional<GruCell> title_encoder;
  std::optional<TitleAttention> title_attention;
  std::optional<AttributeAttention> attribute_attention;  // only when K >= 2
  std::optional<ParamId> author_table;    // n_authors x d~
  std::optional<ParamId> category_table;  // n_categories x d~
  std::optional<ParamId> state_weight;    // d x d~
  std::optional<ParamId> state_bias;      // d x 1
  std::optional<ParamId> bow_projection;  // d~ x d

  std::size_t input_dim() const { return config.hidden + (traits.uses_context() ? config.attr_dim : 0); }

  std::vector<std::string> attribute_names() const {
    std::vector<std::string> names;
    if (traits.title_attention) names.emplace_back("title");
    if (traits.author) names.emplace_back("author");
    if (traits.category) names.emplace_back("category");
    return names;
  }
};

namespace detail {
inline void bind_parameters(SamModel& m) {
  const ParamStore& p = m.params;
  m.traits = traits_of(m.config.variant);
  m.embedding = p.id("embedding");
  m.out_weight = p.id("output.weight");
  m.out_bias = p.id("output.bias");
  m.main = GruCell::bind(p, "main");
  if (m.traits.title_encoder) m.title_encoder = GruCell::bind(p, "title");
  if (m.traits.title_attention) m.title_attention = TitleAttention{p.id("title_attention.M1")};
  if (m.traits.candidates() >= 2) m.attribute_attention = AttributeAttention{p.id("attribute_attention.M2")};
  if (m.traits.author) m.author_table = p.id("author.table");
  if (m.traits.category) m.category_table = p.id("category.table");
  if (m.traits.title_state) {
    m.state_weight = p.id("state_init.weight");
    m.state_bias = p.id("state_init.bias");
  }
  if (m.traits.bow) m.bow_projection = p.id("bow.projection");

  const auto& cfg = m.config;
  auto expect = [&](ParamId id, std::size_t rows, std::size_t cols) {
    if (p.value(id).rows() != rows || p.value(id).cols() != cols) {
      throw Error("parameter '" + p.name(id) + "' has shape " + std::to_string(p.value(id).rows()) + "x" +
                  std::to_string(p.value(id).cols()) + ", config expects " + std::to_string(rows) + "x" +
                  std::to_string(cols));
    }
  };
  expect(m.embedding, cfg.vocab_size, cfg.hidden);
  expect(m.out_weight, cfg.vocab_size, cfg.hidden);
  expect(m.out_bias, cfg.vocab_size, 1);
  if (m.main.hidden_dim != cfg.hidden || m.main.input_dim != m.input_dim()) throw Error("main GRU shape mismatch");
  if (m.title_encoder && (m.title_encoder->input_dim != cfg.hidden || m.title_encoder->hidden_dim != cfg.attr_dim)) {
    throw Error("title GRU shape mismatch");
  }
  if (m.title_attention) expect(m.title_attention->M1, cfg.attr_dim, cfg.hidden);
  if (m.attribute_attention) expect(m.attribute_attention->M2, cfg.attr_dim, cfg.hidden);
  if (m.author_table) expect(*m.author_table, cfg.n_authors, cfg.attr_dim);
  if (m.category_table) expect(*m.category_table, cfg.n_categories, cfg.attr_dim);
  if (m.state_weight) {
    expect(*m.state_weight, cfg.hidden, cfg.attr_dim);
    expect(*m.state_bias, cfg.hidden, 1);
  }
  if (m.bow_projection) expect(*m.bow_projection, cfg.attr_dim, cfg.hidden);
}
}  // namespace detail

// Weights ~ U(-b, b), biases zero, all drawn from one stream seeded by
// config.seed in a fixed creation order.
inline SamModel build_model(const ModelConfig& config) {
  config.validate();
  SamModel m;
  m.config = config;
  const auto t = traits_of(config.variant);
  const std::size_t d = config.hidden, da = config.attr_dim;
  Rng rng(config.seed);
  auto uniform = [&](std::size_t rows, std::size_t cols) {
    Mat w(rows, cols);
    init_uniform(w, rng, config.init_bound);
    return w;
  };

  m.params.add("embedding", uniform(config.vocab_size, d));
  m.params.add("output.weight", uniform(config.vocab_size, d));
  m.params.add("output.bias", Mat(config.vocab_size, 1));
  GruCell::create(m.params, "main", d + (t.uses_context() ? da : 0), d, rng, config.init_bound);
  if (t.title_encoder) GruCell::create(m.params, "title", d, da, rng, config.init_bound);
  if (t.title_attention) m.params.add("title_attention.M1", uniform(da, d));
  if (t.candidates() >= 2) m.params.add("attribute_attention.M2", uniform(da, d));
  if (t.author) m.params.add("author.table", uniform(config.n_authors, da));
  if (t.category) m.params.add("category.table", uniform(config.n_categories, da));
  if (t.title_state) {
    m.params.add("state_init.weight", da == d ? Mat::identity(d) : uniform(d, da));
    m.params.add("state_init.bias", Mat(d, 1));
  }
  if (t.bow) m.params.add("bow.projection", uniform(da, d));
  detail::bind_parameters(m);
  return m;
}

inline SamModel bind_model(const ModelConfig& config, ParamStore params) {
  config.validate();
  SamModel m;
  m.config = config;
  m.params = std::move(params);
  detail::bind_parameters(m);
  return m;
}

// Per-document quantities that do not change across time steps.
struct DocumentContext {
  std::vector<int> title_ids;
  std::optional<int> author_id;
  std::optional<int> category_id;
  TitleEncoding title;
  Mat bow_mean;  // mean title embedding, d x 1
  Mat bow;       // projected, d~ x 1
  Mat author_embedding;
  Mat category_embedding;
  Mat h0;
};

struct StepCache {
  int input = 0;
  int target = 0;
  Mat h_prev;
  std::vector<Mat> candidates;
  std::optional<AttentionResult> title_attention;
  std::optional<AttentionResult> attribute_attention;
  GruCache gru;
  Mat h;
  Mat probs;
};

struct StepOutput {
  Mat logits;
  Mat h;
  Mat alpha;  // m x 1 when title attention is active
  Mat beta;   // K x 1 when any attention candidate exists
};

namespace detail {
inline void check_id(int id, std::size_t bound, const char* what, const std::string& doc_id) {
  if (id < 0 || static_cast<std::size_t>(id) >= bound) {
    throw Error(std::string(what) + " id " + std::to_string(id) + " out of range in document '" + doc_id + "'");
  }
}

inline std::string missing_attribute(const SamModel& m, const char* what, const std::string& doc_id) {
  return "variant " + std::string(to_string(m.config.variant)) + " requires a " + what + " (document '" + doc_id +
         "')";
}
}  // namespace detail

inline DocumentContext prepare_context(const SamModel& m, const std::string& doc_id, const std::vector<int>& title_ids,
                                       std::optional<int> author_id, std::optional<int> category_id) {
  DocumentContext ctx;
  const auto& t = m.traits;
  const auto& p = m.params;
  if (t.needs_title()) {
    if (title_ids.empty()) throw Error(detail::missing_attribute(m, "title", doc_id));
    for (int id : title_ids) detail::check_id(id, m.config.vocab_size, "title token", doc_id);
    ctx.title_ids = title_ids;
  }
  if (t.title_encoder) ctx.title = encode_title(*m.title_encoder, p, ctx.title_ids, m.embedding);
  if (t.bow) {
    ctx.bow_mean = Mat(m.config.hidden, 1);
    for (int id : ctx.title_ids) ctx.bow_mean += row_as_column(p.value(m.embedding), static_cast<std::size_t>(id));
    ctx.bow_mean *= 1.0 / static_cast<double>(ctx.title_ids.size());
    ctx.bow = matvec(p.value(*m.bow_projection), ctx.bow_mean);
  }
  if (t.author) {
    if (!author_id) throw Error(detail::missing_attribute(m, "author", doc_id));
    detail::check_id(*author_id, m.config.n_authors, "author", doc_id);
    ctx.author_id = author_id;
    ctx.author_embedding = row_as_column(p.value(*m.author_table), static_cast<std::size_t>(*author_id));
  }
  if (t.category) {
    if (!category_id) throw Error(detail::missing_attribute(m, "category", doc_id));
    detail::check_id(*category_id, m.config.n_categories, "category", doc_id);
    ctx.category_id = category_id;
    ctx.category_embedding = row_as_column(p.value(*m.category_table), static_cast<std::size_t>(*category_id));
  }
  if (t.title_state) {
    ctx.h0 = add(matvec(p.value(*m.state_weight), ctx.title.last()), p.value(*m.state_bias));
  } else {
    ctx.h0 = Mat(m.config.hidden, 1);
  }
  return ctx;
}

// One transition: context for step i from h_{i-1}, GRU over [E^T x_i, C_i],
// logits = Wout h_i + bout.
inline StepOutput step_forward(const SamModel& m, const DocumentContext& ctx, int input, const Mat& h_prev,
                               StepCache* cache) {
  const auto& p = m.params;
  const auto& t = m.traits;
  StepOutput out;
  Mat w = row_as_column(p.value(m.embedding), static_cast<std::size_t>(input));
  std::vector<Mat> candidates;
  std::optional<AttentionResult> title_att, attr_att;
  if (t.bow) {
    w = concat(w, ctx.bow);
  } else if (t.candidates() > 0) {
    if (t.title_attention) {
      title_att = title_context(*m.title_attention, p, ctx.title, h_prev);
      out.alpha = title_att->weights;
      candidates.push_back(title_att->context);
    }
    if (t.author) candidates.push_back(ctx.author_embedding);
    if (t.category) candidates.push_back(ctx.category_embedding);
    if (candidates.size() >= 2) {
      attr_att = attribute_context(*m.attribute_attention, p, candidates, h_prev);
      out.beta = attr_att->weights;
      w = concat(w, attr_att->context);
    } else {
      out.beta = Mat(1, 1, 1.0);
      w = concat(w, candidates.front());
    }
  }
  out.h = gru_step(m.main, p, w, h_prev, cache ? &cache->gru : nullptr);
  out.logits = add(matvec(p.value(m.out_weight), out.h), p.value(m.out_bias));
  if (cache) {
    cache->input = input;
    cache->h_prev = h_prev;
    cache->candidates = std::move(candidates);
    cache->title_attention = std::move(title_att);
    cache->attribute_attention = std::move(attr_att);
    cache->h = out.h;
  }
  return out;
}

struct DocumentPass {
  std::string doc_id;
  double total_nll = 0.0;
  std::vector<double> per_word_nll;  // one per text_ids entry, EOS included
  std::vector<int> targets;
  AttentionTrace trace;
  DocumentContext context;
  std::vector<StepCache> steps;  // empty unless caches were kept

  std::size_t tokens() const { return per_word_nll.size(); }
};

// Teacher-forced pass. Step 0 reads PAD as the BOS symbol and predicts
// text_ids[0]; step i reads text_ids[i-1] and predicts text_ids[i].
inline DocumentPass forward_document(const SamModel& m, const IndexedDocument& doc, bool keep_caches = true) {
  if (doc.text_ids.empty()) throw Error("document '" + doc.id + "' has no tokens");
  for (int id : doc.text_ids) detail::check_id(id, m.config.vocab_size, "text token", doc.id);

  DocumentPass pass;
  pass.doc_id = doc.id;
  pass.context = prepare_context(m, doc.id, doc.title_ids, doc.author_id, doc.category_id);
  pass.targets = doc.text_ids;
  const std::size_t n = doc.text_ids.size();
  pass.per_word_nll.reserve(n);
  if (keep_caches) pass.steps.resize(n);

  std::vector<Mat> alpha_cols, beta_cols;
  Mat h = pass.context.h0;
  for (std::size_t i = 0; i < n; ++i) {
    const int input = i == 0 ? Vocabulary::kPadId : doc.text_ids[i - 1];
    const int target = doc.text_ids[i];
    StepCache* cache = keep_caches ? &pass.steps[i] : nullptr;
    StepOutput out = step_forward(m, pass.context, input, h, cache);
    const double nll = log_sum_exp(out.logits) - out.logits[static_cast<std::size_t>(target)];
    pass.per_word_nll.push_back(nll);
    pass.total_nll += nll;
    if (!out.alpha.empty()) alpha_cols.push_back(std::move(out.alpha));
    if (!out.beta.empty()) beta_cols.push_back(std::move(out.beta));
    if (cache) {
      cache->target = target;
      cache->probs = softmax(out.logits);
    }
    h = std::move(out.h);
  }
  pass.trace.alpha = stack_columns(alpha_cols);
  pass.trace.beta = stack_columns(beta_cols);
  if (!pass.trace.beta.empty()) pass.trace.attribute_names = m.attribute_names();
  return pass;
}

// BPTT for loss = scale * total_nll, accumulated into `grads`.
inline void backward_document(const SamModel& m, const DocumentPass& pass, double scale, Grads& grads) {
  if (pass.steps.size() != pass.per_word_nll.size()) throw Error("backward_document: forward pass kept no caches");
  const auto& p = m.params;
  const auto& t = m.traits;
  const auto& ctx = pass.context;
  const std::size_t d = m.config.hidden;
  const std::size_t da = m.config.attr_dim;

  Mat dh_next(d, 1);
  std::vector<Mat> dtitle_states(ctx.title.length(), Mat(da, 1));
  Mat dauthor(da, 1), dcategory(da, 1), dbow(da, 1);

  for (std::size_t i = pass.steps.size(); i-- > 0;) {
    const StepCache& s = pass.steps[i];
    Mat dlogits = s.probs;
    dlogits[static_cast<std::size_t>(s.target)] -= 1.0;
    dlogits *= scale;
    add_outer(grads[m.out_weight], dlogits, s.h);
    grads[m.out_bias] += dlogits;
    Mat dh = matvec_transposed(p.value(m.out_weight), dlogits);
    dh += dh_next;

    auto g = gru_backward(m.main, p, s.gru, dh, grads);
    Mat dh_prev = std::move(g.dh_prev);
    add_to_row(grads[m.embedding], static_cast<std::size_t>(s.input), slice(g.dw, 0, d));

    if (t.uses_context()) {
      Mat dcontext = slice(g.dw, d, da);
      if (t.bow) {
        dbow += dcontext;
      } else {
        std::vector<Mat> dcands;
        if (s.attribute_attention) {
          auto ag = attend_backward(p.value(m.attribute_attention->M2), s.candidates, s.h_prev,
                                    *s.attribute_attention, dcontext, grads[m.attribute_attention->M2]);
          dh_prev += ag.dh_prev;
          dcands = std::move(ag.dcandidates);
        } else {
          dcands.push_back(std::move(dcontext));
        }
        std::size_t k = 0;
        if (t.title_attention) {
          auto tg = attend_backward(p.value(m.title_attention->M1), ctx.title.states, s.h_prev, *s.title_attention,
                                    dcands[k++], grads[m.title_attention->M1]);
          dh_prev += tg.dh_prev;
          for (std::size_t j = 0; j < dtitle_states.size(); ++j) dtitle_states[j] += tg.dcandidates[j];
        }
        if (t.author) dauthor += dcands[k++];
        if (t.category) dcategory += dcands[k++];
      }
    }
    dh_next = std::move(dh_prev);
  }

  if (t.title_state) {
    add_outer(grads[*m.state_weight], dh_next, ctx.title.last());
    grads[*m.state_bias] += dh_next;
    dtitle_states.back() += matvec_transposed(p.value(*m.state_weight), dh_next);
  }
  if (t.author) add_to_row(grads[*m.author_table], static_cast<std::size_t>(*ctx.author_id), dauthor);
  if (t.category) add_to_row(grads[*m.category_table], static_cast<std::size_t>(*ctx.category_id), dcategory);
  if (t.bow) {
    add_outer(grads[*m.bow_projection], dbow, ctx.bow_mean);
    const Mat dmean = matvec_transposed(p.value(*m.bow_projection), dbow);
    const double inv = 1.0 / static_cast<double>(ctx.title_ids.size());
    for (int id : ctx.title_ids) add_to_row(grads[m.embedding], static_cast<std::size_t>(id), dmean, inv);
  }
  if (t.title_encoder) {
    encode_title_backward(*m.title_encoder, p, ctx.title_ids, m.embedding, ctx.title, dtitle_states, grads);
  }
}

// Stateful autoregressive interface shared by generation and teacher-forced
// scoring of arbitrary token paths.
struct Decoder {
  const SamModel* model = nullptr;
  DocumentContext context;
  Mat h;

  Decoder(const SamModel& m, const std::string& doc_id, const std::vector<int>& title_ids,
          std::optional<int> author_id, std::optional<int> category_id)
      : model(&m), context(prepare_context(m, doc_id, title_ids, author_id, category_id)), h(context.h0) {}

  StepOutput step(int input) {
    detail::check_id(input, model->config.vocab_size, "input token", "decoder");
    StepOutput out = step_forward(*model, context, input, h, nullptr);
    h = out.h;
    return out;
  }
};

}  // namespace samlm
