#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "samlm/samlm.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace samlm;

namespace {

constexpr int kUsageError = 1;
constexpr int kRuntimeError = 2;

const std::vector<std::string> kCommands{"ingest",   "lda-label", "train", "eval",        "word-delta",
                                         "ngram",    "generate",  "vary",  "export-attn", "gradcheck"};

struct Common {
  std::string config;
  std::uint64_t seed = 1;
  std::string out = "samlm-out";
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "JSON config file; explicit flags override its values");
  cmd->add_option("--seed", c.seed, "Seed for every random choice")->capture_default_str();
  cmd->add_option("--out", c.out, "Output directory")->capture_default_str();
}

fs::path out_dir(const Common& c) {
  fs::create_directories(c.out);
  return fs::path(c.out);
}

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

Tokens read_title(const std::string& file, const std::string& text) {
  if (!file.empty()) {
    std::ifstream in(file);
    if (!in) throw Error("cannot read title file: " + file);
    std::string all((std::istreambuf_iterator<char>(in)), {});
    return tokenize(all);
  }
  return tokenize(text);
}

// Config values become command-line tokens placed before the user's own
// flags; options keep their last value, so explicit flags win.
std::vector<std::string> config_args(const json& cfg, const std::string& command, CLI::App* sub) {
  std::vector<std::string> args;
  auto emit = [&](const std::string& key, const json& value, bool strict) {
    const std::string flag = "--" + key;
    if (key == "config") return;
    try {
      sub->get_option(flag);
    } catch (const CLI::OptionNotFound&) {
      if (strict) throw CLI::ValidationError("config", "unknown key '" + key + "' for " + command);
      return;
    }
    auto scalar = [](const json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); };
    if (value.is_boolean()) {
      args.push_back(flag + "=" + (value.get<bool>() ? "true" : "false"));
      return;
    }
    if (value.is_array()) {
      for (const auto& v : value) {
        args.push_back(flag);
        args.push_back(scalar(v));
      }
    } else {
      args.push_back(flag);
      args.push_back(scalar(value));
    }
  };
  for (const auto& [key, value] : cfg.items()) {
    if (!value.is_object()) emit(key, value, false);
  }
  if (cfg.contains(command) && cfg.at(command).is_object()) {
    for (const auto& [key, value] : cfg.at(command).items()) emit(key, value, true);
  }
  return args;
}

std::optional<std::string> find_config_path(const std::vector<std::string>& args) {
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) return args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) return args[i].substr(9);
  }
  return std::nullopt;
}

Vocabularies vocabularies_from(const std::vector<Document>& train, const std::string& vocab_path, std::size_t cap,
                               std::size_t min_count) {
  Vocabularies v;
  v.words = vocab_path.empty() ? build_vocab(train, cap, min_count) : Vocabulary::load(vocab_path, 3);
  v.attrs = build_attributes(train);
  return v;
}

std::vector<IndexedDocument> load_indexed(const std::string& path, const Vocabularies& v) {
  return index_documents(ingest(path), v.words, v.attrs);
}

void print_report(std::ostream& out, const PerplexityReport& r) {
  out << std::left << std::setw(24) << r.model_id << std::setw(12) << r.corpus_id << std::right << std::setw(10)
      << r.tokens << std::setw(14) << std::fixed << std::setprecision(3) << r.perplexity << '\n';
  out.unsetf(std::ios::fixed);
}

// ---------------------------------------------------------------- ingest

struct IngestArgs {
  Common common;
  std::string corpus;
  std::size_t vocab_size = 10000;
  std::size_t min_count = 1;
  double train = 0.8, valid = 0.1, test = 0.1;
};

int run_ingest(const IngestArgs& a) {
  const auto docs = ingest(a.corpus);
  const auto splits = split(docs, {a.train, a.valid, a.test}, a.common.seed);
  const auto vocab = build_vocab(splits.train, a.vocab_size, a.min_count);
  const auto dir = out_dir(a.common);
  write_documents(dir / "train.jsonl", splits.train);
  write_documents(dir / "valid.jsonl", splits.valid);
  write_documents(dir / "test.jsonl", splits.test);
  vocab.save(dir / "vocab.txt");
  std::cout << "documents " << docs.size() << " (train " << splits.train.size() << ", valid " << splits.valid.size()
            << ", test " << splits.test.size() << ")\nvocabulary " << vocab.size() << "\nwrote " << dir.string()
            << "/{train,valid,test}.jsonl, vocab.txt\n";
  return 0;
}

// ------------------------------------------------------------- lda-label

struct LdaArgs {
  Common common;
  std::string corpus;
  std::string vocab;
  std::size_t vocab_size = 10000;
  std::size_t topics = 5;
  std::size_t iterations = 1000;
  double alpha = 0.0;
  double beta = 0.01;
  std::size_t top = 10;
};

int run_lda(const LdaArgs& a) {
  const auto docs = ingest(a.corpus);
  const auto vocab = a.vocab.empty() ? build_vocab(docs, a.vocab_size) : Vocabulary::load(a.vocab, 3);
  LdaConfig cfg;
  cfg.n_topics = a.topics;
  cfg.iterations = a.iterations;
  cfg.alpha = a.alpha;
  cfg.beta = a.beta;
  cfg.seed = a.common.seed;
  const auto model = lda_fit(lda_documents(docs, vocab), vocab.size(), cfg);
  const auto labels = assign_categories(model);
  const auto dir = out_dir(a.common);
  write_documents(dir / "labeled.jsonl", label_documents(docs, labels));
  std::ofstream top(dir / "top_words.txt", std::ios::binary | std::ios::trunc);
  write_top_words(top, top_words(model, vocab, a.top));
  std::vector<std::size_t> sizes(a.topics, 0);
  for (int l : labels) ++sizes[static_cast<std::size_t>(l)];
  for (std::size_t k = 0; k < a.topics; ++k) std::cout << "topic-" << k << '\t' << sizes[k] << " documents\n";
  std::cout << "wrote " << (dir / "labeled.jsonl").string() << ", " << (dir / "top_words.txt").string() << '\n';
  return 0;
}

// ----------------------------------------------------------------- train

struct TrainArgs {
  Common common;
  std::string train_path, valid_path, vocab;
  std::string variant = "RNN";
  std::size_t vocab_size = 10000;
  std::size_t min_count = 1;
  std::size_t hidden = 200;
  std::size_t attr_dim = 200;
  double init_bound = 0.1;
  TrainConfig train;
  bool quiet = false;
};

int run_train(TrainArgs a) {
  const auto train_docs = ingest(a.train_path);
  const auto vocabs = vocabularies_from(train_docs, a.vocab, a.vocab_size, a.min_count);
  const auto train_idx = index_documents(train_docs, vocabs.words, vocabs.attrs);
  const auto valid_idx = load_indexed(a.valid_path, vocabs);

  ModelConfig mc;
  mc.variant = parse_variant(a.variant);
  mc.hidden = a.hidden;
  mc.attr_dim = a.attr_dim;
  mc.vocab_size = vocabs.words.size();
  mc.n_authors = vocabs.attrs.authors.size();
  mc.n_categories = vocabs.attrs.categories.size();
  mc.seed = a.common.seed;
  mc.init_bound = a.init_bound;
  auto model = build_model(mc);
  a.train.seed = a.common.seed;

  const auto dir = out_dir(a.common);
  std::ofstream history(dir / "history.csv", std::ios::binary | std::ios::trunc);
  history << "epoch,train_ppl,valid_ppl,seconds\n";
  history.precision(10);
  const auto result = train(model, train_idx, valid_idx, a.train, [&](const EpochRecord& r) {
    history << r.epoch << ',' << r.train_ppl << ',' << r.valid_ppl << ',' << r.seconds << '\n' << std::flush;
    if (!a.quiet) {
      std::cout << "epoch " << r.epoch << "  train_ppl " << r.train_ppl << "  valid_ppl " << r.valid_ppl << "  ("
                << r.seconds << " s)\n"
                << std::flush;
    }
  });
  const json extra{{"train", a.train.to_json()}, {"best_epoch", result.best_epoch}};
  save_model(dir / "best.ckpt", model, vocabs, extra);
  SamModel last = model;
  last.params.values() = result.last_values;
  save_model(dir / "last.ckpt", last, vocabs, extra);
  std::cout << "best epoch " << result.best_epoch << ", valid perplexity " << result.best_valid_ppl() << "\nwrote "
            << dir.string() << "/{best.ckpt,last.ckpt,history.csv}\n";
  return 0;
}

// ------------------------------------------------------------------ eval

struct EvalArgs {
  Common common;
  std::vector<std::string> models;
  std::string corpus, split = "test", data = ".";
};

std::string corpus_path(const std::string& corpus, const std::string& data, const std::string& split) {
  if (!corpus.empty()) return corpus;
  const auto p = fs::path(data) / (split + ".jsonl");
  if (!fs::exists(p)) throw Error("split file not found: " + p.string());
  return p.string();
}

int run_eval(const EvalArgs& a) {
  const std::string path = corpus_path(a.corpus, a.data, a.split);
  const std::string corpus_id = a.corpus.empty() ? a.split : fs::path(a.corpus).stem().string();
  const auto docs = ingest(path);
  std::vector<PerplexityReport> reports;
  for (const auto& m : a.models) {
    const auto loaded = load_model(m);
    const auto idx = index_documents(docs, loaded.vocabs.words, loaded.vocabs.attrs);
    const std::string id = std::string(to_string(loaded.model.config.variant)) + ":" + fs::path(m).filename().string();
    reports.push_back(perplexity(loaded.model, idx, id, corpus_id));
  }
  const auto dir = out_dir(a.common);
  std::ofstream csv(dir / "perplexity.csv", std::ios::binary | std::ios::trunc);
  write_perplexity_csv(csv, reports);
  std::cout << std::left << std::setw(24) << "model" << std::setw(12) << "corpus" << std::right << std::setw(10)
            << "tokens" << std::setw(14) << "perplexity" << '\n';
  for (const auto& r : reports) print_report(std::cout, r);
  std::cout << "wrote " << (dir / "perplexity.csv").string() << '\n';
  return 0;
}

// ------------------------------------------------------------ word-delta

struct DeltaArgs {
  Common common;
  std::string model_a, model_b, corpus, split = "test", data = ".";
  DeltaThresholds th;
  std::size_t top = 10;
};

int run_word_delta(const DeltaArgs& a) {
  const auto la = load_model(a.model_a);
  const auto lb = load_model(a.model_b);
  if (la.vocabs.words.tokens() != lb.vocabs.words.tokens() ||
      la.vocabs.attrs.authors.tokens() != lb.vocabs.attrs.authors.tokens() ||
      la.vocabs.attrs.categories.tokens() != lb.vocabs.attrs.categories.tokens()) {
    throw Error("word-delta: checkpoints were trained on different vocabularies or attribute sets");
  }
  const auto docs = load_indexed(corpus_path(a.corpus, a.data, a.split), la.vocabs);
  const auto report = word_delta(la.model, lb.model, docs, la.vocabs.words, la.vocabs.attrs, a.th);
  const auto dir = out_dir(a.common);
  std::ofstream csv(dir / "word_delta.csv", std::ios::binary | std::ios::trunc);
  write_word_delta_csv(csv, report);
  std::ofstream txt(dir / "word_delta.txt", std::ios::binary | std::ios::trunc);
  write_word_delta_table(txt, report, a.top);
  write_word_delta_table(std::cout, report, a.top);
  return 0;
}

// ----------------------------------------------------------------- ngram

struct NgramArgs {
  Common common;
  std::string train_path, vocab;
  std::vector<std::string> eval_paths;
  std::size_t order = 5;
  std::size_t vocab_size = 10000;
  std::size_t min_count = 1;
};

int run_ngram(const NgramArgs& a) {
  const auto train_docs = ingest(a.train_path);
  const auto vocab = a.vocab.empty() ? build_vocab(train_docs, a.vocab_size, a.min_count) : Vocabulary::load(a.vocab, 3);
  const auto model = NgramModel::fit(index_documents(train_docs, vocab, {}), vocab.size(), a.order);
  const auto dir = out_dir(a.common);
  model.save(dir / "ngram.model");
  std::vector<PerplexityReport> reports;
  for (const auto& p : a.eval_paths) {
    reports.push_back(model.perplexity(index_documents(ingest(p), vocab, {}), fs::path(p).stem().string()));
  }
  std::cout << "discounts";
  for (std::size_t k = 1; k <= model.order(); ++k) std::cout << ' ' << model.discounts()[k];
  std::cout << '\n';
  if (!reports.empty()) {
    std::ofstream csv(dir / "perplexity.csv", std::ios::binary | std::ios::trunc);
    write_perplexity_csv(csv, reports);
    for (const auto& r : reports) print_report(std::cout, r);
  }
  std::cout << "wrote " << (dir / "ngram.model").string() << '\n';
  return 0;
}

// ------------------------------------------------------ generate / vary

struct GenArgs {
  Common common;
  std::string model, title_file, title_text;
  std::optional<std::string> author, category, source_author;
  std::size_t max_len = 50;
  double temperature = 1.0;
  std::string strategy = "greedy";
};

GenRequest request_from(const GenArgs& a) {
  GenRequest r;
  r.title = read_title(a.title_file, a.title_text);
  r.author = a.author;
  r.category = a.category;
  r.max_len = a.max_len;
  r.temperature = a.temperature;
  r.strategy = parse_strategy(a.strategy);
  r.seed = a.common.seed;
  return r;
}

std::string maybe_export(const GenResult& r, const fs::path& path) {
  if (r.trace.empty()) return "";
  export_attention(r, path);
  return path.string();
}

void print_warnings(const std::vector<std::string>& warnings) {
  for (const auto& w : warnings) std::cerr << "warning: " << w << '\n';
}

int run_generate(const GenArgs& a) {
  const auto loaded = load_model(a.model);
  const auto result = generate(loaded.model, loaded.vocabs, request_from(a));
  const auto dir = out_dir(a.common);
  const std::string csv = maybe_export(result, dir / "attention.csv");
  write_json(dir / "generation.json", to_json(result, csv));
  print_warnings(result.warnings);
  std::cout << join(result.tokens) << '\n';
  return 0;
}

int run_vary(const GenArgs& a) {
  const auto loaded = load_model(a.model);
  if (!a.author) throw Error("vary: --author is required");
  GenRequest settings = request_from(a);
  Document source;
  source.id = "vary";
  source.title = settings.title;
  source.category = a.category;
  if (a.source_author) {
    source.author = *a.source_author;
  } else {
    // Most frequent training author other than the substitute.
    for (int id = 1; id < static_cast<int>(loaded.vocabs.attrs.authors.size()); ++id) {
      if (loaded.vocabs.attrs.authors.token(id) != *a.author) {
        source.author = loaded.vocabs.attrs.authors.token(id);
        break;
      }
    }
    if (!source.author) throw Error("vary: no source author available; pass --source-author");
  }
  const auto sv = style_variation(loaded.model, loaded.vocabs, source, *a.author, settings);
  const auto dir = out_dir(a.common);
  json j = to_json(sv.varied, maybe_export(sv.varied, dir / "attention.csv"));
  j["author"] = *a.author;
  j["source_author"] = *source.author;
  j["original"] = to_json(sv.original, maybe_export(sv.original, dir / "attention_original.csv"));
  j["divergence"] = sv.divergence;
  j["token_overlap"] = sv.token_overlap;
  write_json(dir / "vary.json", j);
  print_warnings(sv.varied.warnings);
  std::cout << "original (" << *source.author << "): " << join(sv.original.tokens) << '\n'
            << "varied   (" << *a.author << "): " << join(sv.varied.tokens) << '\n'
            << "divergence " << sv.divergence << ", token overlap " << sv.token_overlap << '\n';
  return 0;
}

// ----------------------------------------------------------- export-attn

struct ExportArgs {
  Common common;
  std::string model, corpus, doc_id;
  std::size_t index = 0;
};

int run_export(const ExportArgs& a) {
  const auto loaded = load_model(a.model);
  const auto docs = ingest(a.corpus);
  std::size_t pick = a.index;
  if (!a.doc_id.empty()) {
    pick = docs.size();
    for (std::size_t i = 0; i < docs.size(); ++i) {
      if (docs[i].id == a.doc_id) {
        pick = i;
        break;
      }
    }
    if (pick == docs.size()) throw Error("document '" + a.doc_id + "' not found in " + a.corpus);
  }
  if (pick >= docs.size()) throw Error("document index " + std::to_string(pick) + " out of range");
  const auto idx = index_document(docs[pick], loaded.vocabs.words, loaded.vocabs.attrs);
  const auto pass = forward_document(loaded.model, idx, false);
  if (pass.trace.empty()) {
    throw Error("variant " + std::string(to_string(loaded.model.config.variant)) + " has no attention to export");
  }
  Tokens title, text;
  for (int id : idx.title_ids) title.push_back(loaded.vocabs.words.token(id));
  for (int id : idx.text_ids) text.push_back(loaded.vocabs.words.token(id));
  const auto dir = out_dir(a.common);
  const auto path = dir / ("attention_" + docs[pick].id + ".csv");
  export_attention(pass.trace, title, text, path);
  std::cout << "wrote " << path.string() << '\n';
  return 0;
}

// ------------------------------------------------------------- gradcheck

struct GradArgs {
  Common common;
  std::string dims = "tiny";
  std::vector<std::string> variants;
  double eps = 1e-5;
  double tol = 1e-4;
};

int run_gradcheck(const GradArgs& a) {
  std::size_t d = 4, da = 3, vocab = 7, m = 2, n = 3;
  if (a.dims == "small") {
    d = 8, da = 6, vocab = 12, m = 3, n = 5;
  } else if (a.dims != "tiny") {
    throw CLI::ValidationError("--dims", "expected tiny or small");
  }
  std::vector<Variant> variants;
  if (a.variants.empty()) {
    variants.assign(kAllVariants.begin(), kAllVariants.end());
  } else {
    for (const auto& v : a.variants) variants.push_back(parse_variant(v));
  }
  Rng rng(a.common.seed);
  IndexedDocument doc;
  doc.id = "gradcheck";
  for (std::size_t i = 0; i < m; ++i) doc.title_ids.push_back(3 + static_cast<int>(rng.index(vocab - 3)));
  for (std::size_t i = 0; i + 1 < n; ++i) doc.text_ids.push_back(3 + static_cast<int>(rng.index(vocab - 3)));
  doc.text_ids.push_back(Vocabulary::kEosId);
  doc.author_id = 1;
  doc.category_id = 1;

  bool ok = true;
  std::cout << std::left << std::setw(24) << "variant" << std::setw(26) << "tensor" << "max_rel_error\n";
  for (Variant v : variants) {
    ModelConfig cfg;
    cfg.variant = v;
    cfg.hidden = d;
    cfg.attr_dim = da;
    cfg.vocab_size = vocab;
    cfg.n_authors = 2;
    cfg.n_categories = 2;
    cfg.seed = a.common.seed;
    cfg.init_bound = 0.5;
    auto model = build_model(cfg);
    ParamStore store = model.params;
    const LossFn loss = [&](ParamStore& s) {
      model.params.values() = s.values();
      const auto pass = forward_document(model, doc);
      backward_document(model, pass, 1.0, s.grads());
      return pass.total_nll;
    };
    const auto report = grad_check(loss, store, a.eps, a.tol);
    for (const auto& e : report.entries) {
      std::cout << std::left << std::setw(24) << to_string(v) << std::setw(26) << e.name << std::scientific
                << std::setprecision(3) << e.max_rel_error << (e.max_rel_error > a.tol ? "  FAIL" : "") << '\n';
      std::cout.unsetf(std::ios::scientific);
    }
    ok = ok && report.passed;
  }
  std::cout << (ok ? "all tensors within " : "some tensors exceed ") << a.tol << '\n';
  return ok ? 0 : kRuntimeError;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"samlm: semantic-attribute language models"};
  app.require_subcommand(1);
  app.option_defaults()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);

  IngestArgs ingest_a;
  auto* ingest_cmd = app.add_subcommand("ingest", "Read a JSONL corpus, split it and build the vocabulary");
  add_common(ingest_cmd, ingest_a.common);
  ingest_cmd->add_option("--corpus", ingest_a.corpus, "JSONL corpus")->required()->check(CLI::ExistingFile);
  ingest_cmd->add_option("--vocab-size", ingest_a.vocab_size, "Vocabulary cap, specials included")->capture_default_str();
  ingest_cmd->add_option("--min-count", ingest_a.min_count, "Minimum token count")->capture_default_str();
  ingest_cmd->add_option("--train-ratio", ingest_a.train, "Training fraction")->capture_default_str();
  ingest_cmd->add_option("--valid-ratio", ingest_a.valid, "Validation fraction")->capture_default_str();
  ingest_cmd->add_option("--test-ratio", ingest_a.test, "Test fraction")->capture_default_str();

  LdaArgs lda_a;
  auto* lda_cmd = app.add_subcommand("lda-label", "Label documents with their dominant LDA topic");
  add_common(lda_cmd, lda_a.common);
  lda_cmd->add_option("--corpus", lda_a.corpus, "JSONL corpus")->required()->check(CLI::ExistingFile);
  lda_cmd->add_option("--vocab", lda_a.vocab, "Vocabulary file (default: built from the corpus)")->check(CLI::ExistingFile);
  lda_cmd->add_option("--vocab-size", lda_a.vocab_size, "Vocabulary cap when building")->capture_default_str();
  lda_cmd->add_option("--topics", lda_a.topics, "Number of topics")->capture_default_str();
  lda_cmd->add_option("--iterations", lda_a.iterations, "Gibbs sweeps")->capture_default_str();
  lda_cmd->add_option("--alpha", lda_a.alpha, "Document-topic prior (0: 50/topics)")->capture_default_str();
  lda_cmd->add_option("--beta", lda_a.beta, "Topic-word prior")->capture_default_str();
  lda_cmd->add_option("--top", lda_a.top, "Words per topic in top_words.txt")->capture_default_str();

  TrainArgs train_a;
  auto* train_cmd = app.add_subcommand("train", "Train a language model variant");
  add_common(train_cmd, train_a.common);
  train_cmd->add_option("--train", train_a.train_path, "Training JSONL")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--valid", train_a.valid_path, "Validation JSONL")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--vocab", train_a.vocab, "Vocabulary file (default: built from --train)")->check(CLI::ExistingFile);
  train_cmd->add_option("--variant", train_a.variant, "RNN, RNN-State, RNN-BOW, SAM-Cat, SAM-Title-Att, ...")
      ->capture_default_str();
  train_cmd->add_option("--vocab-size", train_a.vocab_size, "Vocabulary cap when building")->capture_default_str();
  train_cmd->add_option("--min-count", train_a.min_count, "Minimum token count when building")->capture_default_str();
  train_cmd->add_option("--hidden", train_a.hidden, "Hidden and embedding size")->capture_default_str();
  train_cmd->add_option("--attr-dim", train_a.attr_dim, "Attribute embedding size")->capture_default_str();
  train_cmd->add_option("--init-bound", train_a.init_bound, "Uniform init bound")->capture_default_str();
  train_cmd->add_option("--lr", train_a.train.lr, "Adam learning rate")->capture_default_str();
  train_cmd->add_option("--beta1", train_a.train.beta1, "Adam beta1")->capture_default_str();
  train_cmd->add_option("--beta2", train_a.train.beta2, "Adam beta2")->capture_default_str();
  train_cmd->add_option("--batch-size", train_a.train.batch_size, "Documents per batch")->capture_default_str();
  train_cmd->add_option("--max-epochs", train_a.train.max_epochs, "Epoch limit")->capture_default_str();
  train_cmd->add_option("--patience", train_a.train.patience, "Epochs without improvement before stopping")
      ->capture_default_str();
  train_cmd->add_option("--clip-norm", train_a.train.clip_norm, "Global gradient norm bound (0 disables)")
      ->capture_default_str();
  train_cmd->add_flag("--quiet", train_a.quiet, "Do not print per-epoch lines");

  EvalArgs eval_a;
  auto* eval_cmd = app.add_subcommand("eval", "Perplexity of one or more checkpoints");
  add_common(eval_cmd, eval_a.common);
  eval_cmd->add_option("--model", eval_a.models, "Checkpoint (repeatable)")->required()->check(CLI::ExistingFile)
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
  eval_cmd->add_option("--corpus", eval_a.corpus, "JSONL to score")->check(CLI::ExistingFile);
  eval_cmd->add_option("--split", eval_a.split, "Split name under --data when --corpus is absent")->capture_default_str();
  eval_cmd->add_option("--data", eval_a.data, "Directory holding <split>.jsonl")->capture_default_str();

  DeltaArgs delta_a;
  auto* delta_cmd = app.add_subcommand("word-delta", "Per-category word NLL differences between two checkpoints");
  add_common(delta_cmd, delta_a.common);
  delta_cmd->add_option("--model-a", delta_a.model_a, "Baseline checkpoint")->required()->check(CLI::ExistingFile);
  delta_cmd->add_option("--model-b", delta_a.model_b, "Compared checkpoint")->required()->check(CLI::ExistingFile);
  delta_cmd->add_option("--corpus", delta_a.corpus, "JSONL to score")->check(CLI::ExistingFile);
  delta_cmd->add_option("--split", delta_a.split, "Split name under --data")->capture_default_str();
  delta_cmd->add_option("--data", delta_a.data, "Directory holding <split>.jsonl")->capture_default_str();
  delta_cmd->add_option("--threshold", delta_a.th.threshold, "Mean delta (nats) separating alike words")
      ->capture_default_str();
  delta_cmd->add_option("--min-count", delta_a.th.min_count, "Occurrences needed to report a word")->capture_default_str();
  delta_cmd->add_option("--top", delta_a.top, "Words per bucket in the text table")->capture_default_str();

  NgramArgs ngram_a;
  auto* ngram_cmd = app.add_subcommand("ngram", "Fit an interpolated Kneser-Ney n-gram baseline");
  add_common(ngram_cmd, ngram_a.common);
  ngram_cmd->add_option("--train", ngram_a.train_path, "Training JSONL")->required()->check(CLI::ExistingFile);
  ngram_cmd->add_option("--eval", ngram_a.eval_paths, "JSONL to score (repeatable)")->check(CLI::ExistingFile)
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
  ngram_cmd->add_option("--vocab", ngram_a.vocab, "Vocabulary file (default: built from --train)")->check(CLI::ExistingFile);
  ngram_cmd->add_option("--order", ngram_a.order, "N-gram order")->capture_default_str();
  ngram_cmd->add_option("--vocab-size", ngram_a.vocab_size, "Vocabulary cap when building")->capture_default_str();
  ngram_cmd->add_option("--min-count", ngram_a.min_count, "Minimum token count when building")->capture_default_str();

  GenArgs gen_a, vary_a;
  auto add_gen = [](CLI::App* cmd, GenArgs& g) {
    add_common(cmd, g.common);
    cmd->add_option("--model", g.model, "Checkpoint")->required()->check(CLI::ExistingFile);
    cmd->add_option("--title", g.title_file, "File holding the title text")->check(CLI::ExistingFile);
    cmd->add_option("--title-text", g.title_text, "Title given inline");
    cmd->add_option("--category", g.category, "Category label");
    cmd->add_option("--max-len", g.max_len, "Maximum tokens, <eos> included")->capture_default_str();
    cmd->add_option("--temperature", g.temperature, "Sampling temperature")->capture_default_str();
    cmd->add_option("--strategy", g.strategy, "greedy or sample")->capture_default_str();
  };
  auto* gen_cmd = app.add_subcommand("generate", "Generate text under attribute conditioning");
  add_gen(gen_cmd, gen_a);
  gen_cmd->add_option("--author", gen_a.author, "Author name");
  auto* vary_cmd = app.add_subcommand("vary", "Regenerate with a substituted author");
  add_gen(vary_cmd, vary_a);
  vary_cmd->add_option("--author", vary_a.author, "Substitute author")->required();
  vary_cmd->add_option("--source-author", vary_a.source_author,
                       "Original author (default: most frequent other training author)");

  ExportArgs export_a;
  auto* export_cmd = app.add_subcommand("export-attn", "Write the attention trace of one document as CSV");
  add_common(export_cmd, export_a.common);
  export_cmd->add_option("--model", export_a.model, "Checkpoint")->required()->check(CLI::ExistingFile);
  export_cmd->add_option("--corpus", export_a.corpus, "JSONL holding the document")->required()->check(CLI::ExistingFile);
  export_cmd->add_option("--doc-id", export_a.doc_id, "Document id");
  export_cmd->add_option("--index", export_a.index, "Document position when --doc-id is absent")->capture_default_str();

  GradArgs grad_a;
  auto* grad_cmd = app.add_subcommand("gradcheck", "Finite-difference check of every variant's gradients");
  add_common(grad_cmd, grad_a.common);
  grad_cmd->add_option("--dims", grad_a.dims, "tiny (d=4, d~=3, V=7) or small (d=8, d~=6, V=12)")->capture_default_str();
  grad_cmd->add_option("--variant", grad_a.variants, "Variant to check (repeatable; default all)")
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
  grad_cmd->add_option("--eps", grad_a.eps, "Finite-difference step")->capture_default_str();
  grad_cmd->add_option("--tol", grad_a.tol, "Maximum relative error")->capture_default_str();

  std::vector<std::string> args(argv + 1, argv + argc);
  try {
    if (const auto cfg_path = find_config_path(args)) {
      std::ifstream in(*cfg_path);
      if (!in) throw CLI::ValidationError("--config", "cannot read " + *cfg_path);
      json cfg;
      try {
        cfg = json::parse(in);
      } catch (const json::exception& e) {
        throw CLI::ValidationError("--config", std::string("invalid JSON: ") + e.what());
      }
      if (!cfg.is_object()) throw CLI::ValidationError("--config", "top level must be an object");
      const auto pos = std::find_if(args.begin(), args.end(), [](const std::string& s) {
        return std::find(kCommands.begin(), kCommands.end(), s) != kCommands.end();
      });
      if (pos != args.end()) {
        auto extra = config_args(cfg, *pos, app.get_subcommand(*pos));
        args.insert(pos + 1, extra.begin(), extra.end());
      }
    }
    std::vector<const char*> cargv{argv[0]};
    for (const auto& s : args) cargv.push_back(s.c_str());
    app.parse(static_cast<int>(cargv.size()), cargv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsageError;
  }

  try {
    if (ingest_cmd->parsed()) return run_ingest(ingest_a);
    if (lda_cmd->parsed()) return run_lda(lda_a);
    if (train_cmd->parsed()) return run_train(train_a);
    if (eval_cmd->parsed()) return run_eval(eval_a);
    if (delta_cmd->parsed()) return run_word_delta(delta_a);
    if (ngram_cmd->parsed()) return run_ngram(ngram_a);
    if (gen_cmd->parsed()) return run_generate(gen_a);
    if (vary_cmd->parsed()) return run_vary(vary_a);
    if (export_cmd->parsed()) return run_export(export_a);
    if (grad_cmd->parsed()) return run_gradcheck(grad_a);
  } catch (const CLI::ValidationError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kUsageError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntimeError;
  }
  return kUsageError;
}
