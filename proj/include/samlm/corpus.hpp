#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "samlm/random.hpp"
#include "samlm/tensor.hpp"

namespace samlm {

using Tokens = std::vector<std::string>;

struct Document {
  std::string id;
  Tokens text;
  std::optional<Tokens> title;
  std::optional<std::string> author;
  std::optional<std::string> category;
};

inline Tokens tokenize(std::string_view s) {
  Tokens out;
  std::istringstream in{std::string(s)};
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

inline std::string join(const Tokens& tokens, std::string_view sep = " ") {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += sep;
    out += tokens[i];
  }
  return out;
}

inline constexpr std::string_view kUnk = "<unk>";
inline constexpr std::string_view kEos = "<eos>";
inline constexpr std::string_view kPad = "<pad>";

// Token <-> index map. Specials occupy the first indices; word vocabularies
// use {<unk>, <eos>, <pad>}, attribute vocabularies just {<unk>}.
class Vocabulary {
 public:
  static constexpr int kUnkId = 0;
  static constexpr int kEosId = 1;
  static constexpr int kPadId = 2;

  Vocabulary() = default;

  static Vocabulary words() { return Vocabulary({std::string(kUnk), std::string(kEos), std::string(kPad)}); }
  static Vocabulary attributes() { return Vocabulary({std::string(kUnk)}); }

  static Vocabulary from_tokens(const Tokens& tokens, std::size_t n_specials) {
    Vocabulary v;
    v.n_specials_ = n_specials;
    for (const auto& t : tokens) v.push(t);
    return v;
  }

  std::size_t size() const { return tokens_.size(); }
  std::size_t n_specials() const { return n_specials_; }
  const Tokens& tokens() const { return tokens_; }

  std::optional<int> find(const std::string& token) const {
    const auto it = index_.find(token);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }
  int id_or_unk(const std::string& token) const { return find(token).value_or(kUnkId); }
  bool contains(const std::string& token) const { return index_.count(token) != 0; }

  const std::string& token(int id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
      throw Error("token id " + std::to_string(id) + " out of range");
    }
    return tokens_[static_cast<std::size_t>(id)];
  }
  bool is_special(int id) const { return id >= 0 && static_cast<std::size_t>(id) < n_specials_; }

  void push(const std::string& token) {
    if (index_.count(token) != 0) throw Error("duplicate vocabulary entry '" + token + "'");
    index_.emplace(token, static_cast<int>(tokens_.size()));
    tokens_.push_back(token);
  }

  // One token per line; line number is the index.
  void save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write vocabulary: " + path.string());
    for (const auto& t : tokens_) out << t << '\n';
  }

  static Vocabulary load(const std::filesystem::path& path, std::size_t n_specials) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot read vocabulary: " + path.string());
    Tokens tokens;
    std::string line;
    while (std::getline(in, line)) tokens.push_back(line);
    if (tokens.size() < n_specials) throw Error("vocabulary file too short: " + path.string());
    return from_tokens(tokens, n_specials);
  }

 private:
  explicit Vocabulary(std::vector<std::string> specials) : n_specials_(specials.size()) {
    for (const auto& s : specials) push(s);
  }

  Tokens tokens_;
  std::unordered_map<std::string, int> index_;
  std::size_t n_specials_ = 0;
};

struct AttributeInventory {
  Vocabulary authors = Vocabulary::attributes();
  Vocabulary categories = Vocabulary::attributes();
};

struct IndexedDocument {
  std::string id;
  std::vector<int> text_ids;   // ends with EOS
  std::vector<int> title_ids;  // empty when the document has no title
  std::optional<int> author_id;
  std::optional<int> category_id;

  bool has_title() const { return !title_ids.empty(); }
};

namespace detail {
inline std::optional<std::string> optional_string(const nlohmann::json& rec, const char* key,
                                                  std::size_t line_no) {
  const auto it = rec.find(key);
  if (it == rec.end() || it->is_null()) return std::nullopt;
  if (!it->is_string()) {
    throw Error("field '" + std::string(key) + "' is not a string at line " + std::to_string(line_no));
  }
  return it->get<std::string>();
}
}  // namespace detail

inline Document parse_document(const std::string& line, std::size_t line_no) {
  nlohmann::json rec;
  try {
    rec = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception&) {
    throw Error("malformed record at line " + std::to_string(line_no));
  }
  if (!rec.is_object()) throw Error("malformed record at line " + std::to_string(line_no));
  const auto text = detail::optional_string(rec, "text", line_no);
  if (!text) throw Error("missing text at line " + std::to_string(line_no));

  Document doc;
  doc.id = detail::optional_string(rec, "id", line_no).value_or("line-" + std::to_string(line_no));
  doc.text = tokenize(*text);
  if (doc.text.empty()) throw Error("empty text at line " + std::to_string(line_no));
  if (auto title = detail::optional_string(rec, "title", line_no)) {
    Tokens t = tokenize(*title);
    if (!t.empty()) doc.title = std::move(t);
  }
  doc.author = detail::optional_string(rec, "author", line_no);
  doc.category = detail::optional_string(rec, "category", line_no);
  return doc;
}

// Reads a JSON-lines corpus. Blank lines are skipped but still counted for
// error messages.
inline std::vector<Document> read_documents(std::istream& in) {
  std::vector<Document> docs;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    docs.push_back(parse_document(line, line_no));
  }
  if (docs.empty()) throw Error("corpus is empty");
  return docs;
}

inline std::vector<Document> ingest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open corpus: " + path.string());
  return read_documents(in);
}

inline nlohmann::json to_json(const Document& doc) {
  nlohmann::json rec;
  rec["id"] = doc.id;
  rec["text"] = join(doc.text);
  if (doc.title) rec["title"] = join(*doc.title);
  if (doc.author) rec["author"] = *doc.author;
  if (doc.category) rec["category"] = *doc.category;
  return rec;
}

inline void write_documents(const std::filesystem::path& path, const std::vector<Document>& docs) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write corpus: " + path.string());
  for (const auto& d : docs) out << to_json(d).dump() << '\n';
}

namespace detail {
inline bool is_reserved_token(const std::string& t) { return t == kUnk || t == kEos || t == kPad; }

// Descending count, ties lexicographic.
inline std::vector<std::pair<std::string, std::size_t>> ranked(const std::map<std::string, std::size_t>& counts) {
  std::vector<std::pair<std::string, std::size_t>> items(counts.begin(), counts.end());
  std::stable_sort(items.begin(), items.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  return items;
}
}  // namespace detail

// `cap` bounds the total size including the three specials. Literal special
// strings in the corpus (e.g. PTB's "<unk>") fold into the specials.
inline Vocabulary build_vocab(const std::vector<Document>& docs, std::size_t cap, std::size_t min_count = 1) {
  if (cap < 4) throw Error("build_vocab: cap must be at least 4");
  if (min_count < 1) throw Error("build_vocab: min_count must be at least 1");
  std::map<std::string, std::size_t> counts;
  for (const auto& d : docs) {
    for (const auto& t : d.text) ++counts[t];
    if (d.title) {
      for (const auto& t : *d.title) ++counts[t];
    }
  }
  Vocabulary vocab = Vocabulary::words();
  for (const auto& [token, count] : detail::ranked(counts)) {
    if (vocab.size() >= cap) break;
    if (count < min_count || detail::is_reserved_token(token)) continue;
    vocab.push(token);
  }
  if (vocab.size() == vocab.n_specials()) throw Error("build_vocab: no tokens survive filtering");
  return vocab;
}

inline AttributeInventory build_attributes(const std::vector<Document>& docs) {
  std::map<std::string, std::size_t> authors, categories;
  for (const auto& d : docs) {
    if (d.author) ++authors[*d.author];
    if (d.category) ++categories[*d.category];
  }
  AttributeInventory inv;
  for (const auto& [name, count] : detail::ranked(authors)) {
    if (name != kUnk) inv.authors.push(name);
  }
  for (const auto& [name, count] : detail::ranked(categories)) {
    if (name != kUnk) inv.categories.push(name);
  }
  return inv;
}

inline IndexedDocument index_document(const Document& doc, const Vocabulary& vocab, const AttributeInventory& attrs) {
  IndexedDocument out;
  out.id = doc.id;
  out.text_ids.reserve(doc.text.size() + 1);
  for (const auto& t : doc.text) out.text_ids.push_back(vocab.id_or_unk(t));
  out.text_ids.push_back(Vocabulary::kEosId);
  if (doc.title) {
    for (const auto& t : *doc.title) out.title_ids.push_back(vocab.id_or_unk(t));
  }
  if (doc.author) out.author_id = attrs.authors.id_or_unk(*doc.author);
  if (doc.category) out.category_id = attrs.categories.id_or_unk(*doc.category);
  return out;
}

inline std::vector<IndexedDocument> index_documents(const std::vector<Document>& docs, const Vocabulary& vocab,
                                                    const AttributeInventory& attrs) {
  std::vector<IndexedDocument> out;
  out.reserve(docs.size());
  for (const auto& d : docs) out.push_back(index_document(d, vocab, attrs));
  return out;
}

// Maps ids back to tokens, dropping specials.
inline Tokens detokenize(const std::vector<int>& ids, const Vocabulary& vocab) {
  Tokens out;
  for (int id : ids) {
    if (!vocab.is_special(id)) out.push_back(vocab.token(id));
  }
  return out;
}

struct SplitRatios {
  double train = 0.8;
  double valid = 0.1;
  double test = 0.1;
};

struct Splits {
  std::vector<Document> train, valid, test;
};

// Partition sizes: floor(n * ratio) each, then the leftover documents go one
// at a time to the parts with the largest fractional remainder (train first
// on ties).
inline std::array<std::size_t, 3> split_sizes(std::size_t n, const SplitRatios& r) {
  const std::array<double, 3> ratios{r.train, r.valid, r.test};
  for (double x : ratios) {
    if (!(x > 0.0)) throw Error("split: ratios must be positive");
  }
  if (std::abs(ratios[0] + ratios[1] + ratios[2] - 1.0) > 1e-9) throw Error("split: ratios must sum to 1");
  std::array<std::size_t, 3> sizes{};
  std::array<double, 3> frac{};
  std::size_t assigned = 0;
  for (int i = 0; i < 3; ++i) {
    const double exact = static_cast<double>(n) * ratios[i];
    sizes[i] = static_cast<std::size_t>(std::floor(exact));
    frac[i] = exact - std::floor(exact);
    assigned += sizes[i];
  }
  for (std::size_t left = n - assigned; left > 0; --left) {
    int best = 0;
    for (int i = 1; i < 3; ++i) {
      if (frac[i] > frac[best]) best = i;
    }
    ++sizes[best];
    frac[best] = -1.0;
  }
  return sizes;
}

inline Splits split(std::vector<Document> docs, const SplitRatios& ratios, std::uint64_t seed) {
  const auto sizes = split_sizes(docs.size(), ratios);
  if (sizes[0] == 0 || sizes[1] == 0 || sizes[2] == 0) throw Error("split: a partition would be empty");
  Rng rng(seed);
  rng.shuffle(docs);
  Splits out;
  auto it = docs.begin();
  out.train.assign(std::make_move_iterator(it), std::make_move_iterator(it + static_cast<std::ptrdiff_t>(sizes[0])));
  it += static_cast<std::ptrdiff_t>(sizes[0]);
  out.valid.assign(std::make_move_iterator(it), std::make_move_iterator(it + static_cast<std::ptrdiff_t>(sizes[1])));
  it += static_cast<std::ptrdiff_t>(sizes[1]);
  out.test.assign(std::make_move_iterator(it), std::make_move_iterator(docs.end()));
  return out;
}

}  // namespace samlm
