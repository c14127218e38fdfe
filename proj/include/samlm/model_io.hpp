#pragma once

#include <filesystem>

#include <json.hpp>

#include "samlm/checkpoint.hpp"
#include "samlm/genapp.hpp"
#include "samlm/model.hpp"

namespace samlm {

// A checkpoint whose header config carries the model config and the three
// vocabularies, so a single file is enough to evaluate or generate.
struct LoadedModel {
  SamModel model;
  Vocabularies vocabs;
};

inline void save_model(const std::filesystem::path& path, const SamModel& model, const Vocabularies& vocabs,
                       const nlohmann::json& extra = nlohmann::json::object()) {
  nlohmann::json config;
  config["model"] = model.config.to_json();
  config["vocab"] = {{"words", vocabs.words.tokens()},
                     {"authors", vocabs.attrs.authors.tokens()},
                     {"categories", vocabs.attrs.categories.tokens()}};
  if (!extra.empty()) config["extra"] = extra;
  save_checkpoint(path, model.params, config);
}

inline LoadedModel load_model(const std::filesystem::path& path) {
  Checkpoint ckpt = load_checkpoint(path);
  LoadedModel out{bind_model(ModelConfig::from_json(ckpt.config.at("model")), std::move(ckpt.store)), {}};
  const auto& v = ckpt.config.at("vocab");
  out.vocabs.words = Vocabulary::from_tokens(v.at("words").get<Tokens>(), 3);
  out.vocabs.attrs.authors = Vocabulary::from_tokens(v.at("authors").get<Tokens>(), 1);
  out.vocabs.attrs.categories = Vocabulary::from_tokens(v.at("categories").get<Tokens>(), 1);
  return out;
}

}  // namespace samlm
