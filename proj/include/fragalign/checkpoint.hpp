#pragma once

#include <string>

#include <json.hpp>

#include "fragalign/types.hpp"

namespace fragalign {

// Everything needed to evaluate a trained model without the training inputs:
// parameters, relation vocabulary, word table, and the resolved run options.
struct Checkpoint {
  ModelParams params;
  RelationVocab relations;
  WordTable words;
  bool pooled_sentences = false;
  nlohmann::json run_config;

  Checkpoint() : words(0) {}
};

// Versioned binary container: magic, version, a JSON header (dims, vocab,
// word list, config, tensor manifest), then raw little-endian f64 tensors.
void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace fragalign
