#pragma once

#include <span>
#include <vector>

#include "fragalign/types.hpp"

namespace fragalign {

// s = max(0, W_r [e1; e2] + b_r) for the fragment's relation r.
Vec encode_sentence_fragment(const ModelParams& params, const WordTable& table,
                             const SentenceFragment& frag);

// v = P x. Intentionally linear: no bias, no nonlinearity.
Vec encode_image_fragment(const ModelParams& params, const ImageFragment& frag);

// One training example: an item's image paired with one of its sentences.
struct PairRef {
  int item = 0;
  int sentence = 0;
};

std::vector<PairRef> all_pairs(const Corpus& corpus);

// Row-to-owner bookkeeping for an encoded batch. positive_bags[j] lists the
// image rows belonging to the same batch item as sentence row j; it is never
// empty.
struct BagStructure {
  std::vector<int> image_item;                  // image row -> batch item
  std::vector<int> sentence_item;               // sentence row -> batch item
  std::vector<std::vector<int>> positive_bags;  // per sentence row
  std::vector<std::vector<int>> image_rows;     // per batch item
  std::vector<std::vector<int>> sentence_rows;  // per batch item
  int item_count = 0;
};

// Gathered inputs for one mini-batch, rows in pair order.
struct Batch {
  Mat image_features;          // n_v x dim_image
  std::vector<int> relations;  // per sentence row; empty when pooled
  Mat word_pairs;              // n_s x 2*dim_word, row j = [e1; e2]
  Mat pooled_rows;             // n_s x dim_word when pooled
  bool pooled = false;
  BagStructure bags;

  int image_count() const { return static_cast<int>(image_features.rows()); }
  int sentence_count() const {
    return static_cast<int>(bags.sentence_item.size());
  }
};

Batch make_batch(const Corpus& corpus, const WordTable& table,
                 std::span<const PairRef> pairs);

struct EncodedBatch {
  Mat image_embed;      // n_v x dim_embed
  Mat sentence_embed;   // n_s x dim_embed
  Mat sentence_preact;  // pre-ReLU activations; empty when pooled
};

EncodedBatch encode_batch(const ModelParams& params, const Batch& batch);

}  // namespace fragalign
