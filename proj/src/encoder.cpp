#include "fragalign/encoder.hpp"

#include <stdexcept>
#include <string>

namespace fragalign {

namespace {

const RelationWeights& relation_weights(const ModelParams& params,
                                        int relation) {
  if (relation < 0 ||
      relation >= static_cast<int>(params.relations.size()))
    throw std::out_of_range("relation index " + std::to_string(relation) +
                            " out of range (model has " +
                            std::to_string(params.relations.size()) +
                            " relations)");
  return params.relations[relation];
}

}  // namespace

Vec encode_sentence_fragment(const ModelParams& params, const WordTable& table,
                             const SentenceFragment& frag) {
  if (table.dim() != params.dims.dim_word)
    throw std::runtime_error("word table width " + std::to_string(table.dim()) +
                             " does not match model dim_word " +
                             std::to_string(params.dims.dim_word));
  const RelationWeights& rw = relation_weights(params, frag.relation);
  const Vec& e1 = table.vector(frag.word1);
  const Vec& e2 = table.vector(frag.word2);
  Vec u(2 * params.dims.dim_word);
  u << e1, e2;
  return (rw.weight * u + rw.bias).cwiseMax(0.0);
}

Vec encode_image_fragment(const ModelParams& params, const ImageFragment& frag) {
  if (frag.features.size() != params.dims.dim_image)
    throw std::runtime_error(
        "image fragment width " + std::to_string(frag.features.size()) +
        " does not match model dim_image " +
        std::to_string(params.dims.dim_image));
  return params.image_proj * frag.features;
}

std::vector<PairRef> all_pairs(const Corpus& corpus) {
  std::vector<PairRef> pairs;
  for (int i = 0; i < static_cast<int>(corpus.items.size()); ++i)
    for (int s = 0; s < static_cast<int>(corpus.items[i].sentences.size()); ++s)
      pairs.push_back({i, s});
  return pairs;
}

Batch make_batch(const Corpus& corpus, const WordTable& table,
                 std::span<const PairRef> pairs) {
  if (pairs.empty()) throw std::invalid_argument("batch has no items");

  Batch batch;
  batch.pooled = corpus.pooled_sentences;
  batch.bags.item_count = static_cast<int>(pairs.size());

  int n_v = 0, n_s = 0;
  Eigen::Index pooled_width = -1;
  for (const PairRef& p : pairs) {
    if (p.item < 0 || p.item >= static_cast<int>(corpus.items.size()))
      throw std::out_of_range("batch references item " +
                              std::to_string(p.item) + " outside the corpus");
    const CorpusItem& item = corpus.items[p.item];
    if (p.sentence < 0 ||
        p.sentence >= static_cast<int>(item.sentences.size()))
      throw std::out_of_range("batch references sentence " +
                              std::to_string(p.sentence) + " of item " +
                              std::to_string(p.item) + " which does not exist");
    if (item.image_fragments.empty())
      throw std::runtime_error("item " + std::to_string(p.item) +
                               " has no image fragments");
    n_v += static_cast<int>(item.image_fragments.size());
    const Sentence& sent =
        item.sentences[p.sentence];
    int frags = batch.pooled ? 1 : static_cast<int>(sent.fragments.size());
    if (frags == 0)
      throw std::runtime_error("sentence " + std::to_string(p.sentence) +
                               " of item " + std::to_string(p.item) +
                               " has no fragments");
    if (batch.pooled) {
      if (sent.pooled.size() == 0)
        throw std::runtime_error("pooled corpus sentence lacks its vector");
      if (pooled_width < 0) pooled_width = sent.pooled.size();
      if (sent.pooled.size() != pooled_width)
        throw std::runtime_error("pooled sentence vectors have mixed widths");
    }
    n_s += frags;
  }

  batch.image_features.resize(n_v, corpus.dim_image);
  batch.bags.image_item.reserve(n_v);
  batch.bags.sentence_item.reserve(n_s);
  batch.bags.image_rows.resize(pairs.size());
  batch.bags.sentence_rows.resize(pairs.size());
  if (batch.pooled) {
    batch.pooled_rows.resize(n_s, pooled_width);
  } else {
    batch.word_pairs.resize(n_s, 2 * table.dim());
    batch.relations.reserve(n_s);
  }

  int vi = 0, si = 0;
  for (int b = 0; b < static_cast<int>(pairs.size()); ++b) {
    const PairRef& p = pairs[b];
    const CorpusItem& item = corpus.items[p.item];
    for (const ImageFragment& frag : item.image_fragments) {
      if (frag.features.size() != corpus.dim_image)
        throw std::runtime_error("image fragment width " +
                                 std::to_string(frag.features.size()) +
                                 " does not match corpus dim_image " +
                                 std::to_string(corpus.dim_image));
      batch.image_features.row(vi) = frag.features.transpose();
      batch.bags.image_item.push_back(b);
      batch.bags.image_rows[b].push_back(vi);
      ++vi;
    }
    const Sentence& sent =
        item.sentences[p.sentence];
    if (batch.pooled) {
      batch.pooled_rows.row(si) = sent.pooled.transpose();
      batch.bags.sentence_item.push_back(b);
      batch.bags.sentence_rows[b].push_back(si);
      ++si;
    } else {
      for (const SentenceFragment& frag : sent.fragments) {
        const Vec& e1 = table.vector(frag.word1);
        const Vec& e2 = table.vector(frag.word2);
        batch.word_pairs.row(si).head(table.dim()) = e1.transpose();
        batch.word_pairs.row(si).tail(table.dim()) = e2.transpose();
        batch.relations.push_back(frag.relation);
        batch.bags.sentence_item.push_back(b);
        batch.bags.sentence_rows[b].push_back(si);
        ++si;
      }
    }
  }

  batch.bags.positive_bags.resize(n_s);
  for (int j = 0; j < n_s; ++j)
    batch.bags.positive_bags[j] =
        batch.bags.image_rows[batch.bags.sentence_item[j]];
  return batch;
}

EncodedBatch encode_batch(const ModelParams& params, const Batch& batch) {
  if (batch.image_features.cols() != params.dims.dim_image)
    throw std::runtime_error(
        "batch image width " + std::to_string(batch.image_features.cols()) +
        " does not match model dim_image " +
        std::to_string(params.dims.dim_image));

  EncodedBatch enc;
  enc.image_embed = batch.image_features * params.image_proj.transpose();

  if (batch.pooled) {
    if (batch.pooled_rows.cols() != params.dims.dim_embed)
      throw std::runtime_error(
          "pooled sentence width " + std::to_string(batch.pooled_rows.cols()) +
          " does not match model dim_embed " +
          std::to_string(params.dims.dim_embed) +
          " (pooled corpora require dim_embed == dim_word)");
    enc.sentence_embed = batch.pooled_rows;
    return enc;
  }

  int n_s = batch.sentence_count();
  if (batch.word_pairs.cols() != 2 * params.dims.dim_word)
    throw std::runtime_error("sentence input width " +
                             std::to_string(batch.word_pairs.cols()) +
                             " does not match 2*dim_word");
  enc.sentence_preact.resize(n_s, params.dims.dim_embed);
  for (int j = 0; j < n_s; ++j) {
    const RelationWeights& rw = relation_weights(
        params, batch.relations[j]);
    enc.sentence_preact.row(j) =
        (rw.weight * batch.word_pairs.row(j).transpose() + rw.bias)
            .transpose();
  }
  enc.sentence_embed = enc.sentence_preact.cwiseMax(0.0);
  return enc;
}

}  // namespace fragalign
