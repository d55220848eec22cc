#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace fragalign {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

// Fixed word-to-vector map. Treated as immutable data once loaded: training
// reads it but never updates it. Lookups of absent words fail loudly.
class WordTable {
 public:
  explicit WordTable(int dim_word);

  int dim() const { return dim_word_; }
  std::size_t size() const { return words_.size(); }

  bool contains(std::string_view word) const;
  // nullptr when absent; used on filtering paths where absence is expected.
  const Vec* find(std::string_view word) const noexcept;
  // throws std::runtime_error when absent
  const Vec& vector(std::string_view word) const;
  void insert(const std::string& word, Vec v);

  // insertion order, stable across runs
  const std::vector<std::string>& words() const { return words_; }

 private:
  int dim_word_;
  std::vector<std::string> words_;
  std::map<std::string, Vec, std::less<>> entries_;
};

// Relation-type identifiers with dense indices 0..size()-1.
class RelationVocab {
 public:
  int add(const std::string& name);  // returns existing index on repeat
  int index(std::string_view name) const;  // -1 when absent
  const std::string& name(int index) const;
  int size() const { return static_cast<int>(names_.size()); }
  const std::vector<std::string>& names() const { return names_; }

 private:
  std::vector<std::string> names_;
  std::map<std::string, int, std::less<>> index_;
};

struct Dims {
  int dim_word = 0;   // width of word vectors
  int dim_embed = 0;  // width of the shared fragment space
  int dim_image = 0;  // width of raw image-fragment features
};

struct RelationWeights {
  Mat weight;  // dim_embed x 2*dim_word
  Vec bias;    // dim_embed
};

// Trainable parameters: one affine map per relation type plus a linear
// projection for image fragments (no bias, no nonlinearity on that side).
struct ModelParams {
  Dims dims;
  std::vector<RelationWeights> relations;
  Mat image_proj;  // dim_embed x dim_image

  static ModelParams zeros(const Dims& dims, int relation_count);
  bool all_finite() const;
};

struct SentenceFragment {
  int relation = 0;
  std::string word1;
  std::string word2;
};

struct ImageFragment {
  Vec features;
};

struct Sentence {
  std::vector<SentenceFragment> fragments;
  // Set only in pooled corpora (averaged word vectors used as the embedding
  // directly, bypassing the relation encoder).
  Vec pooled;
};

struct CorpusItem {
  std::vector<ImageFragment> image_fragments;
  std::vector<Sentence> sentences;
};

// Paired image/sentence data ready for encoding.
struct Corpus {
  int dim_image = 0;
  bool pooled_sentences = false;
  std::vector<CorpusItem> items;
};

}  // namespace fragalign
