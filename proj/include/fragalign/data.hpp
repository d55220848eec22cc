#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "fragalign/types.hpp"

namespace fragalign {

// Corpus records as read from disk: tokenised sentences with dependency
// triplets (relation, word1, word2) plus precomputed image-fragment features.
struct RawSentence {
  std::vector<std::string> tokens;
  std::vector<std::array<std::string, 3>> triplets;
};

struct RawRecord {
  std::string image_id;
  std::vector<Vec> image_fragments;
  std::vector<RawSentence> sentences;
};

struct RawCorpus {
  int dim_image = 0;
  std::vector<RawRecord> records;
};

// One JSON object per line; the first line is a header declaring the image
// feature width.
RawCorpus load_corpus(const std::string& path);
void save_corpus(const RawCorpus& corpus, const std::string& path);

// "word v1 v2 ... vd" per line
WordTable load_word_vectors(const std::string& path);

// Random unit vector per word, seeded by the word itself so any corpus subset
// yields the same vectors.
WordTable hashed_word_table(const std::vector<std::string>& words,
                            int dim_word, std::uint64_t seed);

// sorted unique words over tokens and triplet slots
std::vector<std::string> corpus_vocabulary(const RawCorpus& corpus);

enum class FragmentMode { triplets, bow, bigram, devise, fullframe_only };

FragmentMode fragment_mode_from_string(std::string_view s);
std::string to_string(FragmentMode mode);

struct AttritionLog {
  long dropped_triplets = 0;
  long dropped_sentences = 0;
  long dropped_records = 0;

  std::string summary() const;
};

struct PrunedCorpus {
  RawCorpus corpus;
  RelationVocab relations;
  AttritionLog log;
};

// Drops triplets whose relation accounts for less than min_frac of all
// triplet occurrences, then empty sentences and records. The surviving
// relations become the vocabulary, in first-appearance order.
PrunedCorpus prune_relations(const RawCorpus& corpus, double min_frac);

// Drops triplets mentioning out-of-table words, then empty sentences/records.
RawCorpus filter_dictionary(const RawCorpus& corpus, const WordTable& table,
                            AttritionLog* log = nullptr);

// Drops triplets with relations outside the vocabulary (evaluation-side
// counterpart of prune_relations).
RawCorpus filter_relations(const RawCorpus& corpus, const RelationVocab& vocab,
                           AttritionLog* log = nullptr);

struct BuiltCorpus {
  Corpus corpus;
  RelationVocab relations;
  AttritionLog log;
};

// Turns raw records into encoder-ready fragments.
//   triplets:       one fragment per dependency triplet
//   bow:            (w, w) per token under one shared pseudo-relation
//   bigram:         consecutive token pairs under one shared pseudo-relation
//   devise:         one pooled sentence vector and one averaged image fragment
//   fullframe_only: triplets, but only the last (whole-image) fragment kept
// The vocab argument is consumed in triplet modes and replaced by a reserved
// single-entry (or empty) vocabulary otherwise.
BuiltCorpus build_fragments(const RawCorpus& corpus, FragmentMode mode,
                            const RelationVocab& vocab, const WordTable& table);

inline constexpr const char* kBowRelation = "__BOW__";
inline constexpr const char* kBigramRelation = "__BIGRAM__";

struct SyntheticSpec {
  int num_items = 0;
  int num_concepts = 0;
  int fragments_per_image = 0;
  int triplets_per_sentence = 0;
  double noise_sigma = 0;
  int dim_image = 0;
  std::uint64_t seed = 0;

  void validate() const;
};

struct AlignmentRow {
  int item = 0;
  int triplet_index = 0;
  int fragment_index = 0;
};

struct SyntheticResult {
  RawCorpus corpus;
  std::vector<AlignmentRow> alignment;
};

// Planted-alignment corpus: global unit-vector concept prototypes with paired
// pseudo-words; each item samples concepts, emits noisy prototype fragments,
// and one sentence naming a subset of those concepts. Deterministic in seed.
SyntheticResult generate_synthetic(const SyntheticSpec& spec);

std::string alignment_to_csv(const std::vector<AlignmentRow>& rows);

struct SplitSpec {
  int train_count = 0;  // 0 means "the remainder"
  int val_count = 0;
  int test_count = 0;
  std::uint64_t seed = 0;
};

struct SplitIndices {
  std::vector<int> train;
  std::vector<int> val;
  std::vector<int> test;
};

// Seeded shuffle of record indices, then train | val | test contiguously.
SplitIndices split_corpus(int record_count, const SplitSpec& spec);

RawCorpus select_records(const RawCorpus& corpus,
                         const std::vector<int>& indices);

// shortest round-trip decimal form, reproducible byte-for-byte
std::string format_double(double x);

}  // namespace fragalign
