#include <doctest.h>

#include <stdexcept>

#include "fragalign/encoder.hpp"
#include "fragalign/rng.hpp"
#include "fragalign/types.hpp"

using namespace fragalign;

namespace {

Vec vec2(double a, double b) {
  Vec v(2);
  v << a, b;
  return v;
}

// two items: item 0 has 3 image fragments and a 1-triplet sentence,
// item 1 has 2 image fragments and a 2-triplet sentence
Corpus two_item_corpus() {
  Corpus corpus;
  corpus.dim_image = 2;
  CorpusItem a;
  a.image_fragments = {{vec2(1, 0)}, {vec2(0, 1)}, {vec2(1, 1)}};
  a.sentences.push_back({{{0, "cat", "mat"}}, {}});
  CorpusItem b;
  b.image_fragments = {{vec2(2, 0)}, {vec2(0, 2)}};
  b.sentences.push_back({{{0, "dog", "cat"}, {0, "mat", "dog"}}, {}});
  corpus.items = {a, b};
  return corpus;
}

WordTable small_table() {
  WordTable table(2);
  table.insert("cat", vec2(1, -2));
  table.insert("mat", vec2(3, 0));
  table.insert("dog", vec2(0.5, 0.5));
  return table;
}

}  // namespace

TEST_CASE("word table stores and retrieves vectors") {
  WordTable table(2);
  CHECK(table.dim() == 2);
  CHECK(table.size() == 0);
  table.insert("cat", vec2(1, 2));
  table.insert("dog", vec2(3, 4));
  CHECK(table.size() == 2);
  CHECK(table.contains("cat"));
  CHECK_FALSE(table.contains("cow"));
  CHECK(table.find("cow") == nullptr);
  REQUIRE(table.find("dog") != nullptr);
  CHECK((*table.find("dog"))(0) == 3.0);
  CHECK(table.vector("cat")(1) == 2.0);
  CHECK_THROWS_AS((void)table.vector("cow"), std::runtime_error);
  // insertion order is the iteration order
  std::vector<std::string> expect_words = {"cat", "dog"};
  CHECK(table.words() == expect_words);
}

TEST_CASE("word table rejects vectors of the wrong width") {
  WordTable table(3);
  Vec bad(2);
  bad << 1, 2;
  CHECK_THROWS_AS(table.insert("cat", bad), std::runtime_error);
}

TEST_CASE("relation vocab assigns dense stable indices") {
  RelationVocab vocab;
  CHECK(vocab.add("nsubj") == 0);
  CHECK(vocab.add("dobj") == 1);
  CHECK(vocab.add("nsubj") == 0);  // repeat returns the existing index
  CHECK(vocab.size() == 2);
  CHECK(vocab.index("dobj") == 1);
  CHECK(vocab.index("amod") == -1);
  CHECK(vocab.name(0) == "nsubj");
  CHECK_THROWS_AS((void)vocab.name(2), std::out_of_range);
  CHECK_THROWS_AS((void)vocab.name(-1), std::out_of_range);
}

TEST_CASE("zero params have the right shapes and are finite") {
  ModelParams p = ModelParams::zeros({2, 3, 4}, 2);
  CHECK(p.image_proj.rows() == 3);
  CHECK(p.image_proj.cols() == 4);
  REQUIRE(p.relations.size() == 2);
  CHECK(p.relations[0].weight.rows() == 3);
  CHECK(p.relations[0].weight.cols() == 4);  // 2 * dim_word
  CHECK(p.relations[0].bias.size() == 3);
  CHECK(p.all_finite());
  p.relations[1].weight(0, 0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_FALSE(p.all_finite());
}

TEST_CASE("sentence encoder matches the hand-computed affine ReLU") {
  // W = [I I] sums the two word vectors; e1 = [1,-2], e2 = [3,0]
  ModelParams p = ModelParams::zeros({2, 2, 2}, 1);
  p.relations[0].weight << 1, 0, 1, 0,
                           0, 1, 0, 1;
  WordTable table = small_table();
  Vec s = encode_sentence_fragment(p, table, {0, "cat", "mat"});
  REQUIRE(s.size() == 2);
  CHECK(s(0) == 4.0);  // 1 + 3
  CHECK(s(1) == 0.0);  // -2 + 0 clamped by the ReLU
}

TEST_CASE("sentence encoder clamps all-negative pre-activations") {
  ModelParams p = ModelParams::zeros({2, 2, 2}, 1);
  p.relations[0].bias << -1, -1;
  WordTable table = small_table();
  Vec s = encode_sentence_fragment(p, table, {0, "cat", "dog"});
  CHECK(s(0) == 0.0);
  CHECK(s(1) == 0.0);
}

TEST_CASE("sentence encoder maps zero words with zero bias to zero") {
  ModelParams p = ModelParams::zeros({2, 2, 2}, 1);
  p.relations[0].weight.setConstant(3.0);
  WordTable table(2);
  table.insert("null", vec2(0, 0));
  Vec s = encode_sentence_fragment(p, table, {0, "null", "null"});
  CHECK(s.isZero(0));
}

TEST_CASE("sentence encoder rejects bad inputs") {
  ModelParams p = ModelParams::zeros({2, 2, 2}, 1);
  WordTable table = small_table();
  CHECK_THROWS_AS(
      (void)encode_sentence_fragment(p, table, {0, "cat", "unicorn"}),
      std::runtime_error);
  CHECK_THROWS_AS((void)encode_sentence_fragment(p, table, {5, "cat", "mat"}),
                  std::out_of_range);
  WordTable wide(3);
  wide.insert("cat", Vec::Zero(3));
  CHECK_THROWS_AS((void)encode_sentence_fragment(p, wide, {0, "cat", "cat"}),
                  std::runtime_error);
}

TEST_CASE("sentence encoder output is never negative") {
  Rng rng(11);
  WordTable table(3);
  table.insert("a", random_unit_vector(rng, 3));
  table.insert("b", random_unit_vector(rng, 3));
  for (int trial = 0; trial < 20; ++trial) {
    ModelParams p = ModelParams::zeros({3, 4, 2}, 1);
    for (int i = 0; i < p.relations[0].weight.size(); ++i)
      p.relations[0].weight.data()[i] = rng.uniform(-2, 2);
    for (int i = 0; i < 4; ++i) p.relations[0].bias(i) = rng.uniform(-2, 2);
    Vec s = encode_sentence_fragment(p, table, {0, "a", "b"});
    CHECK(s.minCoeff() >= 0.0);
  }
}

TEST_CASE("image encoder is a bare linear map") {
  ModelParams p = ModelParams::zeros({2, 2, 2}, 0);
  p.image_proj.setIdentity();
  Vec v = encode_image_fragment(p, {vec2(0.5, -1)});
  CHECK(v(0) == 0.5);
  CHECK(v(1) == -1.0);  // no ReLU on the image side

  p.image_proj.setZero();
  CHECK(encode_image_fragment(p, {vec2(7, -3)}).isZero(0));

  ModelParams row = ModelParams::zeros({2, 1, 3}, 0);
  row.image_proj << 1, 2, 3;
  Vec feats(3);
  feats << 1, 1, 1;
  CHECK(encode_image_fragment(row, {feats})(0) == 6.0);
}

TEST_CASE("image encoder rejects width mismatches") {
  ModelParams p = ModelParams::zeros({2, 2, 2}, 0);
  Vec wide(3);
  wide << 1, 2, 3;
  CHECK_THROWS_AS((void)encode_image_fragment(p, {wide}), std::runtime_error);
}

TEST_CASE("image encoder is linear to double precision") {
  Rng rng(5);
  ModelParams p = ModelParams::zeros({2, 3, 4}, 0);
  for (int i = 0; i < p.image_proj.size(); ++i)
    p.image_proj.data()[i] = rng.uniform(-1, 1);
  for (int trial = 0; trial < 10; ++trial) {
    Vec x(4), y(4);
    for (int i = 0; i < 4; ++i) {
      x(i) = rng.uniform(-1, 1);
      y(i) = rng.uniform(-1, 1);
    }
    double a = rng.uniform(-2, 2), b = rng.uniform(-2, 2);
    Vec lhs = encode_image_fragment(p, {a * x + b * y});
    Vec rhs = a * encode_image_fragment(p, {x}) + b * encode_image_fragment(p, {y});
    CHECK((lhs - rhs).norm() <= 1e-12 * (1.0 + rhs.norm()));
  }
}

TEST_CASE("batch rows follow item order and record their owners") {
  Corpus corpus = two_item_corpus();
  WordTable table = small_table();
  std::vector<PairRef> pairs = all_pairs(corpus);
  REQUIRE(pairs.size() == 2);

  Batch batch = make_batch(corpus, table, pairs);
  CHECK(batch.image_count() == 5);  // 3 + 2 fragments
  CHECK(batch.sentence_count() == 3);
  std::vector<int> expect_image_item = {0, 0, 0, 1, 1};
  std::vector<int> expect_sentence_item = {0, 1, 1};
  CHECK(batch.bags.image_item == expect_image_item);
  CHECK(batch.bags.sentence_item == expect_sentence_item);
  CHECK(batch.bags.item_count == 2);

  // item 0's lone triplet is explained by item 0's fragment rows only
  std::vector<int> first_rows = {0, 1, 2};
  std::vector<int> second_rows = {3, 4};
  std::vector<int> second_sentences = {1, 2};
  CHECK(batch.bags.positive_bags[0] == first_rows);
  CHECK(batch.bags.positive_bags[1] == second_rows);
  CHECK(batch.bags.positive_bags[2] == second_rows);
  CHECK(batch.bags.image_rows[0] == first_rows);
  CHECK(batch.bags.sentence_rows[1] == second_sentences);

  // word rows are [e1; e2] in fragment order
  CHECK(batch.word_pairs.row(0).head(2).transpose() == table.vector("cat"));
  CHECK(batch.word_pairs.row(0).tail(2).transpose() == table.vector("mat"));
  std::vector<int> expect_relations = {0, 0, 0};
  CHECK(batch.relations == expect_relations);
}

TEST_CASE("single-pair batch has the one-element positive bag") {
  Corpus corpus;
  corpus.dim_image = 2;
  CorpusItem item;
  item.image_fragments = {{vec2(1, 2)}};
  item.sentences.push_back({{{0, "cat", "cat"}}, {}});
  corpus.items = {item};
  Batch batch = make_batch(corpus, small_table(), all_pairs(corpus));
  REQUIRE(batch.bags.positive_bags.size() == 1);
  CHECK(batch.bags.positive_bags[0] == std::vector<int>{0});
}

TEST_CASE("make_batch rejects out-of-range and empty inputs") {
  Corpus corpus = two_item_corpus();
  WordTable table = small_table();
  CHECK_THROWS_AS((void)make_batch(corpus, table, std::vector<PairRef>{}),
                  std::invalid_argument);
  std::vector<PairRef> bad_item = {{5, 0}};
  std::vector<PairRef> bad_sentence = {{0, 3}};
  CHECK_THROWS_AS((void)make_batch(corpus, table, bad_item),
                  std::out_of_range);
  CHECK_THROWS_AS((void)make_batch(corpus, table, bad_sentence),
                  std::out_of_range);
}

TEST_CASE("encode_batch matches the per-fragment encoders row by row") {
  Corpus corpus = two_item_corpus();
  WordTable table = small_table();
  Rng rng(3);
  ModelParams p = ModelParams::zeros({2, 3, 2}, 1);
  for (int i = 0; i < p.image_proj.size(); ++i)
    p.image_proj.data()[i] = rng.uniform(-1, 1);
  for (int i = 0; i < p.relations[0].weight.size(); ++i)
    p.relations[0].weight.data()[i] = rng.uniform(-1, 1);
  for (int i = 0; i < 3; ++i) p.relations[0].bias(i) = rng.uniform(-1, 1);

  Batch batch = make_batch(corpus, table, all_pairs(corpus));
  EncodedBatch enc = encode_batch(p, batch);
  REQUIRE(enc.image_embed.rows() == 5);
  REQUIRE(enc.sentence_embed.rows() == 3);

  int vi = 0, si = 0;
  for (const CorpusItem& item : corpus.items) {
    for (const ImageFragment& frag : item.image_fragments) {
      Vec expect = encode_image_fragment(p, frag);
      CHECK((enc.image_embed.row(vi).transpose() - expect).norm() == 0.0);
      ++vi;
    }
    for (const SentenceFragment& frag : item.sentences[0].fragments) {
      Vec expect = encode_sentence_fragment(p, table, frag);
      CHECK((enc.sentence_embed.row(si).transpose() - expect).norm() == 0.0);
      ++si;
    }
  }
  CHECK(enc.sentence_embed.minCoeff() >= 0.0);
  // pre-activations are kept for kink detection; ReLU of them is the output
  CHECK((enc.sentence_preact.cwiseMax(0.0) - enc.sentence_embed).norm() == 0.0);
}

TEST_CASE("re-encoding identical inputs is bitwise deterministic") {
  Corpus corpus = two_item_corpus();
  WordTable table = small_table();
  Rng rng(9);
  ModelParams p = ModelParams::zeros({2, 4, 2}, 1);
  for (int i = 0; i < p.image_proj.size(); ++i)
    p.image_proj.data()[i] = rng.normal();
  for (int i = 0; i < p.relations[0].weight.size(); ++i)
    p.relations[0].weight.data()[i] = rng.normal();

  Batch b1 = make_batch(corpus, table, all_pairs(corpus));
  Batch b2 = make_batch(corpus, table, all_pairs(corpus));
  EncodedBatch e1 = encode_batch(p, b1);
  EncodedBatch e2 = encode_batch(p, b2);
  CHECK(e1.image_embed == e2.image_embed);
  CHECK(e1.sentence_embed == e2.sentence_embed);
}

TEST_CASE("permuting an item's fragments permutes rows and nothing else") {
  Corpus corpus = two_item_corpus();
  Corpus permuted = corpus;
  // swap item 0's first two image fragments and item 1's two triplets
  std::swap(permuted.items[0].image_fragments[0],
            permuted.items[0].image_fragments[1]);
  std::swap(permuted.items[1].sentences[0].fragments[0],
            permuted.items[1].sentences[0].fragments[1]);

  WordTable table = small_table();
  Rng rng(21);
  ModelParams p = ModelParams::zeros({2, 3, 2}, 1);
  for (int i = 0; i < p.image_proj.size(); ++i)
    p.image_proj.data()[i] = rng.normal();
  for (int i = 0; i < p.relations[0].weight.size(); ++i)
    p.relations[0].weight.data()[i] = rng.normal();

  EncodedBatch base = encode_batch(p, make_batch(corpus, table, all_pairs(corpus)));
  Batch pb = make_batch(permuted, table, all_pairs(permuted));
  EncodedBatch perm = encode_batch(p, pb);

  // rows moved exactly with their fragments
  CHECK(perm.image_embed.row(0) == base.image_embed.row(1));
  CHECK(perm.image_embed.row(1) == base.image_embed.row(0));
  CHECK(perm.image_embed.row(2) == base.image_embed.row(2));
  CHECK(perm.sentence_embed.row(1) == base.sentence_embed.row(2));
  CHECK(perm.sentence_embed.row(2) == base.sentence_embed.row(1));
  // ownership maps are untouched by within-item order
  std::vector<int> expect_image_item = {0, 0, 0, 1, 1};
  std::vector<int> expect_sentence_item = {0, 1, 1};
  CHECK(pb.bags.image_item == expect_image_item);
  CHECK(pb.bags.sentence_item == expect_sentence_item);
}
