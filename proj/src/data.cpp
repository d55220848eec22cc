#include "fragalign/data.hpp"

#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "fragalign/rng.hpp"

namespace fragalign {

using nlohmann::json;

std::string format_double(double x) { return json(x).dump(); }

namespace {

[[noreturn]] void line_error(const std::string& path, long line,
                             const std::string& what) {
  throw std::runtime_error(path + ":" + std::to_string(line) + ": " + what);
}

Vec to_vec(const json& arr, const std::string& path, long line) {
  if (!arr.is_array()) line_error(path, line, "expected a numeric array");
  Vec v(arr.size());
  for (std::size_t i = 0; i < arr.size(); ++i) {
    if (!arr[i].is_number()) line_error(path, line, "expected a number");
    v(static_cast<Eigen::Index>(i)) = arr[i].get<double>();
  }
  return v;
}

}  // namespace

RawCorpus load_corpus(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open corpus file: " + path);

  RawCorpus corpus;
  std::string line;
  long lineno = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      line_error(path, lineno, std::string("bad JSON: ") + e.what());
    }
    if (!have_header) {
      if (!j.contains("dims") || !j["dims"].contains("image"))
        line_error(path, lineno,
                   "first record must be a header declaring dims.image");
      corpus.dim_image = j["dims"]["image"].get<int>();
      if (corpus.dim_image <= 0)
        line_error(path, lineno, "dims.image must be positive");
      have_header = true;
      continue;
    }
    RawRecord rec;
    rec.image_id = j.value("id", "record" + std::to_string(lineno));
    if (!j.contains("image_fragments"))
      line_error(path, lineno, "record lacks image_fragments");
    for (const json& frag : j["image_fragments"]) {
      Vec v = to_vec(frag, path, lineno);
      if (v.size() != corpus.dim_image)
        line_error(path, lineno,
                   "image fragment width " + std::to_string(v.size()) +
                       " does not match header dims.image " +
                       std::to_string(corpus.dim_image));
      rec.image_fragments.push_back(std::move(v));
    }
    if (rec.image_fragments.empty())
      line_error(path, lineno, "record has no image fragments");
    for (const json& sj : j.value("sentences", json::array())) {
      RawSentence sent;
      for (const json& t : sj.value("tokens", json::array()))
        sent.tokens.push_back(t.get<std::string>());
      for (const json& t : sj.value("triplets", json::array())) {
        if (!t.is_array() || t.size() != 3)
          line_error(path, lineno, "triplet must be [relation, word, word]");
        sent.triplets.push_back({t[0].get<std::string>(),
                                 t[1].get<std::string>(),
                                 t[2].get<std::string>()});
      }
      rec.sentences.push_back(std::move(sent));
    }
    corpus.records.push_back(std::move(rec));
  }
  if (!have_header) throw std::runtime_error(path + ": empty corpus file");
  if (corpus.records.empty())
    throw std::runtime_error(path + ": corpus has no records");
  return corpus;
}

void save_corpus(const RawCorpus& corpus, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write corpus file: " + path);
  out << json{{"dims", {{"image", corpus.dim_image}}}}.dump() << '\n';
  for (const RawRecord& rec : corpus.records) {
    json j;
    j["id"] = rec.image_id;
    json frags = json::array();
    for (const Vec& f : rec.image_fragments) {
      json arr = json::array();
      for (Eigen::Index i = 0; i < f.size(); ++i) arr.push_back(f(i));
      frags.push_back(std::move(arr));
    }
    j["image_fragments"] = std::move(frags);
    json sents = json::array();
    for (const RawSentence& s : rec.sentences) {
      json sj;
      sj["tokens"] = s.tokens;
      json trips = json::array();
      for (const auto& t : s.triplets) trips.push_back({t[0], t[1], t[2]});
      sj["triplets"] = std::move(trips);
      sents.push_back(std::move(sj));
    }
    j["sentences"] = std::move(sents);
    out << j.dump() << '\n';
  }
  if (!out) throw std::runtime_error("write failed: " + path);
}

WordTable load_word_vectors(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open word vector file: " + path);
  std::string line;
  long lineno = 0;
  int dim = -1;
  WordTable table(0);
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string word;
    if (!(ss >> word)) continue;
    std::vector<double> vals;
    double x;
    while (ss >> x) vals.push_back(x);
    if (!ss.eof())
      line_error(path, lineno, "malformed number in word vector");
    if (vals.empty()) line_error(path, lineno, "word without vector values");
    if (dim < 0) {
      dim = static_cast<int>(vals.size());
      table = WordTable(dim);
    } else if (static_cast<int>(vals.size()) != dim) {
      line_error(path, lineno,
                 "vector width " + std::to_string(vals.size()) +
                     " does not match first line width " + std::to_string(dim));
    }
    Vec v(dim);
    for (int i = 0; i < dim; ++i) v(i) = vals[i];
    table.insert(word, std::move(v));
  }
  if (dim < 0) throw std::runtime_error(path + ": empty word vector file");
  return table;
}

WordTable hashed_word_table(const std::vector<std::string>& words,
                            int dim_word, std::uint64_t seed) {
  if (dim_word <= 0)
    throw std::invalid_argument("word dimension must be positive");
  WordTable table(dim_word);
  for (const std::string& w : words) {
    Rng rng(word_seed(w, seed));
    table.insert(w, random_unit_vector(rng, dim_word));
  }
  return table;
}

std::vector<std::string> corpus_vocabulary(const RawCorpus& corpus) {
  std::set<std::string> words;
  for (const RawRecord& rec : corpus.records)
    for (const RawSentence& s : rec.sentences) {
      for (const std::string& t : s.tokens) words.insert(t);
      for (const auto& t : s.triplets) {
        words.insert(t[1]);
        words.insert(t[2]);
      }
    }
  return {words.begin(), words.end()};
}

FragmentMode fragment_mode_from_string(std::string_view s) {
  if (s == "triplets") return FragmentMode::triplets;
  if (s == "bow") return FragmentMode::bow;
  if (s == "bigram") return FragmentMode::bigram;
  if (s == "devise") return FragmentMode::devise;
  if (s == "fullframe_only") return FragmentMode::fullframe_only;
  throw std::invalid_argument("unknown fragment mode: " + std::string(s));
}

std::string to_string(FragmentMode mode) {
  switch (mode) {
    case FragmentMode::triplets: return "triplets";
    case FragmentMode::bow: return "bow";
    case FragmentMode::bigram: return "bigram";
    case FragmentMode::devise: return "devise";
    case FragmentMode::fullframe_only: return "fullframe_only";
  }
  throw std::logic_error("bad fragment mode value");
}

std::string AttritionLog::summary() const {
  std::ostringstream out;
  out << "dropped " << dropped_triplets << " triplet(s), " << dropped_sentences
      << " sentence(s), " << dropped_records << " record(s)";
  return out.str();
}

namespace {

// Remove empty sentences, then empty records; counts go to the log.
RawCorpus sweep_empty(RawCorpus corpus, AttritionLog& log,
                      bool sentence_needs_triplets) {
  RawCorpus out;
  out.dim_image = corpus.dim_image;
  for (RawRecord& rec : corpus.records) {
    RawRecord kept;
    kept.image_id = std::move(rec.image_id);
    kept.image_fragments = std::move(rec.image_fragments);
    for (RawSentence& s : rec.sentences) {
      if (sentence_needs_triplets && s.triplets.empty()) {
        ++log.dropped_sentences;
        continue;
      }
      kept.sentences.push_back(std::move(s));
    }
    if (kept.sentences.empty()) {
      ++log.dropped_records;
      continue;
    }
    out.records.push_back(std::move(kept));
  }
  if (out.records.empty())
    throw std::runtime_error("no records survived preprocessing");
  return out;
}

}  // namespace

PrunedCorpus prune_relations(const RawCorpus& corpus, double min_frac) {
  if (!(min_frac >= 0) || min_frac > 1)
    throw std::invalid_argument("min_frac must be in [0, 1]");

  std::map<std::string, long> counts;
  std::vector<std::string> order;  // first-appearance order
  long total = 0;
  for (const RawRecord& rec : corpus.records)
    for (const RawSentence& s : rec.sentences)
      for (const auto& t : s.triplets) {
        auto [it, inserted] = counts.emplace(t[0], 0);
        if (inserted) order.push_back(t[0]);
        ++it->second;
        ++total;
      }
  if (total == 0)
    throw std::runtime_error("corpus has no dependency triplets to prune");

  PrunedCorpus out;
  for (const std::string& name : order)
    if (static_cast<double>(counts[name]) / static_cast<double>(total) >=
        min_frac)
      out.relations.add(name);

  RawCorpus filtered;
  filtered.dim_image = corpus.dim_image;
  for (const RawRecord& rec : corpus.records) {
    RawRecord r;
    r.image_id = rec.image_id;
    r.image_fragments = rec.image_fragments;
    for (const RawSentence& s : rec.sentences) {
      RawSentence kept;
      kept.tokens = s.tokens;
      for (const auto& t : s.triplets) {
        if (out.relations.index(t[0]) >= 0)
          kept.triplets.push_back(t);
        else
          ++out.log.dropped_triplets;
      }
      r.sentences.push_back(std::move(kept));
    }
    filtered.records.push_back(std::move(r));
  }
  out.corpus = sweep_empty(std::move(filtered), out.log, true);
  return out;
}

RawCorpus filter_dictionary(const RawCorpus& corpus, const WordTable& table,
                            AttritionLog* log) {
  AttritionLog local;
  AttritionLog& l = log ? *log : local;
  RawCorpus filtered;
  filtered.dim_image = corpus.dim_image;
  for (const RawRecord& rec : corpus.records) {
    RawRecord r;
    r.image_id = rec.image_id;
    r.image_fragments = rec.image_fragments;
    for (const RawSentence& s : rec.sentences) {
      RawSentence kept;
      kept.tokens = s.tokens;
      for (const auto& t : s.triplets) {
        if (table.find(t[1]) && table.find(t[2]))
          kept.triplets.push_back(t);
        else
          ++l.dropped_triplets;
      }
      r.sentences.push_back(std::move(kept));
    }
    filtered.records.push_back(std::move(r));
  }
  return sweep_empty(std::move(filtered), l, true);
}

RawCorpus filter_relations(const RawCorpus& corpus, const RelationVocab& vocab,
                           AttritionLog* log) {
  AttritionLog local;
  AttritionLog& l = log ? *log : local;
  RawCorpus filtered;
  filtered.dim_image = corpus.dim_image;
  for (const RawRecord& rec : corpus.records) {
    RawRecord r;
    r.image_id = rec.image_id;
    r.image_fragments = rec.image_fragments;
    for (const RawSentence& s : rec.sentences) {
      RawSentence kept;
      kept.tokens = s.tokens;
      for (const auto& t : s.triplets) {
        if (vocab.index(t[0]) >= 0)
          kept.triplets.push_back(t);
        else
          ++l.dropped_triplets;
      }
      r.sentences.push_back(std::move(kept));
    }
    filtered.records.push_back(std::move(r));
  }
  return sweep_empty(std::move(filtered), l, true);
}

namespace {

Corpus finish_built(Corpus corpus, AttritionLog& log) {
  std::vector<CorpusItem> kept;
  for (CorpusItem& item : corpus.items) {
    std::vector<Sentence> sents;
    for (Sentence& s : item.sentences) {
      bool empty = corpus.pooled_sentences ? s.pooled.size() == 0
                                           : s.fragments.empty();
      if (empty) {
        ++log.dropped_sentences;
        continue;
      }
      sents.push_back(std::move(s));
    }
    if (sents.empty()) {
      ++log.dropped_records;
      continue;
    }
    item.sentences = std::move(sents);
    kept.push_back(std::move(item));
  }
  corpus.items = std::move(kept);
  if (corpus.items.empty())
    throw std::runtime_error("no items survived fragment construction");
  return corpus;
}

}  // namespace

BuiltCorpus build_fragments(const RawCorpus& raw, FragmentMode mode,
                            const RelationVocab& vocab,
                            const WordTable& table) {
  BuiltCorpus out;
  out.corpus.dim_image = raw.dim_image;

  bool needs_tokens = mode == FragmentMode::bow ||
                      mode == FragmentMode::bigram ||
                      mode == FragmentMode::devise;
  int pseudo = -1;
  switch (mode) {
    case FragmentMode::triplets:
    case FragmentMode::fullframe_only:
      out.relations = vocab;
      break;
    case FragmentMode::bow:
      pseudo = out.relations.add(kBowRelation);
      break;
    case FragmentMode::bigram:
      pseudo = out.relations.add(kBigramRelation);
      break;
    case FragmentMode::devise:
      out.corpus.pooled_sentences = true;
      break;
  }

  for (const RawRecord& rec : raw.records) {
    CorpusItem item;
    if (rec.image_fragments.empty())
      throw std::runtime_error("record '" + rec.image_id +
                               "' has no image fragments");
    if (mode == FragmentMode::fullframe_only) {
      item.image_fragments.push_back({rec.image_fragments.back()});
    } else if (mode == FragmentMode::devise) {
      Vec mean = Vec::Zero(raw.dim_image);
      for (const Vec& f : rec.image_fragments) mean += f;
      mean /= static_cast<double>(rec.image_fragments.size());
      item.image_fragments.push_back({std::move(mean)});
    } else {
      for (const Vec& f : rec.image_fragments)
        item.image_fragments.push_back({f});
    }

    for (const RawSentence& rs : rec.sentences) {
      if (needs_tokens && rs.tokens.empty())
        throw std::runtime_error("record '" + rec.image_id + "': " +
                                 to_string(mode) +
                                 " mode requires sentence tokens");
      Sentence sent;
      switch (mode) {
        case FragmentMode::triplets:
        case FragmentMode::fullframe_only:
          for (const auto& t : rs.triplets) {
            int r = out.relations.index(t[0]);
            if (r < 0)
              throw std::runtime_error(
                  "unknown relation '" + t[0] +
                  "' (relation filtering must run before fragment "
                  "construction)");
            if (!table.find(t[1]) || !table.find(t[2]))
              throw std::runtime_error(
                  "triplet word missing from the word table (dictionary "
                  "filtering must run before fragment construction)");
            sent.fragments.push_back({r, t[1], t[2]});
          }
          break;
        case FragmentMode::bow:
          for (const std::string& t : rs.tokens) {
            if (table.find(t))
              sent.fragments.push_back({pseudo, t, t});
            else
              ++out.log.dropped_triplets;
          }
          break;
        case FragmentMode::bigram:
          for (std::size_t i = 0; i + 1 < rs.tokens.size(); ++i) {
            if (table.find(rs.tokens[i]) && table.find(rs.tokens[i + 1]))
              sent.fragments.push_back({pseudo, rs.tokens[i],
                                        rs.tokens[i + 1]});
            else
              ++out.log.dropped_triplets;
          }
          break;
        case FragmentMode::devise: {
          Vec mean = Vec::Zero(table.dim());
          long used = 0;
          for (const std::string& t : rs.tokens) {
            const Vec* v = table.find(t);
            if (!v) continue;
            double norm = v->norm();
            if (norm == 0) continue;
            mean += *v / norm;
            ++used;
          }
          if (used > 0) sent.pooled = mean / static_cast<double>(used);
          break;
        }
      }
      item.sentences.push_back(std::move(sent));
    }
    out.corpus.items.push_back(std::move(item));
  }
  out.corpus = finish_built(std::move(out.corpus), out.log);
  return out;
}

void SyntheticSpec::validate() const {
  if (num_items <= 0) throw std::invalid_argument("num_items must be positive");
  if (num_concepts <= 0)
    throw std::invalid_argument("num_concepts must be positive");
  if (fragments_per_image <= 0)
    throw std::invalid_argument("fragments_per_image must be positive");
  if (triplets_per_sentence <= 0)
    throw std::invalid_argument("triplets_per_sentence must be positive");
  if (!(noise_sigma >= 0))
    throw std::invalid_argument("noise_sigma must be >= 0");
  if (dim_image <= 0) throw std::invalid_argument("dim_image must be positive");
  if (triplets_per_sentence > num_concepts)
    throw std::invalid_argument(
        "triplets_per_sentence exceeds num_concepts: sentences cannot name "
        "that many distinct concepts");
  if (triplets_per_sentence > fragments_per_image)
    throw std::invalid_argument(
        "triplets_per_sentence exceeds fragments_per_image: sentences would "
        "name more concepts than an image samples");
}

SyntheticResult generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  SyntheticResult out;
  out.corpus.dim_image = spec.dim_image;

  int relation_count = std::min(4, spec.num_concepts);
  std::vector<Vec> prototypes;
  std::vector<std::array<std::string, 3>> concept_triplet;
  for (int c = 0; c < spec.num_concepts; ++c) {
    prototypes.push_back(random_unit_vector(rng, spec.dim_image));
    std::string id = std::to_string(c);
    concept_triplet.push_back(
        {"rel" + std::to_string(c % relation_count), "w" + id + "a",
         "w" + id + "b"});
  }

  // distinct concepts per item; extra fragments reuse sampled concepts
  int distinct = std::min(spec.fragments_per_image, spec.num_concepts);
  std::vector<int> all_concepts(spec.num_concepts);
  for (int c = 0; c < spec.num_concepts; ++c) all_concepts[c] = c;

  for (int t = 0; t < spec.num_items; ++t) {
    rng.shuffle(all_concepts);
    std::vector<int> pool(all_concepts.begin(), all_concepts.begin() + distinct);

    RawRecord rec;
    std::string id = std::to_string(t);
    rec.image_id = "item" + std::string(4 - std::min<std::size_t>(4, id.size()), '0') + id;
    std::vector<int> fragment_concept;
    for (int f = 0; f < spec.fragments_per_image; ++f) {
      int c = f < distinct ? pool[f]
                           : pool[static_cast<std::size_t>(rng.below(distinct))];
      fragment_concept.push_back(c);
      Vec x = prototypes[c];
      for (int d = 0; d < spec.dim_image; ++d)
        x(d) += spec.noise_sigma * rng.normal();
      rec.image_fragments.push_back(std::move(x));
    }

    std::vector<int> named(distinct);
    for (int i = 0; i < distinct; ++i) named[i] = i;
    rng.shuffle(named);
    named.resize(spec.triplets_per_sentence);

    RawSentence sent;
    for (int i = 0; i < spec.triplets_per_sentence; ++i) {
      int c = pool[named[i]];
      sent.triplets.push_back(concept_triplet[c]);
      sent.tokens.push_back(concept_triplet[c][1]);
      sent.tokens.push_back(concept_triplet[c][2]);
      out.alignment.push_back({t, i, named[i]});
    }
    rec.sentences.push_back(std::move(sent));
    out.corpus.records.push_back(std::move(rec));
  }
  return out;
}

std::string alignment_to_csv(const std::vector<AlignmentRow>& rows) {
  std::ostringstream out;
  out << "item,triplet_index,fragment_index\n";
  for (const AlignmentRow& r : rows)
    out << r.item << ',' << r.triplet_index << ',' << r.fragment_index << '\n';
  return out.str();
}

SplitIndices split_corpus(int record_count, const SplitSpec& spec) {
  if (record_count <= 0)
    throw std::invalid_argument("cannot split an empty corpus");
  if (spec.train_count < 0 || spec.val_count < 0 || spec.test_count < 0)
    throw std::invalid_argument("split counts must be non-negative");
  int train = spec.train_count > 0
                  ? spec.train_count
                  : record_count - spec.val_count - spec.test_count;
  if (train < 0 || train + spec.val_count + spec.test_count > record_count)
    throw std::invalid_argument(
        "split counts exceed corpus size " + std::to_string(record_count));

  std::vector<int> order(record_count);
  for (int i = 0; i < record_count; ++i) order[i] = i;
  Rng rng(spec.seed);
  rng.shuffle(order);

  SplitIndices out;
  out.train.assign(order.begin(), order.begin() + train);
  out.val.assign(order.begin() + train, order.begin() + train + spec.val_count);
  out.test.assign(order.begin() + train + spec.val_count,
                  order.begin() + train + spec.val_count + spec.test_count);
  return out;
}

RawCorpus select_records(const RawCorpus& corpus,
                         const std::vector<int>& indices) {
  RawCorpus out;
  out.dim_image = corpus.dim_image;
  for (int i : indices) {
    if (i < 0 || i >= static_cast<int>(corpus.records.size()))
      throw std::out_of_range("record index out of range");
    out.records.push_back(corpus.records[i]);
  }
  return out;
}

}  // namespace fragalign
