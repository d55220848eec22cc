#include "fragalign/eval.hpp"

#include <algorithm>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include "fragalign/data.hpp"

namespace fragalign {

Mat dense_scores(const ModelParams& params, const WordTable& table,
                 const Corpus& corpus, double smoothing,
                 std::vector<int>* sentence_owner_out) {
  if (corpus.items.empty()) throw std::invalid_argument("empty corpus");
  if (!(smoothing >= 0))
    throw std::invalid_argument("smoothing must be >= 0");

  std::vector<Mat> images;  // per item, fragments x dim_embed
  for (const CorpusItem& item : corpus.items) {
    if (item.image_fragments.empty())
      throw std::runtime_error("item without image fragments");
    Mat v(item.image_fragments.size(), params.dims.dim_embed);
    for (std::size_t i = 0; i < item.image_fragments.size(); ++i)
      v.row(static_cast<Eigen::Index>(i)) =
          encode_image_fragment(params, item.image_fragments[i]).transpose();
    images.push_back(std::move(v));
  }

  std::vector<Mat> sentences;  // per sentence, fragments x dim_embed
  std::vector<int> owner;
  for (std::size_t k = 0; k < corpus.items.size(); ++k)
    for (const Sentence& sent : corpus.items[k].sentences) {
      Mat s;
      if (corpus.pooled_sentences) {
        if (sent.pooled.size() != params.dims.dim_embed)
          throw std::runtime_error(
              "pooled sentence width " + std::to_string(sent.pooled.size()) +
              " does not match model dim_embed " +
              std::to_string(params.dims.dim_embed));
        s = sent.pooled.transpose();
      } else {
        if (sent.fragments.empty())
          throw std::runtime_error("sentence without fragments");
        s.resize(sent.fragments.size(), params.dims.dim_embed);
        for (std::size_t j = 0; j < sent.fragments.size(); ++j)
          s.row(static_cast<Eigen::Index>(j)) =
              encode_sentence_fragment(params, table, sent.fragments[j])
                  .transpose();
      }
      sentences.push_back(std::move(s));
      owner.push_back(static_cast<int>(k));
    }

  Mat out(images.size(), sentences.size());
  for (std::size_t k = 0; k < images.size(); ++k)
    for (std::size_t j = 0; j < sentences.size(); ++j) {
      Mat frag_scores = images[k] * sentences[j].transpose();
      out(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(j)) =
          frag_scores.cwiseMax(0.0).sum() /
          (static_cast<double>(frag_scores.rows()) *
           (static_cast<double>(frag_scores.cols()) + smoothing));
    }
  if (sentence_owner_out) *sentence_owner_out = std::move(owner);
  return out;
}

std::string to_string(Direction d) {
  return d == Direction::image_annotation ? "image_annotation" : "image_search";
}

std::vector<int> rank_queries(const Mat& scores, Direction direction,
                              const std::vector<int>& sentence_owner) {
  if (static_cast<Eigen::Index>(sentence_owner.size()) != scores.cols())
    throw std::invalid_argument(
        "sentence_owner size does not match score columns");

  std::vector<int> ranks;
  if (direction == Direction::image_annotation) {
    for (Eigen::Index k = 0; k < scores.rows(); ++k) {
      double best = -std::numeric_limits<double>::infinity();
      bool any = false;
      for (Eigen::Index j = 0; j < scores.cols(); ++j)
        if (sentence_owner[j] == k) {
          best = std::max(best, scores(k, j));
          any = true;
        }
      if (!any)
        throw std::runtime_error("image " + std::to_string(k) +
                                 " has no ground-truth sentence");
      int ahead = 0;
      for (Eigen::Index j = 0; j < scores.cols(); ++j)
        if (sentence_owner[j] != k && scores(k, j) >= best) ++ahead;
      ranks.push_back(1 + ahead);
    }
  } else {
    for (Eigen::Index j = 0; j < scores.cols(); ++j) {
      int owner = sentence_owner[j];
      if (owner < 0 || owner >= scores.rows())
        throw std::out_of_range("sentence owner out of range");
      double truth = scores(owner, j);
      int ahead = 0;
      for (Eigen::Index k = 0; k < scores.rows(); ++k)
        if (k != owner && scores(k, j) >= truth) ++ahead;
      ranks.push_back(1 + ahead);
    }
  }
  return ranks;
}

RetrievalReport summarize(Direction direction, std::vector<int> ranks,
                          const std::vector<int>& recall_ks) {
  if (ranks.empty()) throw std::invalid_argument("no queries to summarize");
  RetrievalReport report;
  report.direction = direction;

  double n = static_cast<double>(ranks.size());
  for (int k : recall_ks) {
    long hits = std::count_if(ranks.begin(), ranks.end(),
                              [k](int r) { return r <= k; });
    report.recall_at.emplace_back(k, static_cast<double>(hits) / n);
  }

  std::vector<int> sorted = ranks;
  std::sort(sorted.begin(), sorted.end());
  std::size_t mid = sorted.size() / 2;
  report.median_rank =
      sorted.size() % 2 == 1
          ? sorted[mid]
          : (static_cast<double>(sorted[mid - 1]) + sorted[mid]) / 2.0;

  double sum = 0;
  for (int r : ranks) sum += r;
  report.mean_rank = sum / n;
  report.ranks = std::move(ranks);
  return report;
}

Corpus hodosh_subset(const Corpus& corpus) {
  Corpus out;
  out.dim_image = corpus.dim_image;
  out.pooled_sentences = corpus.pooled_sentences;
  for (const CorpusItem& item : corpus.items) {
    if (item.sentences.empty())
      throw std::runtime_error("item without sentences");
    CorpusItem trimmed;
    trimmed.image_fragments = item.image_fragments;
    trimmed.sentences.push_back(item.sentences.front());
    out.items.push_back(std::move(trimmed));
  }
  return out;
}

std::string format_report_table(const std::vector<RetrievalReport>& reports) {
  if (reports.empty()) throw std::invalid_argument("no reports to format");
  std::ostringstream out;
  out << std::left << std::setw(18) << "direction";
  for (const auto& [k, _] : reports.front().recall_at)
    out << std::setw(8) << ("R@" + std::to_string(k));
  out << std::setw(8) << "MedR" << "MeanR" << '\n';
  for (const RetrievalReport& r : reports) {
    out << std::left << std::setw(18) << to_string(r.direction);
    out << std::fixed << std::setprecision(3);
    for (const auto& [_, frac] : r.recall_at) out << std::setw(8) << frac;
    out << std::setprecision(1) << std::setw(8) << r.median_rank;
    out << std::setprecision(2) << r.mean_rank << '\n';
  }
  return out.str();
}

std::string reports_to_csv(const std::vector<RetrievalReport>& reports) {
  if (reports.empty()) throw std::invalid_argument("no reports to format");
  std::ostringstream out;
  out << "direction";
  for (const auto& [k, _] : reports.front().recall_at)
    out << ",recall_at_" << k;
  out << ",median_rank,mean_rank\n";
  for (const RetrievalReport& r : reports) {
    out << to_string(r.direction);
    for (const auto& [_, frac] : r.recall_at) out << ',' << format_double(frac);
    out << ',' << format_double(r.median_rank) << ','
        << format_double(r.mean_rank) << '\n';
  }
  return out.str();
}

}  // namespace fragalign
