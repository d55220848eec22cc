#pragma once

#include <string>
#include <vector>

#include "fragalign/objective.hpp"

namespace fragalign {

// Item-level scores of every image (rows) against every sentence of every
// item (columns, flattened in item order). sentence_owner_out receives the
// owning item index per column.
Mat dense_scores(const ModelParams& params, const WordTable& table,
                 const Corpus& corpus, double smoothing,
                 std::vector<int>* sentence_owner_out = nullptr);

enum class Direction { image_annotation, image_search };

std::string to_string(Direction d);

// 1-based rank of the best ground-truth candidate per query. Ties are broken
// pessimistically: ground truth is placed after every equal-scoring
// competitor.
std::vector<int> rank_queries(const Mat& scores, Direction direction,
                              const std::vector<int>& sentence_owner);

struct RetrievalReport {
  Direction direction = Direction::image_annotation;
  std::vector<std::pair<int, double>> recall_at;  // (K, fraction)
  double median_rank = 0;  // mean of the two middle values for even counts
  double mean_rank = 0;
  std::vector<int> ranks;
};

RetrievalReport summarize(Direction direction, std::vector<int> ranks,
                          const std::vector<int>& recall_ks);

// Keeps only the first sentence of every item.
Corpus hodosh_subset(const Corpus& corpus);

std::string format_report_table(const std::vector<RetrievalReport>& reports);
std::string reports_to_csv(const std::vector<RetrievalReport>& reports);

}  // namespace fragalign
