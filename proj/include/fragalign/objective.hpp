#pragma once

#include <string>
#include <string_view>

#include "fragalign/encoder.hpp"

namespace fragalign {

enum class ObjectiveMode { fragment_only, global_only, combined_dense, combined_mil };

ObjectiveMode objective_mode_from_string(std::string_view s);
std::string to_string(ObjectiveMode mode);

struct ObjectiveConfig {
  double global_weight = 0.5;  // scale on the ranking term
  double l2_weight = 1e-5;     // scale on the squared weight norm
  double margin = 1.0;         // ranking margin
  double smoothing = 10.0;     // added to the sentence fragment count in item scores
  ObjectiveMode mode = ObjectiveMode::combined_mil;
  // Schedule hook: when set, modes that would infer latent labels use the
  // dense within-item assignment instead.
  bool force_dense_labels = false;

  void validate() const;  // throws on out-of-range values
};

// K = V S^T, K(i, j) = <image row i, sentence row j>.
Mat score_matrix(const Mat& image_embed, const Mat& sentence_embed);

// +1 for within-item pairs, -1 elsewhere.
Mat dense_labels(const BagStructure& bags);

// Cross-item pairs are -1. Within a positive bag each entry takes the sign of
// its score (zero counts as negative); a bag left without any positive gets
// its best-scoring row set to +1 (ties go to the lowest row index).
Mat mil_assign_labels(const Mat& scores, const BagStructure& bags);

// Per-entry weights balancing the positive and negative classes: each class
// sums to 1/2, an empty class contributes nothing.
Mat balance_weights(const Mat& labels);

// sum_ij w_ij * max(0, 1 - y_ij * K_ij) with w = balance_weights(y).
double fragment_alignment_loss(const Mat& scores, const Mat& labels);

struct MilLoss {
  double loss = 0;
  Mat labels;
};

// Labels inferred from the scores, then the same weighted hinge.
MilLoss mil_fragment_loss(const Mat& scores, const BagStructure& bags);

// Thresholded fragment scores averaged over the item pair's rows and columns;
// the column count is smoothed so few-fragment sentences are not favoured.
double image_sentence_score(const Mat& scores, const BagStructure& bags, int k,
                            int l, double smoothing);

Mat item_score_matrix(const Mat& scores, const BagStructure& bags,
                      double smoothing);

// Bidirectional hinge on item scores: every off-diagonal entry is pushed
// below its row and column diagonal by the margin. Diagonal terms excluded.
double global_ranking_loss(const Mat& item_scores, double margin);

struct ObjectiveValue {
  double total = 0;
  double fragment_term = 0;  // raw alignment loss (0 when mode excludes it)
  double global_term = 0;    // raw ranking loss (0 when mode excludes it)
  double l2_term = 0;        // weighted squared norm of weight matrices
  Mat labels;
  Mat scores;
  Mat item_scores;
};

ObjectiveValue total_objective(const ModelParams& params, const Batch& batch,
                               const ObjectiveConfig& cfg);
// Same, but with externally fixed labels (finite-difference probes must not
// re-infer them).
ObjectiveValue total_objective(const ModelParams& params, const Batch& batch,
                               const ObjectiveConfig& cfg,
                               const Mat& frozen_labels);

struct ParamGrads {
  std::vector<RelationWeights> relations;
  Mat image_proj;

  static ParamGrads zeros_like(const ModelParams& params);
  bool all_finite() const;
};

struct BatchComputation {
  ObjectiveValue value;
  ParamGrads grads;
};

// Analytic gradients. Labels are inferred once from the current scores and
// treated as constants, matching the alternating scheme used in training.
BatchComputation objective_gradients(const ModelParams& params,
                                     const Batch& batch,
                                     const ObjectiveConfig& cfg);
BatchComputation objective_gradients(const ModelParams& params,
                                     const Batch& batch,
                                     const ObjectiveConfig& cfg,
                                     const Mat& frozen_labels);

// Objective value plus every hinge/ReLU pre-activation in a fixed order, so a
// finite-difference checker can detect probes that step across a kink.
struct ObjectiveProbe {
  double value = 0;
  std::vector<double> pre_activations;
};

ObjectiveProbe objective_probe(const ModelParams& params, const Batch& batch,
                               const ObjectiveConfig& cfg,
                               const Mat& frozen_labels);

}  // namespace fragalign
