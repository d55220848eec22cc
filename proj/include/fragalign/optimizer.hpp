#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fragalign/objective.hpp"

namespace fragalign {

struct TrainConfig {
  int batch_size = 100;
  double momentum = 0.9;
  int epochs = 15;
  double learning_rate = 0.01;
  double anneal_factor = 0.1;  // applied to the last anneal_last_epochs epochs
  int anneal_last_epochs = 2;
  int mil_start_epoch = 10;  // epochs before this use dense labels
  std::uint64_t seed = 0;

  void validate() const;
};

struct OptimizerState {
  ParamGrads velocity;
  long step = 0;

  static OptimizerState make(const ModelParams& params);
};

// v <- momentum * v - lr * g;  theta <- theta + v.
// Throws with the offending tensor and step index on non-finite gradients.
void sgd_step(ModelParams& params, const ParamGrads& grads,
              OptimizerState& state, double learning_rate, double momentum);

// Uniform(-s, s) with s = sqrt(6 / (fan_in + fan_out)) per weight matrix,
// zero biases.
ModelParams init_params(const Dims& dims, int relation_count,
                        std::uint64_t seed);

struct EpochStats {
  int epoch = 0;
  bool mil_phase = false;
  double learning_rate = 0;
  double mean_loss = 0;
};

struct TrainResult {
  ModelParams params;
  std::vector<EpochStats> trace;
};

// Seeded epoch shuffling over (item, sentence) pairs, fixed-size batches with
// the final partial batch kept, dense labels before mil_start_epoch.
TrainResult train(const Corpus& corpus, const WordTable& table,
                  ModelParams params, const TrainConfig& cfg,
                  const ObjectiveConfig& objective);

// "epoch,phase,lr,mean_loss" rows
std::string trace_to_csv(const std::vector<EpochStats>& trace);

struct TensorCheck {
  std::string tensor;
  long checked = 0;
  long skipped = 0;
  double max_rel_err = 0;
};

struct GradCheckReport {
  double max_rel_err = 0;
  long checked = 0;
  long skipped = 0;
  long total = 0;
  std::string worst_tensor;
  int worst_row = 0;
  int worst_col = 0;
  double worst_analytic = 0;
  double worst_numeric = 0;
  std::vector<TensorCheck> tensors;
};

// Central differences over every parameter entry. Labels are inferred once at
// the base point and frozen for all probes. Entries whose probe flips any
// hinge/ReLU activation (or lands within kink_tol of one) are skipped and
// counted instead of checked. Relative errors use a denominator floored at
// 1e-3 of the largest gradient magnitude: entries below that sit at the
// finite-difference noise floor and cannot be resolved more tightly.
GradCheckReport grad_check(const ModelParams& params, const Batch& batch,
                           const ObjectiveConfig& cfg, double eps,
                           double kink_tol);

std::string format_grad_report(const GradCheckReport& report);

// Small self-contained random problem for gradient checking: a few items with
// random fragments, a random word table, and freshly initialised parameters.
struct GradCheckInstance {
  Corpus corpus;
  WordTable table;
  RelationVocab relations;
  ModelParams params;
  Batch batch;

  GradCheckInstance() : table(0) {}
};

GradCheckInstance make_gradcheck_instance(const Dims& dims, int items,
                                          std::uint64_t seed);

}  // namespace fragalign
