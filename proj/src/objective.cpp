#include "fragalign/objective.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace fragalign {

ObjectiveMode objective_mode_from_string(std::string_view s) {
  if (s == "fragment_only") return ObjectiveMode::fragment_only;
  if (s == "global_only") return ObjectiveMode::global_only;
  if (s == "combined_dense") return ObjectiveMode::combined_dense;
  if (s == "combined_mil") return ObjectiveMode::combined_mil;
  throw std::invalid_argument("unknown objective mode: " + std::string(s));
}

std::string to_string(ObjectiveMode mode) {
  switch (mode) {
    case ObjectiveMode::fragment_only: return "fragment_only";
    case ObjectiveMode::global_only: return "global_only";
    case ObjectiveMode::combined_dense: return "combined_dense";
    case ObjectiveMode::combined_mil: return "combined_mil";
  }
  throw std::logic_error("bad objective mode value");
}

void ObjectiveConfig::validate() const {
  if (!(global_weight >= 0) || !std::isfinite(global_weight))
    throw std::invalid_argument("global_weight must be finite and >= 0");
  if (!(l2_weight >= 0) || !std::isfinite(l2_weight))
    throw std::invalid_argument("l2_weight must be finite and >= 0");
  if (!(margin >= 0) || !std::isfinite(margin))
    throw std::invalid_argument("margin must be finite and >= 0");
  if (!(smoothing >= 0) || !std::isfinite(smoothing))
    throw std::invalid_argument("smoothing must be finite and >= 0");
}

namespace {

bool fragment_term_active(ObjectiveMode mode) {
  return mode != ObjectiveMode::global_only;
}

bool global_term_active(ObjectiveMode mode) {
  return mode != ObjectiveMode::fragment_only;
}

// fragment_only follows the same latent-label treatment as the full model;
// combined_dense keeps the dense assignment throughout.
bool wants_mil_labels(const ObjectiveConfig& cfg) {
  if (cfg.force_dense_labels) return false;
  return cfg.mode == ObjectiveMode::combined_mil ||
         cfg.mode == ObjectiveMode::fragment_only;
}

void check_bags(const Mat& scores, const BagStructure& bags) {
  if (scores.rows() != static_cast<Eigen::Index>(bags.image_item.size()) ||
      scores.cols() != static_cast<Eigen::Index>(bags.sentence_item.size()))
    throw std::invalid_argument("score matrix shape does not match bags");
}

double squared_weight_norms(const ModelParams& params) {
  double sum = params.image_proj.squaredNorm();
  for (const auto& r : params.relations) sum += r.weight.squaredNorm();
  return sum;  // biases deliberately excluded
}

}  // namespace

Mat score_matrix(const Mat& image_embed, const Mat& sentence_embed) {
  if (image_embed.cols() != sentence_embed.cols())
    throw std::invalid_argument("embedding widths differ: " +
                                std::to_string(image_embed.cols()) + " vs " +
                                std::to_string(sentence_embed.cols()));
  return image_embed * sentence_embed.transpose();
}

Mat dense_labels(const BagStructure& bags) {
  int n_v = static_cast<int>(bags.image_item.size());
  int n_s = static_cast<int>(bags.sentence_item.size());
  Mat y = Mat::Constant(n_v, n_s, -1.0);
  for (int j = 0; j < n_s; ++j)
    for (int i = 0; i < n_v; ++i)
      if (bags.image_item[i] == bags.sentence_item[j]) y(i, j) = 1.0;
  return y;
}

Mat mil_assign_labels(const Mat& scores, const BagStructure& bags) {
  check_bags(scores, bags);
  int n_s = static_cast<int>(bags.sentence_item.size());
  Mat y = Mat::Constant(scores.rows(), n_s, -1.0);
  for (int j = 0; j < n_s; ++j) {
    const std::vector<int>& bag = bags.positive_bags[j];
    if (bag.empty())
      throw std::runtime_error("sentence row " + std::to_string(j) +
                               " has an empty positive bag");
    bool any_positive = false;
    for (int i : bag) {
      if (scores(i, j) > 0) {  // sign(0) counts as negative
        y(i, j) = 1.0;
        any_positive = true;
      }
    }
    if (!any_positive) {
      // repair: the bag must explain its sentence fragment somehow
      int best = bag[0];
      for (int i : bag)
        if (scores(i, j) > scores(best, j)) best = i;
      y(best, j) = 1.0;
    }
  }
  return y;
}

Mat balance_weights(const Mat& labels) {
  long positives = 0, negatives = 0;
  for (Eigen::Index j = 0; j < labels.cols(); ++j)
    for (Eigen::Index i = 0; i < labels.rows(); ++i)
      (labels(i, j) > 0 ? positives : negatives) += 1;
  double wp = positives > 0 ? 1.0 / (2.0 * positives) : 0.0;
  double wn = negatives > 0 ? 1.0 / (2.0 * negatives) : 0.0;
  Mat w(labels.rows(), labels.cols());
  for (Eigen::Index j = 0; j < labels.cols(); ++j)
    for (Eigen::Index i = 0; i < labels.rows(); ++i)
      w(i, j) = labels(i, j) > 0 ? wp : wn;
  return w;
}

double fragment_alignment_loss(const Mat& scores, const Mat& labels) {
  if (scores.rows() != labels.rows() || scores.cols() != labels.cols())
    throw std::invalid_argument("scores and labels have different shapes");
  Mat w = balance_weights(labels);
  double loss = 0;
  for (Eigen::Index j = 0; j < scores.cols(); ++j)
    for (Eigen::Index i = 0; i < scores.rows(); ++i) {
      double m = 1.0 - labels(i, j) * scores(i, j);
      if (m > 0) loss += w(i, j) * m;
    }
  return loss;
}

MilLoss mil_fragment_loss(const Mat& scores, const BagStructure& bags) {
  MilLoss out;
  out.labels = mil_assign_labels(scores, bags);
  out.loss = fragment_alignment_loss(scores, out.labels);
  return out;
}

double image_sentence_score(const Mat& scores, const BagStructure& bags, int k,
                            int l, double smoothing) {
  check_bags(scores, bags);
  if (k < 0 || k >= bags.item_count || l < 0 || l >= bags.item_count)
    throw std::out_of_range("item index out of range");
  const std::vector<int>& gi = bags.image_rows[k];
  const std::vector<int>& gj = bags.sentence_rows[l];
  if (gi.empty() || gj.empty())
    throw std::runtime_error("item without fragments in image_sentence_score");
  double sum = 0;
  for (int i : gi)
    for (int j : gj) {
      double v = scores(i, j);
      if (v > 0) sum += v;
    }
  return sum / (static_cast<double>(gi.size()) *
                (static_cast<double>(gj.size()) + smoothing));
}

Mat item_score_matrix(const Mat& scores, const BagStructure& bags,
                      double smoothing) {
  check_bags(scores, bags);
  int n = bags.item_count;
  Mat s(n, n);
  for (int k = 0; k < n; ++k)
    for (int l = 0; l < n; ++l)
      s(k, l) = image_sentence_score(scores, bags, k, l, smoothing);
  return s;
}

double global_ranking_loss(const Mat& item_scores, double margin) {
  if (item_scores.rows() != item_scores.cols())
    throw std::invalid_argument("item score matrix must be square");
  int n = static_cast<int>(item_scores.rows());
  double loss = 0;
  for (int k = 0; k < n; ++k)
    for (int l = 0; l < n; ++l) {
      if (l == k) continue;
      double row = item_scores(k, l) - item_scores(k, k) + margin;
      if (row > 0) loss += row;
      double col = item_scores(l, k) - item_scores(k, k) + margin;
      if (col > 0) loss += col;
    }
  return loss;
}

ParamGrads ParamGrads::zeros_like(const ModelParams& params) {
  ParamGrads g;
  g.image_proj = Mat::Zero(params.image_proj.rows(), params.image_proj.cols());
  g.relations.resize(params.relations.size());
  for (std::size_t r = 0; r < params.relations.size(); ++r) {
    g.relations[r].weight = Mat::Zero(params.relations[r].weight.rows(),
                                      params.relations[r].weight.cols());
    g.relations[r].bias = Vec::Zero(params.relations[r].bias.size());
  }
  return g;
}

bool ParamGrads::all_finite() const {
  if (!image_proj.allFinite()) return false;
  for (const auto& r : relations)
    if (!r.weight.allFinite() || !r.bias.allFinite()) return false;
  return true;
}

namespace {

// Shared forward pass. Label inference happens here exactly once; everything
// downstream treats the labels as constants.
struct Forward {
  EncodedBatch enc;
  Mat scores;
  Mat labels;
  Mat item_scores;
  double fragment_loss = 0;
  double ranking_loss = 0;
  double sq_norm = 0;
};

Forward run_forward(const ModelParams& params, const Batch& batch,
                    const ObjectiveConfig& cfg, const Mat* frozen_labels) {
  cfg.validate();
  Forward f;
  f.enc = encode_batch(params, batch);
  f.scores = score_matrix(f.enc.image_embed, f.enc.sentence_embed);
  if (frozen_labels) {
    if (frozen_labels->rows() != f.scores.rows() ||
        frozen_labels->cols() != f.scores.cols())
      throw std::invalid_argument("frozen labels shape mismatch");
    f.labels = *frozen_labels;
  } else if (wants_mil_labels(cfg)) {
    f.labels = mil_assign_labels(f.scores, batch.bags);
  } else {
    f.labels = dense_labels(batch.bags);
  }
  if (fragment_term_active(cfg.mode))
    f.fragment_loss = fragment_alignment_loss(f.scores, f.labels);
  f.item_scores = item_score_matrix(f.scores, batch.bags, cfg.smoothing);
  if (global_term_active(cfg.mode))
    f.ranking_loss = global_ranking_loss(f.item_scores, cfg.margin);
  f.sq_norm = squared_weight_norms(params);
  return f;
}

ObjectiveValue to_value(const Forward& f, const ObjectiveConfig& cfg) {
  ObjectiveValue v;
  v.fragment_term = f.fragment_loss;
  v.global_term = f.ranking_loss;
  v.l2_term = cfg.l2_weight * f.sq_norm;
  v.total = v.fragment_term + cfg.global_weight * v.global_term + v.l2_term;
  v.labels = f.labels;
  v.scores = f.scores;
  v.item_scores = f.item_scores;
  return v;
}

// dC/dK accumulated from both loss terms. Hinge and threshold kinks use the
// zero subgradient, hence the strict comparisons.
Mat score_gradient(const Forward& f, const Batch& batch,
                   const ObjectiveConfig& cfg) {
  const Mat& K = f.scores;
  Mat g = Mat::Zero(K.rows(), K.cols());

  if (fragment_term_active(cfg.mode)) {
    Mat w = balance_weights(f.labels);
    for (Eigen::Index j = 0; j < K.cols(); ++j)
      for (Eigen::Index i = 0; i < K.rows(); ++i)
        if (1.0 - f.labels(i, j) * K(i, j) > 0)
          g(i, j) -= w(i, j) * f.labels(i, j);
  }

  if (global_term_active(cfg.mode)) {
    const BagStructure& bags = batch.bags;
    int n = bags.item_count;
    // dC_G/dS: +1 for each active hinge at (k,l), compensated on the diagonal
    Mat ws = Mat::Zero(n, n);
    for (int k = 0; k < n; ++k)
      for (int l = 0; l < n; ++l) {
        if (l == k) continue;
        if (f.item_scores(k, l) - f.item_scores(k, k) + cfg.margin > 0) {
          ws(k, l) += 1;
          ws(k, k) -= 1;
        }
        if (f.item_scores(l, k) - f.item_scores(k, k) + cfg.margin > 0) {
          ws(l, k) += 1;
          ws(k, k) -= 1;
        }
      }
    for (Eigen::Index j = 0; j < K.cols(); ++j) {
      int l = bags.sentence_item[j];
      double cols = static_cast<double>(bags.sentence_rows[l].size());
      for (Eigen::Index i = 0; i < K.rows(); ++i) {
        if (K(i, j) <= 0) continue;
        int k = bags.image_item[i];
        double rows = static_cast<double>(bags.image_rows[k].size());
        g(i, j) +=
            cfg.global_weight * ws(k, l) / (rows * (cols + cfg.smoothing));
      }
    }
  }
  return g;
}

ParamGrads backprop(const ModelParams& params, const Batch& batch,
                    const ObjectiveConfig& cfg, const Forward& f,
                    const Mat& score_grad) {
  ParamGrads grads = ParamGrads::zeros_like(params);

  Mat grad_v = score_grad * f.enc.sentence_embed;            // n_v x h
  Mat grad_s = score_grad.transpose() * f.enc.image_embed;   // n_s x h

  grads.image_proj = grad_v.transpose() * batch.image_features;
  grads.image_proj += 2.0 * cfg.l2_weight * params.image_proj;

  if (!batch.pooled) {
    int h = params.dims.dim_embed;
    for (int j = 0; j < batch.sentence_count(); ++j) {
      int r = batch.relations[j];
      Vec gz(h);
      for (int u = 0; u < h; ++u)
        gz(u) = f.enc.sentence_preact(j, u) > 0 ? grad_s(j, u) : 0.0;
      grads.relations[r].weight.noalias() += gz * batch.word_pairs.row(j);
      grads.relations[r].bias += gz;
    }
  }
  for (std::size_t r = 0; r < params.relations.size(); ++r)
    grads.relations[r].weight +=
        2.0 * cfg.l2_weight * params.relations[r].weight;
  return grads;
}

}  // namespace

ObjectiveValue total_objective(const ModelParams& params, const Batch& batch,
                               const ObjectiveConfig& cfg) {
  return to_value(run_forward(params, batch, cfg, nullptr), cfg);
}

ObjectiveValue total_objective(const ModelParams& params, const Batch& batch,
                               const ObjectiveConfig& cfg,
                               const Mat& frozen_labels) {
  return to_value(run_forward(params, batch, cfg, &frozen_labels), cfg);
}

BatchComputation objective_gradients(const ModelParams& params,
                                     const Batch& batch,
                                     const ObjectiveConfig& cfg) {
  Forward f = run_forward(params, batch, cfg, nullptr);
  BatchComputation out;
  out.value = to_value(f, cfg);
  out.grads = backprop(params, batch, cfg, f, score_gradient(f, batch, cfg));
  return out;
}

BatchComputation objective_gradients(const ModelParams& params,
                                     const Batch& batch,
                                     const ObjectiveConfig& cfg,
                                     const Mat& frozen_labels) {
  Forward f = run_forward(params, batch, cfg, &frozen_labels);
  BatchComputation out;
  out.value = to_value(f, cfg);
  out.grads = backprop(params, batch, cfg, f, score_gradient(f, batch, cfg));
  return out;
}

ObjectiveProbe objective_probe(const ModelParams& params, const Batch& batch,
                               const ObjectiveConfig& cfg,
                               const Mat& frozen_labels) {
  Forward f = run_forward(params, batch, cfg, &frozen_labels);
  ObjectiveProbe probe;
  probe.value = to_value(f, cfg).total;

  // Fixed site order; a probe sequence is comparable entry by entry.
  if (!batch.pooled)
    for (Eigen::Index j = 0; j < f.enc.sentence_preact.rows(); ++j)
      for (Eigen::Index u = 0; u < f.enc.sentence_preact.cols(); ++u)
        probe.pre_activations.push_back(f.enc.sentence_preact(j, u));

  if (fragment_term_active(cfg.mode))
    for (Eigen::Index j = 0; j < f.scores.cols(); ++j)
      for (Eigen::Index i = 0; i < f.scores.rows(); ++i)
        probe.pre_activations.push_back(1.0 -
                                        f.labels(i, j) * f.scores(i, j));

  if (global_term_active(cfg.mode)) {
    for (Eigen::Index j = 0; j < f.scores.cols(); ++j)
      for (Eigen::Index i = 0; i < f.scores.rows(); ++i)
        probe.pre_activations.push_back(f.scores(i, j));
    int n = batch.bags.item_count;
    for (int k = 0; k < n; ++k)
      for (int l = 0; l < n; ++l) {
        if (l == k) continue;
        probe.pre_activations.push_back(f.item_scores(k, l) -
                                        f.item_scores(k, k) + cfg.margin);
        probe.pre_activations.push_back(f.item_scores(l, k) -
                                        f.item_scores(k, k) + cfg.margin);
      }
  }
  return probe;
}

}  // namespace fragalign
