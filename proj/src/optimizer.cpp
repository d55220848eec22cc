#include "fragalign/optimizer.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

#include "fragalign/data.hpp"
#include "fragalign/rng.hpp"

namespace fragalign {

void TrainConfig::validate() const {
  if (batch_size <= 0) throw std::invalid_argument("batch_size must be positive");
  if (!(momentum >= 0) || momentum >= 1 || !std::isfinite(momentum))
    throw std::invalid_argument("momentum must be in [0, 1)");
  if (epochs < 0) throw std::invalid_argument("epochs must be non-negative");
  // zero is allowed: a no-op run is a useful determinism diagnostic
  if (!(learning_rate >= 0) || !std::isfinite(learning_rate))
    throw std::invalid_argument("learning_rate must be non-negative");
  if (!(anneal_factor > 0) || !std::isfinite(anneal_factor))
    throw std::invalid_argument("anneal_factor must be positive");
  if (anneal_last_epochs < 0)
    throw std::invalid_argument("anneal_last_epochs must be non-negative");
  if (mil_start_epoch < 0)
    throw std::invalid_argument("mil_start_epoch must be non-negative");
}

OptimizerState OptimizerState::make(const ModelParams& params) {
  OptimizerState s;
  s.velocity = ParamGrads::zeros_like(params);
  return s;
}

namespace {

void step_tensor(Mat& value, Mat& velocity, const Mat& grad, double lr,
                 double momentum) {
  velocity = momentum * velocity - lr * grad;
  value += velocity;
}

}  // namespace

void sgd_step(ModelParams& params, const ParamGrads& grads,
              OptimizerState& state, double learning_rate, double momentum) {
  if (grads.relations.size() != params.relations.size())
    throw std::invalid_argument("gradient/parameter relation counts differ");
  if (!grads.all_finite())
    throw std::runtime_error("non-finite gradient at optimizer step " +
                             std::to_string(state.step));

  state.velocity.image_proj = momentum * state.velocity.image_proj -
                              learning_rate * grads.image_proj;
  params.image_proj += state.velocity.image_proj;
  for (std::size_t r = 0; r < params.relations.size(); ++r) {
    step_tensor(params.relations[r].weight, state.velocity.relations[r].weight,
                grads.relations[r].weight, learning_rate, momentum);
    Vec& vb = state.velocity.relations[r].bias;
    vb = momentum * vb - learning_rate * grads.relations[r].bias;
    params.relations[r].bias += vb;
  }
  ++state.step;
}

ModelParams init_params(const Dims& dims, int relation_count,
                        std::uint64_t seed) {
  ModelParams p = ModelParams::zeros(dims, relation_count);
  Rng rng(seed);
  auto fill = [&rng](Mat& w) {
    double s = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
    for (Eigen::Index i = 0; i < w.rows(); ++i)
      for (Eigen::Index j = 0; j < w.cols(); ++j)
        w(i, j) = rng.uniform(-s, s);
  };
  fill(p.image_proj);
  for (auto& r : p.relations) fill(r.weight);  // biases stay zero
  return p;
}

TrainResult train(const Corpus& corpus, const WordTable& table,
                  ModelParams params, const TrainConfig& cfg,
                  const ObjectiveConfig& objective) {
  cfg.validate();
  objective.validate();
  if (corpus.items.empty()) throw std::runtime_error("corpus has no items");

  std::vector<PairRef> pairs = all_pairs(corpus);
  if (pairs.empty())
    throw std::runtime_error("corpus has no (image, sentence) pairs");

  bool schedule_mil = objective.mode == ObjectiveMode::combined_mil ||
                      objective.mode == ObjectiveMode::fragment_only;
  Rng rng(cfg.seed);
  OptimizerState state = OptimizerState::make(params);
  TrainResult result;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    bool mil_phase = schedule_mil && epoch >= cfg.mil_start_epoch;
    double lr = epoch >= cfg.epochs - cfg.anneal_last_epochs
                    ? cfg.learning_rate * cfg.anneal_factor
                    : cfg.learning_rate;
    rng.shuffle(pairs);

    ObjectiveConfig epoch_cfg = objective;
    epoch_cfg.force_dense_labels = !mil_phase;

    double loss_sum = 0;
    long batches = 0;
    for (std::size_t start = 0; start < pairs.size();
         start += static_cast<std::size_t>(cfg.batch_size)) {
      std::size_t count =
          std::min(pairs.size() - start, static_cast<std::size_t>(cfg.batch_size));
      Batch batch = make_batch(
          corpus, table, std::span<const PairRef>(pairs.data() + start, count));
      BatchComputation comp = objective_gradients(params, batch, epoch_cfg);
      if (!std::isfinite(comp.value.total))
        throw std::runtime_error("objective diverged at optimizer step " +
                                 std::to_string(state.step) + " (epoch " +
                                 std::to_string(epoch) + ")");
      sgd_step(params, comp.grads, state, lr, cfg.momentum);
      loss_sum += comp.value.total;
      ++batches;
    }
    result.trace.push_back(
        {epoch, mil_phase, lr, loss_sum / static_cast<double>(batches)});
  }

  result.params = std::move(params);
  return result;
}

std::string trace_to_csv(const std::vector<EpochStats>& trace) {
  std::ostringstream out;
  out << "epoch,phase,lr,mean_loss\n";
  for (const EpochStats& e : trace)
    out << e.epoch << ',' << (e.mil_phase ? "mil" : "dense") << ','
        << format_double(e.learning_rate) << ',' << format_double(e.mean_loss)
        << '\n';
  return out.str();
}

namespace {

struct TensorRef {
  std::string name;
  double* data;
  int rows, cols;  // column-major, as Eigen stores them
};

std::vector<TensorRef> tensor_refs(ModelParams& p) {
  std::vector<TensorRef> refs;
  refs.push_back({"image_proj", p.image_proj.data(),
                  static_cast<int>(p.image_proj.rows()),
                  static_cast<int>(p.image_proj.cols())});
  for (std::size_t r = 0; r < p.relations.size(); ++r) {
    refs.push_back({"relation" + std::to_string(r) + ".weight",
                    p.relations[r].weight.data(),
                    static_cast<int>(p.relations[r].weight.rows()),
                    static_cast<int>(p.relations[r].weight.cols())});
    refs.push_back({"relation" + std::to_string(r) + ".bias",
                    p.relations[r].bias.data(),
                    static_cast<int>(p.relations[r].bias.size()), 1});
  }
  return refs;
}

const double* grad_data(const ParamGrads& g, std::size_t tensor_index) {
  if (tensor_index == 0) return g.image_proj.data();
  std::size_t r = (tensor_index - 1) / 2;
  return (tensor_index - 1) % 2 == 0 ? g.relations[r].weight.data()
                                     : g.relations[r].bias.data();
}

// A probe crossed a kink if any pre-activation it actually moved changed
// side, or came within kink_tol of the hinge at either endpoint.
bool crossed_kink(const std::vector<double>& base,
                  const std::vector<double>& plus,
                  const std::vector<double>& minus, double kink_tol) {
  for (std::size_t s = 0; s < base.size(); ++s) {
    if (plus[s] == minus[s]) continue;  // untouched by this parameter
    bool b = base[s] > 0, p = plus[s] > 0, m = minus[s] > 0;
    if (b != p || b != m) return true;
    if (std::abs(plus[s]) < kink_tol || std::abs(minus[s]) < kink_tol)
      return true;
  }
  return false;
}

}  // namespace

GradCheckReport grad_check(const ModelParams& params, const Batch& batch,
                           const ObjectiveConfig& cfg, double eps,
                           double kink_tol) {
  if (!(eps > 0)) throw std::invalid_argument("eps must be positive");
  if (!(kink_tol >= 0)) throw std::invalid_argument("kink_tol must be >= 0");

  // Labels inferred once at the base point and frozen for all probes.
  Mat labels = total_objective(params, batch, cfg).labels;
  ParamGrads analytic = objective_gradients(params, batch, cfg, labels).grads;
  ObjectiveProbe base = objective_probe(params, batch, cfg, labels);

  ModelParams probe_params = params;
  std::vector<TensorRef> refs = tensor_refs(probe_params);

  // Central differences resolve an entry only down to roundoff noise in the
  // objective, so relative errors are measured against a denominator floored
  // at a fraction of the largest gradient magnitude.
  double grad_scale = 0;
  for (std::size_t t = 0; t < refs.size(); ++t) {
    const double* grad = grad_data(analytic, t);
    long entries = static_cast<long>(refs[t].rows) * refs[t].cols;
    for (long e = 0; e < entries; ++e)
      grad_scale = std::max(grad_scale, std::abs(grad[e]));
  }
  double denom_floor = 1e-3 * grad_scale;

  GradCheckReport report;
  for (std::size_t t = 0; t < refs.size(); ++t) {
    TensorRef& ref = refs[t];
    const double* grad = grad_data(analytic, t);
    TensorCheck tc;
    tc.tensor = ref.name;
    long entries = static_cast<long>(ref.rows) * ref.cols;
    for (long e = 0; e < entries; ++e) {
      ++report.total;
      double saved = ref.data[e];
      ref.data[e] = saved + eps;
      ObjectiveProbe plus = objective_probe(probe_params, batch, cfg, labels);
      ref.data[e] = saved - eps;
      ObjectiveProbe minus = objective_probe(probe_params, batch, cfg, labels);
      ref.data[e] = saved;

      if (crossed_kink(base.pre_activations, plus.pre_activations,
                       minus.pre_activations, kink_tol)) {
        ++report.skipped;
        ++tc.skipped;
        continue;
      }

      double numeric = (plus.value - minus.value) / (2.0 * eps);
      double a = grad[e];
      double denom =
          std::max({std::abs(a), std::abs(numeric), denom_floor});
      double rel = denom < 1e-12 ? 0.0 : std::abs(a - numeric) / denom;
      ++report.checked;
      ++tc.checked;
      if (rel > tc.max_rel_err) tc.max_rel_err = rel;
      if (rel > report.max_rel_err) {
        report.max_rel_err = rel;
        report.worst_tensor = ref.name;
        report.worst_row = static_cast<int>(e % ref.rows);
        report.worst_col = static_cast<int>(e / ref.rows);
        report.worst_analytic = a;
        report.worst_numeric = numeric;
      }
    }
    report.tensors.push_back(tc);
  }
  return report;
}

std::string format_grad_report(const GradCheckReport& report) {
  std::ostringstream out;
  out << "tensor                    checked  skipped  max_rel_err\n";
  for (const TensorCheck& tc : report.tensors) {
    out << tc.tensor;
    for (std::size_t i = tc.tensor.size(); i < 26; ++i) out << ' ';
    out << tc.checked << "  " << tc.skipped << "  "
        << format_double(tc.max_rel_err) << '\n';
  }
  out << "overall: checked " << report.checked << ", skipped " << report.skipped
      << " of " << report.total
      << ", max_rel_err = " << format_double(report.max_rel_err) << '\n';
  if (report.checked > 0 && !report.worst_tensor.empty())
    out << "worst: " << report.worst_tensor << '(' << report.worst_row << ','
        << report.worst_col << ") analytic " << format_double(report.worst_analytic)
        << " vs numeric " << format_double(report.worst_numeric) << '\n';
  return out.str();
}

GradCheckInstance make_gradcheck_instance(const Dims& dims, int items,
                                          std::uint64_t seed) {
  if (items <= 0) throw std::invalid_argument("instance needs items");
  Rng rng(seed);
  GradCheckInstance inst;

  inst.relations.add("r0");
  inst.relations.add("r1");
  inst.relations.add("r2");

  inst.table = WordTable(dims.dim_word);
  std::vector<std::string> words;
  for (int w = 0; w < 8; ++w) {
    words.push_back("w" + std::to_string(w));
    inst.table.insert(words.back(), random_unit_vector(rng, dims.dim_word));
  }

  inst.corpus.dim_image = dims.dim_image;
  for (int i = 0; i < items; ++i) {
    CorpusItem item;
    int n_frag = 2 + static_cast<int>(rng.below(2));  // 2..3
    for (int f = 0; f < n_frag; ++f) {
      Vec x(dims.dim_image);
      for (int d = 0; d < dims.dim_image; ++d) x(d) = 0.7 * rng.normal();
      item.image_fragments.push_back({x});
    }
    Sentence sent;
    int n_trip = 2 + static_cast<int>(rng.below(2));  // 2..3
    for (int f = 0; f < n_trip; ++f) {
      SentenceFragment frag;
      frag.relation = static_cast<int>(rng.below(3));
      frag.word1 = words[rng.below(words.size())];
      frag.word2 = words[rng.below(words.size())];
      sent.fragments.push_back(frag);
    }
    item.sentences.push_back(sent);
    inst.corpus.items.push_back(item);
  }

  inst.params = init_params(dims, inst.relations.size(), rng.raw());
  std::vector<PairRef> pairs = all_pairs(inst.corpus);
  inst.batch = make_batch(inst.corpus, inst.table, pairs);
  return inst;
}

}  // namespace fragalign
