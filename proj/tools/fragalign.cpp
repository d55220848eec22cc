// Command-line front end: synthetic corpus generation, training, retrieval
// evaluation, gradient checking, and the ablation sweep.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "fragalign/checkpoint.hpp"
#include "fragalign/data.hpp"
#include "fragalign/eval.hpp"
#include "fragalign/optimizer.hpp"

namespace fa = fragalign;
using nlohmann::json;

namespace {

// Current pipeline stage, reported with any error so failures name where they
// happened.
std::string g_stage = "startup";

void stage(const std::string& s) { g_stage = s; }

std::string default_out_dir() {
  const char* env = std::getenv("FRAGALIGN_OUT_DIR");
  return env && *env ? env : ".";
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
  if (!out) throw std::runtime_error("write failed: " + path);
}

std::string joined(const std::string& dir, const std::string& name) {
  return (std::filesystem::path(dir) / name).string();
}

std::string toml_quote(const std::string& s) {
  std::string out = "\"";
  for (char c : s) {
    if (c == '\\' || c == '"') out.push_back('\\');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

// Saved beside every output set; `--config <file>` replays the run.
std::string render_run_config(const std::string& out_dir, int threads,
                              const CLI::App* sub) {
  std::ostringstream out;
  out << "out-dir=" << toml_quote(out_dir) << "\nthreads=" << threads
      << "\n\n[" << sub->get_name() << "]\n"
      << sub->config_to_str(true, true);
  return out.str();
}

void prepare_out_dir(const std::string& dir) {
  std::filesystem::create_directories(dir);
}

// Everything a training run needs; train and ablate share this.
struct PipelineOptions {
  std::string corpus_path;
  std::string word_vectors_path;  // empty: hashed unit vectors
  int word_dim = 32;
  std::uint64_t hash_seed = 0;
  int embed_dim = 32;
  double prune_min_frac = 0.0;
  std::string fragment_mode = "triplets";
  fa::ObjectiveConfig objective;
  fa::TrainConfig train_cfg;
  fa::SplitSpec split;
  std::vector<int> recall_ks{1, 5, 10};
  bool hodosh = false;
};

struct EvalOutcome {
  std::vector<fa::RetrievalReport> reports;
  int images = 0;
  int sentences = 0;
};

bool uses_triplets(fa::FragmentMode mode) {
  return mode == fa::FragmentMode::triplets ||
         mode == fa::FragmentMode::fullframe_only;
}

EvalOutcome evaluate_subset(const fa::Checkpoint& ckpt,
                            const fa::RawCorpus& subset, fa::FragmentMode mode,
                            double smoothing, const std::vector<int>& ks,
                            bool hodosh) {
  fa::AttritionLog log;
  fa::RawCorpus filtered = subset;
  if (uses_triplets(mode)) {
    filtered = fa::filter_relations(filtered, ckpt.relations, &log);
    filtered = fa::filter_dictionary(filtered, ckpt.words, &log);
  }
  fa::BuiltCorpus built =
      fa::build_fragments(filtered, mode, ckpt.relations, ckpt.words);
  fa::Corpus corpus =
      hodosh ? fa::hodosh_subset(built.corpus) : std::move(built.corpus);

  std::vector<int> owner;
  fa::Mat scores =
      fa::dense_scores(ckpt.params, ckpt.words, corpus, smoothing, &owner);

  EvalOutcome out;
  out.images = static_cast<int>(scores.rows());
  out.sentences = static_cast<int>(scores.cols());
  for (fa::Direction d :
       {fa::Direction::image_annotation, fa::Direction::image_search})
    out.reports.push_back(
        fa::summarize(d, fa::rank_queries(scores, d, owner), ks));
  return out;
}

struct PipelineRun {
  fa::Checkpoint ckpt;
  std::vector<fa::EpochStats> trace;
  fa::RawCorpus val_raw;
  fa::RawCorpus test_raw;
  fa::AttritionLog attrition;
};

PipelineRun run_pipeline(const PipelineOptions& opts, bool verbose) {
  stage("loading corpus");
  fa::RawCorpus raw = fa::load_corpus(opts.corpus_path);
  fa::FragmentMode mode = fa::fragment_mode_from_string(opts.fragment_mode);

  stage("splitting");
  fa::SplitIndices idx =
      fa::split_corpus(static_cast<int>(raw.records.size()), opts.split);
  fa::RawCorpus train_raw = fa::select_records(raw, idx.train);
  if (train_raw.records.empty())
    throw std::runtime_error("training split is empty");

  stage("preprocessing");
  fa::RelationVocab vocab;
  fa::RawCorpus working = train_raw;
  fa::AttritionLog attrition;
  if (uses_triplets(mode)) {
    fa::PrunedCorpus pruned = fa::prune_relations(train_raw, opts.prune_min_frac);
    vocab = pruned.relations;
    attrition = pruned.log;
    working = std::move(pruned.corpus);
  }

  fa::WordTable table =
      opts.word_vectors_path.empty()
          ? fa::hashed_word_table(fa::corpus_vocabulary(working), opts.word_dim,
                                  opts.hash_seed)
          : fa::load_word_vectors(opts.word_vectors_path);
  if (mode == fa::FragmentMode::devise && table.dim() != opts.embed_dim)
    throw std::runtime_error(
        "devise mode embeds pooled word vectors directly, so --embed-dim (" +
        std::to_string(opts.embed_dim) + ") must equal the word width (" +
        std::to_string(table.dim()) + ")");
  if (uses_triplets(mode))
    working = fa::filter_dictionary(working, table, &attrition);

  fa::BuiltCorpus built = fa::build_fragments(working, mode, vocab, table);
  attrition.dropped_triplets += built.log.dropped_triplets;
  attrition.dropped_sentences += built.log.dropped_sentences;
  attrition.dropped_records += built.log.dropped_records;
  if (verbose)
    std::cout << "preprocessing: " << attrition.summary() << ", "
              << built.corpus.items.size() << " item(s) kept, "
              << built.relations.size() << " relation(s)\n";

  stage("training");
  fa::Dims dims{table.dim(), opts.embed_dim, built.corpus.dim_image};
  fa::ModelParams params =
      fa::init_params(dims, built.relations.size(), opts.train_cfg.seed);
  fa::TrainResult result = fa::train(built.corpus, table, std::move(params),
                                     opts.train_cfg, opts.objective);
  if (verbose)
    for (const fa::EpochStats& e : result.trace)
      std::cout << "epoch " << e.epoch << (e.mil_phase ? " [mil]" : " [dense]")
                << " lr " << fa::format_double(e.learning_rate) << " loss "
                << fa::format_double(e.mean_loss) << '\n';

  PipelineRun run;
  run.ckpt.params = std::move(result.params);
  run.ckpt.relations = built.relations;
  run.ckpt.words = std::move(table);
  run.ckpt.pooled_sentences = built.corpus.pooled_sentences;
  run.trace = std::move(result.trace);
  run.val_raw = fa::select_records(raw, idx.val);
  run.test_raw = fa::select_records(raw, idx.test);
  run.attrition = attrition;
  return run;
}

json pipeline_config_json(const PipelineOptions& opts) {
  return json{
      {"corpus", opts.corpus_path},
      {"word_vectors", opts.word_vectors_path},
      {"word_dim", opts.word_dim},
      {"hash_seed", opts.hash_seed},
      {"embed_dim", opts.embed_dim},
      {"prune_min_frac", opts.prune_min_frac},
      {"fragments", opts.fragment_mode},
      {"objective",
       {{"mode", fa::to_string(opts.objective.mode)},
        {"margin", opts.objective.margin},
        {"global_weight", opts.objective.global_weight},
        {"l2_weight", opts.objective.l2_weight},
        {"smoothing", opts.objective.smoothing}}},
      {"train",
       {{"batch_size", opts.train_cfg.batch_size},
        {"momentum", opts.train_cfg.momentum},
        {"epochs", opts.train_cfg.epochs},
        {"learning_rate", opts.train_cfg.learning_rate},
        {"anneal_factor", opts.train_cfg.anneal_factor},
        {"anneal_last_epochs", opts.train_cfg.anneal_last_epochs},
        {"mil_start_epoch", opts.train_cfg.mil_start_epoch},
        {"seed", opts.train_cfg.seed}}},
      {"split",
       {{"train_count", opts.split.train_count},
        {"val_count", opts.split.val_count},
        {"test_count", opts.split.test_count},
        {"seed", opts.split.seed}}}};
}

void print_outcome(const std::string& label, const EvalOutcome& outcome) {
  std::cout << label << ": " << outcome.images << " image(s), "
            << outcome.sentences << " sentence(s)\n"
            << fa::format_report_table(outcome.reports);
}

// Registers the flags shared between train and ablate.
void add_pipeline_options(CLI::App* cmd, PipelineOptions& o) {
  cmd->add_option("--corpus", o.corpus_path, "corpus file (JSON lines)")
      ->required();
  cmd->add_option("--word-vectors", o.word_vectors_path,
                  "word vector file; omitted: seeded random unit vectors");
  cmd->add_option("--word-dim", o.word_dim,
                  "width of generated word vectors (ignored with --word-vectors)")
      ->capture_default_str();
  cmd->add_option("--hash-seed", o.hash_seed, "seed for generated word vectors")
      ->capture_default_str();
  cmd->add_option("--embed-dim", o.embed_dim, "width of the shared space")
      ->capture_default_str();
  cmd->add_option("--prune-min-frac", o.prune_min_frac,
                  "drop relations rarer than this fraction of triplets")
      ->capture_default_str();
  cmd->add_option("--margin", o.objective.margin, "ranking margin")
      ->capture_default_str();
  cmd->add_option("--global-weight", o.objective.global_weight,
                  "weight of the ranking term")
      ->capture_default_str();
  cmd->add_option("--l2-weight", o.objective.l2_weight,
                  "weight of the squared-norm regulariser")
      ->capture_default_str();
  cmd->add_option("--smoothing", o.objective.smoothing,
                  "additive smoothing on sentence fragment counts")
      ->capture_default_str();
  cmd->add_option("--batch-size", o.train_cfg.batch_size, "pairs per mini-batch")
      ->capture_default_str();
  cmd->add_option("--momentum", o.train_cfg.momentum, "SGD momentum")
      ->capture_default_str();
  cmd->add_option("--epochs", o.train_cfg.epochs, "training epochs")
      ->capture_default_str();
  cmd->add_option("--lr", o.train_cfg.learning_rate, "learning rate")
      ->capture_default_str();
  cmd->add_option("--anneal-factor", o.train_cfg.anneal_factor,
                  "learning-rate factor for the final epochs")
      ->capture_default_str();
  cmd->add_option("--anneal-last", o.train_cfg.anneal_last_epochs,
                  "number of final epochs run at the annealed rate")
      ->capture_default_str();
  cmd->add_option("--mil-start", o.train_cfg.mil_start_epoch,
                  "first epoch that infers latent labels")
      ->capture_default_str();
  cmd->add_option("--seed", o.train_cfg.seed,
                  "seed for initialisation and batch order")
      ->capture_default_str();
  cmd->add_option("--train-count", o.split.train_count,
                  "training records (0: all not in val/test)")
      ->capture_default_str();
  cmd->add_option("--val-count", o.split.val_count, "validation records")
      ->capture_default_str();
  cmd->add_option("--test-count", o.split.test_count, "test records")
      ->capture_default_str();
  cmd->add_option("--split-seed", o.split.seed, "record shuffle seed")
      ->capture_default_str();
  cmd->add_option("--recall-ks", o.recall_ks, "recall cutoffs")
      ->delimiter(',')
      ->default_str("1,5,10");
  cmd->add_flag("--hodosh", o.hodosh,
                "evaluate on the first sentence of each item only");
}

int run_generate(const std::string& out_dir, const fa::SyntheticSpec& spec,
                 const std::string& corpus_out,
                 const std::string& alignment_out,
                 const std::string& config_text) {
  stage("generating");
  fa::SyntheticResult result = fa::generate_synthetic(spec);
  stage("writing outputs");
  prepare_out_dir(out_dir);
  std::string corpus_path =
      corpus_out.empty() ? joined(out_dir, "corpus.jsonl") : corpus_out;
  std::string alignment_path =
      alignment_out.empty() ? joined(out_dir, "alignment.csv") : alignment_out;
  fa::save_corpus(result.corpus, corpus_path);
  write_text(alignment_path, fa::alignment_to_csv(result.alignment));
  write_text(joined(out_dir, "generate_run.cfg"), config_text);
  long sentences = 0, triplets = 0;
  for (const fa::RawRecord& r : result.corpus.records) {
    sentences += static_cast<long>(r.sentences.size());
    for (const fa::RawSentence& s : r.sentences)
      triplets += static_cast<long>(s.triplets.size());
  }
  std::cout << "wrote " << result.corpus.records.size() << " record(s), "
            << sentences << " sentence(s), " << triplets << " triplet(s) to "
            << corpus_path << '\n'
            << "wrote " << result.alignment.size() << " alignment row(s) to "
            << alignment_path << '\n';
  return 0;
}

int run_train(const std::string& out_dir, const PipelineOptions& opts,
              const std::string& config_text, std::string checkpoint_out,
              std::string trace_out) {
  PipelineRun run = run_pipeline(opts, true);

  stage("evaluating");
  double smoothing = opts.objective.smoothing;
  fa::FragmentMode mode = fa::fragment_mode_from_string(opts.fragment_mode);
  EvalOutcome val_outcome, test_outcome;
  if (!run.val_raw.records.empty()) {
    val_outcome = evaluate_subset(run.ckpt, run.val_raw, mode, smoothing,
                                  opts.recall_ks, opts.hodosh);
    print_outcome("validation", val_outcome);
  }
  if (!run.test_raw.records.empty()) {
    test_outcome = evaluate_subset(run.ckpt, run.test_raw, mode, smoothing,
                                   opts.recall_ks, opts.hodosh);
    print_outcome("test", test_outcome);
  }

  stage("writing outputs");
  prepare_out_dir(out_dir);
  if (checkpoint_out.empty()) checkpoint_out = joined(out_dir, "model.ckpt");
  if (trace_out.empty()) trace_out = joined(out_dir, "train_trace.csv");
  run.ckpt.run_config = pipeline_config_json(opts);
  fa::save_checkpoint(run.ckpt, checkpoint_out);
  write_text(trace_out, fa::trace_to_csv(run.trace));
  write_text(joined(out_dir, "train_run.cfg"), config_text);
  if (!run.val_raw.records.empty())
    write_text(joined(out_dir, "eval_val.csv"),
               fa::reports_to_csv(val_outcome.reports));
  if (!run.test_raw.records.empty())
    write_text(joined(out_dir, "eval_test.csv"),
               fa::reports_to_csv(test_outcome.reports));
  std::cout << "wrote checkpoint to " << checkpoint_out << '\n';
  return 0;
}

int run_eval(const std::string& out_dir, const std::string& checkpoint_path,
             const std::string& corpus_path, const std::string& subset_name,
             const fa::SplitSpec& split, const std::vector<int>& recall_ks,
             bool hodosh, std::string report_out,
             const std::string& config_text) {
  stage("loading checkpoint");
  fa::Checkpoint ckpt = fa::load_checkpoint(checkpoint_path);

  stage("loading corpus");
  fa::RawCorpus raw = fa::load_corpus(corpus_path);
  if (raw.dim_image != ckpt.params.dims.dim_image)
    throw std::runtime_error(
        "shape mismatch: checkpoint expects image features of width " +
        std::to_string(ckpt.params.dims.dim_image) + " but the corpus declares " +
        std::to_string(raw.dim_image));

  stage("splitting");
  fa::RawCorpus subset = raw;
  if (subset_name != "none") {
    fa::SplitIndices idx =
        fa::split_corpus(static_cast<int>(raw.records.size()), split);
    const std::vector<int>& pick = subset_name == "train" ? idx.train
                                   : subset_name == "val" ? idx.val
                                                          : idx.test;
    subset = fa::select_records(raw, pick);
    if (subset.records.empty())
      throw std::runtime_error("selected split '" + subset_name +
                               "' is empty");
  }

  stage("evaluating");
  fa::FragmentMode mode = fa::fragment_mode_from_string(
      ckpt.run_config.value("fragments", "triplets"));
  double smoothing = 10.0;
  if (ckpt.run_config.contains("objective"))
    smoothing = ckpt.run_config["objective"].value("smoothing", 10.0);
  EvalOutcome outcome =
      evaluate_subset(ckpt, subset, mode, smoothing, recall_ks, hodosh);
  print_outcome("eval", outcome);

  stage("writing outputs");
  prepare_out_dir(out_dir);
  if (report_out.empty()) report_out = joined(out_dir, "eval_report.csv");
  write_text(report_out, fa::reports_to_csv(outcome.reports));
  write_text(joined(out_dir, "eval_run.cfg"), config_text);
  std::cout << "wrote report to " << report_out << '\n';
  return 0;
}

int run_gradcheck(const fa::Dims& dims, int items, std::uint64_t seed,
                  const std::string& mode, double eps, double kink_tol,
                  double threshold) {
  stage("gradient check");
  fa::GradCheckInstance inst = fa::make_gradcheck_instance(dims, items, seed);
  fa::ObjectiveConfig cfg;
  cfg.mode = fa::objective_mode_from_string(mode);
  fa::GradCheckReport report =
      fa::grad_check(inst.params, inst.batch, cfg, eps, kink_tol);
  std::cout << fa::format_grad_report(report);
  bool ok = report.max_rel_err < threshold;
  std::cout << (ok ? "PASS" : "FAIL") << ": max relative error "
            << fa::format_double(report.max_rel_err) << " vs threshold "
            << fa::format_double(threshold) << '\n';
  return ok ? 0 : 2;
}

struct AblationRow {
  std::string name;
  std::string fragment_mode;
  fa::ObjectiveMode objective_mode;
  // The class-balanced alignment loss is normalised to unit scale while the
  // ranking loss is a raw sum over pairs, so the alignment-only model needs a
  // proportionally larger step to train at the same pace.
  double lr_scale = 1.0;
};

int run_ablate(const std::string& out_dir, const PipelineOptions& base,
               const std::vector<std::uint64_t>& seeds, std::string csv_out,
               const std::string& config_text) {
  const std::vector<AblationRow> rows = {
      {"fragment_only", "triplets", fa::ObjectiveMode::fragment_only, 100.0},
      {"global_only", "triplets", fa::ObjectiveMode::global_only, 1.0},
      {"combined_dense", "triplets", fa::ObjectiveMode::combined_dense, 1.0},
      {"combined_mil", "triplets", fa::ObjectiveMode::combined_mil, 1.0},
      {"bow", "bow", fa::ObjectiveMode::combined_mil, 1.0},
      {"bigram", "bigram", fa::ObjectiveMode::combined_mil, 1.0},
      {"devise", "devise", fa::ObjectiveMode::global_only, 1.0},
      {"fullframe", "fullframe_only", fa::ObjectiveMode::combined_mil, 1.0},
  };
  if (seeds.empty()) throw std::runtime_error("--seeds must not be empty");
  if (base.split.test_count <= 0)
    throw std::runtime_error("ablation needs a test split (--test-count)");

  std::size_t metric_count = base.recall_ks.size() + 1;  // recalls + median
  std::vector<std::vector<double>> table(
      rows.size(), std::vector<double>(2 * metric_count, 0.0));

  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::uint64_t seed : seeds) {
      PipelineOptions opts = base;
      opts.fragment_mode = rows[r].fragment_mode;
      opts.objective.mode = rows[r].objective_mode;
      opts.train_cfg.learning_rate *= rows[r].lr_scale;
      opts.train_cfg.seed = seed;
      PipelineRun run = run_pipeline(opts, false);
      stage("evaluating");
      EvalOutcome outcome = evaluate_subset(
          run.ckpt, run.test_raw, fa::fragment_mode_from_string(opts.fragment_mode),
          opts.objective.smoothing, opts.recall_ks, opts.hodosh);
      for (std::size_t d = 0; d < 2; ++d) {
        const fa::RetrievalReport& rep = outcome.reports[d];
        for (std::size_t k = 0; k < rep.recall_at.size(); ++k)
          table[r][d * metric_count + k] += rep.recall_at[k].second;
        table[r][d * metric_count + metric_count - 1] += rep.median_rank;
      }
      std::cout << "finished " << rows[r].name << " seed " << seed << '\n';
    }
    for (double& v : table[r]) v /= static_cast<double>(seeds.size());
  }

  stage("writing outputs");
  std::ostringstream text;
  text << std::left << std::setw(16) << "model";
  for (int pass = 0; pass < 2; ++pass) {
    for (int k : base.recall_ks)
      text << std::setw(7) << ("R@" + std::to_string(k));
    text << std::setw(7) << "MedR";
    if (pass == 0) text << "| ";
  }
  text << '\n' << std::setw(16) << ""
       << "---- image annotation ----  | ---- image search ----\n";
  text << std::fixed;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    text << std::left << std::setw(16) << rows[r].name;
    for (std::size_t d = 0; d < 2; ++d) {
      for (std::size_t k = 0; k + 1 < metric_count; ++k)
        text << std::setprecision(3) << std::setw(7)
             << table[r][d * metric_count + k];
      text << std::setprecision(1) << std::setw(7)
           << table[r][d * metric_count + metric_count - 1];
      if (d == 0) text << "| ";
    }
    text << '\n';
  }
  std::cout << text.str();

  std::ostringstream csv;
  csv << "model";
  for (const char* d : {"annotation", "search"}) {
    for (int k : base.recall_ks) csv << ',' << d << "_recall_at_" << k;
    csv << ',' << d << "_median_rank";
  }
  csv << '\n';
  for (std::size_t r = 0; r < rows.size(); ++r) {
    csv << rows[r].name;
    for (double v : table[r]) csv << ',' << fa::format_double(v);
    csv << '\n';
  }
  prepare_out_dir(out_dir);
  if (csv_out.empty()) csv_out = joined(out_dir, "ablation.csv");
  write_text(csv_out, csv.str());
  write_text(joined(out_dir, "ablate_run.cfg"), config_text);
  std::cout << "wrote ablation table to " << csv_out << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "trains and evaluates a shared embedding of image fragments and "
      "sentence dependency fragments for bidirectional retrieval"};
  app.require_subcommand(1);

  std::string out_dir = default_out_dir();
  int threads = 1;
  app.add_option("--out-dir", out_dir,
                 "output directory (env FRAGALIGN_OUT_DIR)")
      ->capture_default_str();
  app.add_option("--threads", threads,
                 "worker threads; 1 is the fully deterministic path")
      ->capture_default_str();
  app.set_config("--config", "",
                 "read options from a saved run file; command-line flags win");

  // generate
  CLI::App* gen = app.add_subcommand(
      "generate", "write a planted-alignment synthetic corpus");
  gen->configurable();
  fa::SyntheticSpec spec;
  spec.num_items = 250;
  spec.num_concepts = 8;
  spec.fragments_per_image = 5;
  spec.triplets_per_sentence = 3;
  spec.noise_sigma = 0.1;
  spec.dim_image = 32;
  spec.seed = 7;
  std::string corpus_out, alignment_out;
  gen->add_option("--items", spec.num_items, "records to generate")
      ->capture_default_str();
  gen->add_option("--concepts", spec.num_concepts, "distinct visual concepts")
      ->capture_default_str();
  gen->add_option("--image-fragments", spec.fragments_per_image,
                  "fragments per image")
      ->capture_default_str();
  gen->add_option("--triplets-per-sentence", spec.triplets_per_sentence,
                  "named concepts per sentence")
      ->capture_default_str();
  gen->add_option("--noise", spec.noise_sigma, "feature noise level")
      ->capture_default_str();
  gen->add_option("--image-dim", spec.dim_image, "image feature width")
      ->capture_default_str();
  gen->add_option("--seed", spec.seed, "generator seed")->capture_default_str();
  gen->add_option("--corpus-out", corpus_out,
                  "corpus path (default <out-dir>/corpus.jsonl)");
  gen->add_option("--alignment-out", alignment_out,
                  "ground-truth table path (default <out-dir>/alignment.csv)");

  // train
  CLI::App* train = app.add_subcommand(
      "train", "train a model and write a checkpoint plus loss trace");
  train->configurable();
  PipelineOptions train_opts;
  train_opts.split.test_count = 50;
  std::string mode_name = fa::to_string(train_opts.objective.mode);
  std::string checkpoint_out, trace_out;
  train->add_option("--mode", mode_name,
                    "objective: fragment_only, global_only, combined_dense, "
                    "combined_mil")
      ->capture_default_str();
  std::string fragment_mode_name = train_opts.fragment_mode;
  train->add_option("--fragments", fragment_mode_name,
                    "sentence fragment construction: triplets, bow, bigram, "
                    "devise, fullframe_only")
      ->capture_default_str();
  add_pipeline_options(train, train_opts);
  train->add_option("--checkpoint-out", checkpoint_out,
                    "checkpoint path (default <out-dir>/model.ckpt)");
  train->add_option("--trace-out", trace_out,
                    "loss trace path (default <out-dir>/train_trace.csv)");

  // eval
  CLI::App* eval = app.add_subcommand(
      "eval", "score a checkpoint on a corpus and report retrieval metrics");
  eval->configurable();
  std::string eval_checkpoint, eval_corpus, eval_subset = "none", report_out;
  fa::SplitSpec eval_split;
  eval_split.test_count = 50;
  std::vector<int> eval_ks{1, 5, 10};
  bool eval_hodosh = false;
  eval->add_option("--checkpoint", eval_checkpoint, "trained model file")
      ->required();
  eval->add_option("--corpus", eval_corpus, "corpus file (JSON lines)")
      ->required();
  eval->add_option("--split", eval_subset,
                   "evaluate a re-derived split: none, train, val, test")
      ->check(CLI::IsMember({"none", "train", "val", "test"}))
      ->capture_default_str();
  eval->add_option("--train-count", eval_split.train_count,
                   "training records (0: all not in val/test)")
      ->capture_default_str();
  eval->add_option("--val-count", eval_split.val_count, "validation records")
      ->capture_default_str();
  eval->add_option("--test-count", eval_split.test_count, "test records")
      ->capture_default_str();
  eval->add_option("--split-seed", eval_split.seed, "record shuffle seed")
      ->capture_default_str();
  eval->add_option("--recall-ks", eval_ks, "recall cutoffs")
      ->delimiter(',')
      ->default_str("1,5,10");
  eval->add_flag("--hodosh", eval_hodosh,
                 "evaluate on the first sentence of each item only");
  eval->add_option("--report-out", report_out,
                   "report path (default <out-dir>/eval_report.csv)");

  // gradcheck
  CLI::App* grad = app.add_subcommand(
      "gradcheck",
      "compare analytic gradients with finite differences on a random "
      "instance");
  grad->configurable();
  fa::Dims grad_dims{4, 5, 6};
  int grad_items = 3;
  std::uint64_t grad_seed = 0;
  std::string grad_mode = "combined_mil";
  double eps = 1e-5, kink_tol = 1e-8, threshold = 1e-6;
  grad->add_option("--word-dim", grad_dims.dim_word, "word vector width")
      ->capture_default_str();
  grad->add_option("--embed-dim", grad_dims.dim_embed, "shared space width")
      ->capture_default_str();
  grad->add_option("--image-dim", grad_dims.dim_image, "image feature width")
      ->capture_default_str();
  grad->add_option("--items", grad_items, "items in the random batch")
      ->capture_default_str();
  grad->add_option("--seed", grad_seed, "instance seed")->capture_default_str();
  grad->add_option("--mode", grad_mode, "objective mode")
      ->capture_default_str();
  grad->add_option("--eps", eps, "finite-difference step")
      ->capture_default_str();
  grad->add_option("--kink-tol", kink_tol,
                   "treat activations this close to zero as kink-adjacent")
      ->capture_default_str();
  grad->add_option("--threshold", threshold,
                   "maximum acceptable relative error")
      ->capture_default_str();

  // ablate
  CLI::App* ablate = app.add_subcommand(
      "ablate",
      "train and evaluate the objective and fragment variants, then tabulate");
  ablate->configurable();
  PipelineOptions ablate_opts;
  ablate_opts.split.test_count = 50;
  std::vector<std::uint64_t> ablate_seeds{0, 1, 2};
  std::string ablation_csv_out;
  add_pipeline_options(ablate, ablate_opts);
  ablate->add_option("--seeds", ablate_seeds, "training seeds to average over")
      ->delimiter(',')
      ->default_str("0,1,2");
  ablate->add_option("--csv-out", ablation_csv_out,
                     "table path (default <out-dir>/ablation.csv)");

  try {
    stage("argument parsing");
    app.parse(argc, argv);
    Eigen::setNbThreads(threads);

    if (gen->parsed())
      return run_generate(out_dir, spec, corpus_out, alignment_out,
                          render_run_config(out_dir, threads, gen));
    if (train->parsed()) {
      train_opts.objective.mode = fa::objective_mode_from_string(mode_name);
      train_opts.fragment_mode = fragment_mode_name;
      train_opts.objective.validate();
      train_opts.train_cfg.validate();
      return run_train(out_dir, train_opts,
                       render_run_config(out_dir, threads, train),
                       checkpoint_out, trace_out);
    }
    if (eval->parsed())
      return run_eval(out_dir, eval_checkpoint, eval_corpus, eval_subset,
                      eval_split, eval_ks, eval_hodosh, report_out,
                      render_run_config(out_dir, threads, eval));
    if (grad->parsed())
      return run_gradcheck(grad_dims, grad_items, grad_seed, grad_mode, eps,
                           kink_tol, threshold);
    if (ablate->parsed()) {
      ablate_opts.objective.validate();
      ablate_opts.train_cfg.validate();
      return run_ablate(out_dir, ablate_opts, ablate_seeds, ablation_csv_out,
                        render_run_config(out_dir, threads, ablate));
    }
    throw std::runtime_error("no subcommand selected");
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error [" << g_stage << "]: " << e.what() << '\n';
    return 1;
  }
}
