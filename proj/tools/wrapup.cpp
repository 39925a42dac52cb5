// Command-line driver: ingest -> train-lm / annotate -> analyze -> report.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "wrapup/corpus.hpp"
#include "wrapup/ngram.hpp"
#include "wrapup/pipeline.hpp"
#include "wrapup/surprisal_io.hpp"

namespace {

std::vector<std::vector<std::string>> read_sentences(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw wrapup::validation_error("cannot open " + path);
  std::vector<std::vector<std::string>> sentences;
  std::string line;
  while (std::getline(in, line)) {
    auto toks = wrapup::split_ws(line);
    if (!toks.empty()) sentences.push_back(std::move(toks));
  }
  if (sentences.empty()) throw wrapup::validation_error(path + ": no sentences");
  return sentences;
}

int cmd_ingest(const std::string& modality, const std::string& input,
               const std::string& words, const std::string& out_path) {
  wrapup::IngestReport report;
  wrapup::RtCorpus corpus;
  if (modality == "spr") {
    corpus = wrapup::load_spr_tsv(input, &report);
  } else if (modality == "et") {
    if (words.empty())
      throw wrapup::validation_error("eye-tracking ingestion needs --words");
    corpus = wrapup::load_eyetracking(words, input, &report);
  } else {
    throw wrapup::validation_error("modality must be 'spr' or 'et'");
  }
  wrapup::IngestReport avg = wrapup::average_across_subjects(corpus);
  std::ostringstream table;
  wrapup::write_word_table(corpus, table);
  wrapup::write_atomic(out_path, table.str());
  std::cerr << "ingest: " << report.rows_read << " rows read, "
            << avg.outliers_dropped << " outlier observations dropped, "
            << avg.words_skipped << " words with no retained observation\n";
  return 0;
}

int cmd_train_lm(const std::string& corpus_path, int order, int min_count,
                 const std::string& out_path) {
  wrapup::KnTrainOptions opt;
  opt.order = order;
  opt.min_count = min_count;
  wrapup::KnModel model = wrapup::train_kn(read_sentences(corpus_path), opt);
  if (wrapup::any_fallback_discount(model))
    std::cerr << "warning: degenerate count-of-counts at some order, "
                 "using fixed discount 0.75 there\n";
  std::ostringstream dump;
  model.save(dump);
  wrapup::write_atomic(out_path, dump.str());
  std::cerr << "train-lm: order " << model.order() << ", vocabulary "
            << model.predicted_vocab_size() << "\n";
  return 0;
}

int cmd_annotate(const std::string& table_path, const std::string& model_path,
                 const std::vector<std::string>& imports,
                 const std::string& punctuation, const std::string& unigram_corpus,
                 const std::string& out_path) {
  wrapup::RtCorpus corpus = wrapup::load_word_table(table_path);
  bool include_punct = punctuation != "exclude";
  wrapup::AnnotationFile ann;

  std::optional<wrapup::KnModel> model;
  if (!model_path.empty()) {
    std::ifstream in(model_path);
    if (!in) throw wrapup::validation_error("cannot open " + model_path);
    model = wrapup::KnModel::load(in);
  }

  // Unigram log-frequencies: from the LM's training corpus when a model is
  // given, from --unigram-corpus otherwise, falling back to the reading
  // corpus itself.
  wrapup::UnigramLogFreq logfreq;
  if (!unigram_corpus.empty())
    logfreq = wrapup::unigram_logfreq(read_sentences(unigram_corpus));
  else if (model)
    logfreq = model->unigram();
  else
    logfreq = wrapup::unigram_logfreq(wrapup::corpus_sentences(corpus));

  if (model) {
    auto a = wrapup::annotate_with_kn(corpus, *model);
    ann.sources.push_back(a.source);
    ann.annotations.push_back(std::move(a));
  }
  for (const auto& path : imports) {
    auto file = wrapup::load_subword_surprisals(path);
    auto a = wrapup::annotate_with_import(corpus, file, logfreq, include_punct);
    ann.sources.push_back(a.source);
    ann.annotations.push_back(std::move(a));
  }
  if (ann.annotations.empty())
    throw wrapup::validation_error("annotate needs --model and/or --import");
  wrapup::write_atomic(out_path, wrapup::render_annotation(corpus, ann));
  std::cerr << "annotate: " << ann.sources.size() << " source(s), "
            << corpus.words.size() << " words\n";
  return 0;
}

int cmd_analyze(const wrapup::RunConfig& config) {
  config.validate();
  wrapup::RtCorpus corpus = wrapup::load_word_table(config.table);
  wrapup::AnnotationFile ann = wrapup::load_annotation(config.annotation, corpus.words.size());
  size_t idx = 0;
  if (!config.source.empty()) {
    auto it = std::find(ann.sources.begin(), ann.sources.end(), config.source);
    if (it == ann.sources.end())
      throw wrapup::validation_error("annotation has no source column '" + config.source + "'");
    idx = static_cast<size_t>(it - ann.sources.begin());
  }
  auto output = wrapup::run_analysis(corpus, ann.annotations[idx], config);
  wrapup::write_analysis(output, config.out_dir);
  std::cerr << "analyze: wrote results.json, results.csv, residuals.csv to "
            << config.out_dir << "\n";
  return 0;
}

int cmd_report(const std::string& results_dir) {
  std::ifstream in(results_dir + "/results.json");
  if (!in) throw wrapup::validation_error("cannot open " + results_dir + "/results.json");
  nlohmann::json j;
  in >> j;
  std::cout << "config " << j["config_hash"].get<std::string>() << "\n";
  std::printf("%-12s %-8s %-16s %-18s %6s %12s %12s\n", "dataset", "measure",
              "position", "model", "k", "mean_delta", "std_error");
  for (const auto& r : j["results"]) {
    std::printf("%-12s %-8s %-16s %-18s %6.2f %12.6f %12.6f\n",
                r["dataset"].get<std::string>().c_str(),
                r["measure"].get<std::string>().c_str(),
                r["position_class"].get<std::string>().c_str(),
                r["model"].get<std::string>().c_str(), r["k"].get<double>(),
                r["mean_delta"].get<double>(), r["std_error"].get<double>());
  }
  if (j.contains("residual_summary") && !j["residual_summary"].contains("error")) {
    const auto& s = j["residual_summary"];
    std::printf("residuals: medial mean %.6f skew %.3f | clause-final mean %.6f skew %.3f\n",
                s["medial_mean"].get<double>(), s["medial_skewness"].get<double>(),
                s["clause_final_mean"].get<double>(),
                s["clause_final_skewness"].get<double>());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"wrap-up effect analysis pipeline"};
  app.require_subcommand(1);

  // ingest
  auto* ingest = app.add_subcommand("ingest", "build the canonical word table");
  std::string modality = "spr", input, words_path, ingest_out = "table.tsv";
  ingest->add_option("--modality", modality, "spr | et")->required();
  ingest->add_option("--input", input, "SPR TSV or eye-tracking fixation log")->required();
  ingest->add_option("--words", words_path, "tokenized text, one sentence per line (et)");
  ingest->add_option("--out", ingest_out, "output word table TSV");

  // train-lm
  auto* train = app.add_subcommand("train-lm", "train a Kneser-Ney n-gram model");
  std::string train_corpus, model_out = "model.kn";
  int order = 5, min_count = 2;
  train->add_option("--corpus", train_corpus, "plain text, one sentence per line")->required();
  train->add_option("--order", order, "n-gram order (default 5)");
  train->add_option("--min-count", min_count, "unk threshold (default 2)");
  train->add_option("--out", model_out, "model dump path");

  // annotate
  auto* annotate = app.add_subcommand("annotate", "per-word surprisal annotation");
  std::string table_path, model_path, punctuation = "include", unigram_corpus;
  std::string ann_out = "annotation.tsv";
  std::vector<std::string> imports;
  annotate->add_option("--table", table_path, "word table TSV")->required();
  annotate->add_option("--model", model_path, "trained KN model");
  annotate->add_option("--import", imports, "subword surprisal JSONL (repeatable)");
  annotate->add_option("--punctuation", punctuation, "include | exclude (imports only)");
  annotate->add_option("--unigram-corpus", unigram_corpus,
                       "corpus for unigram log-frequency when no model is given");
  annotate->add_option("--out", ann_out, "annotation TSV path");

  // analyze
  auto* analyze = app.add_subcommand("analyze", "cross-validated DeltaLogLik sweep");
  wrapup::RunConfig config;
  std::string config_path, k_grid_arg;
  analyze->add_option("--config", config_path, "JSON config; flags override");
  auto* t = analyze->add_option("--table", config.table, "word table TSV");
  auto* a = analyze->add_option("--annotation", config.annotation, "annotation TSV");
  analyze->add_option("--source", config.source, "annotation column (default: first)");
  analyze->add_option("--dataset", config.dataset, "dataset label");
  analyze->add_option("--k-grid", k_grid_arg, "comma-separated exponents, must include 0 and 1");
  analyze->add_option("--folds", config.folds, "cross-validation folds (default 10)");
  analyze->add_option("--seed", config.seed, "fold assignment seed (default 0)");
  analyze->add_option("--response", config.response, "log | raw");
  analyze->add_option("--measure", config.measure, "rt | go-past");
  analyze->add_option("--position", config.position, "clause-final | medial | both");
  analyze->add_option("--scope", config.scope,
                      "sentence-so-far | whole-preceding-excluding-sentence | include-target");
  analyze->add_option("--out", config.out_dir, "output directory");

  // report
  auto* report = app.add_subcommand("report", "print a results summary");
  std::string results_dir = ".";
  report->add_option("--results", results_dir, "directory with results.json");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*ingest) return cmd_ingest(modality, input, words_path, ingest_out);
    if (*train) return cmd_train_lm(train_corpus, order, min_count, model_out);
    if (*annotate)
      return cmd_annotate(table_path, model_path, imports, punctuation,
                          unigram_corpus, ann_out);
    if (*analyze) {
      wrapup::RunConfig base = config_path.empty() ? wrapup::RunConfig{} :
                               wrapup::load_config(config_path);
      // Flags override config-file keys; start from the file and copy over
      // anything the user set on the command line.
      if (!config_path.empty()) {
        if (!t->count()) config.table = base.table;
        if (!a->count()) config.annotation = base.annotation;
        auto keep = [&](const char* flag, auto& dst, auto& src) {
          if (!analyze->count(flag)) dst = src;
        };
        keep("--source", config.source, base.source);
        keep("--dataset", config.dataset, base.dataset);
        keep("--folds", config.folds, base.folds);
        keep("--seed", config.seed, base.seed);
        keep("--response", config.response, base.response);
        keep("--measure", config.measure, base.measure);
        keep("--position", config.position, base.position);
        keep("--scope", config.scope, base.scope);
        keep("--out", config.out_dir, base.out_dir);
        if (k_grid_arg.empty()) config.k_grid = base.k_grid;
      }
      if (!k_grid_arg.empty()) {
        config.k_grid.clear();
        for (auto part : wrapup::split(k_grid_arg, ','))
          config.k_grid.push_back(std::stod(std::string(part)));
      }
      return cmd_analyze(config);
    }
    if (*report) return cmd_report(results_dir);
  } catch (const wrapup::validation_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const wrapup::computation_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
