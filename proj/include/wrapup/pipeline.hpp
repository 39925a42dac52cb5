#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "wrapup/corpus.hpp"
#include "wrapup/ngram.hpp"
#include "wrapup/predictors.hpp"
#include "wrapup/regression.hpp"
#include "wrapup/surprisal_io.hpp"
#include "wrapup/util.hpp"

namespace wrapup {

struct RunConfig {
  std::string dataset = "dataset";
  std::string table;              // canonical word table path
  std::string annotation;         // annotation TSV path
  std::string source;             // annotation column to analyze ("" = first)
  std::vector<double> k_grid = {0, 0.5, 1, 1.5, 2, 2.5, 3};
  int folds = 10;
  uint64_t seed = 0;
  std::string response = "log";   // log | raw
  std::string measure = "rt";     // rt | go-past
  std::string position = "both";  // clause-final | medial | both
  std::string scope = "sentence-so-far";
  std::string out_dir = ".";

  nlohmann::json to_json() const {
    return nlohmann::json{{"dataset", dataset},
                          {"table", table},
                          {"annotation", annotation},
                          {"source", source},
                          {"k_grid", k_grid},
                          {"folds", folds},
                          {"seed", seed},
                          {"response", response},
                          {"measure", measure},
                          {"position", position},
                          {"scope", scope}};
  }

  // Hash of everything that affects the numbers; the output directory is
  // not part of to_json() so reruns into different places stay comparable.
  std::string hash() const {
    nlohmann::json j = to_json();
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(fnv1a(j.dump())));
    return buf;
  }

  ResponseTransform response_transform() const {
    if (response == "log") return ResponseTransform::Log;
    if (response == "raw") return ResponseTransform::Raw;
    throw validation_error("response must be 'log' or 'raw'");
  }
  Measure measure_kind() const {
    if (measure == "rt") return Measure::RT;
    if (measure == "go-past") return Measure::GoPast;
    throw validation_error("measure must be 'rt' or 'go-past'");
  }
  ContextScope context_scope() const {
    if (scope == "sentence-so-far") return ContextScope::SentenceSoFar;
    if (scope == "whole-preceding-excluding-sentence")
      return ContextScope::WholePrecedingExcludingSentence;
    if (scope == "include-target") return ContextScope::IncludeTarget;
    throw validation_error("unknown context scope '" + scope + "'");
  }
  void validate() const {
    if (folds < 2) throw validation_error("folds must be >= 2");
    KGrid{k_grid}.validate();
    response_transform();
    measure_kind();
    context_scope();
    if (position != "clause-final" && position != "medial" && position != "both")
      throw validation_error("position must be clause-final, medial, or both");
  }
};

// Flat JSON config file; CLI flags override individual keys.
inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw validation_error("cannot open config " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw validation_error(path + ": " + e.what());
  }
  RunConfig c;
  c.dataset = j.value("dataset", c.dataset);
  c.table = j.value("table", c.table);
  c.annotation = j.value("annotation", c.annotation);
  c.source = j.value("source", c.source);
  if (j.contains("k_grid")) c.k_grid = j["k_grid"].get<std::vector<double>>();
  c.folds = j.value("folds", c.folds);
  c.seed = j.value("seed", c.seed);
  c.response = j.value("response", c.response);
  c.measure = j.value("measure", c.measure);
  c.position = j.value("position", c.position);
  c.scope = j.value("scope", c.scope);
  c.out_dir = j.value("out_dir", c.out_dir);
  return c;
}

inline std::string format_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

// All outputs are written to a temp file and renamed into place.
inline void write_atomic(const std::string& path, const std::string& content) {
  std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw validation_error("cannot write " + tmp);
    out << content;
  }
  std::filesystem::rename(tmp, path);
}

// ---------------------------------------------------------------------------
// Annotation files: word-aligned surprisal columns plus unigram log-frequency
// ---------------------------------------------------------------------------

struct AnnotationFile {
  std::vector<std::string> sources;
  std::vector<SurprisalAnnotation> annotations;  // parallel to sources
};

inline std::string render_annotation(const RtCorpus& corpus, const AnnotationFile& ann) {
  std::ostringstream out;
  out << "sentence_id\tword_pos\tword\tlogfreq";
  for (const auto& s : ann.sources) out << '\t' << s;
  out << '\n';
  for (size_t i = 0; i < corpus.words.size(); ++i) {
    const auto& w = corpus.words[i];
    out << w.sentence_id << '\t' << w.position_in_sentence << '\t' << w.text << '\t'
        << format_double(ann.annotations[0].logfreq[i]);
    for (const auto& a : ann.annotations) out << '\t' << format_double(a.surprisal[i]);
    out << '\n';
  }
  return out.str();
}

inline AnnotationFile load_annotation(const std::string& path, size_t n_words) {
  std::ifstream in(path);
  if (!in) throw validation_error("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw validation_error(path + ": empty file");
  auto header = split(line, '\t');
  if (header.size() < 5)
    throw validation_error(path + ": header must have logfreq plus at least one source");
  AnnotationFile ann;
  for (size_t c = 4; c < header.size(); ++c) {
    ann.sources.emplace_back(header[c]);
    SurprisalAnnotation a;
    a.source = std::string(header[c]);
    ann.annotations.push_back(std::move(a));
  }
  size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto f = split(line, '\t');
    if (f.size() != header.size())
      throw validation_error(path + ":" + std::to_string(lineno) + ": field count mismatch");
    try {
      double lf = std::stod(std::string(f[3]));
      for (size_t c = 0; c < ann.annotations.size(); ++c) {
        ann.annotations[c].logfreq.push_back(lf);
        ann.annotations[c].surprisal.push_back(std::stod(std::string(f[4 + c])));
      }
    } catch (const std::exception&) {
      throw validation_error(path + ":" + std::to_string(lineno) + ": malformed number");
    }
  }
  for (const auto& a : ann.annotations)
    if (a.surprisal.size() != n_words)
      throw validation_error(path + ": annotation rows (" +
                             std::to_string(a.surprisal.size()) +
                             ") do not match word table (" + std::to_string(n_words) + ")");
  return ann;
}

// Group corpus word texts into sentences, in order.
inline std::vector<std::vector<std::string>> corpus_sentences(const RtCorpus& corpus) {
  std::vector<std::vector<std::string>> sentences;
  int last = INT32_MIN;
  for (const auto& w : corpus.words) {
    if (w.sentence_id != last) {
      sentences.emplace_back();
      last = w.sentence_id;
    }
    sentences.back().push_back(w.text);
  }
  return sentences;
}

// Built-in KN annotation: per-sentence chained surprisals plus the model's
// lowercased unigram log-frequencies.
inline SurprisalAnnotation annotate_with_kn(const RtCorpus& corpus, const KnModel& model) {
  SurprisalAnnotation a;
  a.source = "kn" + std::to_string(model.order());
  for (const auto& sent : corpus_sentences(corpus)) {
    auto s = model.sequence_surprisals(sent);
    a.surprisal.insert(a.surprisal.end(), s.begin(), s.end());
  }
  for (const auto& w : corpus.words) a.logfreq.push_back(model.unigram_logprob(w.text));
  return a;
}

// Imported neural-LM annotation from a subword JSONL file.
inline SurprisalAnnotation annotate_with_import(const RtCorpus& corpus,
                                                const SubwordFile& file,
                                                const UnigramLogFreq& logfreq,
                                                bool include_punctuation) {
  std::vector<std::string> words;
  for (const auto& w : corpus.words) words.push_back(w.text);
  WordSurprisals ws = align_subwords_to_words(file, words, !include_punctuation);
  SurprisalAnnotation a;
  a.source = "imported:" + file.model;
  a.surprisal = std::move(ws.values);
  a.includes_punctuation = include_punctuation;
  for (const auto& w : corpus.words) a.logfreq.push_back(logfreq(w.text));
  return a;
}

// ---------------------------------------------------------------------------
// Analysis driver
// ---------------------------------------------------------------------------

struct AnalysisOutput {
  std::string json;
  std::string csv;
  std::string residuals_csv;
};

inline AnalysisOutput run_analysis(const RtCorpus& corpus,
                                   const SurprisalAnnotation& annotation,
                                   const RunConfig& config) {
  config.validate();
  DesignOptions dopt;
  dopt.measure = config.measure_kind();
  dopt.response = config.response_transform();
  dopt.scope = config.context_scope();
  auto names = baseline_feature_names(corpus.modality);
  CvOptions cv{config.folds, config.seed};

  std::vector<std::pair<std::string, PositionClass>> classes;
  if (config.position == "clause-final" || config.position == "both")
    classes.emplace_back("clause_final", PositionClass::ClauseFinal);
  if (config.position == "medial" || config.position == "both")
    classes.emplace_back("sentence_medial", PositionClass::SentenceMedial);

  std::string hash = config.hash();
  nlohmann::json results = nlohmann::json::array();
  std::ostringstream csv;
  csv << "# config_hash=" << hash << "\n";
  csv << "dataset,measure,position_class,model,k,mean_delta,std_error\n";

  for (const auto& [label, cls] : classes) {
    auto rows = build_design(corpus, annotation, cls, dopt);
    auto sweep = sweep_k(rows, KGrid{config.k_grid}, cv, names);
    for (const auto& r : sweep) {
      results.push_back({{"dataset", config.dataset},
                         {"measure", config.measure},
                         {"position_class", label},
                         {"model", annotation.source},
                         {"k", r.k},
                         {"mean_delta", r.mean_delta},
                         {"std_error", r.std_error},
                         {"fold_means", r.fold_means},
                         {"n_points", r.n_points}});
      csv << config.dataset << ',' << config.measure << ',' << label << ','
          << annotation.source << ',' << format_double(r.k) << ','
          << format_double(r.mean_delta) << ',' << format_double(r.std_error) << "\n";
    }
  }

  // Residual diagnostic: baseline fit to sentence-medial log RTs, residuals
  // for both classes.
  std::ostringstream res_csv;
  res_csv << "# config_hash=" << hash << "\n";
  res_csv << "dataset,measure,position_class,residual\n";
  nlohmann::json res_summary;
  try {
    DesignOptions ropt = dopt;
    ropt.response = ResponseTransform::Log;
    auto medial = build_design(corpus, annotation, PositionClass::SentenceMedial, ropt);
    auto final_rows = build_design(corpus, annotation, PositionClass::ClauseFinal, ropt);
    auto diag = residual_diagnostic(medial, final_rows, names);
    for (double r : diag.medial_residuals)
      res_csv << config.dataset << ',' << config.measure << ",sentence_medial,"
              << format_double(r) << "\n";
    for (double r : diag.final_residuals)
      res_csv << config.dataset << ',' << config.measure << ",clause_final,"
              << format_double(r) << "\n";
    res_summary = {{"medial_mean", diag.medial.mean},
                   {"medial_skewness", diag.medial.skewness},
                   {"clause_final_mean", diag.final.mean},
                   {"clause_final_skewness", diag.final.skewness}};
  } catch (const computation_error& e) {
    res_summary = {{"error", e.what()}};
  }

  nlohmann::json out{{"config", config.to_json()},
                     {"config_hash", hash},
                     {"results", results},
                     {"residual_summary", res_summary}};
  AnalysisOutput output;
  output.json = out.dump(2) + "\n";
  output.csv = csv.str();
  output.residuals_csv = res_csv.str();
  return output;
}

inline void write_analysis(const AnalysisOutput& out, const std::string& dir) {
  std::filesystem::create_directories(dir);
  write_atomic(dir + "/results.json", out.json);
  write_atomic(dir + "/results.csv", out.csv);
  write_atomic(dir + "/residuals.csv", out.residuals_csv);
}

}  // namespace wrapup
