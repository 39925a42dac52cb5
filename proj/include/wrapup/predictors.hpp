#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "wrapup/corpus.hpp"
#include "wrapup/util.hpp"

namespace wrapup {

// Per-word surprisal values from one source model, aligned to a corpus,
// together with the unigram log-frequency predictor.
struct SurprisalAnnotation {
  std::string source;  // "kn5" or "imported:<name>"
  std::vector<double> surprisal;  // nats, one per corpus word
  std::vector<double> logfreq;    // lowercased unigram log-probability, nats
  bool includes_punctuation = true;
};

enum class PositionClass { ClauseFinal, SentenceMedial };
enum class Measure { RT, GoPast };
enum class ResponseTransform { Log, Raw };

// Which words count as "context" for INF^(k).
enum class ContextScope {
  SentenceSoFar,            // words strictly before the target, same sentence
  WholePrecedingExcludingSentence,  // everything before the target's sentence
  IncludeTarget             // sentence so far plus the target itself
};

struct KGrid {
  std::vector<double> values;
  void validate() const {
    if (values.empty()) throw validation_error("k grid is empty");
    bool has0 = false, has1 = false;
    for (double k : values) {
      if (k < 0) throw validation_error("k grid contains a negative exponent");
      if (k == 0) has0 = true;
      if (k == 1) has1 = true;
    }
    if (!has0 || !has1)
      throw validation_error("k grid must contain the reference points 0 and 1");
  }
};

struct FeatureRow {
  size_t word_index = 0;
  uint64_t sentence_key = 0;  // fold assignment key
  double response = 0;
  std::vector<double> baseline;
  std::vector<double> context;  // context surprisals, for INF^(k)
  std::optional<double> inf_k;
  PositionClass position_class = PositionClass::SentenceMedial;
};

// INF^(k): sum of surprisals raised to the k-th power; 0^0 = 1, so k = 0
// returns the context length.
inline double inf_k(std::span<const double> surprisals, double k) {
  if (k < 0) throw validation_error("inf_k exponent must be >= 0");
  double total = 0;
  for (double s : surprisals) total += std::pow(s, k);
  return total;
}

// Surprisals of the context words for a target, per the configured scope.
inline std::vector<double> context_surprisals(const RtCorpus& corpus,
                                              const SurprisalAnnotation& annotation,
                                              size_t target,
                                              ContextScope scope = ContextScope::SentenceSoFar) {
  std::vector<double> out;
  const int sent = corpus.words[target].sentence_id;
  switch (scope) {
    case ContextScope::SentenceSoFar:
    case ContextScope::IncludeTarget:
      for (size_t i = target; i-- > 0;) {
        if (corpus.words[i].sentence_id != sent) break;
        out.push_back(annotation.surprisal[i]);
      }
      std::reverse(out.begin(), out.end());
      if (scope == ContextScope::IncludeTarget)
        out.push_back(annotation.surprisal[target]);
      break;
    case ContextScope::WholePrecedingExcludingSentence:
      for (size_t i = 0; i < target; ++i)
        if (corpus.words[i].sentence_id != sent)
          out.push_back(annotation.surprisal[i]);
      break;
  }
  return out;
}

struct DesignOptions {
  std::optional<double> k;
  Measure measure = Measure::RT;
  ResponseTransform response = ResponseTransform::Log;
  ContextScope scope = ContextScope::SentenceSoFar;
};

inline std::vector<std::string> baseline_feature_names(Modality modality) {
  std::vector<std::string> names = {
      "surprisal",      "logfreq",      "len",      "len_x_logfreq",
      "surprisal_prev", "logfreq_prev", "len_prev", "len_prev_x_logfreq_prev"};
  if (modality == Modality::SPR) names.push_back("surprisal_prev2");
  return names;
}

// One row per word of the requested class that has a retained response and a
// full spill-over window. Predictors are emitted unstandardized; fitting
// code standardizes with training-fold statistics.
inline std::vector<FeatureRow> build_design(const RtCorpus& corpus,
                                            const SurprisalAnnotation& annotation,
                                            PositionClass position_class,
                                            const DesignOptions& opt = {}) {
  if (annotation.surprisal.size() != corpus.words.size() ||
      annotation.logfreq.size() != corpus.words.size())
    throw validation_error("annotation does not cover the corpus");
  const size_t window = corpus.modality == Modality::SPR ? 2 : 1;
  size_t dropped_class = 0, dropped_rt = 0, dropped_window = 0;
  std::vector<FeatureRow> rows;
  for (size_t t = 0; t < corpus.words.size(); ++t) {
    const WordRecord& w = corpus.words[t];
    PositionClass cls = w.is_clause_final ? PositionClass::ClauseFinal
                                          : PositionClass::SentenceMedial;
    if (cls != position_class) {
      ++dropped_class;
      continue;
    }
    const std::optional<double>& resp =
        opt.measure == Measure::RT ? w.mean_rt : w.mean_go_past;
    if (!resp || *resp <= 0) {
      ++dropped_rt;
      continue;
    }
    if (t < window) {
      ++dropped_window;
      continue;
    }
    FeatureRow row;
    row.word_index = t;
    row.sentence_key = mix64(static_cast<uint64_t>(w.sentence_id) + 0x51ab);
    row.response = opt.response == ResponseTransform::Log ? std::log(*resp) : *resp;
    row.position_class = cls;
    auto push_word = [&](size_t i, bool with_interaction) {
      row.baseline.push_back(annotation.surprisal[i]);
      if (with_interaction) {
        double lf = annotation.logfreq[i];
        double len = corpus.words[i].char_len;
        row.baseline.push_back(lf);
        row.baseline.push_back(len);
        row.baseline.push_back(len * lf);
      }
    };
    push_word(t, true);
    push_word(t - 1, true);
    if (corpus.modality == Modality::SPR) push_word(t - 2, false);
    row.context = context_surprisals(corpus, annotation, t, opt.scope);
    if (opt.k) row.inf_k = inf_k(row.context, *opt.k);
    rows.push_back(std::move(row));
  }
  if (rows.empty()) {
    std::string why = "design is empty: ";
    if (dropped_class == corpus.words.size())
      why += "no words of the requested position class";
    else if (dropped_rt > 0 && dropped_window == 0)
      why += "all candidate words lack a retained response";
    else
      why += "all candidate words were removed by the response or spill-over window filters";
    throw computation_error(why);
  }
  return rows;
}

}  // namespace wrapup
