#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "wrapup/text.hpp"
#include "wrapup/util.hpp"

namespace wrapup {

enum class Modality { SPR, EyeTracking };

struct RawFixation {
  std::string subject_id;
  int word_index = 0;   // 0-based position in the text
  int onset_order = 0;  // ordinal position in the fixation sequence
  double duration = 0;  // ms, > 0
};

struct WordRecord {
  std::string text;
  int char_len = 0;
  int sentence_id = 0;
  int position_in_sentence = 0;
  bool is_clause_final = false;
  std::map<std::string, double> rt_by_subject;       // total RT per subject
  std::map<std::string, double> go_past_by_subject;  // eye-tracking only
  std::optional<double> mean_rt;
  std::optional<double> mean_go_past;
  int n_subjects_retained = 0;
};

struct RtCorpus {
  std::vector<WordRecord> words;
  Modality modality = Modality::SPR;
  std::string name;
};

struct IngestReport {
  size_t rows_read = 0;
  size_t outliers_dropped = 0;
  size_t words_skipped = 0;  // words with no retained observation
};

// Per-word total reading time: sum of all fixation durations on the word.
// Never-fixated words are absent from the result (skipped, not 0 ms).
inline std::map<int, double> aggregate_fixations(
    const std::vector<RawFixation>& fixations, int n_words) {
  std::map<int, double> rt;
  for (const auto& f : fixations) {
    if (f.duration < 0)
      throw validation_error("negative fixation duration for word index " +
                             std::to_string(f.word_index));
    if (f.word_index < 0 || f.word_index >= n_words)
      throw validation_error("fixation word index " +
                             std::to_string(f.word_index) + " out of range");
    rt[f.word_index] += f.duration;
  }
  return rt;
}

// Go-past (regression) time: total duration from the first fixation on
// `target` up to, but excluding, the first later fixation on a word to the
// right of `target`. Fixations must be in onset order. Absent if the target
// was never fixated; runs through end of trial if the reader never moves on.
inline std::optional<double> compute_go_past(
    const std::vector<RawFixation>& fixations, int target) {
  size_t first = fixations.size();
  for (size_t i = 0; i < fixations.size(); ++i) {
    if (fixations[i].word_index == target) {
      first = i;
      break;
    }
  }
  if (first == fixations.size()) return std::nullopt;
  double total = 0;
  for (size_t i = first; i < fixations.size(); ++i) {
    if (fixations[i].word_index > target) break;
    total += fixations[i].duration;
  }
  return total;
}

// Log-normal outlier rule: retain v iff |ln v - mu| <= 3 sigma, with mu and
// sigma the sample mean/std of ln(values). sigma = 0 retains everything.
inline std::vector<bool> filter_outliers(const std::vector<double>& values) {
  for (double v : values)
    if (!(v > 0)) throw validation_error("non-positive reading time in outlier filter");
  size_t n = values.size();
  std::vector<bool> keep(n, true);
  if (n < 2) return keep;
  std::vector<double> logs(n);
  for (size_t i = 0; i < n; ++i) logs[i] = std::log(values[i]);
  double mu = 0;
  for (double l : logs) mu += l;
  mu /= static_cast<double>(n);
  double ss = 0;
  for (double l : logs) ss += (l - mu) * (l - mu);
  double sigma = std::sqrt(ss / static_cast<double>(n - 1));
  if (sigma == 0) return keep;
  for (size_t i = 0; i < n; ++i) keep[i] = std::fabs(logs[i] - mu) <= 3 * sigma;
  return keep;
}

namespace detail {

// Pool every per-subject value of one measure across the corpus, fit the
// log-normal once, then average each word's retained values.
template <typename GetMap, typename SetMean>
size_t average_measure(RtCorpus& corpus, GetMap get_map, SetMean set_mean) {
  std::vector<double> pooled;
  for (const auto& w : corpus.words)
    for (const auto& [subj, v] : get_map(w)) pooled.push_back(v);
  if (pooled.empty()) return 0;
  std::vector<bool> keep = filter_outliers(pooled);
  size_t cursor = 0, dropped = 0;
  for (auto& w : corpus.words) {
    double sum = 0;
    int kept = 0;
    for (const auto& [subj, v] : get_map(w)) {
      if (keep[cursor++]) {
        sum += v;
        ++kept;
      } else {
        ++dropped;
      }
    }
    set_mean(w, kept ? std::optional<double>(sum / kept) : std::nullopt, kept);
  }
  return dropped;
}

}  // namespace detail

// Fills mean_rt (and mean_go_past for eye-tracking) by outlier-filtering the
// pooled per-subject values, one global log-normal fit per corpus and
// measure, then averaging the retained values per word.
inline IngestReport average_across_subjects(RtCorpus& corpus) {
  if (corpus.words.empty()) throw validation_error("empty corpus");
  IngestReport report;
  report.outliers_dropped += detail::average_measure(
      corpus, [](const WordRecord& w) -> const auto& { return w.rt_by_subject; },
      [](WordRecord& w, std::optional<double> m, int kept) {
        w.mean_rt = m;
        w.n_subjects_retained = kept;
      });
  report.outliers_dropped += detail::average_measure(
      corpus,
      [](const WordRecord& w) -> const auto& { return w.go_past_by_subject; },
      [](WordRecord& w, std::optional<double> m, int) { w.mean_go_past = m; });
  for (const auto& w : corpus.words)
    if (!w.mean_rt) ++report.words_skipped;
  return report;
}

// ---------------------------------------------------------------------------
// File formats
// ---------------------------------------------------------------------------

// SPR input: TSV with header `subject_id sentence_id word_pos word rt_ms`,
// one row per (subject, word).
inline RtCorpus load_spr_tsv(const std::string& path, IngestReport* report = nullptr) {
  std::ifstream in(path);
  if (!in) throw validation_error("cannot open " + path);
  RtCorpus corpus;
  corpus.modality = Modality::SPR;
  corpus.name = path;
  std::string line;
  if (!std::getline(in, line)) throw validation_error(path + ": empty file");
  std::map<std::pair<int, int>, size_t> index;  // (sentence, pos) -> word slot
  size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto f = split(line, '\t');
    if (f.size() != 5)
      throw validation_error(path + ":" + std::to_string(lineno) +
                             ": expected 5 fields, got " + std::to_string(f.size()));
    std::string subj(f[0]);
    int sent, pos;
    double rt;
    try {
      sent = std::stoi(std::string(f[1]));
      pos = std::stoi(std::string(f[2]));
      rt = std::stod(std::string(f[4]));
    } catch (const std::exception&) {
      throw validation_error(path + ":" + std::to_string(lineno) + ": malformed number");
    }
    if (rt <= 0)
      throw validation_error(path + ":" + std::to_string(lineno) + ": rt_ms must be > 0");
    std::string word(f[3]);
    auto key = std::make_pair(sent, pos);
    auto it = index.find(key);
    if (it == index.end()) {
      WordRecord w;
      w.text = word;
      w.char_len = char_length(word);
      w.sentence_id = sent;
      w.position_in_sentence = pos;
      w.is_clause_final = !word.empty() && is_clause_final_punct(last_codepoint(word));
      index[key] = corpus.words.size();
      corpus.words.push_back(std::move(w));
      it = index.find(key);
    }
    corpus.words[it->second].rt_by_subject[subj] = rt;
    if (report) ++report->rows_read;
  }
  std::sort(corpus.words.begin(), corpus.words.end(),
            [](const WordRecord& a, const WordRecord& b) {
              return std::tie(a.sentence_id, a.position_in_sentence) <
                     std::tie(b.sentence_id, b.position_in_sentence);
            });
  return corpus;
}

// Eye-tracking input: a tokenized text file (one sentence per line) giving
// the words, plus a fixation log TSV with header
// `subject_id fixation_order word_index duration_ms`. word_index is 0-based
// into the whole text.
inline RtCorpus load_eyetracking(const std::string& words_path,
                                 const std::string& fixations_path,
                                 IngestReport* report = nullptr) {
  std::ifstream win(words_path);
  if (!win) throw validation_error("cannot open " + words_path);
  RtCorpus corpus;
  corpus.modality = Modality::EyeTracking;
  corpus.name = fixations_path;
  std::string line;
  int sent = 0;
  while (std::getline(win, line)) {
    auto toks = split_ws(line);
    if (toks.empty()) continue;
    for (size_t p = 0; p < toks.size(); ++p) {
      WordRecord w;
      w.text = toks[p];
      w.char_len = char_length(w.text);
      w.sentence_id = sent;
      w.position_in_sentence = static_cast<int>(p);
      w.is_clause_final = is_clause_final_punct(last_codepoint(w.text));
      corpus.words.push_back(std::move(w));
    }
    ++sent;
  }
  if (corpus.words.empty()) throw validation_error(words_path + ": no words");

  std::ifstream fin(fixations_path);
  if (!fin) throw validation_error("cannot open " + fixations_path);
  if (!std::getline(fin, line)) throw validation_error(fixations_path + ": empty file");
  std::map<std::string, std::vector<RawFixation>> by_subject;
  size_t lineno = 1;
  while (std::getline(fin, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto f = split(line, '\t');
    if (f.size() != 4)
      throw validation_error(fixations_path + ":" + std::to_string(lineno) +
                             ": expected 4 fields, got " + std::to_string(f.size()));
    RawFixation fx;
    fx.subject_id = std::string(f[0]);
    try {
      fx.onset_order = std::stoi(std::string(f[1]));
      fx.word_index = std::stoi(std::string(f[2]));
      fx.duration = std::stod(std::string(f[3]));
    } catch (const std::exception&) {
      throw validation_error(fixations_path + ":" + std::to_string(lineno) +
                             ": malformed number");
    }
    if (fx.duration <= 0)
      throw validation_error(fixations_path + ":" + std::to_string(lineno) +
                             ": duration_ms must be > 0");
    if (fx.word_index < 0 || fx.word_index >= static_cast<int>(corpus.words.size()))
      throw validation_error(fixations_path + ":" + std::to_string(lineno) +
                             ": word_index out of range");
    by_subject[fx.subject_id].push_back(fx);
    if (report) ++report->rows_read;
  }
  for (auto& [subj, fxs] : by_subject) {
    std::sort(fxs.begin(), fxs.end(), [](const RawFixation& a, const RawFixation& b) {
      return a.onset_order < b.onset_order;
    });
    auto totals = aggregate_fixations(fxs, static_cast<int>(corpus.words.size()));
    for (const auto& [widx, rt] : totals) {
      corpus.words[widx].rt_by_subject[subj] = rt;
      auto gp = compute_go_past(fxs, widx);
      if (gp) corpus.words[widx].go_past_by_subject[subj] = *gp;
    }
  }
  return corpus;
}

// Canonical word table:
// sentence_id word_pos word char_len clause_final mean_rt mean_go_past n_subjects_retained
// Absent means are written as NA.
inline void write_word_table(const RtCorpus& corpus, std::ostream& out) {
  out << "sentence_id\tword_pos\tword\tchar_len\tclause_final\tmean_rt\t"
         "mean_go_past\tn_subjects_retained\n";
  auto fmt = [](const std::optional<double>& v) {
    if (!v) return std::string("NA");
    std::ostringstream os;
    os.precision(17);
    os << *v;
    return os.str();
  };
  for (const auto& w : corpus.words) {
    out << w.sentence_id << '\t' << w.position_in_sentence << '\t' << w.text
        << '\t' << w.char_len << '\t' << (w.is_clause_final ? 1 : 0) << '\t'
        << fmt(w.mean_rt) << '\t' << fmt(w.mean_go_past) << '\t'
        << w.n_subjects_retained << '\n';
  }
}

inline RtCorpus load_word_table(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw validation_error("cannot open " + path);
  RtCorpus corpus;
  corpus.name = path;
  std::string line;
  if (!std::getline(in, line)) throw validation_error(path + ": empty file");
  size_t lineno = 1;
  bool any_go_past = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    auto f = split(line, '\t');
    if (f.size() != 8)
      throw validation_error(path + ":" + std::to_string(lineno) +
                             ": expected 8 fields, got " + std::to_string(f.size()));
    WordRecord w;
    try {
      w.sentence_id = std::stoi(std::string(f[0]));
      w.position_in_sentence = std::stoi(std::string(f[1]));
      w.text = std::string(f[2]);
      w.char_len = std::stoi(std::string(f[3]));
      w.is_clause_final = std::stoi(std::string(f[4])) != 0;
      if (f[5] != "NA") w.mean_rt = std::stod(std::string(f[5]));
      if (f[6] != "NA") {
        w.mean_go_past = std::stod(std::string(f[6]));
        any_go_past = true;
      }
      w.n_subjects_retained = std::stoi(std::string(f[7]));
    } catch (const validation_error&) {
      throw;
    } catch (const std::exception&) {
      throw validation_error(path + ":" + std::to_string(lineno) + ": malformed row");
    }
    corpus.words.push_back(std::move(w));
  }
  corpus.modality = any_go_past ? Modality::EyeTracking : Modality::SPR;
  return corpus;
}

}  // namespace wrapup
