#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "wrapup/text.hpp"
#include "wrapup/util.hpp"

namespace wrapup {

// Unigram maximum-likelihood log-probabilities over the lowercased training
// corpus. Words below the count threshold (and all unseen words) map to unk.
class UnigramLogFreq {
 public:
  UnigramLogFreq() = default;
  UnigramLogFreq(std::unordered_map<std::string, double> logp, double unk_logp)
      : logp_(std::move(logp)), unk_logp_(unk_logp) {}

  double operator()(const std::string& word) const {
    auto it = logp_.find(to_lower_ascii(word));
    return it == logp_.end() ? unk_logp_ : it->second;
  }
  double unk_logp() const { return unk_logp_; }
  const std::unordered_map<std::string, double>& table() const { return logp_; }

 private:
  std::unordered_map<std::string, double> logp_;
  double unk_logp_ = 0;
};

inline UnigramLogFreq unigram_logfreq(
    const std::vector<std::vector<std::string>>& sentences, int min_count = 2) {
  std::unordered_map<std::string, int64_t> counts;
  int64_t total = 0;
  for (const auto& s : sentences)
    for (const auto& w : s) {
      ++counts[to_lower_ascii(w)];
      ++total;
    }
  if (total == 0) throw validation_error("empty corpus for unigram estimation");
  int64_t unk_count = 0;
  std::unordered_map<std::string, double> logp;
  for (const auto& [w, c] : counts) {
    if (c < min_count)
      unk_count += c;
    else
      logp.emplace(w, 0.0);  // filled below once the total is final
  }
  if (unk_count == 0) {
    // No rare words to absorb: give unk one pseudo-observation so unseen
    // queries stay finite.
    unk_count = 1;
    ++total;
  }
  for (auto& [w, lp] : logp)
    lp = std::log(static_cast<double>(counts.at(w)) / static_cast<double>(total));
  return UnigramLogFreq(std::move(logp),
                        std::log(static_cast<double>(unk_count) /
                                 static_cast<double>(total)));
}

struct KnTrainOptions {
  int order = 5;
  int min_count = 2;
  // With a closed vocabulary every training word is kept and no unk symbol
  // enters the distribution; queries for unseen words are then an error.
  bool closed_vocab = false;
};

// Interpolated modified Kneser-Ney n-gram model. Three discounts per order
// estimated from count-of-counts; lower orders use continuation counts;
// the unigram level interpolates with a uniform distribution over the
// predicted vocabulary, so every word has positive probability in every
// context.
class KnModel {
 public:
  using WordId = int32_t;
  static constexpr WordId kBos = 0;  // context-only, never predicted
  static constexpr WordId kEos = 1;
  static constexpr WordId kUnk = 2;

  struct Discounts {
    std::array<double, 3> d{0, 0, 0};  // counts 1, 2, >=3
    bool fallback = false;             // degenerate count-of-counts
    double for_count(int64_t c) const {
      return c >= 3 ? d[2] : d[c - 1];
    }
  };

  int order() const { return order_; }
  bool closed_vocab() const { return closed_vocab_; }
  size_t predicted_vocab_size() const { return predicted_vocab_; }
  const std::vector<std::string>& id_to_word() const { return id_to_word_; }
  const Discounts& discounts(int m) const { return discounts_[m]; }
  const UnigramLogFreq& unigram() const { return unigram_; }

  WordId word_id(const std::string& w) const {
    if (w == "</s>") return kEos;
    if (w == "<s>") return kBos;
    if (w == "<unk>") return kUnk;
    auto it = word_to_id_.find(w);
    if (it != word_to_id_.end()) return it->second;
    if (closed_vocab_)
      throw validation_error("word '" + w + "' not in closed vocabulary");
    return kUnk;
  }

  // p(w | ctx), ctx ordered oldest to newest; only the last order-1 entries
  // are used. Always in (0, 1].
  double prob_id(WordId w, std::span<const WordId> ctx) const {
    if (ctx.size() > static_cast<size_t>(order_ - 1))
      ctx = ctx.subspan(ctx.size() - (order_ - 1));
    return prob_rec(w, ctx);
  }

  double prob(const std::string& word, const std::vector<std::string>& context) const {
    std::vector<WordId> ctx = context_ids(context);
    return prob_id(word_id(word), ctx);
  }

  // -ln p(word | last order-1 context words); contexts shorter than order-1
  // are padded with the sentence-start symbol.
  double surprisal(const std::string& word, const std::vector<std::string>& context) const {
    return -std::log(prob(word, context));
  }

  // Per-word surprisals for one sentence (end symbol not included); the sum
  // is -ln of the sentence probability without the end symbol.
  std::vector<double> sequence_surprisals(const std::vector<std::string>& sentence) const {
    if (sentence.empty()) throw validation_error("empty sentence");
    std::vector<WordId> ctx(order_ - 1, kBos);
    std::vector<double> out;
    out.reserve(sentence.size());
    for (const auto& w : sentence) {
      WordId id = word_id(w);
      out.push_back(-std::log(prob_id(id, ctx)));
      ctx.push_back(id);
    }
    return out;
  }

  // exp(mean per-token surprisal), end-of-sentence tokens included.
  double perplexity(const std::vector<std::vector<std::string>>& sentences) const {
    if (sentences.empty()) throw validation_error("empty evaluation corpus");
    double total = 0;
    size_t tokens = 0;
    for (const auto& s : sentences) {
      std::vector<WordId> ctx(order_ - 1, kBos);
      for (const auto& w : s) {
        WordId id = word_id(w);
        total += -std::log(prob_id(id, ctx));
        ctx.push_back(id);
      }
      total += -std::log(prob_id(kEos, ctx));
      tokens += s.size() + 1;
    }
    return std::exp(total / static_cast<double>(tokens));
  }

  double unigram_logprob(const std::string& word) const { return unigram_(word); }

  // All predicted word ids (everything except the start symbol).
  std::vector<WordId> predicted_ids() const {
    std::vector<WordId> ids;
    for (WordId i = 0; i < static_cast<WordId>(id_to_word_.size()); ++i)
      if (i != kBos && (!closed_vocab_ || i != kUnk)) ids.push_back(i);
    return ids;
  }

  // Observed contexts at n-gram level m (context length m-1), for tests.
  std::vector<std::vector<WordId>> observed_contexts(int m) const {
    std::vector<std::vector<WordId>> out;
    if (m < 2 || m > order_) return out;
    for (const auto& [k, agg] : ctx_[m]) out.push_back(unpack(k));
    std::sort(out.begin(), out.end());
    return out;
  }

  void save(std::ostream& out) const;
  static KnModel load(std::istream& in);

  friend KnModel train_kn(const std::vector<std::vector<std::string>>& sentences,
                          const KnTrainOptions& opt);

 private:
  struct CtxAgg {
    double total = 0;     // sum of used counts over continuations
    double discount = 0;  // sum of min(D(c), c) over continuations
  };

  static std::string pack(std::span<const WordId> ids) {
    return std::string(reinterpret_cast<const char*>(ids.data()),
                       ids.size() * sizeof(WordId));
  }
  static std::vector<WordId> unpack(const std::string& key) {
    std::vector<WordId> ids(key.size() / sizeof(WordId));
    std::memcpy(ids.data(), key.data(), key.size());
    return ids;
  }

  std::vector<WordId> context_ids(const std::vector<std::string>& context) const {
    std::vector<WordId> ctx;
    size_t need = static_cast<size_t>(order_ - 1);
    size_t take = std::min(context.size(), need);
    for (size_t i = 0; i < need - take; ++i) ctx.push_back(kBos);
    for (size_t i = context.size() - take; i < context.size(); ++i)
      ctx.push_back(word_id(context[i]));
    return ctx;
  }

  double prob_rec(WordId w, std::span<const WordId> ctx) const {
    int m = static_cast<int>(ctx.size()) + 1;
    if (m == 1) {
      double base = 1.0 / static_cast<double>(predicted_vocab_);
      if (uni_total_ <= 0) return base;
      int64_t c = lookup(counts_[1], pack({&w, 1}));
      double num = c > 0 ? std::max(static_cast<double>(c) - discounts_[1].for_count(c), 0.0) : 0.0;
      return num / uni_total_ + (uni_discount_ / uni_total_) * base;
    }
    double lower = prob_rec(w, ctx.subspan(1));
    auto it = ctx_[m].find(pack(ctx));
    if (it == ctx_[m].end() || it->second.total <= 0) return lower;
    std::vector<WordId> gram(ctx.begin(), ctx.end());
    gram.push_back(w);
    int64_t c = lookup(counts_[m], pack(gram));
    double num = c > 0 ? std::max(static_cast<double>(c) - discounts_[m].for_count(c), 0.0) : 0.0;
    const CtxAgg& a = it->second;
    return num / a.total + (a.discount / a.total) * lower;
  }

  static int64_t lookup(const std::unordered_map<std::string, int64_t>& tab,
                        const std::string& key) {
    auto it = tab.find(key);
    return it == tab.end() ? 0 : it->second;
  }

  void build_context_tables() {
    ctx_.assign(order_ + 1, {});
    uni_total_ = 0;
    uni_discount_ = 0;
    for (int m = 1; m <= order_; ++m) {
      for (const auto& [key, c] : counts_[m]) {
        double disc = std::min(discounts_[m].for_count(c), static_cast<double>(c));
        if (m == 1) {
          uni_total_ += static_cast<double>(c);
          uni_discount_ += disc;
        } else {
          std::string ctx_key = key.substr(0, key.size() - sizeof(WordId));
          CtxAgg& agg = ctx_[m][ctx_key];
          agg.total += static_cast<double>(c);
          agg.discount += disc;
        }
      }
    }
  }

  int order_ = 0;
  int min_count_ = 2;
  bool closed_vocab_ = false;
  size_t predicted_vocab_ = 0;
  std::vector<std::string> id_to_word_;
  std::unordered_map<std::string, WordId> word_to_id_;
  // counts_[m]: the counts actually used at level m (raw at the highest
  // order, continuation counts below, raw for grams starting with <s>).
  std::vector<std::unordered_map<std::string, int64_t>> counts_;
  std::vector<Discounts> discounts_;
  std::vector<std::unordered_map<std::string, CtxAgg>> ctx_;
  double uni_total_ = 0;
  double uni_discount_ = 0;
  UnigramLogFreq unigram_;
};

// Chen-Goodman discount estimates from count-of-counts:
//   Y = n1 / (n1 + 2 n2),  D_r = r - (r+1) Y n_{r+1} / n_r, clamped to [0, r].
// Degenerate statistics (n1 = 0 or n2 = 0) fall back to a fixed 0.75.
inline KnModel::Discounts estimate_discounts(const std::array<int64_t, 4>& n) {
  KnModel::Discounts d;
  if (n[0] == 0 || n[1] == 0) {
    d.d = {0.75, 0.75, 0.75};
    d.fallback = true;
    return d;
  }
  double y = static_cast<double>(n[0]) / (n[0] + 2.0 * n[1]);
  for (int r = 1; r <= 3; ++r) {
    double dr;
    if (n[r - 1] == 0) {
      dr = d.d[r - 2];  // bucket unused or nearly so; reuse previous discount
    } else {
      dr = r - (r + 1) * y * static_cast<double>(n[r]) / static_cast<double>(n[r - 1]);
    }
    d.d[r - 1] = std::clamp(dr, 0.0, static_cast<double>(r));
  }
  return d;
}

inline KnModel train_kn(const std::vector<std::vector<std::string>>& sentences,
                        const KnTrainOptions& opt = {}) {
  if (sentences.empty()) throw validation_error("training corpus has no sentences");
  if (opt.order < 1) throw validation_error("order must be >= 1");

  KnModel model;
  model.order_ = opt.order;
  model.min_count_ = opt.min_count;
  model.closed_vocab_ = opt.closed_vocab;

  // Vocabulary: words at or above min_count keep their identity.
  std::unordered_map<std::string, int64_t> word_counts;
  for (const auto& s : sentences)
    for (const auto& w : s) ++word_counts[w];

  model.id_to_word_ = {"<s>", "</s>", "<unk>"};
  std::vector<std::string> kept;
  for (const auto& [w, c] : word_counts)
    if (opt.closed_vocab || c >= opt.min_count) kept.push_back(w);
  std::sort(kept.begin(), kept.end());  // deterministic ids
  for (const auto& w : kept) {
    model.word_to_id_.emplace(w, static_cast<KnModel::WordId>(model.id_to_word_.size()));
    model.id_to_word_.push_back(w);
  }
  // Predicted vocabulary: kept words + </s>, plus <unk> when open.
  model.predicted_vocab_ = kept.size() + 1 + (opt.closed_vocab ? 0 : 1);

  const int n = opt.order;
  std::vector<std::unordered_map<std::string, int64_t>> raw(n + 1);
  for (const auto& s : sentences) {
    if (s.empty()) continue;
    std::vector<KnModel::WordId> padded(n - 1, KnModel::kBos);
    for (const auto& w : s) {
      auto it = model.word_to_id_.find(w);
      padded.push_back(it != model.word_to_id_.end() ? it->second : KnModel::kUnk);
    }
    padded.push_back(KnModel::kEos);
    for (size_t i = n - 1; i < padded.size(); ++i)
      for (int m = 1; m <= n; ++m)
        ++raw[m][KnModel::pack({&padded[i - m + 1], static_cast<size_t>(m)})];
  }
  if (raw[n].empty()) throw validation_error("training corpus has no tokens");

  // Continuation counts for the lower orders: the adjusted count of an
  // m-gram is its number of distinct one-word left extensions. Grams that
  // start with <s> cannot be extended left and keep their raw counts.
  model.counts_.assign(n + 1, {});
  model.counts_[n] = raw[n];
  for (int m = n - 1; m >= 1; --m) {
    auto& adj = model.counts_[m];
    for (const auto& [key, c] : raw[m + 1]) adj[key.substr(sizeof(KnModel::WordId))] += 1;
    for (const auto& [key, c] : raw[m]) {
      KnModel::WordId first;
      std::memcpy(&first, key.data(), sizeof(first));
      if (first == KnModel::kBos) adj[key] = c;
    }
  }

  model.discounts_.assign(n + 1, {});
  for (int m = 1; m <= n; ++m) {
    std::array<int64_t, 4> noc{0, 0, 0, 0};
    for (const auto& [key, c] : model.counts_[m])
      if (c >= 1 && c <= 4) ++noc[c - 1];
    model.discounts_[m] = estimate_discounts(noc);
  }

  model.build_context_tables();
  model.unigram_ = unigram_logfreq(sentences, opt.min_count);
  return model;
}

inline bool any_fallback_discount(const KnModel& model) {
  for (int m = 1; m <= model.order(); ++m)
    if (model.discounts(m).fallback) return true;
  return false;
}

// ---------------------------------------------------------------------------
// Versioned text dump (stable across runs for identical input)
// ---------------------------------------------------------------------------

inline void KnModel::save(std::ostream& out) const {
  out << "wrapup-kn 1\n";
  out << "order " << order_ << "\n";
  out << "min_count " << min_count_ << "\n";
  out << "closed_vocab " << (closed_vocab_ ? 1 : 0) << "\n";
  out << "vocab " << id_to_word_.size() - 3 << "\n";
  for (size_t i = 3; i < id_to_word_.size(); ++i) out << id_to_word_[i] << "\n";
  out.precision(17);
  out << "discounts\n";
  for (int m = 1; m <= order_; ++m)
    out << m << " " << discounts_[m].d[0] << " " << discounts_[m].d[1] << " "
        << discounts_[m].d[2] << " " << (discounts_[m].fallback ? 1 : 0) << "\n";
  for (int m = 1; m <= order_; ++m) {
    std::vector<std::pair<std::vector<WordId>, int64_t>> grams;
    for (const auto& [key, c] : counts_[m]) grams.emplace_back(unpack(key), c);
    std::sort(grams.begin(), grams.end());
    out << "counts " << m << " " << grams.size() << "\n";
    for (const auto& [ids, c] : grams) {
      for (WordId id : ids) out << id << " ";
      out << c << "\n";
    }
  }
  const auto& uni = unigram_.table();
  std::vector<std::pair<std::string, double>> entries(uni.begin(), uni.end());
  std::sort(entries.begin(), entries.end());
  out << "unigram_logfreq " << entries.size() << " " << unigram_.unk_logp() << "\n";
  for (const auto& [w, lp] : entries) out << w << " " << lp << "\n";
  out << "end\n";
}

inline KnModel KnModel::load(std::istream& in) {
  auto expect = [&](const std::string& tag) {
    std::string t;
    if (!(in >> t) || t != tag)
      throw validation_error("model file: expected '" + tag + "'");
  };
  expect("wrapup-kn");
  int version;
  in >> version;
  if (version != 1) throw validation_error("model file: unsupported version");
  KnModel model;
  expect("order");
  in >> model.order_;
  expect("min_count");
  in >> model.min_count_;
  expect("closed_vocab");
  int cv;
  in >> cv;
  model.closed_vocab_ = cv != 0;
  expect("vocab");
  size_t nwords;
  in >> nwords;
  model.id_to_word_ = {"<s>", "</s>", "<unk>"};
  for (size_t i = 0; i < nwords; ++i) {
    std::string w;
    in >> w;
    model.word_to_id_.emplace(w, static_cast<WordId>(model.id_to_word_.size()));
    model.id_to_word_.push_back(w);
  }
  model.predicted_vocab_ = nwords + 1 + (model.closed_vocab_ ? 0 : 1);
  expect("discounts");
  model.discounts_.assign(model.order_ + 1, {});
  for (int m = 1; m <= model.order_; ++m) {
    int mm, fb;
    in >> mm;
    if (mm != m) throw validation_error("model file: discount order mismatch");
    in >> model.discounts_[m].d[0] >> model.discounts_[m].d[1] >>
        model.discounts_[m].d[2] >> fb;
    model.discounts_[m].fallback = fb != 0;
  }
  model.counts_.assign(model.order_ + 1, {});
  for (int m = 1; m <= model.order_; ++m) {
    expect("counts");
    int mm;
    size_t cnt;
    in >> mm >> cnt;
    if (mm != m) throw validation_error("model file: count order mismatch");
    for (size_t i = 0; i < cnt; ++i) {
      std::vector<WordId> ids(m);
      int64_t c;
      for (int j = 0; j < m; ++j) in >> ids[j];
      in >> c;
      model.counts_[m].emplace(pack(ids), c);
    }
  }
  expect("unigram_logfreq");
  size_t nuni;
  double unk_lp;
  in >> nuni >> unk_lp;
  std::unordered_map<std::string, double> uni;
  for (size_t i = 0; i < nuni; ++i) {
    std::string w;
    double lp;
    in >> w >> lp;
    uni.emplace(w, lp);
  }
  model.unigram_ = UnigramLogFreq(std::move(uni), unk_lp);
  expect("end");
  if (!in) throw validation_error("model file: truncated");
  model.build_context_tables();
  return model;
}

}  // namespace wrapup
