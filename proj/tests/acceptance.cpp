// Acceptance suite: one line of output per criterion, non-zero exit on any
// failure. argv[1] is the path to the wrapup CLI binary (used by the
// determinism criterion).

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "kn_toy_oracle.hpp"
#include "synthetic.hpp"
#include "wrapup/corpus.hpp"
#include "wrapup/ngram.hpp"
#include "wrapup/predictors.hpp"
#include "wrapup/regression.hpp"

using namespace wrapup;
using Clock = std::chrono::steady_clock;

namespace {

int failures = 0;

void report(int num, const std::string& name, bool ok, double seconds) {
  std::printf("%s  criterion %d: %-34s (%.2f s)\n", ok ? "PASS" : "FAIL", num,
              name.c_str(), seconds);
  std::fflush(stdout);
  if (!ok) ++failures;
}

double elapsed(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::vector<std::vector<std::string>> zipf_corpus(size_t n_tokens, uint64_t seed,
                                                  int n_types = 60) {
  std::mt19937_64 rng(seed);
  std::vector<std::vector<std::string>> sentences;
  size_t produced = 0;
  while (produced < n_tokens) {
    size_t len = 3 + rng() % 10;
    std::vector<std::string> s;
    for (size_t i = 0; i < len; ++i) {
      int rank = static_cast<int>(n_types * std::pow(double(rng() % 1000 + 1) / 1000.0, 3));
      s.push_back("w" + std::to_string(rank));
    }
    produced += len;
    sentences.push_back(std::move(s));
  }
  return sentences;
}

// --- 1. Kneser-Ney: hand oracle on the toy corpus + normalization at scale --

bool criterion_kn() {
  KnTrainOptions topt;
  topt.order = 2;
  topt.min_count = 1;
  KnModel toy = train_kn({{"a", "b", "a", "b", "a", "c"}}, topt);
  const std::vector<std::string> words = {"a", "b", "c", "</s>", "zzz"};
  const std::vector<std::vector<std::string>> contexts = {{}, {"a"}, {"b"}, {"c"}};
  for (const auto& ctx : contexts) {
    std::string octx = ctx.empty() ? "<s>" : ctx.back();
    for (const auto& w : words) {
      double expected = kn_toy::bigram_prob(w == "zzz" ? "<unk>" : w, octx);
      if (std::fabs(toy.prob(w, ctx) - expected) > 1e-9) return false;
    }
  }

  auto sentences = zipf_corpus(10000, 424242);
  KnTrainOptions opt;
  opt.order = 3;
  KnModel model = train_kn(sentences, opt);
  auto ids = model.predicted_ids();
  std::vector<KnModel::WordId> all_ids = ids;
  all_ids.push_back(KnModel::kBos);  // contexts may contain the start symbol
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    size_t len = rng() % static_cast<size_t>(model.order());
    std::vector<KnModel::WordId> ctx(len);
    for (auto& id : ctx) id = all_ids[rng() % all_ids.size()];
    double sum = 0;
    for (auto id : ids) sum += model.prob_id(id, ctx);
    if (std::fabs(sum - 1.0) > 1e-6) return false;
  }
  return true;
}

// --- 2. OLS against a pseudo-inverse oracle ---------------------------------

bool criterion_ols() {
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> gauss;
  for (int trial = 0; trial < 1000; ++trial) {
    Eigen::Index n = 20 + static_cast<Eigen::Index>(rng() % 181);
    Eigen::Index p = 2 + static_cast<Eigen::Index>(rng() % 9);
    Eigen::MatrixXd X(n, p);
    Eigen::VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < p; ++j) X(i, j) = gauss(rng);
      y[i] = gauss(rng);
    }
    LinearModel m = fit_ols(X, y);

    Eigen::MatrixXd A(n, p + 1);
    A.col(0).setOnes();
    A.rightCols(p) = X;
    Eigen::VectorXd oracle =
        A.completeOrthogonalDecomposition().pseudoInverse() * y;
    for (Eigen::Index j = 0; j <= p; ++j)
      if (std::fabs(m.coefficients[j] - oracle[j]) > 1e-8) return false;
  }
  return true;
}

// --- 3. INF^(k) closed forms -------------------------------------------------

bool criterion_inf() {
  auto close = [](double a, double b) {
    return std::fabs(a - b) <= 1e-12 * std::max({1.0, std::fabs(a), std::fabs(b)});
  };
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    size_t n = rng() % 15, m = rng() % 15;
    std::vector<double> a(n), b(m);
    for (auto& v : a) v = (rng() % 1000) / 83.0;
    for (auto& v : b) v = (rng() % 1000) / 83.0;
    if (inf_k(a, 0) != static_cast<double>(n)) return false;

    double k = (rng() % 31) / 10.0;
    std::vector<double> ab = a;
    ab.insert(ab.end(), b.begin(), b.end());
    if (!close(inf_k(ab, k), inf_k(a, k) + inf_k(b, k))) return false;
    std::vector<double> shuffled = ab;
    std::shuffle(shuffled.begin(), shuffled.end(), rng);
    if (!close(inf_k(shuffled, k), inf_k(ab, k))) return false;
  }
  const double c = 2.3;
  std::vector<double> constant(11, c);
  for (double k : {0.0, 0.5, 1.0, 2.0, 3.0})
    if (!close(inf_k(constant, k), 11.0 * std::pow(c, k))) return false;
  return true;
}

// --- 4. DeltaLogLik recovery on synthetic corpora ----------------------------

bool criterion_recovery() {
  const KGrid grid{{0, 0.5, 1, 1.5, 2, 2.5, 3}};
  DesignOptions dopt;
  dopt.response = ResponseTransform::Raw;

  auto sweep_once = [&](double gamma, uint64_t seed) {
    synth::Options opt;
    opt.n_sentences = 5000;
    opt.gamma = gamma;
    opt.noise_sd = 30;
    opt.seed = seed;
    synth::Data d = synth::generate(opt);
    auto rows = build_design(d.corpus, d.annotation, PositionClass::ClauseFinal, dopt);
    return sweep_k(rows, grid, {10, seed});
  };

  int recovered = 0;
  for (uint64_t seed = 0; seed < 100; ++seed) {
    auto sweep = sweep_once(1.0, seed);
    size_t best = 0;
    for (size_t i = 1; i < sweep.size(); ++i)
      if (sweep[i].mean_delta > sweep[best].mean_delta) best = i;
    if (sweep[best].k == 2.0 && sweep[best].mean_delta > 3 * sweep[best].std_error)
      ++recovered;
  }
  std::printf("      k=2 recovered with mean_delta > 3 SE: %d/100 (need >= 90)\n",
              recovered);

  // Null check is one-sided: a useless extra predictor genuinely costs
  // held-out likelihood (an overfitting penalty of order chi^2/2 nats in
  // total, unbounded relative to the fold-level SE), so "no effect" means
  // mean_delta is never significantly *positive*.
  int null_ok = 0;
  for (uint64_t seed = 0; seed < 100; ++seed) {
    auto sweep = sweep_once(0.0, 10000 + seed);
    bool none_positive = true;
    for (const auto& r : sweep)
      if (r.mean_delta > 2 * r.std_error) none_positive = false;
    if (none_positive) ++null_ok;
  }
  std::printf("      null deltas within 2 SE of 0 (one-sided) at every k: %d/100 (need >= 95)\n",
              null_ok);
  return recovered >= 90 && null_ok >= 95;
}

// --- 5. Residual diagnostic: calibrated null, detected wrap-up shift ---------

// Standard error of the mean clause-final residual, including the baseline
// estimation uncertainty (average-leverage bound, (p+1)/n_medial).
double final_mean_se(const ResidualDiagnostic& diag, size_t n_params) {
  auto var = [](const std::vector<double>& r) {
    double mu = 0;
    for (double v : r) mu += v;
    mu /= static_cast<double>(r.size());
    double ss = 0;
    for (double v : r) ss += (v - mu) * (v - mu);
    return ss / static_cast<double>(r.size() - 1);
  };
  double nf = static_cast<double>(diag.final_residuals.size());
  double nm = static_cast<double>(diag.medial_residuals.size());
  return std::sqrt(var(diag.final_residuals) / nf +
                   var(diag.medial_residuals) * static_cast<double>(n_params + 1) / nm);
}

bool criterion_diagnostic() {
  auto diagnose = [](double shift_ms, uint64_t seed) {
    synth::Options opt;
    opt.n_sentences = 3000;
    opt.log_response = true;
    opt.noise_sd = 0.15;
    // Weak feature effects: the wrap-up shift acts on raw ms, so in log
    // space its size varies with the base RT, which is what produces the
    // right-skewed clause-final residuals; strong feature-driven variance
    // would mask that signature.
    opt.feature_scale = 0.2;
    opt.final_shift_ms = shift_ms;
    opt.seed = seed;
    synth::Data d = synth::generate(opt);
    auto medial = build_design(d.corpus, d.annotation, PositionClass::SentenceMedial);
    auto final_rows = build_design(d.corpus, d.annotation, PositionClass::ClauseFinal);
    return residual_diagnostic(medial, final_rows);
  };

  const size_t n_params = baseline_feature_names(Modality::EyeTracking).size();
  int null_ok = 0;
  for (uint64_t seed = 0; seed < 100; ++seed) {
    auto diag = diagnose(0, seed);
    if (std::fabs(diag.final.mean) <= 2 * final_mean_se(diag, n_params)) ++null_ok;
  }
  std::printf("      null clause-final residual mean within 2 SE: %d/100 (need >= 95)\n",
              null_ok);

  int shift_detected = 0;
  for (uint64_t seed = 0; seed < 100; ++seed) {
    auto diag = diagnose(200, 500 + seed);
    if (diag.final.skewness > 0 && diag.final.mean > 0) ++shift_detected;
  }
  std::printf("      +200 ms shift gives positive clause-final skew: %d/100 (need 100)\n",
              shift_detected);
  return null_ok >= 95 && shift_detected == 100;
}

// --- 6. Fixation aggregation and go-past hand traces -------------------------

bool criterion_fixations() {
  auto fx = [](int w, double d) {
    RawFixation f;
    f.word_index = w;
    f.duration = d;
    return f;
  };
  {
    auto rt = aggregate_fixations({fx(2, 200), fx(2, 100)}, 5);
    if (rt.size() != 1 || rt.at(2) != 300) return false;
  }
  {
    auto rt = aggregate_fixations({fx(1, 150)}, 5);
    if (rt.size() != 1 || rt.at(1) != 150) return false;
  }
  {
    auto rt = aggregate_fixations({fx(3, 200), fx(1, 150), fx(3, 100)}, 5);
    if (rt.size() != 2 || rt.at(3) != 300 || rt.at(1) != 150) return false;
  }
  // Go-past: first fixation on the target through the last fixation before
  // moving right of it, regressions included.
  auto gp1 = compute_go_past({fx(3, 200), fx(2, 150), fx(3, 100), fx(4, 180)}, 3);
  if (!gp1 || *gp1 != 450) return false;
  auto gp2 = compute_go_past({fx(3, 200), fx(4, 100)}, 3);
  if (!gp2 || *gp2 != 200) return false;
  if (compute_go_past({fx(1, 100)}, 3)) return false;
  return true;
}

// --- 7. Byte-identical analyze reruns through the CLI ------------------------

int run(const std::string& cmd) { return std::system((cmd + " >/dev/null 2>&1").c_str()); }

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

bool criterion_determinism(const std::string& cli) {
  namespace fs = std::filesystem;
  std::string dir = fs::temp_directory_path() / "wrapup_acceptance_cli";
  fs::remove_all(dir);
  fs::create_directories(dir);

  std::mt19937_64 rng(11);
  std::vector<std::string> vocab = {"the", "dog", "cat", "ran", "sat", "near", "fast"};
  std::ostringstream text, spr;
  spr << "subject_id\tsentence_id\tword_pos\tword\trt_ms\n";
  for (int sent = 0; sent < 150; ++sent) {
    size_t len = 5 + rng() % 4;
    for (size_t p = 0; p < len; ++p) {
      std::string w = vocab[rng() % vocab.size()];
      if (p + 1 == len) w += '.';
      text << w << (p + 1 == len ? "\n" : " ");
      for (int subj = 0; subj < 2; ++subj)
        spr << 's' << subj << '\t' << sent << '\t' << p << '\t' << w << '\t'
            << 200 + rng() % 200 << '\n';
    }
  }
  std::ofstream(dir + "/text.txt") << text.str();
  std::ofstream(dir + "/spr.tsv") << spr.str();

  std::string q = "'" + cli + "'";
  if (run(q + " ingest --modality spr --input " + dir + "/spr.tsv --out " + dir +
          "/table.tsv"))
    return false;
  if (run(q + " train-lm --corpus " + dir + "/text.txt --order 3 --min-count 1 --out " +
          dir + "/model.kn"))
    return false;
  if (run(q + " annotate --table " + dir + "/table.tsv --model " + dir +
          "/model.kn --out " + dir + "/ann.tsv"))
    return false;
  std::string analyze = q + " analyze --table " + dir + "/table.tsv --annotation " +
                        dir + "/ann.tsv --folds 5 --seed 3 --dataset accept --out " + dir;
  if (run(analyze + "/run1")) return false;
  if (run(analyze + "/run2")) return false;
  for (const char* f : {"results.json", "results.csv", "residuals.csv"}) {
    std::string a = slurp(dir + "/run1/" + f), b = slurp(dir + "/run2/" + f);
    if (a.empty() || a != b) return false;
  }
  return true;
}

template <typename F>
void check(int num, const std::string& name, double budget_s, F&& f) {
  auto start = Clock::now();
  bool ok = false;
  try {
    ok = f();
  } catch (const std::exception& e) {
    std::printf("      exception: %s\n", e.what());
  }
  double secs = elapsed(start);
  if (budget_s > 0 && secs > budget_s) ok = false;
  report(num, name, ok, secs);
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::fprintf(stderr, "usage: acceptance <path-to-wrapup-cli>\n");
    return 2;
  }
  std::string cli = argv[1];

  check(1, "Kneser-Ney oracle + normalization", 1.0, criterion_kn);
  check(2, "OLS pseudo-inverse oracle", 10.0, criterion_ols);
  check(3, "INF^(k) closed forms", 0, criterion_inf);
  check(4, "DeltaLogLik k recovery", 300.0, criterion_recovery);
  check(5, "residual diagnostic", 0, criterion_diagnostic);
  check(6, "fixation hand traces", 0, criterion_fixations);
  check(7, "byte-identical analyze reruns", 0, [&] { return criterion_determinism(cli); });

  if (failures) std::printf("%d criterion(s) failed\n", failures);
  return failures ? 1 : 0;
}
