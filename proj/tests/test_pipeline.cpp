#include <catch2/catch_amalgamated.hpp>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "synthetic.hpp"
#include "wrapup/ngram.hpp"
#include "wrapup/pipeline.hpp"

using namespace wrapup;

namespace {

std::string temp_dir(const std::string& name) {
  std::string dir = std::filesystem::temp_directory_path() / name;
  std::filesystem::create_directories(dir);
  return dir;
}

// A small SPR-style dataset over a repetitive toy language.
void write_toy_dataset(const std::string& dir) {
  std::mt19937_64 rng(77);
  // Skewed sampling so log-frequencies vary; mixed lengths so the length
  // features vary too.
  std::vector<std::string> vocab = {"the", "a",   "dog",  "cat",    "horse",
                                    "ran", "sat", "near", "quickly", "yesterday"};
  std::ostringstream text, spr;
  spr << "subject_id\tsentence_id\tword_pos\tword\trt_ms\n";
  int sent = 0;
  for (int i = 0; i < 120; ++i) {
    size_t len = 5 + rng() % 4;
    std::vector<std::string> words;
    for (size_t p = 0; p < len; ++p)
      words.push_back(vocab[static_cast<size_t>(10.0 * std::pow((rng() % 1000) / 1000.0, 2))]);
    words.back() += '.';
    for (size_t p = 0; p < words.size(); ++p) {
      text << words[p] << (p + 1 == words.size() ? "\n" : " ");
      for (int subj = 0; subj < 3; ++subj)
        spr << 's' << subj << '\t' << sent << '\t' << p << '\t' << words[p]
            << '\t' << 220 + rng() % 160 << '\n';
    }
    ++sent;
  }
  std::ofstream(dir + "/text.txt") << text.str();
  std::ofstream(dir + "/spr.tsv") << spr.str();
}

}  // namespace

TEST_CASE("ingest -> train -> annotate -> analyze, deterministic end to end") {
  std::string dir = temp_dir("wrapup_pipeline_e2e");
  write_toy_dataset(dir);

  IngestReport report;
  RtCorpus corpus = load_spr_tsv(dir + "/spr.tsv", &report);
  average_across_subjects(corpus);
  {
    std::ostringstream table;
    write_word_table(corpus, table);
    std::ofstream(dir + "/table.tsv") << table.str();
  }
  RtCorpus table = load_word_table(dir + "/table.tsv");
  REQUIRE(table.words.size() == corpus.words.size());

  std::ifstream text(dir + "/text.txt");
  std::vector<std::vector<std::string>> sentences;
  std::string line;
  while (std::getline(text, line)) sentences.push_back(split_ws(line));
  KnTrainOptions topt;
  topt.order = 3;
  KnModel model = train_kn(sentences, topt);

  AnnotationFile ann;
  auto a = annotate_with_kn(table, model);
  ann.sources.push_back(a.source);
  ann.annotations.push_back(std::move(a));
  std::string rendered = render_annotation(table, ann);
  std::ofstream(dir + "/ann.tsv") << rendered;
  AnnotationFile loaded = load_annotation(dir + "/ann.tsv", table.words.size());
  REQUIRE(loaded.sources == ann.sources);
  for (size_t i = 0; i < table.words.size(); ++i) {
    CHECK(loaded.annotations[0].surprisal[i] == ann.annotations[0].surprisal[i]);
    CHECK(loaded.annotations[0].logfreq[i] == ann.annotations[0].logfreq[i]);
  }

  RunConfig config;
  config.dataset = "toy";
  config.table = dir + "/table.tsv";
  config.annotation = dir + "/ann.tsv";
  config.k_grid = {0, 0.5, 1, 2};
  config.folds = 5;  // small dataset
  config.out_dir = dir;

  auto out1 = run_analysis(table, loaded.annotations[0], config);
  auto out2 = run_analysis(table, loaded.annotations[0], config);
  CHECK(out1.json == out2.json);
  CHECK(out1.csv == out2.csv);
  CHECK(out1.residuals_csv == out2.residuals_csv);

  // One CSV row per (position_class, k), plus comment and header.
  size_t lines = std::count(out1.csv.begin(), out1.csv.end(), '\n');
  CHECK(lines == 2 + 2 * config.k_grid.size());
  CHECK(out1.csv.find("# config_hash=" + config.hash()) == 0);
  CHECK(out1.json.find(config.hash()) != std::string::npos);

  write_analysis(out1, dir);
  CHECK(std::filesystem::exists(dir + "/results.json"));
  CHECK(std::filesystem::exists(dir + "/results.csv"));
  CHECK(std::filesystem::exists(dir + "/residuals.csv"));
}

TEST_CASE("different seeds change fold assignment but not determinism") {
  synth::Data d = synth::generate({.n_sentences = 250, .seed = 5});
  RunConfig config;
  config.k_grid = {0, 1, 2};
  config.response = "raw";
  auto out_a = run_analysis(d.corpus, d.annotation, config);
  config.seed = 1;
  auto out_b = run_analysis(d.corpus, d.annotation, config);
  CHECK(out_a.csv != out_b.csv);  // seed is part of the config hash
  auto out_a2 = [&] {
    RunConfig c2;
    c2.k_grid = {0, 1, 2};
    c2.response = "raw";
    return run_analysis(d.corpus, d.annotation, c2);
  }();
  CHECK(out_a2.csv == out_a.csv);
}

TEST_CASE("config validation and file loading") {
  RunConfig c;
  c.folds = 1;
  CHECK_THROWS_AS(c.validate(), validation_error);
  c = RunConfig{};
  c.k_grid = {0.5, 2};
  CHECK_THROWS_AS(c.validate(), validation_error);
  c = RunConfig{};
  c.response = "sqrt";
  CHECK_THROWS_AS(c.validate(), validation_error);
  c = RunConfig{};
  c.position = "everything";
  CHECK_THROWS_AS(c.validate(), validation_error);

  std::string dir = temp_dir("wrapup_config_test");
  std::ofstream(dir + "/cfg.json")
      << R"({"dataset":"x","table":"t.tsv","annotation":"a.tsv",
             "k_grid":[0,1,3],"folds":7,"seed":11,"response":"raw"})";
  RunConfig loaded = load_config(dir + "/cfg.json");
  CHECK(loaded.dataset == "x");
  CHECK(loaded.folds == 7);
  CHECK(loaded.seed == 11);
  CHECK(loaded.k_grid == std::vector<double>{0, 1, 3});
  CHECK(loaded.response == "raw");
  CHECK(loaded.measure == "rt");  // default preserved

  // The hash covers every field.
  RunConfig a, b;
  b.seed = 1;
  CHECK(a.hash() != b.hash());
  CHECK(a.hash() == RunConfig{}.hash());
}

TEST_CASE("imported subword annotation aligns to the corpus words") {
  RtCorpus corpus;
  corpus.modality = Modality::SPR;
  auto add = [&](int sent, int pos, std::string text) {
    WordRecord w;
    w.text = std::move(text);
    w.char_len = static_cast<int>(w.text.size());
    w.sentence_id = sent;
    w.position_in_sentence = pos;
    w.is_clause_final = pos == 1;
    w.mean_rt = 300;
    corpus.words.push_back(std::move(w));
  };
  add(0, 0, "don't");
  add(0, 1, "stop.");

  SubwordFile file;
  file.marker = BoundaryMarker::None;
  file.model = "gpt2";
  file.tokens = {{"don", 1.0}, {"'t", 0.5}, {"st", 2.0}, {"op", 0.25}, {".", 0.4}};
  UnigramLogFreq lf({{"don't", -3.0}, {"stop.", -4.0}}, -9.0);

  auto incl = annotate_with_import(corpus, file, lf, true);
  CHECK(incl.source == "imported:gpt2");
  CHECK(incl.surprisal == std::vector<double>{1.5, 2.65});
  CHECK(incl.logfreq == std::vector<double>{-3.0, -4.0});

  auto excl = annotate_with_import(corpus, file, lf, false);
  CHECK(excl.surprisal == std::vector<double>{1.5, 2.25});
  CHECK_FALSE(excl.includes_punctuation);
}
