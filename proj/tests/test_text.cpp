#include <catch2/catch_amalgamated.hpp>

#include "wrapup/text.hpp"

using namespace wrapup;

TEST_CASE("normalize_text rewrites the character table") {
  CHECK(normalize_text("“Stop”") == "\"Stop\"");
  CHECK(normalize_text("don’t") == "don't");
  CHECK(normalize_text("wait…") == "wait...");
  CHECK(normalize_text("a—b") == "a - b");
  CHECK(normalize_text("a–b") == "a - b");
  CHECK(normalize_text("") == "");
}

TEST_CASE("normalize_text attaches trailing punctuation to the preceding word") {
  CHECK(normalize_text("the end .") == "the end.");
  CHECK(normalize_text("really ? !") == "really?!");
  // Hyphens are not attachable; they stay free-standing.
  CHECK(normalize_text("a - b") == "a - b");
  // Leading punctuation token with nothing before it stays put.
  CHECK(normalize_text(". start") == ". start");
  CHECK(normalize_text("a b") == "a b");
  CHECK(normalize_text("  spaced \t out \n") == "spaced out");
}

TEST_CASE("mark_clause_final follows the punctuation rule") {
  CHECK(mark_clause_final({"The", "end."}) == std::vector<bool>{false, true});
  CHECK(mark_clause_final({"why?", "next"}) == std::vector<bool>{true, false});
  CHECK(mark_clause_final({"mid-word"}) == std::vector<bool>{false});
  CHECK(mark_clause_final({"quote\"", "paren)", "brack]", "semi;", "colon:"}) ==
        std::vector<bool>{true, true, true, true, true});
  // Em/en dash as final character counts; word-internal apostrophe does not.
  CHECK(mark_clause_final({"dash—", "don't"}) == std::vector<bool>{true, false});
}

TEST_CASE("clause-final flags are a pure function of the text") {
  std::vector<std::string> words = {"abc", "abc.", "x,", "y", "z!", "don't", "(a)"};
  auto once = mark_clause_final(words);
  auto twice = mark_clause_final(words);
  CHECK(once == twice);
  // Every word lands in exactly one class.
  for (size_t i = 0; i < words.size(); ++i) {
    bool final = once[i];
    bool medial = !once[i];
    CHECK(final != medial);
  }
}

TEST_CASE("char_length counts codepoints") {
  CHECK(char_length("abc") == 3);
  CHECK(char_length("café") == 4);
  CHECK(char_length("") == 0);
  CHECK(char_length("a—b") == 3);
}
