#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "adamrc/annotator.hpp"
#include "adamrc/autograd.hpp"

namespace adamrc::corpus {

enum class Domain : std::uint8_t { source = 0, target = 1 };
enum class Provenance : std::uint8_t { human, synthetic };

std::string_view domain_name(Domain d);
Domain domain_from_name(std::string_view s);
std::string_view provenance_name(Provenance p);
Provenance provenance_from_name(std::string_view s);

struct AnnotatedPassage {
  std::string id;
  std::string raw_text;
  std::vector<Token> tokens;
  Domain domain = Domain::source;

  int length() const { return static_cast<int>(tokens.size()); }
  // Text covered by tokens [start, end] (inclusive), sliced from raw_text.
  std::string span_text(int start, int end) const;
};

using PassagePtr = std::shared_ptr<const AnnotatedPassage>;

// Builds an annotated passage, truncating to max_tokens. Throws on empty text.
AnnotatedPassage make_passage(std::string id, std::string raw_text, Domain domain, int max_tokens = 300,
                              const Annotator& annotator = default_annotator());

// Rebuilds the text from tokens and their offsets, restoring the inter-token
// whitespace from the original text.
std::string detokenize(const AnnotatedPassage& passage);

struct AnswerSpan {
  int start = 0;
  int end = 0;  // inclusive

  bool valid_for(int length) const { return 0 <= start && start <= end && end < length; }
  friend bool operator==(const AnswerSpan&, const AnswerSpan&) = default;
};

struct QAExample {
  std::string id;
  PassagePtr passage;
  std::string question_text;
  std::vector<Token> question;
  AnswerSpan answer;
  Provenance provenance = Provenance::human;
  std::vector<std::string> gold_answers;  // answer strings used by string metrics

  Domain domain() const { return passage->domain; }
};

struct LoadOptions {
  int max_passage_len = 300;
  int max_question_len = 30;
};

inline constexpr LoadOptions kDefaultLoadOptions{};

struct LoadStats {
  int paragraphs = 0;
  int questions = 0;
  int kept = 0;
  int dropped_alignment = 0;   // answer boundary strictly inside a token
  int dropped_range = 0;       // answer_start outside the context
  int dropped_truncated = 0;   // answer past the passage length limit
  int dropped_question = 0;    // empty question
};

struct LoadResult {
  std::vector<PassagePtr> passages;
  std::vector<QAExample> examples;
  LoadStats stats;
};

class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Maps a character span [char_start, char_end) to the smallest covering token
// span. Returns false when a boundary falls strictly inside a token.
bool align_answer(const std::vector<Token>& tokens, std::size_t char_start, std::size_t char_end, AnswerSpan* span);

// Reads SQuAD v1.1 JSON. Throws ParseError naming the path on malformed JSON.
LoadResult load_squad_json(const std::filesystem::path& path, Domain domain, LoadOptions options = kDefaultLoadOptions);
LoadResult parse_squad_json(std::string_view json_text, Domain domain, LoadOptions options = kDefaultLoadOptions,
                            std::string_view source_name = "<memory>");

// Builds an example from question text and a token span of an existing passage.
QAExample make_example(std::string id, PassagePtr passage, std::string_view question_text, AnswerSpan answer,
                       Provenance provenance, int max_question_len = 30);

class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;
  static constexpr int kBos = 2;
  static constexpr int kEos = 3;
  static constexpr int kNumSpecials = 4;

  Vocabulary();
  explicit Vocabulary(const std::vector<std::string>& tokens, int embedding_dim = 50);

  int id(std::string_view token) const;  // kUnk when absent
  bool contains(std::string_view token) const;
  const std::string& token(int id) const { return id_to_token_.at(static_cast<std::size_t>(id)); }
  int size() const { return static_cast<int>(id_to_token_.size()); }
  const std::vector<std::string>& tokens() const { return id_to_token_; }

  int embedding_dim = 50;

 private:
  struct Hash {
    using is_transparent = void;
    std::size_t operator()(std::string_view s) const { return std::hash<std::string_view>{}(s); }
  };
  std::unordered_map<std::string, int, Hash, std::equal_to<>> token_to_id_;
  std::vector<std::string> id_to_token_;
};

// Frequency-thresholded vocabulary; max_size counts the four specials.
Vocabulary build_vocab(const std::vector<std::string>& token_stream, int min_count, int max_size,
                       int embedding_dim = 50);
// All passage and question tokens of the examples (each passage counted once).
std::vector<std::string> token_stream(const std::vector<QAExample>& examples);
std::vector<std::string> token_stream(const std::vector<PassagePtr>& passages);

std::vector<int> to_ids(const Vocabulary& vocab, const std::vector<Token>& tokens);

using EmbeddingTable = ag::FMatrix;

// Uniform(-0.1, 0.1) rows with an all-zero PAD row.
EmbeddingTable random_embeddings(const Vocabulary& vocab, std::uint64_t seed);
// Word-vector text format: "token v1 v2 ... vd" per line. Tokens missing from
// the file keep their random row. Throws ParseError naming the line on a
// dimension mismatch.
EmbeddingTable load_pretrained_embeddings(const std::filesystem::path& path, const Vocabulary& vocab,
                                          std::uint64_t seed);

// Line-delimited JSON caches.
void write_passages_jsonl(const std::filesystem::path& path, const std::vector<PassagePtr>& passages);
std::vector<PassagePtr> read_passages_jsonl(const std::filesystem::path& path);
void write_examples_jsonl(const std::filesystem::path& path, const std::vector<QAExample>& examples);
// Resolves passage ids against `passages`; throws ParseError on unknown ids.
std::vector<QAExample> read_examples_jsonl(const std::filesystem::path& path, const std::vector<PassagePtr>& passages);

void write_vocab(const std::filesystem::path& path, const Vocabulary& vocab);
Vocabulary read_vocab(const std::filesystem::path& path);

}  // namespace adamrc::corpus
