#include "adamrc/corpus.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <sstream>

#include "adamrc/io.hpp"
#include "json.hpp"

namespace adamrc::corpus {

using nlohmann::json;

std::string_view domain_name(Domain d) { return d == Domain::source ? "source" : "target"; }

Domain domain_from_name(std::string_view s) {
  if (s == "source" || s == "0") return Domain::source;
  if (s == "target" || s == "1") return Domain::target;
  throw std::invalid_argument("unknown domain '" + std::string(s) + "'");
}

std::string_view provenance_name(Provenance p) { return p == Provenance::human ? "human" : "synthetic"; }

Provenance provenance_from_name(std::string_view s) {
  if (s == "human") return Provenance::human;
  if (s == "synthetic") return Provenance::synthetic;
  throw std::invalid_argument("unknown provenance '" + std::string(s) + "'");
}

std::string AnnotatedPassage::span_text(int start, int end) const {
  const Token& a = tokens.at(static_cast<std::size_t>(start));
  const Token& b = tokens.at(static_cast<std::size_t>(end));
  return raw_text.substr(a.char_start, b.char_end - a.char_start);
}

AnnotatedPassage make_passage(std::string id, std::string raw_text, Domain domain, int max_tokens,
                              const Annotator& annotator) {
  AnnotatedPassage p;
  p.id = std::move(id);
  p.domain = domain;
  p.tokens = annotator.annotate(raw_text);
  if (max_tokens > 0 && static_cast<int>(p.tokens.size()) > max_tokens) {
    p.tokens.resize(static_cast<std::size_t>(max_tokens));
    raw_text.resize(p.tokens.back().char_end);
  }
  p.raw_text = std::move(raw_text);
  return p;
}

std::string detokenize(const AnnotatedPassage& passage) {
  std::string out;
  out.reserve(passage.raw_text.size());
  std::size_t pos = 0;
  for (const Token& t : passage.tokens) {
    if (t.char_start < pos) throw std::logic_error("detokenize: overlapping tokens");
    const std::string gap = passage.raw_text.substr(pos, t.char_start - pos);
    if (!std::all_of(gap.begin(), gap.end(), [](unsigned char c) { return std::isspace(c) != 0; }))
      throw std::logic_error("detokenize: non-whitespace gap before '" + t.text + "'");
    out += gap;
    out += t.text;
    pos = t.char_end;
  }
  out += passage.raw_text.substr(pos);
  return out;
}

bool align_answer(const std::vector<Token>& tokens, std::size_t char_start, std::size_t char_end, AnswerSpan* span) {
  if (char_end <= char_start) return false;
  auto first = std::find_if(tokens.begin(), tokens.end(), [&](const Token& t) { return t.char_end > char_start; });
  if (first == tokens.end() || first->char_start < char_start) return false;
  auto last_rev = std::find_if(tokens.rbegin(), tokens.rend(), [&](const Token& t) { return t.char_start < char_end; });
  if (last_rev == tokens.rend() || last_rev->char_end > char_end) return false;
  const int s = static_cast<int>(first - tokens.begin());
  const int e = static_cast<int>(tokens.rend() - last_rev) - 1;
  if (e < s) return false;
  span->start = s;
  span->end = e;
  return true;
}

QAExample make_example(std::string id, PassagePtr passage, std::string_view question_text, AnswerSpan answer,
                       Provenance provenance, int max_question_len) {
  if (!answer.valid_for(passage->length()))
    throw std::invalid_argument("make_example: answer span out of range for passage " + passage->id);
  QAExample ex;
  ex.id = std::move(id);
  ex.question = tokenize_and_annotate(question_text);
  if (max_question_len > 0 && static_cast<int>(ex.question.size()) > max_question_len)
    ex.question.resize(static_cast<std::size_t>(max_question_len));
  ex.question_text = std::string(question_text);
  ex.answer = answer;
  ex.provenance = provenance;
  ex.gold_answers = {passage->span_text(answer.start, answer.end)};
  ex.passage = std::move(passage);
  return ex;
}

LoadResult parse_squad_json(std::string_view json_text, Domain domain, LoadOptions options,
                            std::string_view source_name) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ParseError(std::string(source_name) + ": " + e.what());
  }
  LoadResult out;
  try {
    const json& data = doc.at("data");
    int article_idx = 0;
    for (const json& article : data) {
      const std::string title = article.value("title", "article" + std::to_string(article_idx));
      int para_idx = 0;
      for (const json& para : article.at("paragraphs")) {
        ++out.stats.paragraphs;
        const std::string context = para.at("context").get<std::string>();
        auto passage = std::make_shared<AnnotatedPassage>(make_passage(
            std::string(domain_name(domain)) + ":" + title + "_p" + std::to_string(para_idx), context, domain, options.max_passage_len));
        out.passages.push_back(passage);
        for (const json& qa : para.at("qas")) {
          ++out.stats.questions;
          const std::string qid = qa.value("id", passage->id + "_q" + std::to_string(out.stats.questions));
          const std::string question = qa.at("question").get<std::string>();
          const json& answers = qa.at("answers");
          if (answers.empty()) {
            spdlog::warn("{}: question {} has no answers; skipped", source_name, qid);
            ++out.stats.dropped_range;
            continue;
          }
          const json& first = answers.at(0);
          const std::string text = first.at("text").get<std::string>();
          const long start = first.at("answer_start").get<long>();
          if (start < 0 || static_cast<std::size_t>(start) >= context.size()) {
            spdlog::warn("{}: question {} answer_start {} beyond context length {}; skipped", source_name, qid,
                         start, context.size());
            ++out.stats.dropped_range;
            continue;
          }
          const std::size_t cs = static_cast<std::size_t>(start);
          const std::size_t ce = std::min(context.size(), cs + text.size());
          if (ce > passage->raw_text.size()) {
            ++out.stats.dropped_truncated;
            continue;
          }
          AnswerSpan span;
          if (!align_answer(passage->tokens, cs, ce, &span)) {
            ++out.stats.dropped_alignment;
            continue;
          }
          bool has_question_token = false;
          for (unsigned char c : question) has_question_token |= std::isspace(c) == 0;
          if (!has_question_token) {
            ++out.stats.dropped_question;
            continue;
          }
          QAExample ex = make_example(qid, passage, question, span, Provenance::human, options.max_question_len);
          ex.gold_answers.clear();
          for (const json& a : answers) {
            std::string t = a.at("text").get<std::string>();
            if (std::find(ex.gold_answers.begin(), ex.gold_answers.end(), t) == ex.gold_answers.end())
              ex.gold_answers.push_back(std::move(t));
          }
          out.examples.push_back(std::move(ex));
          ++out.stats.kept;
        }
        ++para_idx;
      }
      ++article_idx;
    }
  } catch (const json::exception& e) {
    throw ParseError(std::string(source_name) + ": schema error: " + e.what());
  }
  return out;
}

LoadResult load_squad_json(const std::filesystem::path& path, Domain domain, LoadOptions options) {
  std::string text;
  try {
    text = io::read_file(path);
  } catch (const std::exception& e) {
    throw ParseError(e.what());
  }
  return parse_squad_json(text, domain, options, path.string());
}

// ---------------------------------------------------------------------------
// Vocabulary

Vocabulary::Vocabulary() : id_to_token_{"<pad>", "<unk>", "<bos>", "<eos>"} {
  for (int i = 0; i < kNumSpecials; ++i) token_to_id_.emplace(id_to_token_[static_cast<std::size_t>(i)], i);
}

Vocabulary::Vocabulary(const std::vector<std::string>& tokens, int dim) : Vocabulary() {
  embedding_dim = dim;
  for (const std::string& t : tokens) {
    if (token_to_id_.contains(t)) continue;
    token_to_id_.emplace(t, size());
    id_to_token_.push_back(t);
  }
}

int Vocabulary::id(std::string_view token) const {
  auto it = token_to_id_.find(token);
  return it == token_to_id_.end() ? kUnk : it->second;
}

bool Vocabulary::contains(std::string_view token) const { return token_to_id_.find(token) != token_to_id_.end(); }

Vocabulary build_vocab(const std::vector<std::string>& stream, int min_count, int max_size, int embedding_dim) {
  std::map<std::string, long> counts;
  for (const std::string& t : stream) ++counts[t];
  std::vector<std::pair<std::string, long>> kept;
  for (auto& [tok, c] : counts)
    if (c >= min_count) kept.emplace_back(tok, c);
  std::stable_sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  const std::size_t room =
      max_size > Vocabulary::kNumSpecials ? static_cast<std::size_t>(max_size - Vocabulary::kNumSpecials) : 0;
  if (kept.size() > room) kept.resize(room);
  std::vector<std::string> tokens;
  tokens.reserve(kept.size());
  for (auto& [tok, c] : kept) tokens.push_back(tok);
  return Vocabulary(tokens, embedding_dim);
}

std::vector<std::string> token_stream(const std::vector<PassagePtr>& passages) {
  std::vector<std::string> out;
  for (const PassagePtr& p : passages)
    for (const Token& t : p->tokens) out.push_back(t.text);
  return out;
}

std::vector<std::string> token_stream(const std::vector<QAExample>& examples) {
  std::vector<std::string> out;
  std::vector<const AnnotatedPassage*> seen;
  for (const QAExample& ex : examples) {
    if (std::find(seen.begin(), seen.end(), ex.passage.get()) == seen.end()) {
      seen.push_back(ex.passage.get());
      for (const Token& t : ex.passage->tokens) out.push_back(t.text);
    }
    for (const Token& t : ex.question) out.push_back(t.text);
  }
  return out;
}

std::vector<int> to_ids(const Vocabulary& vocab, const std::vector<Token>& tokens) {
  std::vector<int> ids;
  ids.reserve(tokens.size());
  for (const Token& t : tokens) ids.push_back(vocab.id(t.text));
  return ids;
}

// ---------------------------------------------------------------------------
// Embeddings

EmbeddingTable random_embeddings(const Vocabulary& vocab, std::uint64_t seed) {
  Rng rng(seed);
  EmbeddingTable table(vocab.size(), vocab.embedding_dim);
  for (Eigen::Index i = 0; i < table.size(); ++i) table.data()[i] = static_cast<float>(rng.uniform(-0.1, 0.1));
  table.row(Vocabulary::kPad).setZero();
  return table;
}

EmbeddingTable load_pretrained_embeddings(const std::filesystem::path& path, const Vocabulary& vocab,
                                          std::uint64_t seed) {
  EmbeddingTable table = random_embeddings(vocab, seed);
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open embeddings file " + path.string());
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string tok;
    ss >> tok;
    std::vector<float> vals;
    std::string num;
    while (ss >> num) {
      try {
        vals.push_back(std::stof(num));
      } catch (const std::exception&) {
        throw ParseError(path.string() + ":" + std::to_string(lineno) + ": bad number '" + num + "'");
      }
    }
    if (static_cast<int>(vals.size()) != vocab.embedding_dim)
      throw ParseError(path.string() + ":" + std::to_string(lineno) + ": expected " +
                       std::to_string(vocab.embedding_dim) + " values for '" + tok + "', got " +
                       std::to_string(vals.size()));
    const int id = vocab.id(tok);
    if (id == Vocabulary::kUnk && !vocab.contains(tok)) continue;
    if (id == Vocabulary::kPad) continue;
    for (int k = 0; k < vocab.embedding_dim; ++k) table(id, k) = vals[static_cast<std::size_t>(k)];
  }
  return table;
}

// ---------------------------------------------------------------------------
// Caches

namespace {

json token_json(const Token& t) {
  return json{{"text", t.text}, {"pos", pos_name(t.pos)}, {"ner", ner_name(t.ner)}, {"start", t.char_start},
              {"end", t.char_end}};
}

Token token_from_json(const json& j) {
  Token t;
  t.text = j.at("text").get<std::string>();
  t.pos = pos_from_name(j.at("pos").get<std::string>());
  t.ner = ner_from_name(j.at("ner").get<std::string>());
  t.char_start = j.at("start").get<std::size_t>();
  t.char_end = j.at("end").get<std::size_t>();
  return t;
}

template <class F>
void for_each_jsonl(const std::filesystem::path& path, F&& f) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  std::string line;
  long lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      f(json::parse(line));
    } catch (const json::exception& e) {
      throw ParseError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    } catch (const std::invalid_argument& e) {
      throw ParseError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

}  // namespace

void write_passages_jsonl(const std::filesystem::path& path, const std::vector<PassagePtr>& passages) {
  std::string out;
  for (const PassagePtr& p : passages) {
    json toks = json::array();
    for (const Token& t : p->tokens) toks.push_back(token_json(t));
    json rec{{"id", p->id}, {"text", p->raw_text}, {"tokens", std::move(toks)}, {"domain", domain_name(p->domain)}};
    out += rec.dump();
    out += '\n';
  }
  io::write_file_atomic(path, out);
}

std::vector<PassagePtr> read_passages_jsonl(const std::filesystem::path& path) {
  std::vector<PassagePtr> out;
  for_each_jsonl(path, [&](const json& j) {
    auto p = std::make_shared<AnnotatedPassage>();
    p->id = j.at("id").get<std::string>();
    p->raw_text = j.at("text").get<std::string>();
    p->domain = domain_from_name(j.at("domain").get<std::string>());
    for (const json& t : j.at("tokens")) p->tokens.push_back(token_from_json(t));
    out.push_back(std::move(p));
  });
  return out;
}

void write_examples_jsonl(const std::filesystem::path& path, const std::vector<QAExample>& examples) {
  std::string out;
  for (const QAExample& ex : examples) {
    json q = json::array();
    for (const Token& t : ex.question) q.push_back(token_json(t));
    json rec{{"id", ex.id},
             {"passage_id", ex.passage->id},
             {"question", ex.question_text},
             {"question_tokens", std::move(q)},
             {"answer", {{"start", ex.answer.start}, {"end", ex.answer.end}}},
             {"provenance", provenance_name(ex.provenance)},
             {"gold_answers", ex.gold_answers}};
    out += rec.dump();
    out += '\n';
  }
  io::write_file_atomic(path, out);
}

std::vector<QAExample> read_examples_jsonl(const std::filesystem::path& path, const std::vector<PassagePtr>& passages) {
  std::unordered_map<std::string, PassagePtr> by_id;
  for (const PassagePtr& p : passages) by_id.emplace(p->id, p);
  std::vector<QAExample> out;
  for_each_jsonl(path, [&](const json& j) {
    QAExample ex;
    ex.id = j.at("id").get<std::string>();
    const std::string pid = j.at("passage_id").get<std::string>();
    auto it = by_id.find(pid);
    if (it == by_id.end()) throw std::invalid_argument("unknown passage id '" + pid + "'");
    ex.passage = it->second;
    ex.question_text = j.at("question").get<std::string>();
    for (const json& t : j.at("question_tokens")) ex.question.push_back(token_from_json(t));
    ex.answer.start = j.at("answer").at("start").get<int>();
    ex.answer.end = j.at("answer").at("end").get<int>();
    if (!ex.answer.valid_for(ex.passage->length()))
      throw std::invalid_argument("answer span out of range in example '" + ex.id + "'");
    ex.provenance = provenance_from_name(j.at("provenance").get<std::string>());
    ex.gold_answers = j.at("gold_answers").get<std::vector<std::string>>();
    out.push_back(std::move(ex));
  });
  return out;
}

void write_vocab(const std::filesystem::path& path, const Vocabulary& vocab) {
  json j{{"embedding_dim", vocab.embedding_dim}, {"tokens", vocab.tokens()}};
  io::write_file_atomic(path, j.dump());
}

Vocabulary read_vocab(const std::filesystem::path& path) {
  json j;
  try {
    j = json::parse(io::read_file(path));
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
  auto tokens = j.at("tokens").get<std::vector<std::string>>();
  if (tokens.size() < Vocabulary::kNumSpecials) throw ParseError(path.string() + ": vocabulary lacks specials");
  tokens.erase(tokens.begin(), tokens.begin() + Vocabulary::kNumSpecials);
  return Vocabulary(tokens, j.at("embedding_dim").get<int>());
}

}  // namespace adamrc::corpus
