#pragma once

// Pointer-generator question generation. A BiLSTM reads the passage with an
// answer-position flag; an LSTM decoder attends over it and mixes a vocabulary
// softmax with a copy distribution over passage positions:
//
//   P(w) = g * P_vocab(w) + (1 - g) * sum_{i : p_i = w} alpha_i
//
// Passage words missing from the vocabulary get extended ids V, V+1, ... so the
// copy branch can still emit them.

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "adamrc/answer_extractor.hpp"
#include "adamrc/autograd.hpp"
#include "adamrc/corpus.hpp"
#include "adamrc/nn.hpp"

namespace adamrc::qgen {

using ag::Graph;
using ag::Matrix;
using ag::Parameter;
using ag::RowVector;
using ag::Var;

struct QGenConfig {
  int vocab_size = 0;
  int word_dim = 50;
  int pos_dim = 12;
  int ner_dim = 8;
  int lstm_hidden = 125;  // per direction; the decoder state is 2x this
  double dropout = 0.3;
  int beam_size = 5;
  int max_decode_len = 30;
  int max_passage_len = 300;

  void validate() const;
};

class QGenModel {
 public:
  QGenModel() = default;
  static QGenModel create(const QGenConfig& config, std::uint64_t seed,
                          const corpus::EmbeddingTable* embeddings = nullptr);

  const QGenConfig& config() const { return config_; }
  nn::ParamRefs params();

  Parameter word_emb, pos_emb, ner_emb;
  nn::BiLstm encoder;            // lexicon (+1 flag column) -> T x 2h
  Parameter init_w, init_b;      // decoder h0 = tanh(mean(H) W + b)
  nn::LstmWeights decoder;       // word_dim -> 2h
  Parameter att_key, att_query;  // 2h x 2h
  Parameter att_b, att_v;        // 1 x 2h
  Parameter out_w, out_b;        // [s; ctx] (4h) -> V
  Parameter gate_w, gate_b;      // [s; ctx] -> 1

 private:
  QGenConfig config_;
};

// Model-ready ids for one (passage, answer[, question]) triple.
struct Instance {
  std::vector<int> words, pos, ner;
  std::vector<double> answer_flag;
  std::vector<int> src_ext;            // extended id of every passage position
  std::vector<std::string> oov;        // extended id V+k <-> oov[k]
  std::vector<int> dec_input;          // BOS q_1 .. q_n (vocab ids)
  std::vector<int> target;             // q_1 .. q_n EOS (extended ids)
};

// 1 inside [answer.start, answer.end], else 0.
std::vector<double> answer_flags(int length, corpus::AnswerSpan answer);

Instance make_instance(const corpus::Vocabulary& vocab, const corpus::AnnotatedPassage& passage,
                       corpus::AnswerSpan answer, const std::vector<corpus::Token>* question = nullptr);

// Graph encoding (T x 2h). Throws when the passage exceeds max_passage_len.
Var encode(Graph& g, QGenModel& model, const Instance& inst, bool train, Rng* rng = nullptr);

// Mean per-token NLL of the target question (EOS included) under teacher forcing.
Var teacher_forced_nll(Graph& g, QGenModel& model, const Instance& inst, bool train, Rng* rng = nullptr);

// Frozen-parameter inference.
struct EncodedPassage {
  Matrix states;  // T x 2h
  Matrix keys;    // states * att_key + att_b
  std::vector<int> src_ext;
  std::vector<std::string> oov;
  RowVector h0;
};

struct DecodeStepState {
  RowVector h, c;
  RowVector attention;  // over passage positions, from the last step
  double gate = 1.0;
};

struct StepOutput {
  RowVector probs;  // over V + |oov| extended ids
  RowVector vocab_probs;
  RowVector copy_probs;
  DecodeStepState state;
};

EncodedPassage encode_passage(QGenModel& model, const Instance& inst);
DecodeStepState initial_state(const EncodedPassage& enc);
// Consumes prev_token (vocab or extended id) and returns the next-token
// distribution. forced_gate overrides g for testing.
StepOutput qgen_step(QGenModel& model, int prev_token, const DecodeStepState& state, const EncodedPassage& enc,
                     std::optional<double> forced_gate = std::nullopt);

struct Hypothesis {
  std::vector<int> ids;  // extended ids, EOS excluded
  std::vector<std::string> tokens;
  double log_prob = 0.0;
  double score = 0.0;  // log_prob / (ids + EOS if finished)
  bool finished = false;
};

Hypothesis beam_search(QGenModel& model, const corpus::Vocabulary& vocab, const Instance& inst, int beam_size,
                       int max_len);

std::vector<std::string> qgen_generate(QGenModel& model, const corpus::Vocabulary& vocab,
                                       const corpus::AnnotatedPassage& passage, corpus::AnswerSpan answer);

struct TrainOptions {
  int epochs = 10;
  int batch_size = 32;
  double lr = 0.002;
  double clip_norm = 5.0;
  std::uint64_t seed = 1;
  // Called after every optimizer step with (step, batch mean NLL).
  std::function<void(long, double)> on_step;
};

struct TrainLog {
  std::vector<double> epoch_nll;  // mean teacher-forced NLL per epoch
  std::vector<double> step_nll;
};

TrainLog qgen_train(QGenModel& model, const corpus::Vocabulary& vocab, const std::vector<corpus::QAExample>& examples,
                    const TrainOptions& options);

struct TgenOptions {
  int max_per_passage = extract::kDefaultMaxPerPassage;
  std::uint64_t seed = 1;
};

struct TgenStats {
  int passages = 0;
  int candidates = 0;
  int generated = 0;
  int dropped_empty = 0;
};

std::vector<corpus::QAExample> build_tgen(const std::vector<corpus::PassagePtr>& target_passages, QGenModel& model,
                                          const corpus::Vocabulary& vocab, const TgenOptions& options,
                                          TgenStats* stats = nullptr);

}  // namespace adamrc::qgen
