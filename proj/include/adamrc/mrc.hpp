#pragma once

// SAN-style extractive reader. The encoder maps a passage/question pair to a
// passage working memory (T x 2m) and a question summary (2m); the answer
// decoder runs K GRU reasoning steps over the memory and averages per-step
// start/end distributions.

#include <cstdint>
#include <optional>
#include <vector>

#include "adamrc/autograd.hpp"
#include "adamrc/corpus.hpp"
#include "adamrc/nn.hpp"

namespace adamrc::mrc {

using ag::Graph;
using ag::Matrix;
using ag::Parameter;
using ag::Var;

enum class Mode { train, eval };

struct MrcConfig {
  int vocab_size = 0;
  int word_dim = 50;
  int pos_dim = 12;
  int ner_dim = 8;
  int hidden = 64;  // m: BiLSTM half-width
  int answer_steps = 5;
  double prediction_dropout = 0.4;
  double dropout = 0.3;
  int max_span_len = 15;

  void validate() const;
};

// Token ids of one text for the lexicon layer.
struct LexiconInput {
  std::vector<int> words, pos, ner;
  int length() const { return static_cast<int>(words.size()); }
};

LexiconInput lexicon_input(const corpus::Vocabulary& vocab, const std::vector<corpus::Token>& tokens);

struct Encoder {
  Parameter word_emb, pos_emb, ner_emb;
  nn::BiLstm layer1, layer2;
  Parameter cross_w;   // 2m x 2m bilinear passage/question affinity
  Parameter fuse_w;    // 4m x 2m
  Parameter fuse_b;    // 1 x 2m
  Parameter q_score;   // 1 x 2m question self-attention

  void collect(nn::ParamRefs& out);
};

struct AnswerDecoder {
  Parameter attn_w;          // 2m x 2m
  Parameter gru_wx, gru_wh;  // 2m x 6m (gate order r, z, n)
  Parameter gru_b;           // 1 x 6m
  Parameter start_w, end_w;  // 2m x 2m

  void collect(nn::ParamRefs& out);
};

class MrcModel {
 public:
  MrcModel() = default;
  // Word embeddings start from `embeddings` when given (rows = vocab_size).
  static MrcModel create(const MrcConfig& config, std::uint64_t seed,
                         const corpus::EmbeddingTable* embeddings = nullptr);

  const MrcConfig& config() const { return config_; }
  MrcConfig& mutable_config() { return config_; }
  nn::ParamRefs encoder_params();
  nn::ParamRefs decoder_params();
  nn::ParamRefs params();

  Encoder encoder;
  AnswerDecoder decoder;

 private:
  MrcConfig config_;
};

struct EncoderOutput {
  Var passage_memory;    // M^p, T x 2m
  Var question_summary;  // M^q, 1 x 2m
  Var cross_attention;   // T x T' row-stochastic
  Var question_attention;  // 1 x T'
};

struct SpanVars {
  std::vector<Var> start_steps, end_steps;  // each 1 x T
  std::vector<bool> kept;                   // steps retained by prediction dropout
  Var start, end;                           // averaged 1 x T
};

struct SpanDistribution {
  Matrix start_steps, end_steps;  // K x T
  std::vector<bool> kept;
  Eigen::RowVectorXd start, end;  // averaged over kept steps
};

// `rng` is required in train mode.
EncoderOutput encode(Graph& g, MrcModel& model, const LexiconInput& passage, const LexiconInput& question, Mode mode,
                     Rng* rng = nullptr);
SpanVars decode(Graph& g, MrcModel& model, const EncoderOutput& enc, Mode mode, Rng* rng = nullptr);
SpanDistribution to_distribution(const SpanVars& vars);

// Highest P_start(i) * P_end(j) over i <= j < i + max_span_len; ties go to the
// smaller i, then the smaller j.
corpus::AnswerSpan predict_span(const SpanDistribution& dist, int max_span_len);
corpus::AnswerSpan predict_span(const Eigen::RowVectorXd& start, const Eigen::RowVectorXd& end, int max_span_len,
                                double* score = nullptr);

// -log P_start(a_start) - log P_end(a_end) on the averaged distributions.
Var answer_nll(Graph& g, const SpanVars& span, corpus::AnswerSpan gold);
double answer_nll(const SpanDistribution& dist, corpus::AnswerSpan gold);

// Convenience: eval-mode span prediction for one example.
corpus::AnswerSpan predict(MrcModel& model, const corpus::Vocabulary& vocab, const corpus::QAExample& ex);

}  // namespace adamrc::mrc
