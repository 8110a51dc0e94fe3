#include "adamrc/mrc.hpp"

#include <cmath>
#include <stdexcept>

namespace adamrc::mrc {

void MrcConfig::validate() const {
  if (vocab_size <= corpus::Vocabulary::kNumSpecials) throw std::invalid_argument("mrc: vocab_size too small");
  if (hidden <= 0 || word_dim <= 0 || pos_dim <= 0 || ner_dim <= 0) throw std::invalid_argument("mrc: dims must be > 0");
  if (answer_steps < 1) throw std::invalid_argument("mrc: answer_steps must be >= 1");
  if (prediction_dropout < 0 || prediction_dropout >= 1 || dropout < 0 || dropout >= 1)
    throw std::invalid_argument("mrc: dropout rates must be in [0, 1)");
  if (max_span_len < 1) throw std::invalid_argument("mrc: max_span_len must be >= 1");
}

LexiconInput lexicon_input(const corpus::Vocabulary& vocab, const std::vector<corpus::Token>& tokens) {
  LexiconInput in;
  in.words.reserve(tokens.size());
  for (const corpus::Token& t : tokens) {
    in.words.push_back(vocab.id(t.text));
    in.pos.push_back(t.pos);
    in.ner.push_back(t.ner);
  }
  return in;
}

void Encoder::collect(nn::ParamRefs& out) {
  out.insert(out.end(), {&word_emb, &pos_emb, &ner_emb});
  layer1.collect(out);
  layer2.collect(out);
  out.insert(out.end(), {&cross_w, &fuse_w, &fuse_b, &q_score});
}

void AnswerDecoder::collect(nn::ParamRefs& out) {
  out.insert(out.end(), {&attn_w, &gru_wx, &gru_wh, &gru_b, &start_w, &end_w});
}

MrcModel MrcModel::create(const MrcConfig& config, std::uint64_t seed, const corpus::EmbeddingTable* embeddings) {
  config.validate();
  MrcModel m;
  m.config_ = config;
  const int h2 = 2 * config.hidden;
  const int lex = config.word_dim + config.pos_dim + config.ner_dim;
  Encoder& e = m.encoder;
  e.word_emb = Parameter("encoder.word_emb", config.vocab_size, config.word_dim);
  e.pos_emb = Parameter("encoder.pos_emb", corpus::kNumPosTags, config.pos_dim);
  e.ner_emb = Parameter("encoder.ner_emb", corpus::kNumNerTags, config.ner_dim);
  e.layer1 = nn::BiLstm("encoder.lstm1", lex, config.hidden);
  e.layer2 = nn::BiLstm("encoder.lstm2", h2, config.hidden);
  e.cross_w = Parameter("encoder.cross_w", h2, h2);
  e.fuse_w = Parameter("encoder.fuse_w", 2 * h2, h2);
  e.fuse_b = Parameter("encoder.fuse_b", 1, h2);
  e.q_score = Parameter("encoder.q_score", 1, h2);

  AnswerDecoder& d = m.decoder;
  d.attn_w = Parameter("decoder.attn_w", h2, h2);
  d.gru_wx = Parameter("decoder.gru_wx", h2, 3 * h2);
  d.gru_wh = Parameter("decoder.gru_wh", h2, 3 * h2);
  d.gru_b = Parameter("decoder.gru_b", 1, 3 * h2);
  d.start_w = Parameter("decoder.start_w", h2, h2);
  d.end_w = Parameter("decoder.end_w", h2, h2);

  Rng rng(seed);
  if (embeddings) {
    if (embeddings->rows() != config.vocab_size || embeddings->cols() != config.word_dim)
      throw std::invalid_argument("mrc: embedding table shape does not match config");
    e.word_emb.value = *embeddings;
  } else {
    ag::init_uniform(e.word_emb, rng, 0.1);
    e.word_emb.value.row(corpus::Vocabulary::kPad).setZero();
  }
  ag::init_uniform(e.pos_emb, rng, 0.1);
  ag::init_uniform(e.ner_emb, rng, 0.1);
  e.layer1.init(rng);
  e.layer2.init(rng);
  for (Parameter* p : {&e.cross_w, &e.fuse_w, &e.q_score, &d.attn_w, &d.gru_wx, &d.gru_wh, &d.start_w, &d.end_w})
    ag::init_glorot(*p, rng);
  for (Parameter* p : {&e.fuse_b, &d.gru_b}) p->zero_grad();
  for (Parameter* p : m.params()) p->zero_grad();
  return m;
}

nn::ParamRefs MrcModel::encoder_params() {
  nn::ParamRefs out;
  encoder.collect(out);
  return out;
}

nn::ParamRefs MrcModel::decoder_params() {
  nn::ParamRefs out;
  decoder.collect(out);
  return out;
}

nn::ParamRefs MrcModel::params() {
  nn::ParamRefs out = encoder_params();
  decoder.collect(out);
  return out;
}

namespace {

Var lexicon(Graph& g, Encoder& e, const LexiconInput& in) {
  const Var parts[] = {g.lookup(e.word_emb, in.words), g.lookup(e.pos_emb, in.pos), g.lookup(e.ner_emb, in.ner)};
  return ag::hcat(parts);
}

Var contextual(Graph& g, Encoder& e, Var lex, double rate, Mode mode, Rng* rng) {
  if (mode == Mode::train) lex = ag::dropout(lex, rate, *rng);
  Var h1 = e.layer1.run(g, lex);
  if (mode == Mode::train) h1 = ag::dropout(h1, rate, *rng);
  return e.layer2.run(g, h1);
}

}  // namespace

EncoderOutput encode(Graph& g, MrcModel& model, const LexiconInput& passage, const LexiconInput& question, Mode mode,
                     Rng* rng) {
  if (passage.length() < 1 || question.length() < 1) throw std::invalid_argument("encode: empty passage or question");
  if (mode == Mode::train && rng == nullptr) throw std::invalid_argument("encode: train mode needs an rng");
  Encoder& e = model.encoder;
  const double rate = model.config().dropout;

  Var hp = contextual(g, e, lexicon(g, e, passage), rate, mode, rng);   // T x 2m
  Var hq = contextual(g, e, lexicon(g, e, question), rate, mode, rng);  // T' x 2m
  Var hq_t = ag::transpose(hq);

  EncoderOutput out;
  out.cross_attention = ag::softmax_rows(ag::matmul(ag::matmul(hp, g.param(e.cross_w)), hq_t));
  Var context = ag::matmul(out.cross_attention, hq);
  const Var fused[] = {hp, context};
  out.passage_memory = ag::tanh(ag::add_row(ag::matmul(ag::hcat(fused), g.param(e.fuse_w)), g.param(e.fuse_b)));

  out.question_attention = ag::softmax_rows(ag::matmul(g.param(e.q_score), hq_t));
  out.question_summary = ag::matmul(out.question_attention, hq);
  return out;
}

SpanVars decode(Graph& g, MrcModel& model, const EncoderOutput& enc, Mode mode, Rng* rng) {
  const MrcConfig& cfg = model.config();
  AnswerDecoder& d = model.decoder;
  const Eigen::Index h2 = 2 * cfg.hidden;
  Var mp = enc.passage_memory;
  Var mp_t = ag::transpose(mp);
  Var wx = g.param(d.gru_wx), wh = g.param(d.gru_wh), b = g.param(d.gru_b);
  Var attn = g.param(d.attn_w), ws = g.param(d.start_w), we = g.param(d.end_w);

  SpanVars out;
  Var s = enc.question_summary;
  for (int k = 0; k < cfg.answer_steps; ++k) {
    Var beta = ag::softmax_rows(ag::matmul(ag::matmul(s, attn), mp_t));  // 1 x T
    Var x = ag::matmul(beta, mp);                                         // 1 x 2m
    Var gx = ag::add(ag::matmul(x, wx), b);
    Var gh = ag::matmul(s, wh);
    Var r = ag::sigmoid(ag::add(ag::slice_cols(gx, 0, h2), ag::slice_cols(gh, 0, h2)));
    Var z = ag::sigmoid(ag::add(ag::slice_cols(gx, h2, h2), ag::slice_cols(gh, h2, h2)));
    Var n = ag::tanh(ag::add(ag::slice_cols(gx, 2 * h2, h2), ag::mul(r, ag::slice_cols(gh, 2 * h2, h2))));
    s = ag::add(ag::mul(ag::one_minus(z), n), ag::mul(z, s));
    out.start_steps.push_back(ag::softmax_rows(ag::matmul(ag::matmul(s, ws), mp_t)));
    out.end_steps.push_back(ag::softmax_rows(ag::matmul(ag::matmul(s, we), mp_t)));
  }

  const int K = cfg.answer_steps;
  out.kept.assign(static_cast<std::size_t>(K), true);
  if (mode == Mode::train && cfg.prediction_dropout > 0) {
    if (rng == nullptr) throw std::invalid_argument("decode: train mode needs an rng");
    bool any = false;
    for (int k = 0; k < K; ++k) {
      out.kept[static_cast<std::size_t>(k)] = !rng->bernoulli(cfg.prediction_dropout);
      any = any || out.kept[static_cast<std::size_t>(k)];
    }
    if (!any) out.kept[rng->below(static_cast<std::uint64_t>(K))] = true;
  }
  std::vector<Var> starts, ends;
  for (int k = 0; k < K; ++k) {
    if (!out.kept[static_cast<std::size_t>(k)]) continue;
    starts.push_back(out.start_steps[static_cast<std::size_t>(k)]);
    ends.push_back(out.end_steps[static_cast<std::size_t>(k)]);
  }
  if (starts.size() == 1) {
    out.start = starts.front();
    out.end = ends.front();
  } else {
    out.start = ag::mean_rows(ag::vcat(starts));
    out.end = ag::mean_rows(ag::vcat(ends));
  }
  return out;
}

SpanDistribution to_distribution(const SpanVars& vars) {
  SpanDistribution d;
  const auto K = static_cast<Eigen::Index>(vars.start_steps.size());
  const Eigen::Index T = vars.start.cols();
  d.start_steps.resize(K, T);
  d.end_steps.resize(K, T);
  for (Eigen::Index k = 0; k < K; ++k) {
    d.start_steps.row(k) = vars.start_steps[static_cast<std::size_t>(k)].value().row(0);
    d.end_steps.row(k) = vars.end_steps[static_cast<std::size_t>(k)].value().row(0);
  }
  d.kept = vars.kept;
  d.start = vars.start.value().row(0);
  d.end = vars.end.value().row(0);
  return d;
}

corpus::AnswerSpan predict_span(const Eigen::RowVectorXd& start, const Eigen::RowVectorXd& end, int max_span_len,
                                double* score) {
  const Eigen::Index T = start.size();
  if (T < 1 || end.size() != T) throw std::invalid_argument("predict_span: bad distributions");
  corpus::AnswerSpan best{0, 0};
  double best_score = -1.0;
  for (Eigen::Index i = 0; i < T; ++i) {
    const Eigen::Index last = std::min<Eigen::Index>(T - 1, i + max_span_len - 1);
    for (Eigen::Index j = i; j <= last; ++j) {
      const double sc = start(i) * end(j);
      if (sc > best_score) {
        best_score = sc;
        best = {static_cast<int>(i), static_cast<int>(j)};
      }
    }
  }
  if (score) *score = best_score;
  return best;
}

corpus::AnswerSpan predict_span(const SpanDistribution& dist, int max_span_len) {
  return predict_span(dist.start, dist.end, max_span_len);
}

Var answer_nll(Graph& g, const SpanVars& span, corpus::AnswerSpan gold) {
  (void)g;
  const Eigen::Index T = span.start.cols();
  if (gold.start < 0 || gold.end < 0 || gold.start >= T || gold.end >= T)
    throw std::out_of_range("answer_nll: gold index out of range");
  Var ls = ag::log(ag::pick(span.start, 0, gold.start));
  Var le = ag::log(ag::pick(span.end, 0, gold.end));
  return ag::scale(ag::add(ls, le), -1.0);
}

double answer_nll(const SpanDistribution& dist, corpus::AnswerSpan gold) {
  const Eigen::Index T = dist.start.size();
  if (gold.start < 0 || gold.end < 0 || gold.start >= T || gold.end >= T)
    throw std::out_of_range("answer_nll: gold index out of range");
  return -std::log(dist.start(gold.start)) - std::log(dist.end(gold.end));
}

corpus::AnswerSpan predict(MrcModel& model, const corpus::Vocabulary& vocab, const corpus::QAExample& ex) {
  Graph g(false);
  EncoderOutput enc = encode(g, model, lexicon_input(vocab, ex.passage->tokens), lexicon_input(vocab, ex.question),
                             Mode::eval);
  SpanVars sv = decode(g, model, enc, Mode::eval);
  return predict_span(sv.start.value().row(0), sv.end.value().row(0), model.config().max_span_len);
}

}  // namespace adamrc::mrc
