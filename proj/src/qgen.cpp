#include "adamrc/qgen.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <unordered_map>

#include <spdlog/spdlog.h>

namespace adamrc::qgen {

using corpus::Vocabulary;

void QGenConfig::validate() const {
  if (vocab_size <= Vocabulary::kNumSpecials) throw std::invalid_argument("qgen: vocab_size too small");
  if (lstm_hidden <= 0 || word_dim <= 0 || pos_dim <= 0 || ner_dim <= 0)
    throw std::invalid_argument("qgen: dims must be > 0");
  if (dropout < 0 || dropout >= 1) throw std::invalid_argument("qgen: dropout must be in [0, 1)");
  if (beam_size < 1) throw std::invalid_argument("qgen: beam_size must be >= 1");
  if (max_decode_len < 1) throw std::invalid_argument("qgen: max_decode_len must be >= 1");
  if (max_passage_len < 1) throw std::invalid_argument("qgen: max_passage_len must be >= 1");
}

QGenModel QGenModel::create(const QGenConfig& config, std::uint64_t seed, const corpus::EmbeddingTable* embeddings) {
  config.validate();
  QGenModel m;
  m.config_ = config;
  const int h = config.lstm_hidden, h2 = 2 * h, V = config.vocab_size;
  const int lex = config.word_dim + config.pos_dim + config.ner_dim + 1;
  m.word_emb = Parameter("qgen.word_emb", V, config.word_dim);
  m.pos_emb = Parameter("qgen.pos_emb", corpus::kNumPosTags, config.pos_dim);
  m.ner_emb = Parameter("qgen.ner_emb", corpus::kNumNerTags, config.ner_dim);
  m.encoder = nn::BiLstm("qgen.encoder", lex, h);
  m.init_w = Parameter("qgen.init_w", h2, h2);
  m.init_b = Parameter("qgen.init_b", 1, h2);
  m.decoder = nn::LstmWeights("qgen.decoder", config.word_dim, h2);
  m.att_key = Parameter("qgen.att_key", h2, h2);
  m.att_query = Parameter("qgen.att_query", h2, h2);
  m.att_b = Parameter("qgen.att_b", 1, h2);
  m.att_v = Parameter("qgen.att_v", 1, h2);
  m.out_w = Parameter("qgen.out_w", 2 * h2, V);
  m.out_b = Parameter("qgen.out_b", 1, V);
  m.gate_w = Parameter("qgen.gate_w", 2 * h2, 1);
  m.gate_b = Parameter("qgen.gate_b", 1, 1);

  Rng rng(seed);
  if (embeddings) {
    if (embeddings->rows() != V || embeddings->cols() != config.word_dim)
      throw std::invalid_argument("qgen: embedding table shape does not match config");
    m.word_emb.value = *embeddings;
  } else {
    ag::init_uniform(m.word_emb, rng, 0.1);
    m.word_emb.value.row(Vocabulary::kPad).setZero();
  }
  ag::init_uniform(m.pos_emb, rng, 0.1);
  ag::init_uniform(m.ner_emb, rng, 0.1);
  m.encoder.init(rng);
  m.decoder.init(rng);
  for (Parameter* p : {&m.init_w, &m.att_key, &m.att_query, &m.att_v, &m.out_w, &m.gate_w}) ag::init_glorot(*p, rng);
  for (Parameter* p : m.params()) p->zero_grad();
  return m;
}

nn::ParamRefs QGenModel::params() {
  nn::ParamRefs out{&word_emb, &pos_emb, &ner_emb};
  encoder.collect(out);
  out.insert(out.end(), {&init_w, &init_b});
  decoder.collect(out);
  out.insert(out.end(), {&att_key, &att_query, &att_b, &att_v, &out_w, &out_b, &gate_w, &gate_b});
  return out;
}

std::vector<double> answer_flags(int length, corpus::AnswerSpan answer) {
  std::vector<double> flags(static_cast<std::size_t>(std::max(length, 0)), 0.0);
  for (int i = std::max(answer.start, 0); i <= answer.end && i < length; ++i) flags[static_cast<std::size_t>(i)] = 1.0;
  return flags;
}

Instance make_instance(const Vocabulary& vocab, const corpus::AnnotatedPassage& passage, corpus::AnswerSpan answer,
                       const std::vector<corpus::Token>* question) {
  if (!answer.valid_for(passage.length()))
    throw std::invalid_argument("make_instance: answer span out of range for passage " + passage.id);
  Instance in;
  const int V = vocab.size();
  std::unordered_map<std::string, int> oov_ids;
  for (const corpus::Token& t : passage.tokens) {
    const int id = vocab.id(t.text);
    in.words.push_back(id);
    in.pos.push_back(t.pos);
    in.ner.push_back(t.ner);
    if (id != Vocabulary::kUnk) {
      in.src_ext.push_back(id);
      continue;
    }
    auto [it, inserted] = oov_ids.emplace(t.text, V + static_cast<int>(in.oov.size()));
    if (inserted) in.oov.push_back(t.text);
    in.src_ext.push_back(it->second);
  }
  in.answer_flag = answer_flags(passage.length(), answer);
  if (question) {
    in.dec_input.push_back(Vocabulary::kBos);
    for (const corpus::Token& t : *question) {
      const int id = vocab.id(t.text);
      in.dec_input.push_back(id);
      if (id != Vocabulary::kUnk) {
        in.target.push_back(id);
      } else {
        auto it = oov_ids.find(t.text);
        in.target.push_back(it == oov_ids.end() ? Vocabulary::kUnk : it->second);
      }
    }
    in.target.push_back(Vocabulary::kEos);
  }
  return in;
}

Var encode(Graph& g, QGenModel& model, const Instance& inst, bool train, Rng* rng) {
  const QGenConfig& cfg = model.config();
  const auto T = static_cast<Eigen::Index>(inst.words.size());
  if (T < 1) throw std::invalid_argument("qgen encode: empty passage");
  if (T > cfg.max_passage_len)
    throw std::invalid_argument("qgen encode: passage of " + std::to_string(T) + " tokens exceeds max_passage_len " +
                                std::to_string(cfg.max_passage_len));
  if (train && rng == nullptr) throw std::invalid_argument("qgen encode: training needs an rng");
  Matrix flag(T, 1);
  for (Eigen::Index i = 0; i < T; ++i) flag(i, 0) = inst.answer_flag[static_cast<std::size_t>(i)];
  const Var parts[] = {g.lookup(model.word_emb, inst.words), g.lookup(model.pos_emb, inst.pos),
                       g.lookup(model.ner_emb, inst.ner), g.constant(std::move(flag))};
  Var lex = ag::hcat(parts);
  if (train) lex = ag::dropout(lex, cfg.dropout, *rng);
  Var h = model.encoder.run(g, lex);
  if (train) h = ag::dropout(h, cfg.dropout, *rng);
  return h;
}

Var teacher_forced_nll(Graph& g, QGenModel& model, const Instance& inst, bool train, Rng* rng) {
  if (inst.target.empty() || inst.dec_input.size() != inst.target.size())
    throw std::invalid_argument("teacher_forced_nll: instance has no question");
  const QGenConfig& cfg = model.config();
  Var H = encode(g, model, inst, train, rng);
  Var h0 = ag::tanh(ag::add_row(ag::matmul(ag::mean_rows(H), g.param(model.init_w)), g.param(model.init_b)));
  Var c0 = g.constant(Matrix::Zero(1, 2 * cfg.lstm_hidden));
  Var x = g.lookup(model.word_emb, inst.dec_input);
  if (train) x = ag::dropout(x, cfg.dropout, *rng);
  Var S = model.decoder.run(g, x, false, h0, c0);

  Var keys = ag::add_row(ag::matmul(H, g.param(model.att_key)), g.param(model.att_b));
  Var alpha = ag::softmax_rows(ag::additive_scores(keys, ag::matmul(S, g.param(model.att_query)), g.param(model.att_v)));
  const Var fparts[] = {S, ag::matmul(alpha, H)};
  Var feats = ag::hcat(fparts);
  Var pv = ag::softmax_rows(ag::add_row(ag::matmul(feats, g.param(model.out_w)), g.param(model.out_b)));
  Var gate = ag::sigmoid(ag::add_row(ag::matmul(feats, g.param(model.gate_w)), g.param(model.gate_b)));
  Var p = ag::pointer_mixture_pick(pv, gate, alpha, inst.src_ext, inst.target);
  return ag::scale(ag::sum(ag::log(p)), -1.0 / static_cast<double>(inst.target.size()));
}

// ---------------------------------------------------------------------------
// Inference

namespace {

Matrix as_double(const Parameter& p) { return p.value.cast<double>(); }

double sigmoid(double x) { return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x)); }

void softmax_inplace(RowVector& v) {
  const double mx = v.maxCoeff();
  v = (v.array() - mx).exp().matrix();
  v /= v.sum();
}

}  // namespace

struct InferenceWeights {
  Matrix emb, wx, wh, b, att_query, att_v, out_w, out_b, gate_w, gate_b;
};

EncodedPassage encode_passage(QGenModel& model, const Instance& inst) {
  Graph g(false);
  Var H = encode(g, model, inst, false);
  EncodedPassage enc;
  enc.states = H.value();
  enc.keys = (enc.states * as_double(model.att_key)).rowwise() + as_double(model.att_b).row(0);
  enc.src_ext = inst.src_ext;
  enc.oov = inst.oov;
  enc.h0 = ((enc.states.colwise().mean() * as_double(model.init_w)) + as_double(model.init_b)).array().tanh().matrix();
  return enc;
}

DecodeStepState initial_state(const EncodedPassage& enc) {
  DecodeStepState s;
  s.h = enc.h0;
  s.c = RowVector::Zero(enc.h0.size());
  s.attention = RowVector::Constant(enc.states.rows(), 1.0 / static_cast<double>(enc.states.rows()));
  return s;
}

namespace {

StepOutput step_impl(const InferenceWeights& w, int vocab_size, int prev_token, const DecodeStepState& state,
                     const EncodedPassage& enc, std::optional<double> forced_gate) {
  const int V = vocab_size;
  const int word = (prev_token >= 0 && prev_token < V) ? prev_token : Vocabulary::kUnk;
  const Eigen::Index hd = state.h.size();
  RowVector z = w.emb.row(word) * w.wx + state.h * w.wh + w.b.row(0);
  StepOutput out;
  DecodeStepState& s = out.state;
  s.c.resize(hd);
  s.h.resize(hd);
  for (Eigen::Index k = 0; k < hd; ++k) {
    const double i = sigmoid(z(k)), f = sigmoid(z(hd + k)), gg = std::tanh(z(2 * hd + k)), o = sigmoid(z(3 * hd + k));
    s.c(k) = f * state.c(k) + i * gg;
    s.h(k) = o * std::tanh(s.c(k));
  }
  const RowVector q = s.h * w.att_query;
  RowVector e(enc.keys.rows());
  for (Eigen::Index i = 0; i < enc.keys.rows(); ++i)
    e(i) = ((enc.keys.row(i) + q).array().tanh() * w.att_v.row(0).array()).sum();
  softmax_inplace(e);
  s.attention = e;
  const RowVector ctx = e * enc.states;
  RowVector feats(2 * hd);
  feats << s.h, ctx;
  out.vocab_probs = feats * w.out_w + w.out_b.row(0);
  softmax_inplace(out.vocab_probs);
  s.gate = forced_gate ? *forced_gate : sigmoid((feats * w.gate_w)(0, 0) + w.gate_b(0, 0));

  const auto ext = static_cast<Eigen::Index>(V + enc.oov.size());
  out.copy_probs = RowVector::Zero(ext);
  for (Eigen::Index i = 0; i < e.size(); ++i) out.copy_probs(enc.src_ext[static_cast<std::size_t>(i)]) += e(i);
  out.probs = (1.0 - s.gate) * out.copy_probs;
  out.probs.head(V) += s.gate * out.vocab_probs;
  return out;
}

InferenceWeights inference_weights(QGenModel& m) {
  return {as_double(m.word_emb), as_double(m.decoder.wx), as_double(m.decoder.wh), as_double(m.decoder.b),
          as_double(m.att_query), as_double(m.att_v), as_double(m.out_w), as_double(m.out_b),
          as_double(m.gate_w), as_double(m.gate_b)};
}

}  // namespace

StepOutput qgen_step(QGenModel& model, int prev_token, const DecodeStepState& state, const EncodedPassage& enc,
                     std::optional<double> forced_gate) {
  return step_impl(inference_weights(model), model.config().vocab_size, prev_token, state, enc, forced_gate);
}

Hypothesis beam_search(QGenModel& model, const Vocabulary& vocab, const Instance& inst, int beam_size, int max_len) {
  if (beam_size < 1 || max_len < 1) throw std::invalid_argument("beam_search: beam_size and max_len must be >= 1");
  const int V = model.config().vocab_size;
  if (vocab.size() != V) throw std::invalid_argument("beam_search: vocabulary size does not match model");
  const InferenceWeights w = inference_weights(model);
  const EncodedPassage enc = encode_passage(model, inst);

  struct Live {
    Hypothesis hyp;
    std::vector<Eigen::Index> focus;  // argmax attention per emitted token
    DecodeStepState state;
    int last = Vocabulary::kBos;
  };
  struct Cand {
    double log_prob;
    std::size_t parent;
    int token;
    Eigen::Index focus;
  };

  std::vector<Live> live(1);
  live[0].state = initial_state(enc);
  std::vector<Live> done;

  for (int step = 0; step < max_len && !live.empty(); ++step) {
    std::vector<Cand> cands;
    std::vector<StepOutput> outs;
    outs.reserve(live.size());
    for (std::size_t k = 0; k < live.size(); ++k) {
      outs.push_back(step_impl(w, V, live[k].last, live[k].state, enc, std::nullopt));
      const RowVector& p = outs.back().probs;
      Eigen::Index focus = 0;
      outs.back().state.attention.maxCoeff(&focus);
      std::vector<int> ids(static_cast<std::size_t>(p.size()));
      std::iota(ids.begin(), ids.end(), 0);
      std::erase_if(ids, [](int id) { return id == Vocabulary::kPad || id == Vocabulary::kBos; });
      const auto take = std::min<std::size_t>(static_cast<std::size_t>(beam_size), ids.size());
      std::partial_sort(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(take), ids.end(),
                        [&](int a, int b) { return p(a) > p(b) || (p(a) == p(b) && a < b); });
      for (std::size_t r = 0; r < take; ++r)
        cands.push_back({live[k].hyp.log_prob + std::log(std::max(p(ids[r]), 1e-300)), k, ids[r], focus});
    }
    std::stable_sort(cands.begin(), cands.end(), [](const Cand& a, const Cand& b) { return a.log_prob > b.log_prob; });
    std::vector<Live> next;
    for (std::size_t r = 0; r < cands.size() && r < static_cast<std::size_t>(beam_size); ++r) {
      const Cand& c = cands[r];
      Live h = live[c.parent];
      h.hyp.log_prob = c.log_prob;
      h.state = outs[c.parent].state;
      if (c.token == Vocabulary::kEos) {
        h.hyp.finished = true;
        done.push_back(std::move(h));
      } else {
        h.hyp.ids.push_back(c.token);
        h.focus.push_back(c.focus);
        h.last = c.token;
        next.push_back(std::move(h));
      }
    }
    live = std::move(next);
    if (done.size() >= static_cast<std::size_t>(beam_size)) break;
  }
  for (Live& l : live) done.push_back(std::move(l));

  const Live* best = nullptr;
  for (Live& l : done) {
    const double len = static_cast<double>(l.hyp.ids.size() + (l.hyp.finished ? 1 : 0));
    l.hyp.score = len > 0 ? l.hyp.log_prob / len : l.hyp.log_prob;
    if (best == nullptr || l.hyp.score > best->hyp.score) best = &l;
  }
  Hypothesis out = best->hyp;
  for (std::size_t t = 0; t < out.ids.size(); ++t) {
    const int id = out.ids[t];
    if (id >= V)
      out.tokens.push_back(enc.oov[static_cast<std::size_t>(id - V)]);
    else if (id == Vocabulary::kUnk)
      out.tokens.push_back(
          [&] {
            const int src = inst.src_ext[static_cast<std::size_t>(best->focus[t])];
            return src >= V ? enc.oov[static_cast<std::size_t>(src - V)] : vocab.token(src);
          }());
    else
      out.tokens.push_back(vocab.token(id));
  }
  return out;
}

std::vector<std::string> qgen_generate(QGenModel& model, const Vocabulary& vocab,
                                       const corpus::AnnotatedPassage& passage, corpus::AnswerSpan answer) {
  const Instance inst = make_instance(vocab, passage, answer);
  const QGenConfig& cfg = model.config();
  return beam_search(model, vocab, inst, cfg.beam_size, cfg.max_decode_len).tokens;
}

// ---------------------------------------------------------------------------
// Training

TrainLog qgen_train(QGenModel& model, const Vocabulary& vocab, const std::vector<corpus::QAExample>& examples,
                    const TrainOptions& options) {
  if (examples.empty()) throw std::invalid_argument("qgen_train: no training examples");
  if (vocab.size() != model.config().vocab_size)
    throw std::invalid_argument("qgen_train: vocabulary size does not match model");
  if (options.batch_size < 1 || options.epochs < 0) throw std::invalid_argument("qgen_train: bad batch/epochs");
  std::vector<Instance> data;
  data.reserve(examples.size());
  for (const corpus::QAExample& ex : examples)
    data.push_back(make_instance(vocab, *ex.passage, ex.answer, &ex.question));

  nn::Adamax opt(model.params(), {0.9, 0.999, 1e-8, options.clip_norm});
  Rng order_rng(options.seed);
  Rng drop_rng = order_rng.fork(1);
  TrainLog log;
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  long step = 0;
  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    order_rng.shuffle(order);
    double epoch_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(options.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(options.batch_size));
      const double inv = 1.0 / static_cast<double>(end - start);
      opt.zero_grad();
      double batch_sum = 0.0;
      for (std::size_t k = start; k < end; ++k) {
        Graph g;
        Var loss = teacher_forced_nll(g, model, data[order[k]], true, &drop_rng);
        if (!std::isfinite(loss.scalar()))
          throw nn::DivergenceError("qgen_train: non-finite loss at epoch " + std::to_string(epoch) + ", step " +
                                    std::to_string(step));
        batch_sum += loss.scalar();
        g.backward(loss, inv);
      }
      opt.step(options.lr);
      if (!nn::all_finite(model.params()))
        throw nn::DivergenceError("qgen_train: non-finite parameters after step " + std::to_string(step));
      ++step;
      log.step_nll.push_back(batch_sum * inv);
      if (options.on_step) options.on_step(step, batch_sum * inv);
      epoch_sum += batch_sum;
    }
    log.epoch_nll.push_back(epoch_sum / static_cast<double>(data.size()));
    spdlog::debug("qgen epoch {} nll {:.4f}", epoch, log.epoch_nll.back());
  }
  opt.zero_grad();
  return log;
}

std::vector<corpus::QAExample> build_tgen(const std::vector<corpus::PassagePtr>& target_passages, QGenModel& model,
                                          const Vocabulary& vocab, const TgenOptions& options, TgenStats* stats) {
  TgenStats st;
  std::vector<corpus::QAExample> out;
  for (std::size_t pi = 0; pi < target_passages.size(); ++pi) {
    const corpus::PassagePtr& passage = target_passages[pi];
    if (passage->domain != corpus::Domain::target)
      throw std::invalid_argument("build_tgen: passage " + passage->id + " is not a target-domain passage");
    ++st.passages;
    const auto candidates = extract::sample_candidates(extract::extract_candidates(*passage), options.max_per_passage,
                                                       options.seed * 0x9e3779b97f4a7c15ULL + pi);
    int k = 0;
    for (const extract::AnswerCandidate& cand : candidates) {
      ++st.candidates;
      const std::vector<std::string> tokens = qgen_generate(model, vocab, *passage, cand.span);
      std::string text;
      for (const std::string& t : tokens) {
        if (!text.empty()) text += ' ';
        text += t;
      }
      if (tokens.empty()) {
        ++st.dropped_empty;
        continue;
      }
      corpus::QAExample ex = corpus::make_example(passage->id + "#gen" + std::to_string(k++), passage, text, cand.span,
                                                  corpus::Provenance::synthetic);
      if (ex.question.empty()) {
        ++st.dropped_empty;
        continue;
      }
      out.push_back(std::move(ex));
      ++st.generated;
    }
  }
  if (stats) *stats = st;
  return out;
}

}  // namespace adamrc::qgen
