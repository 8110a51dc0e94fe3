#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "adamrc/autograd.hpp"
#include "adamrc/rng.hpp"

namespace adamrc::nn {

using ag::Graph;
using ag::Matrix;
using ag::Parameter;
using ag::Var;

using ParamRefs = std::vector<Parameter*>;

// Non-finite loss or gradient during training.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct LstmWeights {
  Parameter wx, wh, b;

  LstmWeights() = default;
  LstmWeights(const std::string& prefix, int input, int hidden);
  void init(Rng& rng);
  void collect(ParamRefs& out) { out.insert(out.end(), {&wx, &wh, &b}); }
  int hidden() const { return static_cast<int>(wh.rows()); }

  Var run(Graph& g, Var x, bool reverse, Var h0 = {}, Var c0 = {});
};

// Forward and backward LSTMs whose outputs are concatenated (T x 2h).
struct BiLstm {
  LstmWeights fwd, bwd;

  BiLstm() = default;
  BiLstm(const std::string& prefix, int input, int hidden);
  void init(Rng& rng) {
    fwd.init(rng);
    bwd.init(rng);
  }
  void collect(ParamRefs& out) {
    fwd.collect(out);
    bwd.collect(out);
  }
  Var run(Graph& g, Var x);
};

// Adamax (infinity-norm Adam variant) with global gradient-norm clipping.
class Adamax {
 public:
  struct Options {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double clip_norm = 5.0;  // <= 0 disables clipping
  };

  explicit Adamax(ParamRefs params) : Adamax(std::move(params), Options{}) {}
  Adamax(ParamRefs params, Options opt);

  // Applies one update using the gradients currently stored in the parameters.
  // Returns the pre-clipping global gradient norm.
  double step(double lr);
  void zero_grad();
  long steps() const { return t_; }

 private:
  ParamRefs params_;
  Options opt_;
  std::vector<Matrix> m_, u_;
  long t_ = 0;
};

double global_grad_norm(const ParamRefs& params);
bool all_finite(const ParamRefs& params);

}  // namespace adamrc::nn
