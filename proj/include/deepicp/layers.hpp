#pragma once

#include <string>
#include <vector>

#include "deepicp/autodiff.hpp"

namespace deepicp::net {

using ad::ParameterStore;
using ad::Tape;
using ad::Tensor;

// One fully connected layer; parameters live in the store under
// "<prefix>.w" / "<prefix>.b".
struct Dense {
  std::string prefix;
  int in = 0;
  int out = 0;

  static Dense create(ParameterStore& store, Rng& rng, const std::string& prefix,
                      int in, int out);
  Tensor forward(Tape* tape, ParameterStore& store, const Tensor& x) const;
};

// Shared per-row FC stack. ReLU between layers; the final activation is
// selectable (the mini-PointNet stacks end linear, the set-abstraction
// stacks end in ReLU).
struct Mlp {
  enum class FinalAct { kLinear, kRelu };

  std::vector<Dense> layers;
  FinalAct final_act = FinalAct::kRelu;

  static Mlp create(ParameterStore& store, Rng& rng, const std::string& prefix, int in,
                    const std::vector<int>& widths, FinalAct final_act);
  Tensor forward(Tape* tape, ParameterStore& store, const Tensor& rows) const;
  int out_width() const { return layers.back().out; }
};

// Batch-norm parameters plus running statistics buffers
// ("<prefix>.gamma/.beta/.rmean/.rvar").
struct BatchNorm {
  std::string prefix;
  int channels = 0;

  static BatchNorm create(ParameterStore& store, const std::string& prefix, int channels);
  Tensor forward(Tape* tape, ParameterStore& store, const Tensor& x, ad::BnMode mode,
                 bool update_running) const;
};

}  // namespace deepicp::net
