#include <algorithm>
#include <numeric>

#include "deepicp/saliency.hpp"

namespace deepicp::net {

WeightingLayer::WeightingLayer(const std::string& prefix, ParameterStore& store,
                               Rng& init_rng)
    : fc1_(Dense::create(store, init_rng, prefix + ".fc1", 32, 16)),
      fc2_(Dense::create(store, init_rng, prefix + ".fc2", 16, 8)),
      fc3_(Dense::create(store, init_rng, prefix + ".fc3", 8, 1)),
      bn1_(BatchNorm::create(store, prefix + ".bn1", 16)),
      bn2_(BatchNorm::create(store, prefix + ".bn2", 8)) {}

Tensor WeightingLayer::forward(Tape* tape, ParameterStore& store,
                               const Tensor& descriptors, ad::BnMode mode,
                               bool update_running) const {
  if (descriptors.rank() != 2 || descriptors.dim(1) != 32) {
    throw std::invalid_argument("weighting_forward: expected [N1, 32] descriptors");
  }
  Tensor h = fc1_.forward(tape, store, descriptors);
  h = ad::relu(bn1_.forward(tape, store, h, mode, update_running));
  h = fc2_.forward(tape, store, h);
  h = ad::relu(bn2_.forward(tape, store, h, mode, update_running));
  h = fc3_.forward(tape, store, h);
  return ad::softplus(h);
}

KeypointSet select_topk(const Tensor& scores, const std::vector<Vec3>& coords, int n) {
  const int n1 = scores.rank() == 2 ? scores.dim(0) : scores.size();
  if (scores.rank() == 2 && scores.dim(1) != 1) {
    throw std::invalid_argument("select_topk: scores must be [N1] or [N1, 1]");
  }
  if (static_cast<int>(coords.size()) != n1) {
    throw std::invalid_argument("select_topk: coordinate count != score count");
  }
  if (n > n1) {
    throw std::invalid_argument("select_topk: n = " + std::to_string(n) +
                                " exceeds score count " + std::to_string(n1));
  }
  if (n < 1) throw std::invalid_argument("select_topk: n must be >= 1");

  std::vector<int> order(static_cast<std::size_t>(n1));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return scores[a] > scores[b];  // stable sort keeps lower index on ties
  });
  order.resize(static_cast<std::size_t>(n));

  KeypointSet out;
  out.indices = order;
  out.coords.reserve(order.size());
  for (int i : order) out.coords.push_back(coords[static_cast<std::size_t>(i)]);

  Tensor scores2d =
      scores.rank() == 2 ? scores : ad::reshape(scores, {n1, 1});
  out.weights = ad::reshape(ad::gather_rows(scores2d, order), {n});
  return out;
}

}  // namespace deepicp::net
