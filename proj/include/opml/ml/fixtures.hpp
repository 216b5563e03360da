#pragma once

// Seeded generators for test and demo models.

#include <opml/ml/graph.hpp>
#include <opml/rng.hpp>

namespace opml::ml {

/// Raw values uniform in [-scale, scale] (scale in raw units).
inline FixedTensor random_tensor(Rng& rng, std::vector<std::uint32_t> shape, std::int32_t scale = 1 << 16) {
  std::vector<std::int32_t> data(FixedTensor::element_count(shape));
  for (auto& v : data) v = static_cast<std::int32_t>(rng.between(-scale, scale));
  return FixedTensor(std::move(shape), std::move(data));
}

/// MLP with layer widths dims[0] -> dims[1] -> ... ; ReLU between layers,
/// none after the last, optional ArgMax head. Input shape is [batch, dims[0]].
/// Weights are uniform in [-1, 1].
inline CompGraph random_mlp(Rng& rng, const std::vector<std::uint32_t>& dims, bool argmax_head = false,
                            std::uint32_t batch = 1) {
  if (dims.size() < 2) throw GraphError("an MLP needs at least two layer widths");
  GraphBuilder gb;
  std::uint32_t x = gb.input({batch, dims[0]});
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    FixedTensor w = random_tensor(rng, {dims[l], dims[l + 1]});
    FixedTensor b = random_tensor(rng, {dims[l + 1]});
    x = gb.dense(x, std::move(w), std::move(b));
    if (l + 2 < dims.size()) x = gb.relu(x);
  }
  if (argmax_head) x = gb.argmax(x);
  return gb.build(x);
}

inline FixedTensor random_input(Rng& rng, const CompGraph& g) { return random_tensor(rng, g.shape(g.input_id())); }

struct FixtureModel {
  std::string name;
  std::vector<std::uint32_t> dims;
  bool argmax_head;
};

/// The three reference models used by the complexity report.
inline std::vector<FixtureModel> fixture_models() {
  return {
      {"mlp_4_8_3", {4, 8, 3}, false},
      {"mlp_8_16_16_4", {8, 16, 16, 4}, false},
      {"mlp_2_4_2_argmax", {2, 4, 2}, true},
  };
}

inline CompGraph fixture_model(const FixtureModel& f, std::uint64_t seed = 1) {
  Rng rng(seed, "model/" + f.name);
  return random_mlp(rng, f.dims, f.argmax_head);
}

inline FixedTensor fixture_input(const FixtureModel& f, const CompGraph& g, std::uint64_t seed = 1) {
  Rng rng(seed, "input/" + f.name);
  return random_input(rng, g);
}

}  // namespace opml::ml
