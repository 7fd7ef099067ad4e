#pragma once

#include "isogrow/common.hpp"

#include <span>
#include <utility>
#include <vector>

namespace isogrow {

// Compressed sparse row adjacency with per-edge weights. Undirected graphs
// store every edge in both directions.
class Graph {
 public:
  Graph() = default;

  // Builds from per-vertex neighbor lists; weight(i, j) gives the edge weight.
  template <class WeightFn>
  static Graph from_lists(const std::vector<std::vector<VertexId>>& lists, WeightFn&& weight) {
    Graph g;
    g.offsets_.resize(lists.size() + 1, 0);
    for (std::size_t i = 0; i < lists.size(); ++i) g.offsets_[i + 1] = g.offsets_[i] + lists[i].size();
    g.targets_.reserve(g.offsets_.back());
    g.weights_.reserve(g.offsets_.back());
    for (std::size_t i = 0; i < lists.size(); ++i) {
      for (VertexId j : lists[i]) {
        g.targets_.push_back(j);
        g.weights_.push_back(weight(static_cast<VertexId>(i), j));
      }
    }
    return g;
  }

  std::size_t vertex_count() const { return offsets_.empty() ? 0 : offsets_.size() - 1; }
  std::size_t edge_slot_count() const { return targets_.size(); }

  std::span<const VertexId> neighbors(VertexId v) const {
    return {targets_.data() + offsets_[v], offsets_[v + 1] - offsets_[v]};
  }
  std::span<const double> weights(VertexId v) const {
    return {weights_.data() + offsets_[v], offsets_[v + 1] - offsets_[v]};
  }
  std::size_t degree(VertexId v) const { return offsets_[v + 1] - offsets_[v]; }

  const std::vector<std::size_t>& offsets() const { return offsets_; }
  const std::vector<VertexId>& targets() const { return targets_; }
  const std::vector<double>& all_weights() const { return weights_; }

 private:
  std::vector<std::size_t> offsets_;
  std::vector<VertexId> targets_;
  std::vector<double> weights_;
};

}  // namespace isogrow
