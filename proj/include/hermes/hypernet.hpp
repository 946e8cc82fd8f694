#pragma once

// Dual-relationship hypergraph (synergy triplets and drug-disease pairs) and
// degree-normalised hypergraph convolutions with gated residual connections.

#include <cstddef>
#include <iosfwd>
#include <string>
#include <vector>

#include "hermes/data.hpp"
#include "hermes/tensor.hpp"

namespace hermes::hyper {

enum class EdgeKind { synergy_triplet, drug_disease };

// Node order is drugs, then cell lines, then diseases.
class Hypergraph {
 public:
  // One unit-weight column per positive training triplet and one column per
  // drug-disease pair weighted by interaction_weight. Samples tagged
  // validation/test are rejected; negatives add no hyperedge.
  static Hypergraph build(const std::vector<SynergySample>& samples,
                          const std::vector<DrugDiseasePair>& pairs,
                          const EntityRegistry& entities, double interaction_weight);

  std::size_t drug_count() const { return drugs_; }
  std::size_t cell_count() const { return cells_; }
  std::size_t disease_count() const { return diseases_; }
  std::size_t node_count() const { return drugs_ + cells_ + diseases_; }
  std::size_t edge_count() const { return kinds_.size(); }

  std::size_t drug_node(std::size_t drug) const { return drug; }
  std::size_t cell_node(std::size_t cell) const { return drugs_ + cell; }
  std::size_t disease_node(std::size_t disease) const { return drugs_ + cells_ + disease; }

  // nodes x hyperedges
  const Tensor& incidence() const { return incidence_; }
  const std::vector<EdgeKind>& edge_kinds() const { return kinds_; }
  const std::vector<double>& node_degree() const { return node_degree_; }
  const std::vector<double>& edge_degree() const { return edge_degree_; }
  // Nodes of degree zero; they receive no propagated signal.
  const std::vector<bool>& isolated() const { return isolated_; }

  // Sparse dump, one line per nonzero: node_id<TAB>edge_index<TAB>weight.
  void write_triplets(std::ostream& out, const EntityRegistry& entities) const;

 private:
  std::size_t drugs_ = 0;
  std::size_t cells_ = 0;
  std::size_t diseases_ = 0;
  Tensor incidence_;
  std::vector<EdgeKind> kinds_;
  std::vector<double> node_degree_;
  std::vector<double> edge_degree_;
  std::vector<bool> isolated_;
};

// D^-1 H E^-1 H^T with zero-degree rows/columns mapped to zero.
Tensor propagation_matrix(const Hypergraph& hg);

enum class ResidualMode { gated_residual, plain_residual, no_residual };

inline constexpr double kEquilibriumGateBias = -6.0;

struct HgnnLayerParams {
  Tensor w_conv;  // dim x dim
  Tensor w_gate;  // dim x dim
  Tensor b_gate;  // 1 x dim
  Activation conv_activation = Activation::relu;
  ResidualMode mode = ResidualMode::gated_residual;

  static HgnnLayerParams init(std::size_t dim, ResidualMode mode, Rng& rng,
                              double gate_bias = kEquilibriumGateBias);
  // Trainable tensors used by the current mode (no gate outside gated mode).
  std::vector<Tensor> parameters() const;
};

// C = act(P X W_conv);
//   gated:  X + sigmoid(C W_gate + b_gate) (.) X
//   plain:  X + C
//   none:   C
Tensor hgnn_layer(Tape& tape, const Tensor& x, const Tensor& propagation,
                  const HgnnLayerParams& params);
Tensor hgnn_layer(Tape& tape, const Tensor& x, const Hypergraph& hg, const HgnnLayerParams& params);

Tensor refine(Tape& tape, const Tensor& x0, const Tensor& propagation,
              const std::vector<HgnnLayerParams>& layers);

ResidualMode residual_mode_from_string(const std::string& name);
std::string to_string(ResidualMode mode);

}  // namespace hermes::hyper
