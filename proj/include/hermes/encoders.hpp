#pragma once

// Modality encoders mapping drugs, cell lines and diseases into one shared
// embedding width.
//
// Drugs go through stacked graph-transformer layers over the molecular graph
// followed by column max pooling. Cell lines and diseases go through an MLP.
// Row-vector convention throughout: a layer computes x * W.

#include <cstddef>
#include <string>
#include <unordered_map>
#include <vector>

#include "hermes/molgraph.hpp"
#include "hermes/tensor.hpp"

namespace hermes::enc {

// How neighbour messages are weighted in a graph-transformer layer.
enum class AttentionMode {
  scaled_dot,  // softmax over neighbours of (q_i . k_j) / sqrt(d)
  uniform,     // 1 / |N(i)|, the plain mean-aggregation ablation
};

// One multi-head graph-transformer layer. Column block h (width head_dim) of
// w_value/w_query/w_key is head h; heads are concatenated in the output.
struct GtnLayerParams {
  Tensor w_self;   // in x heads*head_dim
  Tensor w_value;  // in x heads*head_dim
  Tensor w_query;  // in x heads*head_dim
  Tensor w_key;    // in x heads*head_dim
  std::size_t heads = 1;
  std::size_t head_dim = 1;
  Activation activation = Activation::relu;

  static GtnLayerParams init(std::size_t in_dim, std::size_t heads, std::size_t head_dim, Rng& rng);
  std::size_t in_dim() const { return w_self.rows(); }
  std::size_t out_dim() const { return heads * head_dim; }
  std::vector<Tensor> parameters() const { return {w_self, w_value, w_query, w_key}; }
};

struct MlpParams {
  std::vector<Tensor> weights;  // layer l: dims[l] x dims[l+1]
  std::vector<Tensor> biases;   // layer l: 1 x dims[l+1]
  std::vector<Activation> activations;

  static MlpParams init(const std::vector<std::size_t>& dims, Activation hidden, Activation last,
                        Rng& rng);
  std::size_t in_dim() const { return weights.front().rows(); }
  std::size_t out_dim() const { return weights.back().cols(); }
  std::vector<Tensor> parameters() const;
};

enum class EntityKind { drug, cell, disease };

struct EmbeddingMatrix {
  EntityKind kind = EntityKind::drug;
  Tensor matrix;
  std::unordered_map<std::string, std::size_t> id_index;

  std::size_t row(const std::string& id) const;
};

// Several molecules stacked into one atom matrix with block-local
// neighbourhoods; atoms of molecule m occupy rows [offsets[m], offsets[m+1]).
struct MoleculeBatch {
  Tensor features;
  std::vector<std::vector<std::size_t>> neighbours;
  std::vector<std::size_t> offsets;

  static MoleculeBatch from_graphs(const std::vector<mol::MolecularGraph>& graphs);
  std::size_t molecule_count() const { return offsets.size() - 1; }
};

// Multi-head neighbourhood attention: returns n x (heads*d) where row i of
// head h is sum_j alpha_ij v_j over j in N(i). An atom without neighbours
// receives a zero row. q and k are ignored in uniform mode.
Tensor neighbour_attention(Tape& tape, const Tensor& q, const Tensor& k, const Tensor& v,
                           const std::vector<std::vector<std::size_t>>& neighbours,
                           std::size_t heads, AttentionMode mode);

// Dense n x n attention coefficients of one head (zeros off the
// neighbourhood). Inspection only; not differentiable.
Tensor attention_coefficients(const Tensor& atoms, const GtnLayerParams& params, std::size_t head,
                              const std::vector<std::vector<std::size_t>>& neighbours,
                              AttentionMode mode);

std::vector<std::vector<std::size_t>> neighbours_from_adjacency(const Tensor& adj);

// a'_i = act(a_i W_self + sum_j alpha_ij a_j W_value). adj must be square,
// symmetric with zero diagonal.
Tensor gtn_layer(Tape& tape, const Tensor& atoms, const Tensor& adj, const GtnLayerParams& params,
                 AttentionMode mode = AttentionMode::scaled_dot);
Tensor gtn_layer(Tape& tape, const Tensor& atoms,
                 const std::vector<std::vector<std::size_t>>& neighbours,
                 const GtnLayerParams& params, AttentionMode mode = AttentionMode::scaled_dot);

// Per-molecule max pooling over a stacked atom matrix: molecules x cols.
Tensor segment_max_pool(Tape& tape, const Tensor& atoms, const std::vector<std::size_t>& offsets);

// Stacked layers then max pooling; one row per molecule.
Tensor encode_drugs(Tape& tape, const MoleculeBatch& batch,
                    const std::vector<GtnLayerParams>& layers,
                    AttentionMode mode = AttentionMode::scaled_dot);
Tensor encode_drug(Tape& tape, const mol::MolecularGraph& graph,
                   const std::vector<GtnLayerParams>& layers,
                   AttentionMode mode = AttentionMode::scaled_dot);

Tensor mlp_forward(Tape& tape, const Tensor& x, const MlpParams& params);

EmbeddingMatrix encode_cells(Tape& tape, const Tensor& expression,
                             const std::vector<std::string>& cell_ids, const MlpParams& params);
EmbeddingMatrix encode_diseases(Tape& tape, const Tensor& embeddings,
                                const std::vector<std::string>& disease_ids,
                                const MlpParams& params);

}  // namespace hermes::enc
