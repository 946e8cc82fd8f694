#include "hermes/encoders.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "hermes/errors.hpp"

namespace hermes::enc {

GtnLayerParams GtnLayerParams::init(std::size_t in_dim, std::size_t heads, std::size_t head_dim,
                                    Rng& rng) {
  if (heads == 0 || head_dim == 0) throw ConfigError("gtn layer needs heads >= 1 and head_dim >= 1");
  GtnLayerParams p;
  p.heads = heads;
  p.head_dim = head_dim;
  const std::size_t out = heads * head_dim;
  p.w_self = glorot_uniform(in_dim, out, rng);
  p.w_value = glorot_uniform(in_dim, out, rng);
  p.w_query = glorot_uniform(in_dim, out, rng);
  p.w_key = glorot_uniform(in_dim, out, rng);
  return p;
}

MlpParams MlpParams::init(const std::vector<std::size_t>& dims, Activation hidden, Activation last,
                          Rng& rng) {
  if (dims.size() < 2) throw ConfigError("mlp needs at least an input and an output width");
  MlpParams p;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    p.weights.push_back(glorot_uniform(dims[l], dims[l + 1], rng));
    p.biases.push_back(Tensor::zeros(1, dims[l + 1], true));
    p.activations.push_back(l + 2 == dims.size() ? last : hidden);
  }
  return p;
}

std::vector<Tensor> MlpParams::parameters() const {
  std::vector<Tensor> out;
  for (std::size_t l = 0; l < weights.size(); ++l) {
    out.push_back(weights[l]);
    out.push_back(biases[l]);
  }
  return out;
}

std::size_t EmbeddingMatrix::row(const std::string& id) const {
  const auto it = id_index.find(id);
  if (it == id_index.end()) throw ReferenceError("unknown entity id '" + id + "'");
  return it->second;
}

MoleculeBatch MoleculeBatch::from_graphs(const std::vector<mol::MolecularGraph>& graphs) {
  MoleculeBatch batch;
  batch.offsets.push_back(0);
  std::vector<Tensor> blocks;
  for (const auto& g : graphs) {
    if (g.atoms.empty()) throw DimensionError("molecule without atoms");
    const std::size_t base = batch.offsets.back();
    for (const auto& list : mol::neighbours(g)) {
      auto& shifted = batch.neighbours.emplace_back();
      for (std::size_t j : list) shifted.push_back(base + j);
    }
    blocks.push_back(mol::featurize(g));
    batch.offsets.push_back(base + g.atoms.size());
  }
  Tape constant(false);
  batch.features = blocks.empty() ? Tensor::zeros(0, mol::kFeatureWidth)
                                  : concat_rows(constant, blocks);
  return batch;
}

std::vector<std::vector<std::size_t>> neighbours_from_adjacency(const Tensor& adj) {
  if (adj.rows() != adj.cols()) throw DimensionError("adjacency must be square, got " + adj.shape_string());
  const std::size_t n = adj.rows();
  std::vector<std::vector<std::size_t>> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (adj.at(i, i) != 0.0) throw DimensionError("adjacency must have a zero diagonal");
    for (std::size_t j = 0; j < n; ++j) {
      if (adj.at(i, j) != adj.at(j, i)) throw DimensionError("adjacency must be symmetric");
      if (adj.at(i, j) != 0.0) out[i].push_back(j);
    }
  }
  return out;
}

namespace {

// alpha for atom i, head h over its neighbour list, written into `out`.
void neighbour_weights(const Tensor& q, const Tensor& k, const std::vector<std::size_t>& nbrs,
                       std::size_t i, std::size_t h, std::size_t d, AttentionMode mode,
                       double* out) {
  const std::size_t m = nbrs.size();
  if (m == 0) return;
  if (mode == AttentionMode::uniform) {
    std::fill(out, out + m, 1.0 / static_cast<double>(m));
    return;
  }
  const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
  const double* qi = q.values().data() + i * q.cols() + h * d;
  double shift = -std::numeric_limits<double>::infinity();
  for (std::size_t t = 0; t < m; ++t) {
    const double* kj = k.values().data() + nbrs[t] * k.cols() + h * d;
    double s = 0.0;
    for (std::size_t c = 0; c < d; ++c) s += qi[c] * kj[c];
    out[t] = s * inv_sqrt_d;
    shift = std::max(shift, out[t]);
  }
  double total = 0.0;
  for (std::size_t t = 0; t < m; ++t) total += (out[t] = std::exp(out[t] - shift));
  for (std::size_t t = 0; t < m; ++t) out[t] /= total;
}

}  // namespace

Tensor neighbour_attention(Tape& tape, const Tensor& q, const Tensor& k, const Tensor& v,
                           const std::vector<std::vector<std::size_t>>& neighbours,
                           std::size_t heads, AttentionMode mode) {
  const std::size_t n = v.rows();
  const std::size_t width = v.cols();
  if (heads == 0 || width % heads != 0) throw DimensionError("attention: width not divisible by heads");
  if (neighbours.size() != n) throw DimensionError("attention: neighbour list size mismatch");
  const bool dot = mode == AttentionMode::scaled_dot;
  if (dot && (q.rows() != n || k.rows() != n || q.cols() != width || k.cols() != width)) {
    throw DimensionError("attention: q/k/v shapes differ " + q.shape_string() + " " +
                         k.shape_string() + " " + v.shape_string());
  }
  const std::size_t d = width / heads;

  // alpha laid out per atom: offsets[i] + t * heads + h.
  std::vector<std::size_t> offsets(n + 1, 0);
  for (std::size_t i = 0; i < n; ++i) offsets[i + 1] = offsets[i] + neighbours[i].size() * heads;
  std::vector<double> alpha(offsets[n]);
  std::vector<double> scratch;
  std::vector<double> out(n * width, 0.0);
  const double* vv = v.values().data();
  for (std::size_t i = 0; i < n; ++i) {
    const auto& nbrs = neighbours[i];
    scratch.resize(nbrs.size());
    for (std::size_t h = 0; h < heads; ++h) {
      neighbour_weights(q, k, nbrs, i, h, d, mode, scratch.data());
      double* oi = out.data() + i * width + h * d;
      for (std::size_t t = 0; t < nbrs.size(); ++t) {
        alpha[offsets[i] + t * heads + h] = scratch[t];
        const double* vj = vv + nbrs[t] * width + h * d;
        for (std::size_t c = 0; c < d; ++c) oi[c] += scratch[t] * vj[c];
      }
    }
  }

  const bool grad = dot ? tape.needs_grad({&q, &k, &v}) : tape.needs_grad({&v});
  Tensor result = Tensor::from(n, width, std::move(out), grad);
  require_finite(result, "neighbour_attention");
  tape.record("neighbour_attention", result,
              [q, k, v, result, neighbours, heads, d, dot, width, n,
               alpha = std::move(alpha), offsets = std::move(offsets)]() mutable {
                const auto g = result.grad();
                const double inv_sqrt_d = 1.0 / std::sqrt(static_cast<double>(d));
                const double* vv = v.values().data();
                std::vector<double> dalpha;
                for (std::size_t i = 0; i < n; ++i) {
                  const auto& nbrs = neighbours[i];
                  dalpha.resize(nbrs.size());
                  for (std::size_t h = 0; h < heads; ++h) {
                    const double* gi = g.data() + i * width + h * d;
                    double weighted = 0.0;
                    for (std::size_t t = 0; t < nbrs.size(); ++t) {
                      const double a = alpha[offsets[i] + t * heads + h];
                      const std::size_t j = nbrs[t];
                      if (v.requires_grad()) {
                        double* gv = v.grad().data() + j * width + h * d;
                        for (std::size_t c = 0; c < d; ++c) gv[c] += a * gi[c];
                      }
                      const double* vj = vv + j * width + h * d;
                      double dot_gv = 0.0;
                      for (std::size_t c = 0; c < d; ++c) dot_gv += gi[c] * vj[c];
                      dalpha[t] = dot_gv;
                      weighted += a * dot_gv;
                    }
                    if (!dot) continue;
                    const double* qi = q.values().data() + i * width + h * d;
                    for (std::size_t t = 0; t < nbrs.size(); ++t) {
                      const double a = alpha[offsets[i] + t * heads + h];
                      const double ds = a * (dalpha[t] - weighted) * inv_sqrt_d;
                      const std::size_t j = nbrs[t];
                      const double* kj = k.values().data() + j * width + h * d;
                      if (q.requires_grad()) {
                        double* gq = q.grad().data() + i * width + h * d;
                        for (std::size_t c = 0; c < d; ++c) gq[c] += ds * kj[c];
                      }
                      if (k.requires_grad()) {
                        double* gk = k.grad().data() + j * width + h * d;
                        for (std::size_t c = 0; c < d; ++c) gk[c] += ds * qi[c];
                      }
                    }
                  }
                }
              });
  return result;
}

Tensor attention_coefficients(const Tensor& atoms, const GtnLayerParams& params, std::size_t head,
                              const std::vector<std::vector<std::size_t>>& neighbours,
                              AttentionMode mode) {
  Tape tape(false);
  const Tensor q = matmul(tape, atoms, params.w_query);
  const Tensor k = matmul(tape, atoms, params.w_key);
  const std::size_t n = atoms.rows();
  Tensor out = Tensor::zeros(n, n);
  std::vector<double> scratch;
  for (std::size_t i = 0; i < n; ++i) {
    scratch.resize(neighbours[i].size());
    neighbour_weights(q, k, neighbours[i], i, head, params.head_dim, mode, scratch.data());
    for (std::size_t t = 0; t < neighbours[i].size(); ++t) out.at(i, neighbours[i][t]) = scratch[t];
  }
  return out;
}

Tensor gtn_layer(Tape& tape, const Tensor& atoms,
                 const std::vector<std::vector<std::size_t>>& neighbours,
                 const GtnLayerParams& params, AttentionMode mode) {
  if (atoms.cols() != params.in_dim()) {
    throw DimensionError("gtn_layer: atom features " + atoms.shape_string() +
                         " do not match weight " + params.w_self.shape_string());
  }
  if (neighbours.size() != atoms.rows()) {
    throw DimensionError("gtn_layer: adjacency size does not match atom count");
  }
  const Tensor self_term = matmul(tape, atoms, params.w_self);
  const Tensor values = matmul(tape, atoms, params.w_value);
  Tensor messages;
  if (mode == AttentionMode::scaled_dot) {
    const Tensor q = matmul(tape, atoms, params.w_query);
    const Tensor k = matmul(tape, atoms, params.w_key);
    messages = neighbour_attention(tape, q, k, values, neighbours, params.heads, mode);
  } else {
    messages = neighbour_attention(tape, Tensor(), Tensor(), values, neighbours, params.heads, mode);
  }
  return activation(tape, add(tape, self_term, messages), params.activation);
}

Tensor gtn_layer(Tape& tape, const Tensor& atoms, const Tensor& adj, const GtnLayerParams& params,
                 AttentionMode mode) {
  if (adj.rows() != atoms.rows()) {
    throw DimensionError("gtn_layer: adjacency " + adj.shape_string() + " vs atoms " +
                         atoms.shape_string());
  }
  return gtn_layer(tape, atoms, neighbours_from_adjacency(adj), params, mode);
}

Tensor segment_max_pool(Tape& tape, const Tensor& atoms, const std::vector<std::size_t>& offsets) {
  if (offsets.size() < 2 || offsets.back() != atoms.rows()) {
    throw DimensionError("segment_max_pool: offsets do not cover " + atoms.shape_string());
  }
  const std::size_t m = offsets.size() - 1;
  const std::size_t k = atoms.cols();
  std::vector<double> out(m * k);
  std::vector<std::size_t> argmax(m * k);
  for (std::size_t s = 0; s < m; ++s) {
    if (offsets[s + 1] <= offsets[s]) throw DimensionError("segment_max_pool: empty segment");
    for (std::size_t c = 0; c < k; ++c) {
      std::size_t best = offsets[s];
      for (std::size_t r = offsets[s] + 1; r < offsets[s + 1]; ++r) {
        if (atoms.at(r, c) > atoms.at(best, c)) best = r;
      }
      argmax[s * k + c] = best;
      out[s * k + c] = atoms.at(best, c);
    }
  }
  Tensor result = Tensor::from(m, k, std::move(out), tape.needs_grad({&atoms}));
  tape.record("segment_max_pool", result, [atoms, result, argmax = std::move(argmax), k]() mutable {
    const auto g = result.grad();
    auto ga = atoms.grad();
    for (std::size_t i = 0; i < argmax.size(); ++i) ga[argmax[i] * k + i % k] += g[i];
  });
  return result;
}

Tensor encode_drugs(Tape& tape, const MoleculeBatch& batch,
                    const std::vector<GtnLayerParams>& layers, AttentionMode mode) {
  Tensor h = batch.features;
  for (const auto& layer : layers) h = gtn_layer(tape, h, batch.neighbours, layer, mode);
  return segment_max_pool(tape, h, batch.offsets);
}

Tensor encode_drug(Tape& tape, const mol::MolecularGraph& graph,
                   const std::vector<GtnLayerParams>& layers, AttentionMode mode) {
  return encode_drugs(tape, MoleculeBatch::from_graphs({graph}), layers, mode);
}

Tensor mlp_forward(Tape& tape, const Tensor& x, const MlpParams& params) {
  Tensor h = x;
  for (std::size_t l = 0; l < params.weights.size(); ++l) {
    h = matmul(tape, h, params.weights[l]);
    h = add_row(tape, h, params.biases[l]);
    h = activation(tape, h, params.activations[l]);
  }
  return h;
}

namespace {

EmbeddingMatrix encode_rows(Tape& tape, EntityKind kind, const Tensor& input,
                            const std::vector<std::string>& ids, const MlpParams& params) {
  if (input.rows() != ids.size()) {
    throw DimensionError("encoder: " + std::to_string(ids.size()) + " ids for input " +
                         input.shape_string());
  }
  if (input.cols() != params.in_dim()) {
    throw DimensionError("encoder: input " + input.shape_string() + " does not match weight " +
                         params.weights.front().shape_string());
  }
  EmbeddingMatrix out;
  out.kind = kind;
  out.matrix = mlp_forward(tape, input, params);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (!out.id_index.emplace(ids[i], i).second) {
      throw ReferenceError("duplicate entity id '" + ids[i] + "'");
    }
  }
  return out;
}

}  // namespace

EmbeddingMatrix encode_cells(Tape& tape, const Tensor& expression,
                             const std::vector<std::string>& cell_ids, const MlpParams& params) {
  return encode_rows(tape, EntityKind::cell, expression, cell_ids, params);
}

EmbeddingMatrix encode_diseases(Tape& tape, const Tensor& embeddings,
                                const std::vector<std::string>& disease_ids,
                                const MlpParams& params) {
  return encode_rows(tape, EntityKind::disease, embeddings, disease_ids, params);
}

}  // namespace hermes::enc
