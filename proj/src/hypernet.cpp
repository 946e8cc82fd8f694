#include "hermes/hypernet.hpp"

#include <Eigen/Core>

#include <ostream>

#include "hermes/errors.hpp"

namespace hermes::hyper {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

void check_index(std::size_t index, std::size_t count, const char* what) {
  if (index >= count) {
    throw ReferenceError(std::string("hypergraph: unknown ") + what + " index " +
                         std::to_string(index));
  }
}

}  // namespace

Hypergraph Hypergraph::build(const std::vector<SynergySample>& samples,
                             const std::vector<DrugDiseasePair>& pairs,
                             const EntityRegistry& entities, double interaction_weight) {
  if (!(interaction_weight >= 0.0)) {
    throw ConfigError("interaction_weight must be >= 0, got " + std::to_string(interaction_weight));
  }
  Hypergraph hg;
  hg.drugs_ = entities.drugs.size();
  hg.cells_ = entities.cells.size();
  hg.diseases_ = entities.diseases.size();

  struct Column {
    std::vector<std::size_t> nodes;
    double weight;
    EdgeKind kind;
  };
  std::vector<Column> columns;
  for (const auto& s : samples) {
    if (s.fold_tag == FoldTag::validation || s.fold_tag == FoldTag::test) {
      throw ContractError("hypergraph: validation/test sample passed to the builder");
    }
    check_index(s.drug_a, hg.drugs_, "drug");
    check_index(s.drug_b, hg.drugs_, "drug");
    check_index(s.cell, hg.cells_, "cell line");
    if (s.label != 1) continue;
    columns.push_back(
        {{hg.drug_node(s.drug_a), hg.drug_node(s.drug_b), hg.cell_node(s.cell)}, 1.0,
         EdgeKind::synergy_triplet});
  }
  for (const auto& p : pairs) {
    check_index(p.drug, hg.drugs_, "drug");
    check_index(p.disease, hg.diseases_, "disease");
    columns.push_back({{hg.drug_node(p.drug), hg.disease_node(p.disease)}, interaction_weight,
                       EdgeKind::drug_disease});
  }

  const std::size_t n = hg.node_count();
  hg.incidence_ = Tensor::zeros(n, columns.size());
  for (std::size_t e = 0; e < columns.size(); ++e) {
    // A triplet whose two drugs coincide still touches the drug once.
    for (std::size_t node : columns[e].nodes) hg.incidence_.at(node, e) = columns[e].weight;
    hg.kinds_.push_back(columns[e].kind);
  }
  hg.node_degree_.assign(n, 0.0);
  hg.edge_degree_.assign(columns.size(), 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t e = 0; e < columns.size(); ++e) {
      hg.node_degree_[i] += hg.incidence_.at(i, e);
      hg.edge_degree_[e] += hg.incidence_.at(i, e);
    }
  }
  hg.isolated_.resize(n);
  for (std::size_t i = 0; i < n; ++i) hg.isolated_[i] = hg.node_degree_[i] == 0.0;
  return hg;
}

void Hypergraph::write_triplets(std::ostream& out, const EntityRegistry& entities) const {
  auto name = [&](std::size_t node) -> const std::string& {
    if (node < drugs_) return entities.drugs.name(node);
    if (node < drugs_ + cells_) return entities.cells.name(node - drugs_);
    return entities.diseases.name(node - drugs_ - cells_);
  };
  for (std::size_t i = 0; i < node_count(); ++i) {
    for (std::size_t e = 0; e < edge_count(); ++e) {
      const double w = incidence_.at(i, e);
      if (w != 0.0) out << name(i) << '\t' << e << '\t' << w << '\n';
    }
  }
}

Tensor propagation_matrix(const Hypergraph& hg) {
  const auto n = static_cast<Eigen::Index>(hg.node_count());
  const auto m = static_cast<Eigen::Index>(hg.edge_count());
  Eigen::Map<const RowMat> h(hg.incidence().values().data(), n, m);
  Eigen::VectorXd inv_d(n);
  Eigen::VectorXd inv_e(m);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double d = hg.node_degree()[static_cast<std::size_t>(i)];
    inv_d[i] = d > 0.0 ? 1.0 / d : 0.0;
  }
  for (Eigen::Index e = 0; e < m; ++e) {
    const double d = hg.edge_degree()[static_cast<std::size_t>(e)];
    inv_e[e] = d > 0.0 ? 1.0 / d : 0.0;
  }
  Tensor out = Tensor::zeros(static_cast<std::size_t>(n), static_cast<std::size_t>(n));
  Eigen::Map<RowMat> p(out.values().data(), n, n);
  p.noalias() = inv_d.asDiagonal() * (h * inv_e.asDiagonal()) * h.transpose();
  return out;
}

HgnnLayerParams HgnnLayerParams::init(std::size_t dim, ResidualMode mode, Rng& rng,
                                      double gate_bias) {
  HgnnLayerParams p;
  p.mode = mode;
  p.w_conv = glorot_uniform(dim, dim, rng);
  p.w_gate = glorot_uniform(dim, dim, rng);
  p.b_gate = Tensor::full(1, dim, gate_bias, true);
  return p;
}

std::vector<Tensor> HgnnLayerParams::parameters() const {
  if (mode == ResidualMode::gated_residual) return {w_conv, w_gate, b_gate};
  return {w_conv};
}

Tensor hgnn_layer(Tape& tape, const Tensor& x, const Tensor& propagation,
                  const HgnnLayerParams& params) {
  if (params.w_conv.rows() != params.w_conv.cols()) {
    throw DimensionError("hgnn_layer: W_conv must be square, got " + params.w_conv.shape_string());
  }
  if (propagation.rows() != x.rows() || propagation.cols() != x.rows()) {
    throw DimensionError("hgnn_layer: propagation " + propagation.shape_string() +
                         " does not match features " + x.shape_string());
  }
  if (x.cols() != params.w_conv.rows()) {
    throw DimensionError("hgnn_layer: features " + x.shape_string() + " vs W_conv " +
                         params.w_conv.shape_string());
  }
  const Tensor mixed = matmul(tape, propagation, x);
  const Tensor conv = activation(tape, matmul(tape, mixed, params.w_conv), params.conv_activation);
  switch (params.mode) {
    case ResidualMode::no_residual:
      return conv;
    case ResidualMode::plain_residual:
      return add(tape, x, conv);
    case ResidualMode::gated_residual: {
      const Tensor gate =
          sigmoid(tape, add_row(tape, matmul(tape, conv, params.w_gate), params.b_gate));
      return add(tape, x, mul(tape, gate, x));
    }
  }
  return conv;
}

Tensor hgnn_layer(Tape& tape, const Tensor& x, const Hypergraph& hg,
                  const HgnnLayerParams& params) {
  return hgnn_layer(tape, x, propagation_matrix(hg), params);
}

Tensor refine(Tape& tape, const Tensor& x0, const Tensor& propagation,
              const std::vector<HgnnLayerParams>& layers) {
  if (layers.empty()) throw ConfigError("refine: at least one hypergraph layer is required");
  Tensor x = x0;
  for (const auto& layer : layers) x = hgnn_layer(tape, x, propagation, layer);
  return x;
}

ResidualMode residual_mode_from_string(const std::string& name) {
  if (name == "gated_residual") return ResidualMode::gated_residual;
  if (name == "plain_residual") return ResidualMode::plain_residual;
  if (name == "no_residual") return ResidualMode::no_residual;
  throw ConfigError("unknown residual mode '" + name + "'");
}

std::string to_string(ResidualMode mode) {
  switch (mode) {
    case ResidualMode::gated_residual:
      return "gated_residual";
    case ResidualMode::plain_residual:
      return "plain_residual";
    case ResidualMode::no_residual:
      return "no_residual";
  }
  return "gated_residual";
}

}  // namespace hermes::hyper
