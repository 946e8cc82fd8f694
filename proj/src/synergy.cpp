#include "hermes/synergy.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <numeric>
#include <thread>

#include "hermes/errors.hpp"
#include "hermes/molgraph.hpp"

namespace hermes::syn {

namespace {

constexpr double kClamp = 1e-12;

template <typename T>
T field(const nlohmann::json& j, const std::string& key) {
  try {
    return j.get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError("config field '" + key + "' has the wrong type: " + j.dump());
  }
}

std::size_t count_field(const nlohmann::json& j, const std::string& key) {
  if (!j.is_number_integer() || j.get<std::int64_t>() < 0) {
    throw ConfigError("config field '" + key + "' must be a non-negative integer, got " + j.dump());
  }
  return j.get<std::size_t>();
}

double real_field(const nlohmann::json& j, const std::string& key) {
  if (!j.is_number()) throw ConfigError("config field '" + key + "' must be a number, got " + j.dump());
  return j.get<double>();
}

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Runs fn(0..n-1) on up to `jobs` threads; rethrows the lowest-index failure.
template <typename Fn>
void parallel_for(std::size_t n, std::size_t jobs, Fn fn) {
  jobs = std::max<std::size_t>(1, std::min(jobs, n));
  std::vector<std::exception_ptr> errors(n);
  if (jobs == 1) {
    for (std::size_t i = 0; i < n; ++i) {
      try {
        fn(i);
      } catch (...) {
        errors[i] = std::current_exception();
        break;
      }
    }
  } else {
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::vector<std::thread> workers;
    for (std::size_t w = 0; w < jobs; ++w) {
      workers.emplace_back([&] {
        for (std::size_t i = next++; i < n && !failed; i = next++) {
          try {
            fn(i);
          } catch (...) {
            errors[i] = std::current_exception();
            failed = true;
          }
        }
      });
    }
    for (auto& t : workers) t.join();
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

std::vector<int> labels_of(std::span<const SynergySample> samples) {
  std::vector<int> out;
  out.reserve(samples.size());
  for (const auto& s : samples) out.push_back(s.label);
  return out;
}

bool both_classes(std::span<const int> labels) {
  const auto pos = std::count(labels.begin(), labels.end(), 1);
  return pos > 0 && pos < static_cast<std::ptrdiff_t>(labels.size());
}

std::vector<SynergySample> pick(const std::vector<SynergySample>& samples,
                                const std::vector<std::size_t>& index, FoldTag tag) {
  std::vector<SynergySample> out;
  out.reserve(index.size());
  for (std::size_t i : index) {
    out.push_back(samples.at(i));
    out.back().fold_tag = tag;
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Config

void TrainConfig::validate() const {
  auto fail = [](const std::string& what) { throw ConfigError("config: " + what); };
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) fail("learning_rate must be >= 0");
  if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay)) fail("weight_decay must be >= 0");
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) fail("dropout_rate must lie in [0, 1)");
  if (max_epochs == 0) fail("max_epochs must be >= 1");
  if (batch_size == 0) fail("batch_size must be >= 1");
  if (!(interaction_weight >= 0.0) || !std::isfinite(interaction_weight)) {
    fail("interaction_weight must be >= 0");
  }
  if (heads == 0) fail("heads must be >= 1");
  if (refinement_layers == 0) fail("refinement_layers must be >= 1");
  if (gtn_layers == 0) fail("gtn_layers must be >= 1");
  if (common_dim == 0 || common_dim % heads != 0) {
    fail("common_dim (" + std::to_string(common_dim) + ") must be a positive multiple of heads (" +
         std::to_string(heads) + ")");
  }
  for (std::size_t h : head_hidden) {
    if (h == 0) fail("head_hidden widths must be >= 1");
  }
  if (!std::isfinite(gate_bias)) fail("gate_bias must be finite");
}

nlohmann::json to_json(const TrainConfig& c) {
  return {{"learning_rate", c.learning_rate},
          {"weight_decay", c.weight_decay},
          {"dropout_rate", c.dropout_rate},
          {"max_epochs", c.max_epochs},
          {"early_stop_patience", c.early_stop_patience},
          {"batch_size", c.batch_size},
          {"seed", c.seed},
          {"interaction_weight", c.interaction_weight},
          {"heads", c.heads},
          {"refinement_layers", c.refinement_layers},
          {"common_dim", c.common_dim},
          {"gtn_layers", c.gtn_layers},
          {"head_hidden", c.head_hidden},
          {"gate_bias", c.gate_bias},
          {"no_transformer", c.no_transformer},
          {"no_disease", c.no_disease},
          {"residual_mode", hyper::to_string(c.residual_mode)}};
}

TrainConfig train_config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  TrainConfig c;
  bool seeded = false;
  for (const auto& [key, v] : j.items()) {
    if (key == "data") continue;
    if (key == "learning_rate") {
      c.learning_rate = real_field(v, key);
    } else if (key == "weight_decay") {
      c.weight_decay = real_field(v, key);
    } else if (key == "dropout_rate") {
      c.dropout_rate = real_field(v, key);
    } else if (key == "max_epochs") {
      c.max_epochs = count_field(v, key);
    } else if (key == "early_stop_patience") {
      c.early_stop_patience = count_field(v, key);
    } else if (key == "batch_size") {
      c.batch_size = count_field(v, key);
    } else if (key == "seed") {
      if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0)) {
        throw ConfigError("config field 'seed' must be a non-negative integer, got " + v.dump());
      }
      c.seed = v.get<std::uint64_t>();
      seeded = true;
    } else if (key == "interaction_weight") {
      c.interaction_weight = real_field(v, key);
    } else if (key == "heads") {
      c.heads = count_field(v, key);
    } else if (key == "refinement_layers") {
      c.refinement_layers = count_field(v, key);
    } else if (key == "common_dim") {
      c.common_dim = count_field(v, key);
    } else if (key == "gtn_layers") {
      c.gtn_layers = count_field(v, key);
    } else if (key == "head_hidden") {
      if (!v.is_array()) throw ConfigError("config field 'head_hidden' must be a list of widths");
      c.head_hidden.clear();
      for (const auto& w : v) c.head_hidden.push_back(count_field(w, key));
    } else if (key == "gate_bias") {
      c.gate_bias = real_field(v, key);
    } else if (key == "no_transformer") {
      c.no_transformer = field<bool>(v, key);
    } else if (key == "no_disease") {
      c.no_disease = field<bool>(v, key);
    } else if (key == "residual_mode") {
      c.residual_mode = hyper::residual_mode_from_string(field<std::string>(v, key));
    } else {
      throw ConfigError("config: unknown field '" + key + "'");
    }
  }
  if (!seeded) throw ConfigError("config: missing required field 'seed'");
  c.validate();
  return c;
}

void apply_ablation(TrainConfig& config, const std::string& name) {
  if (name == "no_transformer") {
    config.no_transformer = true;
  } else if (name == "no_disease") {
    config.no_disease = true;
    config.interaction_weight = 0.0;
  } else if (name == "no_residual") {
    config.residual_mode = hyper::ResidualMode::no_residual;
  } else if (name == "plain_residual") {
    config.residual_mode = hyper::ResidualMode::plain_residual;
  } else {
    throw UsageError("unknown ablation '" + name +
                     "' (expected no_transformer, no_disease, no_residual or plain_residual)");
  }
}

// ---------------------------------------------------------------------------
// Model

Model Model::init(const TrainConfig& config, std::size_t genes, std::size_t disease_dim,
                  Rng& rng) {
  config.validate();
  if (genes == 0) throw DimensionError("model: expression matrix has no genes");
  Model m;
  m.config = config;
  const std::size_t head_dim = config.common_dim / config.heads;
  for (std::size_t l = 0; l < config.gtn_layers; ++l) {
    m.gtn.push_back(enc::GtnLayerParams::init(l == 0 ? mol::kFeatureWidth : config.common_dim,
                                              config.heads, head_dim, rng));
  }
  m.cell_mlp = enc::MlpParams::init({genes, config.common_dim}, Activation::relu, Activation::relu, rng);
  if (disease_dim > 0) {
    m.disease_mlp =
        enc::MlpParams::init({disease_dim, config.common_dim}, Activation::relu, Activation::relu, rng);
  }
  for (std::size_t l = 0; l < config.refinement_layers; ++l) {
    m.hgnn.push_back(hyper::HgnnLayerParams::init(config.common_dim, config.residual_mode, rng,
                                                  config.gate_bias));
  }
  std::vector<std::size_t> dims = {3 * config.common_dim};
  dims.insert(dims.end(), config.head_hidden.begin(), config.head_hidden.end());
  dims.push_back(1);
  m.head = enc::MlpParams::init(dims, Activation::relu, Activation::sigmoid, rng);
  return m;
}

std::vector<Tensor> Model::parameters() const {
  std::vector<Tensor> out;
  for (const auto& layer : gtn) {
    out.push_back(layer.w_self);
    out.push_back(layer.w_value);
    if (!config.no_transformer) {
      out.push_back(layer.w_query);
      out.push_back(layer.w_key);
    }
  }
  for (const auto& t : cell_mlp.parameters()) out.push_back(t);
  const bool disease_live =
      !disease_mlp.weights.empty() && !config.no_disease && config.interaction_weight > 0.0;
  if (disease_live) {
    for (const auto& t : disease_mlp.parameters()) out.push_back(t);
  }
  for (const auto& layer : hgnn) {
    for (const auto& t : layer.parameters()) out.push_back(t);
  }
  for (const auto& t : head.parameters()) out.push_back(t);
  return out;
}

std::vector<std::pair<std::string, Tensor>> Model::named_tensors() const {
  std::vector<std::pair<std::string, Tensor>> out;
  for (std::size_t l = 0; l < gtn.size(); ++l) {
    const std::string p = "gtn." + std::to_string(l) + ".";
    out.emplace_back(p + "w_self", gtn[l].w_self);
    out.emplace_back(p + "w_value", gtn[l].w_value);
    out.emplace_back(p + "w_query", gtn[l].w_query);
    out.emplace_back(p + "w_key", gtn[l].w_key);
  }
  auto mlp = [&](const std::string& name, const enc::MlpParams& m) {
    for (std::size_t l = 0; l < m.weights.size(); ++l) {
      out.emplace_back(name + "." + std::to_string(l) + ".w", m.weights[l]);
      out.emplace_back(name + "." + std::to_string(l) + ".b", m.biases[l]);
    }
  };
  mlp("cell", cell_mlp);
  mlp("disease", disease_mlp);
  for (std::size_t l = 0; l < hgnn.size(); ++l) {
    const std::string p = "hgnn." + std::to_string(l) + ".";
    out.emplace_back(p + "w_conv", hgnn[l].w_conv);
    out.emplace_back(p + "w_gate", hgnn[l].w_gate);
    out.emplace_back(p + "b_gate", hgnn[l].b_gate);
  }
  mlp("head", head);
  return out;
}

Context Context::build(const Dataset& dataset, const std::vector<SynergySample>& training,
                       const TrainConfig& config) {
  Context ctx;
  std::vector<mol::MolecularGraph> graphs;
  graphs.reserve(dataset.smiles.size());
  for (const auto& s : dataset.smiles) graphs.push_back(mol::parse_smiles(s));
  ctx.molecules = enc::MoleculeBatch::from_graphs(graphs);
  ctx.expression = dataset.expression;
  ctx.disease_embeddings = dataset.disease_embeddings;
  ctx.drugs = dataset.entities.drugs.size();
  ctx.cells = dataset.entities.cells.size();
  static const std::vector<DrugDiseasePair> kNoPairs;
  const auto hg = hyper::Hypergraph::build(training, config.no_disease ? kNoPairs : dataset.pairs,
                                           dataset.entities,
                                           config.no_disease ? 0.0 : config.interaction_weight);
  ctx.propagation = hyper::propagation_matrix(hg);
  return ctx;
}

Tensor refine_nodes(Tape& tape, const Model& model, const Context& ctx) {
  const auto attention =
      model.config.no_transformer ? enc::AttentionMode::uniform : enc::AttentionMode::scaled_dot;
  std::vector<Tensor> blocks;
  blocks.push_back(enc::encode_drugs(tape, ctx.molecules, model.gtn, attention));
  blocks.push_back(enc::mlp_forward(tape, ctx.expression, model.cell_mlp));
  const bool has_diseases = ctx.disease_embeddings.defined() && ctx.disease_embeddings.rows() > 0;
  if (has_diseases) {
    if (model.disease_mlp.weights.empty()) {
      throw DimensionError("model has no disease projector but the data has diseases");
    }
    blocks.push_back(enc::mlp_forward(tape, ctx.disease_embeddings, model.disease_mlp));
  }
  const Tensor x0 = concat_rows(tape, blocks);
  return hyper::refine(tape, x0, ctx.propagation, model.hgnn);
}

Tensor head_forward(Tape& tape, const Model& model, const Tensor& nodes,
                    std::span<const SynergySample> samples, const Context& ctx, bool training,
                    Rng& rng) {
  std::vector<std::size_t> a, b, c;
  a.reserve(samples.size());
  b.reserve(samples.size());
  c.reserve(samples.size());
  for (const auto& s : samples) {
    if (s.drug_a >= ctx.drugs || s.drug_b >= ctx.drugs) {
      throw ReferenceError("sample names drug index outside the registry");
    }
    if (s.cell >= ctx.cells) throw ReferenceError("sample names cell index outside the registry");
    a.push_back(s.drug_a);
    b.push_back(s.drug_b);
    c.push_back(ctx.drugs + s.cell);
  }
  const Tensor parts[] = {gather_rows(tape, nodes, a), gather_rows(tape, nodes, b),
                          gather_rows(tape, nodes, c)};
  Tensor h = concat_cols(tape, parts);
  const auto& head = model.head;
  for (std::size_t l = 0; l < head.weights.size(); ++l) {
    h = activation(tape, add_row(tape, matmul(tape, h, head.weights[l]), head.biases[l]),
                   head.activations[l]);
    if (l + 1 < head.weights.size()) h = dropout(tape, h, model.config.dropout_rate, training, rng);
  }
  return h;
}

double predict(const Tensor& drug_i, const Tensor& drug_j, const Tensor& cell,
               const enc::MlpParams& head) {
  Tape tape(false);
  const Tensor parts[] = {drug_i, drug_j, cell};
  const Tensor out = enc::mlp_forward(tape, concat_cols(tape, parts), head);
  if (out.rows() != 1 || out.cols() != 1) {
    throw DimensionError("predict: head must map one row to a scalar, got " + out.shape_string());
  }
  return out.item();
}

std::vector<double> predict_symmetric(const Model& model, const Context& ctx,
                                      std::span<const SynergySample> samples) {
  if (samples.empty()) return {};
  Tape tape(false);
  Rng unused(0);
  const Tensor nodes = refine_nodes(tape, model, ctx);
  std::vector<SynergySample> swapped(samples.begin(), samples.end());
  for (auto& s : swapped) std::swap(s.drug_a, s.drug_b);
  const Tensor forward = head_forward(tape, model, nodes, samples, ctx, false, unused);
  const Tensor backward = head_forward(tape, model, nodes, swapped, ctx, false, unused);
  std::vector<double> out(samples.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = 0.5 * (forward.values()[i] + backward.values()[i]);
  }
  return out;
}

std::vector<SynergySample> augment(std::span<const SynergySample> samples) {
  std::vector<SynergySample> out;
  out.reserve(2 * samples.size());
  for (const auto& s : samples) {
    out.push_back(s);
    if (s.drug_a != s.drug_b) {
      SynergySample twin = s;
      std::swap(twin.drug_a, twin.drug_b);
      out.push_back(twin);
    }
  }
  return out;
}

Tensor bce_loss(Tape& tape, const Tensor& predicted, std::span<const int> labels) {
  if (labels.empty()) throw ContractError("bce_loss: empty batch");
  if (predicted.size() != labels.size()) {
    throw DimensionError("bce_loss: " + std::to_string(labels.size()) + " labels for predictions " +
                         predicted.shape_string());
  }
  const auto p = predicted.values();
  const double n = static_cast<double>(labels.size());
  double total = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 0 && labels[i] != 1) throw ContractError("bce_loss: labels must be 0 or 1");
    if (!(p[i] >= 0.0 && p[i] <= 1.0)) {
      throw ContractError("bce_loss: prediction " + std::to_string(p[i]) + " outside [0, 1]");
    }
    const double q = std::clamp(p[i], kClamp, 1.0 - kClamp);
    total -= labels[i] ? std::log(q) : std::log(1.0 - q);
  }
  Tensor result = Tensor::from(1, 1, {total / n}, tape.needs_grad({&predicted}));
  require_finite(result, "bce_loss");
  std::vector<int> y(labels.begin(), labels.end());
  tape.record("bce_loss", result, [predicted, result, y = std::move(y), n]() mutable {
    const double g = result.grad()[0];
    const auto pv = predicted.values();
    auto gp = predicted.grad();
    for (std::size_t i = 0; i < y.size(); ++i) {
      if (pv[i] < kClamp || pv[i] > 1.0 - kClamp) continue;
      gp[i] += g * (y[i] ? -1.0 / pv[i] : 1.0 / (1.0 - pv[i])) / n;
    }
  });
  return result;
}

// ---------------------------------------------------------------------------
// Training

std::string to_string(StopReason reason) {
  return reason == StopReason::early_stop ? "early_stop" : "max_epochs";
}

nlohmann::json to_json(const TrainReport& r) {
  auto nullable = [](const std::vector<double>& v) {
    nlohmann::json a = nlohmann::json::array();
    for (double x : v) a.push_back(std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(nullptr));
    return a;
  };
  return {{"train_loss", nullable(r.train_loss)},
          {"validation_loss", nullable(r.validation_loss)},
          {"validation_auroc", nullable(r.validation_auroc)},
          {"validation_auprc", nullable(r.validation_auprc)},
          {"validation_f1", nullable(r.validation_f1)},
          {"best_epoch", r.best_epoch},
          {"epochs_run", r.train_loss.size()},
          {"stop_reason", to_string(r.stop_reason)},
          {"wall_seconds", r.wall_seconds}};
}

std::uint64_t run_seed(std::uint64_t seed, std::size_t fold, std::size_t grid_index) {
  return splitmix(splitmix(seed) ^ splitmix(0x100000000ULL + fold) ^
                  splitmix(0x200000000ULL + grid_index));
}

namespace {

struct Validation {
  double loss = 0.0;
  metrics::EvalResult result;
  bool defined = false;  // both classes present
};

Validation validate(const Model& model, const Context& ctx,
                    const std::vector<SynergySample>& samples, const std::vector<int>& labels) {
  Validation v;
  const auto scores = predict_symmetric(model, ctx, samples);
  Tape tape(false);
  v.loss = bce_loss(tape, Tensor::from(scores.size(), 1, scores), labels).item();
  if (both_classes(labels)) {
    v.result = metrics::evaluate(scores, labels);
    v.defined = true;
  } else {
    const double nan = std::numeric_limits<double>::quiet_NaN();
    v.result.auroc = nan;
    v.result.auprc = std::count(labels.begin(), labels.end(), 1) > 0 ? 1.0 : nan;
    v.result.f1 = metrics::f1(scores, labels);
  }
  return v;
}

}  // namespace

TrainResult train(const Dataset& dataset, const data::SplitPlan& plan, std::size_t fold,
                  const TrainConfig& config, std::size_t grid_index) {
  config.validate();
  if (fold >= plan.folds.size()) {
    throw ContractError("train: fold " + std::to_string(fold) + " out of range");
  }
  const auto start = std::chrono::steady_clock::now();
  const auto& split = plan.folds[fold];
  if (split.train.empty()) throw ContractError("train: empty training split");
  if (split.validation.empty()) throw ContractError("train: empty validation split");
  const auto training = pick(dataset.samples, split.train, FoldTag::train);
  const auto validation = pick(dataset.samples, split.validation, FoldTag::validation);
  const auto validation_labels = labels_of(validation);

  Rng rng(run_seed(config.seed, fold, grid_index));
  const std::size_t disease_dim =
      dataset.disease_embeddings.defined() && dataset.disease_embeddings.rows() > 0
          ? dataset.disease_embeddings.cols()
          : 0;
  Model model = Model::init(config, dataset.expression.cols(), disease_dim, rng);
  const Context ctx = Context::build(dataset, training, config);
  AdamW optimizer(model.parameters(), {config.learning_rate, config.weight_decay});

  const auto augmented = augment(training);
  std::vector<std::size_t> order(augmented.size());
  std::iota(order.begin(), order.end(), 0);

  TrainReport report;
  const auto named = model.named_tensors();
  std::vector<std::vector<double>> best_values;
  double best_score = -std::numeric_limits<double>::infinity();
  std::vector<SynergySample> batch;
  std::vector<int> batch_labels;

  for (std::size_t epoch = 0; epoch < config.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    for (std::size_t begin = 0; begin < order.size(); begin += config.batch_size) {
      const std::size_t end = std::min(order.size(), begin + config.batch_size);
      batch.clear();
      batch_labels.clear();
      for (std::size_t i = begin; i < end; ++i) {
        batch.push_back(augmented[order[i]]);
        batch_labels.push_back(augmented[order[i]].label);
      }
      Tape tape;
      const Tensor nodes = refine_nodes(tape, model, ctx);
      const Tensor pred = head_forward(tape, model, nodes, batch, ctx, true, rng);
      const Tensor loss = bce_loss(tape, pred, batch_labels);
      if (!std::isfinite(loss.item())) {
        throw NumericError("training diverged: non-finite loss at epoch " + std::to_string(epoch));
      }
      tape.backward(loss);
      optimizer.step();
      loss_sum += loss.item() * static_cast<double>(end - begin);
    }
    report.train_loss.push_back(loss_sum / static_cast<double>(order.size()));

    const auto v = validate(model, ctx, validation, validation_labels);
    report.validation_loss.push_back(v.loss);
    report.validation_auroc.push_back(v.result.auroc);
    report.validation_auprc.push_back(v.result.auprc);
    report.validation_f1.push_back(v.result.f1);
    const double score = v.defined ? v.result.auroc : -v.loss;
    spdlog::debug("fold {} epoch {}: train loss {:.5f}, validation loss {:.5f}, auroc {:.4f}", fold,
                  epoch, report.train_loss.back(), v.loss, v.result.auroc);
    if (score > best_score || best_values.empty()) {
      best_score = score;
      report.best_epoch = epoch;
      best_values.clear();
      for (const auto& [name, t] : named) best_values.emplace_back(t.values().begin(), t.values().end());
    } else if (epoch - report.best_epoch >= config.early_stop_patience) {
      report.stop_reason = StopReason::early_stop;
      break;
    }
  }

  for (std::size_t i = 0; i < named.size(); ++i) {
    Tensor t = named[i].second;
    std::copy(best_values[i].begin(), best_values[i].end(), t.values().begin());
  }
  TrainResult result{model, report, {}};
  result.validation = validate(model, ctx, validation, validation_labels).result;
  result.report.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  spdlog::info("fold {}: best epoch {} of {}, validation auroc {:.4f} ({:.1f} s)", fold,
               report.best_epoch + 1, report.train_loss.size(), result.validation.auroc,
               result.report.wall_seconds);
  return result;
}

std::optional<metrics::EvalResult> evaluate_test(const Model& model, const Dataset& dataset,
                                                 const data::SplitPlan& plan, std::size_t fold) {
  if (fold >= plan.folds.size()) {
    throw ContractError("evaluate_test: fold " + std::to_string(fold) + " out of range");
  }
  if (plan.test.empty()) return std::nullopt;
  const auto training = pick(dataset.samples, plan.folds[fold].train, FoldTag::train);
  const auto test = pick(dataset.samples, plan.test, FoldTag::test);
  const auto labels = labels_of(test);
  if (!both_classes(labels)) return std::nullopt;
  const Context ctx = Context::build(dataset, training, model.config);
  return metrics::evaluate(predict_symmetric(model, ctx, test), labels);
}

CvResult cross_validate(const Dataset& dataset, const data::SplitPlan& plan,
                        const TrainConfig& config, std::size_t jobs, std::size_t grid_index) {
  CvResult cv;
  std::vector<std::optional<TrainResult>> slots(plan.folds.size());
  parallel_for(plan.folds.size(), jobs,
               [&](std::size_t k) { slots[k] = train(dataset, plan, k, config, grid_index); });
  double best = -std::numeric_limits<double>::infinity();
  double total = 0.0;
  for (std::size_t k = 0; k < slots.size(); ++k) {
    cv.folds.push_back(std::move(*slots[k]));
    const double auroc = cv.folds.back().validation.auroc;
    total += auroc;
    if (std::isfinite(auroc) && auroc > best) {
      best = auroc;
      cv.best_fold = k;
    }
  }
  cv.mean_validation_auroc = total / static_cast<double>(cv.folds.size());
  cv.test = evaluate_test(cv.folds[cv.best_fold].model, dataset, plan, cv.best_fold);
  return cv;
}

// ---------------------------------------------------------------------------
// Grid search

std::vector<TrainConfig> expand_grid(const TrainConfig& base, const nlohmann::json& grid) {
  if (!grid.is_object() || grid.empty()) throw UsageError("grid must be a non-empty JSON object");
  std::vector<nlohmann::json> points = {to_json(base)};
  for (const auto& [key, values] : grid.items()) {
    if (key == "data") throw ConfigError("grid field 'data' cannot be searched");
    if (!values.is_array() || values.empty()) {
      throw ConfigError("grid field '" + key + "' must be a non-empty list of values");
    }
    std::vector<nlohmann::json> next;
    for (const auto& p : points) {
      for (const auto& v : values) {
        auto q = p;
        q[key] = v;
        next.push_back(std::move(q));
      }
    }
    points = std::move(next);
  }
  std::vector<TrainConfig> out;
  for (const auto& p : points) {
    try {
      out.push_back(train_config_from_json(p));
    } catch (const ConfigError& e) {
      throw ConfigError(std::string("grid: ") + e.what());
    }
  }
  return out;
}

GridResult grid_search(const Dataset& dataset, const data::SplitPlan& plan,
                       const std::vector<TrainConfig>& grid, std::size_t jobs) {
  if (grid.empty()) throw UsageError("grid search needs at least one configuration");
  const std::size_t folds = plan.folds.size();
  std::vector<double> auroc(grid.size() * folds);
  parallel_for(auroc.size(), jobs, [&](std::size_t task) {
    const std::size_t g = task / folds;
    const std::size_t k = task % folds;
    auroc[task] = train(dataset, plan, k, grid[g], g).validation.auroc;
  });
  GridResult result;
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t g = 0; g < grid.size(); ++g) {
    GridRow row;
    row.config = grid[g];
    row.fold_auroc.assign(auroc.begin() + static_cast<std::ptrdiff_t>(g * folds),
                          auroc.begin() + static_cast<std::ptrdiff_t>((g + 1) * folds));
    row.mean_auroc = std::accumulate(row.fold_auroc.begin(), row.fold_auroc.end(), 0.0) /
                     static_cast<double>(folds);
    if (std::isfinite(row.mean_auroc) && row.mean_auroc > best) {
      best = row.mean_auroc;
      result.best = g;
    }
    result.rows.push_back(std::move(row));
  }
  return result;
}

}  // namespace hermes::syn
