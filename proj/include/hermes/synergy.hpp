#pragma once

// Synergy head, loss, training loop, cross-validation, grid search and
// checkpoints.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "hermes/data.hpp"
#include "hermes/datasets.hpp"
#include "hermes/encoders.hpp"
#include "hermes/hypernet.hpp"
#include "hermes/metrics.hpp"
#include "hermes/tensor.hpp"

namespace hermes::syn {

struct TrainConfig {
  double learning_rate = 2e-4;
  double weight_decay = 1e-2;
  double dropout_rate = 0.2;
  std::size_t max_epochs = 500;
  std::size_t early_stop_patience = 20;
  std::size_t batch_size = 128;
  std::uint64_t seed = 0;
  double interaction_weight = 0.02;
  std::size_t heads = 4;
  std::size_t refinement_layers = 3;

  std::size_t common_dim = 128;
  std::size_t gtn_layers = 2;
  std::vector<std::size_t> head_hidden = {256, 64};
  double gate_bias = hyper::kEquilibriumGateBias;

  bool no_transformer = false;
  bool no_disease = false;
  hyper::ResidualMode residual_mode = hyper::ResidualMode::gated_residual;

  // Throws ConfigError on out-of-range values.
  void validate() const;
};

nlohmann::json to_json(const TrainConfig& config);
// Every TrainConfig field except seed is optional; unknown fields are
// rejected by name. A top-level "data" object is skipped.
TrainConfig train_config_from_json(const nlohmann::json& j);

// Applies --ablate names: no_transformer, no_disease (forces
// interaction_weight to 0), no_residual, plain_residual.
void apply_ablation(TrainConfig& config, const std::string& name);

// The full network: drug GTN stack, cell and disease projectors, hypergraph
// refinement and the prediction head.
struct Model {
  TrainConfig config;
  std::vector<enc::GtnLayerParams> gtn;
  enc::MlpParams cell_mlp;
  enc::MlpParams disease_mlp;  // empty when the data has no diseases
  std::vector<hyper::HgnnLayerParams> hgnn;
  enc::MlpParams head;  // 3*common_dim -> head_hidden... -> 1, sigmoid

  static Model init(const TrainConfig& config, std::size_t genes, std::size_t disease_dim,
                    Rng& rng);
  // Tensors that receive gradients under the configured ablations.
  std::vector<Tensor> parameters() const;
  // Every tensor, in a stable order, for checkpoints.
  std::vector<std::pair<std::string, Tensor>> named_tensors() const;
};

// Per-run inputs that don't change between batches.
struct Context {
  enc::MoleculeBatch molecules;
  Tensor expression;
  Tensor disease_embeddings;  // 0x0 when there are no diseases
  Tensor propagation;
  std::size_t drugs = 0;
  std::size_t cells = 0;

  // Hypergraph from the training-tagged samples only.
  static Context build(const Dataset& dataset, const std::vector<SynergySample>& training,
                       const TrainConfig& config);
};

// Refined node embeddings (drugs, cells, diseases stacked).
Tensor refine_nodes(Tape& tape, const Model& model, const Context& ctx);

// Head over vercat(d_i, d_j, c_k) for each (i, j, k) row; returns n x 1.
Tensor head_forward(Tape& tape, const Model& model, const Tensor& nodes,
                    std::span<const SynergySample> samples, const Context& ctx, bool training,
                    Rng& rng);

// Single-order score of one triple from refined embedding rows.
double predict(const Tensor& drug_i, const Tensor& drug_j, const Tensor& cell,
               const enc::MlpParams& head);

// Mean of both drug orders for every sample, no dropout.
std::vector<double> predict_symmetric(const Model& model, const Context& ctx,
                                      std::span<const SynergySample> samples);

// Each sample plus its drug-swapped twin (unless drug_a == drug_b).
std::vector<SynergySample> augment(std::span<const SynergySample> samples);

// Mean binary cross-entropy with predictions clamped to [1e-12, 1 - 1e-12].
Tensor bce_loss(Tape& tape, const Tensor& predicted, std::span<const int> labels);

enum class StopReason { max_epochs, early_stop };

struct TrainReport {
  std::vector<double> train_loss;
  std::vector<double> validation_loss;
  std::vector<double> validation_auroc;
  std::vector<double> validation_auprc;
  std::vector<double> validation_f1;
  std::size_t best_epoch = 0;  // 0-based
  StopReason stop_reason = StopReason::max_epochs;
  double wall_seconds = 0.0;
};

nlohmann::json to_json(const TrainReport& report);
std::string to_string(StopReason reason);

struct TrainResult {
  Model model;  // restored to the best validation epoch
  TrainReport report;
  metrics::EvalResult validation;
};

// Trains on fold `fold` of `plan` with the RNG seeded from
// run_seed(config.seed, fold, grid_index). Deterministic.
TrainResult train(const Dataset& dataset, const data::SplitPlan& plan, std::size_t fold,
                  const TrainConfig& config, std::size_t grid_index = 0);

struct CvResult {
  std::vector<TrainResult> folds;
  std::size_t best_fold = 0;
  // Best fold's model on the held-out test set; nullopt when the test set is
  // empty or single-class.
  std::optional<metrics::EvalResult> test;
  double mean_validation_auroc = 0.0;
};

// Seed for one run, mixed from the base seed, the fold and the grid index.
std::uint64_t run_seed(std::uint64_t seed, std::size_t fold, std::size_t grid_index);

CvResult cross_validate(const Dataset& dataset, const data::SplitPlan& plan,
                        const TrainConfig& config, std::size_t jobs = 1,
                        std::size_t grid_index = 0);

// Evaluates `model` (trained on `fold`) on the test set of `plan`.
std::optional<metrics::EvalResult> evaluate_test(const Model& model, const Dataset& dataset,
                                                 const data::SplitPlan& plan, std::size_t fold);

// Cartesian product of a JSON object mapping TrainConfig fields to value
// lists. Throws ConfigError naming the offending field.
std::vector<TrainConfig> expand_grid(const TrainConfig& base, const nlohmann::json& grid);

struct GridRow {
  TrainConfig config;
  std::vector<double> fold_auroc;
  double mean_auroc = 0.0;
};

struct GridResult {
  std::vector<GridRow> rows;
  std::size_t best = 0;
};

GridResult grid_search(const Dataset& dataset, const data::SplitPlan& plan,
                       const std::vector<TrainConfig>& grid, std::size_t jobs = 1);

// Versioned binary container: magic, version, JSON metadata (config echo plus
// `meta`), then every named tensor with its shape. Round-trips bit-exactly.
inline constexpr char kCheckpointMagic[8] = {'H', 'R', 'M', 'S', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  Model model;
  nlohmann::json meta;
};

void save_checkpoint(const std::filesystem::path& path, const Model& model,
                     const nlohmann::json& meta = nlohmann::json::object());
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace hermes::syn
