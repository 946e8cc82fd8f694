#pragma once

// Loaders for the five input files, expression normalisation, the five
// split protocols and a synthetic dataset generator.
//
// File formats (UTF-8, header row required, no quoting):
//   synergy CSV          drug_a,drug_b,cell_line,score
//   SMILES TSV           drug_id<TAB>smiles
//   expression CSV       cell_line,<gene ids...>
//   disease embeddings   disease_id,v1,...,vk
//   drug-disease TSV     drug_id<TAB>disease_id

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "hermes/data.hpp"

namespace hermes::data {

struct SmilesEntry {
  std::string drug_id;
  std::string smiles;
};

std::vector<SmilesEntry> load_smiles_table(std::istream& in);
std::vector<SmilesEntry> load_smiles_table(const std::filesystem::path& path);

struct SynergyLoad {
  std::vector<SynergySample> samples;
  std::size_t dropped = 0;     // rows naming a drug without SMILES or a cell without expression
  std::size_t duplicates = 0;  // repeated unordered (drug pair, cell) combinations
  std::vector<std::string> warnings;
};

// Labels rows by the strict > 30 threshold and interns surviving drugs and
// cells into `registry` in order of first appearance.
SynergyLoad load_synergy(std::istream& in, const std::unordered_set<std::string>& known_drugs,
                         const std::unordered_set<std::string>& known_cells,
                         EntityRegistry& registry);
SynergyLoad load_synergy(const std::filesystem::path& path,
                         const std::unordered_set<std::string>& known_drugs,
                         const std::unordered_set<std::string>& known_cells,
                         EntityRegistry& registry);

// log2(x + 1) then per-gene z-score with the population std. Restricted to
// `genes` (in that order) when non-empty. Constant genes become zeros.
ExpressionMatrix load_expression(std::istream& in, const std::vector<std::string>& genes = {});
ExpressionMatrix load_expression(const std::filesystem::path& path,
                                 const std::vector<std::string>& genes = {});

// Throws DataError when a column is not normalised to the stated bounds.
void check_normalised(const ExpressionMatrix& m, double tolerance = 1e-9);

struct DiseaseEmbeddings {
  std::vector<std::string> ids;
  Tensor matrix;
};

DiseaseEmbeddings load_disease_embeddings(std::istream& in);
DiseaseEmbeddings load_disease_embeddings(const std::filesystem::path& path);

struct PairLoad {
  std::vector<DrugDiseasePair> pairs;
  Tensor disease_embeddings;  // rows aligned to registry.diseases
  std::size_t dropped = 0;    // pairs naming a drug absent from the synergy data
};

// Keeps pairs whose drug is registered; registers the diseases they reach.
PairLoad load_drug_disease(std::istream& in, const DiseaseEmbeddings& embeddings,
                           EntityRegistry& registry);
PairLoad load_drug_disease(const std::filesystem::path& path, const DiseaseEmbeddings& embeddings,
                           EntityRegistry& registry);

struct DataPaths {
  std::filesystem::path synergy;
  std::filesystem::path smiles;
  std::filesystem::path expression;
  std::filesystem::path disease_embeddings;
  std::filesystem::path drug_disease;
  std::vector<std::string> genes;
};

nlohmann::json to_json(const DataPaths& paths);
// Accepts the paths object itself or an object holding it under "data".
// Relative paths resolve against `base`.
DataPaths data_paths_from_json(const nlohmann::json& j, const std::filesystem::path& base = {});

Dataset load_dataset(const DataPaths& paths);

// ---------------------------------------------------------------------------
// Splits

enum class SplitMode { random, cline, drugcomb, drugsingle, drugdouble };

SplitMode split_mode_from_string(const std::string& name);
std::string to_string(SplitMode mode);

struct Fold {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
};

struct SplitPlan {
  SplitMode mode = SplitMode::random;
  std::uint64_t seed = 0;
  std::vector<std::size_t> test;
  std::vector<Fold> folds;
  // Samples outside both the test set and the CV pool (drugdouble only).
  std::vector<std::size_t> discarded;
  std::string data_digest;
};

inline constexpr std::size_t kFolds = 5;
inline constexpr double kTestFraction = 0.1;

// 10% test carved with the mode's stratification, then 5 folds over the
// rest. Throws ConfigError when there are fewer than 5 strata or a fold comes
// out empty.
SplitPlan make_split(const std::vector<SynergySample>& samples, SplitMode mode,
                     std::uint64_t seed);

// Samples with their fold tag set for fold `fold` (train/validation) and
// test membership; everything else stays unassigned.
std::vector<SynergySample> tag_samples(const std::vector<SynergySample>& samples,
                                       const SplitPlan& plan, std::size_t fold);

nlohmann::json to_json(const SplitPlan& plan);
SplitPlan split_from_json(const nlohmann::json& j);
void save_split(const SplitPlan& plan, const std::filesystem::path& path);
SplitPlan load_split(const std::filesystem::path& path);

// Stable digest of the parsed samples (ids, scores) used to tie a split
// export to its data.
std::string samples_digest(const Dataset& dataset);

// ---------------------------------------------------------------------------
// Synthetic data

struct SynthSpec {
  std::size_t drugs = 20;
  std::size_t cells = 10;
  std::size_t diseases = 5;
  std::size_t samples = 4000;  // clamped to the number of distinct triples
  std::size_t genes = 32;
  std::size_t disease_dim = 16;
  double noise = 0.05;
  double motif_fraction = 0.75;  // drugs carrying the sulfonamide motif
  double group_fraction = 0.8;   // cell lines in the responsive group
};

// Ground truth: positive iff both drugs carry the motif and the cell line is
// in the responsive group; then each label flips with probability `noise`.
struct SynthData {
  std::string synergy_csv;
  std::string smiles_tsv;
  std::string expression_csv;
  std::string disease_csv;
  std::string pairs_tsv;
  std::vector<int> clean_labels;  // per synergy row, before noise
  std::vector<int> labels;        // per synergy row, after noise
  std::size_t flipped = 0;
  std::vector<bool> drug_has_motif;
  std::vector<bool> cell_in_group;
};

SynthData synth_dataset(const SynthSpec& spec, std::uint64_t seed);
// Writes the five files into `dir` and returns their paths.
DataPaths write_synth(const SynthData& data, const std::filesystem::path& dir);

}  // namespace hermes::data
