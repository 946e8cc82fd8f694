#pragma once

// Core records shared by the data loaders, the hypergraph builder and the
// training loop.

#include <cstddef>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "hermes/tensor.hpp"

namespace hermes {

inline constexpr double kSynergyThreshold = 30.0;

// Positive iff strictly above the threshold; exactly 30 is negative.
inline int synergy_label(double raw_score) { return raw_score > kSynergyThreshold ? 1 : 0; }

// Interned string ids -> dense indices, in first-registration order.
class IdTable {
 public:
  std::size_t intern(const std::string& id);
  std::optional<std::size_t> find(const std::string& id) const;
  std::size_t at(const std::string& id) const;  // throws ReferenceError
  const std::string& name(std::size_t index) const { return names_.at(index); }
  const std::vector<std::string>& names() const { return names_; }
  std::size_t size() const { return names_.size(); }
  bool contains(const std::string& id) const { return index_.count(id) != 0; }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, std::size_t> index_;
};

struct EntityRegistry {
  IdTable drugs;
  IdTable cells;
  IdTable diseases;
};

enum class FoldTag { unassigned, train, validation, test };

struct SynergySample {
  std::size_t drug_a = 0;
  std::size_t drug_b = 0;
  std::size_t cell = 0;
  double raw_score = 0.0;
  int label = 0;
  FoldTag fold_tag = FoldTag::unassigned;
};

struct DrugDiseasePair {
  std::size_t drug = 0;
  std::size_t disease = 0;
};

struct ExpressionMatrix {
  std::vector<std::string> cell_ids;
  std::vector<std::string> gene_ids;
  Tensor values;  // cells x genes, log2(x+1) then per-gene z-score
  std::vector<std::string> warnings;
};

// Everything the model consumes, aligned to the registry: row r of
// `expression` is cell r, row r of `disease_embeddings` is disease r and
// smiles[r] belongs to drug r.
struct Dataset {
  EntityRegistry entities;
  std::vector<SynergySample> samples;
  std::vector<std::string> smiles;
  Tensor expression;
  Tensor disease_embeddings;
  std::vector<DrugDiseasePair> pairs;
  std::vector<std::string> warnings;
};

}  // namespace hermes
