#include "hermes/datasets.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <unordered_map>

#include "hermes/digest.hpp"
#include "hermes/errors.hpp"
#include "hermes/molgraph.hpp"

namespace hermes {

std::size_t IdTable::intern(const std::string& id) {
  const auto [it, inserted] = index_.emplace(id, names_.size());
  if (inserted) names_.push_back(id);
  return it->second;
}

std::optional<std::size_t> IdTable::find(const std::string& id) const {
  const auto it = index_.find(id);
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::size_t IdTable::at(const std::string& id) const {
  const auto it = index_.find(id);
  if (it == index_.end()) throw ReferenceError("unknown id '" + id + "'");
  return it->second;
}

}  // namespace hermes

namespace hermes::data {

namespace {

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, sep)) out.push_back(field);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  for (auto& f : out) {
    while (!f.empty() && (f.back() == ' ' || f.back() == '\r')) f.pop_back();
    std::size_t start = 0;
    while (start < f.size() && f[start] == ' ') ++start;
    f.erase(0, start);
  }
  return out;
}

// Reads the next non-empty line; returns false at EOF.
bool next_line(std::istream& in, std::string& line, std::size_t& line_no) {
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) return true;
  }
  return false;
}

double parse_double(const std::string& text, std::size_t line_no, const std::string& what) {
  double value = 0.0;
  const char* begin = text.data();
  const char* end = begin + text.size();
  if (!text.empty() && *begin == '+') ++begin;
  const auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end || text.empty()) {
    throw ParseError("line " + std::to_string(line_no) + ": cannot parse " + what + " '" + text + "'",
                     line_no);
  }
  return value;
}

std::ifstream open(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  return in;
}

void expect_header(const std::vector<std::string>& got, const std::vector<std::string>& want,
                   const std::string& file) {
  if (got != want) {
    std::string expected;
    for (const auto& w : want) expected += (expected.empty() ? "" : ",") + w;
    throw SchemaError(file + ": expected header '" + expected + "'");
  }
}

}  // namespace

std::vector<SmilesEntry> load_smiles_table(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  if (!next_line(in, line, line_no)) throw SchemaError("SMILES table: missing header");
  expect_header(split(line, '\t'), {"drug_id", "smiles"}, "SMILES table");
  std::vector<SmilesEntry> out;
  std::set<std::string> seen;
  while (next_line(in, line, line_no)) {
    const auto fields = split(line, '\t');
    if (fields.size() != 2 || fields[0].empty() || fields[1].empty()) {
      throw ParseError("SMILES table line " + std::to_string(line_no) + ": malformed row", line_no);
    }
    if (!seen.insert(fields[0]).second) {
      throw DataError("SMILES table: duplicate drug id '" + fields[0] + "'");
    }
    out.push_back({fields[0], fields[1]});
  }
  return out;
}

std::vector<SmilesEntry> load_smiles_table(const std::filesystem::path& path) {
  auto in = open(path);
  return load_smiles_table(in);
}

SynergyLoad load_synergy(std::istream& in, const std::unordered_set<std::string>& known_drugs,
                         const std::unordered_set<std::string>& known_cells,
                         EntityRegistry& registry) {
  std::string line;
  std::size_t line_no = 0;
  if (!next_line(in, line, line_no)) throw SchemaError("synergy table: missing header");
  expect_header(split(line, ','), {"drug_a", "drug_b", "cell_line", "score"}, "synergy table");

  SynergyLoad out;
  std::set<std::tuple<std::string, std::string, std::string>> seen;
  while (next_line(in, line, line_no)) {
    const auto f = split(line, ',');
    if (f.size() != 4 || f[0].empty() || f[1].empty() || f[2].empty()) {
      throw ParseError("synergy table line " + std::to_string(line_no) + ": malformed row",
                       line_no);
    }
    const double score = parse_double(f[3], line_no, "score");
    if (!std::isfinite(score)) {
      throw ParseError("synergy table line " + std::to_string(line_no) + ": non-finite score",
                       line_no);
    }
    if (!known_drugs.count(f[0]) || !known_drugs.count(f[1]) || !known_cells.count(f[2])) {
      ++out.dropped;
      continue;
    }
    const auto key = std::make_tuple(std::min(f[0], f[1]), std::max(f[0], f[1]), f[2]);
    if (!seen.insert(key).second) {
      ++out.duplicates;
      continue;
    }
    SynergySample s;
    s.drug_a = registry.drugs.intern(f[0]);
    s.drug_b = registry.drugs.intern(f[1]);
    s.cell = registry.cells.intern(f[2]);
    s.raw_score = score;
    s.label = synergy_label(score);
    out.samples.push_back(s);
  }
  if (out.dropped > 0) {
    out.warnings.push_back("dropped " + std::to_string(out.dropped) +
                           " synergy rows referencing drugs without SMILES or cells without "
                           "expression");
  }
  if (out.duplicates > 0) {
    out.warnings.push_back("ignored " + std::to_string(out.duplicates) +
                           " duplicate (drug pair, cell line) rows; kept the first");
  }
  for (const auto& w : out.warnings) spdlog::warn("{}", w);
  return out;
}

SynergyLoad load_synergy(const std::filesystem::path& path,
                         const std::unordered_set<std::string>& known_drugs,
                         const std::unordered_set<std::string>& known_cells,
                         EntityRegistry& registry) {
  auto in = open(path);
  return load_synergy(in, known_drugs, known_cells, registry);
}

ExpressionMatrix load_expression(std::istream& in, const std::vector<std::string>& genes) {
  std::string line;
  std::size_t line_no = 0;
  if (!next_line(in, line, line_no)) throw SchemaError("expression table: missing header");
  const auto header = split(line, ',');
  if (header.empty() || header[0] != "cell_line") {
    throw SchemaError("expression table: first column must be 'cell_line'");
  }
  std::unordered_map<std::string, std::size_t> column_of;
  for (std::size_t c = 1; c < header.size(); ++c) column_of.emplace(header[c], c);

  ExpressionMatrix m;
  std::vector<std::size_t> columns;
  if (genes.empty()) {
    m.gene_ids.assign(header.begin() + 1, header.end());
    for (std::size_t c = 1; c < header.size(); ++c) columns.push_back(c);
  } else {
    for (const auto& g : genes) {
      const auto it = column_of.find(g);
      if (it == column_of.end()) throw SchemaError("expression table: missing gene column '" + g + "'");
      columns.push_back(it->second);
      m.gene_ids.push_back(g);
    }
  }
  if (columns.empty()) throw SchemaError("expression table: no gene columns");

  std::vector<double> values;
  std::set<std::string> seen;
  while (next_line(in, line, line_no)) {
    const auto f = split(line, ',');
    if (f.size() != header.size()) {
      throw ParseError("expression table line " + std::to_string(line_no) + ": expected " +
                           std::to_string(header.size()) + " fields",
                       line_no);
    }
    if (!seen.insert(f[0]).second) throw DataError("expression table: duplicate cell line '" + f[0] + "'");
    m.cell_ids.push_back(f[0]);
    for (std::size_t c : columns) {
      const double x = parse_double(f[c], line_no, "expression value");
      if (x < 0.0 || !std::isfinite(x)) {
        throw DataError("expression table line " + std::to_string(line_no) +
                        ": negative or non-finite expression for gene '" + header[c] + "'");
      }
      values.push_back(std::log2(x + 1.0));
    }
  }
  const std::size_t rows = m.cell_ids.size();
  const std::size_t cols = columns.size();
  for (std::size_t g = 0; g < cols && rows > 0; ++g) {
    double mean = 0.0;
    for (std::size_t r = 0; r < rows; ++r) mean += values[r * cols + g];
    mean /= static_cast<double>(rows);
    double var = 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
      const double d = values[r * cols + g] - mean;
      var += d * d;
    }
    var /= static_cast<double>(rows);
    if (var <= 1e-24 * (1.0 + mean * mean)) {
      for (std::size_t r = 0; r < rows; ++r) values[r * cols + g] = 0.0;
      m.warnings.push_back("gene '" + m.gene_ids[g] + "' is constant; mapped to zeros");
      spdlog::warn("{}", m.warnings.back());
      continue;
    }
    const double sd = std::sqrt(var);
    for (std::size_t r = 0; r < rows; ++r) values[r * cols + g] = (values[r * cols + g] - mean) / sd;
  }
  m.values = Tensor::from(rows, cols, std::move(values));
  return m;
}

ExpressionMatrix load_expression(const std::filesystem::path& path,
                                 const std::vector<std::string>& genes) {
  auto in = open(path);
  return load_expression(in, genes);
}

void check_normalised(const ExpressionMatrix& m, double tolerance) {
  const Tensor& v = m.values;
  for (std::size_t g = 0; g < v.cols(); ++g) {
    double mean = 0.0;
    bool all_zero = true;
    for (std::size_t r = 0; r < v.rows(); ++r) {
      mean += v.at(r, g);
      all_zero = all_zero && v.at(r, g) == 0.0;
    }
    if (all_zero) continue;
    mean /= static_cast<double>(v.rows());
    double var = 0.0;
    for (std::size_t r = 0; r < v.rows(); ++r) var += (v.at(r, g) - mean) * (v.at(r, g) - mean);
    const double sd = std::sqrt(var / static_cast<double>(v.rows()));
    if (std::fabs(mean) > tolerance || std::fabs(sd - 1.0) > tolerance) {
      throw DataError("expression gene '" + m.gene_ids.at(g) + "' is not normalised (mean " +
                      std::to_string(mean) + ", std " + std::to_string(sd) + ")");
    }
  }
}

DiseaseEmbeddings load_disease_embeddings(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  if (!next_line(in, line, line_no)) throw SchemaError("disease embeddings: missing header");
  const auto header = split(line, ',');
  if (header.size() < 2 || header[0] != "disease_id") {
    throw SchemaError("disease embeddings: expected header 'disease_id,v1,...'");
  }
  const std::size_t dim = header.size() - 1;
  DiseaseEmbeddings out;
  std::vector<double> values;
  std::set<std::string> seen;
  while (next_line(in, line, line_no)) {
    const auto f = split(line, ',');
    if (f.size() != header.size() || f[0].empty()) {
      throw ParseError("disease embeddings line " + std::to_string(line_no) + ": malformed row",
                       line_no);
    }
    if (!seen.insert(f[0]).second) throw DataError("disease embeddings: duplicate id '" + f[0] + "'");
    out.ids.push_back(f[0]);
    for (std::size_t c = 1; c < f.size(); ++c) values.push_back(parse_double(f[c], line_no, "embedding value"));
  }
  out.matrix = Tensor::from(out.ids.size(), dim, std::move(values));
  return out;
}

DiseaseEmbeddings load_disease_embeddings(const std::filesystem::path& path) {
  auto in = open(path);
  return load_disease_embeddings(in);
}

PairLoad load_drug_disease(std::istream& in, const DiseaseEmbeddings& embeddings,
                           EntityRegistry& registry) {
  std::string line;
  std::size_t line_no = 0;
  if (!next_line(in, line, line_no)) throw SchemaError("drug-disease table: missing header");
  expect_header(split(line, '\t'), {"drug_id", "disease_id"}, "drug-disease table");
  std::unordered_map<std::string, std::size_t> embedding_row;
  for (std::size_t i = 0; i < embeddings.ids.size(); ++i) embedding_row.emplace(embeddings.ids[i], i);

  PairLoad out;
  std::set<std::pair<std::size_t, std::size_t>> seen;
  std::vector<std::size_t> rows_of_disease;
  while (next_line(in, line, line_no)) {
    const auto f = split(line, '\t');
    if (f.size() != 2 || f[0].empty() || f[1].empty()) {
      throw ParseError("drug-disease table line " + std::to_string(line_no) + ": malformed row",
                       line_no);
    }
    const auto row = embedding_row.find(f[1]);
    if (row == embedding_row.end()) {
      throw ReferenceError("drug-disease table line " + std::to_string(line_no) +
                           ": no embedding for disease '" + f[1] + "'");
    }
    const auto drug = registry.drugs.find(f[0]);
    if (!drug) {
      ++out.dropped;
      continue;
    }
    const bool fresh = !registry.diseases.contains(f[1]);
    const std::size_t disease = registry.diseases.intern(f[1]);
    if (fresh) rows_of_disease.push_back(row->second);
    if (seen.emplace(*drug, disease).second) out.pairs.push_back({*drug, disease});
  }
  const std::size_t dim = embeddings.matrix.defined() ? embeddings.matrix.cols() : 0;
  std::vector<double> values;
  for (std::size_t r : rows_of_disease) {
    for (std::size_t c = 0; c < dim; ++c) values.push_back(embeddings.matrix.at(r, c));
  }
  out.disease_embeddings = Tensor::from(rows_of_disease.size(), dim, std::move(values));
  if (out.dropped > 0) {
    spdlog::warn("dropped {} drug-disease pairs for drugs absent from the synergy data",
                 out.dropped);
  }
  return out;
}

PairLoad load_drug_disease(const std::filesystem::path& path, const DiseaseEmbeddings& embeddings,
                           EntityRegistry& registry) {
  auto in = open(path);
  return load_drug_disease(in, embeddings, registry);
}

nlohmann::json to_json(const DataPaths& paths) {
  nlohmann::json j = {{"synergy", paths.synergy.string()},
                      {"smiles", paths.smiles.string()},
                      {"expression", paths.expression.string()},
                      {"disease_embeddings", paths.disease_embeddings.string()},
                      {"drug_disease", paths.drug_disease.string()}};
  if (!paths.genes.empty()) j["genes"] = paths.genes;
  return j;
}

DataPaths data_paths_from_json(const nlohmann::json& root, const std::filesystem::path& base) {
  const nlohmann::json& j = root.contains("data") ? root.at("data") : root;
  if (!j.is_object()) throw ConfigError("data paths must be a JSON object");
  auto path = [&](const char* key, bool required) -> std::filesystem::path {
    if (!j.contains(key) || j.at(key).is_null() || j.at(key).get<std::string>().empty()) {
      if (required) throw ConfigError(std::string("data: missing field '") + key + "'");
      return {};
    }
    std::filesystem::path p = j.at(key).get<std::string>();
    return p.is_relative() && !base.empty() ? base / p : p;
  };
  DataPaths out;
  out.synergy = path("synergy", true);
  out.smiles = path("smiles", true);
  out.expression = path("expression", true);
  out.disease_embeddings = path("disease_embeddings", false);
  out.drug_disease = path("drug_disease", false);
  if (j.contains("genes")) out.genes = j.at("genes").get<std::vector<std::string>>();
  for (const auto& [key, value] : j.items()) {
    static const std::set<std::string> known = {"synergy",          "smiles",       "expression",
                                                "disease_embeddings", "drug_disease", "genes"};
    if (!known.count(key)) throw ConfigError("data: unknown field '" + key + "'");
  }
  return out;
}

Dataset load_dataset(const DataPaths& paths) {
  Dataset ds;
  const auto smiles = load_smiles_table(paths.smiles);
  std::unordered_map<std::string, std::string> smiles_of;
  std::unordered_set<std::string> known_drugs;
  for (const auto& e : smiles) {
    smiles_of.emplace(e.drug_id, e.smiles);
    known_drugs.insert(e.drug_id);
  }
  auto expression = load_expression(paths.expression, paths.genes);
  std::unordered_set<std::string> known_cells(expression.cell_ids.begin(), expression.cell_ids.end());
  auto synergy = load_synergy(paths.synergy, known_drugs, known_cells, ds.entities);
  ds.samples = std::move(synergy.samples);
  ds.warnings = std::move(synergy.warnings);
  ds.warnings.insert(ds.warnings.end(), expression.warnings.begin(), expression.warnings.end());
  if (ds.samples.empty()) throw DataError("no usable synergy samples in " + paths.synergy.string());

  for (const auto& id : ds.entities.drugs.names()) {
    const std::string& s = smiles_of.at(id);
    try {
      mol::parse_smiles(s);
    } catch (const Error& e) {
      throw DataError("drug '" + id + "': " + e.what());
    }
    ds.smiles.push_back(s);
  }

  std::unordered_map<std::string, std::size_t> expr_row;
  for (std::size_t i = 0; i < expression.cell_ids.size(); ++i) expr_row.emplace(expression.cell_ids[i], i);
  const std::size_t genes = expression.values.cols();
  std::vector<double> values;
  values.reserve(ds.entities.cells.size() * genes);
  for (const auto& id : ds.entities.cells.names()) {
    const std::size_t r = expr_row.at(id);
    for (std::size_t g = 0; g < genes; ++g) values.push_back(expression.values.at(r, g));
  }
  ds.expression = Tensor::from(ds.entities.cells.size(), genes, std::move(values));

  if (!paths.drug_disease.empty()) {
    if (paths.disease_embeddings.empty()) {
      throw ConfigError("data: drug_disease given without disease_embeddings");
    }
    const auto embeddings = load_disease_embeddings(paths.disease_embeddings);
    auto pairs = load_drug_disease(paths.drug_disease, embeddings, ds.entities);
    ds.pairs = std::move(pairs.pairs);
    ds.disease_embeddings = pairs.disease_embeddings;
    if (pairs.dropped > 0) {
      ds.warnings.push_back("dropped " + std::to_string(pairs.dropped) + " drug-disease pairs");
    }
  } else {
    ds.disease_embeddings = Tensor::zeros(0, 0);
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Splits

SplitMode split_mode_from_string(const std::string& name) {
  if (name == "random") return SplitMode::random;
  if (name == "cline") return SplitMode::cline;
  if (name == "drugcomb") return SplitMode::drugcomb;
  if (name == "drugsingle") return SplitMode::drugsingle;
  if (name == "drugdouble") return SplitMode::drugdouble;
  throw UsageError("unknown split mode '" + name +
                   "' (expected random, cline, drugcomb, drugsingle or drugdouble)");
}

std::string to_string(SplitMode mode) {
  switch (mode) {
    case SplitMode::random:
      return "random";
    case SplitMode::cline:
      return "cline";
    case SplitMode::drugcomb:
      return "drugcomb";
    case SplitMode::drugsingle:
      return "drugsingle";
    case SplitMode::drugdouble:
      return "drugdouble";
  }
  return "random";
}

namespace {

// Number of strata held out for the test set. Drug-level modes size the
// held-out drug set so that roughly 10% of samples land in the test set.
std::size_t test_strata(std::size_t strata, SplitMode mode) {
  double fraction = kTestFraction;
  if (mode == SplitMode::drugsingle) fraction = 1.0 - std::sqrt(1.0 - kTestFraction);
  if (mode == SplitMode::drugdouble) fraction = std::sqrt(kTestFraction);
  if (strata <= kFolds) return 0;
  const auto t = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(strata)));
  return std::clamp<std::size_t>(t, 1, strata - kFolds);
}

std::uint64_t pair_key(std::size_t a, std::size_t b) {
  const auto lo = static_cast<std::uint64_t>(std::min(a, b));
  const auto hi = static_cast<std::uint64_t>(std::max(a, b));
  return (lo << 32) | hi;
}

[[noreturn]] void too_few(SplitMode mode, std::size_t strata) {
  throw ConfigError("split mode " + to_string(mode) + " needs at least " + std::to_string(kFolds) +
                    " distinct strata, found " + std::to_string(strata));
}

void check_folds(const SplitPlan& plan) {
  for (std::size_t k = 0; k < plan.folds.size(); ++k) {
    if (plan.folds[k].validation.empty() || plan.folds[k].train.empty()) {
      throw ConfigError("split mode " + to_string(plan.mode) + " leaves fold " + std::to_string(k) +
                        " with an empty " +
                        (plan.folds[k].validation.empty() ? "validation" : "training") +
                        " set; use a different split mode for this data");
    }
  }
}

// Sample-level strata (random / cline / drugcomb): one key per sample.
SplitPlan split_by_key(const std::vector<std::uint64_t>& key, SplitMode mode, Rng& rng) {
  std::vector<std::uint64_t> strata;
  std::unordered_map<std::uint64_t, std::size_t> slot;
  for (auto k : key) {
    if (slot.emplace(k, strata.size()).second) strata.push_back(k);
  }
  if (strata.size() < kFolds) too_few(mode, strata.size());
  std::shuffle(strata.begin(), strata.end(), rng);
  const std::size_t held = test_strata(strata.size(), mode);
  // group: 0..kFolds-1 for folds, kFolds for test.
  std::unordered_map<std::uint64_t, std::size_t> group;
  for (std::size_t i = 0; i < strata.size(); ++i) {
    group[strata[i]] = i < held ? kFolds : (i - held) % kFolds;
  }
  SplitPlan plan;
  plan.mode = mode;
  plan.folds.resize(kFolds);
  for (std::size_t s = 0; s < key.size(); ++s) {
    const std::size_t g = group.at(key[s]);
    if (g == kFolds) {
      plan.test.push_back(s);
      continue;
    }
    for (std::size_t k = 0; k < kFolds; ++k) {
      (k == g ? plan.folds[k].validation : plan.folds[k].train).push_back(s);
    }
  }
  return plan;
}

SplitPlan split_by_drug(const std::vector<SynergySample>& samples, SplitMode mode, Rng& rng) {
  std::set<std::size_t> drug_set;
  for (const auto& s : samples) {
    drug_set.insert(s.drug_a);
    drug_set.insert(s.drug_b);
  }
  std::vector<std::size_t> drugs(drug_set.begin(), drug_set.end());
  if (drugs.size() < kFolds) too_few(mode, drugs.size());
  std::shuffle(drugs.begin(), drugs.end(), rng);
  const std::size_t held = test_strata(drugs.size(), mode);
  std::unordered_map<std::size_t, std::size_t> group;
  for (std::size_t i = 0; i < drugs.size(); ++i) {
    group[drugs[i]] = i < held ? kFolds : (i - held) % kFolds;
  }
  const bool single = mode == SplitMode::drugsingle;
  SplitPlan plan;
  plan.mode = mode;
  plan.folds.resize(kFolds);
  for (std::size_t s = 0; s < samples.size(); ++s) {
    const std::size_t ga = group.at(samples[s].drug_a);
    const std::size_t gb = group.at(samples[s].drug_b);
    const int in_test = (ga == kFolds) + (gb == kFolds);
    if (single ? in_test >= 1 : in_test == 2) {
      plan.test.push_back(s);
      continue;
    }
    if (in_test == 1) {
      plan.discarded.push_back(s);
      continue;
    }
    for (std::size_t k = 0; k < kFolds; ++k) {
      const int held_out = (ga == k) + (gb == k);
      if (single) {
        (held_out >= 1 ? plan.folds[k].validation : plan.folds[k].train).push_back(s);
      } else if (held_out == 2) {
        plan.folds[k].validation.push_back(s);
      } else if (held_out == 0) {
        plan.folds[k].train.push_back(s);
      }
    }
  }
  return plan;
}

}  // namespace

SplitPlan make_split(const std::vector<SynergySample>& samples, SplitMode mode,
                     std::uint64_t seed) {
  Rng rng(seed);
  SplitPlan plan;
  switch (mode) {
    case SplitMode::random:
    case SplitMode::cline:
    case SplitMode::drugcomb: {
      std::vector<std::uint64_t> key(samples.size());
      for (std::size_t i = 0; i < samples.size(); ++i) {
        if (mode == SplitMode::random) key[i] = i;
        if (mode == SplitMode::cline) key[i] = samples[i].cell;
        if (mode == SplitMode::drugcomb) key[i] = pair_key(samples[i].drug_a, samples[i].drug_b);
      }
      plan = split_by_key(key, mode, rng);
      break;
    }
    case SplitMode::drugsingle:
    case SplitMode::drugdouble:
      plan = split_by_drug(samples, mode, rng);
      break;
  }
  plan.seed = seed;
  check_folds(plan);
  return plan;
}

std::vector<SynergySample> tag_samples(const std::vector<SynergySample>& samples,
                                       const SplitPlan& plan, std::size_t fold) {
  std::vector<SynergySample> out = samples;
  for (auto& s : out) s.fold_tag = FoldTag::unassigned;
  for (std::size_t i : plan.test) out.at(i).fold_tag = FoldTag::test;
  const Fold& f = plan.folds.at(fold);
  for (std::size_t i : f.train) out.at(i).fold_tag = FoldTag::train;
  for (std::size_t i : f.validation) out.at(i).fold_tag = FoldTag::validation;
  return out;
}

nlohmann::json to_json(const SplitPlan& plan) {
  nlohmann::json folds = nlohmann::json::array();
  for (const auto& f : plan.folds) folds.push_back({{"train", f.train}, {"validation", f.validation}});
  return {{"format", "hermes-split"},
          {"version", 1},
          {"mode", to_string(plan.mode)},
          {"seed", plan.seed},
          {"test_carve", "stratified-by-mode"},
          {"data_digest", plan.data_digest},
          {"test", plan.test},
          {"discarded", plan.discarded},
          {"folds", folds}};
}

SplitPlan split_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format") != "hermes-split") throw IntegrityError("not a split export");
    if (j.at("version").get<int>() != 1) {
      throw IntegrityError("unsupported split export version " + j.at("version").dump());
    }
    SplitPlan plan;
    plan.mode = split_mode_from_string(j.at("mode").get<std::string>());
    plan.seed = j.at("seed").get<std::uint64_t>();
    plan.data_digest = j.value("data_digest", "");
    plan.test = j.at("test").get<std::vector<std::size_t>>();
    plan.discarded = j.value("discarded", std::vector<std::size_t>{});
    for (const auto& f : j.at("folds")) {
      plan.folds.push_back({f.at("train").get<std::vector<std::size_t>>(),
                            f.at("validation").get<std::vector<std::size_t>>()});
    }
    return plan;
  } catch (const nlohmann::json::exception& e) {
    throw IntegrityError(std::string("malformed split export: ") + e.what());
  }
}

void save_split(const SplitPlan& plan, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  out << to_json(plan).dump(1) << '\n';
}

SplitPlan load_split(const std::filesystem::path& path) {
  auto in = open(path);
  try {
    return split_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw IntegrityError("malformed split export " + path.string() + ": " + e.what());
  }
}

std::string samples_digest(const Dataset& dataset) {
  std::ostringstream os;
  os << std::setprecision(17);
  for (const auto& s : dataset.samples) {
    os << dataset.entities.drugs.name(s.drug_a) << ',' << dataset.entities.drugs.name(s.drug_b)
       << ',' << dataset.entities.cells.name(s.cell) << ',' << s.raw_score << '\n';
  }
  return sha256_hex(os.str());
}

// ---------------------------------------------------------------------------
// Synthetic data

namespace {

constexpr const char* kScaffolds[] = {
    "c1cc({A})ccc1{B}",       "c1cc({A})ncc1{B}", "C1CC({A})CCC1{B}",
    "C1CN({A})CCN1{B}",       "c1ccc2cc({A})ccc2c1{B}", "C1COC({A})C1{B}",
    "c1cc({A})oc1{B}",
};
constexpr const char* kSubstituents[] = {
    "C",  "CC",      "O",       "N",   "OC",  "F",        "Cl",      "Br",
    "CO", "C(=O)O",  "C(=O)N",  "CCN", "C#N", "C(F)(F)F", "NC(=O)C",
};
constexpr const char* kMotifs[] = {"S(=O)(=O)N", "S(=O)(=O)NC", "S(=O)(=O)N(C)C"};

std::string substitute(std::string pattern, const std::string& a, const std::string& b) {
  pattern.replace(pattern.find("{A}"), 3, a);
  pattern.replace(pattern.find("{B}"), 3, b);
  return pattern;
}

std::string label_id(const char* prefix, std::size_t i, std::size_t count) {
  const std::size_t width = std::to_string(count).size();
  std::ostringstream os;
  os << prefix << std::setw(static_cast<int>(width)) << std::setfill('0') << (i + 1);
  return os.str();
}

}  // namespace

SynthData synth_dataset(const SynthSpec& spec, std::uint64_t seed) {
  if (spec.drugs < 2 || spec.cells < 1) throw ConfigError("synthetic data needs >= 2 drugs and >= 1 cell line");
  Rng rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto pick = [&](std::size_t n) { return static_cast<std::size_t>(rng() % n); };
  SynthData out;

  // Drugs: the first motif_fraction of drugs carry the motif.
  const auto carriers = static_cast<std::size_t>(
      std::llround(spec.motif_fraction * static_cast<double>(spec.drugs)));
  std::set<std::string> used;
  std::vector<std::string> drug_ids, smiles;
  for (std::size_t d = 0; d < spec.drugs; ++d) {
    const bool motif = d < carriers;
    std::string s;
    for (int attempt = 0;; ++attempt) {
      if (attempt > 10000) throw ConfigError("synthetic data: too many drugs for the template pool");
      const std::string scaffold = kScaffolds[pick(std::size(kScaffolds))];
      const std::string a = motif ? kMotifs[pick(std::size(kMotifs))]
                                  : kSubstituents[pick(std::size(kSubstituents))];
      s = substitute(scaffold, a, kSubstituents[pick(std::size(kSubstituents))]);
      if (used.insert(s).second) break;
    }
    drug_ids.push_back(label_id("D", d, spec.drugs));
    smiles.push_back(s);
    out.drug_has_motif.push_back(motif);
  }

  // Cell lines: cluster-structured log-expression; responsive clusters first.
  constexpr std::size_t kClusters = 5;
  const auto responsive = static_cast<std::size_t>(
      std::llround(spec.group_fraction * static_cast<double>(kClusters)));
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<std::vector<double>> centre(kClusters, std::vector<double>(spec.genes));
  for (auto& c : centre) {
    for (double& v : c) v = 4.0 + 1.5 * gauss(rng);
  }
  std::ostringstream expr;
  expr << std::setprecision(10) << "cell_line";
  for (std::size_t g = 0; g < spec.genes; ++g) expr << ",G" << (g + 1);
  expr << '\n';
  std::vector<std::string> cell_ids;
  for (std::size_t c = 0; c < spec.cells; ++c) {
    const std::size_t cluster = c % kClusters;
    cell_ids.push_back(label_id("C", c, spec.cells));
    out.cell_in_group.push_back(cluster < responsive);
    expr << cell_ids.back();
    for (std::size_t g = 0; g < spec.genes; ++g) {
      const double level = std::max(0.0, centre[cluster][g] + 0.3 * gauss(rng));
      expr << ',' << std::exp2(level) - 1.0;
    }
    expr << '\n';
  }
  out.expression_csv = expr.str();

  // Diseases and indications: carriers link to the first half of diseases.
  std::ostringstream dis;
  dis << std::setprecision(10) << "disease_id";
  for (std::size_t k = 0; k < spec.disease_dim; ++k) dis << ",v" << (k + 1);
  dis << '\n';
  std::vector<std::string> disease_ids;
  for (std::size_t d = 0; d < spec.diseases; ++d) {
    disease_ids.push_back(label_id("DIS", d, spec.diseases));
    dis << disease_ids.back();
    for (std::size_t k = 0; k < spec.disease_dim; ++k) dis << ',' << gauss(rng);
    dis << '\n';
  }
  out.disease_csv = dis.str();
  std::ostringstream pairs;
  pairs << "drug_id\tdisease_id\n";
  if (spec.diseases > 0) {
    const std::size_t half = std::max<std::size_t>(1, spec.diseases / 2);
    for (std::size_t d = 0; d < spec.drugs; ++d) {
      const std::size_t lo = out.drug_has_motif[d] ? 0 : std::min(half, spec.diseases - 1);
      const std::size_t hi = out.drug_has_motif[d] ? half : spec.diseases;
      const std::size_t first = lo + pick(hi - lo);
      pairs << drug_ids[d] << '\t' << disease_ids[first] << '\n';
      if (unit(rng) < 0.3) {
        const std::size_t second = pick(spec.diseases);
        if (second != first) pairs << drug_ids[d] << '\t' << disease_ids[second] << '\n';
      }
    }
  }
  out.pairs_tsv = pairs.str();

  std::ostringstream smi;
  smi << "drug_id\tsmiles\n";
  for (std::size_t d = 0; d < spec.drugs; ++d) smi << drug_ids[d] << '\t' << smiles[d] << '\n';
  out.smiles_tsv = smi.str();

  // Samples: distinct unordered triples, random drug order.
  std::vector<std::tuple<std::size_t, std::size_t, std::size_t>> triples;
  for (std::size_t a = 0; a < spec.drugs; ++a) {
    for (std::size_t b = a + 1; b < spec.drugs; ++b) {
      for (std::size_t c = 0; c < spec.cells; ++c) triples.emplace_back(a, b, c);
    }
  }
  std::shuffle(triples.begin(), triples.end(), rng);
  triples.resize(std::min(spec.samples, triples.size()));
  std::ostringstream syn;
  syn << std::fixed << std::setprecision(4) << "drug_a,drug_b,cell_line,score\n";
  std::uniform_real_distribution<double> positive(35.0, 90.0);
  std::uniform_real_distribution<double> negative(-50.0, 25.0);
  for (auto [a, b, c] : triples) {
    if (unit(rng) < 0.5) std::swap(a, b);
    const int clean = out.drug_has_motif[a] && out.drug_has_motif[b] && out.cell_in_group[c];
    const bool flip = unit(rng) < spec.noise;
    const int label = flip ? 1 - clean : clean;
    out.flipped += flip;
    out.clean_labels.push_back(clean);
    out.labels.push_back(label);
    const double score = label ? positive(rng) : negative(rng);
    syn << drug_ids[a] << ',' << drug_ids[b] << ',' << cell_ids[c] << ',' << score << '\n';
  }
  out.synergy_csv = syn.str();
  return out;
}

DataPaths write_synth(const SynthData& data, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  auto write = [&](const char* name, const std::string& text) {
    const auto path = dir / name;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out << text;
    return path;
  };
  DataPaths paths;
  paths.synergy = write("synergy.csv", data.synergy_csv);
  paths.smiles = write("smiles.tsv", data.smiles_tsv);
  paths.expression = write("expression.csv", data.expression_csv);
  paths.disease_embeddings = write("disease_embeddings.csv", data.disease_csv);
  paths.drug_disease = write("drug_disease.tsv", data.pairs_tsv);
  return paths;
}

}  // namespace hermes::data
