#include "commands.hpp"

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "hermes/datasets.hpp"
#include "hermes/digest.hpp"
#include "hermes/errors.hpp"
#include "hermes/metrics.hpp"
#include "hermes/molgraph.hpp"
#include "hermes/synergy.hpp"

#ifndef HERMES_GIT_DESCRIBE
#define HERMES_GIT_DESCRIBE "unknown"
#endif

namespace hermes::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

json read_json(const fs::path& path, const char* what) {
  std::ifstream in(path);
  if (!in) throw DataError(std::string("cannot open ") + what + " " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string(what) + " " + path.string() + " is not valid JSON: " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out << text;
}

json digests(const data::DataPaths& paths) {
  json d = json::object();
  for (const fs::path& p : {paths.synergy, paths.smiles, paths.expression, paths.disease_embeddings,
                            paths.drug_disease}) {
    if (!p.empty()) d[fs::absolute(p).lexically_normal().string()] = sha256_file(p);
  }
  return d;
}

class Manifest {
 public:
  Manifest(std::string command, const std::vector<std::string>& argv)
      : doc_({{"command", std::move(command)},
              {"argv", argv},
              {"git_describe", HERMES_GIT_DESCRIBE},
              {"started", timestamp()}}) {}

  json& operator[](const char* key) { return doc_[key]; }

  void add_output(const fs::path& path) { outputs_.push_back(fs::absolute(path).lexically_normal()); }

  void write(const fs::path& path) {
    json outs = json::object();
    for (const auto& p : outputs_) outs[p.string()] = sha256_file(p);
    doc_["outputs"] = outs;
    doc_["finished"] = timestamp();
    write_text(path, doc_.dump(2) + "\n");
  }

 private:
  json doc_;
  std::vector<fs::path> outputs_;
};

std::string number(double x) { return std::isfinite(x) ? fmt::format("{:.10f}", x) : "nan"; }

struct Loaded {
  json config_json;
  data::DataPaths paths;
  Dataset dataset;
};

Loaded load_config_and_data(const fs::path& config_path, std::optional<std::uint64_t> seed) {
  Loaded l;
  l.config_json = read_json(config_path, "config");
  if (!l.config_json.is_object()) throw ConfigError("config must be a JSON object");
  if (!l.config_json.contains("data")) throw ConfigError("config: missing 'data' object");
  if (seed) l.config_json["seed"] = *seed;
  l.paths = data::data_paths_from_json(l.config_json, config_path.parent_path());
  syn::train_config_from_json(l.config_json);  // fail on bad config before touching data
  l.dataset = data::load_dataset(l.paths);
  spdlog::info("loaded {} samples, {} drugs, {} cell lines, {} diseases, {} drug-disease pairs",
               l.dataset.samples.size(), l.dataset.entities.drugs.size(),
               l.dataset.entities.cells.size(), l.dataset.entities.diseases.size(),
               l.dataset.pairs.size());
  return l;
}

json config_echo(const syn::TrainConfig& config, const data::DataPaths& paths) {
  json j = syn::to_json(config);
  json d = data::to_json(paths);
  for (auto& [key, value] : d.items()) {
    if (value.is_string()) value = fs::absolute(value.get<std::string>()).lexically_normal().string();
  }
  j["data"] = d;
  return j;
}

}  // namespace

// ---------------------------------------------------------------------------

int featurize(const FeaturizeOptions& options, const std::vector<std::string>& argv) {
  Manifest manifest("featurize", argv);
  const auto entries = data::load_smiles_table(options.smiles);
  if (entries.empty()) throw DataError("no drugs in " + options.smiles.string());
  std::ostringstream out;
  out << "drug_id\tatoms\tbonds\taromatic_atoms\taromatic_bonds\tfeature_checksum\n";
  std::size_t failures = 0;
  for (const auto& e : entries) {
    try {
      const auto g = mol::parse_smiles(e.smiles);
      for (const auto& w : g.warnings) spdlog::warn("drug {}: {}", e.drug_id, w);
      out << e.drug_id << '\t' << g.atoms.size() << '\t' << g.bonds.size() << '\t'
          << g.aromatic_atom_count() << '\t' << g.aromatic_bond_count() << '\t'
          << feature_checksum(mol::featurize(g)) << '\n';
    } catch (const Error& err) {
      ++failures;
      spdlog::error("drug {}: {}", e.drug_id, err.what());
    }
  }
  write_text(options.out, out.str());
  const std::size_t parsed = entries.size() - failures;
  std::cerr << "parsed " << parsed << "/" << entries.size() << " drugs\n";
  manifest["inputs"] = {{fs::absolute(options.smiles).lexically_normal().string(), sha256_file(options.smiles)}};
  manifest["summary"] = {{"parsed", parsed}, {"failed", failures}};
  manifest.add_output(options.out);
  manifest.write(fs::path(options.out.string() + ".manifest.json"));
  return failures == 0 ? 0 : 1;
}

int train(const TrainOptions& options, const std::vector<std::string>& argv) {
  const auto mode = data::split_mode_from_string(options.mode);
  Manifest manifest("train", argv);
  auto loaded = load_config_and_data(options.config, options.seed);
  for (const auto& a : options.ablate) {
    syn::TrainConfig probe;
    syn::apply_ablation(probe, a);  // rejects unknown names before the config is touched
  }
  syn::TrainConfig config = syn::train_config_from_json(loaded.config_json);
  for (const auto& a : options.ablate) syn::apply_ablation(config, a);

  fs::create_directories(options.out);
  auto plan = data::make_split(loaded.dataset.samples, mode, config.seed);
  plan.data_digest = data::samples_digest(loaded.dataset);
  const auto split_path = options.out / "split.json";
  data::save_split(plan, split_path);
  spdlog::info("split {}: {} test, {} discarded, folds of {} training samples", options.mode,
               plan.test.size(), plan.discarded.size(), plan.folds[0].train.size());

  const auto cv = syn::cross_validate(loaded.dataset, plan, config, options.jobs);

  std::ostringstream csv;
  csv << "mode,fold,auroc,auprc,f1\n";
  for (std::size_t k = 0; k < cv.folds.size(); ++k) {
    const auto& r = cv.folds[k].validation;
    csv << options.mode << ',' << k << ',' << number(r.auroc) << ',' << number(r.auprc) << ','
        << number(r.f1) << '\n';
  }
  const double nan = std::nan("");
  csv << options.mode << ",test," << number(cv.test ? cv.test->auroc : nan) << ','
      << number(cv.test ? cv.test->auprc : nan) << ',' << number(cv.test ? cv.test->f1 : nan)
      << '\n';
  const auto metrics_path = options.out / "metrics.csv";
  write_text(metrics_path, csv.str());

  json reports = json::array();
  for (std::size_t k = 0; k < cv.folds.size(); ++k) {
    auto r = syn::to_json(cv.folds[k].report);
    r["fold"] = k;
    reports.push_back(r);
  }
  const auto reports_path = options.out / "reports.json";
  write_text(reports_path, reports.dump(2) + "\n");

  const auto checkpoint_path = options.out / "checkpoint.bin";
  syn::save_checkpoint(checkpoint_path, cv.folds[cv.best_fold].model,
                       {{"fold", cv.best_fold}, {"mode", options.mode}, {"data_digest", plan.data_digest}});

  const auto config_path = options.out / "config.json";
  write_text(config_path, config_echo(config, loaded.paths).dump(2) + "\n");

  manifest["mode"] = options.mode;
  manifest["seed"] = config.seed;
  manifest["ablate"] = options.ablate;
  manifest["config"] = config_echo(config, loaded.paths);
  manifest["data_digests"] = digests(loaded.paths);
  manifest["best_fold"] = cv.best_fold;
  for (const auto& p : {metrics_path, reports_path, checkpoint_path, split_path, config_path}) {
    manifest.add_output(p);
  }
  manifest.write(options.out / "manifest.json");
  std::cout << csv.str();
  return 0;
}

int gridsearch(const GridOptions& options, const std::vector<std::string>& argv) {
  const auto mode = data::split_mode_from_string(options.mode);
  Manifest manifest("gridsearch", argv);
  const json grid_json = read_json(options.grid, "grid");
  auto loaded = load_config_and_data(options.config, options.seed);
  const syn::TrainConfig base = syn::train_config_from_json(loaded.config_json);
  const auto grid = syn::expand_grid(base, grid_json);
  spdlog::info("grid search over {} configurations", grid.size());

  fs::create_directories(options.out);
  auto plan = data::make_split(loaded.dataset.samples, mode, base.seed);
  plan.data_digest = data::samples_digest(loaded.dataset);
  const auto split_path = options.out / "split.json";
  data::save_split(plan, split_path);

  const auto result = syn::grid_search(loaded.dataset, plan, grid, options.jobs);

  std::vector<std::string> fields;
  for (const auto& [key, values] : grid_json.items()) fields.push_back(key);
  std::ostringstream csv;
  csv << "index";
  for (const auto& f : fields) csv << ',' << f;
  for (std::size_t k = 0; k < plan.folds.size(); ++k) csv << ",fold" << k << "_auroc";
  csv << ",mean_auroc,best\n";
  for (std::size_t g = 0; g < result.rows.size(); ++g) {
    const auto& row = result.rows[g];
    const json cj = syn::to_json(row.config);
    csv << g;
    for (const auto& f : fields) csv << ',' << cj.at(f).dump();
    for (double a : row.fold_auroc) csv << ',' << number(a);
    csv << ',' << number(row.mean_auroc) << ',' << (g == result.best ? "*" : "") << '\n';
  }
  const auto table_path = options.out / "grid.csv";
  write_text(table_path, csv.str());
  const auto best_path = options.out / "best_config.json";
  write_text(best_path, config_echo(result.rows[result.best].config, loaded.paths).dump(2) + "\n");

  manifest["mode"] = options.mode;
  manifest["seed"] = base.seed;
  manifest["config"] = config_echo(base, loaded.paths);
  manifest["grid"] = grid_json;
  manifest["data_digests"] = digests(loaded.paths);
  manifest["best_index"] = result.best;
  for (const auto& p : {table_path, best_path, split_path}) manifest.add_output(p);
  manifest.write(options.out / "manifest.json");
  std::cout << csv.str();
  return 0;
}

namespace {

// mode -> metric -> fold values (test rows excluded).
using MetricTable = std::map<std::string, std::map<std::string, std::vector<double>>>;

MetricTable read_metrics(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open metrics " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != "mode,fold,auroc,auprc,f1") {
    throw SchemaError(path.string() + ": expected header 'mode,fold,auroc,auprc,f1'");
  }
  MetricTable table;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
    if (f.size() != 5) throw ParseError(path.string() + ": malformed row", line_no);
    if (f[1] == "test") continue;
    const char* names[] = {"auroc", "auprc", "f1"};
    for (int m = 0; m < 3; ++m) {
      try {
        table[f[0]][names[m]].push_back(std::stod(f[2 + m]));
      } catch (const std::exception&) {
        throw ParseError(path.string() + ": bad number '" + f[2 + m] + "'", line_no);
      }
    }
  }
  return table;
}

}  // namespace

int eval(const EvalOptions& options) {
  if (!options.compare.empty()) {
    if (options.compare.size() != 2) throw UsageError("--compare takes exactly two metric CSVs");
    const auto a = read_metrics(options.compare[0]);
    const auto b = read_metrics(options.compare[1]);
    std::cout << "mode,metric,mean_a,mean_b,t,p\n";
    for (const auto& [mode, metrics_a] : a) {
      const auto it = b.find(mode);
      if (it == b.end()) {
        spdlog::warn("mode {} only present in {}", mode, options.compare[0].string());
        continue;
      }
      for (const auto& [metric, va] : metrics_a) {
        const auto& vb = it->second.at(metric);
        const auto t = metrics::two_sample_t(va, vb);
        double ma = 0.0, mb = 0.0;
        for (double x : va) ma += x / static_cast<double>(va.size());
        for (double x : vb) mb += x / static_cast<double>(vb.size());
        std::cout << mode << ',' << metric << ',' << number(ma) << ',' << number(mb) << ','
                  << number(t.t) << ',' << number(t.p) << '\n';
      }
    }
    return 0;
  }

  if (options.checkpoint.empty() || options.data.empty() || options.split.empty()) {
    throw UsageError("eval needs --checkpoint, --data and --split (or --compare A B)");
  }
  const auto ckpt = syn::load_checkpoint(options.checkpoint);
  const json data_json = read_json(options.data, "data paths");
  const auto paths = data::data_paths_from_json(data_json, options.data.parent_path());
  const auto dataset = data::load_dataset(paths);
  const auto plan = data::load_split(options.split);
  const std::string digest = data::samples_digest(dataset);
  if (plan.data_digest != digest) {
    throw IntegrityError("split export " + options.split.string() +
                         " does not match the data (digest " + plan.data_digest + " vs " + digest +
                         ")");
  }
  if (ckpt.meta.contains("data_digest") && ckpt.meta.at("data_digest") != digest) {
    throw IntegrityError("checkpoint was trained on different data");
  }
  const std::size_t fold = ckpt.meta.value("fold", std::size_t{0});
  if (ckpt.meta.contains("mode") && ckpt.meta.at("mode") != data::to_string(plan.mode)) {
    throw IntegrityError("checkpoint mode " + ckpt.meta.at("mode").dump() +
                         " does not match split mode " + data::to_string(plan.mode));
  }
  const auto result = syn::evaluate_test(ckpt.model, dataset, plan, fold);
  if (!result) throw DataError("test set is empty or has a single class; nothing to evaluate");
  const json out = {{"mode", data::to_string(plan.mode)},
                    {"fold", fold},
                    {"auroc", result->auroc},
                    {"auprc", result->auprc},
                    {"f1", result->f1},
                    {"threshold", result->threshold},
                    {"tp", result->tp},
                    {"fp", result->fp},
                    {"tn", result->tn},
                    {"fn", result->fn}};
  std::cout << out.dump(2) << '\n';
  return 0;
}

int synth(const SynthOptions& options, const std::vector<std::string>& argv) {
  Manifest manifest("synth", argv);
  data::SynthSpec spec;
  spec.drugs = options.drugs;
  spec.cells = options.cells;
  spec.diseases = options.diseases;
  spec.samples = options.samples;
  spec.noise = options.noise;
  if (!(spec.noise >= 0.0 && spec.noise <= 0.5)) throw UsageError("--noise must lie in [0, 0.5]");
  const auto data = data::synth_dataset(spec, options.seed);
  const auto paths = data::write_synth(data, options.out);
  json config = syn::to_json(syn::TrainConfig{});
  config["seed"] = options.seed;
  config["data"] = {{"synergy", "synergy.csv"},
                    {"smiles", "smiles.tsv"},
                    {"expression", "expression.csv"},
                    {"disease_embeddings", "disease_embeddings.csv"},
                    {"drug_disease", "drug_disease.tsv"}};
  const auto config_path = options.out / "config.json";
  write_text(config_path, config.dump(2) + "\n");
  manifest["seed"] = options.seed;
  manifest["spec"] = {{"drugs", spec.drugs},     {"cells", spec.cells},
                      {"diseases", spec.diseases}, {"samples", spec.samples},
                      {"noise", spec.noise},     {"flipped", data.flipped}};
  for (const fs::path& p : {paths.synergy, paths.smiles, paths.expression,
                            paths.disease_embeddings, paths.drug_disease, config_path}) {
    manifest.add_output(p);
  }
  manifest.write(options.out / "manifest.json");
  std::cerr << "wrote " << data.labels.size() << " samples (" << data.flipped
            << " labels flipped) to " << options.out.string() << '\n';
  return 0;
}

int verify(const fs::path& manifest_path) {
  const json m = read_json(manifest_path, "manifest");
  std::size_t bad = 0;
  for (const char* section : {"data_digests", "inputs", "outputs"}) {
    if (!m.contains(section)) continue;
    for (const auto& [path, digest] : m.at(section).items()) {
      const bool ok = fs::exists(path) && sha256_file(path) == digest.get<std::string>();
      if (!ok) {
        ++bad;
        std::cout << "MISMATCH " << path << '\n';
      }
    }
  }
  if (bad > 0) throw IntegrityError(std::to_string(bad) + " file(s) differ from the manifest");
  std::cout << "ok\n";
  return 0;
}

}  // namespace hermes::cli
