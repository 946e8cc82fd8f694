// hermes: drug synergy prediction on a dual-relationship hypergraph.
//
// Exit codes: 0 success, 1 data/runtime error, 2 usage or configuration error.

#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "commands.hpp"
#include "hermes/errors.hpp"

namespace {

constexpr int kExitData = 1;
constexpr int kExitUsage = 2;

}  // namespace

int main(int argc, char** argv) {
#if defined(__GLIBC__)
  // Tape buffers are large and short-lived; keep them off mmap.
  mallopt(M_MMAP_THRESHOLD, 256 << 20);
  mallopt(M_TRIM_THRESHOLD, 512 << 20);
#endif
  const std::vector<std::string> args(argv, argv + argc);
  auto logger = spdlog::stderr_color_mt("hermes");
  spdlog::set_default_logger(logger);
  spdlog::set_pattern("[%H:%M:%S] [%^%l%$] %v");

  CLI::App app{"Drug synergy prediction with graph transformers and a dual-relationship hypergraph"};
  app.require_subcommand(1);
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "Debug logging");

  hermes::cli::FeaturizeOptions feat;
  auto* featurize = app.add_subcommand("featurize", "Parse a SMILES table and summarise each molecule");
  featurize->add_option("--smiles", feat.smiles, "SMILES TSV (drug_id, smiles)")->required();
  featurize->add_option("--out", feat.out, "Summary TSV to write")->required();

  hermes::cli::TrainOptions tr;
  const std::vector<std::string> modes = {"random", "cline", "drugcomb", "drugsingle", "drugdouble"};
  auto* train = app.add_subcommand("train", "5-fold cross-validation plus held-out test evaluation");
  train->add_option("--config", tr.config, "JSON config with training fields and a data object")
      ->required()
      ->check(CLI::ExistingFile);
  train->add_option("--mode", tr.mode, "Split mode")->required()->check(CLI::IsMember(modes));
  train->add_option("--seed", tr.seed, "Seed (overrides the config)");
  train->add_option("--out", tr.out, "Output directory")->required();
  train->add_option("--ablate", tr.ablate,
                    "no_transformer, no_disease, no_residual or plain_residual (repeatable)")
      ->check(CLI::IsMember({"no_transformer", "no_disease", "no_residual", "plain_residual"}));
  train->add_option("--jobs", tr.jobs, "Folds trained concurrently")->check(CLI::PositiveNumber);

  hermes::cli::GridOptions gr;
  auto* grid = app.add_subcommand("gridsearch", "Cross-validated grid search");
  grid->add_option("--config", gr.config, "Base config")->required()->check(CLI::ExistingFile);
  grid->add_option("--grid", gr.grid, "JSON object: field -> list of values")
      ->required()
      ->check(CLI::ExistingFile);
  grid->add_option("--mode", gr.mode, "Split mode")->required()->check(CLI::IsMember(modes));
  grid->add_option("--seed", gr.seed, "Seed (overrides the config)");
  grid->add_option("--out", gr.out, "Output directory")->required();
  grid->add_option("--jobs", gr.jobs, "Runs trained concurrently")->check(CLI::PositiveNumber);

  hermes::cli::EvalOptions ev;
  auto* eval = app.add_subcommand("eval", "Re-evaluate a checkpoint on its test set, or compare runs");
  eval->add_option("--checkpoint", ev.checkpoint, "Checkpoint from train");
  eval->add_option("--data", ev.data, "JSON holding the data paths (a train config works)");
  eval->add_option("--split", ev.split, "Split export from train");
  eval->add_option("--compare", ev.compare, "Two metric CSVs; Welch t-test per mode and metric")
      ->expected(2);

  hermes::cli::SynthOptions sy;
  auto* synth = app.add_subcommand("synth", "Write a synthetic dataset with a planted rule");
  synth->add_option("--out", sy.out, "Output directory")->required();
  synth->add_option("--seed", sy.seed, "Seed");
  synth->add_option("--drugs", sy.drugs, "Number of drugs");
  synth->add_option("--cells", sy.cells, "Number of cell lines");
  synth->add_option("--diseases", sy.diseases, "Number of diseases");
  synth->add_option("--samples", sy.samples, "Number of synergy rows");
  synth->add_option("--noise", sy.noise, "Label flip probability");

  std::string manifest;
  auto* verify = app.add_subcommand("verify", "Recompute the digests recorded in a manifest");
  verify->add_option("manifest", manifest, "manifest.json")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitUsage;
  }
  if (verbose) spdlog::set_level(spdlog::level::debug);

  try {
    if (*featurize) return hermes::cli::featurize(feat, args);
    if (*train) return hermes::cli::train(tr, args);
    if (*grid) return hermes::cli::gridsearch(gr, args);
    if (*eval) return hermes::cli::eval(ev);
    if (*synth) return hermes::cli::synth(sy, args);
    if (*verify) return hermes::cli::verify(manifest);
  } catch (const hermes::UsageError& e) {
    spdlog::error("{}", e.what());
    return kExitUsage;
  } catch (const hermes::ConfigError& e) {
    spdlog::error("{}", e.what());
    return kExitUsage;
  } catch (const std::exception& e) {
    spdlog::error("{}", e.what());
    return kExitData;
  }
  return kExitUsage;
}
