#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace hermes::cli {

struct FeaturizeOptions {
  std::filesystem::path smiles;
  std::filesystem::path out;
};

struct TrainOptions {
  std::filesystem::path config;
  std::string mode;
  std::optional<std::uint64_t> seed;
  std::filesystem::path out;
  std::vector<std::string> ablate;
  std::size_t jobs = 1;
};

struct GridOptions {
  std::filesystem::path config;
  std::filesystem::path grid;
  std::string mode;
  std::optional<std::uint64_t> seed;
  std::filesystem::path out;
  std::size_t jobs = 1;
};

struct EvalOptions {
  std::filesystem::path checkpoint;
  std::filesystem::path data;  // JSON holding the data paths (a train config works)
  std::filesystem::path split;
  std::vector<std::filesystem::path> compare;
};

struct SynthOptions {
  std::filesystem::path out;
  std::uint64_t seed = 0;
  std::size_t drugs = 40;
  std::size_t cells = 15;
  std::size_t diseases = 8;
  std::size_t samples = 4000;
  double noise = 0.05;
};

// Each returns the process exit code; errors propagate as exceptions.
int featurize(const FeaturizeOptions& options, const std::vector<std::string>& argv);
int train(const TrainOptions& options, const std::vector<std::string>& argv);
int gridsearch(const GridOptions& options, const std::vector<std::string>& argv);
int eval(const EvalOptions& options);
int synth(const SynthOptions& options, const std::vector<std::string>& argv);
int verify(const std::filesystem::path& manifest);

}  // namespace hermes::cli
