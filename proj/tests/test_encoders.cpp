#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "gradcheck.hpp"
#include "hermes/encoders.hpp"
#include "hermes/errors.hpp"
#include "molfixtures.hpp"
#include "oracles.hpp"

using namespace hermes;
using namespace hermes::enc;
using fixtures::random_smiles;

namespace {

GtnLayerParams random_layer(std::size_t in, std::size_t heads, std::size_t d, Rng& rng) {
  auto p = GtnLayerParams::init(in, heads, d, rng);
  return p;
}

oracle::Matrix adjacency_matrix(const Tensor& adj) { return oracle::to_matrix(adj); }

}  // namespace

TEST_CASE("single atom with identity self map is the identity") {
  Rng rng(1);
  const auto atoms = Tensor::of({{0.3, -0.7, 1.5}});
  GtnLayerParams p = GtnLayerParams::init(3, 1, 3, rng);
  p.w_self = Tensor::identity(3);
  p.activation = Activation::identity;
  Tape tape(false);
  const auto out = gtn_layer(tape, atoms, Tensor::zeros(1, 1), p);
  for (std::size_t c = 0; c < 3; ++c) CHECK(out.at(0, c) == atoms.at(0, c));
  const auto pooled = column_max_pool(tape, out);
  for (std::size_t c = 0; c < 3; ++c) CHECK(pooled.at(0, c) == atoms.at(0, c));
}

TEST_CASE("attention on small graphs") {
  Rng rng(2);
  SUBCASE("one neighbour gets all the weight") {
    const auto atoms = Tensor::of({{1, 2, 0.5}, {1, 2, 0.5}});
    auto p = random_layer(3, 2, 2, rng);
    p.w_key = p.w_query.clone();
    const auto nb = neighbours_from_adjacency(Tensor::of({{0, 1}, {1, 0}}));
    for (std::size_t h = 0; h < 2; ++h) {
      const auto alpha = attention_coefficients(atoms, p, h, nb, AttentionMode::scaled_dot);
      CHECK(alpha.at(0, 1) == 1.0);
      CHECK(alpha.at(1, 0) == 1.0);
      CHECK(alpha.at(0, 0) == 0.0);
    }
  }
  SUBCASE("star with identical leaves splits evenly") {
    const auto g = mol::parse_smiles("CCC");
    const auto atoms = mol::featurize(g);
    const auto p = random_layer(mol::kFeatureWidth, 4, 3, rng);
    const auto nb = mol::neighbours(g);
    for (std::size_t h = 0; h < 4; ++h) {
      const auto alpha = attention_coefficients(atoms, p, h, nb, AttentionMode::scaled_dot);
      CHECK(alpha.at(1, 0) == doctest::Approx(0.5).epsilon(1e-14));
      CHECK(alpha.at(1, 2) == doctest::Approx(0.5).epsilon(1e-14));
    }
    const auto adj = mol::adjacency(g);
    Tape tape(false);
    const auto out = gtn_layer(tape, atoms, adj, p);
    const auto want = oracle::gtn_layer(oracle::to_matrix(atoms), adjacency_matrix(adj),
                                        oracle::to_matrix(p.w_self), oracle::to_matrix(p.w_value),
                                        oracle::to_matrix(p.w_query), oracle::to_matrix(p.w_key), 4, 3,
                                        false);
    CHECK(oracle::max_abs_diff(want, out) < 1e-12);
  }
}

TEST_CASE("gtn layer matches the dense oracle") {
  Rng rng(3);
  const char* smiles[] = {"CC(=O)Oc1ccccc1C(=O)O", "Cn1c(=O)c2c(ncn2C)n(C)c1=O", "C", "CCO",
                          "C1CC1N"};
  for (const char* s : smiles) {
    CAPTURE(s);
    const auto g = mol::parse_smiles(s);
    const auto atoms = mol::featurize(g);
    const auto adj = mol::adjacency(g);
    for (const auto mode : {AttentionMode::scaled_dot, AttentionMode::uniform}) {
      const auto p = random_layer(mol::kFeatureWidth, 4, 5, rng);
      Tape tape(false);
      const auto out = gtn_layer(tape, atoms, adj, p, mode);
      std::vector<oracle::Matrix> alpha;
      const auto want = oracle::gtn_layer(
          oracle::to_matrix(atoms), adjacency_matrix(adj), oracle::to_matrix(p.w_self),
          oracle::to_matrix(p.w_value), oracle::to_matrix(p.w_query), oracle::to_matrix(p.w_key), 4,
          5, mode == AttentionMode::uniform, &alpha);
      CHECK(oracle::max_abs_diff(want, out) < 1e-12);

      const auto nb = mol::neighbours(g);
      for (std::size_t h = 0; h < 4; ++h) {
        const auto coeff = attention_coefficients(atoms, p, h, nb, mode);
        CHECK(oracle::max_abs_diff(alpha[h], coeff) < 1e-12);
        for (std::size_t i = 0; i < coeff.rows(); ++i) {
          double total = 0.0;
          for (std::size_t j = 0; j < coeff.cols(); ++j) {
            if (adj.at(i, j) == 0.0) CHECK(coeff.at(i, j) == 0.0);
            total += coeff.at(i, j);
          }
          if (!nb[i].empty()) CHECK(std::fabs(total - 1.0) < 1e-12);
        }
      }
    }
  }
}

TEST_CASE("uniform and scaled attention agree with one neighbour") {
  Rng rng(4);
  const auto g = mol::parse_smiles("CO");
  const auto atoms = mol::featurize(g);
  const auto adj = mol::adjacency(g);
  const auto p = random_layer(mol::kFeatureWidth, 2, 4, rng);
  Tape tape(false);
  const auto a = gtn_layer(tape, atoms, adj, p, AttentionMode::scaled_dot);
  const auto b = gtn_layer(tape, atoms, adj, p, AttentionMode::uniform);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a.values()[i] == b.values()[i]);
}

TEST_CASE("gtn layer gradients") {
  Rng rng(5);
  const auto g = mol::parse_smiles("CC(N)O");
  REQUIRE(g.atoms.size() == 4);
  const auto atoms = mol::featurize(g);
  const auto nb = mol::neighbours(g);
  const auto p = random_layer(mol::kFeatureWidth, 2, 3, rng);
  const auto weights = gradcheck::random(4, 6, rng, -1, 1, false);
  const auto result = gradcheck::check(
      [&](Tape& t) { return gradcheck::weighted_sum(t, gtn_layer(t, atoms, nb, p), weights); },
      p.parameters());
  INFO(result.where);
  CHECK(result.ok());

  // two stacked layers with pooling, gradient into the input atoms as well
  auto x = gradcheck::random(4, 6, rng);
  const auto l1 = random_layer(6, 2, 3, rng);
  const auto l2 = random_layer(6, 3, 2, rng);
  const auto stacked = gradcheck::check(
      [&](Tape& t) {
        return sum(t, column_max_pool(t, gtn_layer(t, gtn_layer(t, x, nb, l1), nb, l2)));
      },
      {x, l1.w_self, l1.w_value, l1.w_query, l1.w_key, l2.w_self, l2.w_query});
  INFO(stacked.where);
  CHECK(stacked.ok());
}

TEST_CASE("drug embedding is invariant under atom relabelling") {
  std::mt19937_64 rng(6);
  Rng init(7);
  double worst = 0.0;
  for (int m = 0; m < 50; ++m) {
    const std::string s = random_smiles(rng);
    CAPTURE(s);
    const auto g = mol::parse_smiles(s);
    const std::vector<GtnLayerParams> layers = {random_layer(mol::kFeatureWidth, 4, 8, init),
                                                random_layer(32, 4, 8, init)};
    std::vector<std::size_t> order(g.atoms.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    Tape tape(false);
    const auto a = encode_drug(tape, g, layers);
    const auto b = encode_drug(tape, mol::permute_atoms(g, order), layers);
    REQUIRE(a.rows() == 1);
    REQUIRE(a.cols() == 32);
    for (std::size_t c = 0; c < 32; ++c) worst = std::max(worst, std::fabs(a.at(0, c) - b.at(0, c)));
  }
  CHECK(worst < 1e-10);
}

TEST_CASE("methane and ethanol embed differently") {
  Rng rng(8);
  const std::vector<GtnLayerParams> layers = {random_layer(mol::kFeatureWidth, 4, 8, rng),
                                              random_layer(32, 4, 8, rng)};
  Tape tape(false);
  const auto a = encode_drug(tape, mol::parse_smiles("C"), layers);
  const auto b = encode_drug(tape, mol::parse_smiles("CCO"), layers);
  double diff = 0.0;
  for (std::size_t c = 0; c < 32; ++c) diff = std::max(diff, std::fabs(a.at(0, c) - b.at(0, c)));
  CHECK(diff > 1e-6);
}

TEST_CASE("batched encoding equals one molecule at a time") {
  Rng rng(9);
  std::vector<mol::MolecularGraph> graphs;
  for (const char* s : {"C", "CCO", "c1ccccc1O", "CC(=O)N", "O"}) graphs.push_back(mol::parse_smiles(s));
  const std::vector<GtnLayerParams> layers = {random_layer(mol::kFeatureWidth, 2, 4, rng),
                                              random_layer(8, 2, 4, rng)};
  const auto batch = MoleculeBatch::from_graphs(graphs);
  CHECK(batch.molecule_count() == 5);
  Tape tape(false);
  const auto all = encode_drugs(tape, batch, layers);
  REQUIRE(all.rows() == 5);
  for (std::size_t m = 0; m < graphs.size(); ++m) {
    const auto one = encode_drug(tape, graphs[m], layers);
    for (std::size_t c = 0; c < 8; ++c) CHECK(all.at(m, c) == doctest::Approx(one.at(0, c)).epsilon(1e-14));
  }
}

TEST_CASE("segment max pool gradients") {
  std::mt19937_64 rng(10);
  auto x = gradcheck::random(7, 3, rng);
  const std::vector<std::size_t> offsets = {0, 2, 3, 7};
  const auto w = gradcheck::random(3, 3, rng, -1, 1, false);
  const auto result = gradcheck::check(
      [&](Tape& t) { return gradcheck::weighted_sum(t, segment_max_pool(t, x, offsets), w); }, {x});
  CHECK(result.ok());
}

TEST_CASE("mlp encoders") {
  Rng rng(11);
  SUBCASE("identity parameters pass through") {
    MlpParams p;
    p.weights = {Tensor::identity(4)};
    p.biases = {Tensor::zeros(1, 4)};
    p.activations = {Activation::identity};
    const auto x = Tensor::of({{1, -2, 3, 0.5}, {0, 0, 7, -1}});
    Tape tape(false);
    const auto cells = encode_cells(tape, x, {"A", "B"}, p);
    CHECK(cells.kind == EntityKind::cell);
    CHECK(cells.row("A") == 0);
    CHECK(cells.row("B") == 1);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(cells.matrix.values()[i] == x.values()[i]);
    const auto dis = encode_diseases(tape, x, {"d1", "d2"}, p);
    CHECK(dis.kind == EntityKind::disease);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(dis.matrix.values()[i] == x.values()[i]);
    CHECK_THROWS(cells.row("missing"));
  }
  SUBCASE("zero row gives the activated bias") {
    auto p = MlpParams::init({5, 3}, Activation::relu, Activation::sigmoid, rng);
    p.biases[0] = Tensor::of({{-1, 0, 2}});
    Tape tape(false);
    const auto out = mlp_forward(tape, Tensor::zeros(1, 5), p);
    CHECK(out.at(0, 0) == doctest::Approx(oracle::sigmoid(-1)));
    CHECK(out.at(0, 1) == doctest::Approx(0.5));
    CHECK(out.at(0, 2) == doctest::Approx(oracle::sigmoid(2)));
  }
  SUBCASE("constant rows give constant outputs") {
    const auto p = MlpParams::init({4, 6}, Activation::relu, Activation::relu, rng);
    const auto x = Tensor::of({{0.2, 0.4, -1, 3}, {0.2, 0.4, -1, 3}, {0.2, 0.4, -1, 3}});
    Tape tape(false);
    const auto out = encode_diseases(tape, x, {"a", "b", "c"}, p).matrix;
    for (std::size_t r = 1; r < 3; ++r) {
      for (std::size_t c = 0; c < 6; ++c) CHECK(out.at(r, c) == out.at(0, c));
    }
  }
  SUBCASE("dense oracle") {
    std::mt19937_64 gen(12);
    auto p = MlpParams::init({5, 7, 4}, Activation::relu, Activation::tanh, rng);
    p.biases[0] = gradcheck::random(1, 7, gen);
    p.biases[1] = gradcheck::random(1, 4, gen);
    const auto x = gradcheck::random(3, 5, gen, -2, 2, false);
    Tape tape(false);
    const auto out = mlp_forward(tape, x, p);
    auto want = oracle::dense_layer(oracle::to_matrix(x), oracle::to_matrix(p.weights[0]),
                                    oracle::to_matrix(p.biases[0])[0], Activation::relu);
    want = oracle::dense_layer(want, oracle::to_matrix(p.weights[1]), oracle::to_matrix(p.biases[1])[0],
                               Activation::tanh);
    CHECK(oracle::max_abs_diff(want, out) < 1e-12);
  }
  SUBCASE("init chains dimensions with zero biases") {
    const auto p = MlpParams::init({9, 6, 2}, Activation::relu, Activation::identity, rng);
    CHECK(p.in_dim() == 9);
    CHECK(p.out_dim() == 2);
    CHECK(p.weights[1].rows() == 6);
    for (const auto& b : p.biases) {
      for (double v : b.values()) CHECK(v == 0.0);
    }
    CHECK(p.parameters().size() == 4);
  }
  SUBCASE("dimension mismatch") {
    const auto p = MlpParams::init({5, 3}, Activation::relu, Activation::relu, rng);
    Tape tape(false);
    CHECK_THROWS_AS(encode_cells(tape, Tensor::zeros(2, 4), {"a", "b"}, p), DimensionError);
    CHECK_THROWS_AS(encode_diseases(tape, Tensor::zeros(2, 6), {"a", "b"}, p), DimensionError);
  }
}

TEST_CASE("layer shape invariants") {
  Rng rng(13);
  const auto p = GtnLayerParams::init(42, 4, 32, rng);
  CHECK(p.out_dim() == 128);
  CHECK(p.w_query.cols() == 128);
  CHECK(p.w_key.rows() == 42);
  Tape tape(false);
  CHECK_THROWS_AS(gtn_layer(tape, Tensor::zeros(3, 42), Tensor::zeros(2, 2), p), DimensionError);
}
