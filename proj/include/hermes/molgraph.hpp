#pragma once

// SMILES subset parser and a fixed 42-column atom featurization.
//
// Feature layout (column ranges, half-open):
//   [0, 11)   element one-hot          B C N O P S F Cl Br I H
//   [11, 18)  heavy-atom degree 0..6   (clamped at 6)
//   [18, 23)  formal charge -2..+2     (clamped)
//   [23]      aromatic flag
//   [24]      ring membership flag
//   [25, 30)  bracket H count 0..4     (clamped at 4)
//   [30, 42)  bond-kind counts; three columns per kind in the order
//             single, double, triple, aromatic, encoding count 1, 2, >=3.
//             A kind with no attached bond leaves its three columns zero.

#include <array>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "hermes/tensor.hpp"

namespace hermes::mol {

enum class Element { B, C, N, O, P, S, F, Cl, Br, I, H };
inline constexpr std::size_t kElementCount = 11;
inline constexpr std::size_t kFeatureWidth = 42;

std::string_view symbol(Element e);

enum class BondKind { single, double_, triple, aromatic };

struct AtomRecord {
  Element element = Element::C;
  int formal_charge = 0;
  bool aromatic = false;
  bool ring_member = false;
  int explicit_h = 0;
};

struct Bond {
  std::size_t a = 0;
  std::size_t b = 0;
  BondKind kind = BondKind::single;
  bool ring = false;
};

struct MolecularGraph {
  std::vector<AtomRecord> atoms;
  std::vector<Bond> bonds;
  // Non-fatal notes, e.g. ignored stereo markers.
  std::vector<std::string> warnings;

  std::size_t aromatic_atom_count() const;
  std::size_t aromatic_bond_count() const;
  std::size_t degree(std::size_t atom) const;
};

// Parses one single-fragment SMILES string. Throws ParseError (with byte
// offset) on malformed input and UnsupportedFeatureError for elements outside
// the supported set or multi-fragment input.
MolecularGraph parse_smiles(std::string_view smiles);

// numAtoms x 42 feature matrix; see the layout above.
Tensor featurize(const MolecularGraph& graph);

// Symmetric 0/1 matrix with zero diagonal.
Tensor adjacency(const MolecularGraph& graph);

// Per-atom neighbour lists in ascending order.
std::vector<std::vector<std::size_t>> neighbours(const MolecularGraph& graph);

// Returns a copy with atoms relabelled so that new atom i is old atom
// order[i]. Used by tests for permutation invariance checks.
MolecularGraph permute_atoms(const MolecularGraph& graph, const std::vector<std::size_t>& order);

}  // namespace hermes::mol
