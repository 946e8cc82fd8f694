#include "hermes/molgraph.hpp"

#include <algorithm>
#include <cctype>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <utility>

#include "hermes/errors.hpp"

namespace hermes::mol {

namespace {

constexpr std::array<std::string_view, kElementCount> kSymbols = {"B", "C",  "N",  "O", "P", "S",
                                                                  "F", "Cl", "Br", "I", "H"};

std::optional<Element> element_from_symbol(std::string_view s) {
  for (std::size_t i = 0; i < kSymbols.size(); ++i) {
    if (kSymbols[i] == s) return static_cast<Element>(i);
  }
  return std::nullopt;
}

bool aromatic_capable(Element e) {
  switch (e) {
    case Element::B:
    case Element::C:
    case Element::N:
    case Element::O:
    case Element::P:
    case Element::S:
      return true;
    default:
      return false;
  }
}

class Parser {
 public:
  explicit Parser(std::string_view text) : s_(text) {}

  MolecularGraph run() {
    if (s_.empty()) throw ParseError("empty SMILES", 0);
    for (unsigned char ch : s_) {
      if (ch > 127) throw ParseError("non-ASCII byte in SMILES", 0);
    }
    while (pos_ < s_.size()) step();
    if (!branches_.empty()) throw ParseError("unbalanced '('", branches_.back().second);
    if (!rings_.empty()) {
      throw ParseError("unclosed ring bond " + std::to_string(rings_.begin()->first),
                       rings_.begin()->second.position);
    }
    if (pending_) throw ParseError("dangling bond at end of input", pending_pos_);
    if (g_.atoms.empty()) throw ParseError("no atoms", 0);
    mark_rings();
    return std::move(g_);
  }

 private:
  struct OpenRing {
    std::size_t atom;
    std::optional<BondKind> bond;
    std::size_t position;
  };

  void step() {
    const char ch = s_[pos_];
    switch (ch) {
      case '(':
        if (prev_ == kNone) throw ParseError("branch without a preceding atom", pos_);
        if (pending_) throw ParseError("bond symbol before '('", pos_);
        branches_.emplace_back(prev_, pos_);
        ++pos_;
        branch_opened_ = true;
        return;
      case ')':
        if (branches_.empty()) throw ParseError("unbalanced ')'", pos_);
        if (branch_opened_) throw ParseError("empty branch", pos_);
        if (pending_) throw ParseError("dangling bond before ')'", pos_);
        prev_ = branches_.back().first;
        branches_.pop_back();
        ++pos_;
        return;
      case '-':
        set_bond(BondKind::single);
        return;
      case '=':
        set_bond(BondKind::double_);
        return;
      case '#':
        set_bond(BondKind::triple);
        return;
      case ':':
        set_bond(BondKind::aromatic);
        return;
      case '/':
      case '\\':
        warn("directional bond '" + std::string(1, ch) + "' ignored");
        set_bond(BondKind::single);
        return;
      case '.':
        throw UnsupportedFeatureError("multi-fragment SMILES ('.') at " + std::to_string(pos_));
      case '[':
        bracket_atom();
        return;
      case '%':
        ring_closure();
        return;
      default:
        break;
    }
    if (std::isdigit(static_cast<unsigned char>(ch))) {
      ring_closure();
      return;
    }
    if (std::isalpha(static_cast<unsigned char>(ch))) {
      organic_atom();
      return;
    }
    throw ParseError(std::string("unexpected character '") + ch + "'", pos_);
  }

  void set_bond(BondKind kind) {
    if (pending_) throw ParseError("two consecutive bond symbols", pos_);
    if (prev_ == kNone) throw ParseError("bond without a preceding atom", pos_);
    pending_ = kind;
    pending_pos_ = pos_;
    ++pos_;
  }

  void warn(std::string message) {
    if (std::find(g_.warnings.begin(), g_.warnings.end(), message) == g_.warnings.end()) {
      g_.warnings.push_back(std::move(message));
    }
  }

  void organic_atom() {
    const std::size_t start = pos_;
    const char ch = s_[pos_];
    AtomRecord atom;
    if (ch == 'C' && pos_ + 1 < s_.size() && s_[pos_ + 1] == 'l') {
      atom.element = Element::Cl;
      pos_ += 2;
    } else if (ch == 'B' && pos_ + 1 < s_.size() && s_[pos_ + 1] == 'r') {
      atom.element = Element::Br;
      pos_ += 2;
    } else if (std::islower(static_cast<unsigned char>(ch))) {
      const auto e = element_from_symbol(std::string(1, static_cast<char>(std::toupper(ch))));
      if (!e || !aromatic_capable(*e)) {
        throw UnsupportedFeatureError(std::string("unsupported aromatic atom '") + ch + "' at " +
                                      std::to_string(start));
      }
      atom.element = *e;
      atom.aromatic = true;
      ++pos_;
    } else {
      const auto e = element_from_symbol(std::string(1, ch));
      if (!e || *e == Element::H) {
        throw UnsupportedFeatureError(std::string("unsupported organic-subset atom '") + ch +
                                      "' at " + std::to_string(start));
      }
      atom.element = *e;
      ++pos_;
    }
    add_atom(atom);
  }

  int read_number() {
    int value = 0;
    while (pos_ < s_.size() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) {
      value = value * 10 + (s_[pos_] - '0');
      ++pos_;
    }
    return value;
  }

  void bracket_atom() {
    const std::size_t open = pos_;
    ++pos_;
    auto at_end = [&] { return pos_ >= s_.size(); };
    if (at_end()) throw ParseError("unterminated bracket atom", open);
    read_number();  // isotope, ignored
    if (at_end()) throw ParseError("unterminated bracket atom", open);

    AtomRecord atom;
    const char ch = s_[pos_];
    if (std::isupper(static_cast<unsigned char>(ch))) {
      std::string sym(1, ch);
      ++pos_;
      if (!at_end() && std::islower(static_cast<unsigned char>(s_[pos_]))) sym += s_[pos_++];
      const auto e = element_from_symbol(sym);
      if (!e) {
        throw UnsupportedFeatureError("unsupported element '" + sym + "' at " +
                                      std::to_string(open + 1));
      }
      atom.element = *e;
    } else if (std::islower(static_cast<unsigned char>(ch))) {
      std::string sym(1, static_cast<char>(std::toupper(ch)));
      ++pos_;
      if (!at_end() && std::islower(static_cast<unsigned char>(s_[pos_]))) {
        throw UnsupportedFeatureError("unsupported aromatic element '" + std::string(1, ch) +
                                      s_[pos_] + "' at " + std::to_string(open + 1));
      }
      const auto e = element_from_symbol(sym);
      if (!e || !aromatic_capable(*e)) {
        throw UnsupportedFeatureError("unsupported aromatic element '" + std::string(1, ch) +
                                      "' at " + std::to_string(open + 1));
      }
      atom.element = *e;
      atom.aromatic = true;
    } else {
      throw ParseError("expected element symbol in bracket atom", pos_);
    }

    if (!at_end() && s_[pos_] == '@') {
      warn("chirality marker ignored");
      while (!at_end() && s_[pos_] == '@') ++pos_;
      // @TH1, @AL2, @SP3, @TB10, @OH25
      if (pos_ + 1 < s_.size() && std::isupper(static_cast<unsigned char>(s_[pos_])) &&
          std::isupper(static_cast<unsigned char>(s_[pos_ + 1])) && s_[pos_] != 'H') {
        pos_ += 2;
        read_number();
      }
    }
    if (!at_end() && s_[pos_] == 'H') {
      ++pos_;
      atom.explicit_h = 1;
      if (!at_end() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) {
        atom.explicit_h = read_number();
      }
    }
    if (!at_end() && (s_[pos_] == '+' || s_[pos_] == '-')) {
      const char sign = s_[pos_];
      const int unit = sign == '+' ? 1 : -1;
      ++pos_;
      int magnitude = 1;
      if (!at_end() && std::isdigit(static_cast<unsigned char>(s_[pos_]))) {
        magnitude = read_number();
      } else {
        while (!at_end() && s_[pos_] == sign) {
          ++magnitude;
          ++pos_;
        }
      }
      atom.formal_charge = unit * magnitude;
      if (atom.formal_charge < -4 || atom.formal_charge > 4) {
        throw ParseError("formal charge out of range [-4, 4]", open);
      }
    }
    if (!at_end() && s_[pos_] == ':') {
      ++pos_;
      read_number();  // atom class, ignored
    }
    if (at_end() || s_[pos_] != ']') throw ParseError("unterminated bracket atom", open);
    ++pos_;
    add_atom(atom);
  }

  void ring_closure() {
    const std::size_t start = pos_;
    if (prev_ == kNone) throw ParseError("ring bond without a preceding atom", start);
    int label = 0;
    if (s_[pos_] == '%') {
      ++pos_;
      if (pos_ + 1 >= s_.size() || !std::isdigit(static_cast<unsigned char>(s_[pos_])) ||
          !std::isdigit(static_cast<unsigned char>(s_[pos_ + 1]))) {
        throw ParseError("'%' must be followed by two digits", start);
      }
      label = (s_[pos_] - '0') * 10 + (s_[pos_ + 1] - '0');
      pos_ += 2;
    } else {
      label = s_[pos_] - '0';
      ++pos_;
    }
    const auto it = rings_.find(label);
    if (it == rings_.end()) {
      rings_[label] = OpenRing{prev_, pending_, start};
    } else {
      const OpenRing open = it->second;
      rings_.erase(it);
      if (open.atom == prev_) throw ParseError("ring bond closes on its own atom", start);
      if (open.bond && pending_ && *open.bond != *pending_) {
        throw ParseError("conflicting ring bond symbols", start);
      }
      const std::optional<BondKind> kind = pending_ ? pending_ : open.bond;
      connect(open.atom, prev_, kind, start);
    }
    pending_.reset();
  }

  void add_atom(const AtomRecord& atom) {
    g_.atoms.push_back(atom);
    const std::size_t index = g_.atoms.size() - 1;
    if (prev_ != kNone) connect(prev_, index, pending_, pos_);
    pending_.reset();
    prev_ = index;
    branch_opened_ = false;
  }

  void connect(std::size_t a, std::size_t b, std::optional<BondKind> kind, std::size_t where) {
    for (const auto& bond : g_.bonds) {
      if ((bond.a == a && bond.b == b) || (bond.a == b && bond.b == a)) {
        throw ParseError("duplicate bond between atoms " + std::to_string(a) + " and " +
                             std::to_string(b),
                         where);
      }
    }
    Bond bond{a, b, BondKind::single, false};
    if (kind) {
      bond.kind = *kind;
      explicit_.push_back(true);
    } else {
      bond.kind = g_.atoms[a].aromatic && g_.atoms[b].aromatic ? BondKind::aromatic
                                                               : BondKind::single;
      explicit_.push_back(false);
    }
    g_.bonds.push_back(bond);
  }

  // Bridge detection: a bond lies on a cycle iff it is not a bridge.
  void mark_rings() {
    const std::size_t n = g_.atoms.size();
    std::vector<std::vector<std::pair<std::size_t, std::size_t>>> adj(n);
    for (std::size_t i = 0; i < g_.bonds.size(); ++i) {
      adj[g_.bonds[i].a].emplace_back(g_.bonds[i].b, i);
      adj[g_.bonds[i].b].emplace_back(g_.bonds[i].a, i);
    }
    std::vector<std::size_t> order(n, kNone);
    std::vector<std::size_t> low(n, 0);
    std::vector<bool> bridge(g_.bonds.size(), false);
    std::size_t counter = 0;
    std::function<void(std::size_t, std::size_t)> dfs = [&](std::size_t v, std::size_t via) {
      order[v] = low[v] = counter++;
      for (const auto& [w, edge] : adj[v]) {
        if (edge == via) continue;
        if (order[w] == kNone) {
          dfs(w, edge);
          low[v] = std::min(low[v], low[w]);
          if (low[w] > order[v]) bridge[edge] = true;
        } else {
          low[v] = std::min(low[v], order[w]);
        }
      }
    };
    for (std::size_t v = 0; v < n; ++v) {
      if (order[v] == kNone) dfs(v, kNone);
    }
    for (std::size_t i = 0; i < g_.bonds.size(); ++i) {
      Bond& bond = g_.bonds[i];
      bond.ring = !bridge[i];
      if (bond.ring) {
        g_.atoms[bond.a].ring_member = true;
        g_.atoms[bond.b].ring_member = true;
      } else if (!explicit_[i] && bond.kind == BondKind::aromatic) {
        // Implicit bond between aromatic atoms of different rings.
        bond.kind = BondKind::single;
      }
    }
  }

  static constexpr std::size_t kNone = static_cast<std::size_t>(-1);

  std::string_view s_;
  std::size_t pos_ = 0;
  MolecularGraph g_;
  std::size_t prev_ = kNone;
  std::optional<BondKind> pending_;
  std::size_t pending_pos_ = 0;
  bool branch_opened_ = false;
  std::vector<std::pair<std::size_t, std::size_t>> branches_;  // (atom, position)
  std::map<int, OpenRing> rings_;
  std::vector<bool> explicit_;
};

}  // namespace

std::string_view symbol(Element e) { return kSymbols[static_cast<std::size_t>(e)]; }

std::size_t MolecularGraph::aromatic_atom_count() const {
  return static_cast<std::size_t>(
      std::count_if(atoms.begin(), atoms.end(), [](const AtomRecord& a) { return a.aromatic; }));
}

std::size_t MolecularGraph::aromatic_bond_count() const {
  return static_cast<std::size_t>(std::count_if(
      bonds.begin(), bonds.end(), [](const Bond& b) { return b.kind == BondKind::aromatic; }));
}

std::size_t MolecularGraph::degree(std::size_t atom) const {
  return static_cast<std::size_t>(std::count_if(
      bonds.begin(), bonds.end(), [&](const Bond& b) { return b.a == atom || b.b == atom; }));
}

MolecularGraph parse_smiles(std::string_view smiles) { return Parser(smiles).run(); }

Tensor featurize(const MolecularGraph& graph) {
  const std::size_t n = graph.atoms.size();
  Tensor out = Tensor::zeros(n, kFeatureWidth);
  std::vector<std::array<int, 4>> kind_counts(n, {0, 0, 0, 0});
  std::vector<std::size_t> degree(n, 0);
  for (const auto& bond : graph.bonds) {
    ++degree[bond.a];
    ++degree[bond.b];
    ++kind_counts[bond.a][static_cast<std::size_t>(bond.kind)];
    ++kind_counts[bond.b][static_cast<std::size_t>(bond.kind)];
  }
  for (std::size_t i = 0; i < n; ++i) {
    const AtomRecord& atom = graph.atoms[i];
    out.at(i, static_cast<std::size_t>(atom.element)) = 1.0;
    out.at(i, 11 + std::min<std::size_t>(degree[i], 6)) = 1.0;
    out.at(i, 18 + static_cast<std::size_t>(std::clamp(atom.formal_charge, -2, 2) + 2)) = 1.0;
    out.at(i, 23) = atom.aromatic ? 1.0 : 0.0;
    out.at(i, 24) = atom.ring_member ? 1.0 : 0.0;
    out.at(i, 25 + static_cast<std::size_t>(std::clamp(atom.explicit_h, 0, 4))) = 1.0;
    for (std::size_t kind = 0; kind < 4; ++kind) {
      const int count = kind_counts[i][kind];
      if (count > 0) out.at(i, 30 + kind * 3 + static_cast<std::size_t>(std::min(count, 3) - 1)) = 1.0;
    }
  }
  return out;
}

Tensor adjacency(const MolecularGraph& graph) {
  const std::size_t n = graph.atoms.size();
  Tensor out = Tensor::zeros(n, n);
  for (const auto& bond : graph.bonds) {
    out.at(bond.a, bond.b) = 1.0;
    out.at(bond.b, bond.a) = 1.0;
  }
  return out;
}

std::vector<std::vector<std::size_t>> neighbours(const MolecularGraph& graph) {
  std::vector<std::vector<std::size_t>> out(graph.atoms.size());
  for (const auto& bond : graph.bonds) {
    out[bond.a].push_back(bond.b);
    out[bond.b].push_back(bond.a);
  }
  for (auto& list : out) std::sort(list.begin(), list.end());
  return out;
}

MolecularGraph permute_atoms(const MolecularGraph& graph, const std::vector<std::size_t>& order) {
  if (order.size() != graph.atoms.size()) {
    throw DimensionError("permute_atoms: order has wrong length");
  }
  std::vector<std::size_t> new_index(order.size());
  MolecularGraph out;
  out.warnings = graph.warnings;
  for (std::size_t i = 0; i < order.size(); ++i) {
    out.atoms.push_back(graph.atoms.at(order[i]));
    new_index[order[i]] = i;
  }
  for (const auto& bond : graph.bonds) {
    out.bonds.push_back(Bond{new_index[bond.a], new_index[bond.b], bond.kind, bond.ring});
  }
  return out;
}

}  // namespace hermes::mol
