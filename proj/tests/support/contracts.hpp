#pragma once

// Split contracts as a list of violations, shared by the unit and acceptance
// suites.

#include <algorithm>
#include <random>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "hermes/datasets.hpp"

namespace contracts {

using hermes::SynergySample;
using hermes::data::SplitMode;
using hermes::data::SplitPlan;

inline std::vector<SynergySample> random_samples(std::mt19937_64& rng, std::size_t drugs,
                                                 std::size_t cells, std::size_t n) {
  std::uniform_int_distribution<std::size_t> d(0, drugs - 1), c(0, cells - 1);
  std::uniform_real_distribution<double> score(-40, 80);
  std::vector<SynergySample> out;
  while (out.size() < n) {
    SynergySample s;
    s.drug_a = d(rng);
    s.drug_b = d(rng);
    if (s.drug_a == s.drug_b) continue;
    s.cell = c(rng);
    s.raw_score = score(rng);
    s.label = hermes::synergy_label(s.raw_score);
    out.push_back(s);
  }
  return out;
}

namespace detail {

using Set = std::set<std::size_t>;
using Pair = std::pair<std::size_t, std::size_t>;

inline Set as_set(const std::vector<std::size_t>& v) { return {v.begin(), v.end()}; }

inline bool disjoint(const Set& a, const Set& b) {
  return std::none_of(a.begin(), a.end(), [&](std::size_t x) { return b.count(x) > 0; });
}

inline Pair pair_key(const SynergySample& s) {
  return {std::min(s.drug_a, s.drug_b), std::max(s.drug_a, s.drug_b)};
}

inline Set cells_of(const std::vector<std::size_t>& idx, const std::vector<SynergySample>& s) {
  Set out;
  for (auto i : idx) out.insert(s[i].cell);
  return out;
}

inline std::set<Pair> pairs_of(const std::vector<std::size_t>& idx, const std::vector<SynergySample>& s) {
  std::set<Pair> out;
  for (auto i : idx) out.insert(pair_key(s[i]));
  return out;
}

inline Set drugs_of(const std::vector<std::size_t>& idx, const std::vector<SynergySample>& s) {
  Set out;
  for (auto i : idx) {
    out.insert(s[i].drug_a);
    out.insert(s[i].drug_b);
  }
  return out;
}

}  // namespace detail

// Every contract for one plan, checked exhaustively. Empty means the plan is sound.
inline std::vector<std::string> split_violations(const SplitPlan& plan,
                                                 const std::vector<SynergySample>& s) {
  using namespace detail;
  std::vector<std::string> bad;
  auto expect = [&](bool ok, const std::string& what) {
    if (!ok) bad.push_back(what);
  };
  if (plan.folds.size() != hermes::data::kFolds) {
    bad.push_back("fold count " + std::to_string(plan.folds.size()));
    return bad;
  }
  const auto test = as_set(plan.test);
  const auto discarded = as_set(plan.discarded);
  expect(test.size() == plan.test.size(), "duplicate test index");
  expect(disjoint(test, discarded), "test overlaps discarded");
  Set pool;
  for (std::size_t k = 0; k < plan.folds.size(); ++k) {
    const auto& f = plan.folds[k];
    const std::string fold = "fold " + std::to_string(k) + ": ";
    const auto train = as_set(f.train);
    const auto val = as_set(f.validation);
    expect(!train.empty(), fold + "empty training set");
    expect(!val.empty(), fold + "empty validation set");
    expect(disjoint(train, val), fold + "train overlaps validation");
    expect(disjoint(train, test), fold + "train overlaps test");
    expect(disjoint(val, test), fold + "validation overlaps test");
    expect(disjoint(train, discarded) && disjoint(val, discarded), fold + "uses a discarded sample");
    pool.insert(train.begin(), train.end());
    pool.insert(val.begin(), val.end());
    const bool complete = train.size() + val.size() + test.size() == s.size();

    switch (plan.mode) {
      case SplitMode::random:
        expect(complete, fold + "samples missing");
        break;
      case SplitMode::cline: {
        const auto tc = cells_of(f.train, s);
        const auto vc = cells_of(f.validation, s);
        expect(disjoint(tc, vc), fold + "cell line in train and validation");
        const auto xc = cells_of(plan.test, s);
        expect(disjoint(tc, xc) && disjoint(vc, xc), fold + "test cell line seen in CV");
        expect(complete, fold + "samples missing");
        break;
      }
      case SplitMode::drugcomb: {
        const auto tp = pairs_of(f.train, s);
        const auto vp = pairs_of(f.validation, s);
        const auto xp = pairs_of(plan.test, s);
        for (const auto& p : vp) expect(tp.count(p) == 0, fold + "pair in train and validation");
        for (const auto& p : xp) expect(tp.count(p) == 0 && vp.count(p) == 0, fold + "test pair seen in CV");
        expect(complete, fold + "samples missing");
        break;
      }
      case SplitMode::drugsingle: {
        const auto td = drugs_of(f.train, s);
        for (auto i : f.validation) {
          expect(td.count(s[i].drug_a) == 0 || td.count(s[i].drug_b) == 0,
                 fold + "validation pair with both drugs seen");
        }
        expect(complete, fold + "samples missing");
        break;
      }
      case SplitMode::drugdouble: {
        const auto td = drugs_of(f.train, s);
        for (auto i : f.validation) {
          expect(td.count(s[i].drug_a) == 0 && td.count(s[i].drug_b) == 0,
                 fold + "validation pair with a seen drug");
        }
        break;
      }
    }
  }
  // test drugs never reach the CV pool in the drug-level modes
  if (plan.mode == SplitMode::drugsingle || plan.mode == SplitMode::drugdouble) {
    const std::vector<std::size_t> pool_idx(pool.begin(), pool.end());
    const auto pd = drugs_of(pool_idx, s);
    const int need = plan.mode == SplitMode::drugsingle ? 1 : 2;
    for (auto i : plan.test) {
      const int unseen = (pd.count(s[i].drug_a) == 0) + (pd.count(s[i].drug_b) == 0);
      expect(unseen >= need, "test sample " + std::to_string(i) + " has too few unseen drugs");
    }
  }
  expect(disjoint(pool, test), "CV pool overlaps test");
  expect(pool.size() + test.size() + discarded.size() == s.size(), "coverage");
  if (plan.mode != SplitMode::drugdouble) expect(discarded.empty(), "discarded outside drugdouble");
  return bad;
}

inline constexpr SplitMode kModes[] = {SplitMode::random, SplitMode::cline, SplitMode::drugcomb,
                                       SplitMode::drugsingle, SplitMode::drugdouble};

}  // namespace contracts
