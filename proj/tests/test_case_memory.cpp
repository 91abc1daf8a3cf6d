#include "doctest.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

#include "memrl/case_memory.hpp"
#include "memrl/errors.hpp"

using namespace memrl;

namespace {

Vector unit_with_cos(double c) {
  Vector v(4);
  v << c, std::sqrt(std::max(0.0, 1.0 - c * c)), 0, 0;
  return v;
}

CaseEntry simple_case(const std::string& id, double cos_to_query, bool success = true) {
  CaseEntry e;
  e.id = id;
  e.index_text = "case " + id;
  e.embedding = unit_with_cos(cos_to_query);
  e.intent = "intent " + id;
  e.trajectory = {{0, "op"}};
  e.outcome = "ok";
  e.success = success;
  return e;
}

StateQuery axis_query() {
  StateQuery s;
  s.query_text = "query";
  s.embedding = Vector::Zero(4);
  s.embedding[0] = 1.0;
  return s;
}

std::vector<Recalled> as_recalled(const std::vector<CaseEntry>& entries,
                                  const StateQuery& state) {
  std::vector<Recalled> out;
  for (const auto& e : entries) out.push_back({e, cosine(state.embedding, e.embedding)});
  return out;
}

}  // namespace

TEST_CASE("add_case and recall: self-similarity, success filter, conflicts") {
  CaseLibrary lib;
  HyperParams hp;
  Vector q = embed_text("bracket with two holes", 16, 7);

  CaseEntry own;
  own.id = "own";
  own.index_text = "bracket with two holes";
  own.embedding = q;
  own.success = true;
  lib.add_case(own);
  lib.add_case([&] {
    CaseEntry e;
    e.id = "other";
    e.index_text = "cylindrical shaft";
    e.embedding = embed_text("cylindrical shaft", 16, 7);
    e.success = true;
    return e;
  }());
  lib.add_case([&] {
    CaseEntry e;
    e.id = "failed";
    e.index_text = "bracket with two holes";
    e.embedding = q;
    e.success = false;
    return e;
  }());

  StateQuery state;
  state.query_text = "bracket with two holes";
  state.embedding = q;
  auto recalled = lib.recall_candidates(state, hp.k0);
  REQUIRE(recalled.size() == 2);  // the failed twin is never recalled
  CHECK(recalled[0].entry.id == "own");
  CHECK(recalled[0].s_sem == doctest::Approx(1.0));
  for (const auto& r : recalled) CHECK(r.entry.success);

  CHECK_THROWS_AS(lib.add_case(own), ConflictError);
}

TEST_CASE("recall ranks by cosine with id tie-break and truncates to k0") {
  CaseLibrary lib;
  lib.add_case(simple_case("mid", 0.5));
  lib.add_case(simple_case("hi", 0.9));
  lib.add_case(simple_case("lo", 0.1));

  auto top2 = lib.recall_candidates(axis_query(), 2);
  REQUIRE(top2.size() == 2);
  CHECK(top2[0].entry.id == "hi");
  CHECK(top2[1].entry.id == "mid");

  // ties broken by id ascending
  lib.add_case(simple_case("hi2", 0.9));
  auto top = lib.recall_candidates(axis_query(), 4);
  CHECK(top[0].entry.id == "hi");
  CHECK(top[1].entry.id == "hi2");

  CaseLibrary seven;
  for (int i = 0; i < 7; ++i) seven.add_case(simple_case("c" + std::to_string(i), 0.1 * i));
  CHECK(seven.recall_candidates(axis_query(), 20).size() == 7);

  CaseLibrary failures;
  failures.add_case(simple_case("f0", 0.9, false));
  CHECK(failures.recall_candidates(axis_query(), 20).empty());
}

TEST_CASE("anneal_alpha endpoints, midpoint, monotonicity") {
  HyperParams hp;
  CHECK(anneal_alpha(0, hp) == 0.9);
  CHECK(anneal_alpha(200, hp) == 0.625);
  CHECK(anneal_alpha(400, hp) == 0.35);
  CHECK(anneal_alpha(10000, hp) == 0.35);
  double prev = anneal_alpha(0, hp);
  for (int t = 1; t <= 500; ++t) {
    double a = anneal_alpha(t, hp);
    CHECK(a <= prev);
    prev = a;
  }
}

TEST_CASE("score_candidates: endpoint arithmetic, degenerate rule, affine invariance") {
  StateQuery state = axis_query();
  std::vector<CaseEntry> entries = {simple_case("a", 1.0), simple_case("b", 0.0)};
  auto candidates = as_recalled(entries, state);

  // Zero-weight net: s_val is flat, so val_norm degenerates to 0.5 for both.
  auto scored = score_candidates(state, candidates, 0.9, nullptr);
  REQUIRE(scored.size() == 2);
  CHECK(scored[0].s_sem_norm == doctest::Approx(1.0));
  CHECK(scored[1].s_sem_norm == doctest::Approx(0.0));
  CHECK(scored[0].s_val_norm == 0.5);
  CHECK(scored[0].fused == doctest::Approx(0.9 * 1.0 + 0.1 * 0.5));

  // Hand-planted normalized values: sem {1,0}, val {0,1}, alpha 0.9.
  std::vector<ScoredCandidate> manual(2);
  manual[0] = {"a", 1.0, 0.0, 1.0, 0.0, 0.9 * 1.0 + 0.1 * 0.0};
  manual[1] = {"b", 0.0, 1.0, 0.0, 1.0, 0.9 * 0.0 + 0.1 * 1.0};
  CHECK(manual[0].fused == doctest::Approx(0.9));
  CHECK(manual[1].fused == doctest::Approx(0.1));

  // All-identical candidates: every normalized score, hence fused, is 0.5.
  std::vector<CaseEntry> same = {simple_case("x", 0.7), simple_case("y", 0.7)};
  auto deg = score_candidates(state, as_recalled(same, state), 0.4, nullptr);
  for (const auto& sc : deg) CHECK(sc.fused == 0.5);

  // Min-max normalization is invariant under x -> 3x + 7 on raw sem scores.
  auto base = as_recalled(entries, state);
  auto shifted = base;
  for (auto& r : shifted) r.s_sem = 3.0 * r.s_sem + 7.0;
  auto s1 = score_candidates(state, base, 0.9, nullptr);
  auto s2 = score_candidates(state, shifted, 0.9, nullptr);
  for (std::size_t i = 0; i < s1.size(); ++i)
    CHECK(s1[i].s_sem_norm == doctest::Approx(s2[i].s_sem_norm).epsilon(1e-12));
}

TEST_CASE("scored candidates satisfy the fused-score identity") {
  StateQuery state = axis_query();
  std::vector<CaseEntry> entries;
  for (int i = 0; i < 8; ++i) entries.push_back(simple_case("c" + std::to_string(i), 0.1 * i));
  ValueNetParams params = init_params(4, 0.1, 9);
  double alpha = 0.62;
  auto scored = score_candidates(state, as_recalled(entries, state), alpha, &params);
  for (const auto& sc : scored) {
    CHECK(std::abs(sc.fused - (alpha * sc.s_sem_norm + (1 - alpha) * sc.s_val_norm)) <= 1e-12);
    CHECK(sc.fused >= 0.0);
    CHECK(sc.fused <= 1.0);
    CHECK(sc.s_val > 0.0);
    CHECK(sc.s_val < 1.0);
  }
}

TEST_CASE("policy_distribution matches a directly evaluated softmax oracle") {
  std::vector<ScoredCandidate> scored(3);
  scored[0].fused = 1.0;
  scored[1].fused = 0.5;
  scored[2].fused = 0.0;
  Vector probs = policy_distribution(scored, 0.8);

  // Independent direct evaluation of exp(f/tau)/sum.
  double w0 = std::exp(1.0 / 0.8), w1 = std::exp(0.5 / 0.8), w2 = std::exp(0.0);
  double z = w0 + w1 + w2;
  CHECK(probs[0] == doctest::Approx(w0 / z).epsilon(1e-12));
  CHECK(probs[1] == doctest::Approx(w1 / z).epsilon(1e-12));
  CHECK(probs[2] == doctest::Approx(w2 / z).epsilon(1e-12));
  CHECK(probs[0] == doctest::Approx(0.5489).epsilon(1e-3));
  CHECK(std::abs(probs.sum() - 1.0) <= 1e-12);

  for (auto& sc : scored) sc.fused = 0.77;
  Vector uniform = policy_distribution(scored, 0.8);
  for (int i = 0; i < 3; ++i) CHECK(uniform[i] == doctest::Approx(1.0 / 3).epsilon(1e-12));

  std::vector<ScoredCandidate> one(1);
  one[0].fused = 0.3;
  CHECK(policy_distribution(one, 0.8)[0] == 1.0);

  CHECK_THROWS_AS(policy_distribution(scored, 0.0), InvalidInputError);
}

TEST_CASE("select_cases: exhaustion, point mass, distinctness") {
  std::vector<ScoredCandidate> scored(3);
  for (int i = 0; i < 3; ++i) scored[static_cast<std::size_t>(i)].case_id = "c" + std::to_string(i);

  Rng rng(4);
  Vector probs = Vector::Constant(3, 1.0 / 3);
  auto all = select_cases(probs, scored, 5, 0.05, rng);
  CHECK(all.size() == 3);
  std::set<std::string> distinct(all.begin(), all.end());
  CHECK(distinct.size() == 3);

  Vector point(3);
  point << 1.0 - 2e-12, 1e-12, 1e-12;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng r(seed);
    auto picked = select_cases(point, scored, 1, 0.0, r);
    REQUIRE(picked.size() == 1);
    CHECK(picked[0] == "c0");
  }
}

TEST_CASE("select_cases single draws track the softmax distribution") {
  std::vector<ScoredCandidate> scored(3);
  scored[0] = {"a", 0, 0, 0, 0, 1.0};
  scored[1] = {"b", 0, 0, 0, 0, 0.5};
  scored[2] = {"c", 0, 0, 0, 0, 0.0};
  Vector probs = policy_distribution(scored, 0.8);

  Rng rng(99);
  int counts[3] = {0, 0, 0};
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    auto pick = select_cases(probs, scored, 1, 0.0, rng);
    counts[pick[0][0] - 'a'] += 1;
  }
  for (int i = 0; i < 3; ++i)
    CHECK(std::abs(static_cast<double>(counts[i]) / n - probs[i]) <= 0.015);
}

TEST_CASE("build_training_samples labeling rules") {
  HyperParams hp;
  std::vector<ScoredCandidate> scored(6);
  for (int i = 0; i < 6; ++i) {
    scored[static_cast<std::size_t>(i)].case_id = "c" + std::to_string(i);
    scored[static_cast<std::size_t>(i)].fused = 0.15 * i;
  }
  Rng rng(12);

  auto failure = build_training_samples({"c0", "c1"}, scored, 0, rng, hp);
  REQUIRE(failure.size() == 2);
  for (const auto& [id, label] : failure) CHECK(label == 0);

  auto success = build_training_samples({"c5"}, scored, 1, rng, hp);
  std::set<std::string> unselected = {"c0", "c1", "c2", "c3", "c4"};
  int positives = 0;
  for (const auto& [id, label] : success) {
    if (label == 1) {
      ++positives;
      CHECK(id == "c5");
    } else {
      CHECK(unselected.count(id) == 1);
    }
  }
  CHECK(positives == 1);
  CHECK(success.size() == 6);  // 1 positive + 5 negatives from the pool

  std::vector<std::string> everything = {"c0", "c1", "c2", "c3", "c4", "c5"};
  auto only_pos = build_training_samples(everything, scored, 1, rng, hp);
  CHECK(only_pos.size() == 6);
  for (const auto& [id, label] : only_pos) CHECK(label == 1);

  CHECK_THROWS_AS(build_training_samples({"zz"}, scored, 1, rng, hp), InvalidInputError);
}

TEST_CASE("negatives come from the bottom of the fused ranking") {
  HyperParams hp;
  hp.n_bottom = 4;
  hp.n_neg = 2;
  std::vector<ScoredCandidate> scored(10);
  for (int i = 0; i < 10; ++i) {
    scored[static_cast<std::size_t>(i)].case_id = "c" + std::to_string(i);
    scored[static_cast<std::size_t>(i)].fused = 0.1 * i;
  }
  // Bottom-4 unselected pool by fused score: c0, c1, c2, c3.
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    auto samples = build_training_samples({"c9"}, scored, 1, rng, hp);
    for (const auto& [id, label] : samples) {
      if (label == 0) {
        int idx = id[1] - '0';
        CHECK(idx <= 3);
      }
    }
  }
}

TEST_CASE("unselected candidates are never labeled positive (randomized)") {
  HyperParams hp;
  Rng rng(777);
  for (int trial = 0; trial < 200; ++trial) {
    int n = 2 + rng.uniform_int(12);
    std::vector<ScoredCandidate> scored(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      scored[static_cast<std::size_t>(i)].case_id = "c" + std::to_string(i);
      scored[static_cast<std::size_t>(i)].fused = rng.uniform();
    }
    int n_sel = 1 + rng.uniform_int(n);
    std::vector<std::string> selected;
    for (int i = 0; i < n_sel; ++i) selected.push_back("c" + std::to_string(i));
    int r = rng.uniform() < 0.5 ? 1 : 0;
    auto samples = build_training_samples(selected, scored, r, rng, hp);
    std::set<std::string> sel_set(selected.begin(), selected.end());
    for (const auto& [id, label] : samples)
      if (label == 1) CHECK(sel_set.count(id) == 1);
  }
}

TEST_CASE("update_from_episode: determinism, counter, numeric failure path") {
  HyperParams hp;
  hp.d = 4;
  StateQuery state = axis_query();
  std::vector<CaseEntry> entries;
  for (int i = 0; i < 6; ++i) entries.push_back(simple_case("c" + std::to_string(i), 0.15 * i));

  auto make_round = [&](const ValueNetParams& params) {
    RetrievalRound round;
    round.state = state;
    round.candidates = as_recalled(entries, state);
    round.alpha = 0.7;
    round.scored = score_candidates(state, round.candidates, round.alpha, &params);
    round.probs = policy_distribution(round.scored, hp.tau_c);
    round.selected = {round.scored[5].case_id, round.scored[4].case_id};
    return round;
  };

  auto replay = [&](std::uint64_t seed) {
    ValueNetParams params = init_params(4, 0.1, 9);
    AdamState adam = init_adam(params);
    std::int64_t t = 0;
    Rng sample_rng(seed), dropout_rng(seed + 1);
    auto round = make_round(params);
    update_from_episode(round, 1, params, adam, t, hp, sample_rng, dropout_rng);
    return std::make_pair(params, t);
  };

  auto [p1, t1] = replay(42);
  auto [p2, t2] = replay(42);
  CHECK(t1 == 1);
  CHECK(t2 == 1);
  CHECK(p1.w1 == p2.w1);
  CHECK(p1.out_w == p2.out_w);

  // Numeric failure: poisoned params produce non-finite grads; the counter
  // still advances and the error propagates.
  ValueNetParams params = init_params(4, 0.1, 9);
  auto round = make_round(params);
  params.w1(0, 0) = std::nan("");
  AdamState adam = init_adam(params);
  std::int64_t t = 5;
  Rng srng(1), drng(2);
  CHECK_THROWS_AS(update_from_episode(round, 0, params, adam, t, hp, srng, drng), NumericError);
  CHECK(t == 6);
}

TEST_CASE("repeated success episodes raise the selected case's value score") {
  HyperParams hp;
  hp.d = 4;
  StateQuery state = axis_query();
  std::vector<CaseEntry> entries;
  for (int i = 0; i < 6; ++i) entries.push_back(simple_case("c" + std::to_string(i), 0.15 * i));
  auto candidates = as_recalled(entries, state);
  Vector z_target = build_features(state.embedding, entries[3].embedding);

  ValueNetParams params = init_params(4, 0.1, 31);
  AdamState adam = init_adam(params);
  std::int64_t t = 0;
  Rng sample_rng(8), dropout_rng(9);

  double first_window = 0.0, last_window = 0.0;
  for (int ep = 0; ep < 100; ++ep) {
    RetrievalRound round;
    round.state = state;
    round.candidates = candidates;
    round.alpha = anneal_alpha(t, hp);
    round.scored = score_candidates(state, round.candidates, round.alpha, &params);
    round.probs = policy_distribution(round.scored, hp.tau_c);
    round.selected = {"c3"};
    update_from_episode(round, 1, params, adam, t, hp, sample_rng, dropout_rng);
    double score = forward(params, z_target);
    if (ep < 10) first_window += score / 10.0;
    if (ep >= 90) last_window += score / 10.0;
  }
  CHECK(last_window > first_window);
  CHECK(last_window > 0.8);
}

TEST_CASE("case store JSONL round-trip preserves recall ordering bit-exactly") {
  const char* path = "case_store_test.jsonl";
  CaseLibrary lib;
  Rng rng(64);
  for (int i = 0; i < 12; ++i) {
    CaseEntry e = simple_case("case" + std::to_string(i), 0.0, i % 4 != 0);
    Vector v(4);
    for (int j = 0; j < 4; ++j) v[j] = rng.gauss();
    e.embedding = v;
    e.created_episode = i;
    lib.add_case(e);
  }
  lib.save(path);
  CaseLibrary reloaded = CaseLibrary::load(path);
  REQUIRE(reloaded.size() == lib.size());
  for (std::size_t i = 0; i < lib.size(); ++i) {
    CHECK(reloaded.entries()[i].id == lib.entries()[i].id);  // insertion order
    CHECK(reloaded.entries()[i].embedding == lib.entries()[i].embedding);  // bitwise
  }
  auto a = lib.recall_candidates(axis_query(), 20);
  auto b = reloaded.recall_candidates(axis_query(), 20);
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].entry.id == b[i].entry.id);
    CHECK(a[i].s_sem == b[i].s_sem);  // bitwise
  }
  std::remove(path);
}
