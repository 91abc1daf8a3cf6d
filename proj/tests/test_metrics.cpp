#include "doctest.h"

#include <algorithm>
#include <cstdio>

#include "memrl/errors.hpp"
#include "memrl/metrics.hpp"

using namespace memrl;

namespace {

EpisodeOutcome episode(int reward, int retries, const std::string& mode = "learned") {
  EpisodeOutcome o;
  o.task_id = "task-00";
  o.reward = reward;
  o.retries = retries;
  o.first_attempt_success = reward == 1 && retries == 0;
  o.mode = mode;
  return o;
}

}  // namespace

TEST_CASE("hand-counted 4-episode fixture") {
  std::vector<EpisodeOutcome> log = {episode(1, 0), episode(1, 1), episode(1, 2), episode(0, 3)};
  MetricsReport r = aggregate_metrics(log);
  CHECK(r.n_samples == 4);
  CHECK(r.suc == 0.75);
  CHECK(r.pass_at_1 == 0.25);
  REQUIRE(r.avg_re.has_value());
  CHECK(*r.avg_re == 1.0);
}

TEST_CASE("all first-attempt successes") {
  std::vector<EpisodeOutcome> log(5, episode(1, 0));
  MetricsReport r = aggregate_metrics(log);
  CHECK(r.suc == 1.0);
  CHECK(r.pass_at_1 == 1.0);
  CHECK(*r.avg_re == 0.0);
}

TEST_CASE("zero successes leave avg_re undefined, never zero") {
  std::vector<EpisodeOutcome> log = {episode(0, 3), episode(0, 3)};
  MetricsReport r = aggregate_metrics(log);
  CHECK(r.suc == 0.0);
  CHECK(r.pass_at_1 == 0.0);
  CHECK(!r.avg_re.has_value());
  CHECK_THROWS_AS(aggregate_metrics({}), InvalidInputError);
}

TEST_CASE("aggregation is permutation-invariant and pass_at_1 <= suc") {
  Rng rng(3);
  std::vector<EpisodeOutcome> log;
  for (int i = 0; i < 200; ++i) {
    int r = rng.uniform() < 0.7 ? 1 : 0;
    int retries = r == 1 ? rng.uniform_int(4) : 3;
    log.push_back(episode(r, retries, rng.uniform() < 0.5 ? "learned" : "semantic"));
  }
  MetricsReport a = aggregate_metrics(log);
  CHECK(a.pass_at_1 <= a.suc);

  std::vector<EpisodeOutcome> shuffled = log;
  for (std::size_t i = shuffled.size(); i > 1; --i)
    std::swap(shuffled[i - 1], shuffled[static_cast<std::size_t>(rng.uniform_int(static_cast<int>(i)))]);
  MetricsReport b = aggregate_metrics(shuffled);
  CHECK(a.suc == b.suc);
  CHECK(a.pass_at_1 == b.pass_at_1);
  CHECK(a.avg_re == b.avg_re);
}

TEST_CASE("per-mode breakdown") {
  std::vector<EpisodeOutcome> log = {episode(1, 0, "learned"), episode(0, 3, "learned"),
                                     episode(1, 1, "semantic")};
  MetricsReport r = aggregate_metrics(log);
  REQUIRE(r.per_mode.count("learned") == 1);
  REQUIRE(r.per_mode.count("semantic") == 1);
  CHECK(r.per_mode["learned"].n_samples == 2);
  CHECK(r.per_mode["learned"].suc == 0.5);
  CHECK(r.per_mode["semantic"].pass_at_1 == 0.0);
  CHECK(*r.per_mode["semantic"].avg_re == 1.0);
}

TEST_CASE("compare_modes deltas and contract") {
  std::vector<EpisodeOutcome> a_log = {episode(1, 0), episode(1, 1), episode(0, 3),
                                       episode(1, 0)};
  std::vector<EpisodeOutcome> b_log = {episode(1, 2), episode(0, 3), episode(0, 3),
                                       episode(1, 0)};
  MetricsReport a = aggregate_metrics(a_log);
  MetricsReport b = aggregate_metrics(b_log);

  auto rows = compare_modes(a, b);
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].metric == "suc");
  CHECK(*rows[0].delta == doctest::Approx(0.25));
  CHECK(rows[1].metric == "pass_at_1");
  CHECK(*rows[1].delta == doctest::Approx(0.25));

  auto self_rows = compare_modes(a, a);
  for (const auto& row : self_rows)
    if (row.delta) CHECK(*row.delta == 0.0);

  MetricsReport shorter = aggregate_metrics({episode(1, 0)});
  CHECK_THROWS_AS(compare_modes(a, shorter), InvalidComparisonError);
  CHECK_THROWS_AS(compare_modes(a, b, "digest-1", "digest-2"), InvalidComparisonError);

  // Undefined avg_re on one side leaves the delta undefined.
  MetricsReport no_succ = aggregate_metrics({episode(0, 3), episode(0, 3), episode(0, 3),
                                             episode(0, 3)});
  auto rows2 = compare_modes(a, no_succ);
  CHECK(!rows2[2].delta.has_value());
}

TEST_CASE("outcome log round-trip") {
  const char* path = "outcomes_test.jsonl";
  std::vector<EpisodeOutcome> log = {episode(1, 0), episode(0, 3)};
  log[0].selected_case_ids = {"case-001", "case-007"};
  log[0].ranked_skill_ids = {"skill-02"};
  log[0].called_skill_ids = {"skill-02", "skill-02"};
  save_outcome_log(log, path);
  auto reloaded = load_outcome_log(path);
  REQUIRE(reloaded.size() == 2);
  CHECK(reloaded[0].selected_case_ids == log[0].selected_case_ids);
  CHECK(reloaded[0].called_skill_ids == log[0].called_skill_ids);
  CHECK(reloaded[1].reward == 0);
  CHECK(reloaded[1].retries == 3);
  std::remove(path);
  CHECK_THROWS_AS(load_outcome_log("missing_log.jsonl"), IoError);
}
