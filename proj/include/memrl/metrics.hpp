#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "memrl/sim_env.hpp"

namespace memrl {

// Process-stability metrics. avg_re is only defined over the finally
// successful samples; with zero successes it stays empty (never 0).
struct MetricsReport {
  std::int64_t n_samples = 0;
  double suc = 0.0;
  double pass_at_1 = 0.0;
  std::optional<double> avg_re;
  std::map<std::string, MetricsReport> per_mode;  // empty inside breakdowns
};

MetricsReport aggregate_metrics(const std::vector<EpisodeOutcome>& outcomes);

struct ComparisonRow {
  std::string metric;
  std::optional<double> a;
  std::optional<double> b;
  std::optional<double> delta;  // a - b when both defined
};

// Side-by-side deltas per metric. Reports must cover the same number of
// episodes; when both config digests are supplied they must match too.
std::vector<ComparisonRow> compare_modes(const MetricsReport& a, const MetricsReport& b,
                                         const std::string& config_digest_a = "",
                                         const std::string& config_digest_b = "");

std::vector<EpisodeOutcome> load_outcome_log(const std::string& path);
void save_outcome_log(const std::vector<EpisodeOutcome>& outcomes, const std::string& path);

}  // namespace memrl
