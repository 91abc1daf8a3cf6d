#include "memrl/metrics.hpp"

#include <fstream>

#include "memrl/errors.hpp"

namespace memrl {

namespace {

MetricsReport aggregate_flat(const std::vector<const EpisodeOutcome*>& outcomes) {
  MetricsReport r;
  r.n_samples = static_cast<std::int64_t>(outcomes.size());
  std::int64_t successes = 0, first_pass = 0, retries_over_successes = 0;
  for (const auto* o : outcomes) {
    if (o->reward == 1) {
      ++successes;
      retries_over_successes += o->retries;
    }
    if (o->first_attempt_success) ++first_pass;
  }
  r.suc = static_cast<double>(successes) / static_cast<double>(r.n_samples);
  r.pass_at_1 = static_cast<double>(first_pass) / static_cast<double>(r.n_samples);
  if (successes > 0)
    r.avg_re = static_cast<double>(retries_over_successes) / static_cast<double>(successes);
  return r;
}

}  // namespace

MetricsReport aggregate_metrics(const std::vector<EpisodeOutcome>& outcomes) {
  if (outcomes.empty()) throw InvalidInputError("aggregate_metrics: no outcomes");

  std::vector<const EpisodeOutcome*> all;
  std::map<std::string, std::vector<const EpisodeOutcome*>> by_mode;
  for (const auto& o : outcomes) {
    all.push_back(&o);
    by_mode[o.mode].push_back(&o);
  }
  MetricsReport r = aggregate_flat(all);
  for (const auto& [mode, group] : by_mode) r.per_mode[mode] = aggregate_flat(group);
  return r;
}

std::vector<ComparisonRow> compare_modes(const MetricsReport& a, const MetricsReport& b,
                                         const std::string& config_digest_a,
                                         const std::string& config_digest_b) {
  if (a.n_samples != b.n_samples)
    throw InvalidComparisonError("compare_modes: episode counts differ (" +
                                 std::to_string(a.n_samples) + " vs " +
                                 std::to_string(b.n_samples) + ")");
  if (!config_digest_a.empty() && !config_digest_b.empty() && config_digest_a != config_digest_b)
    throw InvalidComparisonError("compare_modes: reports come from different configurations");

  auto row = [](const std::string& name, std::optional<double> x, std::optional<double> y) {
    ComparisonRow r{name, x, y, std::nullopt};
    if (x && y) r.delta = *x - *y;
    return r;
  };
  return {row("suc", a.suc, b.suc), row("pass_at_1", a.pass_at_1, b.pass_at_1),
          row("avg_re", a.avg_re, b.avg_re)};
}

std::vector<EpisodeOutcome> load_outcome_log(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open outcome log: " + path);
  std::vector<EpisodeOutcome> outcomes;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      outcomes.push_back(outcome_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path + ":" + std::to_string(lineno) + ": " + e.what(), lineno);
    }
  }
  return outcomes;
}

void save_outcome_log(const std::vector<EpisodeOutcome>& outcomes, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write outcome log: " + path);
  for (const auto& o : outcomes) out << outcome_to_json(o).dump() << '\n';
}

}  // namespace memrl
