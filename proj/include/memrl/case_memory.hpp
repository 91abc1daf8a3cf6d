#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "memrl/embedding.hpp"
#include "memrl/hyperparams.hpp"
#include "memrl/value_net.hpp"

namespace memrl {

struct ToolCall {
  int step = 0;
  std::string payload;
};

struct CaseEntry {
  std::string id;
  std::string index_text;  // query + structured requirement
  Vector embedding;
  std::string intent;
  std::vector<ToolCall> trajectory;
  std::string outcome;
  bool success = false;
  std::int64_t created_episode = 0;
};

struct StateQuery {
  std::string query_text;
  Vector embedding;
  std::int64_t episode_t = 0;
  std::set<std::string> masked_skill_ids;
};

struct ScoredCandidate {
  std::string case_id;
  double s_sem = 0.0;
  double s_val = 0.0;
  double s_sem_norm = 0.0;
  double s_val_norm = 0.0;
  double fused = 0.0;
};

struct Recalled {
  CaseEntry entry;  // snapshot copy; retrieval never aliases the store
  double s_sem = 0.0;
};

// alpha_t = alpha_start + (alpha_end - alpha_start) * min(t / T_decay, 1).
double anneal_alpha(std::int64_t t, const HyperParams& hp);

// Fused scoring over a recalled candidate set. Semantic and value scores are
// min-max normalized within the set (a degenerate set maps everyone to 0.5);
// `params == nullptr` scores s_val as a flat 0.5, which leaves the fused
// ranking purely semantic. Value scores use eval-mode forward passes.
std::vector<ScoredCandidate> score_candidates(const StateQuery& state,
                                              const std::vector<Recalled>& candidates,
                                              double alpha, const ValueNetParams* params);

// Temperature softmax over fused scores, max-subtracted for stability.
Vector policy_distribution(const std::vector<ScoredCandidate>& scored, double tau_c);

// Without-replacement sampling of min(k, |candidates|) distinct ids. Each
// slot takes an epsilon-uniform pick over the remaining candidates, otherwise
// samples from the renormalized distribution over the remaining set.
std::vector<std::string> select_cases(const Vector& probs,
                                      const std::vector<ScoredCandidate>& scored, int k,
                                      double epsilon, Rng& rng);

// Labeling rule: success marks the selected cases positive and draws up to
// n_neg negatives uniformly from the n_bottom lowest-fused unselected
// candidates; failure marks the selected cases negative.
std::vector<std::pair<std::string, int>> build_training_samples(
    const std::vector<std::string>& selected, const std::vector<ScoredCandidate>& scored,
    int reward, Rng& rng, const HyperParams& hp);

// One full retrieval decision, kept as the episode's training context.
struct RetrievalRound {
  StateQuery state;
  std::vector<Recalled> candidates;
  std::vector<ScoredCandidate> scored;
  Vector probs;
  std::vector<std::string> selected;
  double alpha = 0.0;
};

class CaseLibrary {
 public:
  CaseLibrary() = default;

  int dimension() const { return d_; }
  std::size_t size() const { return entries_.size(); }
  const std::vector<CaseEntry>& entries() const { return entries_; }
  const CaseEntry* find(const std::string& id) const;

  // Persists the entry; success entries become recallable immediately.
  // Returns the library revision (number of writes so far).
  std::int64_t add_case(const CaseEntry& entry);

  // Top-k0 successful entries by cosine, descending; ties by id ascending.
  std::vector<Recalled> recall_candidates(const StateQuery& state, int k0) const;

  // recall -> anneal -> score -> softmax -> select, as one round.
  RetrievalRound retrieve(const StateQuery& state, const HyperParams& hp,
                          const ValueNetParams* params, Rng& rng, bool semantic_only) const;

  // Append-only JSONL, insertion order preserved.
  static CaseLibrary load(const std::string& path);
  void save(const std::string& path) const;

 private:
  std::vector<CaseEntry> entries_;
  std::set<std::string> ids_;
  std::int64_t revision_ = 0;
  int d_ = 0;
};

// Builds the episode's training batch from its retrieval round, runs one
// optimizer step (entropy regularized), and advances the annealing counter
// exactly once -- also when the step aborts on a numeric error.
void update_from_episode(const RetrievalRound& round, int reward, ValueNetParams& params,
                         AdamState& optimizer_state, std::int64_t& t, const HyperParams& hp,
                         Rng& sample_rng, Rng& dropout_rng);

}  // namespace memrl
