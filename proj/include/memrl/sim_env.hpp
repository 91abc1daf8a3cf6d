#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "memrl/case_memory.hpp"
#include "memrl/hyperparams.hpp"
#include "memrl/skill_memory.hpp"
#include "memrl/value_net.hpp"

namespace memrl {

enum class RetrievalMode { kLearned, kSemantic };

std::string to_string(RetrievalMode mode);
RetrievalMode retrieval_mode_from_string(const std::string& s);

// Synthetic world construction knobs. Tasks live near cluster centers; each
// task gets one useful case, `traps_per_task` trap cases whose cosine to the
// task is at least the median useful-case cosine, and a cluster-level useful
// skill shadowed by higher-similarity trap skills. Background cases fill the
// remaining budget as weaker distractors.
struct WorldConfig {
  int n_tasks = 20;
  int n_cases = 60;
  int n_skills = 20;
  int traps_per_task = 1;
  int n_clusters = 5;

  double p_hi = 0.95;
  double p_base = 0.5;
  double p_lo = 0.05;
  int max_retries = 3;

  bool use_cases = true;
  bool use_skills = true;

  // Cosine bands relative to the owning task / cluster center.
  double task_center_cos = 0.93;
  double useful_case_cos_lo = 0.78;
  double useful_case_cos_hi = 0.86;
  double trap_case_margin = 0.02;  // trap cosine >= useful + margin
  double background_case_cos_lo = 0.55;
  double background_case_cos_hi = 0.75;
  double useful_skill_cos_lo = 0.72;
  double useful_skill_cos_hi = 0.80;
  double trap_skill_cos_lo = 0.88;
  double trap_skill_cos_hi = 0.95;
  double neutral_skill_cos = 0.35;
  double background_failure_rate = 0.2;  // share of background cases stored as failures
};

struct TaskSpec {
  std::string task_id;
  std::string index_text;
  Vector embedding;
  std::set<std::string> useful_case_ids;
  std::set<std::string> useful_skill_ids;
  std::vector<std::string> trap_case_ids;
  int cluster = 0;
};

struct SyntheticWorld {
  std::vector<TaskSpec> tasks;
  CaseLibrary cases;
  SkillLibrary skills;
  double p_hi = 0.95;
  double p_base = 0.5;
  double p_lo = 0.05;
  std::uint64_t seed = 0;

  const TaskSpec& task(const std::string& task_id) const;
};

// Deterministic per (cfg, rng state); throws ConstructionError when a trap
// embedding cannot satisfy its cosine invariant within bounded retries.
SyntheticWorld build_world(const WorldConfig& cfg, std::uint64_t seed, const HyperParams& hp);

// Mutable engine state an experiment evolves: memory stores, value net,
// optimizer, annealing counter.
struct Engines {
  CaseLibrary cases;
  SkillLibrary skills;
  ValueNetParams value_net;
  AdamState adam;
  std::int64_t anneal_t = 0;
};

Engines make_engines(const SyntheticWorld& world, const HyperParams& hp, std::uint64_t seed);

struct EpisodeOutcome {
  std::string task_id;
  std::vector<std::string> selected_case_ids;  // final attempt
  std::vector<std::string> ranked_skill_ids;   // final attempt
  std::vector<std::string> called_skill_ids;   // every call, in order
  int reward = 0;
  bool first_attempt_success = false;
  int retries = 0;
  std::string mode;
};

nlohmann::json outcome_to_json(const EpisodeOutcome& o);
EpisodeOutcome outcome_from_json(const nlohmann::json& j);

struct RngStreams {
  Rng policy;
  Rng dropout;
  Rng environment;
};

// One closed-loop episode: retrieve cases, rank skills, call the top skill,
// draw the binary reward, retry with the failed skill masked, then (learned
// mode, unless frozen) update the value net and skill utilities on the
// terminal reward. Every run_skill call in the episode feeds the utility
// update.
EpisodeOutcome run_episode(const SyntheticWorld& world, Engines& engines,
                           const std::string& task_id, RetrievalMode mode, const WorldConfig& cfg,
                           const HyperParams& hp, RngStreams& streams, bool freeze_updates = false);

struct ExperimentConfig {
  WorldConfig world;
  HyperParams hp;
  int episodes = 800;
  int eval_episodes = 0;  // frozen-policy evaluation after training
  RetrievalMode mode = RetrievalMode::kLearned;
  std::uint64_t seed = 0;
};

struct ExperimentResult {
  SyntheticWorld world;
  Engines engines;
  std::vector<EpisodeOutcome> outcomes;       // training phase
  std::vector<EpisodeOutcome> eval_outcomes;  // frozen-policy phase
};

// Round-robin tasks; training episodes advance the annealing counter once
// each in learned mode; evaluation episodes freeze all learning.
ExperimentResult run_experiment(const ExperimentConfig& cfg);

// Config JSON wiring (counts, probabilities, hyperparams); unknown keys are
// rejected so typos do not silently fall back to defaults.
ExperimentConfig experiment_config_from_json(const nlohmann::json& j);
nlohmann::json experiment_config_to_json(const ExperimentConfig& cfg);
ExperimentConfig load_experiment_config(const std::string& path);

}  // namespace memrl
