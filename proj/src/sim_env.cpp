#include "memrl/sim_env.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "memrl/errors.hpp"

namespace memrl {

namespace {

using nlohmann::json;

constexpr int kTrapResampleLimit = 200;

Vector random_unit(int d, Rng& rng) {
  Vector v(d);
  for (int i = 0; i < d; ++i) v[i] = rng.gauss();
  return v / v.norm();
}

// Unit vector with an exact cosine c to the unit vector `axis`.
Vector with_cosine(const Vector& axis, double c, Rng& rng) {
  Vector w = random_unit(static_cast<int>(axis.size()), rng);
  w -= w.dot(axis) * axis;
  double n = w.norm();
  if (n < 1e-9) return axis;  // essentially colinear draw; retry-free fallback
  w /= n;
  return c * axis + std::sqrt(std::max(0.0, 1.0 - c * c)) * w;
}

double uniform_in(double lo, double hi, Rng& rng) { return lo + (hi - lo) * rng.uniform(); }

std::string zero_pad(int v, int width) {
  std::string s = std::to_string(v);
  while (static_cast<int>(s.size()) < width) s.insert(s.begin(), '0');
  return s;
}

CaseEntry make_case(const std::string& id, const std::string& text, Vector embedding,
                    bool success) {
  CaseEntry c;
  c.id = id;
  c.index_text = text;
  c.embedding = std::move(embedding);
  c.intent = text;
  c.trajectory = {{0, "plan"}, {1, "execute"}};
  c.outcome = success ? "verified" : "failed verification";
  c.success = success;
  c.created_episode = 0;
  return c;
}

SkillEntry make_skill(const std::string& id, const std::string& text, Vector embedding,
                      double u_init) {
  SkillEntry s;
  s.id = id;
  s.script = "# " + id + "\n";
  s.doc = text;
  s.params = {{"size", "characteristic dimension", "float"}};
  s.constraints = "";
  s.index_text = text;
  s.embedding = std::move(embedding);
  s.utility = u_init;
  return s;
}

struct AttemptRecord {
  RetrievalRound round;
  std::vector<std::pair<SkillEntry, double>> ranked;
  std::string called;
};

}  // namespace

std::string to_string(RetrievalMode mode) {
  return mode == RetrievalMode::kLearned ? "learned" : "semantic";
}

RetrievalMode retrieval_mode_from_string(const std::string& s) {
  if (s == "learned") return RetrievalMode::kLearned;
  if (s == "semantic") return RetrievalMode::kSemantic;
  throw InvalidInputError("unknown retrieval mode '" + s + "'");
}

const TaskSpec& SyntheticWorld::task(const std::string& task_id) const {
  for (const auto& t : tasks)
    if (t.task_id == task_id) return t;
  throw NotFoundError("unknown task id '" + task_id + "'");
}

SyntheticWorld build_world(const WorldConfig& cfg, std::uint64_t seed, const HyperParams& hp) {
  if (cfg.n_tasks < 1 || cfg.n_cases < 1 || cfg.n_skills < 1 || cfg.n_clusters < 1)
    throw ConstructionError("build_world: counts must be >= 1");
  if (!(cfg.p_hi > cfg.p_base && cfg.p_base > cfg.p_lo))
    throw ConstructionError("build_world: require p_hi > p_base > p_lo");
  if (cfg.p_lo < 0.0 || cfg.p_hi > 1.0)
    throw ConstructionError("build_world: probabilities outside [0,1]");
  if (cfg.traps_per_task < 1) throw ConstructionError("build_world: traps_per_task must be >= 1");
  int reserved = cfg.n_tasks * (1 + cfg.traps_per_task);
  if (cfg.n_cases < reserved)
    throw ConstructionError("build_world: n_cases too small for useful+trap cases (need >= " +
                            std::to_string(reserved) + ")");
  if (cfg.n_skills < cfg.n_clusters)
    throw ConstructionError("build_world: need at least one skill per cluster");

  Rng rng = Rng::substream(seed, "world");
  SyntheticWorld world;
  world.p_hi = cfg.p_hi;
  world.p_base = cfg.p_base;
  world.p_lo = cfg.p_lo;
  world.seed = seed;

  int n_clusters = std::min(cfg.n_clusters, cfg.n_tasks);
  std::vector<Vector> centers;
  centers.reserve(static_cast<std::size_t>(n_clusters));
  for (int c = 0; c < n_clusters; ++c) centers.push_back(random_unit(hp.d, rng));

  // Tasks near their cluster center.
  for (int i = 0; i < cfg.n_tasks; ++i) {
    TaskSpec t;
    t.cluster = i % n_clusters;
    t.task_id = "task-" + zero_pad(i, 2);
    t.index_text = "task " + zero_pad(i, 2) + " cluster " + std::to_string(t.cluster);
    t.embedding = with_cosine(centers[static_cast<std::size_t>(t.cluster)],
                              uniform_in(cfg.task_center_cos - 0.02, cfg.task_center_cos + 0.02, rng),
                              rng);
    world.tasks.push_back(std::move(t));
  }

  // Skills: cluster slots cycle through roles useful / trap / trap / neutral.
  std::vector<std::string> cluster_useful_skill(static_cast<std::size_t>(n_clusters));
  std::vector<std::vector<Vector>> cluster_useful_skill_emb(static_cast<std::size_t>(n_clusters));
  for (int s = 0; s < cfg.n_skills; ++s) {
    int cluster = s % n_clusters;
    int role = s / n_clusters;  // 0 useful, 1-2 trap, rest neutral
    std::string id = "skill-" + zero_pad(s, 2);
    const Vector& center = centers[static_cast<std::size_t>(cluster)];

    if (role == 0) {
      Vector emb = with_cosine(center, uniform_in(cfg.useful_skill_cos_lo, cfg.useful_skill_cos_hi, rng), rng);
      world.skills.register_skill(
          make_skill(id, "useful operation for cluster " + std::to_string(cluster), emb, hp.u_init));
      cluster_useful_skill[static_cast<std::size_t>(cluster)] = id;
      cluster_useful_skill_emb[static_cast<std::size_t>(cluster)].push_back(emb);
      for (auto& t : world.tasks)
        if (t.cluster == cluster) t.useful_skill_ids.insert(id);
    } else if (role <= 2) {
      // Trap skill: semantically above the cluster's useful skill for every
      // task in the cluster, but never useful.
      bool placed = false;
      for (int attempt = 0; attempt < kTrapResampleLimit && !placed; ++attempt) {
        Vector emb = with_cosine(center, uniform_in(cfg.trap_skill_cos_lo, cfg.trap_skill_cos_hi, rng), rng);
        bool dominates = true;
        for (const auto& t : world.tasks) {
          if (t.cluster != cluster) continue;
          for (const auto& uemb : cluster_useful_skill_emb[static_cast<std::size_t>(cluster)])
            if (cosine(emb, t.embedding) <= cosine(uemb, t.embedding)) dominates = false;
        }
        if (!dominates) continue;
        world.skills.register_skill(
            make_skill(id, "lookalike operation for cluster " + std::to_string(cluster), emb, hp.u_init));
        placed = true;
      }
      if (!placed)
        throw ConstructionError("build_world: could not place trap skill " + id +
                                " above the useful skill for its cluster");
    } else {
      Vector emb = with_cosine(center, cfg.neutral_skill_cos, rng);
      world.skills.register_skill(
          make_skill(id, "generic operation " + std::to_string(s), emb, hp.u_init));
    }
  }
  for (const auto& t : world.tasks)
    if (t.useful_skill_ids.empty())
      throw ConstructionError("build_world: task " + t.task_id + " has no useful skill");

  // Cases: per task one useful case and traps_per_task traps whose cosine to
  // the task is at least the median useful-case cosine.
  int case_counter = 0;
  for (auto& t : world.tasks) {
    std::string useful_id = "case-" + zero_pad(case_counter++, 3);
    double useful_cos = uniform_in(cfg.useful_case_cos_lo, cfg.useful_case_cos_hi, rng);
    world.cases.add_case(
        make_case(useful_id, "solved " + t.index_text, with_cosine(t.embedding, useful_cos, rng), true));
    t.useful_case_ids.insert(useful_id);

    std::vector<double> useful_cosines{useful_cos};
    std::sort(useful_cosines.begin(), useful_cosines.end());
    double median = useful_cosines[useful_cosines.size() / 2];

    for (int k = 0; k < cfg.traps_per_task; ++k) {
      std::string trap_id = "case-" + zero_pad(case_counter++, 3);
      bool placed = false;
      for (int attempt = 0; attempt < kTrapResampleLimit && !placed; ++attempt) {
        double c = uniform_in(std::min(median + cfg.trap_case_margin, 0.97), 0.97, rng);
        Vector emb = with_cosine(t.embedding, c, rng);
        if (cosine(emb, t.embedding) < median) continue;
        world.cases.add_case(
            make_case(trap_id, "lookalike of " + t.index_text, std::move(emb), true));
        placed = true;
      }
      if (!placed)
        throw ConstructionError("build_world: could not place trap case " + trap_id +
                                " above the median useful cosine for " + t.task_id);
      t.trap_case_ids.push_back(trap_id);
    }
  }

  // Background cases: weaker distractors spread over the tasks, some stored
  // as failures to exercise the success-only recall filter.
  int backgrounds = cfg.n_cases - case_counter;
  for (int b = 0; b < backgrounds; ++b) {
    const TaskSpec& t = world.tasks[static_cast<std::size_t>(b % cfg.n_tasks)];
    double c = uniform_in(cfg.background_case_cos_lo, cfg.background_case_cos_hi, rng);
    bool success = rng.uniform() >= cfg.background_failure_rate;
    std::string id = "case-" + zero_pad(case_counter++, 3);
    world.cases.add_case(make_case(id, "related note on " + t.index_text,
                                   with_cosine(t.embedding, c, rng), success));
  }

  return world;
}

Engines make_engines(const SyntheticWorld& world, const HyperParams& hp, std::uint64_t seed) {
  Engines e;
  e.cases = world.cases;
  e.skills = world.skills;
  e.value_net = init_params(hp.d, hp.p_drop, splitmix64(seed ^ fnv1a64("valuenet-init")));
  e.adam = init_adam(e.value_net);
  e.anneal_t = 0;
  return e;
}

json outcome_to_json(const EpisodeOutcome& o) {
  return json{{"task_id", o.task_id},
              {"selected_case_ids", o.selected_case_ids},
              {"ranked_skill_ids", o.ranked_skill_ids},
              {"called_skill_ids", o.called_skill_ids},
              {"reward", o.reward},
              {"first_attempt_success", o.first_attempt_success},
              {"retries", o.retries},
              {"mode", o.mode}};
}

EpisodeOutcome outcome_from_json(const json& j) {
  EpisodeOutcome o;
  o.task_id = j.at("task_id").get<std::string>();
  o.selected_case_ids = j.at("selected_case_ids").get<std::vector<std::string>>();
  o.ranked_skill_ids = j.at("ranked_skill_ids").get<std::vector<std::string>>();
  o.called_skill_ids = j.at("called_skill_ids").get<std::vector<std::string>>();
  o.reward = j.at("reward").get<int>();
  o.first_attempt_success = j.at("first_attempt_success").get<bool>();
  o.retries = j.at("retries").get<int>();
  o.mode = j.at("mode").get<std::string>();
  if (o.retries < 0) throw InvalidInputError("outcome: negative retries");
  if (o.first_attempt_success && o.retries != 0)
    throw InvalidInputError("outcome: first-attempt success with retries");
  return o;
}

EpisodeOutcome run_episode(const SyntheticWorld& world, Engines& engines,
                           const std::string& task_id, RetrievalMode mode, const WorldConfig& cfg,
                           const HyperParams& hp, RngStreams& streams, bool freeze_updates) {
  const TaskSpec& task = world.task(task_id);
  const bool semantic = mode == RetrievalMode::kSemantic;

  EpisodeOutcome outcome;
  outcome.task_id = task_id;
  outcome.mode = to_string(mode);

  AttemptRecord last;
  std::vector<std::string> all_calls;
  int reward = 0;
  int attempt = 0;
  for (attempt = 0; attempt <= cfg.max_retries; ++attempt) {
    StateQuery state;
    state.query_text = task.index_text;
    state.embedding = task.embedding;
    state.episode_t = engines.anneal_t;

    AttemptRecord rec;
    if (cfg.use_cases)
      rec.round = engines.cases.retrieve(state, hp, &engines.value_net, streams.policy, semantic);
    if (cfg.use_skills) {
      rec.ranked = engines.skills.rank_skills(state, hp);
      if (!rec.ranked.empty()) {
        rec.called = rec.ranked.front().first.id;
        all_calls.push_back(rec.called);
      }
    }

    bool case_hit = false;
    for (const auto& id : rec.round.selected)
      if (task.useful_case_ids.count(id)) case_hit = true;
    bool skill_hit = !rec.called.empty() && task.useful_skill_ids.count(rec.called) > 0;

    double p = case_hit && skill_hit ? world.p_hi
               : case_hit || skill_hit ? world.p_base
                                       : world.p_lo;
    reward = streams.environment.uniform() < p ? 1 : 0;
    last = std::move(rec);

    if (reward == 1) break;
    if (!last.called.empty()) engines.skills.mask_failed(last.called);
  }
  if (attempt > cfg.max_retries) attempt = cfg.max_retries;  // exhausted

  outcome.reward = reward;
  outcome.retries = attempt;
  outcome.first_attempt_success = reward == 1 && attempt == 0;
  outcome.selected_case_ids = last.round.selected;
  for (const auto& [entry, score] : last.ranked) outcome.ranked_skill_ids.push_back(entry.id);
  outcome.called_skill_ids = all_calls;

  if (!semantic && !freeze_updates) {
    if (cfg.use_cases && !last.round.candidates.empty()) {
      update_from_episode(last.round, reward, engines.value_net, engines.adam, engines.anneal_t,
                          hp, streams.policy, streams.dropout);
    } else {
      engines.anneal_t += 1;
    }
    // The terminal reward certifies every call of a failed episode (each
    // attempt observably failed; masking already treated them that way), but
    // only the final attempt's call of a successful one -- earlier calls in
    // that episode failed and must not be credited with the success.
    std::vector<std::string> credited;
    if (reward == 1) {
      if (!last.called.empty()) credited.push_back(last.called);
    } else {
      credited = all_calls;
    }
    if (cfg.use_skills && !credited.empty())
      engines.skills.update_skill_utilities(credited, reward, hp);
  }
  return outcome;
}

ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  if (cfg.episodes < 1) throw InvalidInputError("run_experiment: episodes must be >= 1");
  if (cfg.eval_episodes < 0)
    throw InvalidInputError("run_experiment: eval_episodes must be >= 0");

  ExperimentResult res;
  res.world = build_world(cfg.world, cfg.seed, cfg.hp);
  res.engines = make_engines(res.world, cfg.hp, cfg.seed);

  RngStreams streams{Rng::substream(cfg.seed, "policy"), Rng::substream(cfg.seed, "dropout"),
                     Rng::substream(cfg.seed, "environment")};

  for (int e = 0; e < cfg.episodes; ++e) {
    const auto& task = res.world.tasks[static_cast<std::size_t>(e % cfg.world.n_tasks)];
    res.outcomes.push_back(
        run_episode(res.world, res.engines, task.task_id, cfg.mode, cfg.world, cfg.hp, streams));
  }
  for (int e = 0; e < cfg.eval_episodes; ++e) {
    const auto& task = res.world.tasks[static_cast<std::size_t>(e % cfg.world.n_tasks)];
    res.eval_outcomes.push_back(run_episode(res.world, res.engines, task.task_id, cfg.mode,
                                            cfg.world, cfg.hp, streams, /*freeze_updates=*/true));
  }
  return res;
}

namespace {

void check_known_keys(const json& j, const std::vector<std::string>& known,
                      const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it)
    if (std::find(known.begin(), known.end(), it.key()) == known.end())
      throw ParseError("config: unknown key '" + it.key() + "' in " + where);
}

template <class T>
void maybe(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

WorldConfig world_config_from_json(const json& j) {
  WorldConfig w;
  check_known_keys(
      j,
      {"n_tasks", "n_cases", "n_skills", "traps_per_task", "n_clusters", "p_hi", "p_base", "p_lo",
       "max_retries", "use_cases", "use_skills", "task_center_cos", "useful_case_cos_lo",
       "useful_case_cos_hi", "trap_case_margin", "background_case_cos_lo",
       "background_case_cos_hi", "useful_skill_cos_lo", "useful_skill_cos_hi",
       "trap_skill_cos_lo", "trap_skill_cos_hi", "neutral_skill_cos", "background_failure_rate"},
      "world");
  maybe(j, "n_tasks", w.n_tasks);
  maybe(j, "n_cases", w.n_cases);
  maybe(j, "n_skills", w.n_skills);
  maybe(j, "traps_per_task", w.traps_per_task);
  maybe(j, "n_clusters", w.n_clusters);
  maybe(j, "p_hi", w.p_hi);
  maybe(j, "p_base", w.p_base);
  maybe(j, "p_lo", w.p_lo);
  maybe(j, "max_retries", w.max_retries);
  maybe(j, "use_cases", w.use_cases);
  maybe(j, "use_skills", w.use_skills);
  maybe(j, "task_center_cos", w.task_center_cos);
  maybe(j, "useful_case_cos_lo", w.useful_case_cos_lo);
  maybe(j, "useful_case_cos_hi", w.useful_case_cos_hi);
  maybe(j, "trap_case_margin", w.trap_case_margin);
  maybe(j, "background_case_cos_lo", w.background_case_cos_lo);
  maybe(j, "background_case_cos_hi", w.background_case_cos_hi);
  maybe(j, "useful_skill_cos_lo", w.useful_skill_cos_lo);
  maybe(j, "useful_skill_cos_hi", w.useful_skill_cos_hi);
  maybe(j, "trap_skill_cos_lo", w.trap_skill_cos_lo);
  maybe(j, "trap_skill_cos_hi", w.trap_skill_cos_hi);
  maybe(j, "neutral_skill_cos", w.neutral_skill_cos);
  maybe(j, "background_failure_rate", w.background_failure_rate);
  return w;
}

json world_config_to_json(const WorldConfig& w) {
  return json{{"n_tasks", w.n_tasks},
              {"n_cases", w.n_cases},
              {"n_skills", w.n_skills},
              {"traps_per_task", w.traps_per_task},
              {"n_clusters", w.n_clusters},
              {"p_hi", w.p_hi},
              {"p_base", w.p_base},
              {"p_lo", w.p_lo},
              {"max_retries", w.max_retries},
              {"use_cases", w.use_cases},
              {"use_skills", w.use_skills},
              {"task_center_cos", w.task_center_cos},
              {"useful_case_cos_lo", w.useful_case_cos_lo},
              {"useful_case_cos_hi", w.useful_case_cos_hi},
              {"trap_case_margin", w.trap_case_margin},
              {"background_case_cos_lo", w.background_case_cos_lo},
              {"background_case_cos_hi", w.background_case_cos_hi},
              {"useful_skill_cos_lo", w.useful_skill_cos_lo},
              {"useful_skill_cos_hi", w.useful_skill_cos_hi},
              {"trap_skill_cos_lo", w.trap_skill_cos_lo},
              {"trap_skill_cos_hi", w.trap_skill_cos_hi},
              {"neutral_skill_cos", w.neutral_skill_cos},
              {"background_failure_rate", w.background_failure_rate}};
}

HyperParams hyperparams_from_json(const json& j) {
  HyperParams hp;
  check_known_keys(j,
                   {"k0", "k", "alpha_start", "alpha_end", "t_decay", "tau_c", "epsilon", "beta",
                    "n_bottom", "n_neg", "eta", "u_min", "u_prune", "n_min", "u_init",
                    "delete_on_prune", "lambda_sem", "lambda_u", "k_skill_recall", "k_skill",
                    "gamma", "learning_rate", "adam_beta1", "adam_beta2", "adam_eps", "d",
                    "p_drop"},
                   "hyperparams");
  maybe(j, "k0", hp.k0);
  maybe(j, "k", hp.k);
  maybe(j, "alpha_start", hp.alpha_start);
  maybe(j, "alpha_end", hp.alpha_end);
  maybe(j, "t_decay", hp.t_decay);
  maybe(j, "tau_c", hp.tau_c);
  maybe(j, "epsilon", hp.epsilon);
  maybe(j, "beta", hp.beta);
  maybe(j, "n_bottom", hp.n_bottom);
  maybe(j, "n_neg", hp.n_neg);
  maybe(j, "eta", hp.eta);
  maybe(j, "u_min", hp.u_min);
  maybe(j, "u_prune", hp.u_prune);
  maybe(j, "n_min", hp.n_min);
  maybe(j, "u_init", hp.u_init);
  maybe(j, "delete_on_prune", hp.delete_on_prune);
  maybe(j, "lambda_sem", hp.lambda_sem);
  maybe(j, "lambda_u", hp.lambda_u);
  maybe(j, "k_skill_recall", hp.k_skill_recall);
  maybe(j, "k_skill", hp.k_skill);
  maybe(j, "gamma", hp.gamma);
  maybe(j, "learning_rate", hp.learning_rate);
  maybe(j, "adam_beta1", hp.adam_beta1);
  maybe(j, "adam_beta2", hp.adam_beta2);
  maybe(j, "adam_eps", hp.adam_eps);
  maybe(j, "d", hp.d);
  maybe(j, "p_drop", hp.p_drop);
  return hp;
}

json hyperparams_to_json(const HyperParams& hp) {
  return json{{"k0", hp.k0},
              {"k", hp.k},
              {"alpha_start", hp.alpha_start},
              {"alpha_end", hp.alpha_end},
              {"t_decay", hp.t_decay},
              {"tau_c", hp.tau_c},
              {"epsilon", hp.epsilon},
              {"beta", hp.beta},
              {"n_bottom", hp.n_bottom},
              {"n_neg", hp.n_neg},
              {"eta", hp.eta},
              {"u_min", hp.u_min},
              {"u_prune", hp.u_prune},
              {"n_min", hp.n_min},
              {"u_init", hp.u_init},
              {"delete_on_prune", hp.delete_on_prune},
              {"lambda_sem", hp.lambda_sem},
              {"lambda_u", hp.lambda_u},
              {"k_skill_recall", hp.k_skill_recall},
              {"k_skill", hp.k_skill},
              {"gamma", hp.gamma},
              {"learning_rate", hp.learning_rate},
              {"adam_beta1", hp.adam_beta1},
              {"adam_beta2", hp.adam_beta2},
              {"adam_eps", hp.adam_eps},
              {"d", hp.d},
              {"p_drop", hp.p_drop}};
}

}  // namespace

ExperimentConfig experiment_config_from_json(const json& j) {
  ExperimentConfig cfg;
  check_known_keys(j, {"world", "hyperparams", "episodes", "eval_episodes", "mode", "seed"},
                   "config");
  if (j.contains("world")) cfg.world = world_config_from_json(j.at("world"));
  if (j.contains("hyperparams")) cfg.hp = hyperparams_from_json(j.at("hyperparams"));
  maybe(j, "episodes", cfg.episodes);
  maybe(j, "eval_episodes", cfg.eval_episodes);
  if (j.contains("mode")) cfg.mode = retrieval_mode_from_string(j.at("mode").get<std::string>());
  maybe(j, "seed", cfg.seed);
  return cfg;
}

json experiment_config_to_json(const ExperimentConfig& cfg) {
  return json{{"world", world_config_to_json(cfg.world)},
              {"hyperparams", hyperparams_to_json(cfg.hp)},
              {"episodes", cfg.episodes},
              {"eval_episodes", cfg.eval_episodes},
              {"mode", to_string(cfg.mode)},
              {"seed", cfg.seed}};
}

ExperimentConfig load_experiment_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ParseError("config " + path + ": " + e.what());
  }
  return experiment_config_from_json(j);
}

}  // namespace memrl
