#include "memrl/case_memory.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "memrl/errors.hpp"

namespace memrl {

namespace {

using nlohmann::json;

// Min-max over raw scores; a degenerate set (max == min) maps all to 0.5 so
// the fused score stays defined and unbiased between the two score families.
void minmax_normalize(std::vector<double>& xs) {
  auto [lo_it, hi_it] = std::minmax_element(xs.begin(), xs.end());
  double lo = *lo_it, hi = *hi_it;
  if (hi == lo) {
    std::fill(xs.begin(), xs.end(), 0.5);
    return;
  }
  for (double& x : xs) x = (x - lo) / (hi - lo);
}

json case_to_json(const CaseEntry& c) {
  json traj = json::array();
  for (const auto& tc : c.trajectory) traj.push_back({{"step", tc.step}, {"payload", tc.payload}});
  json emb = json::array();
  for (Eigen::Index i = 0; i < c.embedding.size(); ++i) emb.push_back(c.embedding[i]);
  return json{{"id", c.id},
              {"index_text", c.index_text},
              {"embedding", std::move(emb)},
              {"intent", c.intent},
              {"trajectory", std::move(traj)},
              {"outcome", c.outcome},
              {"success", c.success},
              {"created_episode", c.created_episode}};
}

CaseEntry case_from_json(const json& j) {
  CaseEntry c;
  c.id = j.at("id").get<std::string>();
  c.index_text = j.at("index_text").get<std::string>();
  const auto& emb = j.at("embedding");
  c.embedding.resize(static_cast<Eigen::Index>(emb.size()));
  for (std::size_t i = 0; i < emb.size(); ++i)
    c.embedding[static_cast<Eigen::Index>(i)] = emb[i].get<double>();
  c.intent = j.at("intent").get<std::string>();
  for (const auto& tc : j.at("trajectory"))
    c.trajectory.push_back({tc.at("step").get<int>(), tc.at("payload").get<std::string>()});
  c.outcome = j.at("outcome").get<std::string>();
  c.success = j.at("success").get<bool>();
  c.created_episode = j.at("created_episode").get<std::int64_t>();
  return c;
}

}  // namespace

double anneal_alpha(std::int64_t t, const HyperParams& hp) {
  double frac = std::min(static_cast<double>(t) / hp.t_decay, 1.0);
  return hp.alpha_start + (hp.alpha_end - hp.alpha_start) * frac;
}

std::vector<ScoredCandidate> score_candidates(const StateQuery& state,
                                              const std::vector<Recalled>& candidates,
                                              double alpha, const ValueNetParams* params) {
  if (candidates.empty()) throw InvalidInputError("score_candidates: empty candidate set");

  std::vector<double> sem(candidates.size());
  std::vector<double> val(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    sem[i] = candidates[i].s_sem;
    val[i] = params ? forward(*params, build_features(state.embedding, candidates[i].entry.embedding))
                    : 0.5;
  }

  std::vector<double> sem_norm = sem;
  std::vector<double> val_norm = val;
  minmax_normalize(sem_norm);
  minmax_normalize(val_norm);

  std::vector<ScoredCandidate> out(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    out[i].case_id = candidates[i].entry.id;
    out[i].s_sem = sem[i];
    out[i].s_val = val[i];
    out[i].s_sem_norm = sem_norm[i];
    out[i].s_val_norm = val_norm[i];
    out[i].fused = alpha * sem_norm[i] + (1.0 - alpha) * val_norm[i];
  }
  return out;
}

Vector policy_distribution(const std::vector<ScoredCandidate>& scored, double tau_c) {
  if (scored.empty()) throw InvalidInputError("policy_distribution: empty candidate set");
  if (tau_c <= 0.0) throw InvalidInputError("policy_distribution: temperature must be positive");

  Vector logits(static_cast<Eigen::Index>(scored.size()));
  for (std::size_t i = 0; i < scored.size(); ++i)
    logits[static_cast<Eigen::Index>(i)] = scored[i].fused / tau_c;
  double mx = logits.maxCoeff();
  Vector probs = (logits.array() - mx).exp();
  probs /= probs.sum();
  return probs;
}

std::vector<std::string> select_cases(const Vector& probs,
                                      const std::vector<ScoredCandidate>& scored, int k,
                                      double epsilon, Rng& rng) {
  if (k < 1) throw InvalidInputError("select_cases: k must be >= 1");
  if (probs.size() != static_cast<Eigen::Index>(scored.size()))
    throw InvalidInputError("select_cases: probs/candidates size mismatch");

  std::vector<std::size_t> remaining(scored.size());
  for (std::size_t i = 0; i < scored.size(); ++i) remaining[i] = i;

  std::vector<std::string> selection;
  while (static_cast<int>(selection.size()) < k && !remaining.empty()) {
    std::size_t pick;
    if (rng.uniform() < epsilon) {
      pick = static_cast<std::size_t>(rng.uniform_int(static_cast<int>(remaining.size())));
    } else {
      double total = 0.0;
      for (std::size_t idx : remaining) total += probs[static_cast<Eigen::Index>(idx)];
      double u = rng.uniform() * total;
      double acc = 0.0;
      pick = remaining.size() - 1;
      for (std::size_t r = 0; r < remaining.size(); ++r) {
        acc += probs[static_cast<Eigen::Index>(remaining[r])];
        if (u <= acc) {
          pick = r;
          break;
        }
      }
    }
    selection.push_back(scored[remaining[pick]].case_id);
    remaining.erase(remaining.begin() + static_cast<std::ptrdiff_t>(pick));
  }
  return selection;
}

std::vector<std::pair<std::string, int>> build_training_samples(
    const std::vector<std::string>& selected, const std::vector<ScoredCandidate>& scored,
    int reward, Rng& rng, const HyperParams& hp) {
  if (reward != 0 && reward != 1)
    throw InvalidInputError("build_training_samples: reward must be 0 or 1");
  std::set<std::string> scored_ids;
  for (const auto& c : scored) scored_ids.insert(c.case_id);
  for (const auto& id : selected)
    if (!scored_ids.count(id))
      throw InvalidInputError("build_training_samples: selected id '" + id +
                              "' not in candidate set");

  std::vector<std::pair<std::string, int>> samples;
  if (reward == 0) {
    for (const auto& id : selected) samples.emplace_back(id, 0);
    return samples;
  }

  for (const auto& id : selected) samples.emplace_back(id, 1);

  std::set<std::string> selected_set(selected.begin(), selected.end());
  std::vector<const ScoredCandidate*> pool;
  for (const auto& c : scored)
    if (!selected_set.count(c.case_id)) pool.push_back(&c);
  std::sort(pool.begin(), pool.end(), [](const ScoredCandidate* a, const ScoredCandidate* b) {
    if (a->fused != b->fused) return a->fused < b->fused;
    return a->case_id < b->case_id;
  });
  if (static_cast<int>(pool.size()) > hp.n_bottom) pool.resize(hp.n_bottom);

  int want = std::min<int>(hp.n_neg, static_cast<int>(pool.size()));
  for (int i = 0; i < want; ++i) {
    int j = i + rng.uniform_int(static_cast<int>(pool.size()) - i);
    std::swap(pool[i], pool[j]);
    samples.emplace_back(pool[i]->case_id, 0);
  }
  return samples;
}

const CaseEntry* CaseLibrary::find(const std::string& id) const {
  for (const auto& e : entries_)
    if (e.id == id) return &e;
  return nullptr;
}

std::int64_t CaseLibrary::add_case(const CaseEntry& entry) {
  if (ids_.count(entry.id)) throw ConflictError("add_case: duplicate id '" + entry.id + "'");
  if (entry.embedding.size() == 0) throw InvalidInputError("add_case: empty embedding");
  if (!entry.embedding.allFinite()) throw InvalidInputError("add_case: non-finite embedding");
  if (d_ == 0) d_ = static_cast<int>(entry.embedding.size());
  if (entry.embedding.size() != d_)
    throw InvalidInputError("add_case: embedding dimension " +
                            std::to_string(entry.embedding.size()) + " does not match library " +
                            std::to_string(d_));
  entries_.push_back(entry);
  ids_.insert(entry.id);
  return ++revision_;
}

std::vector<Recalled> CaseLibrary::recall_candidates(const StateQuery& state, int k0) const {
  if (k0 < 1) throw InvalidInputError("recall_candidates: k0 must be >= 1");
  if (d_ != 0 && state.embedding.size() != d_)
    throw InvalidInputError("recall_candidates: query dimension mismatch");

  std::vector<Recalled> recalled;
  for (const auto& e : entries_) {
    if (!e.success) continue;
    recalled.push_back({e, cosine(state.embedding, e.embedding)});
  }
  std::sort(recalled.begin(), recalled.end(), [](const Recalled& a, const Recalled& b) {
    if (a.s_sem != b.s_sem) return a.s_sem > b.s_sem;
    return a.entry.id < b.entry.id;
  });
  if (static_cast<int>(recalled.size()) > k0) recalled.resize(static_cast<std::size_t>(k0));
  return recalled;
}

RetrievalRound CaseLibrary::retrieve(const StateQuery& state, const HyperParams& hp,
                                     const ValueNetParams* params, Rng& rng,
                                     bool semantic_only) const {
  RetrievalRound round;
  round.state = state;
  round.candidates = recall_candidates(state, hp.k0);
  round.alpha = semantic_only ? 1.0 : anneal_alpha(state.episode_t, hp);
  if (round.candidates.empty()) return round;
  round.scored =
      score_candidates(state, round.candidates, round.alpha, semantic_only ? nullptr : params);
  round.probs = policy_distribution(round.scored, hp.tau_c);
  round.selected = select_cases(round.probs, round.scored, hp.k, hp.epsilon, rng);
  return round;
}

CaseLibrary CaseLibrary::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open case store: " + path);
  CaseLibrary lib;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      lib.add_case(case_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw ParseError(path + ":" + std::to_string(lineno) + ": " + e.what(), lineno);
    }
  }
  return lib;
}

void CaseLibrary::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write case store: " + path);
  for (const auto& e : entries_) out << case_to_json(e).dump() << '\n';
}

void update_from_episode(const RetrievalRound& round, int reward, ValueNetParams& params,
                         AdamState& optimizer_state, std::int64_t& t, const HyperParams& hp,
                         Rng& sample_rng, Rng& dropout_rng) {
  auto labeled = build_training_samples(round.selected, round.scored, reward, sample_rng, hp);

  if (!labeled.empty()) {
    std::vector<TrainingSample> batch;
    batch.reserve(labeled.size());
    std::vector<Vector> features_by_candidate(round.candidates.size());
    for (std::size_t i = 0; i < round.candidates.size(); ++i)
      features_by_candidate[i] =
          build_features(round.state.embedding, round.candidates[i].entry.embedding);
    auto candidate_index = [&](const std::string& id) -> std::size_t {
      for (std::size_t i = 0; i < round.scored.size(); ++i)
        if (round.scored[i].case_id == id) return i;
      throw InvalidInputError("update_from_episode: sample id not in round");
    };
    for (const auto& [id, label] : labeled)
      batch.push_back({features_by_candidate[candidate_index(id)], label});

    // Stop-gradient fusion factor: d(fused)/d(s_val) within this candidate
    // set, zero when the value scores were degenerate.
    double lo = round.scored.front().s_val, hi = lo;
    for (const auto& sc : round.scored) {
      lo = std::min(lo, sc.s_val);
      hi = std::max(hi, sc.s_val);
    }
    EntropyContext ectx;
    ectx.candidate_features = std::move(features_by_candidate);
    ectx.tau = hp.tau_c;
    ectx.dfused_dval = Vector::Zero(static_cast<Eigen::Index>(round.scored.size()));
    if (hi > lo)
      ectx.dfused_dval.setConstant((1.0 - round.alpha) / (hi - lo));

    auto lg = loss_and_grads(params, batch, round.probs, hp.beta, Mode::kTrain, &dropout_rng,
                             &ectx);
    try {
      train_step(params, lg.grads, optimizer_state, hp);
    } catch (const NumericError&) {
      t += 1;  // the annealing step advances even when the update aborts
      throw;
    }
  }
  t += 1;
}

}  // namespace memrl
