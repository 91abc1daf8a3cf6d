#include "memrl/skill_memory.hpp"

#include <algorithm>
#include <fstream>

#include <nlohmann/json.hpp>

namespace memrl {

namespace {

using nlohmann::json;

json skill_to_json(const SkillEntry& s) {
  json params = json::array();
  for (const auto& p : s.params)
    params.push_back(
        {{"name", p.name}, {"description", p.description}, {"value_kind", p.value_kind}});
  json emb = json::array();
  for (Eigen::Index i = 0; i < s.embedding.size(); ++i) emb.push_back(s.embedding[i]);
  json stat = {{"n_uses", s.stat.n_uses},
               {"n_success", s.stat.n_success},
               {"n_fail", s.stat.n_fail},
               {"frozen", s.stat.frozen}};
  if (s.stat.last_reward) stat["last_reward"] = *s.stat.last_reward;
  else stat["last_reward"] = nullptr;
  return json{{"id", s.id},
              {"script", s.script},
              {"doc", s.doc},
              {"params", std::move(params)},
              {"constraints", s.constraints},
              {"index_text", s.index_text},
              {"embedding", std::move(emb)},
              {"utility", s.utility},
              {"stat", std::move(stat)}};
}

SkillEntry skill_from_json(const json& j) {
  SkillEntry s;
  s.id = j.at("id").get<std::string>();
  s.script = j.at("script").get<std::string>();
  s.doc = j.at("doc").get<std::string>();
  for (const auto& p : j.at("params"))
    s.params.push_back({p.at("name").get<std::string>(), p.at("description").get<std::string>(),
                        p.at("value_kind").get<std::string>()});
  s.constraints = j.at("constraints").get<std::string>();
  s.index_text = j.at("index_text").get<std::string>();
  const auto& emb = j.at("embedding");
  s.embedding.resize(static_cast<Eigen::Index>(emb.size()));
  for (std::size_t i = 0; i < emb.size(); ++i)
    s.embedding[static_cast<Eigen::Index>(i)] = emb[i].get<double>();
  s.utility = j.at("utility").get<double>();
  const auto& stat = j.at("stat");
  s.stat.n_uses = stat.at("n_uses").get<std::int64_t>();
  s.stat.n_success = stat.at("n_success").get<std::int64_t>();
  s.stat.n_fail = stat.at("n_fail").get<std::int64_t>();
  if (!stat.at("last_reward").is_null()) s.stat.last_reward = stat.at("last_reward").get<int>();
  s.stat.frozen = stat.at("frozen").get<bool>();
  return s;
}

}  // namespace

double skill_similarity(const Vector& e_s, const Vector& e_m) {
  return 1.0 / (2.0 - cosine(e_s, e_m));
}

const SkillEntry* SkillLibrary::find(const std::string& id) const {
  for (const auto& e : entries_)
    if (e.id == id) return &e;
  return nullptr;
}

std::int64_t SkillLibrary::register_skill(const SkillEntry& entry) {
  if (ids_.count(entry.id))
    throw ConflictError("register_skill: duplicate id '" + entry.id + "'");
  if (entry.embedding.size() == 0) throw InvalidInputError("register_skill: empty embedding");
  if (!entry.embedding.allFinite())
    throw InvalidInputError("register_skill: non-finite embedding");
  if (entry.utility < 0.0 || entry.utility > 1.0)
    throw InvalidInputError("register_skill: utility outside [0,1]");
  if (entry.stat.n_uses != entry.stat.n_success + entry.stat.n_fail)
    throw InvalidInputError("register_skill: inconsistent usage statistics");
  if (d_ == 0) d_ = static_cast<int>(entry.embedding.size());
  if (entry.embedding.size() != d_)
    throw InvalidInputError("register_skill: embedding dimension mismatch");
  entries_.push_back(entry);
  ids_.insert(entry.id);
  return ++revision_;
}

std::vector<SkillEntry> SkillLibrary::eligible_skills(const std::set<std::string>& masked_ids,
                                                      const HyperParams& hp) const {
  std::vector<SkillEntry> out;
  for (const auto& e : entries_) {
    if (e.stat.frozen || e.utility < hp.u_min) continue;
    if (masked_ids.count(e.id) || masked_.count(e.id)) continue;
    out.push_back(e);
  }
  return out;
}

std::vector<std::pair<SkillEntry, double>> SkillLibrary::rank_skills(const StateQuery& state,
                                                                     const HyperParams& hp) {
  auto eligible = eligible_skills(state.masked_skill_ids, hp);
  masked_.clear();  // the one-round lease is spent by this retrieval round

  std::vector<std::pair<SkillEntry, double>> sims;
  sims.reserve(eligible.size());
  for (auto& e : eligible) {
    double sim = skill_similarity(state.embedding, e.embedding);
    sims.emplace_back(std::move(e), sim);
  }
  auto by_score_then_id = [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first.id < b.first.id;
  };
  std::sort(sims.begin(), sims.end(), by_score_then_id);
  if (static_cast<int>(sims.size()) > hp.k_skill_recall)
    sims.resize(static_cast<std::size_t>(hp.k_skill_recall));

  for (auto& [entry, score] : sims)
    score = hp.lambda_sem * score + hp.lambda_u * entry.utility;
  std::sort(sims.begin(), sims.end(), by_score_then_id);
  if (static_cast<int>(sims.size()) > hp.k_skill)
    sims.resize(static_cast<std::size_t>(hp.k_skill));
  return sims;
}

void SkillLibrary::mask_failed(const std::string& skill_id) {
  if (!ids_.count(skill_id))
    throw NotFoundError("mask_failed: unknown skill id '" + skill_id + "'");
  masked_.insert(skill_id);
}

SkillUpdateReport SkillLibrary::update_skill_utilities(const std::vector<std::string>& called_ids,
                                                       int reward, const HyperParams& hp) {
  if (reward != 0 && reward != 1)
    throw InvalidInputError("update_skill_utilities: reward must be 0 or 1");

  SkillUpdateReport report;
  std::vector<std::string> touched;
  for (const auto& id : called_ids) {
    auto it = std::find_if(entries_.begin(), entries_.end(),
                           [&](const SkillEntry& e) { return e.id == id; });
    if (it == entries_.end()) {
      report.missing_ids.push_back(id);
      continue;
    }
    UtilityUpdate u;
    u.id = id;
    u.u_before = it->utility;
    it->utility += hp.eta * (static_cast<double>(reward) - it->utility);
    it->stat.n_uses += 1;
    if (reward == 1) it->stat.n_success += 1;
    else it->stat.n_fail += 1;
    it->stat.last_reward = reward;
    u.u_after = it->utility;
    report.updates.push_back(u);
    if (std::find(touched.begin(), touched.end(), id) == touched.end()) touched.push_back(id);
  }

  for (const auto& id : touched) {
    auto it = std::find_if(entries_.begin(), entries_.end(),
                           [&](const SkillEntry& e) { return e.id == id; });
    if (it->utility < hp.u_prune && it->stat.n_uses >= hp.n_min) {
      Disposition d;
      if (hp.delete_on_prune) {
        d = Disposition::kDeleted;
        ids_.erase(it->id);
        masked_.erase(it->id);
        entries_.erase(it);
      } else {
        d = Disposition::kFrozen;
        it->stat.frozen = true;
      }
      for (auto& u : report.updates)
        if (u.id == id) u.disposition = d;
    }
  }

  if (!report.missing_ids.empty()) {
    std::string msg = "update_skill_utilities: unknown skill ids:";
    for (const auto& id : report.missing_ids) msg += " '" + id + "'";
    throw SkillUpdateError(msg, report);
  }
  return report;
}

SkillLibrary SkillLibrary::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open skill store: " + path);
  SkillLibrary lib;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      lib.register_skill(skill_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw ParseError(path + ":" + std::to_string(lineno) + ": " + e.what(), lineno);
    }
  }
  return lib;
}

void SkillLibrary::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write skill store: " + path);
  for (const auto& e : entries_) out << skill_to_json(e).dump() << '\n';
}

}  // namespace memrl
