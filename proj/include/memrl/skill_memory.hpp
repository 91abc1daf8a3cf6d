#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "memrl/case_memory.hpp"
#include "memrl/embedding.hpp"
#include "memrl/errors.hpp"
#include "memrl/hyperparams.hpp"

namespace memrl {

struct SkillParam {
  std::string name;
  std::string description;
  std::string value_kind;
};

struct SkillStats {
  std::int64_t n_uses = 0;
  std::int64_t n_success = 0;
  std::int64_t n_fail = 0;
  std::optional<int> last_reward;
  bool frozen = false;
};

struct SkillEntry {
  std::string id;
  std::string script;
  std::string doc;
  std::vector<SkillParam> params;
  std::string constraints;
  std::string index_text;
  Vector embedding;
  double utility = 0.5;
  SkillStats stat;
};

enum class Disposition { kNone, kFrozen, kDeleted };

struct UtilityUpdate {
  std::string id;
  double u_before = 0.0;
  double u_after = 0.0;
  Disposition disposition = Disposition::kNone;
};

struct SkillUpdateReport {
  std::vector<UtilityUpdate> updates;
  std::vector<std::string> missing_ids;
};

// Unknown ids in a utility update: every known id is still applied, then the
// aggregated error is raised carrying the applied report.
class SkillUpdateError : public NotFoundError {
 public:
  SkillUpdateError(const std::string& what, SkillUpdateReport report)
      : NotFoundError(what, report.missing_ids), report(std::move(report)) {}
  SkillUpdateReport report;
};

// Bounded similarity 1 / (1 + (1 - cos)) in (0, 1].
double skill_similarity(const Vector& e_s, const Vector& e_m);

class SkillLibrary {
 public:
  SkillLibrary() = default;

  int dimension() const { return d_; }
  std::size_t size() const { return entries_.size(); }
  const std::vector<SkillEntry>& entries() const { return entries_; }
  const SkillEntry* find(const std::string& id) const;
  const std::set<std::string>& pending_masks() const { return masked_; }

  std::int64_t register_skill(const SkillEntry& entry);

  // {m : U >= u_min, not frozen, id not masked}; reads the pending mask set
  // without consuming the lease.
  std::vector<SkillEntry> eligible_skills(const std::set<std::string>& masked_ids,
                                          const HyperParams& hp) const;

  // Eligibility filter -> top-K by bounded similarity -> fused
  // lambda_sem * sim + lambda_u * U -> top-k. Consumes the one-round mask
  // lease: skills masked via mask_failed are hidden from exactly this call.
  std::vector<std::pair<SkillEntry, double>> rank_skills(const StateQuery& state,
                                                         const HyperParams& hp);

  // One-round exclusion of a skill that just failed.
  void mask_failed(const std::string& skill_id);
  void clear_masks() { masked_.clear(); }

  // Per call: U += eta * (r - U), stats advance, last reward recorded. After
  // the pass, low-utility well-observed skills are frozen (or deleted when
  // configured). Unknown ids raise SkillUpdateError after the rest applied.
  SkillUpdateReport update_skill_utilities(const std::vector<std::string>& called_ids, int reward,
                                           const HyperParams& hp);

  static SkillLibrary load(const std::string& path);
  void save(const std::string& path) const;

 private:
  std::vector<SkillEntry> entries_;
  std::set<std::string> ids_;
  std::set<std::string> masked_;
  std::int64_t revision_ = 0;
  int d_ = 0;
};

}  // namespace memrl
