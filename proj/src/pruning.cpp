// SPDX-License-Identifier: Apache-2.0
#include "lslab/pruning.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

#include "lslab/errors.hpp"

namespace lslab {

void PruneSchedule::validate() const {
  if (target_ratio < 0.0 || target_ratio >= 1.0)
    throw ConfigError("prune schedule: target ratio must be in [0, 1)");
  if (start_epoch < 1) throw ConfigError("prune schedule: start epoch must be >= 1");
  if (ramp_epochs < 1) throw ConfigError("prune schedule: ramp duration must be >= 1");
  if (total_epochs < 1) throw ConfigError("prune schedule: total epochs must be >= 1");
  if (start_epoch + ramp_epochs > total_epochs)
    throw ConfigError("prune schedule: E + k must not exceed T (no training left after pruning)");
}

double schedule_ratio(int epoch, const PruneSchedule& sched) {
  if (epoch < 1 || epoch > sched.total_epochs)
    throw ValueError("schedule_ratio: epoch " + std::to_string(epoch) + " outside 1.." +
                     std::to_string(sched.total_epochs));
  double P = sched.target_ratio;
  if (epoch <= sched.start_epoch) return 0.0;
  if (epoch <= sched.start_epoch + sched.ramp_epochs) {
    double frac = static_cast<double>(epoch - sched.start_epoch) / sched.ramp_epochs;
    double rem = 1.0 - frac;
    return P - P * rem * rem * rem;
  }
  return P;
}

Grouping grouping_from_string(const std::string& s) {
  if (s == "per_matrix") return Grouping::PerMatrix;
  if (s == "layerwise_cross_language" || s == "layerwise") return Grouping::LayerwiseCrossLanguage;
  if (s == "language_specific_global" || s == "langspec") return Grouping::LanguageSpecificGlobal;
  throw ConfigError("unknown grouping: " + s);
}

const char* to_string(Grouping g) {
  switch (g) {
    case Grouping::PerMatrix: return "per_matrix";
    case Grouping::LayerwiseCrossLanguage: return "layerwise_cross_language";
    case Grouping::LanguageSpecificGlobal: return "language_specific_global";
  }
  return "?";
}

long PruneGroup::total_elements() const {
  long n = 0;
  for (const PruneMember& m : members) n += static_cast<long>(m.B.numel());
  return n;
}

long PruneGroup::zeroed_elements() const {
  long n = 0;
  for (const PruneMember& m : members)
    for (double v : m.mask.data())
      if (v == 0.0) ++n;
  return n;
}

std::vector<PruneGroup> build_prune_plan(AdapterStack& stack, Grouping grouping,
                                         const std::set<ResourceType>& scope) {
  auto in_scope = [&](const std::string& code) {
    if (scope.empty()) return true;
    return scope.count(stack.language(code).resource_type) > 0;
  };

  std::vector<PruneGroup> plan;
  auto group_key = [&](const LsloAdapter& ad, const std::string& code) -> std::string {
    switch (grouping) {
      case Grouping::PerMatrix:
        return ad.site.name() + ":" + code;
      case Grouping::LayerwiseCrossLanguage:
        return std::string(to_string(ad.site.side)) + ".l" + std::to_string(ad.site.layer);
      case Grouping::LanguageSpecificGlobal:
        return code;
    }
    return "?";
  };

  std::map<std::string, std::size_t> index;
  for (LsloAdapter& ad : stack.adapters()) {
    for (const std::string& code : ad.lang_order) {
      if (!in_scope(code)) continue;
      LangFactors& f = ad.langs.at(code);
      std::string key = group_key(ad, code);
      auto it = index.find(key);
      if (it == index.end()) {
        index.emplace(key, plan.size());
        plan.push_back({key, {}});
        it = index.find(key);
      }
      plan[it->second].members.push_back({code, ad.site, f.B, f.mask});
    }
  }
  check_plan_disjoint(plan);
  return plan;
}

void check_plan_disjoint(const std::vector<PruneGroup>& plan) {
  std::set<const TensorNode*> seen;
  for (const PruneGroup& g : plan)
    for (const PruneMember& m : g.members)
      if (!seen.insert(m.B.node().get()).second)
        throw PlanError("B matrix of " + m.site.name() + ":" + m.lang +
                        " appears in more than one pruning group");
}

void l1_prune_group(PruneGroup& group, double ratio) {
  if (ratio < 0.0 || ratio > 1.0) throw ValueError("l1_prune_group: ratio must be in [0, 1]");
  long total = group.total_elements();
  long n_prune = static_cast<long>(std::floor(ratio * static_cast<double>(total)));

  struct Entry {
    double magnitude;
    bool was_masked;
    std::size_t member;
    std::size_t offset;
  };
  std::vector<Entry> entries;
  entries.reserve(static_cast<std::size_t>(total));
  for (std::size_t mi = 0; mi < group.members.size(); ++mi) {
    auto b = group.members[mi].B.data();
    auto m = group.members[mi].mask.data();
    for (std::size_t i = 0; i < b.size(); ++i) {
      bool masked = m[i] == 0.0;
      entries.push_back({masked ? 0.0 : std::abs(b[i]), masked, mi, i});
    }
  }
  // Smallest magnitudes first; among equal magnitudes already-masked entries
  // win so the zero set can only grow, then (member, offset) pins the order.
  std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
    if (a.magnitude != b.magnitude) return a.magnitude < b.magnitude;
    if (a.was_masked != b.was_masked) return a.was_masked;
    if (a.member != b.member) return a.member < b.member;
    return a.offset < b.offset;
  });

  for (PruneMember& m : group.members)
    std::fill(m.mask.data().begin(), m.mask.data().end(), 1.0);
  for (long i = 0; i < n_prune; ++i) {
    const Entry& e = entries[static_cast<std::size_t>(i)];
    group.members[e.member].mask.data()[e.offset] = 0.0;
  }
}

std::vector<PruneLogRow> prune_at_epoch(std::vector<PruneGroup>& plan, const PruneSchedule& sched,
                                        int epoch) {
  double ratio = schedule_ratio(epoch, sched);
  std::vector<PruneLogRow> rows;
  rows.reserve(plan.size());
  for (PruneGroup& g : plan) {
    l1_prune_group(g, ratio);
    rows.push_back({epoch, g.id, ratio, g.zeroed_elements(), g.total_elements()});
  }
  return rows;
}

std::vector<PruneLogRow> run_schedule(std::vector<PruneGroup>& plan, const PruneSchedule& sched,
                                      const std::function<void(int)>& epoch_body) {
  sched.validate();
  check_plan_disjoint(plan);
  std::vector<PruneLogRow> log;
  for (int e = 1; e <= sched.total_epochs; ++e) {
    auto rows = prune_at_epoch(plan, sched, e);
    log.insert(log.end(), rows.begin(), rows.end());
    if (epoch_body) epoch_body(e);
  }
  return log;
}

std::string prune_log_csv(const std::vector<PruneLogRow>& rows, const std::string& header_comment) {
  std::ostringstream os;
  if (!header_comment.empty()) os << "# " << header_comment << "\n";
  os << "epoch,group_id,target_ratio,zeroed,total\n";
  char buf[64];
  for (const PruneLogRow& r : rows) {
    std::snprintf(buf, sizeof(buf), "%.12g", r.target_ratio);
    os << r.epoch << "," << r.group_id << "," << buf << "," << r.zeroed << "," << r.total << "\n";
  }
  return os.str();
}

}  // namespace lslab
