// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <set>
#include <string>
#include <vector>

#include "lslab/lslo.hpp"

namespace lslab {

// Three-stage gradual pruning schedule: flat zero, cubic ramp, flat target.
struct PruneSchedule {
  double target_ratio = 0.0;  // P in [0, 1)
  int start_epoch = 2;        // E, 1-based
  int ramp_epochs = 8;        // k
  int total_epochs = 15;      // T

  void validate() const;
};

// Ratio for 1-based epoch e:
//   0                                   e <= E
//   P - P * (1 - (e - E)/k)^3           E < e <= E + k
//   P                                   e > E + k
double schedule_ratio(int epoch, const PruneSchedule& sched);

enum class Grouping { PerMatrix, LayerwiseCrossLanguage, LanguageSpecificGlobal };
Grouping grouping_from_string(const std::string& s);
const char* to_string(Grouping g);

// One member references a single B matrix and its mask.
struct PruneMember {
  std::string lang;
  LsloSite site;
  Tensor B;
  Tensor mask;
};

struct PruneGroup {
  std::string id;
  std::vector<PruneMember> members;

  long total_elements() const;
  long zeroed_elements() const;  // mask zeros
};

// Builds the pruning plan over the stack's B matrices. The scope filter keeps
// only languages of the listed resource types (empty set = all languages).
std::vector<PruneGroup> build_prune_plan(AdapterStack& stack, Grouping grouping,
                                         const std::set<ResourceType>& scope);

// Throws PlanError if any B matrix appears in two groups.
void check_plan_disjoint(const std::vector<PruneGroup>& plan);

// Masks exactly floor(ratio * total) entries: those of smallest magnitude
// jointly across all members, with previously masked entries reading as zero
// (so they are re-selected first and sparsity is monotone under a
// nondecreasing ratio).
void l1_prune_group(PruneGroup& group, double ratio);

struct PruneLogRow {
  int epoch;
  std::string group_id;
  double target_ratio;
  long zeroed;
  long total;
};

// Recomputes all masks of the plan at schedule_ratio(epoch).
std::vector<PruneLogRow> prune_at_epoch(std::vector<PruneGroup>& plan, const PruneSchedule& sched,
                                        int epoch);

// Runs the full schedule: for each epoch, recompute masks at the epoch-start
// ratio, then invoke the epoch body (e.g. one training epoch).
std::vector<PruneLogRow> run_schedule(std::vector<PruneGroup>& plan, const PruneSchedule& sched,
                                      const std::function<void(int)>& epoch_body);

std::string prune_log_csv(const std::vector<PruneLogRow>& rows, const std::string& header_comment);

}  // namespace lslab
