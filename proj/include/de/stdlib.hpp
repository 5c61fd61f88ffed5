#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "de/plugin.hpp"
#include "de/provisioning.hpp"

namespace de {

// Even split of n slots over the given classes by the largest-remainder
// method; with equal quotas the remainder goes to the smallest class ids.
// Shares differ pairwise by at most one and sum to n.
std::map<std::string, int> largest_remainder_split(int n,
                                                   const std::vector<std::string>& class_ids);

struct ClassSpec {
  std::string class_id;
  std::string kind;  // cloud | hpc | grid
  double unit_cost = 0;
};

struct PolicyBudget {
  double funds_remaining = 0;
  double allocation_remaining = 0;
};

struct BundleAllocation {
  std::map<std::string, int> shares;  // class -> slots (only nonzero entries)
  int iterations = 0;
};

// Splits target_slots evenly across the classes that pass their budget gate
// (cloud: funds cover slots x unit_cost x wall_hours; hpc: allocation covers
// slots x wall_hours; grid: always), clamping each share to the class's
// remaining headroom and redistributing drops and overflow by the same even
// split until stable. Terminates within one iteration per class. Granted
// shares are debited from the budget and headroom working copies.
BundleAllocation allocate_bundle(int target_slots, double wall_hours,
                                 const std::vector<ClassSpec>& classes,
                                 PolicyBudget& budget, std::map<std::string, int>& headroom);

// Registers the provisioning standard library against a facility:
//   stdlib.job_queue_source        -> "idle_jobs"
//   stdlib.resource_manifest_source-> "resources"
//   stdlib.budget_source           -> "budget"
//   stdlib.slot_census_source      -> "running_slots"
//   stdlib.shortlist               -> "shortlist"
//   stdlib.allocate                -> "allocation_plan"
//   stdlib.provision_publisher     -> submits requests, records receipts
//   stdlib.metrics_publisher       -> one CSV row per cycle
//   stdlib.worker_pool_publisher   -> collapsed request (when a worker-pool
//                                     provisioner is supplied)
void register_stdlib(PluginRegistry& registry, std::shared_ptr<FacilityAdapters> adapters,
                     const Clock& clock, const std::filesystem::path& metrics_dir,
                     std::shared_ptr<WorkerPoolProvisioner> worker_pool = nullptr);

}  // namespace de
