#pragma once

#include <map>
#include <string>
#include <vector>

#include "de/value.hpp"

namespace de {

struct JobRequirements {
  int cpus = 1;
  int memory_mb = 0;
  double wall_hours = 0;
};

// Idle jobs grouped by identical (requirements, preferences).
struct JobBundle {
  std::string bundle_id;
  int count = 0;
  JobRequirements requirements;
  std::vector<std::string> preferred_resources;
};

struct ResourceClassInfo {
  std::string class_id;
  std::string kind;  // cloud | hpc | grid
  double price_performance = 1.0;
  // currency per slot-hour (cloud), wall-hours per slot-hour (hpc), 0 (grid)
  double unit_cost = 0;
  int capacity_limit = 0;
  int current_occupancy = 0;
  bool up = true;
};

struct BudgetStatus {
  double cloud_funds_remaining = 0;
  double hpc_allocation_remaining = 0;
};

struct ProvisionRequest {
  std::string class_id;
  int slots = 0;
  std::string for_bundle;
  Value justification = Value::object();
};

struct Receipt {
  std::string class_id;
  int slots = 0;
  std::string for_bundle;
  bool accepted = false;
  std::string reason;
};

void to_json(Value& j, const JobRequirements& v);
void from_json(const Value& j, JobRequirements& v);
void to_json(Value& j, const JobBundle& v);
void from_json(const Value& j, JobBundle& v);
void to_json(Value& j, const ResourceClassInfo& v);
void from_json(const Value& j, ResourceClassInfo& v);
void to_json(Value& j, const BudgetStatus& v);
void from_json(const Value& j, BudgetStatus& v);
void to_json(Value& j, const ProvisionRequest& v);
void from_json(const Value& j, ProvisionRequest& v);
void to_json(Value& j, const Receipt& v);
void from_json(const Value& j, Receipt& v);

// Query/submit surface the standard-library modules use to reach the
// facility. The simulator implements it; tests substitute fault-injecting
// fakes. Calls may throw Error(adapter_unavailable).
class FacilityAdapters {
 public:
  virtual ~FacilityAdapters() = default;

  virtual std::vector<JobBundle> queue_query(const std::string& endpoint) = 0;
  virtual std::vector<ResourceClassInfo> manifest_query() = 0;
  virtual BudgetStatus budget_query() = 0;
  virtual std::map<std::string, int> slots_query() = 0;
  virtual Receipt submit(const ProvisionRequest& request) = 0;
};

// Alternative provisioner in the VC3 style: a single target worker count and
// a worker configuration, with no per-site detail.
class WorkerPoolProvisioner {
 public:
  virtual ~WorkerPoolProvisioner() = default;
  virtual Receipt request_workers(int target_count, const Value& worker_config) = 0;
};

}  // namespace de
