#include "de/stdlib.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include "de/errors.hpp"

namespace de {

std::map<std::string, int> largest_remainder_split(int n,
                                                   const std::vector<std::string>& class_ids) {
  std::map<std::string, int> shares;
  if (class_ids.empty() || n <= 0) return shares;
  std::vector<std::string> ids = class_ids;
  std::sort(ids.begin(), ids.end());
  int k = static_cast<int>(ids.size());
  int base = n / k;
  int remainder = n % k;
  for (int i = 0; i < k; ++i) shares[ids[i]] = base + (i < remainder ? 1 : 0);
  return shares;
}

namespace {

constexpr double kBudgetSlack = 1e-9;

bool gate_passes(const ClassSpec& cls, int slots, double wall_hours,
                 const PolicyBudget& budget) {
  if (slots <= 0) return true;
  if (cls.kind == "cloud")
    return static_cast<double>(slots) * cls.unit_cost * wall_hours <=
           budget.funds_remaining + kBudgetSlack;
  if (cls.kind == "hpc")
    return static_cast<double>(slots) * wall_hours <=
           budget.allocation_remaining + kBudgetSlack;
  return true;  // grid is opportunistic, zero cost
}

void debit(const ClassSpec& cls, int slots, double wall_hours, PolicyBudget& budget) {
  if (slots <= 0) return;
  if (cls.kind == "cloud")
    budget.funds_remaining =
        std::max(0.0, budget.funds_remaining - slots * cls.unit_cost * wall_hours);
  else if (cls.kind == "hpc")
    budget.allocation_remaining =
        std::max(0.0, budget.allocation_remaining - slots * wall_hours);
}

}  // namespace

BundleAllocation allocate_bundle(int target_slots, double wall_hours,
                                 const std::vector<ClassSpec>& classes,
                                 PolicyBudget& budget, std::map<std::string, int>& headroom) {
  BundleAllocation result;
  std::map<std::string, ClassSpec> by_id;
  std::vector<std::string> active;
  for (const auto& cls : classes) {
    if (by_id.emplace(cls.class_id, cls).second) active.push_back(cls.class_id);
  }
  std::sort(active.begin(), active.end());

  int remaining = target_slots;
  while (remaining > 0 && !active.empty()) {
    ++result.iterations;
    auto split = largest_remainder_split(remaining, active);

    // Classes that cannot fund their whole share drop out; their share is
    // redistributed evenly among the rest on the next pass. The gate runs
    // against a scratch budget in ascending id order so that several classes
    // of the same kind cannot jointly overdraw within one pass.
    std::vector<std::string> failed;
    PolicyBudget scratch = budget;
    for (const auto& id : active) {
      if (split[id] <= 0) continue;
      if (gate_passes(by_id[id], split[id], wall_hours, scratch))
        debit(by_id[id], split[id], wall_hours, scratch);
      else
        failed.push_back(id);
    }
    if (!failed.empty()) {
      for (const auto& id : failed) active.erase(std::find(active.begin(), active.end(), id));
      continue;
    }

    // Classes out of headroom take what fits; the overflow redistributes.
    std::vector<std::string> capped;
    for (const auto& id : active)
      if (split[id] > headroom[id]) capped.push_back(id);
    if (!capped.empty()) {
      for (const auto& id : capped) {
        int grant = std::max(0, headroom[id]);
        if (grant > 0) {
          result.shares[id] += grant;
          headroom[id] -= grant;
          remaining -= grant;
          debit(by_id[id], grant, wall_hours, budget);
        }
        active.erase(std::find(active.begin(), active.end(), id));
      }
      continue;
    }

    for (const auto& id : active) {
      if (split[id] <= 0) continue;
      result.shares[id] += split[id];
      headroom[id] -= split[id];
      debit(by_id[id], split[id], wall_hours, budget);
    }
    remaining = 0;
  }
  return result;
}

namespace {

const Value& input_value(const std::map<std::string, DataProduct>& inputs,
                         const std::string& name) {
  auto it = inputs.find(name);
  if (it == inputs.end())
    raise(Errc::missing_product, "stdlib module needs product '" + name + "'");
  return it->second.value;
}

// ------------------------------------------------------------- sources

class JobQueueSource final : public Module {
 public:
  JobQueueSource(std::shared_ptr<FacilityAdapters> adapters, const Value& params)
      : adapters_(std::move(adapters)), endpoint_(params.value("endpoint", "default")) {}

  std::map<std::string, Value> invoke(const std::map<std::string, DataProduct>&) override {
    return {{"idle_jobs", Value(adapters_->queue_query(endpoint_))}};
  }

 private:
  std::shared_ptr<FacilityAdapters> adapters_;
  std::string endpoint_;
};

class ResourceManifestSource final : public Module {
 public:
  explicit ResourceManifestSource(std::shared_ptr<FacilityAdapters> adapters)
      : adapters_(std::move(adapters)) {}

  std::map<std::string, Value> invoke(const std::map<std::string, DataProduct>&) override {
    auto classes = adapters_->manifest_query();
    std::sort(classes.begin(), classes.end(),
              [](const auto& a, const auto& b) { return a.class_id < b.class_id; });
    return {{"resources", Value(classes)}};
  }

 private:
  std::shared_ptr<FacilityAdapters> adapters_;
};

class BudgetSource final : public Module {
 public:
  explicit BudgetSource(std::shared_ptr<FacilityAdapters> adapters)
      : adapters_(std::move(adapters)) {}

  std::map<std::string, Value> invoke(const std::map<std::string, DataProduct>&) override {
    return {{"budget", Value(adapters_->budget_query())}};
  }

 private:
  std::shared_ptr<FacilityAdapters> adapters_;
};

class SlotCensusSource final : public Module {
 public:
  explicit SlotCensusSource(std::shared_ptr<FacilityAdapters> adapters)
      : adapters_(std::move(adapters)) {}

  std::map<std::string, Value> invoke(const std::map<std::string, DataProduct>&) override {
    return {{"running_slots", Value(adapters_->slots_query())}};
  }

 private:
  std::shared_ptr<FacilityAdapters> adapters_;
};

// ----------------------------------------------------------- transforms

class ShortlistTransform final : public Module {
 public:
  std::map<std::string, Value> invoke(
      const std::map<std::string, DataProduct>& inputs) override {
    auto bundles = input_value(inputs, "idle_jobs").get<std::vector<JobBundle>>();
    auto resources = input_value(inputs, "resources").get<std::vector<ResourceClassInfo>>();

    std::map<std::string, const ResourceClassInfo*> classes;
    for (const auto& rc : resources) classes[rc.class_id] = &rc;

    Value shortlist = Value::array();
    for (const auto& bundle : bundles) {
      Value eligible = Value::array();
      for (const auto& preferred : bundle.preferred_resources) {
        auto it = classes.find(preferred);
        if (it == classes.end()) continue;
        const ResourceClassInfo& rc = *it->second;
        if (rc.up && rc.capacity_limit - rc.current_occupancy > 0)
          eligible.push_back(preferred);
      }
      shortlist.push_back(Value{{"bundle_id", bundle.bundle_id},
                                {"count", bundle.count},
                                {"wall_hours", bundle.requirements.wall_hours},
                                {"eligible", std::move(eligible)}});
    }
    return {{"shortlist", std::move(shortlist)}};
  }
};

class AllocateTransform final : public Module {
 public:
  explicit AllocateTransform(const Value& params)
      : per_cycle_cap_(params.value("per_cycle_cap", 100)) {
    if (per_cycle_cap_ < 1) throw std::runtime_error("per_cycle_cap must be >= 1");
  }

  std::map<std::string, Value> invoke(
      const std::map<std::string, DataProduct>& inputs) override {
    const Value& shortlist = input_value(inputs, "shortlist");
    auto budget_status = input_value(inputs, "budget").get<BudgetStatus>();
    auto resources = input_value(inputs, "resources").get<std::vector<ResourceClassInfo>>();

    std::map<std::string, ClassSpec> specs;
    std::map<std::string, int> headroom;
    for (const auto& rc : resources) {
      specs[rc.class_id] = ClassSpec{rc.class_id, rc.kind, rc.unit_cost};
      headroom[rc.class_id] = std::max(0, rc.capacity_limit - rc.current_occupancy);
    }

    PolicyBudget budget{budget_status.cloud_funds_remaining,
                        budget_status.hpc_allocation_remaining};

    Value plan = Value::array();
    for (const auto& entry : shortlist) {
      std::string bundle_id = entry.at("bundle_id").get<std::string>();
      int count = entry.at("count").get<int>();
      double wall_hours = entry.at("wall_hours").get<double>();
      std::vector<ClassSpec> classes;
      for (const auto& id : entry.at("eligible")) {
        auto it = specs.find(id.get<std::string>());
        if (it != specs.end()) classes.push_back(it->second);
      }
      int target = std::min(count, per_cycle_cap_);
      auto allocation = allocate_bundle(target, wall_hours, classes, budget, headroom);
      if (allocation.shares.empty()) continue;

      Value share_map = allocation.shares;
      for (const auto& [class_id, slots] : allocation.shares) {
        ProvisionRequest request;
        request.class_id = class_id;
        request.slots = slots;
        request.for_bundle = bundle_id;
        request.justification = Value{{"share", share_map}};
        plan.push_back(Value(request));
      }
    }
    return {{"allocation_plan", std::move(plan)}};
  }

 private:
  int per_cycle_cap_;
};

// ----------------------------------------------------------- publishers

class ProvisionPublisher final : public Module {
 public:
  explicit ProvisionPublisher(std::shared_ptr<FacilityAdapters> adapters)
      : adapters_(std::move(adapters)) {}

  std::map<std::string, Value> invoke(
      const std::map<std::string, DataProduct>& inputs) override {
    const Value& plan = input_value(inputs, "allocation_plan");
    Value fired = Value::array();
    if (auto it = inputs.find("inference_result"); it != inputs.end())
      fired = it->second.value.value("fired_rules", Value::array());

    Value receipts = Value::array();
    for (const auto& entry : plan) {
      ProvisionRequest request = entry.get<ProvisionRequest>();
      request.justification["fired_rules"] = fired;
      receipts.push_back(Value(adapters_->submit(request)));
    }
    return {{"provision_receipts", std::move(receipts)}};
  }

 private:
  std::shared_ptr<FacilityAdapters> adapters_;
};

// Collapses the per-class plan into one target worker count; provisioners of
// this style pick the concrete sites themselves.
class WorkerPoolPublisher final : public Module {
 public:
  WorkerPoolPublisher(std::shared_ptr<WorkerPoolProvisioner> pool, const Value& params)
      : pool_(std::move(pool)),
        worker_config_(params.value("worker_config", Value::object())) {}

  std::map<std::string, Value> invoke(
      const std::map<std::string, DataProduct>& inputs) override {
    const Value& plan = input_value(inputs, "allocation_plan");
    int total = 0;
    for (const auto& entry : plan) total += entry.at("slots").get<int>();
    Value receipts = Value::array();
    if (total > 0) receipts.push_back(Value(pool_->request_workers(total, worker_config_)));
    return {{"provision_receipts", std::move(receipts)}};
  }

 private:
  std::shared_ptr<WorkerPoolProvisioner> pool_;
  Value worker_config_;
};

class MetricsPublisher final : public Module {
 public:
  MetricsPublisher(const Clock& clock, std::filesystem::path path)
      : clock_(clock), path_(std::move(path)) {}

  std::map<std::string, Value> invoke(
      const std::map<std::string, DataProduct>& inputs) override {
    const Value& idle_jobs = input_value(inputs, "idle_jobs");
    auto budget = input_value(inputs, "budget").get<BudgetStatus>();
    const Value& slots = input_value(inputs, "running_slots");
    Generation generation = inputs.at("inference_result").generation;

    if (!out_.is_open()) {
      if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
      out_.open(path_, std::ios::trunc);
      if (!out_) throw std::runtime_error("cannot open metrics file " + path_.string());
      for (const auto& [class_id, count] : slots.items()) columns_.push_back(class_id);
      out_ << "sim_time,generation,idle_jobs_total";
      for (const auto& class_id : columns_) out_ << ",slots_" << class_id;
      out_ << ",funds_remaining,allocation_remaining\n";
    }

    long long idle_total = 0;
    for (const auto& bundle : idle_jobs) idle_total += bundle.at("count").get<int>();

    out_ << clock_.now_ms() / 1000 << ',' << generation << ',' << idle_total;
    for (const auto& class_id : columns_) {
      int running = slots.contains(class_id) ? slots[class_id].get<int>() : 0;
      out_ << ',' << running;
    }
    out_ << ',' << Value(budget.cloud_funds_remaining).dump() << ','
         << Value(budget.hpc_allocation_remaining).dump() << '\n';
    out_.flush();
    return {};
  }

 private:
  const Clock& clock_;
  std::filesystem::path path_;
  std::ofstream out_;
  std::vector<std::string> columns_;
};

}  // namespace

void register_stdlib(PluginRegistry& registry, std::shared_ptr<FacilityAdapters> adapters,
                     const Clock& clock, const std::filesystem::path& metrics_dir,
                     std::shared_ptr<WorkerPoolProvisioner> worker_pool) {
  registry.add("stdlib.job_queue_source", [adapters](const Value& params) {
    return std::make_unique<JobQueueSource>(adapters, params);
  });
  registry.add("stdlib.resource_manifest_source", [adapters](const Value&) {
    return std::make_unique<ResourceManifestSource>(adapters);
  });
  registry.add("stdlib.budget_source", [adapters](const Value&) {
    return std::make_unique<BudgetSource>(adapters);
  });
  registry.add("stdlib.slot_census_source", [adapters](const Value&) {
    return std::make_unique<SlotCensusSource>(adapters);
  });
  registry.add("stdlib.shortlist",
               [](const Value&) { return std::make_unique<ShortlistTransform>(); });
  registry.add("stdlib.allocate",
               [](const Value& params) { return std::make_unique<AllocateTransform>(params); });
  registry.add("stdlib.provision_publisher", [adapters](const Value&) {
    return std::make_unique<ProvisionPublisher>(adapters);
  });
  registry.add("stdlib.metrics_publisher", [&clock, metrics_dir](const Value& params) {
    std::string channel = params.at("channel").get<std::string>();
    return std::make_unique<MetricsPublisher>(clock, metrics_dir / (channel + ".csv"));
  });
  if (worker_pool) {
    registry.add("stdlib.worker_pool_publisher", [worker_pool](const Value& params) {
      return std::make_unique<WorkerPoolPublisher>(worker_pool, params);
    });
  }
}

}  // namespace de
