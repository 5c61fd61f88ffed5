#pragma once

#include <cstdint>
#include <deque>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "de/config.hpp"
#include "de/provisioning.hpp"

namespace de {

struct ProviderSpec {
  std::string class_id;
  std::string kind;  // cloud | hpc | grid
  int capacity = 0;
  double unit_cost = 0;
  double price_performance = 1.0;
  std::int64_t startup_latency_s = 0;
  double preemption_rate_per_slot_hour = 0;  // grid only
  bool up = true;
};

struct JobWave {
  std::int64_t at_s = 0;
  int count = 0;
  JobRequirements requirements;
  std::vector<std::string> preferred;
};

struct SimScenario {
  std::string name;
  std::uint64_t seed = 1;
  std::int64_t duration_s = 0;
  std::int64_t dt_s = 5;
  double initial_funds = 0;
  double initial_allocation_hours = 0;
  std::int64_t idle_retire_s = 300;
  std::vector<ProviderSpec> providers;
  std::vector<JobWave> waves;
};

SimScenario parse_scenario_text(const std::string& text, const std::string& filename);
SimScenario load_scenario(const std::filesystem::path& path);

// Spend accounting independent of anything the engine sees; the budget the
// engine is shown is derived from this ledger, never the other way round.
struct Ledger {
  double cloud_spend = 0;
  double hpc_hours_used = 0;
  std::map<std::string, double> slot_hours_by_class;
};

// Deterministic simulated hybrid facility: job queue, cloud/HPC/grid slot
// pools with startup latency, grid preemption, idle retirement, and a spend
// ledger. Same scenario and seed, same byte-for-byte outputs.
class FacilitySim final : public FacilityAdapters {
 public:
  explicit FacilitySim(SimScenario scenario);

  void step(std::int64_t dt_s);
  std::int64_t now_s() const { return now_s_; }

  // FacilityAdapters
  std::vector<JobBundle> queue_query(const std::string& endpoint) override;
  std::vector<ResourceClassInfo> manifest_query() override;
  BudgetStatus budget_query() override;
  std::map<std::string, int> slots_query() override;
  Receipt submit(const ProvisionRequest& request) override;

  // Inspection for the driver, reports, and test oracles.
  struct Counts {
    long long total = 0;
    long long released = 0;
    long long queued = 0;
    long long running = 0;
    long long completed = 0;
    long long preempted_requeues = 0;
  };
  Counts counts() const;
  const Ledger& ledger() const { return ledger_; }
  bool all_done() const;
  int total_slots() const;    // pending + materialized
  int running_slots() const;  // materialized (idle + busy)
  std::map<std::string, int> peak_slots() const { return peaks_; }
  double initial_funds() const { return scenario_.initial_funds; }
  double initial_allocation() const { return scenario_.initial_allocation_hours; }
  void set_provider_up(const std::string& class_id, bool up);

 private:
  struct Slot {
    std::string class_id;
    std::int64_t ready_at = 0;
    bool materialized = false;
    std::int64_t idle_since = 0;
    int job = -1;  // index into jobs_, -1 when idle
    bool dead = false;
  };

  struct Job {
    int wave = 0;
    double remaining_s = 0;
    int slot = -1;
    bool completed = false;
  };

  void release_waves();
  void match_jobs();
  void kill_slot(Slot& slot, bool requeue_job);
  void requeue(int job_index);
  int occupancy(const std::string& class_id) const;
  double wave_wall_hours(const std::string& bundle_id) const;

  SimScenario scenario_;
  std::map<std::string, ProviderSpec> providers_;
  std::int64_t now_s_ = 0;
  std::vector<Slot> slots_;
  std::vector<Job> jobs_;
  std::map<std::string, std::deque<int>> class_queues_;
  std::vector<bool> wave_released_;
  Ledger ledger_;
  std::map<std::string, int> peaks_;
  std::mt19937_64 rng_;
  long long completed_ = 0;
  long long preempted_requeues_ = 0;
};

struct RunReport {
  std::string outcome;  // success | timeout
  long long jobs_completed = 0;
  long long jobs_total = 0;
  std::map<std::string, int> peak_slots;
  double cloud_spend = 0;
  double hpc_hours_used = 0;
  std::map<std::string, std::uint64_t> cycles;
  std::int64_t sim_seconds = 0;
  std::filesystem::path metrics_dir;

  Value to_json() const;  // the documented report.json object
  std::string text() const;
};

struct RunOptions {
  std::filesystem::path archive_dir = "archive";
  std::filesystem::path metrics_dir = "metrics";
  std::optional<std::int64_t> duration_override_s;
};

// Wires the provisioning standard library to a fresh simulator and drives
// the engine and the facility on the same simulated clock until every job
// finishes and the pool drains, or the scenario duration runs out.
RunReport run_scenario(const SimScenario& scenario, const EngineConfig& config,
                       const RunOptions& options);

}  // namespace de
