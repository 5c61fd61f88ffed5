#pragma once

#include <atomic>
#include <condition_variable>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "de/config.hpp"
#include "de/dataspace.hpp"
#include "de/diag.hpp"
#include "de/logic_engine.hpp"
#include "de/plugin.hpp"

namespace de {

enum class ChannelState { boot, steady, cycling, stopping, stopped, failed };

const char* to_string(ChannelState state);

struct CycleResult {
  Generation generation = 0;
  CycleOutcomeKind outcome = CycleOutcomeKind::success;
  std::vector<std::string> fired_rules;
  std::vector<std::string> publishers_run;
  TimeMs started_at = 0;
  TimeMs ended_at = 0;
  std::string error;
};

struct ChannelStatus {
  ChannelState state = ChannelState::boot;
  std::uint64_t cycles = 0;
  std::optional<CycleResult> last_cycle;
  Generation open_generation = 0;

  Value to_json() const;
};

// Decision-cycle trigger coordination. Any number of source completions may
// signal; at most one cycle runs at a time, and signals arriving while a
// cycle is in flight coalesce into exactly one follow-up.
class TriggerCell {
 public:
  void signal();
  bool try_begin();  // consume the pending trigger unless a cycle is in flight
  bool finish();     // cycle done; true if a follow-up trigger is pending
  std::uint64_t signals() const { return signals_.load(); }

 private:
  mutable std::mutex mu_;
  bool pending_ = false;
  bool in_flight_ = false;
  std::atomic<std::uint64_t> signals_{0};
};

// One assembled Decision Channel: instantiated modules, the transform order,
// the inference plan, and the per-channel execution state machine. The same
// object serves both execution styles: the co-simulation driver calls
// invoke_source()/run_pending_cycles() itself, while start() spawns the
// periodic source loops and the cycle executor for wall-clock operation.
// Failures inside plugins become diagnostics and cycle outcomes; they never
// leave the channel.
class Channel {
 public:
  struct Options {
    double default_source_period_s = 30;
    double boot_timeout_s = 120;
    double stop_grace_s = 30;
  };

  Channel(const ChannelConfig& config, const Options& options, const PluginRegistry& registry,
          DataSpace& space, SpaceHandle handle, const Clock& clock);
  ~Channel();

  Channel(const Channel&) = delete;
  Channel& operator=(const Channel&) = delete;

  const std::string& id() const { return id_; }
  ChannelState state() const;
  ChannelStatus status() const;
  const std::vector<std::string>& transform_order() const { return transform_order_; }

  // -- synchronous driving (co-simulation and tests) --
  std::size_t source_count() const { return sources_.size(); }
  const std::string& source_name(std::size_t i) const { return sources_[i].display_name; }
  double source_period_s(std::size_t i) const { return sources_[i].period_s; }
  void invoke_source(std::size_t i);
  void trigger();
  std::vector<CycleResult> run_pending_cycles();
  void poll(TimeMs now);  // boot-timeout watchdog
  void shutdown();        // synchronous close (driver mode)

  // -- threaded lifecycle (wall-clock mode) --
  void start();
  void stop();

  // -- counters and diagnostics --
  std::uint64_t cycles_executed() const { return cycles_.load(); }
  int max_in_flight() const { return max_in_flight_.load(); }
  std::uint64_t trigger_signals() const { return cell_.signals(); }
  std::vector<std::string> diagnostics() const;

 private:
  struct SourceRuntime {
    bool is_proxy = false;
    ModuleSpec spec;              // sources
    SourceProxyBinding binding;   // proxies
    std::string display_name;
    double period_s = 0;
    std::unique_ptr<Module> impl;
    bool ran_ok = false;
    int consecutive_failures = 0;
  };

  void assemble(const ChannelConfig& config, const PluginRegistry& registry);
  void order_transforms(const ChannelConfig& config);
  CycleResult execute_cycle();
  void run_transforms(const DataBlockView& view, CycleResult& result);
  InferenceResult run_logic(const DataBlockView& view);
  void run_publishers(const DataBlockView& view, const InferenceResult& inference,
                      CycleResult& result);
  std::map<std::string, DataProduct> gather_inputs(const DataBlockView& view,
                                                   const std::vector<std::string>& names,
                                                   const std::string& consumer);
  void note(diag::Level level, const std::string& module, const std::string& event,
            const std::string& detail);
  void enter_failed(const std::string& why);
  void set_state(ChannelState next);
  void source_loop(std::size_t i);
  void executor_loop();

  std::string id_;
  Options options_;
  DataSpace& space_;
  SpaceHandle handle_;
  const Clock& clock_;

  std::vector<SourceRuntime> sources_;
  std::vector<ModuleSpec> transform_specs_;
  std::vector<std::unique_ptr<Module>> transform_impls_;  // topological order
  std::vector<std::string> transform_order_;
  std::map<std::string, ModuleSpec> publisher_specs_;
  std::map<std::string, std::unique_ptr<Module>> publisher_impls_;
  DependencyPlan plan_;

  TriggerCell cell_;
  mutable std::mutex state_mu_;
  ChannelState state_ = ChannelState::boot;
  bool started_ = false;
  std::optional<CycleResult> last_cycle_;
  TimeMs boot_deadline_ = 0;
  std::vector<std::string> diagnostics_;

  std::atomic<std::uint64_t> cycles_{0};
  std::atomic<int> in_flight_{0};
  std::atomic<int> max_in_flight_{0};

  std::atomic<bool> stop_requested_{false};
  std::vector<std::thread> source_threads_;
  std::thread executor_thread_;
  std::mutex wake_mu_;
  std::condition_variable wake_cv_;
};

}  // namespace de
