#include "de/facility_sim.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "de/channel.hpp"
#include "de/stdlib.hpp"
#include "de/toml_lite.hpp"

namespace de {

namespace {

[[noreturn]] void bad_scenario(const std::string& where, const std::string& msg) {
  raise(Errc::parse_error, where + ": " + msg);
}

}  // namespace

SimScenario parse_scenario_text(const std::string& text, const std::string& filename) {
  Value root = parse_toml_lite(text, filename);
  SimScenario sc;

  auto top = root.find("scenario");
  if (top == root.end()) bad_scenario(filename, "missing [scenario] table");
  sc.name = top->value("name", "scenario");
  sc.seed = top->value("seed", 1ULL);
  sc.duration_s = top->value("duration", 0LL);
  sc.dt_s = top->value("dt", 5LL);
  sc.initial_funds = top->value("initial_funds", 0.0);
  sc.initial_allocation_hours = top->value("initial_allocation", 0.0);
  sc.idle_retire_s = top->value("idle_retire", 300LL);
  if (sc.duration_s <= 0) bad_scenario(filename, "scenario duration must be positive");
  if (sc.dt_s <= 0) bad_scenario(filename, "scenario dt must be positive");

  if (auto it = root.find("provider"); it != root.end()) {
    for (const auto& entry : *it) {
      ProviderSpec p;
      p.class_id = entry.value("class_id", "");
      p.kind = entry.value("kind", "");
      p.capacity = entry.value("capacity", 0);
      p.unit_cost = entry.value("unit_cost", 0.0);
      p.price_performance = entry.value("price_performance", 1.0);
      p.startup_latency_s = entry.value("startup_latency", 0LL);
      p.preemption_rate_per_slot_hour = entry.value("preemption_rate", 0.0);
      p.up = entry.value("state", "up") == std::string("up");
      if (p.class_id.empty()) bad_scenario(filename, "provider without class_id");
      if (p.kind != "cloud" && p.kind != "hpc" && p.kind != "grid")
        bad_scenario(filename, "provider '" + p.class_id + "' has unknown kind '" + p.kind + "'");
      if (p.capacity <= 0)
        bad_scenario(filename, "provider '" + p.class_id + "' needs a positive capacity");
      sc.providers.push_back(std::move(p));
    }
  }

  if (auto it = root.find("wave"); it != root.end()) {
    for (const auto& entry : *it) {
      JobWave w;
      w.at_s = entry.value("at", 0LL);
      w.count = entry.value("count", 0);
      w.requirements.cpus = entry.value("cpus", 1);
      w.requirements.memory_mb = entry.value("memory_mb", 2000);
      w.requirements.wall_hours = entry.value("wall_hours", 1.0);
      if (entry.contains("preferred"))
        entry.at("preferred").get_to(w.preferred);
      if (w.count < 1) bad_scenario(filename, "wave with count < 1");
      if (w.preferred.empty()) bad_scenario(filename, "wave without preferred resources");
      sc.waves.push_back(std::move(w));
    }
  }
  return sc;
}

SimScenario load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) raise(Errc::io_error, "cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_scenario_text(buf.str(), path.string());
}

FacilitySim::FacilitySim(SimScenario scenario)
    : scenario_(std::move(scenario)), rng_(scenario_.seed) {
  for (const auto& p : scenario_.providers) {
    providers_[p.class_id] = p;
    peaks_[p.class_id] = 0;
    ledger_.slot_hours_by_class[p.class_id] = 0;
  }
  wave_released_.assign(scenario_.waves.size(), false);
  release_waves();
}

void FacilitySim::release_waves() {
  for (std::size_t w = 0; w < scenario_.waves.size(); ++w) {
    if (wave_released_[w] || scenario_.waves[w].at_s > now_s_) continue;
    wave_released_[w] = true;
    const JobWave& wave = scenario_.waves[w];
    for (int i = 0; i < wave.count; ++i) {
      Job job;
      job.wave = static_cast<int>(w);
      job.remaining_s = wave.requirements.wall_hours * 3600.0;
      int index = static_cast<int>(jobs_.size());
      jobs_.push_back(job);
      for (const auto& cls : wave.preferred) class_queues_[cls].push_back(index);
    }
  }
}

void FacilitySim::requeue(int job_index) {
  Job& job = jobs_[job_index];
  job.slot = -1;
  // Lost work is lost; the job restarts from scratch on its next slot.
  job.remaining_s = scenario_.waves[job.wave].requirements.wall_hours * 3600.0;
  for (const auto& cls : scenario_.waves[job.wave].preferred)
    class_queues_[cls].push_back(job_index);
}

void FacilitySim::kill_slot(Slot& slot, bool requeue_job) {
  if (slot.dead) return;
  if (slot.job >= 0 && requeue_job) {
    ++preempted_requeues_;
    requeue(slot.job);
  }
  slot.job = -1;
  slot.dead = true;
}

void FacilitySim::match_jobs() {
  for (std::size_t s = 0; s < slots_.size(); ++s) {
    Slot& slot = slots_[s];
    if (slot.dead || !slot.materialized || slot.job >= 0) continue;
    auto queue_it = class_queues_.find(slot.class_id);
    if (queue_it == class_queues_.end()) continue;
    auto& queue = queue_it->second;
    while (!queue.empty()) {
      int candidate = queue.front();
      queue.pop_front();
      Job& job = jobs_[candidate];
      if (job.completed || job.slot >= 0) continue;  // stale entry
      job.slot = static_cast<int>(s);
      slot.job = candidate;
      break;
    }
  }
}

void FacilitySim::step(std::int64_t dt_s) {
  if (dt_s <= 0) return;
  double dt_hours = static_cast<double>(dt_s) / 3600.0;
  std::int64_t t_new = now_s_ + dt_s;

  // Charge and progress the interval that just elapsed.
  bool funds_gone = false;
  bool allocation_gone = false;
  for (auto& slot : slots_) {
    if (slot.dead || !slot.materialized) continue;
    const ProviderSpec& p = providers_[slot.class_id];
    ledger_.slot_hours_by_class[slot.class_id] += dt_hours;
    if (p.kind == "cloud") {
      double charge = p.unit_cost * dt_hours;
      double room = scenario_.initial_funds - ledger_.cloud_spend;
      if (charge >= room) {
        ledger_.cloud_spend = scenario_.initial_funds;
        funds_gone = true;
      } else {
        ledger_.cloud_spend += charge;
      }
    } else if (p.kind == "hpc") {
      double charge = p.unit_cost * dt_hours;
      double room = scenario_.initial_allocation_hours - ledger_.hpc_hours_used;
      if (charge >= room) {
        ledger_.hpc_hours_used = scenario_.initial_allocation_hours;
        allocation_gone = true;
      } else {
        ledger_.hpc_hours_used += charge;
      }
    }
    if (slot.job >= 0) {
      Job& job = jobs_[slot.job];
      job.remaining_s -= static_cast<double>(dt_s);
      if (job.remaining_s <= 0) {
        job.completed = true;
        job.slot = -1;
        slot.job = -1;
        slot.idle_since = t_new;
        ++completed_;
      }
    }
  }

  // An exhausted budget takes the provider's slots with it.
  if (funds_gone || allocation_gone) {
    for (auto& slot : slots_) {
      if (slot.dead) continue;
      const std::string& kind = providers_[slot.class_id].kind;
      if ((funds_gone && kind == "cloud") || (allocation_gone && kind == "hpc"))
        kill_slot(slot, true);
    }
  }

  // Grid preemption, one draw per live grid slot per step.
  for (auto& slot : slots_) {
    if (slot.dead || !slot.materialized) continue;
    const ProviderSpec& p = providers_[slot.class_id];
    if (p.kind != "grid" || p.preemption_rate_per_slot_hour <= 0) continue;
    double probability = p.preemption_rate_per_slot_hour * dt_hours;
    std::uniform_real_distribution<double> uniform(0.0, 1.0);
    if (uniform(rng_) < probability) kill_slot(slot, true);
  }

  now_s_ = t_new;
  release_waves();

  for (auto& slot : slots_) {
    if (slot.dead || slot.materialized || slot.ready_at > now_s_) continue;
    slot.materialized = true;
    slot.idle_since = now_s_;
  }

  match_jobs();

  for (auto& slot : slots_) {
    if (slot.dead || !slot.materialized || slot.job >= 0) continue;
    if (now_s_ - slot.idle_since >= scenario_.idle_retire_s) kill_slot(slot, false);
  }

  // Compact dead slots; job slot indices must follow the moves.
  std::vector<Slot> alive;
  alive.reserve(slots_.size());
  for (auto& slot : slots_) {
    if (slot.dead) continue;
    if (slot.job >= 0) jobs_[slot.job].slot = static_cast<int>(alive.size());
    alive.push_back(slot);
  }
  slots_ = std::move(alive);

  std::map<std::string, int> running;
  for (const auto& slot : slots_)
    if (slot.materialized) ++running[slot.class_id];
  for (const auto& [cls, count] : running)
    peaks_[cls] = std::max(peaks_[cls], count);
}

std::vector<JobBundle> FacilitySim::queue_query(const std::string&) {
  std::vector<long long> idle_per_wave(scenario_.waves.size(), 0);
  for (const auto& job : jobs_)
    if (!job.completed && job.slot < 0) ++idle_per_wave[job.wave];

  std::vector<JobBundle> bundles;
  for (std::size_t w = 0; w < scenario_.waves.size(); ++w) {
    if (idle_per_wave[w] == 0) continue;
    const JobWave& wave = scenario_.waves[w];
    JobBundle bundle;
    bundle.bundle_id = "wave" + std::to_string(w);
    bundle.count = static_cast<int>(idle_per_wave[w]);
    bundle.requirements = wave.requirements;
    bundle.preferred_resources = wave.preferred;
    bundles.push_back(std::move(bundle));
  }
  return bundles;
}

int FacilitySim::occupancy(const std::string& class_id) const {
  int n = 0;
  for (const auto& slot : slots_)
    if (!slot.dead && slot.class_id == class_id) ++n;
  return n;
}

std::vector<ResourceClassInfo> FacilitySim::manifest_query() {
  std::vector<ResourceClassInfo> out;
  for (const auto& [class_id, p] : providers_) {
    ResourceClassInfo info;
    info.class_id = class_id;
    info.kind = p.kind;
    info.price_performance = p.price_performance;
    info.unit_cost = p.unit_cost;
    info.capacity_limit = p.capacity;
    info.current_occupancy = occupancy(class_id);
    info.up = p.up;
    out.push_back(std::move(info));
  }
  return out;
}

BudgetStatus FacilitySim::budget_query() {
  BudgetStatus budget;
  budget.cloud_funds_remaining =
      std::max(0.0, scenario_.initial_funds - ledger_.cloud_spend);
  budget.hpc_allocation_remaining =
      std::max(0.0, scenario_.initial_allocation_hours - ledger_.hpc_hours_used);
  return budget;
}

std::map<std::string, int> FacilitySim::slots_query() {
  std::map<std::string, int> out;
  for (const auto& [class_id, p] : providers_) out[class_id] = 0;
  for (const auto& slot : slots_)
    if (!slot.dead && slot.materialized) ++out[slot.class_id];
  return out;
}

double FacilitySim::wave_wall_hours(const std::string& bundle_id) const {
  if (bundle_id.rfind("wave", 0) == 0) {
    std::size_t index = std::stoul(bundle_id.substr(4));
    if (index < scenario_.waves.size())
      return scenario_.waves[index].requirements.wall_hours;
  }
  return -1;
}

Receipt FacilitySim::submit(const ProvisionRequest& request) {
  Receipt receipt;
  receipt.class_id = request.class_id;
  receipt.slots = request.slots;
  receipt.for_bundle = request.for_bundle;

  auto it = providers_.find(request.class_id);
  if (it == providers_.end()) {
    receipt.reason = "unknown resource class";
    return receipt;
  }
  const ProviderSpec& p = it->second;
  if (!p.up) {
    receipt.reason = "resource class is down";
    return receipt;
  }
  if (request.slots < 1) {
    receipt.reason = "slot count must be positive";
    return receipt;
  }
  if (occupancy(request.class_id) + request.slots > p.capacity) {
    receipt.reason = "insufficient capacity";
    return receipt;
  }
  double wall_hours = wave_wall_hours(request.for_bundle);
  if (wall_hours < 0) {
    receipt.reason = "unknown bundle";
    return receipt;
  }
  if (p.kind == "cloud") {
    double estimate = request.slots * p.unit_cost * wall_hours;
    if (ledger_.cloud_spend + estimate > scenario_.initial_funds + 1e-9) {
      receipt.reason = "insufficient funds";
      return receipt;
    }
  } else if (p.kind == "hpc") {
    double estimate = request.slots * wall_hours;
    if (ledger_.hpc_hours_used + estimate >
        scenario_.initial_allocation_hours + 1e-9) {
      receipt.reason = "insufficient allocation";
      return receipt;
    }
  }

  for (int i = 0; i < request.slots; ++i) {
    Slot slot;
    slot.class_id = request.class_id;
    slot.ready_at = now_s_ + p.startup_latency_s;
    slots_.push_back(std::move(slot));
  }
  receipt.accepted = true;
  receipt.reason = "ok";
  return receipt;
}

FacilitySim::Counts FacilitySim::counts() const {
  Counts c;
  for (const auto& wave : scenario_.waves) c.total += wave.count;
  c.released = static_cast<long long>(jobs_.size());
  for (const auto& job : jobs_) {
    if (job.completed) continue;
    if (job.slot >= 0) ++c.running;
    else ++c.queued;
  }
  c.completed = completed_;
  c.preempted_requeues = preempted_requeues_;
  return c;
}

bool FacilitySim::all_done() const {
  Counts c = counts();
  return c.released == c.total && c.completed == c.total;
}

int FacilitySim::total_slots() const {
  int n = 0;
  for (const auto& slot : slots_)
    if (!slot.dead) ++n;
  return n;
}

int FacilitySim::running_slots() const {
  int n = 0;
  for (const auto& slot : slots_)
    if (!slot.dead && slot.materialized) ++n;
  return n;
}

void FacilitySim::set_provider_up(const std::string& class_id, bool up) {
  auto it = providers_.find(class_id);
  if (it == providers_.end()) raise(Errc::unknown_channel, "no provider " + class_id);
  it->second.up = up;
}

// ------------------------------------------------------------ run driver

Value RunReport::to_json() const {
  Value out;
  out["outcome"] = outcome;
  out["jobs_completed"] = jobs_completed;
  out["peak_slots"] = peak_slots;
  out["cloud_spend"] = cloud_spend;
  out["hpc_hours_used"] = hpc_hours_used;
  out["cycles"] = cycles;
  return out;
}

std::string RunReport::text() const {
  std::ostringstream out;
  out << "outcome:         " << outcome << "\n";
  out << "jobs completed:  " << jobs_completed << " / " << jobs_total << "\n";
  out << "sim time:        " << sim_seconds << " s\n";
  out << "peak slots:     ";
  for (const auto& [cls, n] : peak_slots) out << ' ' << cls << '=' << n;
  out << "\n";
  out << "cloud spend:     " << cloud_spend << "\n";
  out << "hpc hours used:  " << hpc_hours_used << "\n";
  out << "cycles:         ";
  for (const auto& [ch, n] : cycles) out << ' ' << ch << '=' << n;
  out << "\n";
  out << "metrics:         " << metrics_dir.string() << "\n";
  return out.str();
}

RunReport run_scenario(const SimScenario& scenario, const EngineConfig& config,
                       const RunOptions& options) {
  ManualClock clock(0);
  FacilitySim sim(scenario);
  std::shared_ptr<FacilityAdapters> adapters(&sim, [](FacilityAdapters*) {});

  PluginRegistry registry;
  register_stdlib(registry, adapters, clock, options.metrics_dir);

  auto problems = validate_config(config, &registry);
  if (!problems.empty()) raise(Errc::validation_error, problems.front().str());

  DataSpace space(options.archive_dir, clock);
  std::map<std::string, SpaceHandle> handles;
  for (const auto& ch : config.channels) handles[ch.channel_id] = space.create_space(ch.channel_id);

  Channel::Options channel_options;
  channel_options.default_source_period_s = config.defaults.source_period_s.value_or(10.0);
  channel_options.boot_timeout_s = config.defaults.boot_timeout_s;
  channel_options.stop_grace_s = config.defaults.stop_grace_s;

  std::vector<std::unique_ptr<Channel>> channels;
  for (const auto& ch : config.channels)
    channels.push_back(std::make_unique<Channel>(ch, channel_options, registry, space,
                                                 handles[ch.channel_id], clock));

  // Per-source next-due times on the simulated clock.
  std::vector<std::vector<std::int64_t>> due(channels.size());
  for (std::size_t c = 0; c < channels.size(); ++c)
    due[c].assign(channels[c]->source_count(), 0);

  std::int64_t duration = options.duration_override_s.value_or(scenario.duration_s);
  std::int64_t dt = scenario.dt_s;
  std::int64_t t = 0;
  RunReport report;
  report.jobs_total = sim.counts().total;
  report.metrics_dir = options.metrics_dir;

  while (true) {
    clock.set_ms(t * 1000);
    for (std::size_t c = 0; c < channels.size(); ++c) {
      Channel& channel = *channels[c];
      channel.poll(clock.now_ms());
      for (std::size_t s = 0; s < channel.source_count(); ++s) {
        auto period = static_cast<std::int64_t>(channel.source_period_s(s));
        if (period <= 0) period = 1;
        while (due[c][s] <= t) {
          channel.invoke_source(s);
          due[c][s] += period;
        }
      }
      channel.run_pending_cycles();
    }

    if (sim.all_done() && sim.total_slots() == 0) {
      report.outcome = "success";
      break;
    }
    if (t >= duration) {
      report.outcome = sim.all_done() ? "success" : "timeout";
      break;
    }
    sim.step(dt);
    t += dt;
  }

  for (auto& channel : channels) {
    report.cycles[channel->id()] = channel->cycles_executed();
    channel->shutdown();
  }
  report.jobs_completed = sim.counts().completed;
  report.peak_slots = sim.peak_slots();
  report.cloud_spend = sim.ledger().cloud_spend;
  report.hpc_hours_used = sim.ledger().hpc_hours_used;
  report.sim_seconds = t;
  return report;
}

}  // namespace de
