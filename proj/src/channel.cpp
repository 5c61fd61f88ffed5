#include "de/channel.hpp"

#include <algorithm>
#include <chrono>
#include <queue>

namespace de {

const char* to_string(ChannelState state) {
  switch (state) {
    case ChannelState::boot: return "boot";
    case ChannelState::steady: return "steady";
    case ChannelState::cycling: return "cycling";
    case ChannelState::stopping: return "stopping";
    case ChannelState::stopped: return "stopped";
    case ChannelState::failed: return "failed";
  }
  return "?";
}

Value ChannelStatus::to_json() const {
  Value out;
  out["state"] = to_string(state);
  out["cycles"] = cycles;
  out["open_generation"] = open_generation;
  if (last_cycle) {
    Value last;
    last["generation"] = last_cycle->generation;
    last["outcome"] = to_string(last_cycle->outcome);
    last["fired_rules"] = last_cycle->fired_rules;
    last["publishers_run"] = last_cycle->publishers_run;
    if (!last_cycle->error.empty()) last["error"] = last_cycle->error;
    out["last_cycle"] = std::move(last);
  }
  return out;
}

void TriggerCell::signal() {
  std::lock_guard lock(mu_);
  pending_ = true;
  signals_.fetch_add(1, std::memory_order_relaxed);
}

bool TriggerCell::try_begin() {
  std::lock_guard lock(mu_);
  if (in_flight_ || !pending_) return false;
  pending_ = false;
  in_flight_ = true;
  return true;
}

bool TriggerCell::finish() {
  std::lock_guard lock(mu_);
  in_flight_ = false;
  return pending_;
}

Channel::Channel(const ChannelConfig& config, const Options& options,
                 const PluginRegistry& registry, DataSpace& space, SpaceHandle handle,
                 const Clock& clock)
    : id_(config.channel_id),
      options_(options),
      space_(space),
      handle_(std::move(handle)),
      clock_(clock) {
  boot_deadline_ = clock_.now_ms() + static_cast<TimeMs>(options_.boot_timeout_s * 1000);
  assemble(config, registry);
}

Channel::~Channel() {
  if (started_ && state() != ChannelState::stopped) {
    try {
      stop();
    } catch (const Error&) {
    }
  }
}

void Channel::assemble(const ChannelConfig& config, const PluginRegistry& registry) {
  plan_ = make_plan(config.facts, config.rules);

  for (const auto& spec : config.sources) {
    SourceRuntime src;
    src.spec = spec;
    src.display_name = spec.name;
    src.period_s = spec.period_s > 0 ? spec.period_s : options_.default_source_period_s;
    src.impl = registry.make(spec.implementation, spec.parameters);
    sources_.push_back(std::move(src));
  }
  for (const auto& binding : config.source_proxies) {
    if (!space_.has_channel(binding.source_channel))
      raise(Errc::unknown_channel,
            "source proxy targets unknown channel '" + binding.source_channel + "'");
    SourceRuntime src;
    src.is_proxy = true;
    src.binding = binding;
    src.display_name = "proxy:" + binding.local_alias;
    src.period_s = binding.period_s > 0 ? binding.period_s : options_.default_source_period_s;
    sources_.push_back(std::move(src));
  }

  order_transforms(config);
  for (const auto& spec : transform_specs_)
    transform_impls_.push_back(registry.make(spec.implementation, spec.parameters));

  for (const auto& spec : config.publishers) {
    publisher_specs_[spec.name] = spec;
    publisher_impls_[spec.name] = registry.make(spec.implementation, spec.parameters);
  }
}

// Topological order over produces/consumes edges; smallest name first among
// ready transforms, so the order is a function of the config alone.
void Channel::order_transforms(const ChannelConfig& config) {
  const auto& transforms = config.transforms;
  std::map<std::string, std::size_t> producer_of;
  for (std::size_t i = 0; i < transforms.size(); ++i)
    for (const auto& product : transforms[i].produces) producer_of[product] = i;

  std::size_t n = transforms.size();
  std::vector<std::set<std::size_t>> successors(n);
  std::vector<std::size_t> indegree(n, 0);
  for (std::size_t i = 0; i < n; ++i)
    for (const auto& consumed : transforms[i].consumes) {
      auto it = producer_of.find(consumed);
      if (it == producer_of.end() || it->second == i) continue;
      if (successors[it->second].insert(i).second) ++indegree[i];
    }

  auto by_name = [&](std::size_t a, std::size_t b) {
    return transforms[a].name > transforms[b].name;
  };
  std::priority_queue<std::size_t, std::vector<std::size_t>, decltype(by_name)> ready(by_name);
  for (std::size_t i = 0; i < n; ++i)
    if (indegree[i] == 0) ready.push(i);

  std::vector<std::size_t> order;
  while (!ready.empty()) {
    std::size_t i = ready.top();
    ready.pop();
    order.push_back(i);
    for (std::size_t next : successors[i])
      if (--indegree[next] == 0) ready.push(next);
  }
  if (order.size() != n)
    raise(Errc::cyclic_dependency, "transform dependency cycle in channel '" + id_ + "'");

  for (std::size_t i : order) {
    transform_specs_.push_back(transforms[i]);
    transform_order_.push_back(transforms[i].name);
  }
}

ChannelState Channel::state() const {
  std::lock_guard lock(state_mu_);
  return state_;
}

ChannelStatus Channel::status() const {
  std::lock_guard lock(state_mu_);
  ChannelStatus st;
  st.state = state_;
  st.cycles = cycles_.load();
  st.last_cycle = last_cycle_;
  st.open_generation = space_.stats(handle_).open_generation;
  return st;
}

std::vector<std::string> Channel::diagnostics() const {
  std::lock_guard lock(state_mu_);
  return diagnostics_;
}

void Channel::note(diag::Level level, const std::string& module, const std::string& event,
                   const std::string& detail) {
  diag::log(level, clock_.now_ms(), id_, module, event, detail);
  if (level >= diag::Level::warn) {
    std::lock_guard lock(state_mu_);
    diagnostics_.push_back(module + " " + event + ": " + detail);
    if (diagnostics_.size() > 100) diagnostics_.erase(diagnostics_.begin());
  }
}

void Channel::set_state(ChannelState next) {
  {
    std::lock_guard lock(state_mu_);
    state_ = next;
  }
  wake_cv_.notify_all();
}

void Channel::enter_failed(const std::string& why) {
  note(diag::Level::error, "", "channel_failed", why);
  set_state(ChannelState::failed);
}

void Channel::poll(TimeMs now) {
  std::unique_lock lock(state_mu_);
  if (state_ == ChannelState::boot && now > boot_deadline_) {
    std::string missing;
    for (const auto& src : sources_)
      if (!src.ran_ok) missing += (missing.empty() ? "" : ", ") + src.display_name;
    lock.unlock();
    enter_failed("boot timeout; sources never satisfied: " + missing);
  }
}

void Channel::trigger() {
  cell_.signal();
  wake_cv_.notify_all();
}

void Channel::invoke_source(std::size_t i) {
  SourceRuntime& src = sources_[i];
  {
    std::lock_guard lock(state_mu_);
    if (state_ == ChannelState::stopped || state_ == ChannelState::failed ||
        state_ == ChannelState::stopping)
      return;
  }

  bool produced = false;
  if (src.is_proxy) {
    const auto& binding = src.binding;
    std::shared_ptr<const DataProduct> found;
    try {
      found = space_.latest(binding.source_channel, binding.product_name);
    } catch (const Error& e) {
      note(diag::Level::warn, src.display_name, "proxy_error", e.what());
      return;
    }
    if (!found) {
      note(diag::Level::info, src.display_name, "proxy_waiting",
           "product '" + binding.product_name + "' not available yet");
      return;
    }
    TimeMs age_ms = clock_.now_ms() - found->produced_at;
    if (binding.max_staleness_s > 0 &&
        age_ms > static_cast<TimeMs>(binding.max_staleness_s * 1000)) {
      note(diag::Level::info, src.display_name, "proxy_stale",
           "product '" + binding.product_name + "' is " + std::to_string(age_ms) + "ms old");
      return;
    }
    DataProduct imported;
    imported.name = binding.local_alias;
    imported.value = found->value;
    imported.produced_by = src.display_name;
    imported.produced_at = found->produced_at;
    imported.origin = ProductOrigin{binding.source_channel, found->generation};
    try {
      space_.put(handle_, std::move(imported));
      produced = true;
    } catch (const Error& e) {
      note(diag::Level::warn, src.display_name, "put_failed", e.what());
      return;
    }
  } else {
    std::map<std::string, Value> outputs;
    try {
      outputs = src.impl->invoke({});
      src.consecutive_failures = 0;
    } catch (const std::exception& e) {
      ++src.consecutive_failures;
      note(diag::Level::warn, src.display_name, "source_error", e.what());
      if (src.consecutive_failures >= 5)
        enter_failed("source '" + src.display_name + "' failed " +
                     std::to_string(src.consecutive_failures) + " times in a row");
      return;
    }
    std::set<std::string> declared(src.spec.produces.begin(), src.spec.produces.end());
    for (auto& [name, value] : outputs) {
      if (!declared.count(name)) {
        note(diag::Level::warn, src.display_name, "undeclared_product",
             "ignoring product '" + name + "' not in the source's contract");
        continue;
      }
      DataProduct product;
      product.name = name;
      product.value = std::move(value);
      product.produced_by = src.display_name;
      product.produced_at = clock_.now_ms();
      try {
        space_.put(handle_, std::move(product));
        produced = true;
      } catch (const Error& e) {
        note(diag::Level::warn, src.display_name, "put_failed", e.what());
        return;
      }
    }
    for (const auto& name : declared)
      if (!outputs.count(name))
        note(diag::Level::warn, src.display_name, "missing_product",
             "source did not produce declared product '" + name + "'");
  }

  // A completed invocation satisfies boot gating for a source even when it
  // produced nothing; a proxy counts only once it has delivered a product.
  if (src.is_proxy) {
    if (produced) src.ran_ok = true;
  } else {
    src.ran_ok = true;
  }

  {
    std::lock_guard lock(state_mu_);
    if (state_ == ChannelState::boot) {
      bool all = std::all_of(sources_.begin(), sources_.end(),
                             [](const SourceRuntime& s) { return s.ran_ok; });
      if (all) state_ = ChannelState::steady;
    }
  }
  if (produced) trigger();
  wake_cv_.notify_all();
}

std::map<std::string, DataProduct> Channel::gather_inputs(
    const DataBlockView& view, const std::vector<std::string>& names,
    const std::string& consumer) {
  std::map<std::string, DataProduct> inputs;
  for (const auto& name : names) {
    auto product = view.find(name);
    if (!product)
      raise(Errc::missing_product,
            "product '" + name + "' consumed by '" + consumer + "' is not present");
    inputs.emplace(name, *product);
  }
  return inputs;
}

void Channel::run_transforms(const DataBlockView& view, CycleResult& result) {
  for (std::size_t i = 0; i < transform_specs_.size(); ++i) {
    const ModuleSpec& spec = transform_specs_[i];
    auto inputs = gather_inputs(view, spec.consumes, spec.name);
    std::map<std::string, Value> outputs;
    try {
      outputs = transform_impls_[i]->invoke(inputs);
    } catch (const std::exception& e) {
      raise(Errc::evaluation_error, "transform '" + spec.name + "' failed: " + e.what());
    }
    std::set<std::string> declared(spec.produces.begin(), spec.produces.end());
    for (const auto& name : declared)
      if (!outputs.count(name))
        raise(Errc::missing_product,
              "transform '" + spec.name + "' did not produce declared product '" + name + "'");
    for (auto& [name, value] : outputs) {
      if (!declared.count(name))
        raise(Errc::invalid_name,
              "transform '" + spec.name + "' produced undeclared product '" + name + "'");
      DataProduct product;
      product.name = name;
      product.value = std::move(value);
      product.produced_by = spec.name;
      space_.record_cycle_product(view, std::move(product));
    }
  }
  (void)result;
}

InferenceResult Channel::run_logic(const DataBlockView& view) {
  auto products = view.products();
  auto lookup = [&products](const std::string& name) -> const Value* {
    auto it = products.find(name);
    return it == products.end() ? nullptr : &it->second->value;
  };
  InferenceResult inference = run_inference(plan_, lookup);
  DataProduct product;
  product.name = kInferenceResultProduct;
  product.value = inference.to_json();
  product.produced_by = "logic_engine";
  space_.record_cycle_product(view, std::move(product));
  return inference;
}

void Channel::run_publishers(const DataBlockView& view, const InferenceResult& inference,
                             CycleResult& result) {
  for (const auto& name : inference.publishers_to_run) {
    auto impl = publisher_impls_.find(name);
    if (impl == publisher_impls_.end()) {
      result.outcome = CycleOutcomeKind::publisher_error;
      result.error = "publisher '" + name + "' is not assembled";
      continue;
    }
    result.publishers_run.push_back(name);
    try {
      auto inputs = gather_inputs(view, publisher_specs_[name].consumes, name);
      auto outputs = impl->second->invoke(inputs);
      for (auto& [product_name, value] : outputs) {
        DataProduct product;
        product.name = product_name;
        product.value = std::move(value);
        product.produced_by = name;
        space_.record_cycle_product(view, std::move(product));
      }
    } catch (const std::exception& e) {
      result.outcome = CycleOutcomeKind::publisher_error;
      result.error = "publisher '" + name + "' failed: " + std::string(e.what());
      note(diag::Level::warn, name, "publisher_error", e.what());
    }
  }
}

CycleResult Channel::execute_cycle() {
  int now_in_flight = in_flight_.fetch_add(1) + 1;
  int prev_max = max_in_flight_.load();
  while (now_in_flight > prev_max &&
         !max_in_flight_.compare_exchange_weak(prev_max, now_in_flight)) {
  }

  {
    std::lock_guard lock(state_mu_);
    if (state_ == ChannelState::steady) state_ = ChannelState::cycling;
  }

  CycleResult result;
  result.started_at = clock_.now_ms();
  auto [generation, view] = space_.snapshot(handle_);
  result.generation = generation;

  try {
    run_transforms(view, result);
  } catch (const std::exception& e) {
    result.outcome = CycleOutcomeKind::transform_error;
    result.error = e.what();
    note(diag::Level::warn, "", "transform_error", e.what());
  }

  if (result.outcome == CycleOutcomeKind::success) {
    try {
      InferenceResult inference = run_logic(view);
      result.fired_rules = inference.fired_rules;
      run_publishers(view, inference, result);
    } catch (const std::exception& e) {
      result.outcome = CycleOutcomeKind::fact_error;
      result.error = e.what();
      note(diag::Level::warn, "logic_engine", "fact_error", e.what());
    }
  }

  space_.lock_and_archive(view, result.outcome);
  result.ended_at = clock_.now_ms();
  cycles_.fetch_add(1);

  {
    std::lock_guard lock(state_mu_);
    last_cycle_ = result;
    if (state_ == ChannelState::cycling) state_ = ChannelState::steady;
  }
  in_flight_.fetch_sub(1);
  return result;
}

std::vector<CycleResult> Channel::run_pending_cycles() {
  std::vector<CycleResult> results;
  while (true) {
    {
      std::lock_guard lock(state_mu_);
      if (state_ != ChannelState::steady && state_ != ChannelState::cycling) break;
    }
    if (!cell_.try_begin()) break;
    results.push_back(execute_cycle());
    // A trigger that landed during the cycle coalesces into one follow-up.
    if (!cell_.finish()) break;
  }
  return results;
}

void Channel::shutdown() {
  {
    std::lock_guard lock(state_mu_);
    if (state_ == ChannelState::stopped) return;
    state_ = ChannelState::stopped;
  }
  space_.close_space(handle_);
}

void Channel::start() {
  {
    std::lock_guard lock(state_mu_);
    if (started_)
      raise(Errc::invalid_transition, "channel '" + id_ + "' is already started");
    if (state_ == ChannelState::stopped || state_ == ChannelState::failed)
      raise(Errc::invalid_transition,
            "channel '" + id_ + "' cannot start from state " + to_string(state_));
    started_ = true;
  }
  stop_requested_.store(false);
  boot_deadline_ = clock_.now_ms() + static_cast<TimeMs>(options_.boot_timeout_s * 1000);
  for (std::size_t i = 0; i < sources_.size(); ++i)
    source_threads_.emplace_back([this, i] { source_loop(i); });
  executor_thread_ = std::thread([this] { executor_loop(); });
  note(diag::Level::info, "", "started",
       std::to_string(sources_.size()) + " source loop(s)");
}

void Channel::source_loop(std::size_t i) {
  const auto period = std::chrono::duration<double>(sources_[i].period_s);
  while (!stop_requested_.load()) {
    invoke_source(i);
    poll(clock_.now_ms());
    std::unique_lock lock(wake_mu_);
    wake_cv_.wait_for(lock, period, [this] { return stop_requested_.load(); });
  }
}

void Channel::executor_loop() {
  while (!stop_requested_.load()) {
    run_pending_cycles();
    std::unique_lock lock(wake_mu_);
    wake_cv_.wait_for(lock, std::chrono::milliseconds(20));
  }
}

void Channel::stop() {
  {
    std::lock_guard lock(state_mu_);
    if (!started_ || state_ == ChannelState::stopped)
      raise(Errc::invalid_transition, "channel '" + id_ + "' is not running");
    if (state_ != ChannelState::failed) state_ = ChannelState::stopping;
  }
  stop_requested_.store(true);
  wake_cv_.notify_all();
  for (auto& thread : source_threads_) thread.join();
  source_threads_.clear();
  if (executor_thread_.joinable()) executor_thread_.join();
  // The executor drains the in-flight cycle before exiting, so by here the
  // channel is quiescent.
  {
    std::lock_guard lock(state_mu_);
    state_ = ChannelState::stopped;
    started_ = false;
  }
  space_.close_space(handle_);
  note(diag::Level::info, "", "stopped", "drained");
}

}  // namespace de
