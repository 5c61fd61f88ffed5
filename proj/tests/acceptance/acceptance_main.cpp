// Acceptance suite: one pass/fail line per criterion, exit 0 only if every
// criterion holds. Run via ctest or directly from the repository root.

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <thread>

#include "de/channel.hpp"
#include "de/config.hpp"
#include "de/diag.hpp"
#include "de/facility_sim.hpp"
#include "de/logic_engine.hpp"
#include "de/stdlib.hpp"

using namespace de;

namespace {

int g_failures = 0;
std::vector<std::string> g_notes;

#define EXPECT(cond, detail)                                          \
  do {                                                                \
    if (!(cond)) {                                                    \
      std::ostringstream os_;                                         \
      os_ << detail;                                                  \
      g_notes.push_back(os_.str());                                   \
    }                                                                 \
  } while (0)

void report(int number, const std::string& title) {
  if (g_notes.empty()) {
    std::cout << "[PASS] criterion " << number << ": " << title << "\n";
  } else {
    ++g_failures;
    std::cout << "[FAIL] criterion " << number << ": " << title << "\n";
    for (const auto& note : g_notes) std::cout << "       - " << note << "\n";
  }
  g_notes.clear();
}

std::filesystem::path scratch_root() {
  auto dir = std::filesystem::temp_directory_path() /
             ("de_acceptance_" + std::to_string(::getpid()));
  std::filesystem::create_directories(dir);
  return dir;
}

const std::filesystem::path g_scratch = scratch_root();

std::string source_dir() {
#ifdef DE_SOURCE_DIR
  return DE_SOURCE_DIR;
#else
  return ".";
#endif
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

RunReport run_shipped(const std::string& scenario_leaf, const std::string& tag) {
  auto scenario = load_scenario(source_dir() + "/scenarios/" + scenario_leaf);
  auto config = load_config(source_dir() + "/scenarios/" + scenario_leaf);
  RunOptions options;
  options.archive_dir = g_scratch / tag / "archive";
  options.metrics_dir = g_scratch / tag / "metrics";
  return run_scenario(scenario, config, options);
}

// ---------------------------------------------------------------- 1

void criterion_1() {
  auto started = std::chrono::steady_clock::now();
  auto report_data = run_shipped("hybrid_facility.toml", "c1");
  double wall_s =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();

  EXPECT(report_data.outcome == "success", "outcome was " << report_data.outcome);
  EXPECT(report_data.jobs_completed == 1400,
         "jobs completed " << report_data.jobs_completed << " != 1400");
  EXPECT(report_data.cloud_spend <= 500.0, "cloud spend " << report_data.cloud_spend);
  EXPECT(report_data.hpc_hours_used <= 2000.0, "hpc hours " << report_data.hpc_hours_used);
  EXPECT(report_data.peak_slots.size() == 5,
         "expected 5 resource classes, saw " << report_data.peak_slots.size());
  for (const auto& [cls, peak] : report_data.peak_slots)
    EXPECT(peak > 0, "no slots ever acquired on " << cls);
  EXPECT(wall_s < 60.0, "runtime " << wall_s << "s exceeds 60s");
  report(1, "hybrid facility scenario: 1400 jobs, five classes, inside budget, <60s");
}

// ---------------------------------------------------------------- 2

std::map<std::string, int> split_oracle(int n, std::vector<std::string> ids) {
  std::sort(ids.begin(), ids.end());
  std::map<std::string, int> shares;
  double quota = static_cast<double>(n) / static_cast<double>(ids.size());
  int handed = 0;
  std::vector<std::pair<double, std::string>> fractions;
  for (const auto& id : ids) {
    shares[id] = static_cast<int>(quota);
    handed += shares[id];
    fractions.emplace_back(quota - shares[id], id);
  }
  std::stable_sort(fractions.begin(), fractions.end(), [](const auto& a, const auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  for (int i = 0; i < n - handed; ++i) shares[fractions[i].second] += 1;
  return shares;
}

void criterion_2() {
  const std::vector<std::string> pool{"delta", "alpha", "charlie", "bravo"};
  for (int k = 1; k <= 4; ++k) {
    std::vector<std::string> ids(pool.begin(), pool.begin() + k);
    for (int n = 1; n <= 20; ++n) {
      std::vector<ClassSpec> classes;
      for (const auto& id : ids) classes.push_back(ClassSpec{id, "grid", 0});
      PolicyBudget rich{1e9, 1e9};
      std::map<std::string, int> headroom;
      for (const auto& id : ids) headroom[id] = 1 << 20;

      auto got = allocate_bundle(n, 1.0, classes, rich, headroom);
      auto want = split_oracle(n, ids);
      for (auto it = want.begin(); it != want.end();)
        it = it->second == 0 ? want.erase(it) : std::next(it);
      EXPECT(got.shares == want, "oracle mismatch at n=" << n << " k=" << k);

      int total = 0, low = 1 << 30, high = 0;
      for (const auto& id : ids) {
        int share = got.shares.count(id) ? got.shares.at(id) : 0;
        total += share;
        low = std::min(low, share);
        high = std::max(high, share);
      }
      EXPECT(total == n, "shares sum " << total << " != " << n);
      EXPECT(high - low <= 1, "pairwise gap >1 at n=" << n << " k=" << k);

      PolicyBudget rich2{1e9, 1e9};
      std::map<std::string, int> headroom2;
      for (const auto& id : ids) headroom2[id] = 1 << 20;
      auto again = allocate_bundle(n, 1.0, classes, rich2, headroom2);
      EXPECT(again.shares == got.shares, "tie-break not deterministic at n=" << n);
    }
  }
  report(2, "even-distribution law matches the largest-remainder oracle, n<=20, k<=4");
}

// ---------------------------------------------------------------- 3

void criterion_3() {
  std::mt19937 rng(97);
  std::uniform_int_distribution<int> coin(0, 1);
  long long cases = 0;

  for (int round = 0; round < 250 && g_notes.size() < 5; ++round) {
    int n_base = std::uniform_int_distribution<int>(1, 3)(rng);
    std::vector<Fact> facts;
    std::vector<std::string> product_names;
    for (int i = 0; i < n_base; ++i) {
      product_names.push_back("p" + std::to_string(i));
      facts.push_back(Fact{"base" + std::to_string(i),
                           Expression::parse("product(\"p" + std::to_string(i) + "\") == 1")});
    }

    std::vector<Rule> rules;
    std::vector<std::string> known;
    for (const auto& f : facts) known.push_back(f.name);
    int n_rules = std::uniform_int_distribution<int>(1, 5)(rng);
    for (int r = 0; r < n_rules; ++r) {
      auto pick = [&] {
        return known[std::uniform_int_distribution<std::size_t>(0, known.size() - 1)(rng)];
      };
      std::string a = pick(), b = pick();
      std::string condition;
      switch (std::uniform_int_distribution<int>(0, 3)(rng)) {
        case 0: condition = "fact(\"" + a + "\")"; break;
        case 1: condition = "not fact(\"" + a + "\")"; break;
        case 2: condition = "fact(\"" + a + "\") and fact(\"" + b + "\")"; break;
        default: condition = "fact(\"" + a + "\") or not fact(\"" + b + "\")"; break;
      }
      std::vector<std::string> derives;
      if (coin(rng)) {
        derives.push_back("derived" + std::to_string(r));
        known.push_back(derives.back());
      }
      rules.push_back(Rule{"rule" + std::to_string(r), Expression::parse(condition),
                           {"pub" + std::to_string(r % 2)}, derives});
    }

    for (int assignment = 0; assignment < 4; ++assignment) {
      auto products = std::make_shared<std::map<std::string, Value>>();
      for (const auto& name : product_names) (*products)[name] = coin(rng);
      auto lookup = [products](const std::string& name) -> const Value* {
        auto it = products->find(name);
        return it == products->end() ? nullptr : &it->second;
      };
      ++cases;

      auto reference = run_inference(make_plan(facts, rules), lookup);

      // Brute-force fixed point in declaration order.
      std::map<std::string, bool> values;
      EvalContext base_ctx(lookup, nullptr);
      for (const auto& f : facts) values[f.name] = f.expr.evaluate_bool(base_ctx);
      for (const auto& r : rules)
        for (const auto& d : r.derived_facts) values[d] = false;
      EvalContext ctx(lookup, [&](const std::string& name) -> std::optional<bool> {
        auto it = values.find(name);
        if (it == values.end()) return std::nullopt;
        return it->second;
      });
      bool changed = true;
      int guard = 0;
      while (changed && guard++ < 10) {
        changed = false;
        for (const auto& r : rules) {
          bool v = r.condition.evaluate_bool(ctx);
          for (const auto& d : r.derived_facts)
            if (values[d] != v) {
              values[d] = v;
              changed = true;
            }
        }
      }
      EXPECT(values == reference.fact_values,
             "fixed point disagrees with the plan at round " << round);

      std::vector<std::size_t> index(rules.size());
      for (std::size_t i = 0; i < index.size(); ++i) index[i] = i;
      int permutations = 0;
      do {
        std::vector<Rule> permuted;
        for (std::size_t i : index) permuted.push_back(rules[i]);
        auto outcome = run_inference(make_plan(facts, permuted), lookup);
        if (!(outcome == reference)) {
          EXPECT(false, "permutation changed the outcome at round " << round);
          break;
        }
      } while (std::next_permutation(index.begin(), index.end()) && ++permutations < 130);
    }
  }
  EXPECT(cases >= 1000, "only " << cases << " sampled cases");
  report(3, "rule-order independence and fixed-point equivalence over " +
                std::to_string(cases) + " cases");
}

// ---------------------------------------------------------------- 4

using Outputs = std::map<std::string, Value>;
using Inputs = std::map<std::string, DataProduct>;

ChannelConfig storm_config(const std::string& id) {
  ChannelConfig cfg;
  cfg.channel_id = id;
  ModuleSpec src;
  src.kind = ModuleKind::source;
  src.name = "src";
  src.implementation = "emit_raw";
  src.produces = {"raw"};
  src.period_s = 1;
  cfg.sources.push_back(src);
  ModuleSpec t;
  t.kind = ModuleKind::transform;
  t.name = "shape";
  t.implementation = "gate_transform";
  t.consumes = {"raw"};
  t.produces = {"shaped"};
  cfg.transforms.push_back(t);
  cfg.facts.push_back(Fact{"always", Expression::parse("count(product(\"shaped\")) >= 0")});
  cfg.rules.push_back(Rule{"noop", Expression::parse("fact(\"always\")"), {"sink"}, {}});
  ModuleSpec pub;
  pub.kind = ModuleKind::publisher;
  pub.name = "sink";
  pub.implementation = "swallow";
  cfg.publishers.push_back(pub);
  return cfg;
}

void criterion_4() {
  ManualClock clock(0);
  DataSpace space(g_scratch / "c4" / "archive", clock);

  auto gate = std::make_shared<std::atomic<bool>>(true);
  auto entered = std::make_shared<std::atomic<long long>>(0);
  PluginRegistry registry;
  registry.add("emit_raw", [](const Value& params) {
    std::string name = params.value("name", "raw");
    return std::make_unique<LambdaModule>(
        [name](const Inputs&) { return Outputs{{name, Value::array({1})}}; });
  });
  registry.add("gate_transform", [gate, entered](const Value&) {
    return std::make_unique<LambdaModule>([gate, entered](const Inputs& in) {
      entered->fetch_add(1);
      while (!gate->load()) std::this_thread::sleep_for(std::chrono::microseconds(20));
      return Outputs{{"shaped", in.at("raw").value}};
    });
  });
  registry.add("swallow", [](const Value&) {
    return std::make_unique<LambdaModule>([](const Inputs&) { return Outputs{}; });
  });

  // (a) Boot gating: two sources; no archive before both have run.
  {
    auto cfg = storm_config("boot");
    ModuleSpec second = cfg.sources[0];
    second.name = "src2";
    second.produces = {"raw2"};
    second.parameters = Value{{"name", "raw2"}};
    cfg.sources.push_back(second);
    Channel channel(cfg, Channel::Options{}, registry, space, space.create_space("boot"),
                    clock);
    channel.invoke_source(0);
    channel.run_pending_cycles();
    EXPECT(space.archive_records("boot").empty(), "cycle archived before all sources ran");
    channel.invoke_source(1);
    channel.run_pending_cycles();
    EXPECT(space.archive_records("boot").size() == 1, "no cycle after boot completed");
  }

  // (b) Trigger storms: >=10^4 triggers in 100 bursts against a pinned cycle.
  {
    auto cfg = storm_config("storm");
    Channel channel(cfg, Channel::Options{}, registry, space, space.create_space("storm"),
                    clock);
    channel.invoke_source(0);  // boot -> steady, one pending trigger

    const int kBursts = 100;
    const int kPerBurst = 120;  // 12000 triggers in total
    long long expected_cycles = 0;
    for (int burst = 0; burst < kBursts; ++burst) {
      gate->store(false);
      long long before = entered->load();
      std::thread executor([&] { channel.run_pending_cycles(); });
      while (entered->load() == before) std::this_thread::yield();

      std::vector<std::thread> stormers;
      for (int t = 0; t < 4; ++t)
        stormers.emplace_back([&] {
          for (int i = 0; i < kPerBurst / 4; ++i) channel.trigger();
        });
      for (auto& t : stormers) t.join();
      gate->store(true);
      executor.join();

      expected_cycles += 2;  // the pinned cycle plus exactly one follow-up
      EXPECT(channel.cycles_executed() == static_cast<std::uint64_t>(expected_cycles),
             "burst " << burst << ": cycles " << channel.cycles_executed() << " != "
                      << expected_cycles);
      if (channel.cycles_executed() != static_cast<std::uint64_t>(expected_cycles)) break;
      channel.trigger();  // arm the next burst's pinned cycle
    }
    EXPECT(channel.max_in_flight() == 1,
           "in-flight cycles peaked at " << channel.max_in_flight());
    EXPECT(channel.trigger_signals() >= 10'000,
           "only " << channel.trigger_signals() << " triggers were exercised");
  }

  // (c) Puts during a cycle never appear in that cycle's view.
  {
    auto handle = space.create_space("tcurr");
    DataProduct p;
    p.name = "x";
    p.value = 1;
    p.produced_by = "src";
    space.put(handle, p);
    auto [gen, view] = space.snapshot(handle);
    for (int i = 2; i < 10; ++i) {
      DataProduct later;
      later.name = "x";
      later.value = i;
      later.produced_by = "src";
      space.put(handle, later);
      EXPECT(view.find("x")->value == Value(1),
             "t_curr changed after a put: " << view.find("x")->value.dump());
    }
    auto [gen2, view2] = space.snapshot(handle);
    EXPECT(view2.find("x")->value == Value(9), "t_next missed the later puts");
  }

  report(4, "cycle state machine: boot gating, storm coalescing, t_curr isolation");
}

// ---------------------------------------------------------------- 5

void criterion_5() {
  // Static: deleting a producer from the shipped config is caught.
  auto config = load_config(source_dir() + "/scenarios/hybrid_facility.toml");
  auto& channel_cfg = config.channels.at(0);
  auto removed = std::remove_if(
      channel_cfg.sources.begin(), channel_cfg.sources.end(),
      [](const ModuleSpec& m) { return m.name == "resource_manifest"; });
  channel_cfg.sources.erase(removed, channel_cfg.sources.end());
  auto errors = validate_config(config, nullptr);
  bool caught = false;
  for (const auto& e : errors)
    if (e.message.find("'resources' has no producer") != std::string::npos) caught = true;
  EXPECT(caught, "deleting the manifest source was not caught at validation");

  // Runtime: a misbehaving source leaves a consumed product out; the cycle
  // archives transform_error and the channel recovers on the next trigger.
  ManualClock clock(0);
  DataSpace space(g_scratch / "c5" / "archive", clock);
  PluginRegistry registry;
  auto calls = std::make_shared<std::atomic<int>>(0);
  registry.add("flaky", [calls](const Value&) {
    return std::make_unique<LambdaModule>([calls](const Inputs&) {
      int call = calls->fetch_add(1);
      Outputs out{{"beat", call}};
      if (call >= 1) out["raw"] = Value::array({1, 2});
      return out;
    });
  });
  registry.add("passthrough", [](const Value&) {
    return std::make_unique<LambdaModule>(
        [](const Inputs& in) { return Outputs{{"shaped", in.at("raw").value}}; });
  });
  registry.add("swallow", [](const Value&) {
    return std::make_unique<LambdaModule>([](const Inputs&) { return Outputs{}; });
  });

  ChannelConfig cfg;
  cfg.channel_id = "recovery";
  ModuleSpec src;
  src.kind = ModuleKind::source;
  src.name = "src";
  src.implementation = "flaky";
  src.produces = {"raw", "beat"};
  src.period_s = 1;
  cfg.sources.push_back(src);
  ModuleSpec t;
  t.kind = ModuleKind::transform;
  t.name = "shape";
  t.implementation = "passthrough";
  t.consumes = {"raw"};
  t.produces = {"shaped"};
  cfg.transforms.push_back(t);
  cfg.facts.push_back(Fact{"seen", Expression::parse("count(product(\"shaped\")) >= 0")});
  cfg.rules.push_back(Rule{"noop", Expression::parse("fact(\"seen\")"), {"sink"}, {}});
  ModuleSpec pub;
  pub.kind = ModuleKind::publisher;
  pub.name = "sink";
  pub.implementation = "swallow";
  cfg.publishers.push_back(pub);

  Channel channel(cfg, Channel::Options{}, registry, space, space.create_space("recovery"),
                  clock);
  channel.invoke_source(0);
  auto first = channel.run_pending_cycles();
  EXPECT(first.size() == 1 && first[0].outcome == CycleOutcomeKind::transform_error,
         "first cycle did not archive transform_error");
  EXPECT(channel.state() == ChannelState::steady, "channel did not stay alive");
  channel.invoke_source(0);
  auto second = channel.run_pending_cycles();
  EXPECT(second.size() == 1 && second[0].outcome == CycleOutcomeKind::success,
         "cycle after the product appeared did not succeed");

  auto records = space.archive_records("recovery");
  EXPECT(records.size() == 2 && records[0].outcome == CycleOutcomeKind::transform_error &&
             records[1].outcome == CycleOutcomeKind::success,
         "archive does not show error-then-success");
  report(5, "missing products: caught statically, archived as transform_error, recovered");
}

// ---------------------------------------------------------------- 6

void criterion_6() {
  WallClock wall;
  DataSpace space(g_scratch / "c6" / "archive", wall);
  PluginRegistry registry;
  registry.add("emit_raw", [](const Value&) {
    return std::make_unique<LambdaModule>(
        [](const Inputs&) { return Outputs{{"raw", Value::array({1})}}; });
  });
  registry.add("fast_shape", [](const Value&) {
    return std::make_unique<LambdaModule>(
        [](const Inputs& in) { return Outputs{{"shaped", in.at("raw").value}}; });
  });
  registry.add("gate_transform", [](const Value&) {
    return std::make_unique<LambdaModule>(
        [](const Inputs&) -> Outputs { throw std::runtime_error("broken by design"); });
  });
  registry.add("swallow", [](const Value&) {
    return std::make_unique<LambdaModule>([](const Inputs&) { return Outputs{}; });
  });

  auto healthy_cfg = storm_config("healthy");
  healthy_cfg.sources[0].period_s = 0.002;
  healthy_cfg.sources[0].implementation = "emit_raw";
  healthy_cfg.transforms[0].implementation = "fast_shape";
  auto broken_cfg = storm_config("broken");
  broken_cfg.sources[0].period_s = 0.002;
  broken_cfg.sources[0].implementation = "emit_raw";
  broken_cfg.transforms[0].implementation = "gate_transform";  // always throws

  Channel healthy(healthy_cfg, Channel::Options{}, registry, space,
                  space.create_space("healthy"), wall);
  Channel broken(broken_cfg, Channel::Options{}, registry, space,
                 space.create_space("broken"), wall);
  healthy.start();
  broken.start();
  auto deadline = std::chrono::steady_clock::now() + std::chrono::seconds(30);
  while (healthy.cycles_executed() < 100 && std::chrono::steady_clock::now() < deadline)
    std::this_thread::sleep_for(std::chrono::milliseconds(5));
  broken.stop();
  healthy.stop();

  auto records = space.archive_records("healthy");
  EXPECT(records.size() >= 100, "healthy channel ran only " << records.size() << " cycles");
  for (std::size_t i = 0; i < records.size(); ++i) {
    if (records[i].generation != i) {
      EXPECT(false, "generation gap at " << i);
      break;
    }
    if (records[i].outcome != CycleOutcomeKind::success) {
      EXPECT(false, "cycle " << i << " outcome " << to_string(records[i].outcome));
      break;
    }
  }
  EXPECT(!space.archive_records("broken").empty(), "broken channel never cycled");
  for (const auto& r : space.archive_records("broken"))
    if (r.outcome != CycleOutcomeKind::transform_error) {
      EXPECT(false, "broken channel archived outcome " << to_string(r.outcome));
      break;
    }
  report(6, "a throwing channel ran alongside a healthy one; 100+ clean generations");
}

// ---------------------------------------------------------------- 7

void criterion_7() {
  auto one = run_shipped("zero_funds.toml", "c7_one");
  auto two = run_shipped("zero_funds.toml", "c7_two");
  EXPECT(one.outcome == "success" && two.outcome == "success", "runs did not finish");

  auto archive_one = slurp(g_scratch / "c7_one" / "archive" / "provision_main.jsonl");
  auto archive_two = slurp(g_scratch / "c7_two" / "archive" / "provision_main.jsonl");
  EXPECT(!archive_one.empty(), "empty archive");
  EXPECT(archive_one == archive_two, "archives differ between identical runs");

  auto metrics_one = slurp(g_scratch / "c7_one" / "metrics" / "provision_main.csv");
  auto metrics_two = slurp(g_scratch / "c7_two" / "metrics" / "provision_main.csv");
  EXPECT(!metrics_one.empty(), "empty metrics");
  EXPECT(metrics_one == metrics_two, "metrics differ between identical runs");

  auto hybrid_one = run_shipped("hybrid_facility.toml", "c7_h1");
  auto hybrid_two = run_shipped("hybrid_facility.toml", "c7_h2");
  EXPECT(slurp(g_scratch / "c7_h1" / "archive" / "provision_main.jsonl") ==
             slurp(g_scratch / "c7_h2" / "archive" / "provision_main.jsonl"),
         "hybrid archives differ");
  EXPECT(slurp(g_scratch / "c7_h1" / "metrics" / "provision_main.csv") ==
             slurp(g_scratch / "c7_h2" / "metrics" / "provision_main.csv"),
         "hybrid metrics differ");
  EXPECT(hybrid_one.to_json().dump() == hybrid_two.to_json().dump(), "reports differ");
  report(7, "same scenario and seed: byte-identical archives and metrics");
}

// ---------------------------------------------------------------- 8

void criterion_8() {
  auto report_data = run_shipped("zero_funds.toml", "c8");
  EXPECT(report_data.outcome == "success", "outcome " << report_data.outcome);
  EXPECT(report_data.jobs_completed == 1400,
         "jobs completed " << report_data.jobs_completed);
  EXPECT(report_data.cloud_spend == 0.0, "cloud spend " << report_data.cloud_spend);
  auto cloud_peak = report_data.peak_slots.find("aws_east1");
  EXPECT(cloud_peak != report_data.peak_slots.end() && cloud_peak->second == 0,
         "cloud class acquired slots despite zero funds");
  bool others = true;
  for (const auto& [cls, peak] : report_data.peak_slots)
    if (cls != "aws_east1" && peak == 0) others = false;
  EXPECT(others, "grid/hpc classes were not all used");
  report(8, "zero funds: cloud shut out, all 1400 jobs finish on grid and HPC");
}

}  // namespace

int main() {
  std::cout << "acceptance suite (scratch: " << g_scratch.string() << ")\n";
  criterion_1();
  criterion_2();
  criterion_3();
  criterion_4();
  criterion_5();
  criterion_6();
  criterion_7();
  criterion_8();
  std::error_code ec;
  std::filesystem::remove_all(g_scratch, ec);
  if (g_failures == 0) {
    std::cout << "all 8 criteria passed\n";
    return 0;
  }
  std::cout << g_failures << " criterion(s) failed\n";
  return 1;
}
