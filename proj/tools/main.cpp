#include <chrono>
#include <csignal>
#include <fstream>
#include <iostream>
#include <thread>

#include "CLI11.hpp"
#include "de/control.hpp"
#include "de/diag.hpp"
#include "de/engine.hpp"
#include "de/facility_sim.hpp"
#include "de/stdlib.hpp"

namespace {

volatile std::sig_atomic_t g_interrupted = 0;

void on_signal(int) { g_interrupted = 1; }

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitValidation = 2;
constexpr int kExitRuntime = 3;

int print_validation_errors(const std::vector<de::ValidationError>& errors) {
  for (const auto& error : errors) std::cerr << "error: " << error.str() << "\n";
  std::cerr << errors.size() << " validation error(s)\n";
  return kExitValidation;
}

de::PluginRegistry probe_registry(const de::Clock& clock, const de::RunOptions& options,
                                  std::shared_ptr<de::FacilitySim>& sim_out) {
  de::SimScenario empty;
  empty.name = "probe";
  empty.duration_s = 1;
  sim_out = std::make_shared<de::FacilitySim>(empty);
  de::PluginRegistry registry;
  register_stdlib(registry, sim_out, clock, options.metrics_dir);
  return registry;
}

int run_simulated(const de::EngineConfig& config, const std::string& scenario_path,
                  const de::RunOptions& options, const std::string& report_path) {
  de::SimScenario scenario = de::load_scenario(scenario_path);
  de::RunReport report = de::run_scenario(scenario, config, options);

  std::ofstream out(report_path);
  out << report.to_json().dump(2) << "\n";
  std::cout << "scenario:        " << scenario.name << "\n" << report.text();
  std::cout << "report:          " << report_path << "\n";

  if (report.outcome != "success") {
    auto left = report.jobs_total - report.jobs_completed;
    std::cerr << "Timeout: " << left << " job(s) still queued or running at "
              << report.sim_seconds << " s\n";
    return kExitRuntime;
  }
  return kExitOk;
}

int run_live(const de::EngineConfig& config, const de::RunOptions& options,
             const std::string& socket_path, double duration_s) {
  // Live operation uses wall time. Without a real facility behind it, the
  // standard library runs against an empty simulated one; lifecycle,
  // archives and the control socket behave as they would in production.
  de::WallClock clock;
  std::shared_ptr<de::FacilitySim> sim;
  de::PluginRegistry registry = probe_registry(clock, options, sim);

  auto errors = de::validate_config(config, &registry);
  if (!errors.empty()) return print_validation_errors(errors);

  de::Channel::Options channel_options;
  channel_options.default_source_period_s = config.defaults.source_period_s.value_or(30.0);
  channel_options.boot_timeout_s = config.defaults.boot_timeout_s;
  channel_options.stop_grace_s = config.defaults.stop_grace_s;

  de::EngineConfig engine_config = config;
  if (!options.archive_dir.empty()) engine_config.archive_dir = options.archive_dir;

  de::Engine engine(engine_config, registry, clock, channel_options);
  engine.assemble();
  de::ControlServer control(engine, socket_path);
  engine.start_all();
  std::cout << "engine up; control socket at " << socket_path << std::endl;

  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  auto started = std::chrono::steady_clock::now();
  while (!g_interrupted && !control.shutdown_requested()) {
    std::this_thread::sleep_for(std::chrono::milliseconds(100));
    if (duration_s > 0) {
      auto elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - started);
      if (elapsed.count() >= duration_s) break;
    }
  }
  engine.stop_all();
  control.close();
  std::cout << "engine stopped\n";
  return kExitOk;
}

int cmd_run(const std::string& config_path, const std::string& scenario_path,
            bool validate_only, const de::RunOptions& options, const std::string& report_path,
            const std::string& socket_path, double duration_s) {
  try {
    std::string effective_config = config_path.empty() ? scenario_path : config_path;
    de::EngineConfig config = de::load_config(effective_config);

    de::WallClock clock;
    std::shared_ptr<de::FacilitySim> probe_sim;
    de::PluginRegistry registry = probe_registry(clock, options, probe_sim);
    auto errors = de::validate_config(config, &registry);

    if (validate_only) {
      if (!errors.empty()) {
        print_validation_errors(errors);
        return 1;
      }
      std::cout << "configuration valid\n";
      return 0;
    }
    if (!errors.empty()) return print_validation_errors(errors);

    if (!scenario_path.empty())
      return run_simulated(config, scenario_path, options, report_path);
    return run_live(config, options, socket_path, duration_s);
  } catch (const de::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    bool config_problem = e.code() == de::Errc::parse_error ||
                          e.code() == de::Errc::io_error ||
                          e.code() == de::Errc::validation_error;
    return config_problem ? kExitValidation : kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
}

de::Value parse_archive_line(const std::string& line, const std::string& file, int lineno) {
  try {
    return de::Value::parse(line);
  } catch (const std::exception& e) {
    throw de::Error(de::Errc::parse_error,
                    file + ":" + std::to_string(lineno) + ": " + e.what());
  }
}

int cmd_inspect(const std::string& archive_dir, const std::string& channel,
                long long generation, const std::string& product) {
  std::filesystem::path file = std::filesystem::path(archive_dir) / (channel + ".jsonl");
  std::ifstream in(file);
  if (!in) {
    std::cerr << "error: no archive for channel '" << channel << "' at " << file << "\n";
    return 1;
  }
  std::vector<de::Value> records;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty()) records.push_back(parse_archive_line(line, file.string(), lineno));
  }

  if (generation >= 0) {
    const de::Value* found = nullptr;
    for (const auto& record : records)
      if (record.at("generation").get<long long>() == generation) found = &record;
    if (!found) {
      std::cerr << "error: generation " << generation << " not found\n";
      return 1;
    }
    std::cout << "channel:    " << channel << "\n";
    std::cout << "generation: " << generation << "\n";
    std::cout << "outcome:    " << found->at("outcome").get<std::string>() << "\n";
    std::cout << "started:    " << found->at("started_at").get<std::string>() << "\n";
    std::cout << "ended:      " << found->at("ended_at").get<std::string>() << "\n";
    std::cout << "products:\n";
    for (const auto& [name, entry] : found->at("products").items()) {
      std::cout << "  " << name << "  (by " << entry.at("produced_by").get<std::string>()
                << ", gen " << entry.at("source_generation").get<long long>() << ")\n";
      std::cout << "    " << entry.at("value").dump() << "\n";
    }
    return 0;
  }

  if (!product.empty()) {
    bool any = false;
    for (const auto& record : records) {
      const auto& products = record.at("products");
      auto it = products.find(product);
      if (it == products.end()) continue;
      any = true;
      std::cout << "gen " << record.at("generation").get<long long>() << ": ";
      if (product == "inference_result") {
        std::cout << "fired=" << it->at("value").at("fired_rules").dump()
                  << " publishers=" << it->at("value").at("publishers_to_run").dump() << "\n";
      } else {
        std::cout << it->at("value").dump() << "\n";
      }
    }
    if (!any) {
      std::cerr << "error: product '" << product << "' not found in any generation\n";
      return 1;
    }
    return 0;
  }

  std::cout << "channel " << channel << ": " << records.size() << " archived generation(s)\n";
  for (const auto& record : records)
    std::cout << "  gen " << record.at("generation").get<long long>() << "  "
              << record.at("outcome").get<std::string>() << "  "
              << record.at("products").size() << " product(s)\n";
  return 0;
}

int cmd_channel(const std::string& socket_path, const std::string& action,
                const std::string& id) {
  try {
    de::Value reply =
        de::control_request(socket_path, de::Value{{"cmd", action}, {"channel", id}});
    if (!reply.value("ok", false)) {
      std::cerr << "error: " << reply.value("error", "unknown failure") << "\n";
      return 1;
    }
    if (reply.contains("status")) std::cout << reply["status"].dump(2) << "\n";
    else std::cout << reply.dump(2) << "\n";
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Channel-based decision engine with a simulated hybrid facility"};
  app.require_subcommand(1);

  std::string log_level = "warn";
  app.add_option("--log-level", log_level, "diagnostics level: debug|info|warn|error");

  auto* run = app.add_subcommand("run", "validate, assemble and run the engine");
  std::string config_path, scenario_path, report_path = "report.json";
  std::string socket_path = "control.sock";
  de::RunOptions options;
  double duration_s = 0;
  bool validate_only = false;
  run->add_option("--config", config_path, "engine config file");
  run->add_option("--scenario", scenario_path, "facility scenario file (co-simulated run)");
  run->add_option("--duration", duration_s, "cap the run (sim seconds; wall seconds live)");
  run->add_option("--archive-dir", options.archive_dir, "archive directory");
  run->add_option("--metrics-dir", options.metrics_dir, "metrics directory");
  run->add_option("--report", report_path, "report.json path (scenario runs)");
  run->add_option("--socket", socket_path, "control socket path (live runs)");
  run->add_flag("--validate-only", validate_only, "validate the config and exit");

  auto* inspect = app.add_subcommand("inspect", "inspect archived decision cycles");
  std::string archive_dir = "archive", channel_id, product;
  long long generation = -1;
  inspect->add_option("--archive", archive_dir, "archive directory")->required();
  inspect->add_option("--channel", channel_id, "channel id")->required();
  inspect->add_option("--generation", generation, "show one generation's products");
  inspect->add_option("--product", product, "show one product's history");

  auto* chan = app.add_subcommand("channel", "lifecycle control over the socket");
  std::string action, target, chan_socket = "control.sock";
  chan->add_option("action", action, "up | down | status")->required();
  chan->add_option("id", target, "channel id")->required();
  chan->add_option("--socket", chan_socket, "control socket path");

  CLI11_PARSE(app, argc, argv);

  if (log_level == "debug") de::diag::set_level(de::diag::Level::debug);
  else if (log_level == "info") de::diag::set_level(de::diag::Level::info);
  else if (log_level == "error") de::diag::set_level(de::diag::Level::error);
  else de::diag::set_level(de::diag::Level::warn);

  if (run->parsed()) {
    if (config_path.empty() && scenario_path.empty()) {
      std::cerr << "error: run needs --config and/or --scenario\n";
      return kExitUsage;
    }
    if (duration_s > 0 && !scenario_path.empty())
      options.duration_override_s = static_cast<std::int64_t>(duration_s);
    return cmd_run(config_path, scenario_path, validate_only, options, report_path,
                   socket_path, duration_s);
  }
  if (inspect->parsed()) return cmd_inspect(archive_dir, channel_id, generation, product);
  if (chan->parsed()) return cmd_channel(chan_socket, action, target);
  return kExitUsage;
}
