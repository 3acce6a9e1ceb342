// Command-line front end. Talks to the library only through turbex.h.
#include <csignal>
#include <cstdio>
#include <iostream>
#include <string>
#include <thread>

#include "CLI11.hpp"
#include "turbex/turbex.h"

namespace {

int report_failure(const char* what, turbex_status status) {
  std::fprintf(stderr, "error: %s: %s: %s\n", what, turbex_status_name(status), turbex_last_error());
  return status == TURBEX_INVALID_ARGUMENT ? 2 : 1;
}

int print_and_free(char* text) {
  std::cout << text << '\n';
  turbex_string_free(text);
  return 0;
}

int serve(const std::string& config_path, int port_override) {
  // Block termination signals before any server thread exists so that only
  // the sigwait below receives them.
  sigset_t signals;
  sigemptyset(&signals);
  sigaddset(&signals, SIGINT);
  sigaddset(&signals, SIGTERM);
  pthread_sigmask(SIG_BLOCK, &signals, nullptr);

  turbex_service* service = nullptr;
  if (auto s = turbex_service_create(config_path.c_str(), &service); s != TURBEX_OK) {
    return report_failure("loading configuration", s);
  }
  int port = port_override;
  if (port < 0) turbex_service_config_port(service, &port);
  char* host = nullptr;
  turbex_service_config_address(service, &host);
  int bound = 0;
  const auto bind_status = turbex_service_bind(service, host, port, &bound);
  if (bind_status != TURBEX_OK) {
    turbex_string_free(host);
    turbex_service_free(service);
    return report_failure("binding", bind_status);
  }
  std::fprintf(stderr, "listening on http://%s:%d\n", host, bound);
  turbex_string_free(host);

  std::thread server([service] { turbex_service_run(service); });
  int received = 0;
  sigwait(&signals, &received);
  turbex_service_stop(service);
  server.join();
  turbex_service_free(service);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Turbine failure prediction service and tools"};
  app.set_version_flag("--version", std::string(turbex_version()));

  std::string config_path;
  int port = -1;
  std::string synthetic_params;
  std::string train_job;
  std::string events_path;
  long long start = 0;
  long long end = 0;
  std::string baselines;

  auto* config_opt = app.add_option("--config", config_path, "Service configuration (JSON)")->check(CLI::ExistingFile);
  app.add_option("--port", port, "Listening port; overrides the configuration")
      ->check(CLI::Range(0, 65535))
      ->needs(config_opt);
  auto* synth_opt = app.add_option("--generate-synthetic", synthetic_params,
                                   "Write a synthetic fleet described by a params file and exit")
                        ->check(CLI::ExistingFile);
  auto* train_opt =
      app.add_option("--train", train_job, "Train a model from a job file and exit")->check(CLI::ExistingFile);
  auto* kpi_opt = app.add_option("--kpi-report", events_path, "Print a KPI report for an NDJSON event log and exit")
                      ->check(CLI::ExistingFile);
  auto* start_opt = app.add_option("--start", start, "Evaluation window start (epoch seconds)")->needs(kpi_opt);
  auto* end_opt = app.add_option("--end", end, "Evaluation window end (epoch seconds, exclusive)")->needs(kpi_opt);
  app.add_option("--baseline", baselines, "Historic windows as start:end[,start:end...]")->needs(kpi_opt);
  kpi_opt->needs(start_opt)->needs(end_opt);
  config_opt->excludes(synth_opt)->excludes(train_opt)->excludes(kpi_opt);
  synth_opt->excludes(train_opt)->excludes(kpi_opt);
  train_opt->excludes(kpi_opt);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  char* out = nullptr;
  if (!synthetic_params.empty()) {
    const auto s = turbex_generate_synthetic(synthetic_params.c_str(), &out);
    return s == TURBEX_OK ? print_and_free(out) : report_failure("generating synthetic data", s);
  }
  if (!train_job.empty()) {
    const auto s = turbex_train(train_job.c_str(), &out);
    return s == TURBEX_OK ? print_and_free(out) : report_failure("training", s);
  }
  if (!events_path.empty()) {
    const auto s = turbex_kpi_report(events_path.c_str(), start, end, baselines.empty() ? nullptr : baselines.c_str(), &out);
    return s == TURBEX_OK ? print_and_free(out) : report_failure("kpi report", s);
  }
  if (config_path.empty()) {
    std::cerr << "one of --config, --generate-synthetic, --train or --kpi-report is required\n" << app.help();
    return 2;
  }
  return serve(config_path, port);
}
