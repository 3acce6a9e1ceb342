#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "turbex/explain.hpp"
#include "turbex/features.hpp"
#include "turbex/kpi.hpp"
#include "turbex/model.hpp"

namespace turbex {

struct DistanceDefaults {
  std::vector<std::string> feature_subset;  // machine or group names; empty = all numeric
  std::vector<std::pair<std::string, double>> weights;
  bool standardize = true;
};

struct AppConfig {
  std::string model_path;
  std::string dataset_path;
  std::string catalog_path;
  std::string transform_spec_path;  // optional
  std::size_t background_size = 64;
  std::uint64_t background_seed = 0;
  DistanceDefaults distance;
  std::string listen_address = "127.0.0.1";
  int port = 8080;
  std::string event_log_path;  // optional
};

/// Relative paths resolve against `base_dir`.
AppConfig parse_config(const nlohmann::json& document, const std::string& base_dir = "");
AppConfig load_config(const std::string& path);

struct HttpResponse {
  int status = 200;
  std::string body;
};

/// Everything the endpoints read, loaded and cross-validated at construction.
/// Construction throws ErrorKind::configuration (or io/parse/schema) naming
/// the first mismatch.
class Service {
 public:
  explicit Service(const AppConfig& config);
  ~Service();
  Service(const Service&) = delete;
  Service& operator=(const Service&) = delete;

  /// Dispatches one request. `target` is the path plus optional query string.
  /// Safe to call from many threads.
  HttpResponse handle(std::string_view method, std::string_view target, std::string_view body);

  /// Binds the listening socket; returns the bound port (port 0 picks one).
  int bind(const std::string& host, int port);
  /// Serves until stop(); requires a successful bind().
  void run();
  void stop();

  const AppConfig& config() const noexcept;

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace turbex
