#include "turbex/turbex.h"

#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <new>
#include <span>
#include <string>

#include "turbex/error.hpp"
#include "turbex/explain.hpp"
#include "turbex/jobs.hpp"
#include "turbex/kpi.hpp"
#include "turbex/model.hpp"
#include "turbex/service.hpp"

struct turbex_model {
  turbex::TreeEnsemble ensemble;
};

struct turbex_service {
  std::unique_ptr<turbex::Service> service;
};

namespace {

thread_local std::string g_last_error;

turbex_status status_of(turbex::ErrorKind kind) {
  using turbex::ErrorKind;
  switch (kind) {
    case ErrorKind::invalid_argument: return TURBEX_INVALID_ARGUMENT;
    case ErrorKind::parse: return TURBEX_PARSE_ERROR;
    case ErrorKind::schema: return TURBEX_SCHEMA_ERROR;
    case ErrorKind::structure: return TURBEX_STRUCTURE_ERROR;
    case ErrorKind::dimension: return TURBEX_DIMENSION_ERROR;
    case ErrorKind::not_found: return TURBEX_NOT_FOUND;
    case ErrorKind::conflict: return TURBEX_CONFLICT;
    case ErrorKind::reference: return TURBEX_REFERENCE_ERROR;
    case ErrorKind::configuration: return TURBEX_CONFIGURATION_ERROR;
    case ErrorKind::io: return TURBEX_IO_ERROR;
    case ErrorKind::training: return TURBEX_TRAINING_ERROR;
    case ErrorKind::oracle_refusal: return TURBEX_ORACLE_REFUSAL;
    case ErrorKind::empty_distribution: return TURBEX_EMPTY_DISTRIBUTION;
  }
  return TURBEX_INTERNAL_ERROR;
}

template <typename F>
turbex_status guarded(F&& body) {
  try {
    body();
    g_last_error.clear();
    return TURBEX_OK;
  } catch (const turbex::Error& e) {
    g_last_error = e.what();
    return status_of(e.kind());
  } catch (const nlohmann::json::exception& e) {
    g_last_error = e.what();
    return TURBEX_PARSE_ERROR;
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return TURBEX_INTERNAL_ERROR;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return TURBEX_INTERNAL_ERROR;
  }
}

void require(const void* p, const char* name) {
  if (p == nullptr) turbex::fail(turbex::ErrorKind::invalid_argument, std::string(name) + " must not be NULL");
}

char* copy_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out == nullptr) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void check_width(const turbex_model* model, size_t n) {
  if (n != static_cast<size_t>(model->ensemble.n_features)) {
    turbex::fail(turbex::ErrorKind::dimension, "row has " + std::to_string(n) + " values, model expects " +
                                                   std::to_string(model->ensemble.n_features));
  }
}

nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) turbex::fail(turbex::ErrorKind::io, "cannot open '" + path + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    turbex::fail(turbex::ErrorKind::parse, path + ": " + e.what());
  }
}

std::int64_t parse_epoch(const std::string& s) {
  std::size_t used = 0;
  long long v = 0;
  try {
    v = std::stoll(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != s.size()) turbex::fail(turbex::ErrorKind::invalid_argument, "bad epoch '" + s + "'");
  return v;
}

std::vector<turbex::Window> parse_windows(const std::string& list) {
  std::vector<turbex::Window> out;
  std::size_t pos = 0;
  while (pos <= list.size()) {
    const std::size_t comma = std::min(list.find(',', pos), list.size());
    const std::string piece = list.substr(pos, comma - pos);
    const std::size_t colon = piece.find(':');
    if (colon == std::string::npos) {
      turbex::fail(turbex::ErrorKind::invalid_argument, "baseline window '" + piece + "' is not start:end");
    }
    out.push_back({parse_epoch(piece.substr(0, colon)), parse_epoch(piece.substr(colon + 1))});
    pos = comma + 1;
  }
  return out;
}

}  // namespace

extern "C" {

const char* turbex_version(void) { return "1.0.0"; }

const char* turbex_last_error(void) { return g_last_error.c_str(); }

const char* turbex_status_name(turbex_status status) {
  switch (status) {
    case TURBEX_OK: return "ok";
    case TURBEX_INTERNAL_ERROR: return "internal_error";
    default: break;
  }
  for (int k = 0; k <= static_cast<int>(turbex::ErrorKind::empty_distribution); ++k) {
    const auto kind = static_cast<turbex::ErrorKind>(k);
    if (status_of(kind) == status) return turbex::to_string(kind);
  }
  return "unknown";
}

void turbex_string_free(char* s) { std::free(s); }

turbex_status turbex_model_load_file(const char* path, turbex_model** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = nullptr;
    auto m = std::make_unique<turbex_model>();
    m->ensemble = turbex::load_model_file(path);
    *out = m.release();
  });
}

turbex_status turbex_model_load_json(const char* json, turbex_model** out) {
  return guarded([&] {
    require(json, "json");
    require(out, "out");
    *out = nullptr;
    nlohmann::json doc;
    try {
      doc = nlohmann::json::parse(json);
    } catch (const nlohmann::json::parse_error& e) {
      turbex::fail(turbex::ErrorKind::parse, e.what());
    }
    auto m = std::make_unique<turbex_model>();
    m->ensemble = turbex::load_model(doc);
    *out = m.release();
  });
}

void turbex_model_free(turbex_model* model) { delete model; }

turbex_status turbex_model_n_features(const turbex_model* model, size_t* out) {
  return guarded([&] {
    require(model, "model");
    require(out, "out");
    *out = static_cast<size_t>(model->ensemble.n_features);
  });
}

turbex_status turbex_model_predict_margin(const turbex_model* model, const double* row, size_t n, double* out) {
  return guarded([&] {
    require(model, "model");
    require(row, "row");
    require(out, "out");
    check_width(model, n);
    *out = turbex::predict_margin(model->ensemble, std::span<const double>(row, n));
  });
}

turbex_status turbex_model_predict_proba(const turbex_model* model, const double* row, size_t n, double* out) {
  return guarded([&] {
    require(model, "model");
    require(row, "row");
    require(out, "out");
    check_width(model, n);
    *out = turbex::predict_proba(model->ensemble, std::span<const double>(row, n));
  });
}

turbex_status turbex_model_save_json(const turbex_model* model, char** out) {
  return guarded([&] {
    require(model, "model");
    require(out, "out");
    *out = copy_string(turbex::dump_model(model->ensemble));
  });
}

turbex_status turbex_model_gain_totals(const turbex_model* model, double* out, size_t n) {
  return guarded([&] {
    require(model, "model");
    require(out, "out");
    check_width(model, n);
    const auto totals = turbex::gain_totals(model->ensemble);
    std::copy(totals.begin(), totals.end(), out);
  });
}

turbex_status turbex_model_contributions(const turbex_model* model, const double* row, size_t n,
                                         const double* background, size_t n_background, double* base_value,
                                         double* contributions) {
  return guarded([&] {
    require(model, "model");
    require(row, "row");
    require(background, "background");
    require(base_value, "base_value");
    require(contributions, "contributions");
    check_width(model, n);
    turbex::Background bg(n_background);
    for (size_t i = 0; i < n_background; ++i) bg[i].assign(background + i * n, background + (i + 1) * n);
    const auto set = turbex::local_contributions(model->ensemble, std::span<const double>(row, n), bg);
    *base_value = set.base_value;
    std::copy(set.contributions.begin(), set.contributions.end(), contributions);
  });
}

turbex_status turbex_generate_synthetic(const char* params_path, char** summary) {
  return guarded([&] {
    require(params_path, "params_path");
    const auto base = std::filesystem::path(params_path).parent_path().string();
    const auto result = turbex::run_synthetic_job(read_json_file(params_path), base);
    if (summary != nullptr) *summary = copy_string(result.dump());
  });
}

turbex_status turbex_train(const char* job_path, char** summary) {
  return guarded([&] {
    require(job_path, "job_path");
    const auto base = std::filesystem::path(job_path).parent_path().string();
    const auto result = turbex::run_train_job(read_json_file(job_path), base);
    if (summary != nullptr) *summary = copy_string(result.dump());
  });
}

turbex_status turbex_kpi_report(const char* event_log_path, int64_t start, int64_t end, const char* baselines,
                                char** report_json) {
  return guarded([&] {
    require(event_log_path, "event_log_path");
    require(report_json, "report_json");
    const auto log = turbex::read_event_log_file(event_log_path);
    std::vector<turbex::Window> historic;
    if (baselines != nullptr && *baselines != '\0') historic = parse_windows(baselines);
    const auto report = turbex::baseline_report(log, turbex::Window{start, end}, historic);
    *report_json = copy_string(turbex::to_json(report).dump(2));
  });
}

turbex_status turbex_service_create(const char* config_path, turbex_service** out) {
  return guarded([&] {
    require(config_path, "config_path");
    require(out, "out");
    *out = nullptr;
    auto s = std::make_unique<turbex_service>();
    s->service = std::make_unique<turbex::Service>(turbex::load_config(config_path));
    *out = s.release();
  });
}

void turbex_service_free(turbex_service* service) { delete service; }

turbex_status turbex_service_handle(turbex_service* service, const char* method, const char* target,
                                    const char* body, int* http_status, char** response_body) {
  return guarded([&] {
    require(service, "service");
    require(method, "method");
    require(target, "target");
    require(http_status, "http_status");
    require(response_body, "response_body");
    const auto r = service->service->handle(method, target, body == nullptr ? "" : body);
    *response_body = copy_string(r.body);
    *http_status = r.status;
  });
}

turbex_status turbex_service_config_port(const turbex_service* service, int* port) {
  return guarded([&] {
    require(service, "service");
    require(port, "port");
    *port = service->service->config().port;
  });
}

turbex_status turbex_service_config_address(const turbex_service* service, char** address) {
  return guarded([&] {
    require(service, "service");
    require(address, "address");
    *address = copy_string(service->service->config().listen_address);
  });
}

turbex_status turbex_service_bind(turbex_service* service, const char* host, int port, int* bound_port) {
  return guarded([&] {
    require(service, "service");
    require(host, "host");
    const int p = service->service->bind(host, port);
    if (bound_port != nullptr) *bound_port = p;
  });
}

turbex_status turbex_service_run(turbex_service* service) {
  return guarded([&] {
    require(service, "service");
    service->service->run();
  });
}

turbex_status turbex_service_stop(turbex_service* service) {
  return guarded([&] {
    require(service, "service");
    service->service->stop();
  });
}

}  // extern "C"
