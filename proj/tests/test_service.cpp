#include <cmath>
#include <filesystem>
#include <thread>

#include "doctest.h"
#include "httplib.h"
#include "support/fixtures.hpp"
#include "turbex/error.hpp"
#include "turbex/explain.hpp"
#include "turbex/service.hpp"

using namespace turbex;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

/// Copy of the frozen fleet bundle; POST /events appends to its log.
struct Fleet {
  fixtures::TempDir dir{"service"};
  Fleet() {
    for (const auto& e : fs::directory_iterator(fixtures::data_dir() / "fleet")) {
      fs::copy_file(e.path(), dir.path() / e.path().filename());
    }
  }
  std::string config_path() const { return (dir / "config.json").string(); }
};

struct Call {
  int status;
  json body;
  std::string raw;
};

Call call(Service& svc, std::string_view method, std::string_view target, std::string_view body = "") {
  const auto r = svc.handle(method, target, body);
  return {r.status, json::parse(r.body), r.body};
}

Call post(Service& svc, std::string_view target, const json& body) { return call(svc, "POST", target, body.dump()); }

}  // namespace

TEST_CASE("read endpoints") {
  Fleet fleet;
  Service svc(load_config(fleet.config_path()));

  auto r = call(svc, "GET", "/api/v1/entities");
  REQUIRE(r.status == 200);
  REQUIRE(r.body["entities"].size() == 3);
  CHECK(r.body["entities"][0]["entity_id"] == "T01");
  CHECK(r.body["entities"][0]["n_rows"] == 80);

  r = call(svc, "GET", "/api/v1/entities/T02/rows");
  REQUIRE(r.status == 200);
  CHECK(r.body["rows"].size() == 80);
  const auto& first = r.body["rows"][0];
  CHECK(first["probability"].get<double>() == doctest::Approx(1.0 / (1.0 + std::exp(-first["margin"].get<double>()))));

  CHECK(call(svc, "GET", "/api/v1/entities/T99/rows").status == 404);

  r = call(svc, "GET", "/api/v1/features");
  REQUIRE(r.status == 200);
  CHECK(r.body["features"].size() == 15);
  const auto& groups = r.body["interpretable_features"];
  CHECK(groups.size() == 13);
  bool saw_mode = false;
  for (const auto& g : groups) {
    if (g["feature"] == "operating_mode") {
      saw_mode = true;
      CHECK(g["columns"].size() == 3);
    }
    CHECK(g["feature"] != "yaw_error");
  }
  CHECK(saw_mode);
}

TEST_CASE("predict and contributions agree with the model") {
  Fleet fleet;
  const auto config = load_config(fleet.config_path());
  Service svc(config);
  const auto model = load_model_file(config.model_path);
  const auto catalog = load_catalog_file(config.catalog_path);
  const auto data = ingest_file(config.dataset_path, catalog);

  for (std::size_t i = 0; i < data.size(); i += 7) {
    const auto& row = data.rows()[i];
    const json ref = {{"entity_id", row.ref.entity_id}, {"row_id", row.ref.row_id}};
    const auto p = post(svc, "/api/v1/predict", ref);
    REQUIRE(p.status == 200);
    CHECK(p.body["margin"].get<double>() == predict_margin(model, row.values));

    const auto c = post(svc, "/api/v1/contributions", ref);
    REQUIRE(c.status == 200);
    double sum = c.body["base_value"].get<double>();
    for (const auto& f : c.body["contributions"]) sum += f["contribution"].get<double>();
    CHECK(std::abs(sum - predict_margin(model, row.values)) <= 1e-8);
    CHECK(c.body["contributions"].size() == 13);
  }
}

TEST_CASE("contributions show interpretable values") {
  Fleet fleet;
  Service svc(load_config(fleet.config_path()));
  const auto c = post(svc, "/api/v1/contributions", {{"entity_id", "T01"}, {"row_id", 1700000000}});
  REQUIRE(c.status == 200);
  for (const auto& f : c.body["contributions"]) {
    if (f["feature"] == "operating_mode") CHECK(f["value"] == "mode_normal");
    if (f["feature"] == "generator_winding_temp") {
      CHECK(f["missing"] == true);
      CHECK(f["value"] == "no reading");
    }
    if (f["feature"] == "ambient_temp_k") CHECK(std::stod(f["value"].get<std::string>()) < 20.0);
  }
}

TEST_CASE("repeated reads are byte-identical") {
  Fleet fleet;
  Service svc(load_config(fleet.config_path()));
  const std::string body = R"({"entity_id":"T03","row_id":1700086400})";
  for (const auto& [m, t, b] : std::vector<std::tuple<std::string, std::string, std::string>>{
           {"POST", "/api/v1/contributions", body},
           {"POST", "/api/v1/similar", R"({"entity_id":"T03","row_id":1700086400,"k":5})"},
           {"GET", "/api/v1/importance?method=mean_abs_shap", ""},
           {"GET", "/api/v1/feature/brake_caliper_temp/scatter", ""}}) {
    const auto first = svc.handle(m, t, b);
    REQUIRE(first.status == 200);
    CHECK(svc.handle(m, t, b).body == first.body);
  }
}

TEST_CASE("similar matches the engine") {
  Fleet fleet;
  const auto config = load_config(fleet.config_path());
  Service svc(config);
  const auto data = ingest_file(config.dataset_path, load_catalog_file(config.catalog_path));
  const auto& row = data.get_row("T02", 1700000000 + 86400 * 3);
  const auto r = post(svc, "/api/v1/similar", {{"entity_id", "T02"}, {"row_id", row.ref.row_id}, {"k", 6}});
  REQUIRE(r.status == 200);
  const auto expected = nearest_neighbors(data, row.values, 6, DistanceConfig{});
  REQUIRE(r.body["neighbors"].size() == expected.size());
  for (std::size_t i = 0; i < expected.size(); ++i) {
    CHECK(r.body["neighbors"][i]["entity_id"] == expected[i].row_ref.entity_id);
    CHECK(r.body["neighbors"][i]["row_id"] == expected[i].row_ref.row_id);
    CHECK(r.body["neighbors"][i]["distance"].get<double>() == expected[i].distance);
  }
  CHECK(r.body["neighbors"][0]["distance"] == 0.0);

  const auto narrow = post(svc, "/api/v1/similar",
                           {{"entity_id", "T02"},
                            {"row_id", row.ref.row_id},
                            {"k", 3},
                            {"feature_subset", {"brake_caliper_temp", "operating_mode"}},
                            {"weights", {{"brake_caliper_temp", 2.0}}},
                            {"standardize", false}});
  REQUIRE(narrow.status == 200);
  CHECK(narrow.body["neighbors"].size() == 3);
  const auto unknown = post(svc, "/api/v1/similar",
                            {{"entity_id", "T02"}, {"row_id", row.ref.row_id}, {"k", 3}, {"feature_subset", {"x"}}});
  CHECK(unknown.status == 400);
  CHECK(unknown.body["field"] == "feature_subset");
}

TEST_CASE("compare is antisymmetric") {
  Fleet fleet;
  Service svc(load_config(fleet.config_path()));
  const json a = {{"entity_id", "T01"}, {"row_id", 1700000000}};
  const json b = {{"entity_id", "T03"}, {"row_id", 17}};
  const json b_ok = {{"entity_id", "T03"}, {"row_id", 1700000000 + 21600 * 10}};
  CHECK(post(svc, "/api/v1/compare", {{"a", a}, {"b", b}}).status == 404);
  const auto ab = post(svc, "/api/v1/compare", {{"a", a}, {"b", b_ok}});
  const auto ba = post(svc, "/api/v1/compare", {{"a", b_ok}, {"b", a}});
  REQUIRE(ab.status == 200);
  REQUIRE(ba.status == 200);
  REQUIRE(ab.body["features"].size() == ba.body["features"].size());
  for (std::size_t i = 0; i < ab.body["features"].size(); ++i) {
    const auto& x = ab.body["features"][i];
    const auto& y = ba.body["features"][i];
    CHECK(x["feature"] == y["feature"]);
    CHECK(x["delta_contribution"].get<double>() == -y["delta_contribution"].get<double>());
    CHECK(x["delta_contribution"].get<double>() ==
          x["contribution_b"].get<double>() - x["contribution_a"].get<double>());
  }
}

TEST_CASE("importance, scatter and distribution") {
  Fleet fleet;
  Service svc(load_config(fleet.config_path()));
  for (const char* m : {"gain", "mean_abs_shap", "signed_mean_shap"}) {
    const auto r = call(svc, "GET", std::string("/api/v1/importance?method=") + m);
    REQUIRE(r.status == 200);
    CHECK(r.body["method"] == m);
    CHECK(r.body["scores"].size() == 13);
  }
  const auto gain = call(svc, "GET", "/api/v1/importance");
  double total = 0;
  for (const auto& s : gain.body["scores"]) total += s["score"].get<double>();
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  const auto bad = call(svc, "GET", "/api/v1/importance?method=permutation");
  CHECK(bad.status == 400);
  CHECK(bad.body["field"] == "method");

  const auto sc = call(svc, "GET", "/api/v1/feature/brake_caliper_temp/scatter");
  REQUIRE(sc.status == 200);
  CHECK(sc.body["points"].size() == 240);
  CHECK(sc.body["unit"] == "°C");
  CHECK(call(svc, "GET", "/api/v1/feature/operating_mode/scatter").status == 200);

  const auto d = call(svc, "GET", "/api/v1/feature/brake_caliper_temp/distribution");
  REQUIRE(d.status == 200);
  CHECK(d.body["min"].get<double>() <= d.body["q1"].get<double>());
  CHECK(d.body["q1"].get<double>() <= d.body["median"].get<double>());
  CHECK(d.body["median"].get<double>() <= d.body["q3"].get<double>());
  CHECK(d.body["q3"].get<double>() <= d.body["max"].get<double>());
  CHECK(d.body["count"].get<int>() <= 240);
  const auto grp = call(svc, "GET", "/api/v1/feature/operating_mode/distribution");
  CHECK(grp.status == 400);
  CHECK(grp.body["field"] == "name");
  const auto ambient = call(svc, "GET", "/api/v1/feature/ambient_temp_k/distribution");
  REQUIRE(ambient.status == 200);
  CHECK(ambient.body["median"].get<double>() < 40.0);
  CHECK(call(svc, "GET", "/api/v1/feature/nope/distribution").status == 404);
}

TEST_CASE("requests are validated strictly") {
  Fleet fleet;
  Service svc(load_config(fleet.config_path()));
  auto r = post(svc, "/api/v1/predict", {{"entity_id", "T01"}, {"row_id", 1700000000}, {"foo", 1}});
  CHECK(r.status == 400);
  CHECK(r.body["error"] == "invalid_request");
  CHECK(r.body["field"] == "foo");

  r = post(svc, "/api/v1/similar", {{"entity_id", "T01"}, {"row_id", 1700000000}, {"k", 0}});
  CHECK(r.status == 400);
  CHECK(r.body["field"] == "k");

  r = call(svc, "POST", "/api/v1/contributions", "{\"entity_id\":");
  CHECK(r.status == 400);
  CHECK(r.body["error"] == "invalid_json");

  r = post(svc, "/api/v1/predict", {{"entity_id", "T01"}});
  CHECK(r.status == 400);
  CHECK(r.body["field"] == "row_id");

  r = call(svc, "GET", "/api/v1/entities?verbose=1");
  CHECK(r.status == 400);
  CHECK(r.body["field"] == "verbose");

  r = post(svc, "/api/v1/predict", {{"entity_id", "T01"}, {"row_id", 17}});
  CHECK(r.status == 404);
  CHECK(r.body["error"] == "not_found");
  CHECK(r.body["entity_id"] == "T01");
  CHECK(r.body["row_id"] == 17);

  CHECK(call(svc, "GET", "/api/v1/predict").status == 405);
  CHECK(call(svc, "POST", "/api/v1/entities").status == 405);
  CHECK(call(svc, "GET", "/api/v1/nothing").status == 404);
  CHECK(call(svc, "GET", "/").status == 404);
}

TEST_CASE("events and the KPI report") {
  Fleet fleet;
  Service svc(load_config(fleet.config_path()));
  const auto before = fixtures::read_text(fleet.dir / "events.ndjson");

  auto r = post(svc, "/api/v1/events",
                {{"kind", "alert"}, {"alert_id", "X1"}, {"entity_id", "T01"}, {"time", 1800000000}, {"score", 0.9}});
  CHECK(r.status == 201);
  CHECK(r.body["recorded"] == "alert");
  CHECK(r.body["events"] == 39);
  r = post(svc, "/api/v1/events",
           {{"kind", "alert"}, {"alert_id", "X1"}, {"entity_id", "T02"}, {"time", 1800000001}, {"score", 0.8}});
  CHECK(r.status == 409);
  r = post(svc, "/api/v1/events", {{"kind", "decision"}, {"alert_id", "X9"}, {"investigated", true}, {"time", 1800000002}});
  CHECK(r.status == 422);
  CHECK(r.body["error"] == "reference_error");
  r = post(svc, "/api/v1/events", {{"kind", "decision"}, {"alert_id", "X1"}, {"investigated", true}, {"time", 1800000003}});
  CHECK(r.status == 201);
  r = post(svc, "/api/v1/events", {{"kind", "decision"}, {"alert_id", "X1"}, {"investigated", "yes"}, {"time", 1}});
  CHECK(r.status == 400);
  CHECK(call(svc, "POST", "/api/v1/events", "not json").status == 400);

  const auto after = fixtures::read_text(fleet.dir / "events.ndjson");
  CHECK(after.size() > before.size());
  CHECK(after.substr(0, before.size()) == before);
  CHECK(read_event_log_file((fleet.dir / "events.ndjson").string()).size() == 40);

  r = call(svc, "GET", "/api/v1/kpi/report?start=1800000000&end=1800003600");
  REQUIRE(r.status == 200);
  CHECK(r.body["kpi3_alert_followup_rate"] == 1.0);
  r = call(svc, "GET", "/api/v1/kpi/report?start=1800000000&end=1800003600&baseline=1700000000:1700003600");
  REQUIRE(r.status == 200);
  CHECK_FALSE(r.body["deltas"].is_null());
  r = call(svc, "GET", "/api/v1/kpi/report?start=1800000000&end=1800003600&baseline=1700000000:1700000005");
  CHECK(r.status == 400);
  CHECK(r.body["field"] == "baseline");
  CHECK(call(svc, "GET", "/api/v1/kpi/report?start=5").body["field"] == "end");
  CHECK(call(svc, "GET", "/api/v1/kpi/report?start=9&end=5").status == 400);
}

TEST_CASE("configuration errors name the problem") {
  Fleet fleet;
  auto doc = json::parse(fixtures::read_text(fleet.dir / "config.json"));
  auto broken = doc;
  broken["dataset_path"] = "missing.csv";
  try {
    Service svc(parse_config(broken, fleet.dir.path().string()));
    FAIL("expected a load error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("missing.csv") != std::string::npos);
  }

  auto model = json::parse(fixtures::read_text(fleet.dir / "model.json"));
  model["n_features"] = 14;
  fixtures::write_text(fleet.dir / "narrow.json", model.dump());
  auto narrow = doc;
  narrow["model_path"] = "narrow.json";
  try {
    Service svc(parse_config(narrow, fleet.dir.path().string()));
    FAIL("expected a width mismatch");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::configuration);
    CHECK(std::string(e.what()).find("15") != std::string::npos);
  }

  auto extra = doc;
  extra["colour"] = "blue";
  CHECK_THROWS_AS(parse_config(extra, ""), Error);
}

TEST_CASE("serves over a real socket") {
  Fleet fleet;
  Service svc(load_config(fleet.config_path()));
  const int port = svc.bind("127.0.0.1", 0);
  REQUIRE(port > 0);
  std::thread server([&] { svc.run(); });
  httplib::Client client("127.0.0.1", port);
  auto res = client.Get("/api/v1/entities");
  REQUIRE(res);
  CHECK(res->status == 200);
  CHECK(res->get_header_value("Content-Type").find("application/json") != std::string::npos);
  res = client.Post("/api/v1/predict", R"({"entity_id":"T01","row_id":1700000000})", "application/x-www-form-urlencoded");
  REQUIRE(res);
  CHECK(res->status == 200);
  res = client.Get("/api/v1/feature/brake%5Fcaliper%5Ftemp/distribution");
  REQUIRE(res);
  CHECK(res->status == 200);
  svc.stop();
  server.join();
}
