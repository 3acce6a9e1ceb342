#include <set>
#include <sstream>

#include "doctest.h"
#include "support/fixtures.hpp"
#include "turbex/error.hpp"
#include "turbex/explain.hpp"
#include "turbex/jobs.hpp"
#include "turbex/synthetic.hpp"

using namespace turbex;

namespace {

std::string csv_of(const Dataset& ds) {
  std::ostringstream out;
  write_csv(ds, out);
  return out.str();
}

SyntheticParams seven() {
  SyntheticParams p;
  p.n_turbines = 10;
  p.n_days = 30;
  p.failure_rate_per_month = 1.0;
  p.seed = 7;
  return p;
}

}  // namespace

TEST_CASE("seed 7 fleet has a pinned episode count") {
  const auto fleet = generate_synthetic(seven(), turbine_catalog());
  // regression value, recorded from the generator
  CHECK(fleet.episodes.size() == 1);
  CHECK(fleet.dataset.size() == 10u * 30u * 4u);
  CHECK(fleet.dataset.entities().size() == 10);
  CHECK(fleet.dataset.entities().front() == "T01");
}

TEST_CASE("same params give byte-identical datasets") {
  const auto a = generate_synthetic(seven(), turbine_catalog());
  const auto b = generate_synthetic(seven(), turbine_catalog());
  CHECK(csv_of(a.dataset) == csv_of(b.dataset));
  auto other = seven();
  other.seed = 8;
  CHECK(csv_of(generate_synthetic(other, turbine_catalog()).dataset) != csv_of(a.dataset));
}

TEST_CASE("a tenfold rate gives strictly more episodes") {
  for (std::uint64_t seed : {1u, 7u, 19u, 2024u}) {
    auto p = seven();
    p.seed = seed;
    const auto base = generate_synthetic(p, turbine_catalog()).episodes.size();
    p.failure_rate_per_month *= 10.0;
    CHECK(generate_synthetic(p, turbine_catalog()).episodes.size() > base);
  }
}

TEST_CASE("every positive label lies inside a pre-failure window") {
  auto p = seven();
  p.failure_rate_per_month = 6.0;
  const auto fleet = generate_synthetic(p, turbine_catalog());
  REQUIRE(fleet.episodes.size() > 1);
  std::size_t positives = 0;
  for (const auto& r : fleet.dataset.rows()) {
    REQUIRE(r.label.has_value());
    bool inside = false;
    for (const auto& e : fleet.episodes) {
      inside = inside || (e.entity_id == r.ref.entity_id && r.ref.row_id >= e.window_start && r.ref.row_id < e.failure_time);
    }
    CHECK(inside == (*r.label == 1));
    positives += *r.label == 1;
  }
  CHECK(positives > 0);
  for (const auto& e : fleet.episodes) CHECK(e.failure_time - e.window_start == 14 * 86400);
}

TEST_CASE("brake features drift before a failure") {
  auto p = seven();
  p.failure_rate_per_month = 6.0;
  p.missing_rate = 0.0;
  const auto fleet = generate_synthetic(p, turbine_catalog());
  const std::size_t caliper = *fleet.dataset.catalog().find("brake_caliper_temp");
  double pos = 0, neg = 0;
  int np = 0, nn = 0;
  for (const auto& r : fleet.dataset.rows()) {
    (*r.label == 1 ? pos : neg) += r.values[caliper];
    (*r.label == 1 ? np : nn) += 1;
  }
  CHECK(pos / np > neg / nn + 3.0);
  const auto drifting = drifting_features();
  CHECK(std::find(drifting.begin(), drifting.end(), "brake_caliper_temp") != drifting.end());
}

TEST_CASE("synthetic catalog and transforms validate") {
  const auto fleet = generate_synthetic(seven(), turbine_catalog());
  CHECK(validate_catalog(turbine_catalog(), turbine_transforms(), fleet.dataset).empty());
  const auto mode_cols = {"mode_normal", "mode_curtailed", "mode_idle"};
  for (const auto& r : fleet.dataset.rows()) {
    double sum = 0;
    bool missing = false;
    for (const char* c : mode_cols) {
      const double v = r.values[*fleet.dataset.catalog().find(c)];
      missing = missing || is_missing(v);
      sum += v;
    }
    if (!missing) CHECK(sum == 1.0);
  }
}

TEST_CASE("invalid params are rejected") {
  auto p = seven();
  p.n_turbines = 0;
  CHECK_THROWS_AS(generate_synthetic(p, turbine_catalog()), Error);
  p = seven();
  p.failure_rate_per_month = 0.0;
  CHECK_THROWS_AS(generate_synthetic(p, turbine_catalog()), Error);
  p = seven();
  p.readings_per_day = 0;
  CHECK_THROWS_AS(generate_synthetic(p, turbine_catalog()), Error);
}

TEST_CASE("generation job writes a consistent bundle") {
  fixtures::TempDir dir("synthetic");
  const nlohmann::json job = {{"n_turbines", 3},           {"n_days", 10},
                              {"seed", 5},                 {"failure_rate_per_month", 5},
                              {"output", "data.csv"},      {"catalog_output", "catalog.csv"},
                              {"transforms_output", "t.json"}, {"model_output", "model.json"},
                              {"train", {{"n_trees", 3}}}, {"events_output", "events.ndjson"},
                              {"config_output", "config.json"}};
  const auto summary = run_synthetic_job(job, dir.path().string());
  CHECK(summary["rows"] == 120);
  const auto catalog = load_catalog_file((dir / "catalog.csv").string());
  const auto ds = ingest_file((dir / "data.csv").string(), catalog);
  CHECK(ds.size() == 120);
  const auto model = load_model_file((dir / "model.json").string());
  CHECK(model.trees.size() == 3);
  CHECK(static_cast<std::size_t>(model.n_features) == catalog.size());
  const auto log = read_event_log_file((dir / "events.ndjson").string());
  CHECK(log.size() == summary["events"].get<std::size_t>());

  const auto again_dir = dir / "again";
  auto job2 = job;
  run_synthetic_job(job2, again_dir.string());
  CHECK(fixtures::read_text(again_dir / "data.csv") == fixtures::read_text(dir / "data.csv"));
  CHECK(fixtures::read_text(again_dir / "model.json") == fixtures::read_text(dir / "model.json"));
  CHECK(fixtures::read_text(again_dir / "events.ndjson") == fixtures::read_text(dir / "events.ndjson"));

  CHECK_THROWS_AS(run_synthetic_job({{"n_turbines", 3}}, dir.path().string()), Error);
  CHECK_THROWS_AS(run_synthetic_job({{"output", "x.csv"}, {"colour", 1}}, dir.path().string()), Error);
}
