#include <cmath>
#include <limits>
#include <random>
#include <set>
#include <sstream>

#include "doctest.h"
#include "support/fixtures.hpp"
#include "turbex/error.hpp"
#include "turbex/explain.hpp"
#include "turbex/features.hpp"

using namespace turbex;
using nlohmann::json;

namespace {

const double kNaN = std::numeric_limits<double>::quiet_NaN();

FeatureCatalog mode_catalog() {
  return FeatureCatalog({{"temp", "Caliper temperature", "Brake", ValueType::numeric, "°C"},
                         {"mode_A", "Mode A", "Operation", ValueType::boolean, ""},
                         {"mode_B", "Mode B", "Operation", ValueType::boolean, ""},
                         {"mode_C", "Mode C", "Operation", ValueType::boolean, ""},
                         {"yaw", "Yaw", "Operation", ValueType::numeric, "deg"}});
}

TransformSpec mode_spec() {
  return parse_transform_spec(json::parse(R"({"transforms":[
      {"kind":"one_hot_group","name":"turbine_mode","columns":["mode_A","mode_B","mode_C"]},
      {"kind":"affine","column":"temp","scale":1,"offset":0},
      {"kind":"rename","column":"yaw","name":"yaw_misalignment"}]})"));
}

ContributionSet mode_contributions() {
  ContributionSet c;
  c.row_ref = {"T07", 3};
  c.base_value = -0.5;
  c.features = {"temp", "mode_A", "mode_B", "mode_C", "yaw"};
  c.contributions = {0.5, 0.3, -0.1, 0.0, 0.25};
  c.predicted_margin = c.base_value + c.total();
  return c;
}

template <typename F>
ErrorKind kind_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("no error raised");
  return ErrorKind::io;
}

}  // namespace

TEST_CASE("one-hot contributions are summed") {
  const auto out = to_interpretable(mode_contributions(), mode_spec());
  CHECK(out.features == std::vector<std::string>{"temp", "turbine_mode", "yaw_misalignment"});
  CHECK(out.contributions[1] == doctest::Approx(0.2).epsilon(1e-15));
  CHECK(out.contributions[0] == 0.5);
  CHECK(out.contributions[2] == 0.25);
  CHECK(out.base_value == -0.5);
  CHECK(out.row_ref == RowRef{"T07", 3});
}

TEST_CASE("no transforms is the identity") {
  const auto in = mode_contributions();
  const auto out = to_interpretable(in, {});
  CHECK(out.features == in.features);
  CHECK(out.contributions == in.contributions);
  CHECK(out.base_value == in.base_value);
  CHECK(out.predicted_margin == in.predicted_margin);
}

TEST_CASE("grouping conserves the total") {
  // dyadic values add without rounding in any order
  ContributionSet c = mode_contributions();
  c.contributions = {0.5, 0.375, -0.125, 0.0, 0.25};
  CHECK(to_interpretable(c, mode_spec()).total() == c.total());

  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-3, 3);
  for (int t = 0; t < 200; ++t) {
    for (auto& v : c.contributions) v = u(rng);
    CHECK(std::abs(to_interpretable(c, mode_spec()).total() - c.total()) <= 1e-12);
  }
}

TEST_CASE("applying the layout twice changes nothing further") {
  const auto once = to_interpretable(mode_contributions(), mode_spec());
  const auto twice = to_interpretable(once, {});
  CHECK(twice.features == once.features);
  CHECK(twice.contributions == once.contributions);
}

TEST_CASE("display values") {
  const auto cat = mode_catalog();
  const auto spec = mode_spec();
  CHECK(display_value(cat, spec, "temp", 73.2).str() == "73.2 °C");
  const double row_b[] = {70.0, 0, 1, 0, 2.5};
  CHECK(display_value(cat, spec, "turbine_mode", row_b).value == "mode_B");
  const double none[] = {70.0, 0, 0, 0, 2.5};
  CHECK(display_value(cat, spec, "turbine_mode", none).value == "none");
  const double gone[] = {kNaN, kNaN, kNaN, kNaN, kNaN};
  CHECK(display_value(cat, spec, "turbine_mode", gone).value == "no reading");
  CHECK(display_value(cat, spec, "temp", gone).value == "no reading");
  CHECK(display_value(cat, spec, "temp", gone).missing);
  CHECK(display_value(cat, spec, "yaw_misalignment", row_b).str() == "2.5 deg");
  CHECK(kind_of([&] { display_value(cat, spec, "pressure", 1.0); }) == ErrorKind::not_found);
  CHECK(kind_of([&] { display_value(cat, spec, "turbine_mode", 1.0); }) == ErrorKind::invalid_argument);
}

TEST_CASE("affine display shifts the shown value") {
  FeatureCatalog cat({{"ambient_k", "Ambient temperature", "Env", ValueType::numeric, "°C"}});
  TransformSpec spec{{Affine{"ambient_k", 1.0, -273.15}}};
  CHECK(display_value(cat, spec, "ambient_k", 293.15).str() == "20 °C");
  TransformSpec scaled{{Affine{"ambient_k", 2.0, 1.0}}};
  CHECK(display_value(cat, scaled, "ambient_k", 3.0).value == "7");
}

TEST_CASE("boolean features display as words") {
  const auto cat = mode_catalog();
  CHECK(display_value(cat, {}, "mode_A", 1.0).value == "true");
  CHECK(display_value(cat, {}, "mode_A", 0.0).value == "false");
}

TEST_CASE("catalog validation") {
  const auto cat = mode_catalog();
  const auto spec = mode_spec();
  const auto cols = cat.names();
  CHECK(validate_catalog(cat, spec, cols).empty());

  auto extra = cols;
  extra.push_back("vib_x");
  const auto d = validate_catalog(cat, spec, extra);
  REQUIRE(d.size() == 1);
  CHECK(d[0].kind == DiagnosticKind::uncataloged_column);
  CHECK(d[0].subject == "vib_x");
  CHECK(d[0].message.find("vib_x") != std::string::npos);

  TransformSpec overlap = spec;
  overlap.transforms.push_back(OneHotGroup{"other_mode", {"mode_C"}});
  const auto o = validate_catalog(cat, overlap, cols);
  REQUIRE(o.size() == 1);
  CHECK(o[0].kind == DiagnosticKind::overlapping_group);
  CHECK(o[0].subject == "mode_C");

  const TransformSpec zero{{Affine{"temp", 0.0, 1.0}}};
  const auto z = validate_catalog(cat, zero, cols);
  REQUIRE(z.size() == 1);
  CHECK(z[0].kind == DiagnosticKind::zero_scale);

  auto info = cat.features();
  info.push_back(info[0]);
  info[1].display_name = "";
  const auto dup = validate_catalog(FeatureCatalog(info), {}, cols);
  REQUIRE(dup.size() == 2);
  std::set<DiagnosticKind> kinds = {dup[0].kind, dup[1].kind};
  CHECK(kinds == std::set<DiagnosticKind>{DiagnosticKind::duplicate_name, DiagnosticKind::empty_display_name});

  const TransformSpec twice{{Affine{"temp", 1.0, 0.0}, Rename{"temp", "t"}}};
  const auto tw = validate_catalog(cat, twice, cols);
  REQUIRE(tw.size() == 1);
  CHECK(tw[0].kind == DiagnosticKind::duplicate_transform_column);

  const TransformSpec ghost{{Rename{"nope", "n"}}};
  const auto g = validate_catalog(cat, ghost, cols);
  REQUIRE(g.size() == 1);
  CHECK(g[0].kind == DiagnosticKind::unknown_transform_column);
}

TEST_CASE("a column claimed twice cannot be laid out") {
  const std::vector<std::string> names = {"a", "b"};
  const TransformSpec bad{{OneHotGroup{"g1", {"a", "b"}}, OneHotGroup{"g2", {"b"}}}};
  CHECK(kind_of([&] { InterpretableLayout(names, bad); }) == ErrorKind::configuration);
}

TEST_CASE("layout keeps first-column positions and aggregates values") {
  const std::vector<std::string> names = {"m1", "x", "m2", "y"};
  const InterpretableLayout layout(names, TransformSpec{{OneHotGroup{"mode", {"m1", "m2"}}}});
  REQUIRE(layout.size() == 3);
  CHECK(layout.features()[0].name == "mode");
  CHECK(layout.features()[0].columns == std::vector<std::size_t>{0, 2});
  CHECK(layout.features()[1].name == "x");
  const double v[] = {1, 2, 3, 4};
  CHECK(layout.aggregate(v) == std::vector<double>{4, 2, 4});
  CHECK(layout.find("mode") == 0u);
  CHECK_FALSE(layout.find("m1").has_value());
}

TEST_CASE("transform spec documents are strict") {
  CHECK(kind_of([] { parse_transform_spec(json::parse(R"({"transforms":[{"kind":"log","column":"x"}]})")); }) ==
        ErrorKind::parse);
  CHECK(kind_of([] { parse_transform_spec(json::parse(R"({"transforms":[{"kind":"affine","column":"x","offset":1}]})")); }) ==
        ErrorKind::parse);
  CHECK(kind_of([] {
          parse_transform_spec(json::parse(R"({"transforms":[{"kind":"rename","column":"x","name":"y","z":1}]})"));
        }) == ErrorKind::parse);
  CHECK(kind_of([] { parse_transform_spec(json::parse(R"({"transform":[]})")); }) == ErrorKind::parse);
  const auto spec = mode_spec();
  const auto again = parse_transform_spec(json::parse(save_transform_spec(spec).dump()));
  CHECK(save_transform_spec(again).dump() == save_transform_spec(spec).dump());
}

TEST_CASE("catalog CSV") {
  std::istringstream good("name,display_name,category,type,unit\n"
                          "brake_caliper_temp,\"Brake caliper temperature, inner\",Brake,numeric,°C\n"
                          "mode_idle,Idling,Operation,boolean,\n");
  const auto cat = parse_catalog_csv(good);
  REQUIRE(cat.size() == 2);
  CHECK(cat.at(0).display_name == "Brake caliper temperature, inner");
  CHECK(cat.at(1).type == ValueType::boolean);
  CHECK(cat.at(1).unit.empty());
  CHECK(cat.find("mode_idle") == 1u);

  std::ostringstream out;
  write_catalog_csv(cat, out);
  std::istringstream back(out.str());
  const auto again = parse_catalog_csv(back);
  CHECK(again.at(0).display_name == cat.at(0).display_name);

  std::istringstream bad_header("name,label,category,type,unit\nx,X,C,numeric,\n");
  CHECK(kind_of([&] { parse_catalog_csv(bad_header); }) == ErrorKind::parse);
  std::istringstream bad_type("name,display_name,category,type,unit\nx,X,C,integer,\n");
  CHECK(kind_of([&] { parse_catalog_csv(bad_type); }) == ErrorKind::parse);
}
