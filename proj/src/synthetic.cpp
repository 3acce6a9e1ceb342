#include "turbex/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <random>

#include "turbex/error.hpp"
#include "turbex/model.hpp"

namespace turbex {

namespace {

constexpr std::int64_t kDay = 86400;
constexpr double kKelvin = 273.15;

}  // namespace

void SyntheticParams::validate() const {
  auto bad = [](const std::string& what) { fail(ErrorKind::invalid_argument, "synthetic params: " + what); };
  if (n_turbines < 1) bad("n_turbines must be >= 1");
  if (n_days < 1) bad("n_days must be >= 1");
  if (readings_per_day < 1) bad("readings_per_day must be >= 1");
  if (!(failure_rate_per_month > 0.0) || !std::isfinite(failure_rate_per_month)) bad("failure_rate_per_month must be > 0");
  if (label_window_days < 1) bad("label_window_days must be >= 1");
  if (!(missing_rate >= 0.0 && missing_rate < 1.0)) bad("missing_rate must lie in [0, 1)");
}

FeatureCatalog turbine_catalog() {
  return FeatureCatalog({
      {"brake_caliper_temp", "Brake caliper temperature", "Brake", ValueType::numeric, "°C"},
      {"brake_hydraulic_pressure", "Brake hydraulic pressure", "Brake", ValueType::numeric, "bar"},
      {"brake_disc_vibration", "Brake disc vibration", "Brake", ValueType::numeric, "mm/s"},
      {"gearbox_bearing_temp", "Gearbox bearing temperature", "Drivetrain", ValueType::numeric, "°C"},
      {"generator_winding_temp", "Generator winding temperature", "Generator", ValueType::numeric, "°C"},
      {"nacelle_temp", "Nacelle temperature", "Environment", ValueType::numeric, "°C"},
      {"ambient_temp_k", "Ambient temperature", "Environment", ValueType::numeric, "°C"},
      {"wind_speed", "Wind speed", "Operation", ValueType::numeric, "m/s"},
      {"rotor_speed", "Rotor speed", "Operation", ValueType::numeric, "rpm"},
      {"power_output", "Active power output", "Operation", ValueType::numeric, "kW"},
      {"tower_vibration", "Tower vibration", "Vibration", ValueType::numeric, "mm/s"},
      {"yaw_error", "Yaw misalignment", "Operation", ValueType::numeric, "deg"},
      {"mode_normal", "Operating normally", "Operation", ValueType::boolean, ""},
      {"mode_curtailed", "Curtailed by grid operator", "Operation", ValueType::boolean, ""},
      {"mode_idle", "Idling", "Operation", ValueType::boolean, ""},
  });
}

TransformSpec turbine_transforms() {
  TransformSpec spec;
  spec.transforms.emplace_back(OneHotGroup{"operating_mode", {"mode_normal", "mode_curtailed", "mode_idle"}});
  spec.transforms.emplace_back(Affine{"ambient_temp_k", 1.0, -kKelvin});
  spec.transforms.emplace_back(Rename{"yaw_error", "yaw_misalignment"});
  return spec;
}

std::vector<std::string> drifting_features() {
  return {"brake_caliper_temp", "brake_hydraulic_pressure", "brake_disc_vibration"};
}

namespace {

std::string entity_name(int index, int count) {
  const std::size_t width = std::max<std::size_t>(2, std::to_string(count).size());
  std::string digits = std::to_string(index + 1);
  return "T" + std::string(width - digits.size(), '0') + digits;
}

struct TurbineBias {
  double brake_temp;
  double pressure;
  double gearbox;
  double phase;
};

}  // namespace

SyntheticFleet generate_synthetic(const SyntheticParams& params, const FeatureCatalog& catalog) {
  params.validate();
  const std::int64_t horizon = static_cast<std::int64_t>(params.n_days) * kDay;
  const std::int64_t window = static_cast<std::int64_t>(params.label_window_days) * kDay;

  // Failure episodes: a fleet-wide Poisson process on its own stream, so the
  // arrival draws do not depend on the rate and scaling the rate only
  // compresses the same sequence of gaps.
  std::vector<FailureEpisode> episodes;
  {
    std::mt19937_64 rng(params.seed ^ 0x5DEECE66DULL);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    const double mean_gap = 30.0 * static_cast<double>(kDay) / params.failure_rate_per_month;
    double t = 0.0;
    while (true) {
      t += -std::log1p(-unit(rng)) * mean_gap;
      const int turbine = static_cast<int>(rng() % static_cast<std::uint64_t>(params.n_turbines));
      if (t >= static_cast<double>(horizon)) break;
      const std::int64_t when = params.start_time + static_cast<std::int64_t>(t);
      episodes.push_back({entity_name(turbine, params.n_turbines), when, when - window});
    }
  }
  std::map<std::string, std::vector<const FailureEpisode*>> by_turbine;
  for (const auto& e : episodes) by_turbine[e.entity_id].push_back(&e);

  std::mt19937_64 rng(params.seed);
  std::normal_distribution<double> noise(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  const std::size_t width = catalog.size();

  std::vector<EntityRow> rows;
  rows.reserve(static_cast<std::size_t>(params.n_turbines) * static_cast<std::size_t>(params.n_days) *
               static_cast<std::size_t>(params.readings_per_day));
  const std::int64_t step = kDay / params.readings_per_day;

  for (int turbine = 0; turbine < params.n_turbines; ++turbine) {
    const std::string id = entity_name(turbine, params.n_turbines);
    const TurbineBias bias{2.0 * noise(rng), 3.0 * noise(rng), 2.0 * noise(rng), 2.0 * std::numbers::pi * unit(rng)};
    const auto& own = by_turbine[id];

    for (int day = 0; day < params.n_days; ++day) {
      for (int r = 0; r < params.readings_per_day; ++r) {
        const std::int64_t t = params.start_time + day * kDay + r * step;

        // drift progress in (0, 1] inside a pre-failure window, else 0
        double drift = 0.0;
        bool positive = false;
        for (const auto* e : own) {
          if (t >= e->window_start && t < e->failure_time) {
            positive = true;
            drift = std::max(drift, static_cast<double>(t - e->window_start + step) / static_cast<double>(window));
          }
        }
        drift = std::min(drift, 1.0);

        const double hour = static_cast<double>((t % kDay)) / 3600.0;
        const double days = static_cast<double>(t - params.start_time) / static_cast<double>(kDay);
        const double wind =
            std::max(0.0, 8.0 + 3.0 * std::sin(2.0 * std::numbers::pi * days / 7.0 + bias.phase) + 1.5 * noise(rng));
        const double mode_draw = unit(rng);
        const int mode = mode_draw < 0.85 ? 0 : (mode_draw < 0.95 ? 1 : 2);
        const double capacity = std::min(1.0, std::pow(wind / 12.0, 3.0));
        const double power_factor = mode == 0 ? 1.0 : (mode == 1 ? 0.6 : 0.0);
        const double power = std::max(0.0, 2000.0 * capacity * power_factor + 20.0 * noise(rng));
        const double rotor = mode == 2 ? std::abs(0.2 * noise(rng)) : 14.0 * std::min(wind / 12.0, 1.0) + 0.3 * noise(rng);
        const double ambient_c = 10.0 + 6.0 * std::sin(2.0 * std::numbers::pi * (hour - 9.0) / 24.0) + noise(rng);

        std::map<std::string, double> signal = {
            {"brake_caliper_temp", 40.0 + bias.brake_temp + 0.3 * ambient_c + 2.0 * noise(rng) + 30.0 * drift},
            {"brake_hydraulic_pressure", 160.0 + bias.pressure + 3.0 * noise(rng) - 25.0 * drift},
            {"brake_disc_vibration", 1.2 + 0.2 * noise(rng) + 2.0 * drift},
            {"gearbox_bearing_temp", 55.0 + bias.gearbox + 0.01 * power + 2.0 * noise(rng)},
            {"generator_winding_temp", 65.0 + 0.015 * power + 3.0 * noise(rng)},
            {"nacelle_temp", ambient_c + 10.0 + 0.003 * power + noise(rng)},
            {"ambient_temp_k", ambient_c + kKelvin},
            {"wind_speed", wind},
            {"rotor_speed", rotor},
            {"power_output", power},
            {"tower_vibration", 0.8 + 0.05 * wind + 0.15 * noise(rng)},
            {"yaw_error", 4.0 * noise(rng)},
            {"mode_normal", mode == 0 ? 1.0 : 0.0},
            {"mode_curtailed", mode == 1 ? 1.0 : 0.0},
            {"mode_idle", mode == 2 ? 1.0 : 0.0},
        };

        EntityRow row;
        row.ref = {id, t};
        row.label = positive ? 1 : 0;
        row.values.resize(width);
        const bool mode_gap = unit(rng) < params.missing_rate;
        for (std::size_t f = 0; f < width; ++f) {
          const FeatureInfo& info = catalog.at(f);
          auto it = signal.find(info.name);
          double v = 0.0;
          if (it != signal.end()) {
            v = it->second;
          } else if (info.type == ValueType::numeric) {
            v = noise(rng);
          }
          const bool is_mode = info.name.rfind("mode_", 0) == 0 && it != signal.end();
          const bool gap = is_mode ? mode_gap : (info.type == ValueType::numeric && unit(rng) < params.missing_rate);
          row.values[f] = gap ? missing_value() : v;
        }
        rows.push_back(std::move(row));
      }
    }
  }
  return {Dataset(catalog, std::move(rows)), std::move(episodes)};
}

}  // namespace turbex
