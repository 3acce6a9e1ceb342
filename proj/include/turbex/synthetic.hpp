#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "turbex/dataset.hpp"
#include "turbex/features.hpp"

namespace turbex {

// Synthetic desk-scale fleet. The signal model is a stand-in for real SCADA
// telemetry, not a reconstruction of any production feature set.

struct SyntheticParams {
  int n_turbines = 10;
  int n_days = 30;
  int readings_per_day = 4;
  double failure_rate_per_month = 1.0;  // fleet-wide, month = 30 days
  std::uint64_t seed = 0;
  int label_window_days = 14;
  double missing_rate = 0.01;
  std::int64_t start_time = 1700000000;

  void validate() const;
};

struct FailureEpisode {
  std::string entity_id;
  std::int64_t failure_time = 0;
  std::int64_t window_start = 0;  // rows in [window_start, failure_time) are labelled 1
};

struct SyntheticFleet {
  Dataset dataset;
  std::vector<FailureEpisode> episodes;
};

/// Catalog of the synthetic turbine schema, including an operating-mode
/// one-hot block and an ambient temperature column stored in kelvin.
FeatureCatalog turbine_catalog();
/// Groups the operating-mode indicators and shows ambient temperature in °C.
TransformSpec turbine_transforms();

/// Features that drift inside a pre-failure window.
std::vector<std::string> drifting_features();

/// Seeded and reproducible. Catalog columns the signal model does not know
/// are filled with standard normal noise (numeric) or 0.
SyntheticFleet generate_synthetic(const SyntheticParams& params, const FeatureCatalog& catalog);

}  // namespace turbex
