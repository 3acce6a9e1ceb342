#pragma once

#include <compare>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "turbex/features.hpp"

namespace turbex {

/// Identifies one reading: turbine id plus epoch-seconds timestamp.
struct RowRef {
  std::string entity_id;
  std::int64_t row_id = 0;

  auto operator<=>(const RowRef&) const = default;
  std::string str() const { return entity_id + "@" + std::to_string(row_id); }
};

struct EntityRow {
  RowRef ref;
  std::vector<double> values;  // catalog order, NaN = missing
  std::optional<int> label;
};

/// Population statistics over non-missing values. Undefined (count == 0)
/// statistics hold NaN.
struct FeatureStats {
  std::size_t count = 0;
  double mean = 0.0;
  double stddev = 0.0;

  bool defined() const noexcept { return count > 0; }
};

class Dataset {
 public:
  Dataset() = default;
  /// Throws ErrorKind::conflict on a duplicate key and ErrorKind::dimension
  /// when a row width differs from the catalog.
  Dataset(FeatureCatalog catalog, std::vector<EntityRow> rows);

  const FeatureCatalog& catalog() const noexcept { return catalog_; }
  const std::vector<EntityRow>& rows() const noexcept { return rows_; }
  std::size_t size() const noexcept { return rows_.size(); }
  bool empty() const noexcept { return rows_.empty(); }
  std::size_t n_features() const noexcept { return catalog_.size(); }
  const std::vector<FeatureStats>& stats() const noexcept { return stats_; }
  std::vector<std::string> columns() const { return catalog_.names(); }

  const EntityRow* find(const std::string& entity_id, std::int64_t row_id) const;
  /// Throws ErrorKind::not_found naming both ids.
  const EntityRow& get_row(const std::string& entity_id, std::int64_t row_id) const;

  /// Entity ids ascending.
  std::vector<std::string> entities() const;
  /// Rows of one entity ordered by row_id.
  std::vector<const EntityRow*> rows_for(const std::string& entity_id) const;

 private:
  void compute_stats();

  FeatureCatalog catalog_;
  std::vector<EntityRow> rows_;
  std::map<RowRef, std::size_t> index_;
  std::vector<FeatureStats> stats_;
};

/// Reads `entity_id,row_id,label,<catalog columns>`; empty cell = missing.
Dataset ingest_csv(std::istream& in, const FeatureCatalog& catalog);
Dataset ingest_file(const std::string& path, const FeatureCatalog& catalog);
void write_csv(const Dataset& dataset, std::ostream& out);

}  // namespace turbex
