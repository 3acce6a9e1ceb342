#include "turbex/dataset.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <ostream>
#include <set>

#include "csv.hpp"
#include "turbex/error.hpp"
#include "turbex/model.hpp"

namespace turbex {

Dataset::Dataset(FeatureCatalog catalog, std::vector<EntityRow> rows)
    : catalog_(std::move(catalog)), rows_(std::move(rows)) {
  for (std::size_t i = 0; i < rows_.size(); ++i) {
    const auto& r = rows_[i];
    if (r.values.size() != catalog_.size()) {
      fail(ErrorKind::dimension, "row " + r.ref.str() + " has " + std::to_string(r.values.size()) +
                                     " values, catalog has " + std::to_string(catalog_.size()));
    }
    if (!index_.emplace(r.ref, i).second) {
      fail(ErrorKind::conflict, "duplicate row key (" + r.ref.entity_id + ", " + std::to_string(r.ref.row_id) + ")");
    }
  }
  compute_stats();
}

void Dataset::compute_stats() {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  stats_.assign(catalog_.size(), FeatureStats{0, nan, nan});
  for (std::size_t f = 0; f < catalog_.size(); ++f) {
    double sum = 0.0;
    std::size_t count = 0;
    for (const auto& r : rows_) {
      if (!is_missing(r.values[f])) {
        sum += r.values[f];
        ++count;
      }
    }
    if (count == 0) continue;
    const double mean = sum / static_cast<double>(count);
    double ss = 0.0;
    for (const auto& r : rows_) {
      if (!is_missing(r.values[f])) ss += (r.values[f] - mean) * (r.values[f] - mean);
    }
    stats_[f] = {count, mean, std::sqrt(ss / static_cast<double>(count))};
  }
}

const EntityRow* Dataset::find(const std::string& entity_id, std::int64_t row_id) const {
  auto it = index_.find(RowRef{entity_id, row_id});
  return it == index_.end() ? nullptr : &rows_[it->second];
}

const EntityRow& Dataset::get_row(const std::string& entity_id, std::int64_t row_id) const {
  const EntityRow* r = find(entity_id, row_id);
  if (!r) {
    fail(ErrorKind::not_found, "no row for entity '" + entity_id + "' at row_id " + std::to_string(row_id));
  }
  return *r;
}

std::vector<std::string> Dataset::entities() const {
  std::vector<std::string> out;
  for (const auto& [ref, _] : index_) {
    if (out.empty() || out.back() != ref.entity_id) out.push_back(ref.entity_id);
  }
  return out;
}

std::vector<const EntityRow*> Dataset::rows_for(const std::string& entity_id) const {
  std::vector<const EntityRow*> out;
  for (auto it = index_.lower_bound(RowRef{entity_id, std::numeric_limits<std::int64_t>::min()});
       it != index_.end() && it->first.entity_id == entity_id; ++it) {
    out.push_back(&rows_[it->second]);
  }
  return out;
}

// ---------------------------------------------------------------------------

namespace {

bool parse_double(const std::string& text, double& out) {
  const char* end = text.data() + text.size();
  auto res = std::from_chars(text.data(), end, out);
  return res.ec == std::errc() && res.ptr == end && std::isfinite(out);
}

bool parse_int64(const std::string& text, std::int64_t& out) {
  const char* end = text.data() + text.size();
  auto res = std::from_chars(text.data(), end, out);
  return res.ec == std::errc() && res.ptr == end;
}

}  // namespace

Dataset ingest_csv(std::istream& in, const FeatureCatalog& catalog) {
  std::string line;
  if (!csv::read_line(in, line)) fail(ErrorKind::schema, "data file line 1: missing header");
  if (line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
  auto header = csv::split(line);
  if (!header) fail(ErrorKind::parse, "data file line 1: unterminated quote");
  if (header->size() < 3 || (*header)[0] != "entity_id" || (*header)[1] != "row_id" || (*header)[2] != "label") {
    fail(ErrorKind::schema, "data file line 1: header must start with 'entity_id,row_id,label'");
  }
  if (header->size() - 3 != catalog.size()) {
    fail(ErrorKind::schema, "data file line 1: " + std::to_string(header->size() - 3) +
                                " feature columns but the catalog lists " + std::to_string(catalog.size()));
  }
  for (std::size_t i = 0; i < catalog.size(); ++i) {
    if ((*header)[i + 3] != catalog.at(i).name) {
      fail(ErrorKind::schema, "data file line 1: column " + std::to_string(i + 4) + " is '" + (*header)[i + 3] +
                                  "', catalog expects '" + catalog.at(i).name + "'");
    }
  }

  std::vector<EntityRow> rows;
  std::set<RowRef> keys;
  std::size_t line_no = 1;
  while (csv::read_line(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::string loc = "data file line " + std::to_string(line_no);
    auto fields = csv::split(line);
    if (!fields) fail(ErrorKind::parse, loc + ": unterminated quote");
    if (fields->size() != header->size()) {
      fail(ErrorKind::parse, loc + ": expected " + std::to_string(header->size()) + " fields, found " +
                                 std::to_string(fields->size()));
    }
    EntityRow row;
    row.ref.entity_id = (*fields)[0];
    if (row.ref.entity_id.empty()) fail(ErrorKind::parse, loc + ": empty entity_id");
    if (!parse_int64((*fields)[1], row.ref.row_id)) fail(ErrorKind::parse, loc + ": row_id is not an integer");
    const std::string& label = (*fields)[2];
    if (label == "0" || label == "1") {
      row.label = label == "1" ? 1 : 0;
    } else if (!label.empty()) {
      fail(ErrorKind::parse, loc + ": label must be 0, 1 or empty");
    }
    row.values.reserve(catalog.size());
    for (std::size_t i = 3; i < fields->size(); ++i) {
      const std::string& cell = (*fields)[i];
      double v = missing_value();
      if (!cell.empty() && !parse_double(cell, v)) {
        fail(ErrorKind::parse, loc + ": column '" + (*header)[i] + "' value '" + cell + "' is not a number");
      }
      row.values.push_back(v);
    }
    if (!keys.insert(row.ref).second) {
      fail(ErrorKind::conflict, loc + ": duplicate row key (" + row.ref.entity_id + ", " +
                                    std::to_string(row.ref.row_id) + ")");
    }
    rows.push_back(std::move(row));
  }
  return Dataset(catalog, std::move(rows));
}

Dataset ingest_file(const std::string& path, const FeatureCatalog& catalog) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::io, "cannot open data file '" + path + "'");
  return ingest_csv(in, catalog);
}

void write_csv(const Dataset& dataset, std::ostream& out) {
  out << "entity_id,row_id,label";
  for (const auto& f : dataset.catalog().features()) out << ',' << csv::quote(f.name);
  out << '\n';
  char buf[64];
  for (const auto& r : dataset.rows()) {
    out << csv::quote(r.ref.entity_id) << ',' << r.ref.row_id << ',';
    if (r.label) out << *r.label;
    for (double v : r.values) {
      out << ',';
      if (!is_missing(v)) {
        auto res = std::to_chars(buf, buf + sizeof buf, v);
        out.write(buf, res.ptr - buf);
      }
    }
    out << '\n';
  }
}

}  // namespace turbex
