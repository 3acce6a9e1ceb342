#pragma once

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "turbex/dataset.hpp"
#include "turbex/features.hpp"
#include "turbex/model.hpp"

namespace fixtures {

inline std::filesystem::path data_dir() { return TURBEX_TEST_DATA; }

inline std::string read_text(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text(const std::filesystem::path& p, const std::string& text) {
  std::filesystem::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  out << text;
}

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("turbex-" + tag + "-" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

/// base 0; f0 < 10 ? -1 : +1, missing goes left.
inline nlohmann::json m1_json(int n_features = 1) {
  return nlohmann::json::parse(R"({"version":1,"objective":"binary_logistic","base_score":0.0,"n_features":)" +
                               std::to_string(n_features) + R"(,
    "trees":[{"nodes":[{"id":0,"feature":0,"threshold":10.0,"left":1,"right":2,"missing":"left","gain":3.2},
                       {"id":1,"leaf":-1.0},{"id":2,"leaf":1.0}]}]})");
}

inline turbex::TreeEnsemble m1(int n_features = 1) { return turbex::load_model(m1_json(n_features)); }

inline turbex::FeatureCatalog numeric_catalog(int n) {
  std::vector<turbex::FeatureInfo> info;
  for (int i = 0; i < n; ++i) {
    info.push_back({"f" + std::to_string(i), "Feature " + std::to_string(i), "C", turbex::ValueType::numeric, ""});
  }
  return turbex::FeatureCatalog(std::move(info));
}

/// Single-entity dataset whose rows are the given vectors at row_ids 1..n.
inline turbex::Dataset dataset_of(const std::vector<std::vector<double>>& rows, const turbex::FeatureCatalog& catalog,
                                  const std::string& entity = "T01") {
  std::vector<turbex::EntityRow> out;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.push_back({{entity, static_cast<std::int64_t>(i + 1)}, rows[i], std::nullopt});
  }
  return turbex::Dataset(catalog, std::move(out));
}

}  // namespace fixtures
