#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "maepde/pdegen/pde.hpp"

namespace maepde::bench {

using pdegen::FieldSample;
using pdegen::Grid;
using pdegen::PdeSpec;

class DatasetError : public std::runtime_error {
 public:
  enum class Kind { Io, BadMagic, VersionMismatch, Truncated, Inconsistent };
  DatasetError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

inline constexpr std::uint32_t kDatasetVersion = 1;

struct Dataset {
  std::vector<FieldSample> samples;
  std::uint64_t master_seed = 0;
  nlohmann::json config = nlohmann::json::object();
  /// Filled from the header on read; recomputed on write.
  double mean = 0.0, std = 1.0;
};

nlohmann::json to_json(const PdeSpec& s);
PdeSpec spec_from_json(const nlohmann::json& j);
nlohmann::json to_json(const Grid& g);
Grid grid_from_json(const nlohmann::json& j);

/// Rounds every value to the nearest float32, as stored in the payload.
void quantize_f32(FieldSample& s);

/// Header block as written for `ds`: family, count, grid, coefficient ranges,
/// standardization, master seed, config echo.
nlohmann::json dataset_header(const Dataset& ds);

void dataset_write(const Dataset& ds, const std::string& path);
Dataset dataset_read(const std::string& path);
nlohmann::json dataset_read_header(const std::string& path);

}  // namespace maepde::bench
