#pragma once

#include "ebscore/core.hpp"

#include "json.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace ebscore {

using Json = nlohmann::ordered_json;

/// Shortest decimal text that parses back to the same double.
std::string format_double(double value);

/// Point sets as CSV: one point per row, comma separated, no header. Blank
/// lines and lines starting with '#' are skipped.
Matrix read_points_csv(const std::filesystem::path& path);
void write_points_csv(const std::filesystem::path& path, const Matrix& points);

/// Binary point sets: "EBSC", u32 n, u32 d, 4 reserved bytes, then n*d
/// little-endian float64 values in column-major order.
Matrix read_points_binary(const std::filesystem::path& path);
void write_points_binary(const std::filesystem::path& path, const Matrix& points);

/// Dispatches on the leading magic bytes.
Matrix read_points(const std::filesystem::path& path);

/// Writes `content` to `path`, creating parent directories. Throws IoError.
void write_text(const std::filesystem::path& path, std::string_view content);

/// Loads a YAML (or JSON, which is a YAML subset) file into a JSON tree.
/// Scalars become integers, doubles, booleans or strings in that order.
Json load_config(const std::filesystem::path& path);

/// Applies "a.b.c=value" overrides; the value is parsed as a YAML scalar or
/// flow sequence, e.g. "replicates=3" or "n_grid=[256, 512, 1024]".
void apply_overrides(Json& config, const std::vector<std::string>& overrides);

/// {metric, value, std_error, n_eval, seed, params}
struct MetricRecord {
  std::string metric;
  double value = 0.0;
  double std_error = 0.0;
  Index n_eval = 0;
  std::uint64_t seed = 0;
  Json params = Json::object();
};
Json to_json(const MetricRecord& record);

}  // namespace ebscore
