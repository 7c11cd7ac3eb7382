#include "ebscore/io.hpp"

#include <yaml-cpp/yaml.h>

#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

namespace ebscore {
namespace {

static_assert(std::endian::native == std::endian::little, "binary point format assumes a little-endian host");

constexpr std::array<char, 4> kMagic = {'E', 'B', 'S', 'C'};

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::ifstream open_input(const std::filesystem::path& path, std::ios::openmode mode) {
  std::ifstream in(path, mode);
  if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
  return in;
}

std::ofstream open_output(const std::filesystem::path& path, std::ios::openmode mode) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  if (ec) throw IoError("cannot create directory '" + path.parent_path().string() + "': " + ec.message());
  std::ofstream out(path, mode);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  return out;
}

Json scalar_to_json(const YAML::Node& node) {
  const std::string& text = node.Scalar();
  if (node.Tag() == "!") return text;  // quoted
  long long integer = 0;
  const char* end = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(text.data(), end, integer);
  if (ec == std::errc() && ptr == end) return integer;
  double real = 0.0;
  auto [rptr, rec] = std::from_chars(text.data(), end, real);
  if (rec == std::errc() && rptr == end) return real;
  if (text == ".inf" || text == ".Inf") return std::numeric_limits<double>::infinity();
  bool flag = false;
  if (YAML::convert<bool>::decode(node, flag)) return flag;
  return text;
}

Json yaml_to_json(const YAML::Node& node) {
  switch (node.Type()) {
    case YAML::NodeType::Null:
    case YAML::NodeType::Undefined:
      return nullptr;
    case YAML::NodeType::Scalar:
      return scalar_to_json(node);
    case YAML::NodeType::Sequence: {
      Json out = Json::array();
      for (const YAML::Node& child : node) out.push_back(yaml_to_json(child));
      return out;
    }
    case YAML::NodeType::Map: {
      Json out = Json::object();
      for (const auto& entry : node) out[entry.first.as<std::string>()] = yaml_to_json(entry.second);
      return out;
    }
  }
  return nullptr;
}

}  // namespace

std::string format_double(double value) {
  std::array<char, 32> buffer{};
  auto [ptr, ec] = std::to_chars(buffer.data(), buffer.data() + buffer.size(), value);
  if (ec != std::errc()) throw Error("format_double: conversion failed");
  return std::string(buffer.data(), ptr);
}

Matrix read_points_csv(const std::filesystem::path& path) {
  std::ifstream in = open_input(path, std::ios::in);
  std::vector<double> values;
  Index cols = -1;
  Index rows = 0;
  std::string line;
  Index line_number = 0;
  while (std::getline(in, line)) {
    ++line_number;
    const std::string_view row = trim(line);
    if (row.empty() || row.front() == '#') continue;
    Index count = 0;
    std::size_t start = 0;
    for (;;) {
      const std::size_t comma = row.find(',', start);
      const std::string_view field = trim(row.substr(start, comma == std::string_view::npos ? row.npos : comma - start));
      double v = 0.0;
      auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
      if (field.empty() || ec != std::errc() || ptr != field.data() + field.size()) {
        throw IoError(path.string() + ":" + std::to_string(line_number) + ": bad number '" + std::string(field) + "'");
      }
      values.push_back(v);
      ++count;
      if (comma == std::string_view::npos) break;
      start = comma + 1;
    }
    if (cols < 0) cols = count;
    if (count != cols) {
      throw IoError(path.string() + ":" + std::to_string(line_number) + ": expected " + std::to_string(cols) +
                    " columns, found " + std::to_string(count));
    }
    ++rows;
  }
  if (in.bad()) throw IoError("error while reading '" + path.string() + "'");
  if (rows == 0) return Matrix(0, 0);
  return Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(values.data(), rows,
                                                                                                   cols);
}

void write_points_csv(const std::filesystem::path& path, const Matrix& points) {
  std::string text;
  for (Index i = 0; i < points.rows(); ++i) {
    for (Index j = 0; j < points.cols(); ++j) {
      if (j > 0) text += ',';
      text += format_double(points(i, j));
    }
    text += '\n';
  }
  write_text(path, text);
}

Matrix read_points_binary(const std::filesystem::path& path) {
  std::ifstream in = open_input(path, std::ios::in | std::ios::binary);
  std::array<char, 16> header{};
  if (!in.read(header.data(), header.size())) throw IoError("'" + path.string() + "': truncated header");
  if (!std::equal(kMagic.begin(), kMagic.end(), header.begin())) throw IoError("'" + path.string() + "': bad magic");
  std::uint32_t n = 0;
  std::uint32_t d = 0;
  std::memcpy(&n, header.data() + 4, 4);
  std::memcpy(&d, header.data() + 8, 4);
  Matrix points(n, d);
  const auto bytes = static_cast<std::streamsize>(sizeof(double) * n * d);
  if (!in.read(reinterpret_cast<char*>(points.data()), bytes)) throw IoError("'" + path.string() + "': truncated data");
  return points;
}

void write_points_binary(const std::filesystem::path& path, const Matrix& points) {
  require(points.rows() <= std::numeric_limits<std::uint32_t>::max() &&
              points.cols() <= std::numeric_limits<std::uint32_t>::max(),
          "write_points_binary: point set too large");
  std::ofstream out = open_output(path, std::ios::out | std::ios::binary | std::ios::trunc);
  std::array<char, 16> header{};
  std::copy(kMagic.begin(), kMagic.end(), header.begin());
  const auto n = static_cast<std::uint32_t>(points.rows());
  const auto d = static_cast<std::uint32_t>(points.cols());
  std::memcpy(header.data() + 4, &n, 4);
  std::memcpy(header.data() + 8, &d, 4);
  out.write(header.data(), header.size());
  out.write(reinterpret_cast<const char*>(points.data()), static_cast<std::streamsize>(sizeof(double) * points.size()));
  if (!out) throw IoError("error while writing '" + path.string() + "'");
}

Matrix read_points(const std::filesystem::path& path) {
  std::ifstream in = open_input(path, std::ios::in | std::ios::binary);
  std::array<char, 4> magic{};
  in.read(magic.data(), magic.size());
  if (in.gcount() == 4 && magic == kMagic) return read_points_binary(path);
  return read_points_csv(path);
}

void write_text(const std::filesystem::path& path, std::string_view content) {
  std::ofstream out = open_output(path, std::ios::out | std::ios::binary | std::ios::trunc);
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw IoError("error while writing '" + path.string() + "'");
}

Json load_config(const std::filesystem::path& path) {
  std::ifstream in = open_input(path, std::ios::in);
  std::stringstream buffer;
  buffer << in.rdbuf();
  YAML::Node root;
  try {
    root = YAML::Load(buffer.str());
  } catch (const YAML::Exception& e) {
    throw IoError("'" + path.string() + "': " + e.what());
  }
  Json config = yaml_to_json(root);
  if (config.is_null()) return Json::object();
  if (!config.is_object()) throw IoError("'" + path.string() + "': top level must be a mapping");
  return config;
}

void apply_overrides(Json& config, const std::vector<std::string>& overrides) {
  if (!config.is_object()) config = Json::object();
  for (const std::string& item : overrides) {
    const std::size_t eq = item.find('=');
    require(eq != std::string::npos && eq > 0, "override '" + item + "' is not of the form key=value");
    const std::string key = item.substr(0, eq);
    YAML::Node parsed;
    try {
      parsed = YAML::Load(item.substr(eq + 1));
    } catch (const YAML::Exception& e) {
      throw ParameterError("override '" + item + "': " + e.what());
    }
    Json* node = &config;
    std::size_t start = 0;
    for (;;) {
      const std::size_t dot = key.find('.', start);
      const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
      require(!part.empty(), "override '" + item + "': empty key component");
      if (!node->is_object()) *node = Json::object();
      node = &(*node)[part];
      if (dot == std::string::npos) break;
      start = dot + 1;
    }
    *node = yaml_to_json(parsed);
  }
}

Json to_json(const MetricRecord& record) {
  Json j;
  j["metric"] = record.metric;
  j["value"] = record.value;
  j["std_error"] = record.std_error;
  j["n_eval"] = record.n_eval;
  j["seed"] = record.seed;
  j["params"] = record.params;
  return j;
}

}  // namespace ebscore
