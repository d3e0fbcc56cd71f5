#pragma once

#include "statlap/tensor_field.hpp"

#include <json.hpp>

#include <Eigen/SparseCore>

#include <filesystem>
#include <map>
#include <string>

namespace statlap {

using FieldSet = std::map<std::string, TensorField>;

nlohmann::json grid_to_json(const Grid& grid);
Grid grid_from_json(const nlohmann::json& j);

/// {grid: {dims, points, periods, origin}, fields: {name: {rank, symmetries, values}}}
nlohmann::json fields_to_json(const Grid& grid, const FieldSet& fields);
FieldSet fields_from_json(const nlohmann::json& j);

/// Coordinate-list export {rows, cols, tag, triplets: [[row, col, value], ...]},
/// triplets in column-major storage order.
nlohmann::json sparse_to_json(const Eigen::SparseMatrix<double>& m, const std::string& tag);
Eigen::SparseMatrix<double> sparse_from_json(const nlohmann::json& j);

/// Reads a JSON document, throwing IoError on failure to open and ConfigError on bad syntax.
nlohmann::json read_json_file(const std::filesystem::path& path);

/// Writes `contents` to `path` via a temporary sibling and rename.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

/// Shortest round-trip decimal representation.
std::string format_double(double x);

} // namespace statlap
