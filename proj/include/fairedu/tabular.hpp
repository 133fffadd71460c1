#pragma once

// Schema-driven loading, encoding and splitting of tabular datasets.

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace fairedu {

using Index = Eigen::Index;

/// Which raw cells of a sensitive or label column encode to 1. Either an
/// explicit list of category labels or an inclusive numeric range.
struct ValueSelector {
  std::vector<std::string> values;
  std::optional<double> min;
  std::optional<double> max;

  bool is_range() const { return min.has_value() || max.has_value(); }
  bool matches(const std::string& cell) const;
  std::string describe() const;

  static ValueSelector from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

enum class RoleKind { Sensitive, NonSensitive, Label };
enum class ColumnKind { Numeric, Categorical };

/// Sensitive columns carry the privileged selector, the label carries the
/// favorable one; non-sensitive columns leave it empty.
struct ColumnRole {
  RoleKind kind = RoleKind::NonSensitive;
  ValueSelector positive;
};

struct ColumnSpec {
  std::string name;
  ColumnRole role;
  ColumnKind kind = ColumnKind::Numeric;
  std::vector<std::string> categories;  // sorted, categorical columns only
};

struct Schema {
  std::vector<ColumnSpec> columns;

  const ColumnSpec& at(const std::string& name) const;
  bool contains(const std::string& name) const;
};

struct SensitiveSpec {
  std::string column;
  ValueSelector privileged;
  std::vector<std::string> categories;  // optional whitelist
};

/// JSON recipe describing how a raw CSV maps onto a Dataset.
struct SchemaConfig {
  std::string description;
  std::string label_column;
  ValueSelector favorable;
  std::vector<std::string> label_categories;  // optional whitelist
  std::vector<SensitiveSpec> sensitive;
  std::vector<std::string> drop;
  std::vector<std::string> categorical;
  std::vector<std::string> missing;  // extra tokens treated like an empty cell

  static SchemaConfig from_json(const nlohmann::json& j);
  static SchemaConfig load(const std::filesystem::path& path);
  nlohmann::json to_json() const;
};

struct EncodedColumn {
  std::string name;
  std::string source;
  RoleKind role = RoleKind::NonSensitive;
  std::optional<std::string> category;  // set for one-hot indicator columns
};

/// Row-aligned copy of the encoded sensitive values, kept after the
/// sensitive columns leave the feature matrix.
struct SensitiveTable {
  std::vector<std::string> names;
  Eigen::MatrixXd values;  // n x k, entries in {0, 1}
};

struct Dataset {
  Schema schema;
  std::vector<EncodedColumn> columns;
  Eigen::MatrixXd values;  // n x d, column-major
  std::vector<Index> sensitive_indices;
  Index label_index = -1;
  SensitiveTable side_table;
  std::size_t dropped_rows = 0;

  Index rows() const { return values.rows(); }
  Index cols() const { return values.cols(); }

  Index column_index(const std::string& encoded_name) const;
  std::vector<std::string> column_names() const;

  /// Indices of columns that are neither sensitive nor the label.
  std::vector<Index> feature_indices() const;
  Eigen::MatrixXd features() const;
  Eigen::VectorXd labels() const;

  /// Sensitive columns still present in `values`, else the side table.
  std::vector<std::string> sensitive_names() const;
  Eigen::MatrixXd sensitive_values() const;
  Eigen::VectorXd group(const std::string& sensitive_name) const;

  bool has_sensitive_columns() const { return !sensitive_indices.empty(); }

  Dataset select_rows(std::span<const Index> rows) const;
};

/// Copy of one encoded column.
Eigen::VectorXd column(const Dataset& ds, Index index);

Dataset parse_csv(std::istream& in, const SchemaConfig& config);
Dataset load_csv(const std::filesystem::path& path, const SchemaConfig& config);

/// Decodes back to the raw columns of the schema. Reloading the output with
/// the same SchemaConfig reproduces the value matrix exactly. Requires the
/// sensitive columns to still be present.
void write_raw_csv(const Dataset& ds, std::ostream& out);

/// Writes the encoded matrix with encoded column names (shortest
/// round-trip number formatting).
void write_encoded_csv(const Dataset& ds, std::ostream& out);

/// Writes the sensitive side table (header = sensitive names).
void write_side_table_csv(const Dataset& ds, std::ostream& out);

struct SplitPair {
  Dataset train;
  Dataset test;
  std::uint64_t seed = 0;
  double train_fraction = 0.85;
  std::vector<Index> train_rows;  // ascending source row indices
  std::vector<Index> test_rows;
};

/// Uniform random partition without replacement. The training side gets
/// round-half-up(n * train_fraction) rows.
SplitPair split(const Dataset& ds, double train_fraction, std::uint64_t seed);

/// Seeded permutation of 0..n-1 (Fisher-Yates over mt19937_64 with
/// rejection sampling, identical on every platform).
std::vector<Index> seeded_permutation(Index n, std::uint64_t seed);

/// Unbiased draw from [0, bound) using the given engine.
template <typename Engine>
std::uint64_t uniform_below(Engine& engine, std::uint64_t bound) {
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % bound);
  std::uint64_t x;
  do {
    x = engine();
  } while (x >= limit);
  return x % bound;
}

std::string format_double(double v);

}  // namespace fairedu
