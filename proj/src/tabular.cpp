#include "fairedu/tabular.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "fairedu/csv.hpp"
#include "fairedu/error.hpp"

namespace fairedu {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t");
  return s.substr(first, last - first + 1);
}

std::optional<double> parse_number(const std::string& cell) {
  double v = 0;
  const char* begin = cell.data();
  const char* end = begin + cell.size();
  if (begin != end && *begin == '+') ++begin;
  const auto [ptr, ec] = std::from_chars(begin, end, v);
  if (ec != std::errc() || ptr != end || !std::isfinite(v)) return std::nullopt;
  return v;
}

std::vector<std::string> string_list(const nlohmann::json& j, const char* key) {
  std::vector<std::string> out;
  if (!j.contains(key)) return out;
  if (!j.at(key).is_array()) throw ConfigError(std::string("recipe field '") + key + "' must be an array");
  for (const auto& v : j.at(key)) {
    if (!v.is_string()) throw ConfigError(std::string("recipe field '") + key + "' must hold strings");
    out.push_back(v.get<std::string>());
  }
  return out;
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

// --- ValueSelector ---------------------------------------------------------

bool ValueSelector::matches(const std::string& cell) const {
  if (is_range()) {
    const auto v = parse_number(cell);
    if (!v) return false;
    if (min && *v < *min) return false;
    if (max && *v > *max) return false;
    return true;
  }
  return std::find(values.begin(), values.end(), cell) != values.end();
}

std::string ValueSelector::describe() const {
  if (is_range()) {
    return "[" + (min ? format_double(*min) : std::string("-inf")) + ", " +
           (max ? format_double(*max) : std::string("inf")) + "]";
  }
  std::string out;
  for (const auto& v : values) out += (out.empty() ? "" : "|") + v;
  return out;
}

ValueSelector ValueSelector::from_json(const nlohmann::json& j) {
  ValueSelector s;
  if (j.is_string()) {
    s.values.push_back(j.get<std::string>());
  } else if (j.is_number()) {
    s.min = s.max = j.get<double>();
  } else if (j.is_array()) {
    for (const auto& v : j) {
      if (!v.is_string()) throw ConfigError("value list entries must be strings");
      s.values.push_back(v.get<std::string>());
    }
    if (s.values.empty()) throw ConfigError("value list must not be empty");
  } else if (j.is_object()) {
    if (j.contains("min")) s.min = j.at("min").get<double>();
    if (j.contains("max")) s.max = j.at("max").get<double>();
    if (!s.is_range()) throw ConfigError("range selector needs 'min' and/or 'max'");
  } else {
    throw ConfigError("unsupported value selector");
  }
  return s;
}

nlohmann::json ValueSelector::to_json() const {
  if (is_range()) {
    if (min && max && *min == *max) return *min;
    nlohmann::json j = nlohmann::json::object();
    if (min) j["min"] = *min;
    if (max) j["max"] = *max;
    return j;
  }
  if (values.size() == 1) return values.front();
  return values;
}

// --- Schema / SchemaConfig -------------------------------------------------

const ColumnSpec& Schema::at(const std::string& name) const {
  for (const auto& c : columns) {
    if (c.name == name) return c;
  }
  throw SchemaError("unknown column '" + name + "'");
}

bool Schema::contains(const std::string& name) const {
  return std::any_of(columns.begin(), columns.end(),
                     [&](const ColumnSpec& c) { return c.name == name; });
}

SchemaConfig SchemaConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("recipe must be a JSON object");
  SchemaConfig c;
  try {
    c.description = j.value("description", std::string{});
    const auto& label = j.at("label");
    c.label_column = label.at("column").get<std::string>();
    c.favorable = ValueSelector::from_json(label.at("favorable"));
    c.label_categories = string_list(label, "categories");
    if (j.contains("sensitive")) {
      for (const auto& s : j.at("sensitive")) {
        SensitiveSpec spec;
        spec.column = s.at("column").get<std::string>();
        spec.privileged = ValueSelector::from_json(s.at("privileged"));
        spec.categories = string_list(s, "categories");
        c.sensitive.push_back(std::move(spec));
      }
    }
    c.drop = string_list(j, "drop");
    c.categorical = string_list(j, "categorical");
    c.missing = string_list(j, "missing");
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed recipe: ") + e.what());
  }
  return c;
}

SchemaConfig SchemaConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open recipe '" + path.string() + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("recipe '" + path.string() + "': " + e.what());
  }
  return from_json(j);
}

nlohmann::json SchemaConfig::to_json() const {
  nlohmann::json j;
  if (!description.empty()) j["description"] = description;
  j["label"] = {{"column", label_column}, {"favorable", favorable.to_json()}};
  if (!label_categories.empty()) j["label"]["categories"] = label_categories;
  j["sensitive"] = nlohmann::json::array();
  for (const auto& s : sensitive) {
    nlohmann::json e = {{"column", s.column}, {"privileged", s.privileged.to_json()}};
    if (!s.categories.empty()) e["categories"] = s.categories;
    j["sensitive"].push_back(e);
  }
  j["drop"] = drop;
  j["categorical"] = categorical;
  if (!missing.empty()) j["missing"] = missing;
  return j;
}

// --- Dataset ---------------------------------------------------------------

Index Dataset::column_index(const std::string& encoded_name) const {
  for (std::size_t i = 0; i < columns.size(); ++i) {
    if (columns[i].name == encoded_name) return static_cast<Index>(i);
  }
  throw IndexError("no encoded column named '" + encoded_name + "'");
}

std::vector<std::string> Dataset::column_names() const {
  std::vector<std::string> out;
  out.reserve(columns.size());
  for (const auto& c : columns) out.push_back(c.name);
  return out;
}

std::vector<Index> Dataset::feature_indices() const {
  std::vector<Index> out;
  for (std::size_t i = 0; i < columns.size(); ++i) {
    if (columns[i].role == RoleKind::NonSensitive) out.push_back(static_cast<Index>(i));
  }
  return out;
}

Eigen::MatrixXd Dataset::features() const {
  const auto idx = feature_indices();
  Eigen::MatrixXd out(rows(), static_cast<Index>(idx.size()));
  for (std::size_t j = 0; j < idx.size(); ++j) out.col(static_cast<Index>(j)) = values.col(idx[j]);
  return out;
}

Eigen::VectorXd Dataset::labels() const {
  if (label_index < 0) throw SchemaError("dataset has no label column");
  return values.col(label_index);
}

std::vector<std::string> Dataset::sensitive_names() const {
  if (sensitive_indices.empty()) return side_table.names;
  std::vector<std::string> out;
  for (Index i : sensitive_indices) out.push_back(columns[static_cast<std::size_t>(i)].name);
  return out;
}

Eigen::MatrixXd Dataset::sensitive_values() const {
  if (sensitive_indices.empty()) return side_table.values;
  Eigen::MatrixXd out(rows(), static_cast<Index>(sensitive_indices.size()));
  for (std::size_t j = 0; j < sensitive_indices.size(); ++j) {
    out.col(static_cast<Index>(j)) = values.col(sensitive_indices[j]);
  }
  return out;
}

Eigen::VectorXd Dataset::group(const std::string& sensitive_name) const {
  const auto names = sensitive_names();
  const auto it = std::find(names.begin(), names.end(), sensitive_name);
  if (it == names.end()) throw SchemaError("'" + sensitive_name + "' is not a sensitive column");
  const auto j = static_cast<Index>(it - names.begin());
  if (sensitive_indices.empty()) return side_table.values.col(j);
  return values.col(sensitive_indices[static_cast<std::size_t>(j)]);
}

Dataset Dataset::select_rows(std::span<const Index> row_ids) const {
  Dataset out;
  out.schema = schema;
  out.columns = columns;
  out.sensitive_indices = sensitive_indices;
  out.label_index = label_index;
  out.dropped_rows = dropped_rows;
  out.side_table.names = side_table.names;
  const auto m = static_cast<Index>(row_ids.size());
  out.values.resize(m, cols());
  out.side_table.values.resize(m, side_table.values.cols());
  for (Index r = 0; r < m; ++r) {
    const Index src = row_ids[static_cast<std::size_t>(r)];
    if (src < 0 || src >= rows()) throw IndexError("row index out of range");
    out.values.row(r) = values.row(src);
    if (side_table.values.cols() > 0) out.side_table.values.row(r) = side_table.values.row(src);
  }
  return out;
}

Eigen::VectorXd column(const Dataset& ds, Index index) {
  if (index < 0 || index >= ds.cols()) {
    throw IndexError("column index " + std::to_string(index) + " out of range for d = " +
                     std::to_string(ds.cols()));
  }
  return ds.values.col(index);
}

// --- loading ---------------------------------------------------------------

Dataset parse_csv(std::istream& in, const SchemaConfig& config) {
  auto records = csv::read(in);
  if (records.empty()) throw SchemaError("CSV has no header row");
  const csv::Row header = [&] {
    csv::Row h;
    for (const auto& f : records.front()) h.push_back(trim(f));
    return h;
  }();

  std::unordered_map<std::string, std::size_t> position;
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (!position.emplace(header[i], i).second) {
      throw SchemaError("duplicate header name '" + header[i] + "'");
    }
  }
  auto require = [&](const std::string& name, const char* what) {
    if (!position.count(name)) throw SchemaError(std::string(what) + " column '" + name + "' missing from header");
  };
  require(config.label_column, "label");
  std::unordered_map<std::string, const SensitiveSpec*> sensitive;
  for (const auto& s : config.sensitive) {
    require(s.column, "sensitive");
    if (s.column == config.label_column) throw SchemaError("'" + s.column + "' is both label and sensitive");
    if (!sensitive.emplace(s.column, &s).second) throw SchemaError("sensitive column '" + s.column + "' listed twice");
  }
  const std::unordered_set<std::string> dropped(config.drop.begin(), config.drop.end());
  for (const auto& d : config.drop) {
    require(d, "dropped");
    if (d == config.label_column || sensitive.count(d)) throw SchemaError("cannot drop role column '" + d + "'");
  }
  const std::unordered_set<std::string> categorical(config.categorical.begin(), config.categorical.end());
  for (const auto& c : config.categorical) require(c, "categorical");
  const std::unordered_set<std::string> missing_tokens(config.missing.begin(), config.missing.end());

  std::vector<std::size_t> used;
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (!dropped.count(header[i])) used.push_back(i);
  }

  // Rows that are complete on every used column; blank lines are ignored.
  std::vector<std::vector<std::string>> cells;
  std::vector<std::size_t> source_row;
  std::size_t dropped_rows = 0;
  for (std::size_t r = 1; r < records.size(); ++r) {
    const auto& rec = records[r];
    if (rec.size() == 1 && trim(rec[0]).empty()) continue;
    if (rec.size() != header.size()) {
      throw ParseError("row has " + std::to_string(rec.size()) + " fields, header has " +
                           std::to_string(header.size()),
                       r, "");
    }
    std::vector<std::string> row;
    row.reserve(used.size());
    bool complete = true;
    for (std::size_t i : used) {
      std::string v = trim(rec[i]);
      if (v.empty() || missing_tokens.count(v)) {
        complete = false;
        break;
      }
      row.push_back(std::move(v));
    }
    if (!complete) {
      ++dropped_rows;
      continue;
    }
    cells.push_back(std::move(row));
    source_row.push_back(r);
  }

  const auto n = static_cast<Index>(cells.size());
  Dataset ds;
  ds.dropped_rows = dropped_rows;
  std::vector<Eigen::VectorXd> encoded;

  for (std::size_t u = 0; u < used.size(); ++u) {
    const std::string& name = header[used[u]];
    ColumnSpec spec;
    spec.name = name;
    const bool is_label = name == config.label_column;
    const auto sens = sensitive.find(name);
    const bool is_sensitive = sens != sensitive.end();

    if (is_label || is_sensitive) {
      const ValueSelector& selector = is_label ? config.favorable : sens->second->privileged;
      const auto& whitelist = is_label ? config.label_categories : sens->second->categories;
      spec.role.kind = is_label ? RoleKind::Label : RoleKind::Sensitive;
      spec.role.positive = selector;
      spec.kind = ColumnKind::Categorical;
      std::set<std::string> cats;
      Eigen::VectorXd col(n);
      bool any_positive = false;
      for (Index r = 0; r < n; ++r) {
        const auto& v = cells[static_cast<std::size_t>(r)][u];
        if (!whitelist.empty() && std::find(whitelist.begin(), whitelist.end(), v) == whitelist.end()) {
          throw EncodingError("unseen category '" + v + "' in column '" + name + "' (row " +
                              std::to_string(source_row[static_cast<std::size_t>(r)]) + ")");
        }
        if (selector.is_range() && !parse_number(v)) {
          throw ParseError("non-numeric value '" + v + "' in range-selected column '" + name + "'",
                           source_row[static_cast<std::size_t>(r)], name);
        }
        cats.insert(v);
        const bool pos = selector.matches(v);
        any_positive |= pos;
        col(r) = pos ? 1.0 : 0.0;
      }
      if (n > 0 && !any_positive) {
        throw EncodingError(std::string(is_label ? "favorable" : "privileged") + " value " +
                            selector.describe() + " never occurs in column '" + name + "'");
      }
      spec.categories.assign(cats.begin(), cats.end());
      const auto idx = static_cast<Index>(encoded.size());
      if (is_label) {
        ds.label_index = idx;
      } else {
        ds.sensitive_indices.push_back(idx);
      }
      ds.columns.push_back({name, name, spec.role.kind, std::nullopt});
      encoded.push_back(std::move(col));
    } else if (categorical.count(name)) {
      spec.kind = ColumnKind::Categorical;
      std::set<std::string> cats;
      for (Index r = 0; r < n; ++r) cats.insert(cells[static_cast<std::size_t>(r)][u]);
      spec.categories.assign(cats.begin(), cats.end());
      std::map<std::string, std::size_t> slot;
      for (std::size_t c = 1; c < spec.categories.size(); ++c) slot[spec.categories[c]] = c - 1;
      const std::size_t width = spec.categories.empty() ? 0 : spec.categories.size() - 1;
      std::vector<Eigen::VectorXd> onehot(width, Eigen::VectorXd::Zero(n));
      for (Index r = 0; r < n; ++r) {
        const auto it = slot.find(cells[static_cast<std::size_t>(r)][u]);
        if (it != slot.end()) onehot[it->second](r) = 1.0;
      }
      for (std::size_t c = 0; c < width; ++c) {
        const auto& cat = spec.categories[c + 1];
        ds.columns.push_back({name + "=" + cat, name, RoleKind::NonSensitive, cat});
        encoded.push_back(std::move(onehot[c]));
      }
    } else {
      spec.kind = ColumnKind::Numeric;
      Eigen::VectorXd col(n);
      for (Index r = 0; r < n; ++r) {
        const auto& v = cells[static_cast<std::size_t>(r)][u];
        const auto num = parse_number(v);
        if (!num) {
          throw ParseError("cannot parse '" + v + "' as a number in column '" + name + "' (row " +
                               std::to_string(source_row[static_cast<std::size_t>(r)]) + ")",
                           source_row[static_cast<std::size_t>(r)], name);
        }
        col(r) = *num;
      }
      ds.columns.push_back({name, name, RoleKind::NonSensitive, std::nullopt});
      encoded.push_back(std::move(col));
    }
    ds.schema.columns.push_back(std::move(spec));
  }

  if (ds.label_index < 0) throw SchemaError("no label column");
  ds.values.resize(n, static_cast<Index>(encoded.size()));
  for (std::size_t j = 0; j < encoded.size(); ++j) ds.values.col(static_cast<Index>(j)) = encoded[j];
  return ds;
}

Dataset load_csv(const std::filesystem::path& path, const SchemaConfig& config) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open data file '" + path.string() + "'");
  return parse_csv(in, config);
}

// --- writing ---------------------------------------------------------------

void write_raw_csv(const Dataset& ds, std::ostream& out) {
  if (!ds.has_sensitive_columns() && !ds.side_table.names.empty()) {
    throw SchemaError("raw CSV needs the sensitive columns; this dataset has been transformed");
  }
  std::vector<std::string> header;
  for (const auto& c : ds.schema.columns) header.push_back(c.name);
  csv::write_row(out, header);

  struct Decoder {
    const ColumnSpec* spec;
    std::vector<Index> cols;  // encoded columns sourced from this raw column
    std::string positive, negative;
  };
  std::vector<Decoder> decoders;
  for (const auto& spec : ds.schema.columns) {
    Decoder d{&spec, {}, {}, {}};
    for (std::size_t j = 0; j < ds.columns.size(); ++j) {
      if (ds.columns[j].source == spec.name) d.cols.push_back(static_cast<Index>(j));
    }
    if (spec.role.kind != RoleKind::NonSensitive) {
      for (const auto& cat : spec.categories) {
        if (spec.role.positive.matches(cat)) {
          if (d.positive.empty()) d.positive = cat;
        } else if (d.negative.empty()) {
          d.negative = cat;
        }
      }
    }
    decoders.push_back(std::move(d));
  }

  std::vector<std::string> row(decoders.size());
  for (Index r = 0; r < ds.rows(); ++r) {
    for (std::size_t c = 0; c < decoders.size(); ++c) {
      const auto& d = decoders[c];
      if (d.spec->role.kind != RoleKind::NonSensitive) {
        row[c] = ds.values(r, d.cols.front()) != 0.0 ? d.positive : d.negative;
      } else if (d.spec->kind == ColumnKind::Numeric) {
        row[c] = format_double(ds.values(r, d.cols.front()));
      } else {
        row[c] = d.spec->categories.empty() ? std::string{} : d.spec->categories.front();
        for (Index j : d.cols) {
          if (ds.values(r, j) != 0.0) row[c] = *ds.columns[static_cast<std::size_t>(j)].category;
        }
      }
    }
    csv::write_row(out, row);
  }
}

void write_encoded_csv(const Dataset& ds, std::ostream& out) {
  csv::write_row(out, ds.column_names());
  std::vector<std::string> row(static_cast<std::size_t>(ds.cols()));
  for (Index r = 0; r < ds.rows(); ++r) {
    for (Index j = 0; j < ds.cols(); ++j) row[static_cast<std::size_t>(j)] = format_double(ds.values(r, j));
    csv::write_row(out, row);
  }
}

void write_side_table_csv(const Dataset& ds, std::ostream& out) {
  const auto names = ds.sensitive_names();
  const Eigen::MatrixXd v = ds.sensitive_values();
  csv::write_row(out, names);
  std::vector<std::string> row(names.size());
  for (Index r = 0; r < v.rows(); ++r) {
    for (Index j = 0; j < v.cols(); ++j) row[static_cast<std::size_t>(j)] = format_double(v(r, j));
    csv::write_row(out, row);
  }
}

// --- splitting -------------------------------------------------------------

std::vector<Index> seeded_permutation(Index n, std::uint64_t seed) {
  std::vector<Index> perm(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) perm[static_cast<std::size_t>(i)] = i;
  std::mt19937_64 engine(seed);
  for (Index i = n - 1; i > 0; --i) {
    const auto j = static_cast<Index>(uniform_below(engine, static_cast<std::uint64_t>(i + 1)));
    std::swap(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]);
  }
  return perm;
}

SplitPair split(const Dataset& ds, double train_fraction, std::uint64_t seed) {
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw SplitError("train_fraction must lie strictly between 0 and 1");
  }
  const Index n = ds.rows();
  if (n < 2) throw SplitError("cannot split fewer than 2 rows");
  const auto n_train = static_cast<Index>(std::floor(static_cast<double>(n) * train_fraction + 0.5));
  if (n_train <= 0 || n_train >= n) {
    throw SplitError("split would leave an empty partition (n = " + std::to_string(n) +
                     ", train = " + std::to_string(n_train) + ")");
  }
  const auto perm = seeded_permutation(n, seed);
  SplitPair out;
  out.seed = seed;
  out.train_fraction = train_fraction;
  out.train_rows.assign(perm.begin(), perm.begin() + n_train);
  out.test_rows.assign(perm.begin() + n_train, perm.end());
  std::sort(out.train_rows.begin(), out.train_rows.end());
  std::sort(out.test_rows.begin(), out.test_rows.end());
  out.train = ds.select_rows(out.train_rows);
  out.test = ds.select_rows(out.test_rows);
  return out;
}

}  // namespace fairedu
