#include "xpm/dataset.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <unordered_map>

#include "xpm/csv.hpp"
#include "xpm/error.hpp"
#include "xpm/numeric.hpp"

namespace xpm {

void Schema::validate() const {
  std::set<std::string> seen;
  auto check = [&](const std::string& name, std::string_view role) {
    if (name.empty()) throw ConfigError(std::string(role), "column name for " + std::string(role) + " is empty");
    if (!seen.insert(name).second) throw ConfigError(std::string(role), "column '" + name + "' is used more than once");
  };
  check(outcome_column, "outcome");
  check(treatment_column, "treatment");
  for (const auto& f : feature_columns) check(f, "features");
  if (weight_column) check(*weight_column, "weight");
  if (cluster_column) check(*cluster_column, "cluster");
  if (time_column) check(*time_column, "time");
}

std::string_view to_string(DropReason reason) noexcept {
  switch (reason) {
    case DropReason::missing_value: return "missing value";
    case DropReason::unparseable_value: return "unparseable value";
    case DropReason::non_positive_weight: return "non-positive weight";
    case DropReason::malformed_row: return "malformed row";
  }
  return "unknown";
}

std::size_t ValidationReport::dropped_count(DropReason reason) const noexcept {
  return static_cast<std::size_t>(
      std::count_if(dropped.begin(), dropped.end(), [&](const DroppedRow& d) { return d.reason == reason; }));
}

Dataset::Dataset(Schema schema, std::vector<std::string> arm_labels, DatasetColumns columns)
    : schema_(std::move(schema)), arm_labels_(std::move(arm_labels)), cols_(std::move(columns)) {
  const std::size_t n = cols_.outcome.size();
  const std::size_t k = schema_.feature_columns.size();
  if (cols_.features.size() != n * k) throw DataError("feature buffer does not match row count");
  if (cols_.weight.empty()) cols_.weight.assign(n, 1.0);
  if (cols_.weight.size() != n || cols_.arm.size() != n) throw DataError("column lengths differ");
  if (!cols_.cluster.empty() && cols_.cluster.size() != n) throw DataError("cluster column length differs");
  if (!cols_.period.empty() && cols_.period.size() != n) throw DataError("period column length differs");
  if (arm_labels_.empty()) throw DataError("dataset has no arms");
  std::vector<bool> present(arm_labels_.size(), false);
  for (std::size_t i = 0; i < n; ++i) {
    if (!(cols_.weight[i] > 0.0) || !std::isfinite(cols_.weight[i]))
      throw DataError("weights must be positive and finite");
    if (!std::isfinite(cols_.outcome[i])) throw DataError("outcomes must be finite");
    const int a = cols_.arm[i];
    if (a < 0 || static_cast<std::size_t>(a) >= arm_labels_.size()) throw DataError("arm code out of range");
    present[static_cast<std::size_t>(a)] = true;
  }
  for (double v : cols_.features)
    if (!std::isfinite(v)) throw DataError("features must be finite");
  if (n > 0) {
    for (std::size_t a = 0; a < present.size(); ++a)
      if (!present[a]) throw DataError("arm '" + arm_labels_[a] + "' has no rows; arm codes must be contiguous");
  }
}

std::optional<std::size_t> Dataset::feature_index(std::string_view name) const noexcept {
  const auto& f = schema_.feature_columns;
  const auto it = std::find(f.begin(), f.end(), name);
  if (it == f.end()) return std::nullopt;
  return static_cast<std::size_t>(it - f.begin());
}

std::optional<std::size_t> CompressedDataset::feature_index(std::string_view name) const noexcept {
  const auto& f = schema_.feature_columns;
  const auto it = std::find(f.begin(), f.end(), name);
  if (it == f.end()) return std::nullopt;
  return static_cast<std::size_t>(it - f.begin());
}

namespace {

struct SummaryAccumulator {
  double min = std::numeric_limits<double>::infinity();
  double max = -std::numeric_limits<double>::infinity();
  CompensatedSum sum;
  std::size_t zeros = 0;
  std::size_t count = 0;

  void add(double v) {
    min = std::min(min, v);
    max = std::max(max, v);
    sum.add(v);
    if (v == 0.0) ++zeros;
    ++count;
  }
  ColumnSummary finish(std::string name) const {
    ColumnSummary s{std::move(name)};
    if (count > 0) {
      s.min = min;
      s.max = max;
      s.mean = sum.value() / static_cast<double>(count);
      s.zero_fraction = static_cast<double>(zeros) / static_cast<double>(count);
    }
    return s;
  }
};

}  // namespace

std::pair<Dataset, ValidationReport> load_csv(const std::filesystem::path& path, const Schema& schema) {
  schema.validate();
  csv::Reader reader(path);
  const auto& header = reader.header();
  auto column = [&](const std::string& name) -> std::size_t {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw DataError("missing required column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t outcome_col = column(schema.outcome_column);
  const std::size_t treatment_col = column(schema.treatment_column);
  std::vector<std::size_t> feature_cols;
  for (const auto& f : schema.feature_columns) feature_cols.push_back(column(f));
  const bool has_weight = schema.weight_column.has_value();
  const std::size_t weight_col = has_weight ? column(*schema.weight_column) : 0;
  const std::optional<std::size_t> cluster_col =
      schema.cluster_column ? std::optional(column(*schema.cluster_column)) : std::nullopt;
  const std::optional<std::size_t> time_col =
      schema.time_column ? std::optional(column(*schema.time_column)) : std::nullopt;

  std::vector<std::string> arm_labels;
  std::unordered_map<std::string, int> arm_codes;
  if (schema.control_label) {
    arm_labels.push_back(*schema.control_label);
    arm_codes.emplace(*schema.control_label, 0);
  }
  std::unordered_map<std::string, std::int64_t> cluster_codes;

  DatasetColumns cols;
  ValidationReport report;
  std::vector<std::string> fields;
  std::vector<double> row_features(feature_cols.size());
  const std::size_t k = feature_cols.size();
  std::vector<SummaryAccumulator> summaries(k + 2);

  while (reader.next(fields)) {
    ++report.row_count;
    const std::size_t line = reader.line();
    if (fields.size() != header.size()) {
      report.dropped.push_back({line, DropReason::malformed_row, ""});
      continue;
    }
    std::optional<DroppedRow> drop;
    auto numeric = [&](std::size_t col, const std::string& name) -> double {
      if (drop) return 0.0;
      const std::string_view text = csv::trim(fields[col]);
      if (text.empty()) {
        drop = DroppedRow{line, DropReason::missing_value, name};
        return 0.0;
      }
      const auto v = csv::parse_double(text);
      if (!v) {
        drop = DroppedRow{line, DropReason::unparseable_value, name};
        return 0.0;
      }
      return *v;
    };

    const std::string label(csv::trim(fields[treatment_col]));
    if (label.empty()) drop = DroppedRow{line, DropReason::missing_value, schema.treatment_column};
    const double y = numeric(outcome_col, schema.outcome_column);
    for (std::size_t f = 0; f < k; ++f) row_features[f] = numeric(feature_cols[f], schema.feature_columns[f]);
    double w = 1.0;
    if (has_weight) {
      w = numeric(weight_col, *schema.weight_column);
      if (!drop && !(w > 0.0)) drop = DroppedRow{line, DropReason::non_positive_weight, *schema.weight_column};
    }
    std::string cluster_label;
    if (cluster_col && !drop) {
      cluster_label = std::string(csv::trim(fields[*cluster_col]));
      if (cluster_label.empty()) drop = DroppedRow{line, DropReason::missing_value, *schema.cluster_column};
    }
    std::int64_t period = 0;
    if (time_col && !drop) {
      const std::string_view text = csv::trim(fields[*time_col]);
      if (text.empty()) {
        drop = DroppedRow{line, DropReason::missing_value, *schema.time_column};
      } else if (const auto p = csv::parse_int(text)) {
        period = *p;
      } else if (const auto d = csv::parse_double(text); d && std::floor(*d) == *d && std::abs(*d) < 9e15) {
        period = static_cast<std::int64_t>(*d);
      } else {
        drop = DroppedRow{line, DropReason::unparseable_value, *schema.time_column};
      }
    }
    if (drop) {
      report.dropped.push_back(std::move(*drop));
      continue;
    }

    auto [arm_it, inserted] = arm_codes.try_emplace(label, static_cast<int>(arm_labels.size()));
    if (inserted) arm_labels.push_back(label);
    cols.arm.push_back(arm_it->second);
    cols.outcome.push_back(y);
    summaries[0].add(y);
    for (std::size_t f = 0; f < k; ++f) {
      cols.features.push_back(row_features[f]);
      summaries[f + 1].add(row_features[f]);
    }
    cols.weight.push_back(w);
    if (has_weight) summaries[k + 1].add(w);
    if (cluster_col) {
      auto [it, fresh] = cluster_codes.try_emplace(cluster_label, static_cast<std::int64_t>(cluster_codes.size()));
      (void)fresh;
      cols.cluster.push_back(it->second);
    }
    if (time_col) cols.period.push_back(period);
  }

  report.kept = cols.outcome.size();
  if (report.kept == 0) throw DataError("no usable rows in '" + path.string() + "'");
  if (schema.control_label && std::find(cols.arm.begin(), cols.arm.end(), 0) == cols.arm.end())
    throw DataError("control label '" + *schema.control_label + "' not found in column '" +
                    schema.treatment_column + "'");

  // Treatment arms are coded in label order so the coding does not depend on
  // row order; control keeps code 0.
  {
    std::vector<std::string> sorted(arm_labels.begin() + 1, arm_labels.end());
    std::sort(sorted.begin(), sorted.end());
    std::vector<int> recode(arm_labels.size(), 0);
    for (std::size_t a = 1; a < arm_labels.size(); ++a)
      recode[a] = 1 + static_cast<int>(std::lower_bound(sorted.begin(), sorted.end(), arm_labels[a]) - sorted.begin());
    for (int& a : cols.arm) a = recode[static_cast<std::size_t>(a)];
    std::copy(sorted.begin(), sorted.end(), arm_labels.begin() + 1);
  }

  report.columns.push_back(summaries[0].finish(schema.outcome_column));
  for (std::size_t f = 0; f < k; ++f) report.columns.push_back(summaries[f + 1].finish(schema.feature_columns[f]));
  if (has_weight) report.columns.push_back(summaries[k + 1].finish(*schema.weight_column));

  Dataset ds(schema, std::move(arm_labels), std::move(cols));
  return {std::move(ds), std::move(report)};
}

void write_csv(const Dataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  const Schema& s = ds.schema();
  std::vector<std::string> header;
  if (s.cluster_column && ds.has_clusters()) header.push_back(*s.cluster_column);
  if (s.time_column && ds.has_periods()) header.push_back(*s.time_column);
  header.push_back(s.treatment_column);
  if (s.weight_column) header.push_back(*s.weight_column);
  for (const auto& f : s.feature_columns) header.push_back(f);
  header.push_back(s.outcome_column);
  for (std::size_t c = 0; c < header.size(); ++c) out << (c ? "," : "") << csv::escape_field(header[c]);
  out << '\n';
  std::string line;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    line.clear();
    if (s.cluster_column && ds.has_clusters()) line += std::to_string(ds.cluster(i)) + ",";
    if (s.time_column && ds.has_periods()) line += std::to_string(ds.period(i)) + ",";
    line += csv::escape_field(ds.arm_labels()[static_cast<std::size_t>(ds.arm(i))]);
    if (s.weight_column) line += "," + csv::format_double(ds.weight(i));
    for (double v : ds.features(i)) line += "," + csv::format_double(v);
    line += "," + csv::format_double(ds.outcome(i));
    out << line << '\n';
  }
  if (!out) throw DataError("failed writing '" + path.string() + "'");
}

// ---------------------------------------------------------------------------
// Compression

namespace {

inline std::uint64_t mix(std::uint64_t h, std::uint64_t v) noexcept {
  h ^= v + 0x9E3779B97F4A7C15ull + (h << 6) + (h >> 2);
  h *= 0xBF58476D1CE4E5B9ull;
  return h ^ (h >> 29);
}

inline std::uint64_t finalize(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

}  // namespace

CompressedDataset compress_impl(const Dataset& ds, bool keep_clusters, bool dedup) {
  CompressedDataset c;
  c.schema_ = ds.schema();
  if (!keep_clusters) {
    c.schema_.cluster_column.reset();
    c.schema_.time_column.reset();
  }
  c.arm_labels_ = ds.arm_labels();
  c.raw_rows_ = ds.size();
  c.weighted_ = ds.has_weights();
  const std::size_t n = ds.size();
  const std::size_t k = ds.feature_count();
  const bool with_cluster = keep_clusters && ds.has_clusters();
  const bool with_period = keep_clusters && ds.has_periods();
  const auto& src = ds.columns();

  std::vector<CompensatedSum> weight_sum;
  std::vector<CompensatedSum> weight_sq_sum;

  auto push_unique = [&](std::size_t i) {
    c.outcome_.push_back(src.outcome[i]);
    c.features_.insert(c.features_.end(), src.features.begin() + static_cast<std::ptrdiff_t>(i * k),
                       src.features.begin() + static_cast<std::ptrdiff_t>((i + 1) * k));
    c.arm_.push_back(src.arm[i]);
    if (with_cluster) c.cluster_.push_back(src.cluster[i]);
    if (with_period) c.period_.push_back(src.period[i]);
    c.multiplicity_.push_back(0);
    weight_sum.emplace_back();
    weight_sq_sum.emplace_back();
  };
  auto fold = [&](std::size_t j, std::size_t i) {
    c.multiplicity_[j] += 1;
    weight_sum[j].add(src.weight[i]);
    weight_sq_sum[j].add(src.weight[i] * src.weight[i]);
  };

  if (!dedup) {
    for (std::size_t i = 0; i < n; ++i) {
      push_unique(i);
      fold(i, i);
    }
  } else {
    auto row_hash = [&](std::size_t i) {
      std::uint64_t h = 0x243F6A8885A308D3ull;
      h = mix(h, std::bit_cast<std::uint64_t>(src.outcome[i]));
      for (std::size_t f = 0; f < k; ++f) h = mix(h, std::bit_cast<std::uint64_t>(src.features[i * k + f]));
      h = mix(h, static_cast<std::uint64_t>(src.arm[i]));
      if (with_cluster) h = mix(h, static_cast<std::uint64_t>(src.cluster[i]));
      if (with_period) h = mix(h, static_cast<std::uint64_t>(src.period[i]));
      return finalize(h);
    };
    auto same = [&](std::size_t j, std::size_t i) {
      if (std::bit_cast<std::uint64_t>(c.outcome_[j]) != std::bit_cast<std::uint64_t>(src.outcome[i])) return false;
      if (c.arm_[j] != src.arm[i]) return false;
      if (with_cluster && c.cluster_[j] != src.cluster[i]) return false;
      if (with_period && c.period_[j] != src.period[i]) return false;
      for (std::size_t f = 0; f < k; ++f)
        if (std::bit_cast<std::uint64_t>(c.features_[j * k + f]) != std::bit_cast<std::uint64_t>(src.features[i * k + f]))
          return false;
      return true;
    };

    // Open addressing over unique-row indices; linear probing.
    std::size_t capacity = 1024;
    std::vector<std::int64_t> slots(capacity, -1);
    std::vector<std::uint64_t> unique_hash;
    auto rehash = [&](std::size_t new_capacity) {
      capacity = new_capacity;
      slots.assign(capacity, -1);
      for (std::size_t j = 0; j < unique_hash.size(); ++j) {
        std::size_t s = unique_hash[j] & (capacity - 1);
        while (slots[s] >= 0) s = (s + 1) & (capacity - 1);
        slots[s] = static_cast<std::int64_t>(j);
      }
    };
    for (std::size_t i = 0; i < n; ++i) {
      const std::uint64_t h = row_hash(i);
      std::size_t s = h & (capacity - 1);
      std::int64_t found = -1;
      while (slots[s] >= 0) {
        const auto j = static_cast<std::size_t>(slots[s]);
        if (unique_hash[j] == h && same(j, i)) {
          found = slots[s];
          break;
        }
        s = (s + 1) & (capacity - 1);
      }
      if (found < 0) {
        found = static_cast<std::int64_t>(unique_hash.size());
        push_unique(i);
        unique_hash.push_back(h);
        slots[s] = found;
        if (unique_hash.size() * 2 > capacity) rehash(capacity * 2);
      }
      fold(static_cast<std::size_t>(found), i);
    }
  }

  c.aggregate_weight_.reserve(weight_sum.size());
  c.aggregate_weight_sq_.reserve(weight_sum.size());
  for (std::size_t j = 0; j < weight_sum.size(); ++j) {
    c.aggregate_weight_.push_back(weight_sum[j].value());
    c.aggregate_weight_sq_.push_back(weight_sq_sum[j].value());
  }
  return c;
}

CompressedDataset compress(const Dataset& ds) { return compress_impl(ds, false, true); }

CompressedDataset compress_within_clusters(const Dataset& ds) {
  if (!ds.has_clusters()) throw DataError("cluster-preserving compression requires a cluster column");
  return compress_impl(ds, true, true);
}

CompressedDataset as_uncompressed(const Dataset& ds) { return compress_impl(ds, true, false); }

Dataset expand(const CompressedDataset& c) {
  DatasetColumns cols;
  const std::size_t k = c.feature_count();
  for (std::size_t j = 0; j < c.size(); ++j) {
    const double w = c.aggregate_weight(j) / static_cast<double>(c.multiplicity(j));
    for (std::uint64_t r = 0; r < c.multiplicity(j); ++r) {
      cols.outcome.push_back(c.outcome(j));
      const auto f = c.features(j);
      cols.features.insert(cols.features.end(), f.begin(), f.begin() + static_cast<std::ptrdiff_t>(k));
      cols.weight.push_back(w);
      cols.arm.push_back(c.arm(j));
      if (c.has_clusters()) cols.cluster.push_back(c.cluster(j));
      if (c.has_periods()) cols.period.push_back(c.period(j));
    }
  }
  return Dataset(c.schema(), c.arm_labels(), std::move(cols));
}

double compression_ratio(const CompressedDataset& c) noexcept {
  if (c.size() == 0) return 1.0;
  return static_cast<double>(c.raw_row_count()) / static_cast<double>(c.size());
}

}  // namespace xpm
