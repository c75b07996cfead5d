#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace xpm {

/// Column mapping from a CSV file onto the model roles.
struct Schema {
  std::string outcome_column;
  std::string treatment_column;
  std::vector<std::string> feature_columns;
  std::optional<std::string> weight_column;
  std::optional<std::string> cluster_column;
  std::optional<std::string> time_column;
  /// Arm label coded 0; when unset the first label seen in file order is control.
  /// The remaining labels are coded 1..k-1 in sorted order.
  std::optional<std::string> control_label;

  /// Throws ConfigError on empty or duplicated column names.
  void validate() const;
};

enum class DropReason { missing_value, unparseable_value, non_positive_weight, malformed_row };
std::string_view to_string(DropReason reason) noexcept;

struct DroppedRow {
  std::size_t line;  // 1-based line in the source file
  DropReason reason;
  std::string column;
};

struct ColumnSummary {
  std::string name;
  double min = 0.0;
  double max = 0.0;
  double mean = 0.0;
  double zero_fraction = 0.0;
};

struct ValidationReport {
  std::size_t row_count = 0;
  std::size_t kept = 0;
  std::vector<DroppedRow> dropped;
  std::vector<ColumnSummary> columns;

  std::size_t dropped_count(DropReason reason) const noexcept;
};

/// Column buffers used to construct a Dataset. `features` is row-major
/// (row i occupies [i*k, (i+1)*k)). `cluster`/`period` may be left empty.
struct DatasetColumns {
  std::vector<double> outcome;
  std::vector<double> features;
  std::vector<double> weight;
  std::vector<int> arm;
  std::vector<std::int64_t> cluster;
  std::vector<std::int64_t> period;
};

/// Immutable raw experiment rows in columnar layout.
class Dataset {
 public:
  /// Validates lengths, weights > 0 and finite, arm codes in
  /// [0, arm_labels.size()) with every arm present. Throws DataError.
  Dataset(Schema schema, std::vector<std::string> arm_labels, DatasetColumns columns);

  std::size_t size() const noexcept { return cols_.outcome.size(); }
  std::size_t feature_count() const noexcept { return schema_.feature_columns.size(); }
  std::size_t arm_count() const noexcept { return arm_labels_.size(); }

  double outcome(std::size_t i) const noexcept { return cols_.outcome[i]; }
  std::span<const double> features(std::size_t i) const noexcept {
    return {cols_.features.data() + i * feature_count(), feature_count()};
  }
  double weight(std::size_t i) const noexcept { return cols_.weight[i]; }
  int arm(std::size_t i) const noexcept { return cols_.arm[i]; }
  std::int64_t cluster(std::size_t i) const noexcept { return cols_.cluster[i]; }
  std::int64_t period(std::size_t i) const noexcept { return cols_.period[i]; }

  bool has_weights() const noexcept { return schema_.weight_column.has_value(); }
  bool has_clusters() const noexcept { return !cols_.cluster.empty(); }
  bool has_periods() const noexcept { return !cols_.period.empty(); }

  const Schema& schema() const noexcept { return schema_; }
  const std::vector<std::string>& arm_labels() const noexcept { return arm_labels_; }
  const DatasetColumns& columns() const noexcept { return cols_; }

  /// Index of a feature column by name, or nullopt.
  std::optional<std::size_t> feature_index(std::string_view name) const noexcept;

 private:
  Schema schema_;
  std::vector<std::string> arm_labels_;
  DatasetColumns cols_;
};

/// Reads a CSV file per `schema`. Rows with missing or unparseable required
/// fields, or non-positive weights, are dropped and recorded. Weight is 1.0
/// when the schema has no weight column; cluster labels are interned to dense
/// codes in order of first appearance.
std::pair<Dataset, ValidationReport> load_csv(const std::filesystem::path& path, const Schema& schema);

/// Writes `ds` in the dialect load_csv reads, with columns in schema order
/// (cluster, time, treatment, weight, features, outcome). Cluster codes are
/// written as integers.
void write_csv(const Dataset& ds, const std::filesystem::path& path);

/// Deduplicated rows with multiplicities and folded weights.
///
/// The grouping key is the exact bit pattern of (outcome, features, arm),
/// plus (cluster, period) for the cluster-preserving variant. Unique rows are
/// kept in order of first appearance.
class CompressedDataset {
 public:
  std::size_t size() const noexcept { return outcome_.size(); }
  std::size_t feature_count() const noexcept { return schema_.feature_columns.size(); }
  std::uint64_t raw_row_count() const noexcept { return raw_rows_; }

  double outcome(std::size_t j) const noexcept { return outcome_[j]; }
  std::span<const double> features(std::size_t j) const noexcept {
    return {features_.data() + j * feature_count(), feature_count()};
  }
  int arm(std::size_t j) const noexcept { return arm_[j]; }
  std::uint64_t multiplicity(std::size_t j) const noexcept { return multiplicity_[j]; }
  /// Σ ω_i over the raw rows folded into unique row j.
  double aggregate_weight(std::size_t j) const noexcept { return aggregate_weight_[j]; }
  /// Σ ω_i² over the same rows; feeds the heteroskedasticity-robust meat.
  double aggregate_weight_sq(std::size_t j) const noexcept { return aggregate_weight_sq_[j]; }

  bool has_clusters() const noexcept { return !cluster_.empty(); }
  std::int64_t cluster(std::size_t j) const noexcept { return cluster_[j]; }
  bool has_periods() const noexcept { return !period_.empty(); }
  std::int64_t period(std::size_t j) const noexcept { return period_[j]; }
  bool weighted() const noexcept { return weighted_; }

  const Schema& schema() const noexcept { return schema_; }
  const std::vector<std::string>& feature_names() const noexcept { return schema_.feature_columns; }
  const std::vector<std::string>& arm_labels() const noexcept { return arm_labels_; }
  const std::vector<double>& outcomes() const noexcept { return outcome_; }
  std::optional<std::size_t> feature_index(std::string_view name) const noexcept;

 private:
  friend CompressedDataset compress_impl(const Dataset&, bool keep_clusters, bool dedup);

  std::vector<double> outcome_;
  std::vector<double> features_;
  std::vector<int> arm_;
  std::vector<std::int64_t> cluster_;
  std::vector<std::int64_t> period_;
  std::vector<std::uint64_t> multiplicity_;
  std::vector<double> aggregate_weight_;
  std::vector<double> aggregate_weight_sq_;
  Schema schema_;
  std::vector<std::string> arm_labels_;
  std::uint64_t raw_rows_ = 0;
  bool weighted_ = false;
};

/// Cross-sectional compression; cluster and period columns are not carried.
CompressedDataset compress(const Dataset& ds);
/// Compression that keeps (cluster, period) in the key so that per-cluster
/// scores remain computable for cluster-robust covariances.
CompressedDataset compress_within_clusters(const Dataset& ds);
/// One unique row per raw row, multiplicity 1 (the uncompressed path).
CompressedDataset as_uncompressed(const Dataset& ds);
/// Replicates each unique row `multiplicity` times with weight
/// aggregate_weight / multiplicity.
Dataset expand(const CompressedDataset& c);

/// Raw rows per unique row; 1 for an empty dataset.
double compression_ratio(const CompressedDataset& c) noexcept;

}  // namespace xpm
