#pragma once

// Event-log ingestion: CSV parsing, encoder fitting and trace-to-graph
// encoding. Each trace becomes a directed chain 0 -> 1 -> ... -> n-1 whose
// edge weights are min-max normalized start-time gaps.

#include "hgnn/tensor.hpp"

#include "json.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace hgnn {

class SchemaError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public std::runtime_error {
 public:
  ParseError(std::size_t row, const std::string& message);
  std::size_t row() const { return row_; }

 private:
  std::size_t row_;
};

enum class AttrType { categorical, numerical };
enum class TimestampFormat { iso8601, epoch_seconds };

struct AttributeSpec {
  std::string name;
  AttrType type = AttrType::categorical;
};

struct LogSchema {
  std::string case_id_column;
  std::string activity_column;
  std::string start_time_column;
  std::string complete_time_column;
  TimestampFormat timestamp_format = TimestampFormat::iso8601;
  std::vector<AttributeSpec> universal_event_attrs;  // U
  std::vector<AttributeSpec> event_specific_attrs;   // B
  std::vector<AttributeSpec> sequence_attrs;         // graph-level vector source
  std::string label_column;

  /// Event attributes in node-vector order (U then B).
  std::vector<AttributeSpec> event_attrs() const;
  /// Throws SchemaError on duplicate or empty column names.
  void validate() const;
};

void to_json(nlohmann::json& j, const LogSchema& s);
void from_json(const nlohmann::json& j, LogSchema& s);

/// Durations matching the unique rule each get their own bin (one per
/// distinct training value); the rest are split into quantile bins.
struct BinningPolicy {
  enum class Compare { less, less_equal, equal, greater_equal, greater };
  Compare unique_op = Compare::less;
  double unique_value = 5.0;
  int n_quantile_bins = 4;

  bool is_unique(double minutes) const;
};

void to_json(nlohmann::json& j, const BinningPolicy& p);
void from_json(const nlohmann::json& j, BinningPolicy& p);

struct Event {
  std::string activity;
  double start = 0;     // seconds since epoch
  double complete = 0;  // seconds since epoch
  std::vector<std::optional<std::string>> attrs;  // aligned with LogSchema::event_attrs()
};

struct Trace {
  std::string case_id;
  std::string label;
  std::vector<std::optional<std::string>> sequence_values;  // aligned with sequence_attrs
  std::vector<Event> events;
};

/// Parses an RFC-4180 CSV stream into rows of fields.
std::vector<std::vector<std::string>> read_csv(std::istream& in);
std::string csv_escape(const std::string& field);

/// Parses ISO-8601 ("2024-01-31T08:15:00[.sss][Z|+hh:mm]", date-only
/// accepted) into seconds since the Unix epoch.
std::optional<double> parse_iso8601(const std::string& text);
std::string format_iso8601(double epoch_seconds);

/// Groups rows by case id (first-appearance order) and sorts each trace by
/// start time, keeping file order on ties.
std::vector<Trace> parse_log(std::istream& csv, const LogSchema& schema);
std::vector<Trace> parse_log_file(const std::filesystem::path& path, const LogSchema& schema);
void write_log_csv(std::ostream& out, const std::vector<Trace>& traces, const LogSchema& schema);

struct NumericScaler {
  double min = 0;
  double max = 0;
  double median = 0;
  /// Min-max scaling clamped to [0, 1]; a constant attribute maps to 0.
  double transform(double x) const;
  static NumericScaler fit(std::vector<double> values);
};

struct Vocabulary {
  std::vector<std::string> levels;  // sorted
  /// -1 for unseen levels.
  int index(const std::string& level) const;
  static Vocabulary fit(const std::vector<std::string>& values);
};

struct AttributeEncoder {
  AttributeSpec spec;
  Vocabulary vocab;       // categorical
  NumericScaler scaler;   // numerical
  int width() const { return spec.type == AttrType::categorical ? static_cast<int>(vocab.levels.size()) : 1; }
};

struct DurationBinner {
  BinningPolicy policy;
  std::vector<double> unique_values;  // sorted distinct training values matching the rule
  std::vector<double> edges;          // n_quantile_bins - 1 nondecreasing cut points

  int n_bins() const { return static_cast<int>(unique_values.size()) + policy.n_quantile_bins; }
  int bin(double minutes) const;
  static DurationBinner fit(const std::vector<double>& minutes, const BinningPolicy& policy);
};

/// Event duration in whole minutes (complete - start, rounded to nearest).
double duration_minutes(const Event& e);

struct EncoderState {
  Vocabulary activities;
  std::vector<AttributeEncoder> event_encoders;     // U then B
  std::vector<AttributeEncoder> sequence_encoders;  // graph-level
  NumericScaler gap_scaler;                         // start-time gaps in seconds
  DurationBinner binner;
  std::vector<std::string> class_names;

  int node_dim() const;
  int graph_dim() const;
  int n_activities() const { return static_cast<int>(activities.levels.size()); }
  int n_bins() const { return binner.n_bins(); }
  int n_classes() const { return static_cast<int>(class_names.size()); }
};

void to_json(nlohmann::json& j, const EncoderState& s);
void from_json(const nlohmann::json& j, EncoderState& s);

/// Fits vocabularies, scalers, the gap range and duration bins on the
/// training traces. When `class_names` is null the label vocabulary is taken
/// from the same traces.
EncoderState fit_encoders(const std::vector<Trace>& traces, const LogSchema& schema,
                          const BinningPolicy& policy,
                          const std::vector<std::string>* class_names = nullptr);

struct EncodedGraph {
  Matrix node_features;              // n x d_N
  std::vector<int> edge_source;      // i
  std::vector<int> edge_target;      // i + 1
  std::vector<double> edge_weights;  // in [0, 1]
  Matrix graph_features;             // 1 x d_G
  int label = 0;
  std::vector<int> activity_ids;     // -1 for unseen activities
  std::vector<int> duration_bins;
  std::vector<std::uint8_t> feature_mask;  // n x d_N row-major, 1 = padded

  int num_nodes() const { return static_cast<int>(node_features.rows()); }
  bool masked(int row, int col) const {
    return feature_mask[static_cast<std::size_t>(row * node_features.cols() + col)] != 0;
  }
};

void to_json(nlohmann::json& j, const EncodedGraph& g);
void from_json(const nlohmann::json& j, EncodedGraph& g);

/// Encodes one trace. `prefix_length` > 0 keeps only the first events.
EncodedGraph encode_trace(const Trace& trace, const EncoderState& state, const LogSchema& schema,
                          int prefix_length = 0);

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
  std::vector<std::string> warnings;
};

/// Train/validation split over items with the given class labels.
SplitIndices split_train_validation(const std::vector<int>& labels, double train_fraction,
                                    bool stratified, std::uint64_t seed);

struct DatasetDims {
  int node_features = 0;
  int graph_features = 0;
  int n_bins = 0;
  int n_activities = 0;
  int n_classes = 0;
};

inline constexpr int kDatasetFormatVersion = 1;

struct EncodedDataset {
  LogSchema schema;
  BinningPolicy policy;
  EncoderState encoder;
  std::vector<EncodedGraph> train;
  std::vector<EncodedGraph> validation;

  DatasetDims dims() const;
  std::vector<int> class_counts() const;
};

nlohmann::json dataset_to_json(const EncodedDataset& d);
EncodedDataset dataset_from_json(const nlohmann::json& j);
void save_dataset(const EncodedDataset& d, const std::filesystem::path& path);
EncodedDataset load_dataset(const std::filesystem::path& path);

struct EncodeOptions {
  double train_fraction = 0.8;
  bool stratified = true;
  std::uint64_t seed = 0;
  int prefix_length = 0;
};

/// Split traces, fit on the training part, encode both parts.
EncodedDataset build_dataset(const std::vector<Trace>& traces, const LogSchema& schema,
                             const BinningPolicy& policy, const EncodeOptions& options,
                             std::vector<std::string>* warnings = nullptr);

}  // namespace hgnn
