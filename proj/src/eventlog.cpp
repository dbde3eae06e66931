#include "hgnn/eventlog.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <set>
#include <sstream>
#include <unordered_map>

namespace hgnn {

ParseError::ParseError(std::size_t row, const std::string& message)
    : std::runtime_error("row " + std::to_string(row) + ": " + message), row_(row) {}

// ---- schema ---------------------------------------------------------------

std::vector<AttributeSpec> LogSchema::event_attrs() const {
  std::vector<AttributeSpec> out = universal_event_attrs;
  out.insert(out.end(), event_specific_attrs.begin(), event_specific_attrs.end());
  return out;
}

void LogSchema::validate() const {
  std::set<std::string> seen;
  auto check = [&](const std::string& name, const char* role) {
    if (name.empty()) throw SchemaError(std::string("schema: empty column name for ") + role);
    if (!seen.insert(name).second) throw SchemaError("schema: duplicate column '" + name + "'");
  };
  check(case_id_column, "case id");
  check(activity_column, "activity");
  check(start_time_column, "start time");
  check(complete_time_column, "complete time");
  check(label_column, "label");
  for (const auto& a : universal_event_attrs) check(a.name, "universal attribute");
  for (const auto& a : event_specific_attrs) check(a.name, "event attribute");
  for (const auto& a : sequence_attrs) check(a.name, "sequence attribute");
}

namespace {

std::string attr_type_name(AttrType t) {
  return t == AttrType::categorical ? "categorical" : "numerical";
}

AttrType attr_type_from(const std::string& s) {
  if (s == "categorical") return AttrType::categorical;
  if (s == "numerical" || s == "numeric") return AttrType::numerical;
  throw SchemaError("schema: unknown attribute type '" + s + "'");
}

nlohmann::json attrs_to_json(const std::vector<AttributeSpec>& attrs) {
  auto arr = nlohmann::json::array();
  for (const auto& a : attrs) arr.push_back({{"name", a.name}, {"type", attr_type_name(a.type)}});
  return arr;
}

std::vector<AttributeSpec> attrs_from_json(const nlohmann::json& j, const char* key) {
  std::vector<AttributeSpec> out;
  if (!j.contains(key)) return out;
  for (const auto& a : j.at(key)) {
    out.push_back({a.at("name").get<std::string>(), attr_type_from(a.at("type").get<std::string>())});
  }
  return out;
}

}  // namespace

void to_json(nlohmann::json& j, const LogSchema& s) {
  j = {{"case_id", s.case_id_column},
       {"activity", s.activity_column},
       {"start_time", s.start_time_column},
       {"complete_time", s.complete_time_column},
       {"timestamp_format",
        s.timestamp_format == TimestampFormat::iso8601 ? "iso8601" : "epoch_seconds"},
       {"universal_event_attrs", attrs_to_json(s.universal_event_attrs)},
       {"event_specific_attrs", attrs_to_json(s.event_specific_attrs)},
       {"sequence_attrs", attrs_to_json(s.sequence_attrs)},
       {"label", s.label_column}};
}

void from_json(const nlohmann::json& j, LogSchema& s) {
  try {
    s.case_id_column = j.at("case_id").get<std::string>();
    s.activity_column = j.at("activity").get<std::string>();
    s.start_time_column = j.at("start_time").get<std::string>();
    s.complete_time_column = j.at("complete_time").get<std::string>();
    const auto fmt = j.value("timestamp_format", std::string("iso8601"));
    if (fmt == "iso8601") {
      s.timestamp_format = TimestampFormat::iso8601;
    } else if (fmt == "epoch_seconds") {
      s.timestamp_format = TimestampFormat::epoch_seconds;
    } else {
      throw SchemaError("schema: unknown timestamp_format '" + fmt + "'");
    }
    s.universal_event_attrs = attrs_from_json(j, "universal_event_attrs");
    s.event_specific_attrs = attrs_from_json(j, "event_specific_attrs");
    s.sequence_attrs = attrs_from_json(j, "sequence_attrs");
    s.label_column = j.at("label").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("schema: ") + e.what());
  }
  s.validate();
}

namespace {
const std::pair<BinningPolicy::Compare, const char*> kCompareNames[] = {
    {BinningPolicy::Compare::less, "<"},          {BinningPolicy::Compare::less_equal, "<="},
    {BinningPolicy::Compare::equal, "=="},        {BinningPolicy::Compare::greater_equal, ">="},
    {BinningPolicy::Compare::greater, ">"}};
}  // namespace

bool BinningPolicy::is_unique(double minutes) const {
  switch (unique_op) {
    case Compare::less: return minutes < unique_value;
    case Compare::less_equal: return minutes <= unique_value;
    case Compare::equal: return minutes == unique_value;
    case Compare::greater_equal: return minutes >= unique_value;
    case Compare::greater: return minutes > unique_value;
  }
  return false;
}

void to_json(nlohmann::json& j, const BinningPolicy& p) {
  std::string op;
  for (const auto& [c, name] : kCompareNames) {
    if (c == p.unique_op) op = name;
  }
  j = {{"unique_rule", {{"op", op}, {"value", p.unique_value}}},
       {"n_quantile_bins", p.n_quantile_bins}};
}

void from_json(const nlohmann::json& j, BinningPolicy& p) {
  try {
    const auto& rule = j.at("unique_rule");
    const auto op = rule.at("op").get<std::string>();
    bool found = false;
    for (const auto& [c, name] : kCompareNames) {
      if (op == name) {
        p.unique_op = c;
        found = true;
      }
    }
    if (!found) throw SchemaError("binning: unknown comparison '" + op + "'");
    p.unique_value = rule.at("value").get<double>();
    p.n_quantile_bins = j.at("n_quantile_bins").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("binning: ") + e.what());
  }
  if (p.n_quantile_bins < 1) throw SchemaError("binning: n_quantile_bins must be positive");
}

// ---- CSV ------------------------------------------------------------------

std::vector<std::vector<std::string>> read_csv(std::istream& in) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool in_quotes = false;
  bool any = false;
  char c;
  while (in.get(c)) {
    any = true;
    if (in_quotes) {
      if (c == '"') {
        if (in.peek() == '"') {
          in.get(c);
          field.push_back('"');
        } else {
          in_quotes = false;
        }
      } else {
        field.push_back(c);
      }
      continue;
    }
    switch (c) {
      case '"': in_quotes = true; break;
      case ',':
        row.push_back(std::move(field));
        field.clear();
        break;
      case '\r': break;
      case '\n':
        row.push_back(std::move(field));
        field.clear();
        rows.push_back(std::move(row));
        row.clear();
        any = false;
        break;
      default: field.push_back(c);
    }
  }
  if (any) {
    row.push_back(std::move(field));
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string csv_escape(const std::string& field) {
  if (field.find_first_of(",\"\r\n") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

// ---- timestamps -------------------------------------------------------------

namespace {

// Days since 1970-01-01 for a proleptic Gregorian date.
long long days_from_civil(long long y, unsigned m, unsigned d) {
  y -= m <= 2;
  const long long era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<long long>(doe) - 719468;
}

void civil_from_days(long long z, long long& y, unsigned& m, unsigned& d) {
  z += 719468;
  const long long era = (z >= 0 ? z : z - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  y = static_cast<long long>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  d = doy - (153 * mp + 2) / 5 + 1;
  m = mp < 10 ? mp + 3 : mp - 9;
  y += m <= 2;
}

bool read_digits(const std::string& s, std::size_t& pos, int count, int& out) {
  if (pos + static_cast<std::size_t>(count) > s.size()) return false;
  out = 0;
  for (int i = 0; i < count; ++i) {
    const char c = s[pos++];
    if (c < '0' || c > '9') return false;
    out = out * 10 + (c - '0');
  }
  return true;
}

std::optional<double> parse_number(const std::string& s) {
  if (s.empty()) return std::nullopt;
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

}  // namespace

std::optional<double> parse_iso8601(const std::string& text) {
  std::size_t pos = 0;
  int year, month, day;
  if (!read_digits(text, pos, 4, year) || pos >= text.size() || text[pos++] != '-' ||
      !read_digits(text, pos, 2, month) || pos >= text.size() || text[pos++] != '-' ||
      !read_digits(text, pos, 2, day)) {
    return std::nullopt;
  }
  if (month < 1 || month > 12 || day < 1 || day > 31) return std::nullopt;
  int hour = 0, minute = 0, second = 0;
  double fraction = 0.0;
  double offset = 0.0;
  if (pos < text.size()) {
    if (text[pos] != 'T' && text[pos] != ' ') return std::nullopt;
    ++pos;
    if (!read_digits(text, pos, 2, hour) || pos >= text.size() || text[pos++] != ':' ||
        !read_digits(text, pos, 2, minute)) {
      return std::nullopt;
    }
    if (pos < text.size() && text[pos] == ':') {
      ++pos;
      if (!read_digits(text, pos, 2, second)) return std::nullopt;
      if (pos < text.size() && (text[pos] == '.' || text[pos] == ',')) {
        ++pos;
        double scale = 0.1;
        const std::size_t start = pos;
        while (pos < text.size() && text[pos] >= '0' && text[pos] <= '9') {
          fraction += (text[pos++] - '0') * scale;
          scale /= 10;
        }
        if (pos == start) return std::nullopt;
      }
    }
    if (pos < text.size()) {
      const char z = text[pos++];
      if (z == 'Z') {
        // UTC
      } else if (z == '+' || z == '-') {
        int oh = 0, om = 0;
        if (!read_digits(text, pos, 2, oh)) return std::nullopt;
        if (pos < text.size() && text[pos] == ':') ++pos;
        if (pos < text.size() && !read_digits(text, pos, 2, om)) return std::nullopt;
        offset = (z == '+' ? 1.0 : -1.0) * (oh * 3600.0 + om * 60.0);
      } else {
        return std::nullopt;
      }
    }
    if (pos != text.size()) return std::nullopt;
    if (hour > 24 || minute > 59 || second > 60) return std::nullopt;
  }
  const long long days =
      days_from_civil(year, static_cast<unsigned>(month), static_cast<unsigned>(day));
  return static_cast<double>(days) * 86400.0 + hour * 3600.0 + minute * 60.0 + second + fraction -
         offset;
}

std::string format_iso8601(double epoch_seconds) {
  const auto total = static_cast<long long>(std::floor(epoch_seconds));
  long long days = total / 86400;
  long long rem = total % 86400;
  if (rem < 0) {
    rem += 86400;
    --days;
  }
  long long y;
  unsigned m, d;
  civil_from_days(days, y, m, d);
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04lld-%02u-%02uT%02lld:%02lld:%02lld", y, m, d, rem / 3600,
                (rem / 60) % 60, rem % 60);
  return buf;
}

// ---- parsing --------------------------------------------------------------

std::vector<Trace> parse_log(std::istream& csv, const LogSchema& schema) {
  schema.validate();
  const auto rows = read_csv(csv);
  if (rows.empty()) throw SchemaError("log: missing header row");
  const auto& header = rows.front();
  auto column = [&](const std::string& name) -> std::size_t {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw SchemaError("log: missing column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t case_col = column(schema.case_id_column);
  const std::size_t act_col = column(schema.activity_column);
  const std::size_t start_col = column(schema.start_time_column);
  const std::size_t end_col = column(schema.complete_time_column);
  const std::size_t label_col = column(schema.label_column);
  const auto event_attrs = schema.event_attrs();
  std::vector<std::size_t> event_cols;
  for (const auto& a : event_attrs) event_cols.push_back(column(a.name));
  std::vector<std::size_t> seq_cols;
  for (const auto& a : schema.sequence_attrs) seq_cols.push_back(column(a.name));

  auto parse_time = [&](const std::string& s, std::size_t row) {
    std::optional<double> t = schema.timestamp_format == TimestampFormat::iso8601
                                  ? parse_iso8601(s)
                                  : parse_number(s);
    if (!t) throw ParseError(row, "unparseable timestamp '" + s + "'");
    return *t;
  };
  auto optional_field = [](const std::string& s) -> std::optional<std::string> {
    if (s.empty()) return std::nullopt;
    return s;
  };

  std::vector<Trace> traces;
  std::unordered_map<std::string, std::size_t> by_case;
  for (std::size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    const std::size_t row_number = r + 1;  // 1-based, header is row 1
    if (row.size() == 1 && row[0].empty()) continue;
    if (row.size() != header.size()) {
      throw ParseError(row_number, "expected " + std::to_string(header.size()) + " fields, got " +
                                       std::to_string(row.size()));
    }
    const std::string& case_id = row[case_col];
    if (case_id.empty()) throw ParseError(row_number, "empty case id");
    auto [it, inserted] = by_case.try_emplace(case_id, traces.size());
    if (inserted) {
      Trace t;
      t.case_id = case_id;
      t.sequence_values.resize(seq_cols.size());
      traces.push_back(std::move(t));
    }
    Trace& trace = traces[it->second];
    if (trace.label.empty()) trace.label = row[label_col];
    for (std::size_t i = 0; i < seq_cols.size(); ++i) {
      if (!trace.sequence_values[i] && !row[seq_cols[i]].empty()) {
        if (schema.sequence_attrs[i].type == AttrType::numerical && !parse_number(row[seq_cols[i]])) {
          throw ParseError(row_number, "non-numeric value '" + row[seq_cols[i]] + "' in column '" +
                                           schema.sequence_attrs[i].name + "'");
        }
        trace.sequence_values[i] = row[seq_cols[i]];
      }
    }
    Event e;
    e.activity = row[act_col];
    if (e.activity.empty()) throw ParseError(row_number, "empty activity");
    e.start = parse_time(row[start_col], row_number);
    e.complete = parse_time(row[end_col], row_number);
    e.attrs.reserve(event_cols.size());
    for (std::size_t i = 0; i < event_cols.size(); ++i) {
      const std::string& v = row[event_cols[i]];
      if (!v.empty() && event_attrs[i].type == AttrType::numerical && !parse_number(v)) {
        throw ParseError(row_number, "non-numeric value '" + v + "' in column '" +
                                         event_attrs[i].name + "'");
      }
      e.attrs.push_back(optional_field(v));
    }
    trace.events.push_back(std::move(e));
  }
  for (auto& t : traces) {
    if (t.label.empty()) throw SchemaError("log: case '" + t.case_id + "' has no label");
    std::stable_sort(t.events.begin(), t.events.end(),
                     [](const Event& a, const Event& b) { return a.start < b.start; });
  }
  return traces;
}

std::vector<Trace> parse_log_file(const std::filesystem::path& path, const LogSchema& schema) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SchemaError("log: cannot open '" + path.string() + "'");
  return parse_log(in, schema);
}

void write_log_csv(std::ostream& out, const std::vector<Trace>& traces, const LogSchema& schema) {
  const auto event_attrs = schema.event_attrs();
  std::vector<std::string> header = {schema.case_id_column, schema.activity_column,
                                     schema.start_time_column, schema.complete_time_column};
  for (const auto& a : event_attrs) header.push_back(a.name);
  for (const auto& a : schema.sequence_attrs) header.push_back(a.name);
  header.push_back(schema.label_column);
  for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << csv_escape(header[i]);
  out << "\n";
  auto time_text = [&](double t) {
    if (schema.timestamp_format == TimestampFormat::iso8601) return format_iso8601(t);
    std::ostringstream os;
    os << static_cast<long long>(t);
    return os.str();
  };
  for (const auto& t : traces) {
    for (const auto& e : t.events) {
      out << csv_escape(t.case_id) << ',' << csv_escape(e.activity) << ',' << time_text(e.start)
          << ',' << time_text(e.complete);
      for (const auto& v : e.attrs) out << ',' << (v ? csv_escape(*v) : "");
      for (const auto& v : t.sequence_values) out << ',' << (v ? csv_escape(*v) : "");
      out << ',' << csv_escape(t.label) << "\n";
    }
  }
}

// ---- encoders -------------------------------------------------------------

double NumericScaler::transform(double x) const {
  if (!(max > min)) return 0.0;
  return std::clamp((x - min) / (max - min), 0.0, 1.0);
}

NumericScaler NumericScaler::fit(std::vector<double> values) {
  NumericScaler s;
  if (values.empty()) return s;
  std::sort(values.begin(), values.end());
  s.min = values.front();
  s.max = values.back();
  const std::size_t n = values.size();
  s.median = n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
  return s;
}

int Vocabulary::index(const std::string& level) const {
  const auto it = std::lower_bound(levels.begin(), levels.end(), level);
  if (it == levels.end() || *it != level) return -1;
  return static_cast<int>(it - levels.begin());
}

Vocabulary Vocabulary::fit(const std::vector<std::string>& values) {
  Vocabulary v;
  v.levels = values;
  std::sort(v.levels.begin(), v.levels.end());
  v.levels.erase(std::unique(v.levels.begin(), v.levels.end()), v.levels.end());
  return v;
}

double duration_minutes(const Event& e) { return std::round((e.complete - e.start) / 60.0); }

int DurationBinner::bin(double minutes) const {
  if (policy.is_unique(minutes) && !unique_values.empty()) {
    const auto it = std::lower_bound(unique_values.begin(), unique_values.end(), minutes);
    if (it != unique_values.end() && *it == minutes) {
      return static_cast<int>(it - unique_values.begin());
    }
    // Unseen value matching the rule: nearest seen value, lower on ties.
    if (it == unique_values.begin()) return 0;
    if (it == unique_values.end()) return static_cast<int>(unique_values.size()) - 1;
    const auto lower = it - 1;
    return static_cast<int>((minutes - *lower <= *it - minutes ? lower : it) -
                            unique_values.begin());
  }
  // Boundary values belong to the lower bin.
  const int q = static_cast<int>(std::count_if(edges.begin(), edges.end(),
                                               [minutes](double e) { return minutes > e; }));
  return static_cast<int>(unique_values.size()) + q;
}

DurationBinner DurationBinner::fit(const std::vector<double>& minutes,
                                   const BinningPolicy& policy) {
  if (policy.n_quantile_bins < 1) throw ContractError("binning: n_quantile_bins must be positive");
  DurationBinner b;
  b.policy = policy;
  std::vector<double> rest;
  for (double m : minutes) {
    if (policy.is_unique(m)) {
      b.unique_values.push_back(m);
    } else {
      rest.push_back(m);
    }
  }
  std::sort(b.unique_values.begin(), b.unique_values.end());
  b.unique_values.erase(std::unique(b.unique_values.begin(), b.unique_values.end()),
                        b.unique_values.end());
  std::sort(rest.begin(), rest.end());
  const std::size_t m = rest.size();
  const auto n = static_cast<std::size_t>(policy.n_quantile_bins);
  if (m > 0) {
    // Inverse empirical CDF: smallest value whose cumulative share reaches j/n.
    for (std::size_t j = 1; j < n; ++j) {
      const std::size_t k = (j * m + n - 1) / n;
      b.edges.push_back(rest[k == 0 ? 0 : k - 1]);
    }
  }
  return b;
}

int EncoderState::node_dim() const {
  int d = n_activities();
  for (const auto& e : event_encoders) d += e.width();
  return d;
}

int EncoderState::graph_dim() const {
  int d = 0;
  for (const auto& e : sequence_encoders) d += e.width();
  return d;
}

namespace {

nlohmann::json encoder_to_json(const AttributeEncoder& e) {
  nlohmann::json j = {{"name", e.spec.name}, {"type", attr_type_name(e.spec.type)}};
  if (e.spec.type == AttrType::categorical) {
    j["levels"] = e.vocab.levels;
  } else {
    j["min"] = e.scaler.min;
    j["max"] = e.scaler.max;
    j["median"] = e.scaler.median;
  }
  return j;
}

AttributeEncoder encoder_from_json(const nlohmann::json& j) {
  AttributeEncoder e;
  e.spec.name = j.at("name").get<std::string>();
  e.spec.type = attr_type_from(j.at("type").get<std::string>());
  if (e.spec.type == AttrType::categorical) {
    e.vocab.levels = j.at("levels").get<std::vector<std::string>>();
  } else {
    e.scaler.min = j.at("min").get<double>();
    e.scaler.max = j.at("max").get<double>();
    e.scaler.median = j.at("median").get<double>();
  }
  return e;
}

AttributeEncoder fit_attribute(const AttributeSpec& spec,
                               const std::vector<std::optional<std::string>>& values) {
  AttributeEncoder enc;
  enc.spec = spec;
  if (spec.type == AttrType::categorical) {
    std::vector<std::string> seen;
    for (const auto& v : values) {
      if (v) seen.push_back(*v);
    }
    enc.vocab = Vocabulary::fit(seen);
  } else {
    std::vector<double> nums;
    for (const auto& v : values) {
      if (v) nums.push_back(*parse_number(*v));
    }
    enc.scaler = NumericScaler::fit(std::move(nums));
  }
  return enc;
}

// Writes one attribute block; returns true when the block is padding.
bool encode_attribute(const AttributeEncoder& enc, const std::optional<std::string>& raw,
                      double* out) {
  if (enc.spec.type == AttrType::numerical) {
    const double v = raw ? parse_number(*raw).value_or(enc.scaler.median) : enc.scaler.median;
    out[0] = enc.scaler.transform(v);
    return false;
  }
  const int w = enc.width();
  std::fill(out, out + w, 0.0);
  if (!raw) return true;
  const int idx = enc.vocab.index(*raw);
  if (idx < 0) return true;
  out[idx] = 1.0;
  return false;
}

}  // namespace

void to_json(nlohmann::json& j, const EncoderState& s) {
  auto events = nlohmann::json::array();
  for (const auto& e : s.event_encoders) events.push_back(encoder_to_json(e));
  auto seq = nlohmann::json::array();
  for (const auto& e : s.sequence_encoders) seq.push_back(encoder_to_json(e));
  j = {{"activities", s.activities.levels},
       {"event_encoders", events},
       {"sequence_encoders", seq},
       {"gap", {{"min", s.gap_scaler.min}, {"max", s.gap_scaler.max}, {"median", s.gap_scaler.median}}},
       {"binning",
        {{"policy", s.binner.policy},
         {"unique_values", s.binner.unique_values},
         {"edges", s.binner.edges}}},
       {"class_names", s.class_names}};
}

void from_json(const nlohmann::json& j, EncoderState& s) {
  s.activities.levels = j.at("activities").get<std::vector<std::string>>();
  s.event_encoders.clear();
  for (const auto& e : j.at("event_encoders")) s.event_encoders.push_back(encoder_from_json(e));
  s.sequence_encoders.clear();
  for (const auto& e : j.at("sequence_encoders")) s.sequence_encoders.push_back(encoder_from_json(e));
  const auto& gap = j.at("gap");
  s.gap_scaler = {gap.at("min").get<double>(), gap.at("max").get<double>(),
                  gap.at("median").get<double>()};
  const auto& bins = j.at("binning");
  s.binner.policy = bins.at("policy").get<BinningPolicy>();
  s.binner.unique_values = bins.at("unique_values").get<std::vector<double>>();
  s.binner.edges = bins.at("edges").get<std::vector<double>>();
  s.class_names = j.at("class_names").get<std::vector<std::string>>();
}

EncoderState fit_encoders(const std::vector<Trace>& traces, const LogSchema& schema,
                          const BinningPolicy& policy,
                          const std::vector<std::string>* class_names) {
  EncoderState state;
  const auto event_attrs = schema.event_attrs();
  std::vector<std::string> activities;
  std::vector<std::vector<std::optional<std::string>>> event_values(event_attrs.size());
  std::vector<std::vector<std::optional<std::string>>> seq_values(schema.sequence_attrs.size());
  std::vector<double> gaps;
  std::vector<double> durations;
  std::vector<std::string> labels;
  for (const auto& t : traces) {
    labels.push_back(t.label);
    for (std::size_t i = 0; i < schema.sequence_attrs.size(); ++i) {
      seq_values[i].push_back(i < t.sequence_values.size() ? t.sequence_values[i] : std::nullopt);
    }
    for (std::size_t k = 0; k < t.events.size(); ++k) {
      const auto& e = t.events[k];
      activities.push_back(e.activity);
      for (std::size_t i = 0; i < event_attrs.size(); ++i) event_values[i].push_back(e.attrs[i]);
      durations.push_back(duration_minutes(e));
      if (k + 1 < t.events.size()) gaps.push_back(t.events[k + 1].start - e.start);
    }
  }
  state.activities = Vocabulary::fit(activities);
  for (std::size_t i = 0; i < event_attrs.size(); ++i) {
    state.event_encoders.push_back(fit_attribute(event_attrs[i], event_values[i]));
  }
  for (std::size_t i = 0; i < schema.sequence_attrs.size(); ++i) {
    state.sequence_encoders.push_back(fit_attribute(schema.sequence_attrs[i], seq_values[i]));
  }
  state.gap_scaler = NumericScaler::fit(std::move(gaps));
  state.binner = DurationBinner::fit(durations, policy);
  state.class_names = class_names ? *class_names : Vocabulary::fit(labels).levels;
  return state;
}

EncodedGraph encode_trace(const Trace& trace, const EncoderState& state, const LogSchema& schema,
                          int prefix_length) {
  if (trace.events.empty()) throw ContractError("encode_trace: case '" + trace.case_id + "' has no events");
  std::size_t n = trace.events.size();
  if (prefix_length > 0) n = std::min(n, static_cast<std::size_t>(prefix_length));
  const int d = state.node_dim();
  EncodedGraph g;
  g.node_features = Matrix::Zero(static_cast<Index>(n), d);
  g.feature_mask.assign(n * static_cast<std::size_t>(d), 0);
  g.activity_ids.resize(n);
  g.duration_bins.resize(n);
  const int n_act = state.n_activities();
  for (std::size_t i = 0; i < n; ++i) {
    const auto& e = trace.events[i];
    double* row = g.node_features.row(static_cast<Index>(i)).data();
    std::uint8_t* mask = g.feature_mask.data() + i * static_cast<std::size_t>(d);
    const int act = state.activities.index(e.activity);
    g.activity_ids[i] = act;
    if (act >= 0) {
      row[act] = 1.0;
    } else {
      std::fill(mask, mask + n_act, 1);
    }
    int offset = n_act;
    for (std::size_t a = 0; a < state.event_encoders.size(); ++a) {
      const auto& enc = state.event_encoders[a];
      if (encode_attribute(enc, e.attrs[a], row + offset)) {
        std::fill(mask + offset, mask + offset + enc.width(), 1);
      }
      offset += enc.width();
    }
    g.duration_bins[i] = state.binner.bin(duration_minutes(e));
  }
  for (std::size_t i = 0; i + 1 < n; ++i) {
    g.edge_source.push_back(static_cast<int>(i));
    g.edge_target.push_back(static_cast<int>(i + 1));
    const double gap = trace.events[i + 1].start - trace.events[i].start;
    g.edge_weights.push_back(gap == 0.0 ? 0.0 : state.gap_scaler.transform(gap));
  }
  g.graph_features = Matrix::Zero(1, state.graph_dim());
  int offset = 0;
  for (std::size_t a = 0; a < state.sequence_encoders.size(); ++a) {
    const auto& enc = state.sequence_encoders[a];
    const auto raw = a < trace.sequence_values.size() ? trace.sequence_values[a] : std::nullopt;
    encode_attribute(enc, raw, g.graph_features.data() + offset);
    offset += enc.width();
  }
  const auto it = std::find(state.class_names.begin(), state.class_names.end(), trace.label);
  if (it == state.class_names.end()) {
    throw SchemaError("encode: case '" + trace.case_id + "' has unknown label '" + trace.label + "'");
  }
  g.label = static_cast<int>(it - state.class_names.begin());
  (void)schema;
  return g;
}

namespace {

nlohmann::json matrix_to_json(const Matrix& m) {
  return {{"rows", m.rows()}, {"cols", m.cols()},
          {"data", std::vector<double>(m.data(), m.data() + m.size())}};
}

Matrix matrix_from_json(const nlohmann::json& j) {
  const auto rows = j.at("rows").get<Index>();
  const auto cols = j.at("cols").get<Index>();
  const auto data = j.at("data").get<std::vector<double>>();
  if (static_cast<Index>(data.size()) != rows * cols) {
    throw SchemaError("dataset: matrix payload size mismatch");
  }
  Matrix m(rows, cols);
  std::copy(data.begin(), data.end(), m.data());
  return m;
}

}  // namespace

void to_json(nlohmann::json& j, const EncodedGraph& g) {
  j = {{"node_features", matrix_to_json(g.node_features)},
       {"edge_source", g.edge_source},
       {"edge_target", g.edge_target},
       {"edge_weights", g.edge_weights},
       {"graph_features", matrix_to_json(g.graph_features)},
       {"label", g.label},
       {"activity_ids", g.activity_ids},
       {"duration_bins", g.duration_bins},
       {"feature_mask", g.feature_mask}};
}

void from_json(const nlohmann::json& j, EncodedGraph& g) {
  g.node_features = matrix_from_json(j.at("node_features"));
  g.edge_source = j.at("edge_source").get<std::vector<int>>();
  g.edge_target = j.at("edge_target").get<std::vector<int>>();
  g.edge_weights = j.at("edge_weights").get<std::vector<double>>();
  g.graph_features = matrix_from_json(j.at("graph_features"));
  g.label = j.at("label").get<int>();
  g.activity_ids = j.at("activity_ids").get<std::vector<int>>();
  g.duration_bins = j.at("duration_bins").get<std::vector<int>>();
  g.feature_mask = j.at("feature_mask").get<std::vector<std::uint8_t>>();
}

// ---- split ----------------------------------------------------------------

SplitIndices split_train_validation(const std::vector<int>& labels, double train_fraction,
                                    bool stratified, std::uint64_t seed) {
  if (labels.size() < 2) throw ContractError("split: need at least 2 items");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) {
    throw ContractError("split: train fraction must lie in (0, 1)");
  }
  std::mt19937_64 rng(seed);
  SplitIndices out;
  auto take = [&](std::vector<std::size_t> members) {
    std::shuffle(members.begin(), members.end(), rng);
    const auto n_train = static_cast<std::size_t>(
        std::llround(train_fraction * static_cast<double>(members.size())));
    for (std::size_t i = 0; i < members.size(); ++i) {
      (i < n_train ? out.train : out.validation).push_back(members[i]);
    }
  };
  if (stratified) {
    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
    for (auto& [label, members] : by_class) {
      if (members.size() == 1) {
        out.warnings.push_back("class " + std::to_string(label) +
                               " has a single member; assigned to train");
        out.train.push_back(members.front());
        continue;
      }
      take(std::move(members));
    }
  } else {
    std::vector<std::size_t> all(labels.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    take(std::move(all));
  }
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.validation.begin(), out.validation.end());
  return out;
}

// ---- dataset container ----------------------------------------------------

DatasetDims EncodedDataset::dims() const {
  return {encoder.node_dim(), encoder.graph_dim(), encoder.n_bins(), encoder.n_activities(),
          encoder.n_classes()};
}

std::vector<int> EncodedDataset::class_counts() const {
  std::vector<int> counts(static_cast<std::size_t>(encoder.n_classes()), 0);
  for (const auto* part : {&train, &validation}) {
    for (const auto& g : *part) ++counts[static_cast<std::size_t>(g.label)];
  }
  return counts;
}

nlohmann::json dataset_to_json(const EncodedDataset& d) {
  const auto dims = d.dims();
  return {{"format", "hgnn-encoded-dataset"},
          {"version", kDatasetFormatVersion},
          {"dims",
           {{"node_features", dims.node_features},
            {"graph_features", dims.graph_features},
            {"n_bins", dims.n_bins},
            {"n_activities", dims.n_activities},
            {"n_classes", dims.n_classes}}},
          {"schema", d.schema},
          {"binning", d.policy},
          {"encoder", d.encoder},
          {"train", d.train},
          {"validation", d.validation}};
}

EncodedDataset dataset_from_json(const nlohmann::json& j) {
  if (j.value("format", std::string()) != "hgnn-encoded-dataset") {
    throw SchemaError("dataset: not an encoded dataset file");
  }
  if (j.value("version", 0) != kDatasetFormatVersion) {
    throw SchemaError("dataset: unsupported version " + std::to_string(j.value("version", 0)));
  }
  EncodedDataset d;
  d.schema = j.at("schema").get<LogSchema>();
  d.policy = j.at("binning").get<BinningPolicy>();
  d.encoder = j.at("encoder").get<EncoderState>();
  d.train = j.at("train").get<std::vector<EncodedGraph>>();
  d.validation = j.at("validation").get<std::vector<EncodedGraph>>();
  return d;
}

void save_dataset(const EncodedDataset& d, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << dataset_to_json(d).dump() << "\n";
}

EncodedDataset load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw SchemaError("dataset: cannot open '" + path.string() + "'");
  try {
    return dataset_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("dataset: ") + e.what());
  }
}

EncodedDataset build_dataset(const std::vector<Trace>& traces, const LogSchema& schema,
                             const BinningPolicy& policy, const EncodeOptions& options,
                             std::vector<std::string>* warnings) {
  std::vector<std::string> all_labels;
  for (const auto& t : traces) {
    if (t.events.empty()) throw SchemaError("log: case '" + t.case_id + "' has no events");
    all_labels.push_back(t.label);
  }
  const auto class_names = Vocabulary::fit(all_labels).levels;
  std::vector<int> labels;
  for (const auto& t : traces) {
    labels.push_back(static_cast<int>(
        std::find(class_names.begin(), class_names.end(), t.label) - class_names.begin()));
  }
  auto split = split_train_validation(labels, options.train_fraction, options.stratified, options.seed);
  if (warnings) warnings->insert(warnings->end(), split.warnings.begin(), split.warnings.end());
  std::vector<Trace> train_traces;
  for (auto i : split.train) train_traces.push_back(traces[i]);
  EncodedDataset d;
  d.schema = schema;
  d.policy = policy;
  d.encoder = fit_encoders(train_traces, schema, policy, &class_names);
  for (auto i : split.train) d.train.push_back(encode_trace(traces[i], d.encoder, schema, options.prefix_length));
  for (auto i : split.validation) {
    d.validation.push_back(encode_trace(traces[i], d.encoder, schema, options.prefix_length));
  }
  return d;
}

}  // namespace hgnn
