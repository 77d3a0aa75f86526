#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "featsel/rng.hpp"
#include "featsel/tensor.hpp"

namespace featsel {

enum class FieldKind { categorical, integer_bucketized, bucket_id };

inline std::string to_string(FieldKind k) {
  switch (k) {
    case FieldKind::categorical: return "categorical";
    case FieldKind::integer_bucketized: return "integer_bucketized";
    case FieldKind::bucket_id: return "bucket_id";
  }
  return "?";
}

inline FieldKind field_kind_from_string(std::string_view s) {
  if (s == "categorical") return FieldKind::categorical;
  if (s == "integer_bucketized") return FieldKind::integer_bucketized;
  if (s == "bucket_id") return FieldKind::bucket_id;
  throw std::invalid_argument("unknown field kind: " + std::string(s));
}

struct FieldSpec {
  std::string name;
  FieldKind kind = FieldKind::categorical;
  std::uint32_t vocab_size = 10000;
};

struct DatasetSchema {
  std::vector<FieldSpec> fields;
  std::string label_column = "label";

  std::size_t field_count() const { return fields.size(); }

  void validate() const {
    if (fields.empty()) throw std::invalid_argument("schema: needs >= 1 field");
    std::set<std::string> names;
    for (const auto& f : fields) {
      if (f.vocab_size < 2)
        throw std::invalid_argument("schema: vocab_size must be >= 2 for " + f.name);
      if (!names.insert(f.name).second)
        throw std::invalid_argument("schema: duplicate field name " + f.name);
    }
  }
};

/// One mini-batch: hashed bucket ids (rows x fields, row-major) plus labels.
struct ExampleBatch {
  std::size_t rows = 0;
  std::size_t fields = 0;
  std::vector<std::uint32_t> indices;
  std::vector<double> labels;

  std::uint32_t index(std::size_t r, std::size_t f) const {
    return indices[r * fields + f];
  }
};

struct PlantedSpec {
  std::vector<std::uint32_t> informative_fields;  // sorted ascending
  double weight_scale = 2.0;
  double bias = 0.0;
  std::uint64_t seed = 0;
};

/// Ground truth of a synthetic dataset: the spec plus the per-bucket weight
/// table drawn for each informative field (parallel to informative_fields).
struct PlantedInfo {
  PlantedSpec spec;
  std::vector<std::vector<double>> weights;
};

struct Dataset {
  DatasetSchema schema;
  std::size_t rows = 0;
  std::vector<std::uint32_t> indices;  // rows x M, row-major
  std::vector<std::uint8_t> labels;
  std::optional<PlantedInfo> planted;

  std::size_t field_count() const { return schema.field_count(); }
  std::uint32_t index(std::size_t r, std::size_t f) const {
    return indices[r * field_count() + f];
  }
};

// ---------------------------------------------------------------------------
// Hashing trick
// ---------------------------------------------------------------------------

inline std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= static_cast<std::uint64_t>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Stable bucket id for a raw value; the field name is salted in so equal raw
/// values in different fields land in unrelated buckets.
inline std::uint32_t hash_value(std::string_view field_name, std::string_view raw,
                                std::uint32_t vocab_size) {
  if (vocab_size < 2) throw std::invalid_argument("hash_value: vocab_size < 2");
  std::string key;
  key.reserve(field_name.size() + 1 + raw.size());
  key.append(field_name);
  key.push_back('\x1f');
  key.append(raw);
  return static_cast<std::uint32_t>(fnv1a64(key) % vocab_size);
}

inline constexpr const char* kMissingToken = "<MISSING>";

// ---------------------------------------------------------------------------
// Delimited ingestion
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<std::string> split_line(const std::string& line, char delim) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(delim, start);
    if (pos == std::string::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

inline std::uint32_t encode_value(const FieldSpec& f, const std::string& raw,
                                  std::size_t line_no) {
  const std::string& v = raw.empty() ? std::string(kMissingToken) : raw;
  switch (f.kind) {
    case FieldKind::categorical:
      return hash_value(f.name, v, f.vocab_size);
    case FieldKind::integer_bucketized: {
      if (raw.empty()) return hash_value(f.name, kMissingToken, f.vocab_size);
      long long x = 0;
      try {
        std::size_t used = 0;
        x = std::stoll(raw, &used);
        if (used != raw.size()) throw std::invalid_argument("trailing chars");
      } catch (const std::exception&) {
        throw std::runtime_error("line " + std::to_string(line_no) +
                                 ": field " + f.name + ": not an integer: " + raw);
      }
      const double clamped = static_cast<double>(x < 0 ? 0 : x);
      const long long bucket_key =
          static_cast<long long>(std::floor(std::log(1.0 + clamped)));
      return hash_value(f.name, std::to_string(bucket_key), f.vocab_size);
    }
    case FieldKind::bucket_id: {
      unsigned long id = 0;
      try {
        std::size_t used = 0;
        id = std::stoul(raw, &used);
        if (used != raw.size()) throw std::invalid_argument("trailing chars");
      } catch (const std::exception&) {
        throw std::runtime_error("line " + std::to_string(line_no) +
                                 ": field " + f.name + ": bad bucket id: " + raw);
      }
      if (id >= f.vocab_size)
        throw std::runtime_error("line " + std::to_string(line_no) + ": field " +
                                 f.name + ": bucket id " + std::to_string(id) +
                                 " out of range (vocab " +
                                 std::to_string(f.vocab_size) + ")");
      return static_cast<std::uint32_t>(id);
    }
  }
  throw std::logic_error("unreachable");
}

}  // namespace detail

/// Reads "label<delim>field0<delim>...<delim>fieldM-1" rows. Categorical
/// values go through the hashing trick; integer values are log-bucketized
/// first; empty values map to the reserved <MISSING> token.
inline Dataset load_delimited(const std::string& path, const DatasetSchema& schema,
                              char delim = '\t') {
  schema.validate();
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_delimited: cannot open " + path);
  Dataset ds;
  ds.schema = schema;
  const std::size_t m = schema.field_count();
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto cols = detail::split_line(line, delim);
    if (cols.size() != m + 1)
      throw std::runtime_error("line " + std::to_string(line_no) + ": expected " +
                               std::to_string(m + 1) + " columns, got " +
                               std::to_string(cols.size()));
    if (cols[0] != "0" && cols[0] != "1")
      throw std::runtime_error("line " + std::to_string(line_no) +
                               ": non-binary label: " + cols[0]);
    ds.labels.push_back(cols[0] == "1" ? 1 : 0);
    for (std::size_t f = 0; f < m; ++f)
      ds.indices.push_back(detail::encode_value(schema.fields[f], cols[1 + f], line_no));
    ++ds.rows;
  }
  return ds;
}

// ---------------------------------------------------------------------------
// Synthetic data with planted informative fields
// ---------------------------------------------------------------------------

inline DatasetSchema uniform_schema(std::size_t m, std::uint32_t vocab_size,
                                    FieldKind kind = FieldKind::bucket_id) {
  DatasetSchema s;
  s.fields.reserve(m);
  for (std::size_t i = 0; i < m; ++i)
    s.fields.push_back({"f" + std::to_string(i), kind, vocab_size});
  return s;
}

/// Draws per-bucket weight tables for the planted fields, then samples rows
/// with uniform bucket ids and Bernoulli labels through a logistic link.
/// Bit-reproducible for a fixed spec.
inline Dataset generate_synthetic(std::size_t m, std::uint32_t vocab_size,
                                  std::size_t rows, const PlantedSpec& planted) {
  if (rows < 1) throw std::invalid_argument("generate_synthetic: rows must be >= 1");
  if (planted.informative_fields.empty())
    throw std::invalid_argument("generate_synthetic: planted set must be non-empty");
  if (planted.informative_fields.size() > m)
    throw std::invalid_argument("generate_synthetic: more planted fields than fields");
  std::vector<std::uint32_t> sorted = planted.informative_fields;
  std::sort(sorted.begin(), sorted.end());
  sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
  if (sorted.size() != planted.informative_fields.size())
    throw std::invalid_argument("generate_synthetic: duplicate planted field");
  if (sorted.back() >= m)
    throw std::invalid_argument("generate_synthetic: planted field out of range");

  Dataset ds;
  ds.schema = uniform_schema(m, vocab_size);
  ds.rows = rows;
  ds.indices.resize(rows * m);
  ds.labels.resize(rows);

  PlantedInfo info;
  info.spec = planted;
  info.spec.informative_fields = sorted;
  RngStream wrng(derive_seed(planted.seed, 11));
  info.weights.resize(sorted.size());
  for (std::size_t s = 0; s < sorted.size(); ++s) {
    info.weights[s].resize(vocab_size);
    for (std::uint32_t b = 0; b < vocab_size; ++b)
      info.weights[s][b] = wrng.normal(0.0, planted.weight_scale);
  }

  RngStream rrng(derive_seed(planted.seed, 22));
  for (std::size_t r = 0; r < rows; ++r) {
    double z = planted.bias;
    for (std::size_t f = 0; f < m; ++f) {
      const auto bucket = static_cast<std::uint32_t>(rrng.below(vocab_size));
      ds.indices[r * m + f] = bucket;
    }
    for (std::size_t s = 0; s < sorted.size(); ++s)
      z += info.weights[s][ds.indices[r * m + sorted[s]]];
    ds.labels[r] = rrng.bernoulli(sigmoid_scalar(z)) ? 1 : 0;
  }
  ds.planted = std::move(info);
  return ds;
}

// ---------------------------------------------------------------------------
// Split / batching
// ---------------------------------------------------------------------------

namespace detail {
inline Dataset take_rows(const Dataset& ds, const std::vector<std::uint32_t>& perm,
                         std::size_t begin, std::size_t end) {
  Dataset out;
  out.schema = ds.schema;
  out.planted = ds.planted;
  out.rows = end - begin;
  const std::size_t m = ds.field_count();
  out.indices.resize(out.rows * m);
  out.labels.resize(out.rows);
  for (std::size_t i = begin; i < end; ++i) {
    const std::size_t src = perm[i];
    std::copy(ds.indices.begin() + src * m, ds.indices.begin() + (src + 1) * m,
              out.indices.begin() + (i - begin) * m);
    out.labels[i - begin] = ds.labels[src];
  }
  return out;
}
}  // namespace detail

/// Deterministic shuffle followed by contiguous slicing. Partitions are
/// disjoint and exhaustive; an empty partition is an error.
inline std::vector<Dataset> split(const Dataset& ds, const std::vector<double>& ratios,
                                  std::uint64_t seed) {
  if (ratios.empty()) throw std::invalid_argument("split: no ratios");
  double sum = 0.0;
  for (double r : ratios) {
    if (r <= 0.0) throw std::invalid_argument("split: ratios must be positive");
    sum += r;
  }
  if (std::abs(sum - 1.0) > 1e-9)
    throw std::invalid_argument("split: ratios must sum to 1");
  RngStream rng(derive_seed(seed, 33));
  const auto perm = rng.permutation(ds.rows);
  std::vector<Dataset> parts;
  std::size_t begin = 0;
  double cum = 0.0;
  for (std::size_t i = 0; i < ratios.size(); ++i) {
    cum += ratios[i];
    std::size_t end = (i + 1 == ratios.size())
                          ? ds.rows
                          : static_cast<std::size_t>(std::llround(cum * ds.rows));
    if (end <= begin || end > ds.rows)
      throw std::invalid_argument("split: empty partition at index " +
                                  std::to_string(i));
    parts.push_back(detail::take_rows(ds, perm, begin, end));
    begin = end;
  }
  return parts;
}

/// Per-epoch reshuffled mini-batches; the final short batch is emitted.
inline std::vector<ExampleBatch> make_batches(const Dataset& ds, std::size_t batch_size,
                                              std::uint64_t seed, std::size_t epoch) {
  if (batch_size < 1) throw std::invalid_argument("make_batches: batch_size must be >= 1");
  RngStream rng(derive_seed(seed, 44, epoch));
  const auto perm = rng.permutation(ds.rows);
  const std::size_t m = ds.field_count();
  std::vector<ExampleBatch> out;
  for (std::size_t begin = 0; begin < ds.rows; begin += batch_size) {
    const std::size_t end = std::min(begin + batch_size, ds.rows);
    ExampleBatch b;
    b.rows = end - begin;
    b.fields = m;
    b.indices.resize(b.rows * m);
    b.labels.resize(b.rows);
    for (std::size_t i = begin; i < end; ++i) {
      const std::size_t src = perm[i];
      std::copy(ds.indices.begin() + src * m, ds.indices.begin() + (src + 1) * m,
                b.indices.begin() + (i - begin) * m);
      b.labels[i - begin] = static_cast<double>(ds.labels[src]);
    }
    out.push_back(std::move(b));
  }
  return out;
}

/// Unshuffled batches in row order, for evaluation passes.
inline std::vector<ExampleBatch> make_eval_batches(const Dataset& ds,
                                                   std::size_t batch_size) {
  std::vector<ExampleBatch> out;
  const std::size_t m = ds.field_count();
  for (std::size_t begin = 0; begin < ds.rows; begin += batch_size) {
    const std::size_t end = std::min(begin + batch_size, ds.rows);
    ExampleBatch b;
    b.rows = end - begin;
    b.fields = m;
    b.indices.assign(ds.indices.begin() + begin * m, ds.indices.begin() + end * m);
    b.labels.resize(b.rows);
    for (std::size_t i = begin; i < end; ++i)
      b.labels[i - begin] = static_cast<double>(ds.labels[i]);
    out.push_back(std::move(b));
  }
  return out;
}

/// Column subset (used when retraining on a selected feature set).
inline Dataset select_fields(const Dataset& ds, const std::vector<std::uint32_t>& fields) {
  Dataset out;
  out.schema.label_column = ds.schema.label_column;
  for (std::uint32_t f : fields) {
    if (f >= ds.field_count())
      throw std::invalid_argument("select_fields: field index out of range");
    out.schema.fields.push_back(ds.schema.fields[f]);
  }
  out.rows = ds.rows;
  out.labels = ds.labels;
  const std::size_t m = ds.field_count();
  out.indices.resize(ds.rows * fields.size());
  for (std::size_t r = 0; r < ds.rows; ++r)
    for (std::size_t j = 0; j < fields.size(); ++j)
      out.indices[r * fields.size() + j] = ds.indices[r * m + fields[j]];
  return out;
}

// ---------------------------------------------------------------------------
// Export / sidecar
// ---------------------------------------------------------------------------

inline nlohmann::ordered_json schema_to_json(const DatasetSchema& s) {
  nlohmann::ordered_json j;
  j["label_column"] = s.label_column;
  j["fields"] = nlohmann::ordered_json::array();
  for (const auto& f : s.fields)
    j["fields"].push_back({{"name", f.name},
                           {"kind", to_string(f.kind)},
                           {"vocab_size", f.vocab_size}});
  return j;
}

inline DatasetSchema schema_from_json(const nlohmann::json& j) {
  DatasetSchema s;
  s.label_column = j.at("label_column").get<std::string>();
  for (const auto& f : j.at("fields")) {
    s.fields.push_back({f.at("name").get<std::string>(),
                        field_kind_from_string(f.at("kind").get<std::string>()),
                        f.at("vocab_size").get<std::uint32_t>()});
  }
  return s;
}

inline std::string sidecar_path(const std::string& data_path) {
  return data_path + ".meta.json";
}

/// Writes the dataset as delimited text; when planted ground truth is
/// present, also writes a sidecar JSON with the schema, spec and weights.
inline void write_delimited(const Dataset& ds, const std::string& path,
                            char delim = '\t') {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("write_delimited: cannot open " + path);
  const std::size_t m = ds.field_count();
  for (std::size_t r = 0; r < ds.rows; ++r) {
    out << static_cast<int>(ds.labels[r]);
    for (std::size_t f = 0; f < m; ++f) out << delim << ds.indices[r * m + f];
    out << '\n';
  }
  if (!out) throw std::runtime_error("write_delimited: write failed for " + path);
  nlohmann::ordered_json j;
  j["schema"] = schema_to_json(ds.schema);
  if (ds.planted) {
    j["planted_spec"] = {{"informative_fields", ds.planted->spec.informative_fields},
                         {"weight_scale", ds.planted->spec.weight_scale},
                         {"bias", ds.planted->spec.bias},
                         {"seed", ds.planted->spec.seed}};
    j["weights"] = ds.planted->weights;
  } else {
    j["planted_spec"] = nullptr;
    j["weights"] = nullptr;
  }
  std::ofstream meta(sidecar_path(path));
  if (!meta) throw std::runtime_error("write_delimited: cannot open sidecar");
  meta << j.dump(2) << '\n';
}

/// Loads a dataset whose schema lives in the sidecar written by
/// write_delimited; re-attaches planted ground truth when recorded.
inline Dataset load_with_sidecar(const std::string& path, char delim = '\t') {
  std::ifstream meta(sidecar_path(path));
  if (!meta)
    throw std::runtime_error("load_with_sidecar: missing sidecar for " + path);
  nlohmann::json j;
  meta >> j;
  Dataset ds = load_delimited(path, schema_from_json(j.at("schema")), delim);
  if (!j.at("planted_spec").is_null()) {
    PlantedInfo info;
    const auto& ps = j.at("planted_spec");
    info.spec.informative_fields =
        ps.at("informative_fields").get<std::vector<std::uint32_t>>();
    info.spec.weight_scale = ps.at("weight_scale").get<double>();
    info.spec.bias = ps.at("bias").get<double>();
    info.spec.seed = ps.at("seed").get<std::uint64_t>();
    info.weights = j.at("weights").get<std::vector<std::vector<double>>>();
    ds.planted = std::move(info);
  }
  return ds;
}

}  // namespace featsel
