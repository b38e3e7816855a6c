#include "tcl/data.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "json.hpp"

namespace tcl {

using ordered_json = nlohmann::ordered_json;

static_assert(std::endian::native == std::endian::little,
              "checkpoint payloads assume a little-endian host");

// --- dataset ---------------------------------------------------------------

Vector Dataset::feature_std() const {
  Vector std_dev(x.cols());
  auto n_rows = static_cast<double>(x.rows());
  for (Index j = 0; j < x.cols(); ++j) {
    double mean = x.col(j).mean();
    std_dev(j) = std::sqrt((x.col(j).array() - mean).square().sum() / n_rows);
  }
  return std_dev;
}

void Dataset::validate() const {
  if (x.rows() < 1 || x.cols() < 1)
    throw DataError("dataset: needs at least one row and one feature");
  if (!x.allFinite()) throw DataError("dataset: non-finite feature values");
  if (static_cast<Index>(ids.size()) != x.rows())
    throw DataError("dataset: id count does not match rows");
  if (!labels.empty() && static_cast<Index>(labels.size()) != x.rows())
    throw DataError("dataset: label count does not match rows");
  for (int l : labels)
    if (l < 0) throw DataError("dataset: negative label");
  std::unordered_set<std::int64_t> seen;
  for (std::int64_t id : ids)
    if (!seen.insert(id).second)
      throw DataError("dataset: duplicate id " + std::to_string(id));
}

Dataset generate_blobs(int k, Index n, Index d, double separation,
                       std::uint64_t seed) {
  if (k < 2) throw ConfigError("gen-blobs: k must be >= 2");
  if (d < 1) throw ConfigError("gen-blobs: d must be >= 1");
  if (n < k) throw ConfigError("gen-blobs: n must be >= k");
  if (!(separation > 0.0))
    throw ConfigError("gen-blobs: separation must be positive");

  Rng rng(seed);
  // Center scale targeting typical nearest-pair distances around 1.5x the
  // separation floor, so the floor actually shapes the layout.
  double scale = 1.5 * separation *
                 std::pow(static_cast<double>(k), 1.0 / static_cast<double>(d)) /
                 std::sqrt(2.0 * static_cast<double>(d));
  Matrix centers(k, d);
  bool placed = false;
  for (int attempt = 0; attempt < 500 && !placed; ++attempt) {
    fill_normal(centers, rng, 0.0, scale);
    placed = true;
    for (Index i = 0; i < k && placed; ++i)
      for (Index j = i + 1; j < k; ++j)
        if ((centers.row(i) - centers.row(j)).norm() < separation) {
          placed = false;
          break;
        }
  }
  if (!placed)
    throw ConfigError(
        "gen-blobs: could not place centers pairwise >= separation apart in "
        "500 attempts; lower separation or k, or raise d");

  Dataset ds;
  ds.x.resize(n, d);
  ds.labels.reserve(static_cast<std::size_t>(n));
  ds.ids.reserve(static_cast<std::size_t>(n));
  Index row = 0;
  for (int c = 0; c < k; ++c) {
    Index size = n / k + (c < static_cast<int>(n % k) ? 1 : 0);
    for (Index i = 0; i < size; ++i, ++row) {
      for (Index j = 0; j < d; ++j)
        ds.x(row, j) = centers(c, j) + rng.normal();
      ds.labels.push_back(c);
      ds.ids.push_back(row);
    }
  }
  return ds;
}

// --- text helpers ----------------------------------------------------------

namespace {

std::string format_double(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, p);
}

[[noreturn]] void fail_line(const std::string& origin, std::size_t line_no,
                            const std::string& what) {
  throw DataError(origin + " line " + std::to_string(line_no) + ": " + what);
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    std::size_t pos = line.find(',', start);
    if (pos == std::string::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

double parse_double_field(const std::string& field, const std::string& origin,
                          std::size_t line_no) {
  double v = 0.0;
  auto [p, ec] =
      std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc{} || p != field.data() + field.size())
    fail_line(origin, line_no, "bad number '" + field + "'");
  if (!std::isfinite(v))
    fail_line(origin, line_no, "non-finite value '" + field + "'");
  return v;
}

template <typename Int>
Int parse_int_field(const std::string& field, const std::string& origin,
                    std::size_t line_no, const char* what) {
  Int v = 0;
  auto [p, ec] =
      std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc{} || p != field.data() + field.size())
    fail_line(origin, line_no,
              std::string("bad ") + what + " '" + field + "'");
  return v;
}

std::vector<std::string> read_lines(std::istream& in) {
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

Dataset parse_csv(const std::vector<std::string>& lines,
                  const std::string& origin) {
  if (lines.empty()) throw DataError(origin + ": empty file");
  std::vector<std::string> header = split_csv(lines[0]);
  long id_col = -1, label_col = -1;
  std::vector<std::size_t> feature_cols;
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (header[c] == "id") {
      if (id_col >= 0) fail_line(origin, 1, "duplicate 'id' column");
      id_col = static_cast<long>(c);
    } else if (header[c] == "label") {
      if (label_col >= 0) fail_line(origin, 1, "duplicate 'label' column");
      label_col = static_cast<long>(c);
    } else {
      feature_cols.push_back(c);
    }
  }
  if (feature_cols.empty()) fail_line(origin, 1, "no feature columns");

  Dataset ds;
  std::vector<std::vector<double>> rows;
  std::unordered_map<std::int64_t, std::size_t> id_lines;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const std::size_t line_no = i + 1;
    if (lines[i].empty()) continue;
    std::vector<std::string> fields = split_csv(lines[i]);
    if (fields.size() != header.size())
      fail_line(origin, line_no,
                "expected " + std::to_string(header.size()) + " fields, got " +
                    std::to_string(fields.size()));
    std::vector<double> row;
    row.reserve(feature_cols.size());
    for (std::size_t c : feature_cols)
      row.push_back(parse_double_field(fields[c], origin, line_no));
    rows.push_back(std::move(row));
    if (id_col >= 0) {
      auto id = parse_int_field<std::int64_t>(
          fields[static_cast<std::size_t>(id_col)], origin, line_no, "id");
      auto [it, fresh] = id_lines.emplace(id, line_no);
      if (!fresh)
        fail_line(origin, line_no,
                  "duplicate id " + std::to_string(id) + " (first at line " +
                      std::to_string(it->second) + ")");
      ds.ids.push_back(id);
    }
    if (label_col >= 0) {
      int label = parse_int_field<int>(
          fields[static_cast<std::size_t>(label_col)], origin, line_no,
          "label");
      if (label < 0) fail_line(origin, line_no, "negative label");
      ds.labels.push_back(label);
    }
  }
  if (rows.empty()) throw DataError(origin + ": no data rows");

  ds.x.resize(static_cast<Index>(rows.size()),
              static_cast<Index>(feature_cols.size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j)
      ds.x(static_cast<Index>(i), static_cast<Index>(j)) = rows[i][j];
  if (id_col < 0)
    for (Index i = 0; i < ds.x.rows(); ++i) ds.ids.push_back(i);
  ds.validate();
  return ds;
}

Dataset parse_jsonl(const std::vector<std::string>& lines,
                    const std::string& origin) {
  Dataset ds;
  std::vector<VectorRecord> records;
  std::vector<std::size_t> line_nos;
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    records.push_back(parse_jsonl_record(lines[i], origin, i + 1));
    line_nos.push_back(i + 1);
  }
  if (records.empty()) throw DataError(origin + ": no data rows");

  const Index d = records[0].x.size();
  const bool with_ids = records[0].id.has_value();
  const bool with_labels = records[0].label.has_value();
  std::unordered_map<std::int64_t, std::size_t> id_lines;
  ds.x.resize(static_cast<Index>(records.size()), d);
  for (std::size_t i = 0; i < records.size(); ++i) {
    const std::size_t line_no = line_nos[i];
    VectorRecord& rec = records[i];
    if (rec.x.size() != d)
      fail_line(origin, line_no,
                "dimension mismatch (got " + std::to_string(rec.x.size()) +
                    ", expected " + std::to_string(d) + ")");
    if (rec.id.has_value() != with_ids)
      fail_line(origin, line_no, "inconsistent presence of 'id'");
    if (rec.label.has_value() != with_labels)
      fail_line(origin, line_no, "inconsistent presence of 'label'");
    ds.x.row(static_cast<Index>(i)) = rec.x.transpose();
    if (with_ids) {
      auto [it, fresh] = id_lines.emplace(*rec.id, line_no);
      if (!fresh)
        fail_line(origin, line_no,
                  "duplicate id " + std::to_string(*rec.id) +
                      " (first at line " + std::to_string(it->second) + ")");
      ds.ids.push_back(*rec.id);
    }
    if (with_labels) ds.labels.push_back(*rec.label);
  }
  if (!with_ids)
    for (Index i = 0; i < ds.x.rows(); ++i) ds.ids.push_back(i);
  ds.validate();
  return ds;
}

}  // namespace

VectorRecord parse_jsonl_record(const std::string& line,
                                const std::string& origin,
                                std::size_t line_no) {
  ordered_json j;
  try {
    j = ordered_json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    fail_line(origin, line_no, std::string("invalid JSON: ") + e.what());
  }
  if (!j.is_object()) fail_line(origin, line_no, "expected a JSON object");
  if (!j.contains("x") || !j["x"].is_array() || j["x"].empty())
    fail_line(origin, line_no, "'x' must be a nonempty array");
  VectorRecord rec;
  rec.x.resize(static_cast<Index>(j["x"].size()));
  Index pos = 0;
  for (const auto& v : j["x"]) {
    if (!v.is_number())
      fail_line(origin, line_no, "'x' entries must be numbers");
    double value = v.get<double>();
    if (!std::isfinite(value))
      fail_line(origin, line_no, "non-finite value in 'x'");
    rec.x(pos++) = value;
  }
  if (j.contains("id")) {
    if (!j["id"].is_number_integer())
      fail_line(origin, line_no, "'id' must be an integer");
    rec.id = j["id"].get<std::int64_t>();
  }
  if (j.contains("label")) {
    if (!j["label"].is_number_integer() || j["label"].get<std::int64_t>() < 0)
      fail_line(origin, line_no, "'label' must be a non-negative integer");
    rec.label = j["label"].get<int>();
  }
  return rec;
}

VectorFormat parse_format(const std::string& name) {
  if (name == "csv") return VectorFormat::csv;
  if (name == "jsonl") return VectorFormat::jsonl;
  throw ConfigError("unknown format '" + name + "' (expected csv or jsonl)");
}

Dataset parse_vectors(std::istream& in, VectorFormat format,
                      const std::string& origin) {
  std::vector<std::string> lines = read_lines(in);
  return format == VectorFormat::csv ? parse_csv(lines, origin)
                                     : parse_jsonl(lines, origin);
}

Dataset load_vectors(const std::string& path, VectorFormat format) {
  std::ifstream in(path);
  if (!in) throw DataError(path + ": cannot open for reading");
  return parse_vectors(in, format, path);
}

void save_vectors(const Dataset& ds, const std::string& path,
                  VectorFormat format) {
  ds.validate();
  std::ofstream out(path);
  if (!out) throw DataError(path + ": cannot open for writing");
  if (format == VectorFormat::csv) {
    out << "id";
    for (Index j = 0; j < ds.dim(); ++j) out << ",f" << j;
    if (ds.has_labels()) out << ",label";
    out << "\n";
    for (Index i = 0; i < ds.n(); ++i) {
      out << ds.ids[static_cast<std::size_t>(i)];
      for (Index j = 0; j < ds.dim(); ++j)
        out << "," << format_double(ds.x(i, j));
      if (ds.has_labels())
        out << "," << ds.labels[static_cast<std::size_t>(i)];
      out << "\n";
    }
  } else {
    for (Index i = 0; i < ds.n(); ++i) {
      ordered_json j;
      j["id"] = ds.ids[static_cast<std::size_t>(i)];
      j["x"] = ordered_json::array();
      for (Index c = 0; c < ds.dim(); ++c) j["x"].push_back(ds.x(i, c));
      if (ds.has_labels())
        j["label"] = ds.labels[static_cast<std::size_t>(i)];
      out << j.dump() << "\n";
    }
  }
  if (!out) throw DataError(path + ": write failed");
}

// --- encoding --------------------------------------------------------------

namespace {

constexpr char kB64Alphabet[] =
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

// Row-major little-endian byte image; both the payload and its checksum are
// computed over these bytes.
std::vector<unsigned char> matrix_bytes(const Matrix& m) {
  std::vector<unsigned char> bytes;
  bytes.reserve(static_cast<std::size_t>(m.size()) * 8);
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j) {
      auto bits = std::bit_cast<std::uint64_t>(m(i, j));
      for (int b = 0; b < 8; ++b)
        bytes.push_back(static_cast<unsigned char>((bits >> (8 * b)) & 0xff));
    }
  return bytes;
}

}  // namespace

std::string base64_encode(const unsigned char* data, std::size_t len) {
  std::string out;
  out.reserve((len + 2) / 3 * 4);
  for (std::size_t i = 0; i < len; i += 3) {
    unsigned v = static_cast<unsigned>(data[i]) << 16;
    if (i + 1 < len) v |= static_cast<unsigned>(data[i + 1]) << 8;
    if (i + 2 < len) v |= static_cast<unsigned>(data[i + 2]);
    out.push_back(kB64Alphabet[(v >> 18) & 63]);
    out.push_back(kB64Alphabet[(v >> 12) & 63]);
    out.push_back(i + 1 < len ? kB64Alphabet[(v >> 6) & 63] : '=');
    out.push_back(i + 2 < len ? kB64Alphabet[v & 63] : '=');
  }
  return out;
}

std::vector<unsigned char> base64_decode(const std::string& text) {
  if (text.size() % 4 != 0)
    throw DataError("base64: length must be a multiple of 4");
  static const auto lookup = [] {
    std::array<signed char, 256> t{};
    t.fill(-1);
    for (int i = 0; i < 64; ++i)
      t[static_cast<unsigned char>(kB64Alphabet[i])] = static_cast<signed char>(i);
    return t;
  }();
  std::vector<unsigned char> out;
  out.reserve(text.size() / 4 * 3);
  for (std::size_t i = 0; i < text.size(); i += 4) {
    int pad = 0;
    unsigned v = 0;
    for (std::size_t k = 0; k < 4; ++k) {
      char c = text[i + k];
      if (c == '=') {
        if (i + 4 != text.size() || k < 2)
          throw DataError("base64: misplaced padding");
        ++pad;
        v <<= 6;
        continue;
      }
      if (pad > 0) throw DataError("base64: data after padding");
      signed char s = lookup[static_cast<unsigned char>(c)];
      if (s < 0) throw DataError("base64: invalid character");
      v = (v << 6) | static_cast<unsigned>(s);
    }
    out.push_back(static_cast<unsigned char>((v >> 16) & 0xff));
    if (pad < 2) out.push_back(static_cast<unsigned char>((v >> 8) & 0xff));
    if (pad < 1) out.push_back(static_cast<unsigned char>(v & 0xff));
  }
  return out;
}

std::uint64_t fnv1a64(const unsigned char* data, std::size_t len) {
  std::uint64_t h = 14695981039346656037ULL;
  for (std::size_t i = 0; i < len; ++i) {
    h ^= data[i];
    h *= 1099511628211ULL;
  }
  return h;
}

std::string encode_matrix(const Matrix& m) {
  std::vector<unsigned char> bytes = matrix_bytes(m);
  return base64_encode(bytes.data(), bytes.size());
}

Matrix decode_matrix(const std::string& b64, Index rows, Index cols) {
  std::vector<unsigned char> bytes = base64_decode(b64);
  if (bytes.size() != static_cast<std::size_t>(rows) *
                          static_cast<std::size_t>(cols) * 8)
    throw DataError("matrix payload: byte count does not match shape");
  Matrix m(rows, cols);
  std::size_t pos = 0;
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) {
      std::uint64_t bits = 0;
      for (int b = 0; b < 8; ++b)
        bits |= static_cast<std::uint64_t>(bytes[pos++]) << (8 * b);
      m(i, j) = std::bit_cast<double>(bits);
    }
  return m;
}

// --- checkpoints -----------------------------------------------------------

std::vector<ParamShape> parameter_shapes(const NetworkConfig& config) {
  std::vector<ParamShape> shapes;
  std::vector<Index> dims;
  dims.push_back(config.input_dim);
  dims.insert(dims.end(), config.backbone_hidden.begin(),
              config.backbone_hidden.end());
  dims.push_back(config.feature_dim);
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    std::string base = "backbone." + std::to_string(i);
    shapes.push_back({base + ".weight", dims[i], dims[i + 1]});
    shapes.push_back({base + ".bias", 1, dims[i + 1]});
  }
  const Index f = config.feature_dim;
  shapes.push_back({"ich.0.weight", f, f});
  shapes.push_back({"ich.0.bias", 1, f});
  shapes.push_back({"ich.1.weight", f, config.ich_dim});
  shapes.push_back({"ich.1.bias", 1, config.ich_dim});
  shapes.push_back({"cch.0.weight", f, f});
  shapes.push_back({"cch.0.bias", 1, f});
  shapes.push_back({"cch.1.weight", f, config.cluster_count});
  shapes.push_back({"cch.1.bias", 1, config.cluster_count});
  return shapes;
}

namespace {

std::string checksum_string(const Matrix& m) {
  std::vector<unsigned char> bytes = matrix_bytes(m);
  std::uint64_t h = fnv1a64(bytes.data(), bytes.size());
  char buf[32];
  std::snprintf(buf, sizeof buf, "fnv1a64:%016llx",
                static_cast<unsigned long long>(h));
  return buf;
}

ordered_json matrix_to_json(const Matrix& m, const std::string& name = "") {
  ordered_json j;
  if (!name.empty()) j["name"] = name;
  j["rows"] = m.rows();
  j["cols"] = m.cols();
  j["data"] = encode_matrix(m);
  j["checksum"] = checksum_string(m);
  return j;
}

const ordered_json& require_key(const ordered_json& j, const char* key,
                                const std::string& origin) {
  if (!j.contains(key))
    throw DataError(origin + ": missing key '" + key + "'");
  return j.at(key);
}

Matrix matrix_from_json(const ordered_json& j, const std::string& origin,
                        const std::string& what) {
  const std::string ctx = origin + " (" + what + ")";
  auto rows = require_key(j, "rows", ctx).get<Index>();
  auto cols = require_key(j, "cols", ctx).get<Index>();
  if (rows < 1 || cols < 1) throw DataError(ctx + ": bad shape");
  Matrix m = decode_matrix(
      require_key(j, "data", ctx).get<std::string>(), rows, cols);
  if (checksum_string(m) != require_key(j, "checksum", ctx).get<std::string>())
    throw DataError(ctx + ": checksum mismatch");
  if (!m.allFinite()) throw DataError(ctx + ": non-finite values");
  return m;
}

}  // namespace

std::string checkpoint_to_string(const Checkpoint& ck) {
  ordered_json j;
  j["format"] = "tcl-checkpoint";
  j["version"] = ck.version;
  ordered_json net;
  net["input_dim"] = ck.network.input_dim;
  net["backbone_hidden"] = ck.network.backbone_hidden;
  net["feature_dim"] = ck.network.feature_dim;
  net["ich_dim"] = ck.network.ich_dim;
  net["cluster_count"] = ck.network.cluster_count;
  net["seed"] = ck.network.seed;
  j["network"] = std::move(net);
  j["params"] = ordered_json::array();
  for (const NamedMatrix& p : ck.params)
    j["params"].push_back(matrix_to_json(p.value, p.name));
  ordered_json adam;
  adam["step"] = ck.adam_step;
  adam["learning_rate"] = ck.adam_config.learning_rate;
  adam["beta1"] = ck.adam_config.beta1;
  adam["beta2"] = ck.adam_config.beta2;
  adam["epsilon"] = ck.adam_config.epsilon;
  adam["weight_decay"] = ck.adam_config.weight_decay;
  adam["m"] = ordered_json::array();
  adam["v"] = ordered_json::array();
  for (const Matrix& m : ck.adam_m) adam["m"].push_back(matrix_to_json(m));
  for (const Matrix& v : ck.adam_v) adam["v"].push_back(matrix_to_json(v));
  j["adam"] = std::move(adam);
  ordered_json store;
  store["gamma"] = ck.store.gamma;
  store["alpha"] = ck.store.alpha;
  store["entries"] = ordered_json::array();
  for (const auto& [id, entry] : ck.store.entries)
    store["entries"].push_back(
        ordered_json::array({id, entry.label, entry.confidence}));
  j["pseudo_labels"] = std::move(store);
  j["rng"] = ck.rng_state;
  j["epochs_trained"] = ck.epochs_trained;
  j["epochs_boosted"] = ck.epochs_boosted;
  return j.dump(1) + "\n";
}

Checkpoint checkpoint_from_string(const std::string& text,
                                  const std::string& origin) {
  ordered_json j;
  try {
    j = ordered_json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(origin + ": invalid checkpoint JSON: " + e.what());
  }
  try {
    if (!j.is_object() ||
        require_key(j, "format", origin).get<std::string>() !=
            "tcl-checkpoint")
      throw DataError(origin + ": not a checkpoint file");
    Checkpoint ck;
    ck.version = require_key(j, "version", origin).get<int>();
    if (ck.version != 1)
      throw DataError(origin + ": unsupported checkpoint version " +
                      std::to_string(ck.version));

    const ordered_json& net = require_key(j, "network", origin);
    ck.network.input_dim = require_key(net, "input_dim", origin).get<Index>();
    ck.network.backbone_hidden =
        require_key(net, "backbone_hidden", origin).get<std::vector<Index>>();
    ck.network.feature_dim =
        require_key(net, "feature_dim", origin).get<Index>();
    ck.network.ich_dim = require_key(net, "ich_dim", origin).get<Index>();
    ck.network.cluster_count =
        require_key(net, "cluster_count", origin).get<Index>();
    ck.network.seed = require_key(net, "seed", origin).get<std::uint64_t>();
    try {
      ck.network.validate();
    } catch (const ConfigError& e) {
      throw DataError(origin + ": invalid network config: " + e.what());
    }

    std::vector<ParamShape> expected = parameter_shapes(ck.network);
    const ordered_json& params = require_key(j, "params", origin);
    if (!params.is_array() || params.size() != expected.size())
      throw DataError(origin + ": expected " +
                      std::to_string(expected.size()) + " parameters");
    for (std::size_t i = 0; i < expected.size(); ++i) {
      const ordered_json& p = params[i];
      std::string name = require_key(p, "name", origin).get<std::string>();
      if (name != expected[i].name)
        throw DataError(origin + ": parameter " + std::to_string(i) +
                        " should be '" + expected[i].name + "', found '" +
                        name + "'");
      Matrix value = matrix_from_json(p, origin, name);
      if (value.rows() != expected[i].rows ||
          value.cols() != expected[i].cols)
        throw DataError(origin + ": parameter '" + name +
                        "' has the wrong shape");
      ck.params.push_back({std::move(name), std::move(value)});
    }

    const ordered_json& adam = require_key(j, "adam", origin);
    ck.adam_step = require_key(adam, "step", origin).get<std::int64_t>();
    ck.adam_config.learning_rate =
        require_key(adam, "learning_rate", origin).get<double>();
    ck.adam_config.beta1 = require_key(adam, "beta1", origin).get<double>();
    ck.adam_config.beta2 = require_key(adam, "beta2", origin).get<double>();
    ck.adam_config.epsilon =
        require_key(adam, "epsilon", origin).get<double>();
    ck.adam_config.weight_decay =
        require_key(adam, "weight_decay", origin).get<double>();
    if (ck.adam_step < 0 || !(ck.adam_config.learning_rate > 0.0) ||
        ck.adam_config.beta1 < 0.0 || ck.adam_config.beta1 >= 1.0 ||
        ck.adam_config.beta2 < 0.0 || ck.adam_config.beta2 >= 1.0 ||
        !(ck.adam_config.epsilon > 0.0) || ck.adam_config.weight_decay < 0.0)
      throw DataError(origin + ": invalid optimizer hyperparameters");
    const ordered_json& am = require_key(adam, "m", origin);
    const ordered_json& av = require_key(adam, "v", origin);
    if (!am.is_array() || !av.is_array() || am.size() != expected.size() ||
        av.size() != expected.size())
      throw DataError(origin + ": optimizer moments must match parameters");
    for (std::size_t i = 0; i < expected.size(); ++i) {
      Matrix m = matrix_from_json(am[i], origin, expected[i].name + " (m)");
      Matrix v = matrix_from_json(av[i], origin, expected[i].name + " (v)");
      if (m.rows() != expected[i].rows || m.cols() != expected[i].cols ||
          v.rows() != expected[i].rows || v.cols() != expected[i].cols)
        throw DataError(origin + ": optimizer moment for '" +
                        expected[i].name + "' has the wrong shape");
      if ((v.array() < 0.0).any())
        throw DataError(origin + ": negative second moment for '" +
                        expected[i].name + "'");
      ck.adam_m.push_back(std::move(m));
      ck.adam_v.push_back(std::move(v));
    }

    const ordered_json& store = require_key(j, "pseudo_labels", origin);
    ck.store.gamma = require_key(store, "gamma", origin).get<double>();
    ck.store.alpha = require_key(store, "alpha", origin).get<double>();
    try {
      ck.store.validate();
    } catch (const ConfigError& e) {
      throw DataError(origin + ": invalid pseudo-label settings: " + e.what());
    }
    const ordered_json& entries = require_key(store, "entries", origin);
    if (!entries.is_array())
      throw DataError(origin + ": pseudo-label entries must be an array");
    for (const auto& e : entries) {
      if (!e.is_array() || e.size() != 3)
        throw DataError(origin + ": pseudo-label entries must be triples");
      auto id = e[0].get<std::int64_t>();
      auto label = e[1].get<int>();
      auto conf = e[2].get<double>();
      if (label < 0 || label >= static_cast<int>(ck.network.cluster_count))
        throw DataError(origin + ": pseudo-label out of range for id " +
                        std::to_string(id));
      if (!(conf >= 0.0 && conf <= 1.0))
        throw DataError(origin + ": pseudo-label confidence out of range");
      if (!ck.store.entries.emplace(id, PseudoLabelEntry{label, conf}).second)
        throw DataError(origin + ": duplicate pseudo-label id " +
                        std::to_string(id));
    }

    ck.rng_state = require_key(j, "rng", origin).get<std::string>();
    if (!ck.rng_state.empty()) {
      try {
        Rng::deserialize(ck.rng_state);
      } catch (const DataError&) {
        throw DataError(origin + ": invalid RNG state");
      }
    }
    ck.epochs_trained =
        require_key(j, "epochs_trained", origin).get<std::int64_t>();
    ck.epochs_boosted =
        require_key(j, "epochs_boosted", origin).get<std::int64_t>();
    if (ck.epochs_trained < 0 || ck.epochs_boosted < 0)
      throw DataError(origin + ": negative epoch counters");
    return ck;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(origin + ": malformed checkpoint field: " + e.what());
  }
}

void save_checkpoint(const Checkpoint& ck, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError(path + ": cannot open for writing");
  out << checkpoint_to_string(ck);
  if (!out) throw DataError(path + ": write failed");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(path + ": cannot open for reading");
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return checkpoint_from_string(buffer.str(), path);
}

Model build_model(const Checkpoint& ck) {
  Model m;
  m.config = ck.network;
  std::size_t i = 0;
  auto take_layer = [&]() {
    LinearLayer layer{Tensor::parameter(ck.params[i].value),
                      Tensor::parameter(ck.params[i + 1].value)};
    i += 2;
    return layer;
  };
  const std::size_t backbone_layers = ck.network.backbone_hidden.size() + 1;
  for (std::size_t l = 0; l < backbone_layers; ++l)
    m.backbone.push_back(take_layer());
  m.ich0 = take_layer();
  m.ich1 = take_layer();
  m.cch0 = take_layer();
  m.cch1 = take_layer();
  return m;
}

// --- streaming -------------------------------------------------------------

StreamSource::StreamSource(const Dataset& ds, std::uint64_t seed)
    : ds_(&ds), rng_(seed) {
  ds.validate();
  order_ = rng_.permutation(ds.n());
}

std::pair<std::int64_t, Vector> StreamSource::next() {
  if (pos_ == order_.size()) {
    order_ = rng_.permutation(ds_->n());
    pos_ = 0;
    ++passes_;
  }
  Index row = order_[pos_++];
  return {ds_->ids[static_cast<std::size_t>(row)],
          Vector(ds_->x.row(row).transpose())};
}

}  // namespace tcl
