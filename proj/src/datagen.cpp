#include "pgdvae/datagen.hpp"

#include <json.hpp>

#include <fstream>
#include <random>
#include <sstream>

namespace pgd {

using json = nlohmann::ordered_json;

std::string_view to_string(GlobalPattern pattern) {
  return pattern == GlobalPattern::chain ? "chain" : "cycle";
}

GlobalPattern parse_global_pattern(std::string_view name) {
  if (name == "chain") return GlobalPattern::chain;
  if (name == "cycle") return GlobalPattern::cycle;
  throw std::invalid_argument("unknown global pattern '" + std::string(name) + "'");
}

PeriodicGraph DatasetRecord::graph() const {
  PeriodicGraph g;
  g.adjacency = adjacency;
  g.unit_label = unit_kind;
  g.n = n();
  g.m = m();
  return g;
}

namespace {

BinaryMatrix cycle_graph(Index k) {
  BinaryMatrix a = BinaryMatrix::Zero(k, k);
  for (Index i = 0; i < k; ++i) {
    const Index j = (i + 1) % k;
    a(i, j) = a(j, i) = 1;
  }
  return a;
}

}  // namespace

BinaryMatrix make_unit(UnitKind kind) {
  switch (kind) {
    case UnitKind::triangle: return cycle_graph(3);
    case UnitKind::grid: return cycle_graph(4);
    case UnitKind::hexagon: return cycle_graph(6);
  }
  throw std::invalid_argument("make_unit: invalid kind");
}

BinaryMatrix make_global(GlobalPattern pattern, Index m) {
  if (m < 1) throw std::invalid_argument("make_global: m must be positive");
  if (pattern == GlobalPattern::cycle) {
    if (m < 3) throw std::invalid_argument("make_global: cycle pattern needs m >= 3");
    return cycle_graph(m);
  }
  BinaryMatrix a = BinaryMatrix::Zero(m, m);
  for (Index i = 0; i + 1 < m; ++i) a(i, i + 1) = a(i + 1, i) = 1;
  return a;
}

BinaryMatrix make_neighborhood(UnitKind kind) {
  const Index n = make_unit(kind).rows();
  BinaryMatrix a = BinaryMatrix::Zero(n, n);
  a(n - 1, 0) = 1;
  return a;
}

DatasetRecord make_record(std::optional<UnitKind> kind, Decomposition d, Index padded_size,
                          std::uint64_t seed) {
  DatasetRecord r;
  r.unit_kind = kind;
  r.adjacency = pad(assemble(d).adjacency, padded_size);
  r.decomposition = std::move(d);
  r.seed = seed;
  return r;
}

std::vector<DatasetRecord> generate_dataset(const DatasetManifest& manifest) {
  if (manifest.m_low < 1 || manifest.m_low > manifest.m_high) {
    throw std::invalid_argument("generate_dataset: invalid unit-count range");
  }
  if (manifest.m_high > manifest.m_max) {
    throw std::invalid_argument("generate_dataset: unit-count range exceeds m_max");
  }
  if (manifest.global_pattern == GlobalPattern::cycle && manifest.m_low < 3) {
    throw std::invalid_argument("generate_dataset: cycle pattern needs m >= 3");
  }
  const Index padded = manifest.n_max * manifest.m_max;

  std::vector<DatasetRecord> records;
  std::uint64_t index = 0;
  for (const auto& [kind, count] : manifest.counts) {
    if (count < 1) throw std::invalid_argument("generate_dataset: counts must be >= 1");
    const BinaryMatrix unit = make_unit(kind);
    if (unit.rows() > manifest.n_max) {
      throw std::invalid_argument("generate_dataset: unit '" + std::string(to_string(kind)) +
                                  "' exceeds n_max");
    }
    for (int i = 0; i < count; ++i, ++index) {
      std::seed_seq seq{static_cast<std::uint32_t>(manifest.seed),
                        static_cast<std::uint32_t>(manifest.seed >> 32),
                        static_cast<std::uint32_t>(index)};
      std::mt19937_64 rng(seq);
      const std::uint64_t record_seed = rng();
      std::uniform_int_distribution<Index> pick(manifest.m_low, manifest.m_high);
      const Index m = pick(rng);
      Decomposition d{unit, make_global(manifest.global_pattern, m), make_neighborhood(kind)};
      records.push_back(make_record(kind, std::move(d), padded, record_seed));
    }
  }
  return records;
}

DatasetFormatError::DatasetFormatError(std::size_t line, const std::string& what)
    : std::runtime_error("line " + std::to_string(line) + ": " + what), line_(line) {}

namespace {

json to_json(const BinaryMatrix& a) {
  json rows = json::array();
  for (Index i = 0; i < a.rows(); ++i) {
    json row = json::array();
    for (Index j = 0; j < a.cols(); ++j) row.push_back(a(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

BinaryMatrix matrix_from_json(const json& value, const char* name, std::size_t line) {
  if (!value.is_array()) throw DatasetFormatError(line, std::string(name) + " is not an array");
  const auto rows = static_cast<Index>(value.size());
  Index cols = rows == 0 ? 0 : -1;
  BinaryMatrix a(rows, rows);
  for (Index i = 0; i < rows; ++i) {
    const json& row = value[static_cast<std::size_t>(i)];
    if (!row.is_array()) {
      throw DatasetFormatError(line, std::string(name) + " row " + std::to_string(i) +
                                         " is not an array");
    }
    if (cols < 0) cols = static_cast<Index>(row.size());
    if (static_cast<Index>(row.size()) != cols || cols != rows) {
      throw DatasetFormatError(line, std::string(name) + " row " + std::to_string(i) + " has " +
                                         std::to_string(row.size()) + " entries, expected " +
                                         std::to_string(rows));
    }
    for (Index j = 0; j < cols; ++j) {
      const json& x = row[static_cast<std::size_t>(j)];
      if (!x.is_number_integer() || (x.get<int>() != 0 && x.get<int>() != 1)) {
        throw DatasetFormatError(line, std::string(name) + " has a non-0/1 entry at (" +
                                           std::to_string(i) + "," + std::to_string(j) + ")");
      }
      a(i, j) = x.get<int>();
    }
  }
  return a;
}

json parse_object(const std::string& line, std::size_t line_number) {
  json obj;
  try {
    obj = json::parse(line);
  } catch (const json::parse_error& e) {
    throw DatasetFormatError(line_number, std::string("malformed record: ") + e.what());
  }
  if (!obj.is_object()) throw DatasetFormatError(line_number, "record is not an object");
  return obj;
}

}  // namespace

PartialRecord parse_partial_record(const std::string& line, std::size_t line_number) {
  const json obj = parse_object(line, line_number);
  PartialRecord r;
  try {
    if (obj.contains("unit_kind") && !obj["unit_kind"].is_null()) {
      r.unit_kind = parse_unit_kind(obj["unit_kind"].get<std::string>());
    }
    if (obj.contains("n")) r.n = obj["n"].get<Index>();
    if (obj.contains("m")) r.m = obj["m"].get<Index>();
  } catch (const DatasetFormatError&) {
    throw;
  } catch (const std::exception& e) {
    throw DatasetFormatError(line_number, e.what());
  }
  if (obj.contains("A_l")) r.local = matrix_from_json(obj["A_l"], "A_l", line_number);
  if (obj.contains("A_g")) r.global = matrix_from_json(obj["A_g"], "A_g", line_number);
  if (obj.contains("A_n")) r.neighborhood = matrix_from_json(obj["A_n"], "A_n", line_number);
  if (obj.contains("A")) r.adjacency = matrix_from_json(obj["A"], "A", line_number);
  return r;
}

std::string serialize_record(const DatasetRecord& record) {
  json obj;
  obj["unit_kind"] = record.unit_kind ? json(std::string(to_string(*record.unit_kind))) : json();
  obj["n"] = record.n();
  obj["m"] = record.m();
  obj["A_l"] = to_json(record.decomposition.local);
  obj["A_g"] = to_json(record.decomposition.global);
  obj["A_n"] = to_json(record.decomposition.neighborhood);
  obj["A"] = to_json(record.adjacency);
  obj["seed"] = record.seed;
  return obj.dump();
}

DatasetRecord parse_record(const std::string& line, std::size_t line_number) {
  const PartialRecord p = parse_partial_record(line, line_number);
  if (!p.n || !p.m) throw DatasetFormatError(line_number, "missing n or m");
  if (!p.local || !p.global || !p.neighborhood || !p.adjacency) {
    throw DatasetFormatError(line_number, "missing one of A_l, A_g, A_n, A");
  }
  const Index n = *p.n;
  const Index m = *p.m;
  if (p.local->rows() != n || p.neighborhood->rows() != n) {
    throw DatasetFormatError(line_number, "A_l/A_n size does not match declared n=" +
                                              std::to_string(n));
  }
  if (p.global->rows() != m) {
    throw DatasetFormatError(line_number, "A_g size does not match declared m=" +
                                              std::to_string(m));
  }
  if (p.adjacency->rows() < n * m) {
    throw DatasetFormatError(line_number, "A is smaller than n*m=" + std::to_string(n * m));
  }

  DatasetRecord r;
  r.unit_kind = p.unit_kind;
  r.decomposition = Decomposition{*p.local, *p.global, *p.neighborhood};
  r.adjacency = *p.adjacency;
  const json obj = json::parse(line);
  if (obj.contains("seed")) r.seed = obj["seed"].get<std::uint64_t>();
  try {
    if (pad(assemble(r.decomposition).adjacency, r.adjacency.rows()) != r.adjacency) {
      throw DatasetFormatError(line_number, "A is inconsistent with (A_l, A_g, A_n)");
    }
  } catch (const DatasetFormatError&) {
    throw;
  } catch (const std::exception& e) {
    throw DatasetFormatError(line_number, e.what());
  }
  return r;
}

void write_dataset(std::ostream& out, const std::vector<DatasetRecord>& records) {
  for (const auto& r : records) out << serialize_record(r) << '\n';
}

std::vector<DatasetRecord> read_dataset(std::istream& in) {
  std::vector<DatasetRecord> records;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.empty()) continue;
    records.push_back(parse_record(line, number));
  }
  return records;
}

void save_dataset(const std::filesystem::path& path, const std::vector<DatasetRecord>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  write_dataset(out, records);
  if (!out) throw std::runtime_error("failed writing '" + path.string() + "'");
}

std::vector<DatasetRecord> load_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path.string() + "'");
  return read_dataset(in);
}

}  // namespace pgd
