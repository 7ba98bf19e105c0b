// datagen.hpp - synthetic periodic-graph datasets and their line-delimited file format.

#ifndef PGDVAE_DATAGEN_HPP
#define PGDVAE_DATAGEN_HPP

#include "pgdvae/pgraph.hpp"

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace pgd {

enum class GlobalPattern { chain, cycle };

std::string_view to_string(GlobalPattern pattern);
GlobalPattern parse_global_pattern(std::string_view name);

struct DatasetRecord {
  std::optional<UnitKind> unit_kind;  // empty for generated samples
  Decomposition decomposition;
  BinaryMatrix adjacency;  // assemble(decomposition) zero-padded
  std::uint64_t seed = 0;

  Index n() const { return decomposition.n(); }
  Index m() const { return decomposition.m(); }
  PeriodicGraph graph() const;
};

struct DatasetManifest {
  Index n_max = 6;
  Index m_max = 8;  // padding bound
  Index m_low = 2;  // unit counts drawn uniformly from [m_low, m_high]
  Index m_high = 8;
  std::map<UnitKind, int> counts;
  GlobalPattern global_pattern = GlobalPattern::chain;
  std::uint64_t seed = 0;
};

BinaryMatrix make_unit(UnitKind kind);
BinaryMatrix make_global(GlobalPattern pattern, Index m);
BinaryMatrix make_neighborhood(UnitKind kind);

DatasetRecord make_record(std::optional<UnitKind> kind, Decomposition d, Index padded_size,
                          std::uint64_t seed = 0);

std::vector<DatasetRecord> generate_dataset(const DatasetManifest& manifest);

/// Raised for malformed dataset lines; `line()` is 1-based.
class DatasetFormatError : public std::runtime_error {
 public:
  DatasetFormatError(std::size_t line, const std::string& what);
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

/// Record with any subset of fields present; used by conversion utilities.
struct PartialRecord {
  std::optional<UnitKind> unit_kind;
  std::optional<Index> n;
  std::optional<Index> m;
  std::optional<BinaryMatrix> local;
  std::optional<BinaryMatrix> global;
  std::optional<BinaryMatrix> neighborhood;
  std::optional<BinaryMatrix> adjacency;
};

PartialRecord parse_partial_record(const std::string& line, std::size_t line_number = 1);

std::string serialize_record(const DatasetRecord& record);
DatasetRecord parse_record(const std::string& line, std::size_t line_number = 1);

void write_dataset(std::ostream& out, const std::vector<DatasetRecord>& records);
std::vector<DatasetRecord> read_dataset(std::istream& in);

void save_dataset(const std::filesystem::path& path, const std::vector<DatasetRecord>& records);
std::vector<DatasetRecord> load_dataset(const std::filesystem::path& path);

}  // namespace pgd

#endif  // PGDVAE_DATAGEN_HPP
