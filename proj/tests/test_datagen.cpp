#include <doctest.h>

#include "pgdvae/datagen.hpp"
#include "test_support.hpp"

#include <filesystem>
#include <set>
#include <sstream>

using namespace pgd;

namespace {

DatasetManifest small_manifest(std::uint64_t seed = 7) {
  DatasetManifest m;
  m.counts = {{UnitKind::triangle, 4}, {UnitKind::grid, 4}, {UnitKind::hexagon, 4}};
  m.seed = seed;
  return m;
}

std::string dump(const std::vector<DatasetRecord>& records) {
  std::ostringstream out;
  write_dataset(out, records);
  return out.str();
}

bool same_record(const DatasetRecord& a, const DatasetRecord& b) {
  return a.unit_kind == b.unit_kind && a.decomposition == b.decomposition &&
         a.adjacency == b.adjacency && a.seed == b.seed;
}

std::filesystem::path scratch(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "pgdvae_tests";
  std::filesystem::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST_SUITE("datagen") {

TEST_CASE("unit patterns") {
  CHECK(make_unit(UnitKind::triangle) == test::mat({{0, 1, 1}, {1, 0, 1}, {1, 1, 0}}));
  const BinaryMatrix grid = make_unit(UnitKind::grid);
  CHECK(grid == test::cycle(4));
  PeriodicGraph g;
  g.adjacency = grid;
  CHECK(density(g) == doctest::Approx(4.0 / 6.0));
  g.adjacency = make_unit(UnitKind::hexagon);
  CHECK(g.adjacency.rows() == 6);
  CHECK(avg_clustering(g) == 0.0);
}

TEST_CASE("global patterns") {
  CHECK(make_global(GlobalPattern::chain, 3) == test::mat({{0, 1, 0}, {1, 0, 1}, {0, 1, 0}}));
  CHECK(make_global(GlobalPattern::cycle, 3) == test::cycle(3));
  CHECK(make_global(GlobalPattern::chain, 1) == BinaryMatrix::Zero(1, 1));
  CHECK_THROWS_AS(make_global(GlobalPattern::cycle, 2), std::invalid_argument);
  CHECK_THROWS_AS(make_global(GlobalPattern::chain, 0), std::invalid_argument);
  CHECK(parse_global_pattern("cycle") == GlobalPattern::cycle);
  CHECK_THROWS(parse_global_pattern("ring"));
}

TEST_CASE("neighborhood patterns") {
  for (auto [kind, n] : {std::pair{UnitKind::triangle, 3}, {UnitKind::grid, 4}, {UnitKind::hexagon, 6}}) {
    const BinaryMatrix a = make_neighborhood(kind);
    CHECK(a.rows() == n);
    CHECK(a.sum() == 1);
    CHECK(a(n - 1, 0) == 1);
  }
}

TEST_CASE("generate: fixed m gives n*m sizes") {
  DatasetManifest m;
  m.counts = {{UnitKind::triangle, 1}, {UnitKind::grid, 1}, {UnitKind::hexagon, 1}};
  m.m_low = m.m_high = 2;
  const auto records = generate_dataset(m);
  REQUIRE(records.size() == 3);
  std::multiset<Index> sizes;
  for (const auto& r : records) {
    sizes.insert(r.n() * r.m());
    CHECK(r.adjacency.rows() == 48);
  }
  CHECK(sizes == std::multiset<Index>{6, 8, 12});

  for (const auto& r : records) {
    if (r.unit_kind == UnitKind::triangle) {
      CHECK(avg_clustering(r.graph()) == doctest::Approx(14.0 / 18.0));
    }
  }
}

TEST_CASE("generate: determinism and seed sensitivity") {
  CHECK(dump(generate_dataset(small_manifest())) == dump(generate_dataset(small_manifest())));
  CHECK(dump(generate_dataset(small_manifest(7))) != dump(generate_dataset(small_manifest(8))));
}

TEST_CASE("generate: periodicity, label fidelity and m range") {
  auto manifest = small_manifest();
  manifest.counts = {{UnitKind::triangle, 30}, {UnitKind::grid, 30}, {UnitKind::hexagon, 30}};
  std::set<Index> seen_m;
  for (const auto& r : generate_dataset(manifest)) {
    REQUIRE(r.unit_kind.has_value());
    const PeriodicGraph g = r.graph();
    CHECK(is_periodic(g, r.n()));
    CHECK(decompose(g, r.n()).local == make_unit(*r.unit_kind));
    CHECK(r.m() >= manifest.m_low);
    CHECK(r.m() <= manifest.m_high);
    seen_m.insert(r.m());
  }
  CHECK(seen_m.size() == 7);
}

TEST_CASE("generate: cycle pattern") {
  auto manifest = small_manifest();
  manifest.global_pattern = GlobalPattern::cycle;
  CHECK_THROWS_AS(generate_dataset(manifest), std::invalid_argument);
  manifest.m_low = 3;
  for (const auto& r : generate_dataset(manifest)) {
    CHECK(r.decomposition.global == make_global(GlobalPattern::cycle, r.m()));
  }
}

TEST_CASE("generate: manifest validation") {
  auto manifest = small_manifest();
  manifest.m_high = 9;
  CHECK_THROWS_AS(generate_dataset(manifest), std::invalid_argument);
  manifest = small_manifest();
  manifest.n_max = 4;
  CHECK_THROWS_AS(generate_dataset(manifest), std::invalid_argument);
  manifest = small_manifest();
  manifest.counts[UnitKind::grid] = 0;
  CHECK_THROWS_AS(generate_dataset(manifest), std::invalid_argument);
}

TEST_CASE("serialization roundtrip") {
  const auto records = generate_dataset(small_manifest());
  std::istringstream in(dump(records));
  const auto back = read_dataset(in);
  REQUIRE(back.size() == records.size());
  for (std::size_t i = 0; i < records.size(); ++i) CHECK(same_record(records[i], back[i]));

  const auto path = scratch("roundtrip.jsonl");
  save_dataset(path, records);
  const auto loaded = load_dataset(path);
  REQUIRE(loaded.size() == records.size());
  CHECK(dump(loaded) == dump(records));

  const DatasetRecord tri = make_record(UnitKind::triangle, test::two_triangles(), 48, 3);
  CHECK(same_record(parse_record(serialize_record(tri)), tri));

  const DatasetRecord unlabeled = make_record(std::nullopt, test::two_triangles(), 6);
  CHECK(serialize_record(unlabeled).find("\"unit_kind\":null") != std::string::npos);
  CHECK_FALSE(parse_record(serialize_record(unlabeled)).unit_kind.has_value());
}

TEST_CASE("empty dataset") {
  const auto path = scratch("empty.jsonl");
  save_dataset(path, {});
  CHECK(std::filesystem::file_size(path) == 0);
  CHECK(load_dataset(path).empty());
}

TEST_CASE("parse errors name the line") {
  const std::string good = serialize_record(make_record(UnitKind::triangle, test::two_triangles(), 6));

  auto error_of = [](const std::string& text) -> std::string {
    std::istringstream in(text);
    try {
      read_dataset(in);
    } catch (const DatasetFormatError& e) {
      return e.what();
    }
    return "";
  };

  // Drop the last entry of the first A_l row.
  std::string truncated = good;
  const auto at = truncated.find("\"A_l\":[[0,1,1]");
  REQUIRE(at != std::string::npos);
  truncated.replace(at, 14, "\"A_l\":[[0,1]");
  const std::string msg = error_of(good + "\n" + truncated + "\n");
  CHECK(msg.find("line 2") == 0);
  CHECK(msg.find("row 0 has 2 entries") != std::string::npos);

  CHECK(error_of("{not json\n").find("line 1") == 0);
  CHECK(error_of(good + "\n\n[1,2]\n").find("line 3") == 0);

  std::string wrong_n = good;
  wrong_n.replace(wrong_n.find("\"n\":3"), 5, "\"n\":4");
  CHECK(error_of(wrong_n).find("declared n=4") != std::string::npos);

  std::string bad_entry = good;
  bad_entry.replace(bad_entry.find("\"A_l\":[[0,1,1]"), 14, "\"A_l\":[[0,2,1]");
  CHECK(error_of(bad_entry).find("non-0/1") != std::string::npos);

  std::string inconsistent = good;
  inconsistent.replace(inconsistent.find("\"A_n\":[[1,0,0]"), 14, "\"A_n\":[[0,1,0]");
  CHECK(error_of(inconsistent).find("inconsistent") != std::string::npos);
}

}  // TEST_SUITE
