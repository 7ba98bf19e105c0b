// pgdvae - command-line front end: data generation, training, sampling,
// evaluation and the pgraph conversion utilities.
//
// Every subcommand that writes a file also writes <output>.manifest.json
// (train: <dir>/manifest.json) with the resolved settings.

#include "pgdvae/checkpoint.hpp"
#include "pgdvae/datagen.hpp"
#include "pgdvae/eval.hpp"
#include "pgdvae/model.hpp"
#include "pgdvae/train.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#ifndef PGDVAE_VERSION
#define PGDVAE_VERSION "unknown"
#endif

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace pgd;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
  out << text;
  out.flush();
  if (!out) throw std::runtime_error("failed writing '" + path.string() + "'");
}

fs::path manifest_path(const fs::path& output) {
  return fs::path(output.string() + ".manifest.json");
}

void write_manifest(const fs::path& path, const std::string& subcommand, json config, json inputs,
                    json outputs, std::optional<std::uint64_t> seed) {
  json j;
  j["subcommand"] = subcommand;
  j["tool_version"] = PGDVAE_VERSION;
  j["seed"] = seed ? json(*seed) : json();
  j["config"] = std::move(config);
  j["inputs"] = std::move(inputs);
  j["outputs"] = std::move(outputs);
  write_text(path, j.dump(2) + "\n");
}

// Emits to --out when given, otherwise to stdout.
void emit(const std::string& out, const std::string& text) {
  if (out.empty()) {
    std::cout << text;
  } else {
    write_text(out, text);
  }
}

std::vector<std::string> read_lines(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path.string() + "'");
  std::vector<std::string> lines;
  for (std::string line; std::getline(in, line);) lines.push_back(line);
  return lines;
}

std::vector<PeriodicGraph> graphs_of(const std::vector<DatasetRecord>& records) {
  std::vector<PeriodicGraph> out;
  out.reserve(records.size());
  for (const auto& r : records) out.push_back(r.graph());
  return out;
}

DatasetRecord record_of(const PeriodicGraph& g, Index padded, std::uint64_t seed) {
  return make_record(std::nullopt, decompose(g, g.n), padded, seed);
}

ModelParams load_params(const fs::path& path) { return load_checkpoint(path).state.params; }

// --- gen-data --------------------------------------------------------------

struct GenDataArgs {
  std::vector<std::string> units{"triangle", "grid", "hexagon"};
  int count = 100;
  Index m_max = 8;
  std::string pattern = "chain";
  std::uint64_t seed = 0;
  std::string out;
};

void run_gen_data(const GenDataArgs& a) {
  DatasetManifest m;
  m.m_max = m.m_high = a.m_max;
  m.global_pattern = parse_global_pattern(a.pattern);
  m.m_low = m.global_pattern == GlobalPattern::cycle ? 3 : 2;
  m.seed = a.seed;
  for (const auto& u : a.units) m.counts[parse_unit_kind(u)] = a.count;
  const auto records = generate_dataset(m);
  save_dataset(a.out, records);
  json config{{"units", a.units},     {"count_per_unit", a.count}, {"n_max", m.n_max},
              {"m_min", m.m_low},     {"m_max", m.m_max},          {"pattern", a.pattern},
              {"records", records.size()}};
  write_manifest(manifest_path(a.out), "gen-data", config, json::object(), {{"dataset", a.out}}, a.seed);
}

// --- train -----------------------------------------------------------------

struct TrainArgs {
  std::string data;
  std::string config;
  std::string out;
  std::string resume;
  std::optional<int> epochs;
  std::optional<std::uint64_t> seed;
};

void run_train(const TrainArgs& a) {
  TrainConfig config = a.config.empty() ? TrainConfig{} : load_train_config(a.config);
  if (a.epochs) config.epochs = *a.epochs;
  if (a.seed) config.seed = *a.seed;
  config.validate();
  const auto dataset = load_dataset(a.data);
  fs::create_directories(a.out);
  TrainOptions options;
  options.out_dir = a.out;
  options.on_epoch = [](const EpochLog& e, const TrainState&) {
    std::cerr << "epoch " << e.epoch << " total " << e.total << " l_rec " << e.l_rec << "\n";
  };
  if (a.resume.empty()) {
    train(config, dataset, options);
  } else {
    resume(a.resume, config, dataset, options);
  }
  json inputs{{"data", a.data}, {"config", a.config.empty() ? json() : json(a.config)}};
  if (!a.resume.empty()) inputs["resume"] = a.resume;
  write_manifest(fs::path(a.out) / "manifest.json", "train", to_json(config), inputs,
                 {{"dir", a.out},
                  {"checkpoint", (fs::path(a.out) / "checkpoint_last.ckpt").string()},
                  {"epoch_log", (fs::path(a.out) / "epoch_log.csv").string()}},
                 config.seed);
}

// --- sample ----------------------------------------------------------------

struct SampleArgs {
  std::string ckpt;
  int count = 100;
  std::string mode = "bernoulli";
  std::uint64_t seed = 0;
  std::string out;
};

void run_sample(const SampleArgs& a) {
  const ModelParams params = load_params(a.ckpt);
  const auto graphs = sample_graphs(params, a.count, parse_sample_mode(a.mode), a.seed);
  const Index padded = params.config.n_max * params.config.m_max;
  std::vector<DatasetRecord> records;
  for (std::size_t i = 0; i < graphs.size(); ++i) {
    records.push_back(record_of(graphs[i], padded, a.seed + i + 1));
  }
  save_dataset(a.out, records);
  write_manifest(manifest_path(a.out), "sample", {{"count", a.count}, {"mode", a.mode}, {"model", to_json(params.config)}},
                 {{"checkpoint", a.ckpt}}, {{"dataset", a.out}}, a.seed);
}

// --- eval ------------------------------------------------------------------

struct EvalArgs {
  std::string ref, gen, train_set, out;
  int bins = 100;
  double smoothing = 1e-10;
};

void run_eval(const EvalArgs& a) {
  const auto ref = graphs_of(load_dataset(a.ref));
  const auto gen = graphs_of(load_dataset(a.gen));
  const auto train_set = graphs_of(load_dataset(a.train_set));
  KldOptions options;
  options.bins = a.bins;
  options.smoothing = a.smoothing;
  write_text(a.out, to_json_string(evaluate(gen, ref, train_set, options)) + "\n");
  write_manifest(manifest_path(a.out), "eval", {{"bins", a.bins}, {"smoothing", a.smoothing}},
                 {{"ref", a.ref}, {"gen", a.gen}, {"train_set", a.train_set}}, {{"report", a.out}},
                 std::nullopt);
}

// --- traverse --------------------------------------------------------------

struct TraverseArgs {
  std::string ckpt;
  std::string latent = "local";
  Index dim = 0;
  std::vector<double> values;
  std::uint64_t seed = 0;
  std::string out;
};

void run_traverse(const TraverseArgs& a) {
  const ModelParams params = load_params(a.ckpt);
  // the frozen point is one prior draw
  std::mt19937_64 rng(a.seed);
  const LatentPair base = sample_prior(params.config, rng);
  const auto steps = latent_traversal(params, base, parse_latent_kind(a.latent), a.dim, a.values);

  const Index padded = params.config.n_max * params.config.m_max;
  std::vector<DatasetRecord> records;
  std::ostringstream table;
  table << "step,value,n,m,clustering,density\n";
  for (std::size_t i = 0; i < steps.size(); ++i) {
    const auto& s = steps[i];
    records.push_back(make_record(std::nullopt, s.decomposition, padded, a.seed));
    table << i << ',' << s.value << ',' << s.graph.n << ',' << s.graph.m << ',' << s.clustering << ','
          << s.density << '\n';
  }
  save_dataset(a.out, records);
  const std::string steps_path = a.out + ".steps.csv";
  write_text(steps_path, table.str());
  write_manifest(manifest_path(a.out), "traverse",
                 {{"latent", a.latent}, {"dim", a.dim}, {"values", a.values}}, {{"checkpoint", a.ckpt}},
                 {{"dataset", a.out}, {"steps", steps_path}}, a.seed);
}

// --- decompose / assemble --------------------------------------------------

struct ConvertArgs {
  std::string in;
  std::string out;
  Index n = 0;
  Index pad_to = 0;
};

std::string convert(const ConvertArgs& a, bool decomposing) {
  std::ostringstream out;
  const auto lines = read_lines(a.in);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    if (lines[i].empty()) continue;
    const std::size_t number = i + 1;
    try {
      const PartialRecord p = parse_partial_record(lines[i], number);
      Decomposition d;
      Index padded = 0;
      if (decomposing) {
        if (!p.adjacency) throw DatasetFormatError(number, "missing A");
        PeriodicGraph g;
        g.adjacency = *p.adjacency;
        if (p.m && *p.m * a.n <= g.adjacency.rows()) {
          g.n = a.n;
          g.m = *p.m;
        }
        d = decompose(g, a.n);
        padded = g.adjacency.rows();
      } else {
        if (!p.local || !p.global || !p.neighborhood) throw DatasetFormatError(number, "missing A_l, A_g or A_n");
        d = Decomposition{*p.local, *p.global, *p.neighborhood};
        padded = std::max(a.pad_to, d.n() * d.m());
      }
      out << serialize_record(make_record(p.unit_kind, std::move(d), padded)) << '\n';
    } catch (const DatasetFormatError&) {
      throw;
    } catch (const std::exception& e) {
      throw DatasetFormatError(number, e.what());
    }
  }
  return out.str();
}

void run_convert(const ConvertArgs& a, bool decomposing) {
  emit(a.out, convert(a, decomposing));
  if (!a.out.empty()) {
    json config = decomposing ? json{{"n", a.n}} : json{{"pad", a.pad_to}};
    write_manifest(manifest_path(a.out), decomposing ? "decompose" : "assemble", config, {{"in", a.in}},
                   {{"dataset", a.out}}, std::nullopt);
  }
}

// --- bfs-stability ---------------------------------------------------------

struct StabilityArgs {
  std::string data;
  int perms = 20;
  std::uint64_t seed = 0;
  std::string out;
};

void run_bfs_stability(const StabilityArgs& a) {
  const auto graphs = graphs_of(load_dataset(a.data));
  const BfsStability s = bfs_stability(graphs, a.perms, a.seed);
  std::ostringstream table;
  table << "ordering,spearman,kendall\n"
        << "bfs," << s.spearman_bfs << ',' << s.kendall_bfs << '\n'
        << "random," << s.spearman_random << ',' << s.kendall_random << '\n';
  emit(a.out, table.str());
  if (!a.out.empty()) {
    write_manifest(manifest_path(a.out), "bfs-stability", {{"perms", a.perms}}, {{"data", a.data}},
                   {{"table", a.out}}, a.seed);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Periodic graph disentangled VAE: data, training, sampling and evaluation"};
  app.set_version_flag("--version", std::string(PGDVAE_VERSION));
  app.require_subcommand(1);

  GenDataArgs gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "Generate a synthetic periodic-graph dataset");
  gen_cmd->add_option("--units", gen.units, "Unit kinds")->delimiter(',')->capture_default_str();
  gen_cmd->add_option("--count-per-unit", gen.count, "Graphs per unit kind")->capture_default_str();
  gen_cmd->add_option("--m-max", gen.m_max, "Largest unit count (also the padding bound)")->capture_default_str();
  gen_cmd->add_option("--pattern", gen.pattern, "Global pattern")
      ->check(CLI::IsMember({"chain", "cycle"}))
      ->capture_default_str();
  gen_cmd->add_option("--seed", gen.seed, "Generator seed")->capture_default_str();
  gen_cmd->add_option("--out", gen.out, "Output dataset file")->required();

  TrainArgs tr;
  auto* train_cmd = app.add_subcommand("train", "Train a model");
  train_cmd->add_option("--data", tr.data, "Training dataset")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--config", tr.config, "JSON training config")->check(CLI::ExistingFile);
  train_cmd->add_option("--out", tr.out, "Output directory")->required();
  train_cmd->add_option("--resume", tr.resume, "Checkpoint to continue from")->check(CLI::ExistingFile);
  train_cmd->add_option("--epochs", tr.epochs, "Overrides the config epoch count");
  train_cmd->add_option("--seed", tr.seed, "Overrides the config seed");

  SampleArgs sa;
  auto* sample_cmd = app.add_subcommand("sample", "Sample graphs from the prior");
  sample_cmd->add_option("--ckpt", sa.ckpt, "Checkpoint")->required()->check(CLI::ExistingFile);
  sample_cmd->add_option("--count", sa.count, "Number of graphs")->capture_default_str()->check(CLI::NonNegativeNumber);
  sample_cmd->add_option("--mode", sa.mode, "Binarization")
      ->check(CLI::IsMember({"threshold", "bernoulli"}))
      ->capture_default_str();
  sample_cmd->add_option("--seed", sa.seed, "Sampling seed")->capture_default_str();
  sample_cmd->add_option("--out", sa.out, "Output dataset file")->required();

  EvalArgs ev;
  auto* eval_cmd = app.add_subcommand("eval", "KLD, uniqueness and novelty of generated graphs");
  eval_cmd->add_option("--ref", ev.ref, "Reference dataset")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--gen", ev.gen, "Generated dataset")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--train-set", ev.train_set, "Training dataset")->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--out", ev.out, "Report file")->required();
  eval_cmd->add_option("--bins", ev.bins, "Histogram bins")->capture_default_str()->check(CLI::PositiveNumber);
  eval_cmd->add_option("--smoothing", ev.smoothing, "Histogram smoothing")->capture_default_str();

  TraverseArgs tv;
  auto* traverse_cmd = app.add_subcommand("traverse", "Sweep one latent coordinate");
  traverse_cmd->add_option("--ckpt", tv.ckpt, "Checkpoint")->required()->check(CLI::ExistingFile);
  traverse_cmd->add_option("--latent", tv.latent, "Latent to sweep")
      ->check(CLI::IsMember({"local", "global"}))
      ->capture_default_str();
  traverse_cmd->add_option("--dim", tv.dim, "Coordinate")->capture_default_str();
  traverse_cmd->add_option("--values", tv.values, "Comma-separated values")->delimiter(',')->required();
  traverse_cmd->add_option("--seed", tv.seed, "Seed of the frozen prior draw")->capture_default_str();
  traverse_cmd->add_option("--out", tv.out, "Output dataset file")->required();

  ConvertArgs dec;
  auto* decompose_cmd = app.add_subcommand("decompose", "Recover (A_l, A_g, A_n) from adjacency records");
  decompose_cmd->add_option("--in", dec.in, "Records with A")->required()->check(CLI::ExistingFile);
  decompose_cmd->add_option("--n", dec.n, "Unit size")->required()->check(CLI::PositiveNumber);
  decompose_cmd->add_option("--out", dec.out, "Output file (default stdout)");

  ConvertArgs asm_;
  auto* assemble_cmd = app.add_subcommand("assemble", "Build adjacency records from (A_l, A_g, A_n)");
  assemble_cmd->add_option("--in", asm_.in, "Records with A_l, A_g, A_n")->required()->check(CLI::ExistingFile);
  assemble_cmd->add_option("--pad", asm_.pad_to, "Zero-pad A to this size")->check(CLI::NonNegativeNumber);
  assemble_cmd->add_option("--out", asm_.out, "Output file (default stdout)");

  StabilityArgs st;
  auto* stability_cmd = app.add_subcommand("bfs-stability", "Rank stability of BFS vs random orderings");
  stability_cmd->add_option("--data", st.data, "Dataset")->required()->check(CLI::ExistingFile);
  stability_cmd->add_option("--perms", st.perms, "Permutations per graph")->capture_default_str();
  stability_cmd->add_option("--seed", st.seed, "Seed")->capture_default_str();
  stability_cmd->add_option("--out", st.out, "Output table (default stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "pgdvae: error: " << e.what() << "\n";
    return e.get_exit_code() == 0 ? 2 : e.get_exit_code();
  }

  try {
    if (*gen_cmd) run_gen_data(gen);
    if (*train_cmd) run_train(tr);
    if (*sample_cmd) run_sample(sa);
    if (*eval_cmd) run_eval(ev);
    if (*traverse_cmd) run_traverse(tv);
    if (*decompose_cmd) run_convert(dec, true);
    if (*assemble_cmd) run_convert(asm_, false);
    if (*stability_cmd) run_bfs_stability(st);
  } catch (const std::exception& e) {
    std::string what = e.what();
    for (char& c : what) {
      if (c == '\n') c = ' ';
    }
    std::cerr << "pgdvae: error: " << what << "\n";
    return 1;
  }
  return 0;
}
