#include "pgdvae/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <set>

namespace pgd {

using json = nlohmann::ordered_json;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little-endian");

namespace {

constexpr char kMagic[8] = {'P', 'G', 'D', 'V', 'A', 'E', 'C', 'K'};

template <typename T>
void overlay(const json& j, const char* key, T& field) {
  if (j.contains(key)) field = j.at(key).get<T>();
}

void reject_unknown(const json& j, std::initializer_list<const char*> keys, const std::string& where) {
  if (!j.is_object()) throw std::invalid_argument("config: '" + where + "' must be an object");
  std::set<std::string> allowed(keys.begin(), keys.end());
  for (const auto& [key, value] : j.items()) {
    if (!allowed.count(key)) {
      throw std::invalid_argument("config: unknown key '" + where + (where.empty() ? "" : ".") + key + "'");
    }
  }
}

}  // namespace

json to_json(const ModelConfig& c) {
  return json{{"gin_layers", c.gin_layers}, {"clusters", c.clusters},
              {"local_dim", c.local_dim},   {"global_dim", c.global_dim},
              {"hidden", c.hidden},         {"n_max", c.n_max},
              {"m_max", c.m_max}};
}

json to_json(const TrainConfig& c) {
  json j;
  j["model"] = to_json(c.model);
  j["loss"] = json{{"beta_local", c.loss.beta_local},
                   {"beta_global", c.loss.beta_global},
                   {"beta_contra", c.loss.beta_contra},
                   {"temperature", c.loss.temperature},
                   {"include_self_pairs", c.loss.include_self_pairs}};
  j["optimizer"] = json{{"learning_rate", c.learning_rate},
                        {"moment1", c.moment1},
                        {"moment2", c.moment2},
                        {"epsilon", c.adam_epsilon}};
  j["train"] = json{{"epochs", c.epochs},
                    {"batch_size", c.batch_size},
                    {"seed", c.seed},
                    {"checkpoint_every", c.checkpoint_every},
                    {"stratify", c.stratify}};
  return j;
}

ModelConfig model_config_from_json(const json& j, ModelConfig c) {
  reject_unknown(j, {"gin_layers", "clusters", "local_dim", "global_dim", "hidden", "n_max", "m_max"},
                 "model");
  overlay(j, "gin_layers", c.gin_layers);
  overlay(j, "clusters", c.clusters);
  overlay(j, "local_dim", c.local_dim);
  overlay(j, "global_dim", c.global_dim);
  overlay(j, "hidden", c.hidden);
  overlay(j, "n_max", c.n_max);
  overlay(j, "m_max", c.m_max);
  return c;
}

TrainConfig train_config_from_json(const json& j, TrainConfig c) {
  try {
    reject_unknown(j, {"model", "loss", "optimizer", "train"}, "");
    if (j.contains("model")) c.model = model_config_from_json(j["model"], c.model);
    if (j.contains("loss")) {
      const json& l = j["loss"];
      reject_unknown(l, {"beta_local", "beta_global", "beta_contra", "temperature", "include_self_pairs"},
                     "loss");
      overlay(l, "beta_local", c.loss.beta_local);
      overlay(l, "beta_global", c.loss.beta_global);
      overlay(l, "beta_contra", c.loss.beta_contra);
      overlay(l, "temperature", c.loss.temperature);
      overlay(l, "include_self_pairs", c.loss.include_self_pairs);
    }
    if (j.contains("optimizer")) {
      const json& o = j["optimizer"];
      reject_unknown(o, {"learning_rate", "moment1", "moment2", "epsilon"}, "optimizer");
      overlay(o, "learning_rate", c.learning_rate);
      overlay(o, "moment1", c.moment1);
      overlay(o, "moment2", c.moment2);
      overlay(o, "epsilon", c.adam_epsilon);
    }
    if (j.contains("train")) {
      const json& t = j["train"];
      reject_unknown(t, {"epochs", "batch_size", "seed", "checkpoint_every", "stratify"}, "train");
      overlay(t, "epochs", c.epochs);
      overlay(t, "batch_size", c.batch_size);
      overlay(t, "seed", c.seed);
      overlay(t, "checkpoint_every", c.checkpoint_every);
      overlay(t, "stratify", c.stratify);
    }
  } catch (const json::exception& e) {
    throw std::invalid_argument(std::string("config: ") + e.what());
  }
  return c;
}

TrainConfig load_train_config(const std::filesystem::path& path, TrainConfig base) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config '" + path.string() + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw std::invalid_argument("config '" + path.string() + "': " + e.what());
  }
  return train_config_from_json(j, base);
}

void save_checkpoint(const std::filesystem::path& path, const TrainState& state,
                     const TrainConfig& config) {
  struct Entry {
    const MatrixXd* value;
    std::string name;
    const char* group;
  };
  std::vector<Entry> entries;
  for (const auto& shape : parameter_layout(state.params.config)) {
    entries.push_back({&state.params.at(shape.name), shape.name, "param"});
    entries.push_back({&state.optimizer.first.at(shape.name), shape.name, "adam_m"});
    entries.push_back({&state.optimizer.second.at(shape.name), shape.name, "adam_v"});
  }

  json header;
  header["format"] = "pgdvae-checkpoint";
  header["version"] = 1;
  header["model"] = to_json(state.params.config);
  header["train_config"] = to_json(config);
  header["epoch"] = state.epoch;
  header["optimizer_step"] = state.optimizer.step;
  json index = json::array();
  std::uint64_t offset = 0;
  for (const auto& e : entries) {
    index.push_back(json{{"name", e.name},
                         {"group", e.group},
                         {"rows", e.value->rows()},
                         {"cols", e.value->cols()},
                         {"offset", offset}});
    offset += static_cast<std::uint64_t>(e.value->size());
  }
  header["tensors"] = std::move(index);
  const std::string text = header.dump();

  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open '" + tmp.string() + "' for writing");
    out.write(kMagic, sizeof kMagic);
    const std::uint64_t length = text.size();
    out.write(reinterpret_cast<const char*>(&length), sizeof length);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& e : entries) {
      const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> rm = *e.value;
      out.write(reinterpret_cast<const char*>(rm.data()),
                static_cast<std::streamsize>(rm.size() * sizeof(double)));
    }
    if (!out) throw std::runtime_error("failed writing checkpoint '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint '" + path.string() + "'");
  char magic[8];
  std::uint64_t length = 0;
  in.read(magic, sizeof magic);
  in.read(reinterpret_cast<char*>(&length), sizeof length);
  if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0 || length > (1u << 26)) {
    throw std::runtime_error("'" + path.string() + "' is not a checkpoint");
  }
  std::string text(length, '\0');
  in.read(text.data(), static_cast<std::streamsize>(length));
  std::vector<char> payload((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (payload.size() % sizeof(double) != 0) throw std::runtime_error("checkpoint payload is truncated");
  const std::size_t available = payload.size() / sizeof(double);

  Checkpoint ck;
  try {
    const json header = json::parse(text);
    if (header.at("format") != "pgdvae-checkpoint" || header.at("version") != 1) {
      throw std::runtime_error("unsupported checkpoint format");
    }
    const ModelConfig model = model_config_from_json(header.at("model"));
    ck.config = train_config_from_json(header.at("train_config"));
    ck.config.model = model;
    ck.state.params.config = model;
    ck.state.epoch = header.at("epoch").get<int>();
    ck.state.optimizer.step = header.at("optimizer_step").get<std::int64_t>();

    std::map<std::string, ParamShape> expected;
    for (const auto& s : parameter_layout(model)) expected.emplace(s.name, s);

    for (const auto& t : header.at("tensors")) {
      const auto name = t.at("name").get<std::string>();
      const auto group = t.at("group").get<std::string>();
      const auto rows = t.at("rows").get<Index>();
      const auto cols = t.at("cols").get<Index>();
      const auto offset = t.at("offset").get<std::uint64_t>();
      const auto it = expected.find(name);
      if (it == expected.end()) throw std::runtime_error("unexpected tensor '" + name + "'");
      if (it->second.rows != rows || it->second.cols != cols) {
        throw std::runtime_error("shape mismatch for '" + name + "': stored (" + std::to_string(rows) +
                                 "x" + std::to_string(cols) + "), config expects (" +
                                 std::to_string(it->second.rows) + "x" +
                                 std::to_string(it->second.cols) + ")");
      }
      if (offset + static_cast<std::uint64_t>(rows * cols) > available) {
        throw std::runtime_error("tensor '" + name + "' runs past the end of the payload");
      }
      const auto* data = reinterpret_cast<const double*>(payload.data()) + offset;
      MatrixXd value =
          Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
              data, rows, cols);
      std::map<std::string, MatrixXd>* target = nullptr;
      if (group == "param") target = &ck.state.params.tensors;
      else if (group == "adam_m") target = &ck.state.optimizer.first;
      else if (group == "adam_v") target = &ck.state.optimizer.second;
      else throw std::runtime_error("unknown tensor group '" + group + "'");
      target->insert_or_assign(name, std::move(value));
    }
  } catch (const json::exception& e) {
    throw std::runtime_error("checkpoint '" + path.string() + "': bad header: " + e.what());
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error("checkpoint '" + path.string() + "': " + e.what());
  }
  ck.state.params.check_layout();
  if (ck.state.optimizer.first.size() != ck.state.params.tensors.size() ||
      ck.state.optimizer.second.size() != ck.state.params.tensors.size()) {
    throw std::runtime_error("checkpoint '" + path.string() + "': incomplete optimizer state");
  }
  return ck;
}

}  // namespace pgd
