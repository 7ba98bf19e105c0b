#include "pgdvae/train.hpp"

#include "pgdvae/checkpoint.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <ostream>
#include <set>

namespace pgd {

void TrainConfig::validate() const {
  if (epochs < 0) throw std::invalid_argument("train config: epochs must be non-negative");
  if (batch_size < 1) throw std::invalid_argument("train config: batch_size must be positive");
  if (stratify && batch_size < 2) {
    throw std::invalid_argument("train config: stratified batching needs batch_size >= 2");
  }
  if (learning_rate < 0) throw std::invalid_argument("train config: learning rate must be >= 0");
  if (!(moment1 > 0 && moment1 < 1 && moment2 > 0 && moment2 < 1)) {
    throw std::invalid_argument("train config: moment coefficients must lie in (0, 1)");
  }
  if (!(adam_epsilon > 0)) throw std::invalid_argument("train config: adam epsilon must be positive");
  if (checkpoint_every < 0) throw std::invalid_argument("train config: checkpoint_every must be >= 0");
  pgd::validate(loss);
  parameter_layout(model);
}

std::vector<std::string> resume_incompatibilities(const TrainConfig& saved, const TrainConfig& now) {
  std::vector<std::string> diff;
  for (const auto& f : config_differences(saved.model, now.model)) diff.push_back("model." + f);
  if (saved.batch_size != now.batch_size) diff.emplace_back("batch_size");
  if (saved.learning_rate != now.learning_rate) diff.emplace_back("learning_rate");
  if (saved.moment1 != now.moment1) diff.emplace_back("moment1");
  if (saved.moment2 != now.moment2) diff.emplace_back("moment2");
  if (saved.adam_epsilon != now.adam_epsilon) diff.emplace_back("adam_epsilon");
  if (saved.seed != now.seed) diff.emplace_back("seed");
  if (saved.stratify != now.stratify) diff.emplace_back("stratify");
  if (saved.loss.beta_local != now.loss.beta_local) diff.emplace_back("loss.beta_local");
  if (saved.loss.beta_global != now.loss.beta_global) diff.emplace_back("loss.beta_global");
  if (saved.loss.beta_contra != now.loss.beta_contra) diff.emplace_back("loss.beta_contra");
  if (saved.loss.temperature != now.loss.temperature) diff.emplace_back("loss.temperature");
  if (saved.loss.include_self_pairs != now.loss.include_self_pairs) {
    diff.emplace_back("loss.include_self_pairs");
  }
  return diff;
}

TrainState initial_state(const TrainConfig& config) {
  config.validate();
  TrainState s;
  s.params = ModelParams::initialize(config.model, config.seed);
  for (const auto& [name, value] : s.params.tensors) {
    s.optimizer.first.emplace(name, MatrixXd::Zero(value.rows(), value.cols()));
    s.optimizer.second.emplace(name, MatrixXd::Zero(value.rows(), value.cols()));
  }
  return s;
}

void adam_step(ModelParams& params, AdamState& state, const std::map<std::string, MatrixXd>& grads,
               const TrainConfig& config) {
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(config.moment1, t);
  const double correction2 = 1.0 - std::pow(config.moment2, t);
  for (auto& [name, value] : params.tensors) {
    const MatrixXd& g = grads.at(name);
    MatrixXd& m = state.first.at(name);
    MatrixXd& v = state.second.at(name);
    m = config.moment1 * m + (1.0 - config.moment1) * g;
    v = config.moment2 * v + (1.0 - config.moment2) * g.cwiseAbs2();
    value.array() -= config.learning_rate * (m.array() / correction1) /
                     ((v.array() / correction2).sqrt() + config.adam_epsilon);
  }
}

void write_epoch_log_header(std::ostream& out) {
  out << "epoch,l_rec,l_kl,l_contra,total,wall_seconds\n";
}

void write_epoch_log_row(std::ostream& out, const EpochLog& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%d,%.10g,%.10g,%.10g,%.10g,%.3f\n", r.epoch, r.l_rec, r.l_kl,
                r.l_contra, r.total, r.seconds);
  out << buf;
}

std::mt19937_64 epoch_rng(std::uint64_t seed, int epoch) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(epoch), 0x7261696eU};
  return std::mt19937_64(seq);
}

namespace {

std::size_t distinct_labels(std::span<const int> labels, const std::vector<std::size_t>& batch) {
  std::set<int> seen;
  for (auto i : batch) seen.insert(labels[i]);
  return seen.size();
}

void ensure_two_labels(std::span<const int> labels, std::vector<std::vector<std::size_t>>& batches,
                       std::vector<std::size_t>& spare, std::mt19937_64& rng) {
  for (std::size_t b = 0; b < batches.size(); ++b) {
    auto& batch = batches[b];
    if (distinct_labels(labels, batch) >= 2) continue;
    const int only = labels[batch.back()];
    auto it = std::find_if(spare.begin(), spare.end(), [&](auto i) { return labels[i] != only; });
    if (it != spare.end()) {
      std::swap(batch.back(), *it);
      continue;
    }
    bool fixed = false;
    for (std::size_t c = 0; c < batches.size() && !fixed; ++c) {
      if (c == b) continue;
      for (auto& candidate : batches[c]) {
        if (labels[candidate] == only) continue;
        std::swap(batch.back(), candidate);
        if (distinct_labels(labels, batches[c]) >= 2) {
          fixed = true;
          break;
        }
        std::swap(batch.back(), candidate);
      }
    }
    if (fixed) continue;
    // Too few graphs of other labels to go round: reuse one.
    std::vector<std::size_t> others;
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (labels[i] != only) others.push_back(i);
    }
    batch.back() = others[std::uniform_int_distribution<std::size_t>(0, others.size() - 1)(rng)];
  }
}

}  // namespace

std::vector<std::vector<std::size_t>> make_batches(std::span<const int> labels, int batch_size,
                                                   bool stratify, std::mt19937_64& rng) {
  const std::size_t total = labels.size();
  if (total == 0) return {};
  const std::size_t size = std::min<std::size_t>(static_cast<std::size_t>(batch_size), total);

  std::vector<std::size_t> order;
  order.reserve(total);
  if (!stratify) {
    order.resize(total);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
  } else {
    // Random merge of per-label shuffles, drawing each label in proportion
    // to what it has left.
    std::map<int, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < total; ++i) groups[labels[i]].push_back(i);
    std::vector<std::vector<std::size_t>> pools;
    for (auto& [label, members] : groups) {
      std::shuffle(members.begin(), members.end(), rng);
      pools.push_back(std::move(members));
    }
    std::size_t remaining = total;
    while (remaining > 0) {
      std::uniform_int_distribution<std::size_t> pick(0, remaining - 1);
      std::size_t r = pick(rng);
      for (auto& pool : pools) {
        if (r < pool.size()) {
          order.push_back(pool.back());
          pool.pop_back();
          break;
        }
        r -= pool.size();
      }
      --remaining;
    }
  }

  std::vector<std::vector<std::size_t>> batches;
  const std::size_t count = total / size;
  for (std::size_t b = 0; b < count; ++b) {
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(b * size),
                         order.begin() + static_cast<std::ptrdiff_t>((b + 1) * size));
  }
  std::vector<std::size_t> spare(order.begin() + static_cast<std::ptrdiff_t>(count * size), order.end());
  if (stratify && std::set<int>(labels.begin(), labels.end()).size() >= 2) {
    ensure_two_labels(labels, batches, spare, rng);
  }
  return batches;
}

namespace {

std::filesystem::path checkpoint_path(const std::filesystem::path& dir, int epoch) {
  char name[64];
  std::snprintf(name, sizeof name, "checkpoint_epoch_%04d.ckpt", epoch);
  return dir / name;
}

void check_finite(const LossBreakdown& b, int epoch) {
  const std::pair<const char*, double> terms[] = {
      {"l_rec", b.l_rec}, {"l_kl", b.l_kl}, {"l_contra", b.l_contra}};
  for (const auto& [name, value] : terms) {
    if (!std::isfinite(value)) {
      throw NonFiniteLoss("non-finite " + std::string(name) + " in epoch " + std::to_string(epoch));
    }
  }
}

}  // namespace

std::vector<EpochLog> train(const TrainConfig& config, const std::vector<DatasetRecord>& dataset,
                            TrainState& state, const TrainOptions& options) {
  config.validate();
  if (dataset.empty()) throw std::invalid_argument("train: empty dataset");
  if (state.params.config != config.model) {
    throw std::invalid_argument("train: state model config differs from training config");
  }

  std::vector<TrainingExample> examples;
  std::vector<int> labels;
  examples.reserve(dataset.size());
  for (const auto& r : dataset) {
    examples.push_back(make_example(r.graph(), r.n(), config.model));
    labels.push_back(examples.back().label);
  }

  const bool writing = !options.out_dir.empty();
  std::ofstream log_file;
  if (writing) {
    std::filesystem::create_directories(options.out_dir);
    const auto log_path = options.out_dir / "epoch_log.csv";
    const bool fresh = state.epoch == 0 || !std::filesystem::exists(log_path);
    log_file.open(log_path, fresh ? std::ios::trunc : std::ios::app);
    if (!log_file) throw std::runtime_error("cannot open '" + log_path.string() + "'");
    if (fresh) write_epoch_log_header(log_file);
  }

  std::vector<EpochLog> log;
  std::normal_distribution<double> normal(0.0, 1.0);
  while (state.epoch < config.epochs) {
    const int epoch = state.epoch + 1;
    const auto start = std::chrono::steady_clock::now();
    std::mt19937_64 rng = epoch_rng(config.seed, epoch);
    const auto batches = make_batches(labels, config.batch_size, config.stratify, rng);

    EpochLog row;
    row.epoch = epoch;
    for (const auto& indices : batches) {
      std::vector<TrainingExample> batch;
      std::vector<LatentNoise> noise;
      for (auto i : indices) {
        batch.push_back(examples[i]);
        LatentNoise eta{Eigen::RowVectorXd(config.model.local_dim),
                        Eigen::RowVectorXd(config.model.global_dim)};
        for (Index k = 0; k < eta.local.size(); ++k) eta.local(k) = normal(rng);
        for (Index k = 0; k < eta.global.size(); ++k) eta.global(k) = normal(rng);
        noise.push_back(std::move(eta));
      }

      Tape tape;
      const BoundParams bound = bind(tape, state.params);
      const LossVars loss = total_loss(bound, batch, noise, config.loss);
      const LossBreakdown b = breakdown(loss, config.loss);
      check_finite(b, epoch);
      tape.backward(loss.total);

      std::map<std::string, MatrixXd> grads;
      for (const auto& [name, var] : bound.vars) {
        MatrixXd g = var.grad();
        if (!g.allFinite()) {
          throw NonFiniteLoss("non-finite gradient for '" + name + "' in epoch " +
                              std::to_string(epoch));
        }
        grads.emplace(name, std::move(g));
      }
      adam_step(state.params, state.optimizer, grads, config);

      row.l_rec += b.l_rec;
      row.l_kl += b.l_kl;
      row.l_contra += b.l_contra;
      row.total += b.total;
    }
    const double count = static_cast<double>(std::max<std::size_t>(1, batches.size()));
    row.l_rec /= count;
    row.l_kl /= count;
    row.l_contra /= count;
    row.total /= count;
    row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    state.epoch = epoch;
    log.push_back(row);

    if (writing) {
      write_epoch_log_row(log_file, row);
      log_file.flush();
      const bool due = config.checkpoint_every > 0 && epoch % config.checkpoint_every == 0;
      if (due || epoch == config.epochs) {
        save_checkpoint(checkpoint_path(options.out_dir, epoch), state, config);
        save_checkpoint(options.out_dir / "checkpoint_last.ckpt", state, config);
      }
    }
    if (options.on_epoch) options.on_epoch(row, state);
  }
  return log;
}

TrainResult train(const TrainConfig& config, const std::vector<DatasetRecord>& dataset,
                  const TrainOptions& options) {
  TrainResult result{initial_state(config), {}};
  result.log = train(config, dataset, result.state, options);
  return result;
}

TrainResult resume(const std::filesystem::path& checkpoint, const TrainConfig& config,
                   const std::vector<DatasetRecord>& dataset, const TrainOptions& options) {
  Checkpoint ck = load_checkpoint(checkpoint);
  const auto diff = resume_incompatibilities(ck.config, config);
  if (!diff.empty()) {
    std::string fields;
    for (const auto& f : diff) fields += (fields.empty() ? "" : ", ") + f;
    throw std::invalid_argument("resume: config differs from checkpoint in: " + fields);
  }
  TrainResult result{std::move(ck.state), {}};
  result.log = train(config, dataset, result.state, options);
  return result;
}

}  // namespace pgd
