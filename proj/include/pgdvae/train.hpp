// train.hpp - mini-batch training with an adaptive-moment optimizer.

#ifndef PGDVAE_TRAIN_HPP
#define PGDVAE_TRAIN_HPP

#include "pgdvae/datagen.hpp"
#include "pgdvae/model.hpp"
#include "pgdvae/objective.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <random>
#include <stdexcept>
#include <vector>

namespace pgd {

struct TrainConfig {
  int epochs = 200;
  int batch_size = 32;
  double learning_rate = 1e-3;
  double moment1 = 0.9;
  double moment2 = 0.999;
  double adam_epsilon = 1e-8;
  std::uint64_t seed = 0;
  LossWeights loss;
  ModelConfig model;
  int checkpoint_every = 10;  // 0 writes only the final checkpoint
  bool stratify = true;

  void validate() const;
};

/// Fields that must agree between a checkpoint and the config resuming it.
std::vector<std::string> resume_incompatibilities(const TrainConfig& saved, const TrainConfig& now);

struct AdamState {
  std::map<std::string, MatrixXd> first;
  std::map<std::string, MatrixXd> second;
  std::int64_t step = 0;
};

struct TrainState {
  ModelParams params;
  AdamState optimizer;
  int epoch = 0;  // completed epochs
};

TrainState initial_state(const TrainConfig& config);

/// One bias-corrected adaptive-moment update of every parameter.
void adam_step(ModelParams& params, AdamState& state, const std::map<std::string, MatrixXd>& grads,
               const TrainConfig& config);

struct EpochLog {
  int epoch = 0;
  double l_rec = 0.0;
  double l_kl = 0.0;
  double l_contra = 0.0;
  double total = 0.0;
  double seconds = 0.0;
};

void write_epoch_log_header(std::ostream& out);
void write_epoch_log_row(std::ostream& out, const EpochLog& row);

class NonFiniteLoss : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Index batches for one epoch. Partial trailing batches are dropped (a
/// dataset smaller than batch_size forms a single batch). With `stratify`,
/// every batch holds at least two labels whenever the data has two; when a
/// label is too rare to reach every batch, its graphs are drawn more than once.
std::vector<std::vector<std::size_t>> make_batches(std::span<const int> labels, int batch_size,
                                                   bool stratify, std::mt19937_64& rng);

/// Per-epoch generator derived from (seed, epoch), so resumed runs replay exactly.
std::mt19937_64 epoch_rng(std::uint64_t seed, int epoch);

struct TrainOptions {
  std::filesystem::path out_dir;  // empty: no files written
  std::function<void(const EpochLog&, const TrainState&)> on_epoch;
};

/// Continues `state` until config.epochs epochs are complete.
std::vector<EpochLog> train(const TrainConfig& config, const std::vector<DatasetRecord>& dataset,
                            TrainState& state, const TrainOptions& options = {});

struct TrainResult {
  TrainState state;
  std::vector<EpochLog> log;
};

TrainResult train(const TrainConfig& config, const std::vector<DatasetRecord>& dataset,
                  const TrainOptions& options = {});

TrainResult resume(const std::filesystem::path& checkpoint, const TrainConfig& config,
                   const std::vector<DatasetRecord>& dataset, const TrainOptions& options = {});

}  // namespace pgd

#endif  // PGDVAE_TRAIN_HPP
