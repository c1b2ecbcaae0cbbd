// SPDX-License-Identifier: Apache-2.0
#include "protoedit/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>

#include "protoedit/adam.hpp"
#include "protoedit/checkpoint.hpp"
#include "protoedit/error.hpp"

namespace protoedit::editor {

void to_json(nlohmann::json& j, const EpochLog& e) {
  j = nlohmann::json{{"epoch", e.epoch},
                     {"train_loss", e.train_loss},
                     {"val_perplexity", e.val_perplexity},
                     {"lr", e.lr},
                     {"seconds", e.seconds}};
}

double perplexity(const ModelParams<float>& params, std::span<const Example> examples,
                  Ablation ablation) {
  // Accumulate in double; float sums drift over large validation sets.
  double total = 0.0;
  std::size_t tokens = 0;
  for (const auto& ex : examples) {
    total += example_loss<float>(params, ex, ablation);
    tokens += ex.target.size();
  }
  return std::exp(total / static_cast<double>(tokens));
}

TrainResult train(std::span<const Example> train_set, std::span<const Example> validation_set,
                  const Hyperparams& hp, const TrainOptions& options) {
  hp.validate();
  if (train_set.empty()) throw InvalidArgument("training set is empty");
  if (validation_set.empty()) throw InvalidArgument("validation set is empty");

  ModelParams<float> params =
      options.initial ? *options.initial : ModelParams<float>::initialized(hp, hp.seed);
  ModelParams<float> grad(hp);
  Adam<float, ModelParams<float>> adam(params, hp.lr_init);
  std::mt19937_64 rng(hp.seed + 1);

  std::ofstream log_out;
  if (!options.log_path.empty()) {
    log_out.open(options.log_path, std::ios::app);
    if (!log_out) throw IoError("cannot open training log " + options.log_path.string());
  }

  TrainResult result;
  result.best_val_perplexity = std::numeric_limits<double>::infinity();
  result.params = params;
  double previous_val = std::numeric_limits<double>::infinity();
  int successive_increases = 0;

  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<Example> batch;
  batch.reserve(static_cast<std::size_t>(hp.batch_size));

  for (int epoch = 1; epoch <= hp.max_epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    std::size_t epoch_tokens = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(hp.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(hp.batch_size));
      batch.clear();
      std::size_t tokens = 0;
      for (std::size_t i = start; i < end; ++i) {
        batch.push_back(train_set[order[i]]);
        tokens += train_set[order[i]].target.size();
      }
      grad.set_zero();
      const float loss = backward<float>(params, batch, hp.ablation, grad);
      if (!std::isfinite(loss) || !grad.all_finite()) {
        throw DivergenceError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                              std::to_string(start / static_cast<std::size_t>(hp.batch_size)) +
                              " (lr " + std::to_string(adam.learning_rate()) + ")");
      }
      clip_global_norm<float>(grad, static_cast<float>(hp.grad_clip_norm));
      adam.step(params, grad);
      epoch_loss += static_cast<double>(loss) * static_cast<double>(tokens);
      epoch_tokens += tokens;
    }

    EpochLog entry;
    entry.epoch = epoch;
    entry.train_loss = epoch_loss / static_cast<double>(epoch_tokens);
    entry.lr = adam.learning_rate();
    entry.val_perplexity = perplexity(params, validation_set, hp.ablation);
    entry.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    if (!std::isfinite(entry.val_perplexity)) {
      throw DivergenceError("non-finite validation perplexity at epoch " + std::to_string(epoch));
    }
    result.log.push_back(entry);
    if (log_out) log_out << nlohmann::json(entry).dump() << '\n' << std::flush;
    if (options.on_epoch) options.on_epoch(entry);

    if (entry.val_perplexity < result.best_val_perplexity) {
      result.best_val_perplexity = entry.val_perplexity;
      result.best_epoch = epoch;
      result.params = params;
    }
    if (entry.val_perplexity > previous_val) {
      adam.set_learning_rate(adam.learning_rate() * 0.5);
      if (++successive_increases >= 2) {
        result.stop_reason = "validation perplexity increased in two successive epochs";
        return result;
      }
    } else {
      successive_increases = 0;
    }
    previous_val = entry.val_perplexity;
  }
  result.stop_reason = "reached max_epochs";
  return result;
}

void save_editor(const std::filesystem::path& path, const Hyperparams& hp,
                 std::uint64_t vocab_hash, const ModelParams<float>& params) {
  checkpoint::save(path, kEditorCheckpointKind, nlohmann::json(hp), vocab_hash, params);
}

EditorCheckpoint load_editor(const std::filesystem::path& path) {
  const auto c = checkpoint::read(path);
  if (c.kind != kEditorCheckpointKind) {
    throw IoError(path.string() + " is a '" + c.kind + "' checkpoint, not an editor");
  }
  EditorCheckpoint out;
  out.hp = c.header.get<Hyperparams>();
  out.vocab_hash = c.vocab_hash;
  out.params = ModelParams<float>(out.hp);
  checkpoint::unpack(c, out.params);
  return out;
}

}  // namespace protoedit::editor
