// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "protoedit/editor.hpp"

namespace protoedit::editor {

struct EpochLog {
  int epoch = 0;
  double train_loss = 0.0;  // mean token NLL over the epoch
  double val_perplexity = 0.0;
  double lr = 0.0;  // rate used during this epoch
  double seconds = 0.0;
};

void to_json(nlohmann::json& j, const EpochLog& e);

struct TrainOptions {
  /// JSON-lines log, appended to. Empty path disables it.
  std::filesystem::path log_path;
  std::function<void(const EpochLog&)> on_epoch;
  /// Starting parameters; Glorot init from hp.seed otherwise.
  std::optional<ModelParams<float>> initial;
};

struct TrainResult {
  ModelParams<float> params;  // best validation perplexity
  std::vector<EpochLog> log;
  int best_epoch = 0;
  double best_val_perplexity = 0.0;
  std::string stop_reason;
};

/// Adam on mean token NLL with global-norm clipping. After each epoch the
/// validation perplexity is computed; an increase halves the learning rate,
/// and two successive increases stop training. Deterministic for a given
/// seed and data. Throws DivergenceError on a non-finite loss and
/// InvalidArgument on empty inputs.
TrainResult train(std::span<const Example> train_set, std::span<const Example> validation_set,
                  const Hyperparams& hp, const TrainOptions& options = {});

/// exp(mean token NLL).
double perplexity(const ModelParams<float>& params, std::span<const Example> examples,
                  Ablation ablation);

inline constexpr const char* kEditorCheckpointKind = "protoedit.editor";

struct EditorCheckpoint {
  Hyperparams hp;
  std::uint64_t vocab_hash = 0;
  ModelParams<float> params;
};

void save_editor(const std::filesystem::path& path, const Hyperparams& hp,
                 std::uint64_t vocab_hash, const ModelParams<float>& params);
EditorCheckpoint load_editor(const std::filesystem::path& path);

}  // namespace protoedit::editor
