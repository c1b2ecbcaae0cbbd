// SPDX-License-Identifier: Apache-2.0
#pragma once

// Central finite-difference oracle for the editor loss (fourth-order stencil
// at +-eps, +-2 eps). Uses only the forward
// pass, so it stays independent of the hand-written backward.

#include <algorithm>
#include <cmath>
#include <map>
#include <span>
#include <string>

#include "protoedit/editor.hpp"

namespace protoedit::testing {

struct BlockCheck {
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  double max_abs_grad = 0.0;
  std::size_t entries = 0;
};

/// Relative error |a - n| / max(|a|, |n|). Entries whose analytic and numeric
/// values are both below `zero_floor` count as exact agreement: the stencil's
/// roundoff at eps = 1e-3 is about 1e-12, so smaller gradients cannot be
/// resolved to 1e-4 relative accuracy.
inline double relative_error(double analytic, double numeric, double zero_floor) {
  const double scale = std::max(std::abs(analytic), std::abs(numeric));
  if (scale < zero_floor) return 0.0;
  return std::abs(analytic - numeric) / scale;
}

inline std::map<std::string, BlockCheck> check_gradients(
    editor::ModelParams<double> params, std::span<const editor::Example> batch,
    editor::Ablation ablation, double eps = 1e-3, double zero_floor = 1e-8) {
  editor::ModelParams<double> grad = params;
  grad.set_zero();
  editor::backward<double>(params, batch, ablation, grad);

  std::map<std::string, BlockCheck> report;
  std::map<std::string, const double*> analytic;
  grad.visit([&](const std::string& name, const auto& block) { analytic[name] = block.data(); });

  params.visit([&](const std::string& name, auto& block) {
    BlockCheck& c = report[name];
    const double* a = analytic.at(name);
    for (Index i = 0; i < block.size(); ++i) {
      double& x = block.data()[i];
      const double saved = x;
      auto loss_at = [&](double offset) {
        x = saved + offset;
        return editor::nll<double>(params, batch, ablation);
      };
      const double d1 = loss_at(eps) - loss_at(-eps);
      const double d2 = loss_at(2 * eps) - loss_at(-2 * eps);
      x = saved;
      const double numeric = (8 * d1 - d2) / (12 * eps);
      c.max_rel_error = std::max(c.max_rel_error, relative_error(a[i], numeric, zero_floor));
      c.max_abs_error = std::max(c.max_abs_error, std::abs(a[i] - numeric));
      c.max_abs_grad = std::max(c.max_abs_grad, std::abs(a[i]));
      ++c.entries;
    }
  });
  return report;
}

}  // namespace protoedit::testing
