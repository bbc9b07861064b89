#pragma once

#include <cstdint>

#include "sgiformer/gradcheck.hpp"
#include "sgiformer/model.hpp"

namespace sgiformer {

/// Small model (d = 8, two decoder layers, four queries, three classes) with
/// every loss term and architectural branch enabled.
RunConfig tiny_gradcheck_config();

/// Labelled scene of a few dozen voxels and a handful of superpoints for `config`.
PointCloud tiny_gradcheck_scene(const RunConfig& config, std::uint64_t seed);

struct ModelGradCheck {
  GradCheckReport report;
  std::size_t voxels = 0;
  std::size_t superpoints = 0;
  std::size_t queries = 0;
  std::size_t parameters = 0;
};

/// Finite-difference check of the full training objective with respect to
/// every parameter entry of a freshly initialised model.
ModelGradCheck check_model_gradients(const RunConfig& config, const PointCloud& scene,
                                     const GradCheckOptions& options = {});

}  // namespace sgiformer
