#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "sgiformer/config.hpp"
#include "sgiformer/nn.hpp"
#include "sgiformer/optim.hpp"

namespace sgiformer {

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct SavedTensor {
  std::string name;
  ParamGroup group = ParamGroup::kDefault;
  Shape shape;
  std::vector<double> values;
};

struct Checkpoint {
  RunConfig config;
  std::uint64_t config_hash = 0;
  std::uint64_t step = 0;
  std::vector<SavedTensor> params;
  std::optional<OptimizerState> optimizer;
};

/// Binary container; layout in docs/formats.md. Written atomically.
void save_checkpoint(const std::filesystem::path& path, const RunConfig& config, const ParamStore& params,
                     const OptimizerState* optimizer, std::uint64_t step);
Checkpoint read_checkpoint(const std::filesystem::path& path);

/// Copies saved values into `params`; names, order and shapes must match exactly.
void restore_params(const Checkpoint& checkpoint, ParamStore& params);

std::uint64_t model_hash(const ModelConfig& model);

}  // namespace sgiformer
