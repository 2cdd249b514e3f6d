#pragma once

#include <filesystem>
#include <string>

#include "mfa/network.hpp"
#include "mfa/preprocessing.hpp"
#include "mfa/training.hpp"

namespace mfa {

/// Flat key=value run description. Network keys keep their names (variant, base_channels, ...),
/// training keys likewise (learning_rate, batch_size, ...), phantom keys carry a phantom_ prefix.
/// '#' starts a comment line; unknown or repeated keys are rejected.
struct RunConfig {
  NetworkConfig network;
  TrainConfig train;
  PhantomSpec phantom;

  void validate() const;
  std::string to_text() const;
  static RunConfig from_text(const std::string& text);
  static RunConfig load(const std::filesystem::path& path);
};

}  // namespace mfa
