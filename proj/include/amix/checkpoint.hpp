#pragma once

// Checkpoints: one JSON document holding the resolved run config, every
// network's parameters (base64 of little-endian doubles), optimizer moments
// and random stream states. Serialization is canonical, so loading and
// saving a checkpoint reproduces its bytes.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "amix/config.hpp"
#include "amix/nets.hpp"
#include "amix/optim.hpp"
#include "amix/training.hpp"

namespace amix {

inline constexpr int kCheckpointVersion = 1;

struct Checkpoint {
  std::string kind;  // "gan" or "classifier"
  /// Completed GAN steps or classifier epochs.
  std::size_t step = 0;
  RunConfig config;
  std::map<std::string, Network> networks;
  std::optional<OrthogonalHead> head;
  std::map<std::string, Optimizer> optimizers;
  std::map<std::string, Rng> streams;
  std::size_t clamped_probabilities = 0;

  std::size_t parameter_count() const;
};

Checkpoint make_checkpoint(const RunConfig& cfg, const GanRun& run);
Checkpoint make_checkpoint(const RunConfig& cfg, const ClassifierRun& run);
/// Rebuilds the training state; throws InvalidArgument on a kind mismatch.
GanRun restore_gan(const Checkpoint& ckpt);
ClassifierRun restore_classifier(const Checkpoint& ckpt);

std::string serialize_checkpoint(const Checkpoint& ckpt);
/// Throws FormatError (Parse or Version) on malformed input.
Checkpoint parse_checkpoint(std::string_view text);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::string base64_encode(std::string_view bytes);
/// Throws FormatError(Parse) on characters outside the alphabet or bad padding.
std::string base64_decode(std::string_view text);

}  // namespace amix
