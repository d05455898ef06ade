// On-disk formats: scene trajectories, policy checkpoints, and strict
// config parsing. All documents are JSON; doubles round-trip bit-exactly.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "geoflow/rewards.hpp"

namespace geoflow {

using Json = nlohmann::json;

// Raised for malformed or inconsistent input documents; the CLI maps it to
// exit code 2.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Raised when a computation produces non-finite or otherwise unusable
// numbers; the CLI maps it to exit code 3.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Shortest decimal digits that parse back to the same bits, capped at 17
// significant digits.
std::string format_double(double value);

// Throws ConfigError listing any key of `obj` not in `allowed`.
void reject_unknown_keys(const Json& obj,
                         const std::vector<std::string>& allowed,
                         const std::string& context);

// Parses text as JSON; on failure throws ConfigError with a 1-based line
// number computed from the parser's byte offset.
Json parse_json_text(const std::string& text, const std::string& origin);

Json read_json_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& text);
std::string read_text_file(const std::string& path);

inline constexpr int kSceneFormatVersion = 1;
inline constexpr int kCheckpointFormatVersion = 1;

// Frames must share height, width, and intrinsics. Invalid depth entries
// (NaN) are written as JSON null.
Json scene_to_json(const std::vector<GeometryFrame>& frames);
std::vector<GeometryFrame> scene_from_json(const Json& doc);

void save_scene(const std::string& path,
                const std::vector<GeometryFrame>& frames);
std::vector<GeometryFrame> load_scene(const std::string& path);

struct Checkpoint {
  int format_version = kCheckpointFormatVersion;
  int latent_dim = 0;
  int cond_dim = 0;
  int hidden_dim = 0;
  Eigen::VectorXd params;
  int iteration = 0;
  std::uint64_t seed = 0;
  Json config = Json::object();
};

// Parameters are stored as decimal strings so that load(save(p)) is
// bit-exact independent of the JSON library's number formatting.
Json checkpoint_to_json(const Checkpoint& ckpt);
Checkpoint checkpoint_from_json(const Json& doc);

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace geoflow
