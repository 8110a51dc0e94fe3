#pragma once

// Checkpoint container:
//   8-byte magic "ADAMRC\0\x01"
//   u64 LE manifest length, manifest JSON
//   u64 LE payload length, payload of little-endian float32 tensors
// The manifest's tensor table gives each tensor's name, shape, byte range in
// the payload and a CRC-32 of those bytes.

#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>

#include "adamrc/autograd.hpp"
#include "adamrc/nn.hpp"
#include "json.hpp"

namespace adamrc::ckpt {

inline constexpr int kFormatVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Manifest {
  int format_version = kFormatVersion;
  nlohmann::json config = nlohmann::json::object();
  int epoch = -1;
  nlohmann::json dev_metrics = nlohmann::json::object();
  std::string kind;  // "mrc", "qgen", "features", ...
};

struct Checkpoint {
  Manifest manifest;
  std::map<std::string, ag::FMatrix> tensors;

  const ag::FMatrix& at(const std::string& name) const;
};

std::string serialize(const nn::ParamRefs& params, const Manifest& manifest);
Checkpoint deserialize(std::string_view bytes, const std::string& source_name = "<memory>");

// Parameter names must be unique.
void save_checkpoint(const std::filesystem::path& path, const nn::ParamRefs& params, const Manifest& manifest);
void save_tensors(const std::filesystem::path& path, const std::map<std::string, ag::FMatrix>& tensors,
                  const Manifest& manifest);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Copies tensors into parameters by name. Every parameter must be present with
// a matching shape; extra tensors are ignored unless strict is set.
void apply_checkpoint(const Checkpoint& ckpt, const nn::ParamRefs& params, bool strict = false);

}  // namespace adamrc::ckpt
