#pragma once

#include "graphmamba/ad/adam.hpp"

#include <json.hpp>

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace graphmamba::ad {

// Checkpoint layout (all integers little-endian):
//
//   offset 0   8 bytes   magic "GMCKPT01"
//   offset 8   u64       length H of the JSON index in bytes
//   offset 16  H bytes   UTF-8 JSON index:
//                          {"format": "graphmamba-checkpoint", "version": 1,
//                           "meta": {...},
//                           "tensors": [{"name", "shape", "offset", "count"}, ...]}
//   16 + H     ...       float64 little-endian payload; each record's "offset"
//                        is its byte offset from the start of the payload
//
// Records appear in parameter order and are packed without padding.
struct CheckpointRecord {
  std::string name;
  Shape shape;
  std::vector<double> data;
};

struct Checkpoint {
  nlohmann::json meta = nlohmann::json::object();
  std::vector<CheckpointRecord> records;
};

std::vector<char> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::span<const char> bytes);

void save_checkpoint(const std::filesystem::path& path, std::span<const Parameter> params,
                     const nlohmann::json& meta = nlohmann::json::object());
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Copies record values into parameters matched by name. Throws FormatError on a
// missing name or shape disagreement.
void restore_parameters(const Checkpoint& ckpt, std::span<Parameter> params);

}  // namespace graphmamba::ad
