// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <string>
#include <vector>

#include "lslab/lslo.hpp"

namespace lslab {

// Container layout: u64 little-endian header length, UTF-8 JSON header
// {format_version, model_config, adapter_config?, manifest: [{name, shape,
// offset}]}, then raw little-endian float64 payloads in manifest order.
// Offsets are relative to the payload base. Round-trips bit-exactly.

struct AdapterCheckpointInfo {
  std::vector<LanguageSpec> languages;
  std::string rank_policy_label;
  Placement placement = Placement::All;
  IndexStrategy strategy;
  bool has_weight_learning = false;
};

void save_checkpoint(const std::string& path, const BaseModel& model,
                     const AdapterStack* stack);

struct Checkpoint {
  BaseModel model;
  std::optional<AdapterStack> stack;
};

Checkpoint load_checkpoint(const std::string& path);

// FNV-1a content hash of a file, hex-encoded; used for provenance fields.
std::string file_hash(const std::string& path);

}  // namespace lslab
