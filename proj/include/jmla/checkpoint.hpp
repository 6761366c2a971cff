/*
 * Copyright 2026 The JMLA Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Chunked binary checkpoints.
//
// Layout, all integers little-endian:
//   "JMLA" | u32 version
//   then chunks: 4-byte tag | u64 payload length | payload
//     CONF  canonical run configuration text
//     TOPO  injection topology descriptor
//     RNG   generator state text
//     PROV  provenance, "key=value" lines
//     PARM  u32 name length | name | u32 rank | u64 dims[rank] | f64 values
//     END   empty, terminates the file

#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "jmla/config.hpp"
#include "jmla/model.hpp"
#include "jmla/nn.hpp"

namespace jmla {

inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Checkpoint {
  std::uint32_t version = kCheckpointVersion;
  std::string config;
  std::string topology;
  std::string rng_state;
  std::map<std::string, std::string> provenance;
  NamedParams params;
};

std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(const std::string& bytes);
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

// Copies values into target by name; every target name must be present with
// the same shape. Extra checkpoint entries are an error when strict.
void restore_params(const NamedParams& target, const Checkpoint& ckpt, bool strict = true);

// Parameter sets per stage, including the encoder's input statistics.
NamedParams encoder_state(const MaeEncoder& encoder);
NamedParams decoder_state(const FusionDecoder& decoder);
NamedParams model_state(const JmlaModel& model);

// Rebuild models from a checkpoint's configuration and parameters.
MaeEncoder encoder_from(const Checkpoint& ckpt);
FusionDecoder decoder_from(const Checkpoint& ckpt);
JmlaModel model_from(const Checkpoint& ckpt);

}  // namespace jmla
