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

#include "jmla/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace jmla {

static_assert(std::endian::native == std::endian::little,
              "checkpoint IO assumes a little-endian host");

namespace {

constexpr char kMagic[4] = {'J', 'M', 'L', 'A'};

template <typename T>
void put(std::string& out, T value) {
  char buf[sizeof(T)];
  std::memcpy(buf, &value, sizeof(T));
  out.append(buf, sizeof(T));
}

void put_chunk(std::string& out, const char (&tag)[5], const std::string& payload) {
  out.append(tag, 4);
  put<std::uint64_t>(out, payload.size());
  out += payload;
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  template <typename T>
  T get() {
    need(sizeof(T));
    T value;
    std::memcpy(&value, bytes_.data() + pos_, sizeof(T));
    pos_ += sizeof(T);
    return value;
  }

  std::string take(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

 private:
  void need(std::size_t n) const {
    if (bytes_.size() - pos_ < n) throw CheckpointError("checkpoint truncated");
  }
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

std::string param_payload(const std::string& name, const Tensor& t) {
  std::string out;
  put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
  out += name;
  put<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
  for (std::size_t d : t.shape()) put<std::uint64_t>(out, d);
  const auto values = t.values();
  out.append(reinterpret_cast<const char*>(values.data()), values.size() * sizeof(double));
  return out;
}

}  // namespace

std::string serialize_checkpoint(const Checkpoint& ckpt) {
  std::string out(kMagic, 4);
  put<std::uint32_t>(out, ckpt.version);
  put_chunk(out, "CONF", ckpt.config);
  put_chunk(out, "TOPO", ckpt.topology);
  put_chunk(out, "RNG ", ckpt.rng_state);
  std::string prov;
  for (const auto& [k, v] : ckpt.provenance) prov += k + "=" + v + "\n";
  put_chunk(out, "PROV", prov);
  for (const auto& [name, t] : ckpt.params) put_chunk(out, "PARM", param_payload(name, t));
  put_chunk(out, "END ", "");
  return out;
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
  Reader r(bytes);
  if (r.take(4) != std::string(kMagic, 4)) throw CheckpointError("not a JMLA checkpoint (bad magic)");
  Checkpoint ckpt;
  ckpt.version = r.get<std::uint32_t>();
  if (ckpt.version != kCheckpointVersion) {
    throw CheckpointError("checkpoint version " + std::to_string(ckpt.version) + " unsupported (expected " +
                          std::to_string(kCheckpointVersion) + ")");
  }
  bool ended = false;
  while (!ended) {
    const std::string tag = r.take(4);
    const auto length = r.get<std::uint64_t>();
    const std::string payload = r.take(static_cast<std::size_t>(length));
    if (tag == "CONF") {
      ckpt.config = payload;
    } else if (tag == "TOPO") {
      ckpt.topology = payload;
    } else if (tag == "RNG ") {
      ckpt.rng_state = payload;
    } else if (tag == "PROV") {
      std::istringstream in(payload);
      std::string line;
      while (std::getline(in, line)) {
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw CheckpointError("malformed provenance line");
        ckpt.provenance[line.substr(0, eq)] = line.substr(eq + 1);
      }
    } else if (tag == "PARM") {
      Reader p(payload);
      const auto name_len = p.get<std::uint32_t>();
      std::string name = p.take(name_len);
      const auto rank = p.get<std::uint32_t>();
      Shape shape;
      for (std::uint32_t i = 0; i < rank; ++i) shape.push_back(static_cast<std::size_t>(p.get<std::uint64_t>()));
      const std::size_t n = shape_numel(shape);
      const std::string raw = p.take(n * sizeof(double));
      if (!p.done()) throw CheckpointError("parameter chunk '" + name + "' has trailing bytes");
      std::vector<double> values(n);
      std::memcpy(values.data(), raw.data(), raw.size());
      ckpt.params.emplace_back(std::move(name), Tensor(shape, std::move(values)));
    } else if (tag == "END ") {
      ended = true;
    } else {
      throw CheckpointError("unknown checkpoint chunk '" + tag + "'");
    }
  }
  if (!r.done()) throw CheckpointError("bytes after END chunk");
  return ckpt;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  const std::string bytes = serialize_checkpoint(ckpt);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError("cannot write checkpoint '" + path + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError("failed writing checkpoint '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot read checkpoint '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize_checkpoint(ss.str());
}

void restore_params(const NamedParams& target, const Checkpoint& ckpt, bool strict) {
  std::map<std::string, const Tensor*> stored;
  for (const auto& [name, t] : ckpt.params) stored[name] = &t;
  std::size_t used = 0;
  for (const auto& [name, t] : target) {
    const auto it = stored.find(name);
    if (it == stored.end()) throw CheckpointError("checkpoint lacks parameter '" + name + "'");
    if (it->second->shape() != t.shape()) {
      throw CheckpointError("parameter '" + name + "' shape " + shape_str(it->second->shape()) + " vs model " +
                            shape_str(t.shape()));
    }
    Tensor dst = t;
    const auto src = it->second->values();
    std::copy(src.begin(), src.end(), dst.mutable_values().begin());
    ++used;
  }
  if (strict && used != stored.size()) throw CheckpointError("checkpoint holds parameters the model does not use");
}

namespace {

const char* kInputStats = "mae.encoder.input_stats";

}  // namespace

NamedParams encoder_state(const MaeEncoder& encoder) {
  NamedParams out;
  encoder.collect("mae.encoder", out);
  out.emplace_back(kInputStats, Tensor({2}, {encoder.input_mean, encoder.input_std}));
  return out;
}

NamedParams decoder_state(const FusionDecoder& decoder) {
  NamedParams out;
  decoder.collect_core(out);
  return out;
}

NamedParams model_state(const JmlaModel& model) {
  NamedParams out = encoder_state(model.encoder);
  model.decoder.collect_core(out);
  model.decoder.collect_cross(out);
  for (std::size_t i = 0; i < model.resamplers.size(); ++i) {
    model.resamplers[i].collect("resampler" + std::to_string(i), out);
  }
  return out;
}

namespace {

void restore_stats(MaeEncoder& encoder, const Checkpoint& ckpt) {
  for (const auto& [name, t] : ckpt.params) {
    if (name == kInputStats) {
      encoder.input_mean = t.values()[0];
      encoder.input_std = t.values()[1];
      return;
    }
  }
  throw CheckpointError("checkpoint lacks encoder input statistics");
}

}  // namespace

MaeEncoder encoder_from(const Checkpoint& ckpt) {
  const RunConfig config = parse_config(ckpt.config);
  Rng rng(0);
  MaeEncoder encoder = make_mae(config.mae.model, rng).encoder;
  NamedParams target;
  encoder.collect("mae.encoder", target);
  restore_params(target, ckpt, false);
  restore_stats(encoder, ckpt);
  return encoder;
}

FusionDecoder decoder_from(const Checkpoint& ckpt) {
  const RunConfig config = parse_config(ckpt.config);
  Rng rng(0);
  FusionDecoder decoder = make_decoder(config.decoder, rng);
  restore_params(decoder_state(decoder), ckpt, false);
  return decoder;
}

JmlaModel model_from(const Checkpoint& ckpt) {
  const RunConfig config = parse_config(ckpt.config);
  const InjectionTopology topology = InjectionTopology::parse(ckpt.topology);
  Rng rng(0);
  MaeEncoder encoder = make_mae(config.mae.model, rng).encoder;
  FusionDecoder core = make_decoder(config.decoder, rng);
  JmlaModel model = assemble_model(encoder, core, topology.variant, config.resolved_resampler(), rng);
  if (!(model.topology().sites == topology.sites)) {
    throw CheckpointError("checkpoint topology '" + ckpt.topology + "' does not match its configuration");
  }
  restore_params(model_state(model), ckpt, true);
  restore_stats(model.encoder, ckpt);
  return model;
}

}  // namespace jmla
