#pragma once

// Checkpoint layout (all integers little-endian):
//
//   "DCTS"  u32 version  u64 header_length  header (UTF-8 JSON)
//   tensor_count x { u32 name_length, name, u32 rank, u64 dims[rank], f32 payload }
//
// The JSON header holds the model configuration, the tensor count, optional
// optimizer scalars and free-form training metadata. Optimizer moments are
// stored as tensors named "adam.m/<param>" and "adam.v/<param>".

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dctnet/adam.hpp"
#include "dctnet/error.hpp"
#include "dctnet/segnet.hpp"

namespace dctnet {

inline constexpr std::array<char, 4> kCheckpointMagic{'D', 'C', 'T', 'S'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  SegModel<float> model;
  std::optional<AdamState<float>> optimizer;
  nlohmann::json metadata = nlohmann::json::object();
};

namespace detail {

class ByteWriter {
 public:
  void bytes(const void* p, std::size_t n) { out_.append(static_cast<const char*>(p), n); }
  template <class U>
  void integer(U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) out_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
  void f32(float f) { integer(std::bit_cast<std::uint32_t>(f)); }
  const std::string& str() const { return out_; }

 private:
  std::string out_;
};

class ByteReader {
 public:
  explicit ByteReader(std::string data) : data_(std::move(data)) {}

  void bytes(void* p, std::size_t n) {
    need(n);
    std::memcpy(p, data_.data() + pos_, n);
    pos_ += n;
  }
  template <class U>
  U integer() {
    need(sizeof(U));
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i)
      v |= static_cast<U>(static_cast<unsigned char>(data_[pos_ + i])) << (8 * i);
    pos_ += sizeof(U);
    return v;
  }
  float f32() { return std::bit_cast<float>(integer<std::uint32_t>()); }
  std::string string(std::size_t n) {
    need(n);
    std::string s = data_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  bool at_end() const { return pos_ == data_.size(); }
  std::size_t remaining() const { return data_.size() - pos_; }

 private:
  void need(std::size_t n) const {
    if (data_.size() - pos_ < n) throw CheckpointError(CheckpointErrorKind::truncated, "unexpected end of file");
  }
  std::string data_;
  std::size_t pos_ = 0;
};

inline void write_tensor(ByteWriter& w, const std::string& name, const std::vector<int>& dims,
                         const std::vector<float>& values) {
  w.integer(static_cast<std::uint32_t>(name.size()));
  w.bytes(name.data(), name.size());
  w.integer(static_cast<std::uint32_t>(dims.size()));
  for (int d : dims) w.integer(static_cast<std::uint64_t>(d));
  for (float v : values) w.f32(v);
}

}  // namespace detail

inline std::string serialize_checkpoint(const SegModel<float>& model, const AdamState<float>* optimizer = nullptr,
                                        const nlohmann::json& metadata = nlohmann::json::object()) {
  const auto& params = model.parameters();
  if (optimizer && (optimizer->m.size() != params.size() || optimizer->v.size() != params.size()))
    throw InvalidInput("optimizer state does not match the model");
  nlohmann::json header;
  header["model"] = model.config();
  header["tensor_count"] = params.size() * (optimizer ? 3 : 1);
  header["optimizer"] = optimizer ? nlohmann::json{{"kind", "adam"}, {"step", optimizer->step}} : nlohmann::json();
  header["metadata"] = metadata;
  const std::string text = header.dump();

  detail::ByteWriter w;
  w.bytes(kCheckpointMagic.data(), kCheckpointMagic.size());
  w.integer(kCheckpointVersion);
  w.integer(static_cast<std::uint64_t>(text.size()));
  w.bytes(text.data(), text.size());
  for (const auto& p : params) detail::write_tensor(w, p.name, p.dims, p.value);
  if (optimizer) {
    for (std::size_t i = 0; i < params.size(); ++i) detail::write_tensor(w, "adam.m/" + params[i].name, params[i].dims, optimizer->m[i]);
    for (std::size_t i = 0; i < params.size(); ++i) detail::write_tensor(w, "adam.v/" + params[i].name, params[i].dims, optimizer->v[i]);
  }
  return w.str();
}

inline void save_checkpoint(const std::string& path, const SegModel<float>& model,
                            const AdamState<float>* optimizer = nullptr,
                            const nlohmann::json& metadata = nlohmann::json::object()) {
  const std::string bytes = serialize_checkpoint(model, optimizer, metadata);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError(CheckpointErrorKind::io, "cannot open '" + path + "' for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw CheckpointError(CheckpointErrorKind::io, "write failed for '" + path + "'");
}

inline Checkpoint deserialize_checkpoint(std::string bytes) {
  detail::ByteReader r(std::move(bytes));
  std::array<char, 4> magic{};
  if (r.remaining() < magic.size()) throw CheckpointError(CheckpointErrorKind::bad_magic, "file too short for magic");
  r.bytes(magic.data(), magic.size());
  if (magic != kCheckpointMagic) throw CheckpointError(CheckpointErrorKind::bad_magic, "not a DCTS checkpoint");
  const auto version = r.integer<std::uint32_t>();
  if (version != kCheckpointVersion)
    throw CheckpointError(CheckpointErrorKind::unsupported_version,
                          "checkpoint version " + std::to_string(version) + ", expected " +
                              std::to_string(kCheckpointVersion));
  const auto header_len = r.integer<std::uint64_t>();
  if (header_len > r.remaining()) throw CheckpointError(CheckpointErrorKind::truncated, "header extends past end of file");
  nlohmann::json header;
  ModelConfig config;
  std::size_t tensor_count = 0;
  try {
    header = nlohmann::json::parse(r.string(static_cast<std::size_t>(header_len)));
    config = header.at("model").get<ModelConfig>();
    tensor_count = header.at("tensor_count").get<std::size_t>();
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(CheckpointErrorKind::malformed, std::string("bad header: ") + e.what());
  } catch (const InvalidInput& e) {
    throw CheckpointError(CheckpointErrorKind::malformed, std::string("bad header: ") + e.what());
  }

  // Reference layout for this configuration.
  SegModel<float> reference(config, 0);
  std::vector<ag::Parameter<float>> params = reference.parameters();
  std::map<std::string, std::size_t> slot;
  for (std::size_t i = 0; i < params.size(); ++i) slot[params[i].name] = i;
  const bool has_optimizer = header.contains("optimizer") && !header["optimizer"].is_null();
  AdamState<float> adam;
  if (has_optimizer) {
    adam.step = header["optimizer"].value("step", 0L);
    adam.m.assign(params.size(), {});
    adam.v.assign(params.size(), {});
  }
  const std::size_t expected = params.size() * (has_optimizer ? 3 : 1);
  if (tensor_count != expected)
    throw CheckpointError(CheckpointErrorKind::mismatch, "tensor count " + std::to_string(tensor_count) +
                                                             " does not match the model (" + std::to_string(expected) +
                                                             ")");

  std::set<std::string> seen;
  for (std::size_t t = 0; t < tensor_count; ++t) {
    const auto name_len = r.integer<std::uint32_t>();
    const std::string name = r.string(name_len);
    const auto rank = r.integer<std::uint32_t>();
    if (rank > 8) throw CheckpointError(CheckpointErrorKind::malformed, "implausible rank for " + name);
    std::vector<int> dims;
    for (std::uint32_t i = 0; i < rank; ++i) dims.push_back(static_cast<int>(r.integer<std::uint64_t>()));
    if (!seen.insert(name).second) throw CheckpointError(CheckpointErrorKind::malformed, "duplicate tensor " + name);

    std::string base = name;
    std::vector<float>* target = nullptr;
    std::size_t idx = 0;
    auto locate = [&](const std::string& n) {
      const auto it = slot.find(n);
      if (it == slot.end()) throw CheckpointError(CheckpointErrorKind::mismatch, "unexpected tensor " + name);
      return it->second;
    };
    if (has_optimizer && name.starts_with("adam.m/")) {
      idx = locate(name.substr(7));
      target = &adam.m[idx];
    } else if (has_optimizer && name.starts_with("adam.v/")) {
      idx = locate(name.substr(7));
      target = &adam.v[idx];
    } else {
      idx = locate(name);
      target = &params[idx].value;
    }
    if (dims != params[idx].dims) throw CheckpointError(CheckpointErrorKind::mismatch, "shape mismatch for " + name);
    target->resize(params[idx].size());
    for (auto& v : *target) v = r.f32();
  }
  if (!r.at_end()) throw CheckpointError(CheckpointErrorKind::malformed, "trailing bytes after last tensor");

  Checkpoint out;
  out.model.adopt(config, std::move(params));
  if (has_optimizer) out.optimizer = std::move(adam);
  out.metadata = header.value("metadata", nlohmann::json::object());
  return out;
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError(CheckpointErrorKind::io, "cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize_checkpoint(ss.str());
}

}  // namespace dctnet
