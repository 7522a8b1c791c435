#pragma once

// Checkpoint file: "WVCK" magic, u32 format version, u64 JSON header length,
// JSON header (config snapshot, task, best epoch, target scaling), u64 float
// count, then little-endian float32 weights in parameter order.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "welfare/error.hpp"
#include "welfare/modeling/config.hpp"
#include "welfare/nn/network.hpp"

namespace welfare::modeling {

struct ModelCheckpoint {
  Task task = Task::kRegression;
  TrainConfig config;
  std::vector<float> weights;
  int best_epoch = 0;
  std::string created_at;
  double target_mean = 0.0;  // regression target standardisation
  double target_std = 1.0;

  nn::Network build_network() const {
    nn::Network net(config.arch(), config.seed);
    net.load_flat_weights(weights);
    return net;
  }
};

namespace detail {
inline constexpr char kMagic[4] = {'W', 'V', 'C', 'K'};
inline constexpr std::uint32_t kFormatVersion = 1;

template <typename T>
void put(std::string& out, T v) {
  static_assert(std::endian::native == std::endian::little, "big-endian hosts are not supported");
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

template <typename T>
T take(const std::string& in, std::size_t& pos) {
  if (pos + sizeof(T) > in.size()) throw IntegrityError("checkpoint truncated");
  T v;
  std::memcpy(&v, in.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}
}  // namespace detail

inline std::string serialize_checkpoint(const ModelCheckpoint& ck) {
  const nlohmann::json header = {{"task", to_string(ck.task)},        {"config", ck.config},
                                 {"best_epoch", ck.best_epoch},       {"created_at", ck.created_at},
                                 {"target_mean", ck.target_mean},     {"target_std", ck.target_std}};
  const std::string h = header.dump();
  std::string out(detail::kMagic, 4);
  detail::put<std::uint32_t>(out, detail::kFormatVersion);
  detail::put<std::uint64_t>(out, h.size());
  out += h;
  detail::put<std::uint64_t>(out, ck.weights.size());
  out.append(reinterpret_cast<const char*>(ck.weights.data()), ck.weights.size() * sizeof(float));
  return out;
}

inline ModelCheckpoint deserialize_checkpoint(const std::string& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), detail::kMagic, 4) != 0)
    throw IntegrityError("not a checkpoint file");
  std::size_t pos = 4;
  if (detail::take<std::uint32_t>(bytes, pos) != detail::kFormatVersion)
    throw IntegrityError("unsupported checkpoint version");
  const auto hlen = detail::take<std::uint64_t>(bytes, pos);
  if (pos + hlen > bytes.size()) throw IntegrityError("checkpoint truncated");
  const auto header = nlohmann::json::parse(bytes.substr(pos, hlen));
  pos += hlen;
  ModelCheckpoint ck;
  ck.task = parse_task(header.at("task"));
  ck.config = header.at("config").get<TrainConfig>();
  ck.best_epoch = header.at("best_epoch");
  ck.created_at = header.at("created_at");
  ck.target_mean = header.at("target_mean");
  ck.target_std = header.at("target_std");
  const auto n = detail::take<std::uint64_t>(bytes, pos);
  if (pos + n * sizeof(float) != bytes.size()) throw IntegrityError("checkpoint weight blob has the wrong size");
  ck.weights.resize(n);
  std::memcpy(ck.weights.data(), bytes.data() + pos, n * sizeof(float));
  if (n != nn::Network(ck.config.arch(), 0).parameter_count())
    throw IntegrityError("checkpoint weights do not match its architecture");
  return ck;
}

inline void save_checkpoint(const ModelCheckpoint& ck, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write checkpoint " + path.string());
  const auto bytes = serialize_checkpoint(ck);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

inline ModelCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataUnavailableError("cannot read checkpoint " + path.string());
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

}  // namespace welfare::modeling
