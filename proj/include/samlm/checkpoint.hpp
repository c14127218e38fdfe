#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "samlm/tensor.hpp"

namespace samlm {

// Checkpoint layout: one line of JSON header, then every tensor's values as
// little-endian IEEE-754 doubles, tensors in header order.
//
//   {"format":"samlm-checkpoint","version":1,"tensors":[{"name":..,"rows":..,"cols":..}],"config":{..}}\n
//   <raw doubles>
inline constexpr int kCheckpointVersion = 1;

namespace detail {
inline std::uint64_t to_little_endian(std::uint64_t x) {
  if constexpr (std::endian::native == std::endian::little) {
    return x;
  } else {
    std::uint64_t out = 0;
    for (int i = 0; i < 8; ++i) out |= ((x >> (8 * i)) & 0xFFu) << (8 * (7 - i));
    return out;
  }
}
}  // namespace detail

inline void save_checkpoint(const std::filesystem::path& path, const ParamStore& store,
                            const nlohmann::json& config) {
  nlohmann::json header;
  header["format"] = "samlm-checkpoint";
  header["version"] = kCheckpointVersion;
  header["config"] = config;
  nlohmann::json tensors = nlohmann::json::array();
  for (ParamId id = 0; id < store.size(); ++id) {
    tensors.push_back({{"name", store.name(id)},
                       {"rows", store.value(id).rows()},
                       {"cols", store.value(id).cols()}});
  }
  header["tensors"] = std::move(tensors);

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open checkpoint for writing: " + path.string());
  const std::string text = header.dump();
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  out.put('\n');
  for (const Mat& m : store.values()) {
    for (double x : m.data()) {
      std::uint64_t bits = detail::to_little_endian(std::bit_cast<std::uint64_t>(x));
      char buf[8];
      std::memcpy(buf, &bits, 8);
      out.write(buf, 8);
    }
  }
  if (!out) throw Error("failed writing checkpoint: " + path.string());
}

struct Checkpoint {
  ParamStore store;
  nlohmann::json config;
};

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint: " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw Error("checkpoint has no header: " + path.string());
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception& e) {
    throw Error("checkpoint header is not valid JSON: " + std::string(e.what()));
  }
  if (header.value("format", "") != "samlm-checkpoint") throw Error("not a samlm checkpoint: " + path.string());
  if (header.value("version", 0) != kCheckpointVersion) throw Error("unsupported checkpoint version");

  Checkpoint ckpt;
  ckpt.config = header.value("config", nlohmann::json::object());
  for (const auto& t : header.at("tensors")) {
    Mat m(t.at("rows").get<std::size_t>(), t.at("cols").get<std::size_t>());
    for (double& x : m.data()) {
      char buf[8];
      if (!in.read(buf, 8)) throw Error("checkpoint truncated: " + path.string());
      std::uint64_t bits = 0;
      std::memcpy(&bits, buf, 8);
      x = std::bit_cast<double>(detail::to_little_endian(bits));
    }
    ckpt.store.add(t.at("name").get<std::string>(), std::move(m));
  }
  if (in.peek() != std::char_traits<char>::eof()) throw Error("checkpoint has trailing bytes: " + path.string());
  return ckpt;
}

}  // namespace samlm
