#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "stcl/encoder.hpp"
#include "stcl/tensor.hpp"

namespace stcl {

// Flat binary container of named float64 arrays:
//   bytes 0..7   magic "STCLBIN1"
//   bytes 8..15  uint64 little-endian header length J
//   J bytes      UTF-8 JSON: {"arrays": [{"name", "shape", "offset"}...],
//                             "config": <caller-provided echo>}
//   payload      raw little-endian float64 data, tightly packed in array
//                order; offsets are in bytes from the payload start.
inline constexpr char kCheckpointMagic[8] = {'S', 'T', 'C', 'L', 'B', 'I', 'N', '1'};

inline void save_arrays(const std::string& path,
                        const std::vector<std::pair<std::string, const Tensor*>>& arrays,
                        const nlohmann::json& config_echo) {
  nlohmann::json header;
  header["arrays"] = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, t] : arrays) {
    nlohmann::json entry;
    entry["name"] = name;
    entry["shape"] = t->shape();
    entry["offset"] = offset;
    header["arrays"].push_back(entry);
    offset += t->numel() * sizeof(double);
  }
  header["config"] = config_echo;
  const std::string hs = header.dump();

  std::ofstream out(path, std::ios::binary);
  if (!out) throw io_error("save_arrays: cannot open " + path + " for writing");
  out.write(kCheckpointMagic, 8);
  const std::uint64_t hlen = hs.size();
  char lenbuf[8];
  for (int i = 0; i < 8; ++i) lenbuf[i] = static_cast<char>((hlen >> (8 * i)) & 0xff);
  out.write(lenbuf, 8);
  out.write(hs.data(), static_cast<std::streamsize>(hs.size()));
  for (const auto& [name, t] : arrays) {
    out.write(reinterpret_cast<const char*>(t->data().data()),
              static_cast<std::streamsize>(t->numel() * sizeof(double)));
  }
  if (!out) throw io_error("save_arrays: write to " + path + " failed");
}

struct Archive {
  nlohmann::json header;
  std::map<std::string, Tensor> arrays;
};

inline Archive load_arrays(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw io_error("load_arrays: cannot open " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kCheckpointMagic, 8) != 0) {
    throw data_error("load_arrays: " + path + " is not a checkpoint container");
  }
  char lenbuf[8];
  in.read(lenbuf, 8);
  std::uint64_t hlen = 0;
  for (int i = 0; i < 8; ++i) {
    hlen |= static_cast<std::uint64_t>(static_cast<unsigned char>(lenbuf[i])) << (8 * i);
  }
  std::string hs(hlen, '\0');
  in.read(hs.data(), static_cast<std::streamsize>(hlen));
  if (!in) throw data_error("load_arrays: truncated header in " + path);

  Archive ar;
  ar.header = nlohmann::json::parse(hs, nullptr, false);
  if (ar.header.is_discarded()) {
    throw data_error("load_arrays: malformed header JSON in " + path);
  }
  for (const auto& entry : ar.header.at("arrays")) {
    Shape shape = entry.at("shape").get<Shape>();
    std::vector<double> data(shape_numel(shape));
    in.read(reinterpret_cast<char*>(data.data()),
            static_cast<std::streamsize>(data.size() * sizeof(double)));
    if (!in) throw data_error("load_arrays: truncated payload in " + path);
    ar.arrays.emplace(entry.at("name").get<std::string>(),
                      Tensor(std::move(shape), std::move(data)));
  }
  return ar;
}

// ---------------------------------------------------------------------------
// encoder checkpoints

inline nlohmann::json encoder_config_to_json(const EncoderConfig& cfg) {
  return {{"m", cfg.m},         {"h", cfg.h},  {"hidden", cfg.hidden},
          {"blocks", cfg.blocks}, {"d", cfg.d}, {"proj_dim", cfg.proj_dim}};
}

inline EncoderConfig encoder_config_from_json(const nlohmann::json& j) {
  EncoderConfig cfg;
  cfg.m = j.at("m").get<std::size_t>();
  cfg.h = j.at("h").get<std::size_t>();
  cfg.hidden = j.at("hidden").get<std::size_t>();
  cfg.blocks = j.at("blocks").get<std::size_t>();
  cfg.d = j.at("d").get<std::size_t>();
  cfg.proj_dim = j.value("proj_dim", std::size_t{0});
  cfg.validate();
  return cfg;
}

inline void save_encoder(const std::string& path, const EncoderParams& params,
                         const EncoderConfig& cfg) {
  EncoderParams p = params;  // named() is non-const; copies share nodes
  std::vector<std::pair<std::string, const Tensor*>> arrays;
  for (const auto& [name, t] : p.named()) arrays.emplace_back(name, t);
  save_arrays(path, arrays, encoder_config_to_json(cfg));
}

struct EncoderCheckpoint {
  EncoderConfig config;
  EncoderParams params;
};

inline EncoderCheckpoint load_encoder(const std::string& path) {
  Archive ar = load_arrays(path);
  EncoderCheckpoint ck;
  ck.config = encoder_config_from_json(ar.header.at("config"));
  Rng rng(0);
  ck.params = init_encoder(ck.config, rng);  // establishes shapes and naming
  for (auto& [name, t] : ck.params.named()) {
    auto it = ar.arrays.find(name);
    if (it == ar.arrays.end()) {
      throw data_error("load_encoder: " + path + " is missing array '" + name + "'");
    }
    if (it->second.shape() != t->shape()) {
      throw data_error("load_encoder: array '" + name + "' has shape " +
                       shape_str(it->second.shape()) + ", expected " +
                       shape_str(t->shape()));
    }
    *t = it->second.clone(true);
  }
  return ck;
}

}  // namespace stcl
