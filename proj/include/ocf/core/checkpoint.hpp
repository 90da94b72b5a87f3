#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "ocf/core/tensor.hpp"

namespace ocf {

// Single-file archive of named double tensors plus a free-form JSON metadata
// block. Tensor payloads are raw IEEE-754 bytes, so a save/load round trip is
// bit-exact on the same platform.
struct Archive {
  std::map<std::string, Tensor> tensors;
  nlohmann::json meta;
};

namespace detail {
inline constexpr char kArchiveMagic[8] = {'O', 'C', 'F', 'A', 'R', 'C', 'H', '1'};
}

inline void save_archive(const Archive& a, const std::string& path) {
  nlohmann::json header;
  header["meta"] = a.meta;
  nlohmann::json entries = nlohmann::json::array();
  uint64_t offset = 0;
  for (const auto& [name, t] : a.tensors) {
    nlohmann::json e;
    e["name"] = name;
    e["shape"] = t.shape();
    e["offset"] = offset;
    offset += static_cast<uint64_t>(t.size()) * sizeof(double);
    entries.push_back(e);
  }
  header["tensors"] = entries;
  std::string hs = header.dump();

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("save_archive: cannot open " + path);
  f.write(detail::kArchiveMagic, 8);
  uint64_t hlen = hs.size();
  f.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
  f.write(hs.data(), static_cast<std::streamsize>(hs.size()));
  for (const auto& [name, t] : a.tensors)
    f.write(reinterpret_cast<const char*>(t.data()),
            static_cast<std::streamsize>(t.size() * sizeof(double)));
  if (!f) throw std::runtime_error("save_archive: write failure on " + path);
}

inline Archive load_archive(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("load_archive: cannot open " + path);
  char magic[8];
  f.read(magic, 8);
  if (!f || std::memcmp(magic, detail::kArchiveMagic, 8) != 0)
    throw std::runtime_error("load_archive: " + path + " is not an ocf archive");
  uint64_t hlen = 0;
  f.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
  if (!f || hlen == 0 || hlen > (1ull << 30))
    throw std::runtime_error("load_archive: corrupt header length in " + path);
  std::string hs(hlen, '\0');
  f.read(hs.data(), static_cast<std::streamsize>(hlen));
  if (!f) throw std::runtime_error("load_archive: truncated header in " + path);

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(hs);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("load_archive: bad header json in " + path + ": " + e.what());
  }

  Archive a;
  a.meta = header.value("meta", nlohmann::json::object());
  for (const auto& e : header.at("tensors")) {
    std::string name = e.at("name").get<std::string>();
    Shape shape = e.at("shape").get<Shape>();
    Tensor t(shape);
    f.read(reinterpret_cast<char*>(t.data()),
           static_cast<std::streamsize>(t.size() * sizeof(double)));
    if (!f) throw std::runtime_error("load_archive: truncated tensor '" + name + "' in " + path);
    a.tensors.emplace(std::move(name), std::move(t));
  }
  return a;
}

// FNV-1a, used to fingerprint the resolved config inside checkpoints.
inline uint64_t fnv1a64(const std::string& s) {
  uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace ocf
