#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "scenead/core/nn.hpp"
#include "scenead/io/files.hpp"

namespace scenead::io {

// Self-describing tensor container:
//   8-byte magic "SCENEAD1", uint64 little-endian header length,
//   JSON header {"meta": {...}, "tensors": [{"name", "shape", "offset"}]},
//   then float32 little-endian payloads at the given byte offsets.
struct TensorArchive {
  nlohmann::json meta = nlohmann::json::object();
  std::map<std::string, Tensor<float>> tensors;
};

inline constexpr char kArchiveMagic[8] = {'S', 'C', 'E', 'N', 'E', 'A', 'D', '1'};

inline void save_archive(const fs::path& path, const TensorArchive& a) {
  nlohmann::json index = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, t] : a.tensors) {
    index.push_back({{"name", name}, {"shape", t.shape()}, {"offset", offset}});
    offset += t.numel() * sizeof(float);
  }
  const std::string header = nlohmann::json{{"meta", a.meta}, {"tensors", index}}.dump();
  atomic_write(path, [&](const fs::path& tmp) {
    std::ofstream f(tmp, std::ios::binary);
    if (!f) throw IoError("cannot open " + tmp.string());
    f.write(kArchiveMagic, 8);
    const std::uint64_t len = header.size();
    f.write(reinterpret_cast<const char*>(&len), sizeof len);
    f.write(header.data(), static_cast<std::streamsize>(header.size()));
    for (const auto& [name, t] : a.tensors)
      f.write(reinterpret_cast<const char*>(t.data()), static_cast<std::streamsize>(t.numel() * sizeof(float)));
    if (!f.flush()) throw IoError("write failed: " + tmp.string());
  });
}

inline TensorArchive load_archive(const fs::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot read archive " + path.string());
  char magic[8];
  std::uint64_t len = 0;
  if (!f.read(magic, 8) || std::memcmp(magic, kArchiveMagic, 8) != 0)
    throw IoError(path.string() + " is not a scenead tensor archive");
  if (!f.read(reinterpret_cast<char*>(&len), sizeof len) || len > (1ULL << 32))
    throw IoError("corrupt archive header in " + path.string());
  std::string header(len, '\0');
  if (!f.read(header.data(), static_cast<std::streamsize>(len))) throw IoError("truncated archive " + path.string());
  const auto h = nlohmann::json::parse(header);
  const std::streamoff base = f.tellg();
  TensorArchive a;
  a.meta = h.at("meta");
  for (const auto& e : h.at("tensors")) {
    Tensor<float> t(e.at("shape").get<Shape>());
    f.seekg(base + static_cast<std::streamoff>(e.at("offset").get<std::uint64_t>()));
    if (!f.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.numel() * sizeof(float))))
      throw IoError("truncated tensor '" + e.at("name").get<std::string>() + "' in " + path.string());
    a.tensors.emplace(e.at("name").get<std::string>(), std::move(t));
  }
  return a;
}

// Adds every state entry, with `strip_prefix` removed from names that carry it.
template <typename T>
void add_state(TensorArchive& a, const nn::StateList<T>& s, const std::string& strip_prefix = "") {
  auto key = [&](const std::string& n) {
    return !strip_prefix.empty() && n.rfind(strip_prefix, 0) == 0 ? n.substr(strip_prefix.size()) : n;
  };
  for (const auto& p : s.params) a.tensors[key(p.name)] = p.var.value().template cast<float>();
  for (const auto& b : s.buffers) a.tensors[key(b.name)] = b.tensor->template cast<float>();
}

// Copies archive tensors into the state entries named `prefix + name`
// (prefix stripped before lookup). Every state entry under the prefix must be
// present with the same shape.
template <typename T>
std::size_t load_state(nn::StateList<T>& s, const TensorArchive& a, const std::string& strip_prefix = "") {
  std::size_t loaded = 0;
  auto find = [&](const std::string& name) -> const Tensor<float>& {
    std::string key = name;
    if (!strip_prefix.empty()) {
      if (key.rfind(strip_prefix, 0) != 0) throw IoError("state entry '" + name + "' lacks prefix " + strip_prefix);
      key = key.substr(strip_prefix.size());
    }
    auto it = a.tensors.find(key);
    if (it == a.tensors.end()) throw IoError("archive has no tensor '" + key + "'");
    return it->second;
  };
  for (auto& p : s.params) {
    const auto& t = find(p.name);
    if (t.shape() != p.var.value().shape())
      throw IoError("shape mismatch for '" + p.name + "': archive " + shape_str(t.shape()) + " vs model " +
                    shape_str(p.var.value().shape()));
    p.var.mutable_value() = t.template cast<T>();
    ++loaded;
  }
  for (auto& b : s.buffers) {
    const auto& t = find(b.name);
    if (t.shape() != b.tensor->shape()) throw IoError("shape mismatch for buffer '" + b.name + "'");
    *b.tensor = t.template cast<T>();
    ++loaded;
  }
  return loaded;
}

}  // namespace scenead::io
