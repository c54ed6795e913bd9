#pragma once

#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "eyesim/tensor.hpp"

namespace eyesim {

// Named learnable tensors. Names are unique; a tensor's shape is fixed once
// the entry exists. Ordered by name so that serialization and optimizer
// iteration are deterministic.
template <class T>
class ParamStore {
 public:
  void add(const std::string& name, Tensor<T> t, const std::string& role = "") {
    require_config(entries_.find(name) == entries_.end(), "ParamStore: duplicate name " + name);
    entries_.emplace(name, std::move(t));
    if (!role.empty()) roles_[name] = role;
  }

  bool has(const std::string& name) const { return entries_.count(name) != 0; }

  Tensor<T>& at(const std::string& name) {
    auto it = entries_.find(name);
    require_config(it != entries_.end(), "ParamStore: unknown parameter " + name);
    return it->second;
  }
  const Tensor<T>& at(const std::string& name) const {
    auto it = entries_.find(name);
    require_config(it != entries_.end(), "ParamStore: unknown parameter " + name);
    return it->second;
  }

  void set(const std::string& name, Tensor<T> t) {
    Tensor<T>& cur = at(name);
    require_dim(cur.shape == t.shape, "ParamStore: shape is immutable for " + name);
    cur = std::move(t);
  }

  const std::string& role(const std::string& name) const {
    static const std::string empty;
    auto it = roles_.find(name);
    return it == roles_.end() ? empty : it->second;
  }

  const std::map<std::string, Tensor<T>>& entries() const { return entries_; }
  std::map<std::string, Tensor<T>>& entries() { return entries_; }

  size_t count() const { return entries_.size(); }
  int64_t total_elements() const {
    int64_t n = 0;
    for (const auto& [k, v] : entries_) n += v.numel();
    return n;
  }

  template <class U>
  ParamStore<U> cast() const {
    ParamStore<U> out;
    for (const auto& [k, v] : entries_) out.add(k, v.template cast<U>(), role(k));
    return out;
  }

 private:
  std::map<std::string, Tensor<T>> entries_;
  std::map<std::string, std::string> roles_;
};

namespace detail {

inline void put_u32(std::string& buf, uint32_t v) {
  char b[4];
  b[0] = static_cast<char>(v & 0xff);
  b[1] = static_cast<char>((v >> 8) & 0xff);
  b[2] = static_cast<char>((v >> 16) & 0xff);
  b[3] = static_cast<char>((v >> 24) & 0xff);
  buf.append(b, 4);
}

inline uint32_t get_u32(const std::string& buf, size_t off) {
  return static_cast<uint32_t>(static_cast<unsigned char>(buf[off])) |
         (static_cast<uint32_t>(static_cast<unsigned char>(buf[off + 1])) << 8) |
         (static_cast<uint32_t>(static_cast<unsigned char>(buf[off + 2])) << 16) |
         (static_cast<uint32_t>(static_cast<unsigned char>(buf[off + 3])) << 24);
}

inline void put_f32(std::string& buf, float v) {
  uint32_t u;
  std::memcpy(&u, &v, 4);
  put_u32(buf, u);
}

inline float get_f32(const std::string& buf, size_t off) {
  uint32_t u = get_u32(buf, off);
  float v;
  std::memcpy(&v, &u, 4);
  return v;
}

}  // namespace detail

// Checkpoint container: magic "EYSM", u32 LE version, u32 LE byte length of a
// UTF-8 JSON table [{name, shape, byte_offset}], then the raw little-endian
// f32 payload in table order. byte_offset is relative to the payload start.
template <class T>
void save_eysm(const std::string& path, const ParamStore<T>& store) {
  std::string payload;
  nlohmann::json table = nlohmann::json::array();
  uint64_t off = 0;
  for (const auto& [name, tensor] : store.entries()) {
    nlohmann::json e;
    e["name"] = name;
    e["shape"] = tensor.shape;
    e["byte_offset"] = off;
    table.push_back(e);
    for (int64_t i = 0; i < tensor.numel(); ++i)
      detail::put_f32(payload, static_cast<float>(tensor[i]));
    off += static_cast<uint64_t>(tensor.numel()) * 4;
  }
  std::string js = table.dump();
  std::string buf;
  buf.append("EYSM", 4);
  detail::put_u32(buf, kEysmFormatVersion);
  detail::put_u32(buf, static_cast<uint32_t>(js.size()));
  buf += js;
  buf += payload;
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot open for writing: " + path);
  f.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!f) throw IoError("write failed: " + path);
}

template <class T>
ParamStore<T> load_eysm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open: " + path);
  std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
  if (buf.size() < 12 || buf.compare(0, 4, "EYSM") != 0)
    throw IoError("not an EYSM checkpoint: " + path);
  uint32_t version = detail::get_u32(buf, 4);
  if (version != kEysmFormatVersion) throw IoError("unsupported EYSM version in " + path);
  uint32_t jlen = detail::get_u32(buf, 8);
  if (12 + static_cast<size_t>(jlen) > buf.size()) throw IoError("truncated EYSM header: " + path);
  nlohmann::json table;
  try {
    table = nlohmann::json::parse(buf.substr(12, jlen));
  } catch (const std::exception& e) {
    throw IoError(std::string("bad EYSM table: ") + e.what());
  }
  const size_t payload_start = 12 + jlen;
  ParamStore<T> store;
  for (const auto& e : table) {
    std::string name = e.at("name").get<std::string>();
    Shape shape = e.at("shape").get<Shape>();
    uint64_t off = e.at("byte_offset").get<uint64_t>();
    Tensor<T> t(shape);
    size_t base = payload_start + off;
    if (base + static_cast<size_t>(t.numel()) * 4 > buf.size())
      throw IoError("EYSM payload out of bounds for " + name);
    for (int64_t i = 0; i < t.numel(); ++i)
      t[i] = static_cast<T>(detail::get_f32(buf, base + static_cast<size_t>(i) * 4));
    store.add(name, std::move(t));
  }
  return store;
}

}  // namespace eyesim
