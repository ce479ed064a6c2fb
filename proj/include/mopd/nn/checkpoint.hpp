#pragma once

#include <cstring>
#include <fstream>

#include "mopd/nn/adam.hpp"
#include "mopd/nn/tape.hpp"

namespace mopd::nn {

inline uint64_t fnv1a64(const std::string& s) {
  uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

namespace ckpt_detail {

inline void write_u32(std::ofstream& f, uint32_t v) {
  f.write(reinterpret_cast<const char*>(&v), 4);
}
inline void write_u64(std::ofstream& f, uint64_t v) {
  f.write(reinterpret_cast<const char*>(&v), 8);
}
inline uint32_t read_u32(std::ifstream& f) {
  uint32_t v = 0;
  f.read(reinterpret_cast<char*>(&v), 4);
  return v;
}
inline uint64_t read_u64(std::ifstream& f) {
  uint64_t v = 0;
  f.read(reinterpret_cast<char*>(&v), 8);
  return v;
}

template <class S>
void write_mat_f32(std::ofstream& f, const MatX<S>& m) {
  write_u32(f, uint32_t(m.rows()));
  write_u32(f, uint32_t(m.cols()));
  std::vector<float> buf(size_t(m.size()));
  for (Eigen::Index j = 0; j < m.cols(); ++j)
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      buf[size_t(j) * m.rows() + i] = float(m(i, j));
  f.write(reinterpret_cast<const char*>(buf.data()), std::streamsize(buf.size() * 4));
}

template <class S>
MatX<S> read_mat_f32(std::ifstream& f) {
  uint32_t rows = read_u32(f), cols = read_u32(f);
  std::vector<float> buf(size_t(rows) * cols);
  f.read(reinterpret_cast<char*>(buf.data()), std::streamsize(buf.size() * 4));
  MatX<S> m(rows, cols);
  for (uint32_t j = 0; j < cols; ++j)
    for (uint32_t i = 0; i < rows; ++i) m(i, j) = S(buf[size_t(j) * rows + i]);
  return m;
}

inline constexpr char kMagic[9] = "MOPDCKPT";

}  // namespace ckpt_detail

// Self-describing float32 parameter archive. `config_json` is stored verbatim
// and hashed; strict loads reject hash mismatches.
template <class S>
void save_checkpoint(const std::string& path, const ParamStore<S>& store,
                     const std::string& config_json, const Adam<S>* adam = nullptr,
                     uint64_t train_step = 0) {
  using namespace ckpt_detail;
  std::ofstream f(path + ".tmp", std::ios::binary);
  if (!f) throw Error(Err::io, "cannot write checkpoint: " + path);
  f.write(kMagic, 8);
  write_u32(f, 1);  // version
  write_u64(f, fnv1a64(config_json));
  write_u32(f, uint32_t(config_json.size()));
  f.write(config_json.data(), std::streamsize(config_json.size()));
  write_u64(f, train_step);
  write_u32(f, uint32_t(store.params.size()));
  for (auto& p : store.params) {
    write_u32(f, uint32_t(p->name.size()));
    f.write(p->name.data(), std::streamsize(p->name.size()));
    write_mat_f32(f, p->value);
  }
  write_u32(f, adam ? 1u : 0u);
  if (adam) {
    write_u64(f, adam->steps_taken());
    auto& ad = const_cast<Adam<S>&>(*adam);
    for (size_t i = 0; i < store.params.size(); ++i) {
      write_mat_f32(f, ad.moment1()[i]);
      write_mat_f32(f, ad.moment2()[i]);
    }
  }
  f.close();
  if (!f) throw Error(Err::io, "short checkpoint write: " + path);
  std::remove(path.c_str());
  if (std::rename((path + ".tmp").c_str(), path.c_str()) != 0)
    throw Error(Err::io, "cannot move checkpoint into place: " + path);
}

struct CheckpointInfo {
  std::string config_json;
  uint64_t config_hash = 0;
  uint64_t train_step = 0;
  bool has_optimizer = false;
};

// Loads parameters into an existing store (names and shapes must line up).
// When `expected_config_json` is non-empty and `allow_mismatch` is false, the
// stored hash must match.
template <class S>
CheckpointInfo load_checkpoint(const std::string& path, ParamStore<S>& store,
                               const std::string& expected_config_json = "",
                               bool allow_mismatch = false, Adam<S>* adam = nullptr) {
  using namespace ckpt_detail;
  std::ifstream f(path, std::ios::binary);
  if (!f) throw Error(Err::io, "cannot open checkpoint: " + path);
  char magic[8];
  f.read(magic, 8);
  if (std::memcmp(magic, kMagic, 8) != 0) throw Error(Err::io, "not a checkpoint: " + path);
  uint32_t version = read_u32(f);
  if (version != 1) throw Error(Err::io, "unsupported checkpoint version");
  CheckpointInfo info;
  info.config_hash = read_u64(f);
  uint32_t json_len = read_u32(f);
  info.config_json.resize(json_len);
  f.read(info.config_json.data(), json_len);
  info.train_step = read_u64(f);
  if (!expected_config_json.empty() && !allow_mismatch &&
      fnv1a64(expected_config_json) != info.config_hash)
    throw Error(Err::config, "checkpoint config hash mismatch (pass allow_mismatch to override)");
  uint32_t n = read_u32(f);
  if (n != store.params.size())
    throw Error(Err::config, "checkpoint parameter count mismatch");
  for (uint32_t i = 0; i < n; ++i) {
    uint32_t name_len = read_u32(f);
    std::string name(name_len, '\0');
    f.read(name.data(), name_len);
    MatX<S> m = read_mat_f32<S>(f);
    auto p = store.find(name);
    if (!p) throw Error(Err::config, "checkpoint has unknown param: " + name);
    if (p->value.rows() != m.rows() || p->value.cols() != m.cols())
      throw Error(Err::config, "checkpoint shape mismatch for " + name);
    p->value = std::move(m);
  }
  uint32_t has_adam = read_u32(f);
  info.has_optimizer = has_adam != 0;
  if (has_adam && adam) {
    adam->set_steps_taken(read_u64(f));
    for (size_t i = 0; i < store.params.size(); ++i) {
      adam->moment1()[i] = read_mat_f32<S>(f);
      adam->moment2()[i] = read_mat_f32<S>(f);
    }
  }
  if (!f) throw Error(Err::io, "truncated checkpoint: " + path);
  return info;
}

}  // namespace mopd::nn
