#pragma once

// Binary checkpoint layout (all integers and floats little-endian):
//
//   "ILMTCKPT"                 8-byte magic
//   u32 version                currently 1
//   u32 header_len, bytes      JSON object: family, vocab_size, dims{...}
//   u32 param_count
//   repeated param_count times, sorted by name:
//     u32 name_len, bytes      parameter name
//     u64 rows, u64 cols
//     f64[rows*cols]           column-major payload

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>

#include <nlohmann/json.hpp>

#include "ilmt/param_store.hpp"

namespace ilmt {

struct CheckpointHeader {
  std::string family;  // "rnnt", "aed" or "lm"
  int vocab_size = 0;
  std::map<std::string, int> dims;

  friend bool operator==(const CheckpointHeader&, const CheckpointHeader&) = default;
};

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  os.write(b, 4);
}

inline void put_u64(std::ostream& os, std::uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  os.write(b, 8);
}

inline std::uint64_t get_uint(std::istream& is, int nbytes) {
  unsigned char b[8] = {};
  is.read(reinterpret_cast<char*>(b), nbytes);
  if (!is) throw std::runtime_error("checkpoint: truncated file");
  std::uint64_t v = 0;
  for (int i = nbytes - 1; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

inline std::string get_bytes(std::istream& is, std::size_t n) {
  std::string s(n, '\0');
  is.read(s.data(), static_cast<std::streamsize>(n));
  if (!is) throw std::runtime_error("checkpoint: truncated file");
  return s;
}

}  // namespace detail

inline constexpr char kCheckpointMagic[8] = {'I', 'L', 'M', 'T', 'C', 'K', 'P', 'T'};

inline void write_checkpoint(std::ostream& os, const CheckpointHeader& header, const ParamStore& params) {
  os.write(kCheckpointMagic, 8);
  detail::put_u32(os, 1);
  nlohmann::json h = {{"family", header.family}, {"vocab_size", header.vocab_size}, {"dims", header.dims}};
  const std::string hs = h.dump();
  detail::put_u32(os, static_cast<std::uint32_t>(hs.size()));
  os.write(hs.data(), static_cast<std::streamsize>(hs.size()));
  detail::put_u32(os, static_cast<std::uint32_t>(params.entries().size()));
  for (const auto& [name, m] : params.entries()) {
    detail::put_u32(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    detail::put_u64(os, static_cast<std::uint64_t>(m.rows()));
    detail::put_u64(os, static_cast<std::uint64_t>(m.cols()));
    for (Eigen::Index i = 0; i < m.size(); ++i) detail::put_u64(os, std::bit_cast<std::uint64_t>(m.data()[i]));
  }
}

inline void read_checkpoint(std::istream& is, CheckpointHeader& header, ParamStore& params) {
  const std::string magic = detail::get_bytes(is, 8);
  if (std::memcmp(magic.data(), kCheckpointMagic, 8) != 0) throw std::runtime_error("checkpoint: bad magic");
  const auto version = detail::get_uint(is, 4);
  if (version != 1) throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
  const auto hlen = detail::get_uint(is, 4);
  const auto h = nlohmann::json::parse(detail::get_bytes(is, hlen));
  header.family = h.at("family").get<std::string>();
  header.vocab_size = h.at("vocab_size").get<int>();
  header.dims = h.at("dims").get<std::map<std::string, int>>();
  const auto count = detail::get_uint(is, 4);
  params = ParamStore{};
  for (std::uint64_t k = 0; k < count; ++k) {
    const auto nlen = detail::get_uint(is, 4);
    const std::string name = detail::get_bytes(is, nlen);
    const auto rows = static_cast<Eigen::Index>(detail::get_uint(is, 8));
    const auto cols = static_cast<Eigen::Index>(detail::get_uint(is, 8));
    params.add(name, rows, cols);
    auto m = params.mut(name);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = std::bit_cast<double>(detail::get_uint(is, 8));
  }
}

inline void save_checkpoint(const std::string& path, const CheckpointHeader& header, const ParamStore& params) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open '" + path + "' for writing");
  write_checkpoint(os, header, params);
  if (!os) throw std::runtime_error("failed writing '" + path + "'");
}

inline void load_checkpoint(const std::string& path, CheckpointHeader& header, ParamStore& params) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint '" + path + "'");
  read_checkpoint(is, header, params);
}

}  // namespace ilmt
