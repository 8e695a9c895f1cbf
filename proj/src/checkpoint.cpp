#include "cppd/checkpoint.hpp"

#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace cppd {

namespace {

void put_u16(std::ostream& out, uint16_t v) {
  char b[2] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff)};
  out.write(b, 2);
}

void put_u32(std::ostream& out, uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b, 4);
}

uint16_t get_u16(std::istream& in) {
  unsigned char b[2];
  in.read(reinterpret_cast<char*>(b), 2);
  return static_cast<uint16_t>(b[0] | (b[1] << 8));
}

uint32_t get_u32(std::istream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

}  // namespace

void save_checkpoint_entries(const std::string& path,
                             const std::vector<CheckpointEntry>& entries) {
  std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("checkpoint: cannot write " + tmp);
    out.write("CPPD", 4);
    put_u32(out, kCheckpointVersion);
    put_u32(out, static_cast<uint32_t>(entries.size()));
    for (const auto& e : entries) {
      if (e.name.size() > 0xffff) throw std::runtime_error("checkpoint: tensor name too long");
      put_u16(out, static_cast<uint16_t>(e.name.size()));
      out.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
      out.put(static_cast<char>(e.dtype));
      out.put(static_cast<char>(e.dims.size()));
      for (int d : e.dims) put_u32(out, static_cast<uint32_t>(d));
      out.write(e.raw.data(), static_cast<std::streamsize>(e.raw.size()));
    }
    if (!out) throw std::runtime_error("checkpoint: write failed for " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw std::runtime_error("checkpoint: rename failed for " + path);
}

std::vector<CheckpointEntry> load_checkpoint_entries(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path);
  char magic[4];
  in.read(magic, 4);
  if (in.gcount() != 4 || std::string(magic, 4) != "CPPD")
    throw std::runtime_error("checkpoint: bad magic in " + path);
  uint32_t version = get_u32(in);
  if (version != kCheckpointVersion)
    throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
  uint32_t count = get_u32(in);
  std::vector<CheckpointEntry> entries;
  entries.reserve(count);
  for (uint32_t i = 0; i < count; ++i) {
    CheckpointEntry e;
    uint16_t name_len = get_u16(in);
    e.name.resize(name_len);
    in.read(e.name.data(), name_len);
    e.dtype = in.get();
    int rank = in.get();
    if (e.dtype < 0 || e.dtype > 1 || rank < 0)
      throw std::runtime_error("checkpoint: corrupt tensor header in " + path);
    int64_t numel = 1;
    for (int d = 0; d < rank; ++d) {
      e.dims.push_back(static_cast<int>(get_u32(in)));
      numel *= e.dims.back();
    }
    size_t bytes = static_cast<size_t>(numel) * (e.dtype == 0 ? 4 : 8);
    e.raw.resize(bytes);
    in.read(e.raw.data(), static_cast<std::streamsize>(bytes));
    if (in.gcount() != static_cast<std::streamsize>(bytes))
      throw std::runtime_error("checkpoint: truncated tensor data in " + path);
    entries.push_back(std::move(e));
  }
  return entries;
}

}  // namespace cppd
