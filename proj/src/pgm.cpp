#include "cppd/pgm.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace cppd {

void write_pgm(const std::string& path, const Tensor<float>& image) {
  if (image.rank() != 2) throw std::invalid_argument("pgm: expected rank-2 image");
  int h = image.dim(0), w = image.dim(1);
  std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("pgm: cannot write " + tmp);
    out << "P5\n" << w << ' ' << h << "\n255\n";
    std::vector<unsigned char> row(static_cast<size_t>(w));
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        float v = std::clamp(image.at({y, x}), 0.0f, 1.0f);
        row[static_cast<size_t>(x)] = static_cast<unsigned char>(std::lround(v * 255.0f));
      }
      out.write(reinterpret_cast<const char*>(row.data()), w);
    }
    if (!out) throw std::runtime_error("pgm: write failed for " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw std::runtime_error("pgm: rename failed for " + path);
}

namespace {

int read_pgm_int(std::istream& in) {
  // Skips whitespace and '#' comments per the PNM grammar.
  for (;;) {
    int c = in.peek();
    if (c == '#') {
      std::string line;
      std::getline(in, line);
    } else if (std::isspace(c)) {
      in.get();
    } else {
      break;
    }
  }
  int v = -1;
  in >> v;
  return v;
}

}  // namespace

Tensor<float> read_pgm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("pgm: cannot open " + path);
  std::string magic;
  in >> magic;
  if (magic != "P5") throw std::runtime_error("pgm: not a binary PGM: " + path);
  int w = read_pgm_int(in);
  int h = read_pgm_int(in);
  int maxval = read_pgm_int(in);
  if (w <= 0 || h <= 0 || maxval != 255)
    throw std::runtime_error("pgm: malformed header in " + path);
  in.get();  // single whitespace after maxval
  std::vector<unsigned char> bytes(static_cast<size_t>(w) * h);
  in.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (in.gcount() != static_cast<std::streamsize>(bytes.size()))
    throw std::runtime_error("pgm: truncated pixel data in " + path);
  Tensor<float> image({h, w});
  for (size_t i = 0; i < bytes.size(); ++i)
    image[static_cast<int64_t>(i)] = static_cast<float>(bytes[i]) / 255.0f;
  return image;
}

}  // namespace cppd
