#include "fednmap/idx.hpp"

#include <cmath>
#include <cstdint>
#include <fstream>
#include <vector>

namespace fednmap {

namespace {

constexpr std::uint32_t kImageMagic = 0x00000803;
constexpr std::uint32_t kLabelMagic = 0x00000801;

std::uint32_t read_be32(std::istream& in, const std::string& path) {
  unsigned char buf[4];
  in.read(reinterpret_cast<char*>(buf), 4);
  if (!in)
    throw IdxError(IdxError::Kind::Truncated, path + ": truncated header");
  return (std::uint32_t(buf[0]) << 24) | (std::uint32_t(buf[1]) << 16) |
         (std::uint32_t(buf[2]) << 8) | std::uint32_t(buf[3]);
}

void write_be32(std::ostream& out, std::uint32_t v) {
  unsigned char buf[4] = {static_cast<unsigned char>(v >> 24),
                          static_cast<unsigned char>(v >> 16),
                          static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v)};
  out.write(reinterpret_cast<const char*>(buf), 4);
}

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  return in;
}

}  // namespace

Mat load_idx_images(const std::string& path) {
  std::ifstream in = open_input(path);
  std::uint32_t magic = read_be32(in, path);
  if (magic != kImageMagic)
    throw IdxError(IdxError::Kind::BadMagic,
                   path + ": bad magic for an IDX image file");
  std::uint32_t count = read_be32(in, path);
  std::uint32_t rows = read_be32(in, path);
  std::uint32_t cols = read_be32(in, path);
  std::size_t pixels = std::size_t(count) * rows * cols;
  std::vector<unsigned char> raw(pixels);
  in.read(reinterpret_cast<char*>(raw.data()),
          static_cast<std::streamsize>(pixels));
  if (static_cast<std::size_t>(in.gcount()) != pixels)
    throw IdxError(IdxError::Kind::Truncated, path + ": truncated pixel data");
  Mat features(count, rows * cols);
  for (std::uint32_t r = 0; r < count; ++r)
    for (std::uint32_t j = 0; j < rows * cols; ++j)
      features(r, j) = raw[std::size_t(r) * rows * cols + j] / 255.0;
  return features;
}

IntVec load_idx_labels(const std::string& path) {
  std::ifstream in = open_input(path);
  std::uint32_t magic = read_be32(in, path);
  if (magic != kLabelMagic)
    throw IdxError(IdxError::Kind::BadMagic,
                   path + ": bad magic for an IDX label file");
  std::uint32_t count = read_be32(in, path);
  std::vector<unsigned char> raw(count);
  in.read(reinterpret_cast<char*>(raw.data()), count);
  if (static_cast<std::size_t>(in.gcount()) != count)
    throw IdxError(IdxError::Kind::Truncated, path + ": truncated label data");
  IntVec labels(count);
  for (std::uint32_t r = 0; r < count; ++r) labels[r] = raw[r];
  return labels;
}

Dataset load_idx(const std::string& images_path,
                 const std::string& labels_path) {
  Dataset ds;
  ds.features = load_idx_images(images_path);
  ds.labels = load_idx_labels(labels_path);
  if (ds.features.rows() != ds.labels.size())
    throw std::runtime_error("image/label counts disagree");
  ds.num_classes = ds.labels.size() ? ds.labels.maxCoeff() + 1 : 0;
  return ds;
}

void write_idx_images(const std::string& path, const Mat& features, int rows,
                      int cols) {
  if (features.cols() != static_cast<Eigen::Index>(rows) * cols)
    throw std::invalid_argument("feature width != rows*cols");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  write_be32(out, kImageMagic);
  write_be32(out, static_cast<std::uint32_t>(features.rows()));
  write_be32(out, static_cast<std::uint32_t>(rows));
  write_be32(out, static_cast<std::uint32_t>(cols));
  for (Eigen::Index r = 0; r < features.rows(); ++r) {
    for (Eigen::Index j = 0; j < features.cols(); ++j) {
      double v = std::clamp(features(r, j), 0.0, 1.0);
      unsigned char b = static_cast<unsigned char>(std::lround(v * 255.0));
      out.write(reinterpret_cast<const char*>(&b), 1);
    }
  }
}

void write_idx_labels(const std::string& path, const IntVec& labels) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  write_be32(out, kLabelMagic);
  write_be32(out, static_cast<std::uint32_t>(labels.size()));
  for (Eigen::Index r = 0; r < labels.size(); ++r) {
    unsigned char b = static_cast<unsigned char>(labels[r]);
    out.write(reinterpret_cast<const char*>(&b), 1);
  }
}

}  // namespace fednmap
