#pragma once

#include <stdexcept>
#include <string>

#include "fednmap/problem.hpp"

namespace fednmap {

/// IDX file errors keep the failure kind machine-readable.
struct IdxError : std::runtime_error {
  enum class Kind { BadMagic, Truncated };
  IdxError(Kind k, const std::string& msg) : std::runtime_error(msg), kind(k) {}
  Kind kind;
};

/// u8 image file (magic 0x00000803): rows flattened and scaled to [0,1].
Mat load_idx_images(const std::string& path);

/// u8 label file (magic 0x00000801).
IntVec load_idx_labels(const std::string& path);

/// Paired image + label files; num_classes = max label + 1.
Dataset load_idx(const std::string& images_path,
                 const std::string& labels_path);

/// Writers for fixtures and synthetic desk-scale datasets. Features are
/// expected in [0,1] and quantized to u8.
void write_idx_images(const std::string& path, const Mat& features, int rows,
                      int cols);
void write_idx_labels(const std::string& path, const IntVec& labels);

}  // namespace fednmap
