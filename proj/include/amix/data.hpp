#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "amix/rng.hpp"
#include "amix/tensor.hpp"

namespace amix {

/// Isotropic Gaussian modes in the plane.
struct ModeSpec {
  std::vector<std::array<double, 2>> centers;
  double std = 0.05;

  std::size_t modes() const { return centers.size(); }
  void validate() const;
};

/// The 3x3 grid {-2, 0, 2}^2 with std 0.05.
ModeSpec nine_gaussian_modes();

struct Dataset {
  Tensor samples;  // N x d
  std::optional<std::vector<std::size_t>> labels;
  std::string name;
  /// Generation parameters, kept as text so they round-trip into reports.
  std::map<std::string, std::string> meta;

  std::size_t size() const { return samples.rows(); }
  std::size_t dim() const { return samples.cols(); }
  /// 1 + max label; 0 when unlabeled.
  std::size_t classes() const;
  void validate() const;
  /// Rows whose label equals `label`.
  Dataset subset_of_class(std::size_t label) const;
};

/// Draws a mode uniformly per point, then a Gaussian around its center.
Dataset sample_modes(const ModeSpec& modes, std::size_t n, Rng& rng, std::string name);
Dataset gen_nine_gaussians(std::size_t n, Rng& rng);
/// Rings of radius 1, 2, 3 with radial noise std 0.05 and uniform angle.
Dataset gen_three_circles(std::size_t n, Rng& rng);

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels);
/// Writes rows as unsigned bytes (value * 255, rounded) with the given image
/// extents; used for fixtures and round-trip checks.
void write_idx(const std::filesystem::path& images, const std::filesystem::path& labels, const Dataset& ds,
               std::size_t image_rows, std::size_t image_cols);

struct CsvOptions {
  bool header = false;
  /// Header name, or a zero-based column index written as digits.
  std::optional<std::string> label_column;
};

Dataset load_csv(const std::filesystem::path& path, const CsvOptions& options = {});
/// Feature columns then an optional trailing "label" column. Values are
/// printed with 17 significant digits so a reload is exact.
void write_csv(const std::filesystem::path& path, const Dataset& ds, const std::vector<std::string>& columns);

struct Batch {
  Tensor samples;
  std::vector<std::size_t> labels;  // empty for unlabeled data
  std::vector<std::size_t> indices;
};

/// One epoch over a dataset in batches of `batch_size`; the last batch may
/// be short. With shuffle on, the order is a Fisher-Yates permutation from `rng`.
class Batcher {
 public:
  Batcher(const Dataset& ds, std::size_t batch_size, Rng& rng, bool shuffle);

  bool next(Batch& out);
  std::size_t batch_count() const { return (order_.size() + batch_size_ - 1) / batch_size_; }

 private:
  const Dataset& ds_;
  std::size_t batch_size_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
};

/// Fisher-Yates permutation of 0..n-1.
std::vector<std::size_t> permutation(std::size_t n, Rng& rng);

/// Batch of rows drawn uniformly with replacement.
Batch sample_batch(const Dataset& ds, std::size_t batch_size, Rng& rng);

}  // namespace amix
