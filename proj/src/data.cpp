#include "amix/data.hpp"

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <numbers>
#include <sstream>

#include "amix/error.hpp"

namespace amix {

void ModeSpec::validate() const {
  if (centers.empty()) throw InvalidArgument("ModeSpec: no centers");
  if (!(std > 0.0)) throw InvalidArgument("ModeSpec: std must be positive");
  for (std::size_t a = 0; a < centers.size(); ++a) {
    for (std::size_t b = a + 1; b < centers.size(); ++b) {
      if (centers[a] == centers[b]) throw InvalidArgument("ModeSpec: duplicate center");
    }
  }
}

ModeSpec nine_gaussian_modes() {
  ModeSpec spec;
  for (double x : {-2.0, 0.0, 2.0}) {
    for (double y : {-2.0, 0.0, 2.0}) spec.centers.push_back({x, y});
  }
  spec.std = 0.05;
  return spec;
}

std::size_t Dataset::classes() const {
  if (!labels || labels->empty()) return 0;
  std::size_t mx = 0;
  for (auto l : *labels) mx = std::max(mx, l);
  return mx + 1;
}

void Dataset::validate() const {
  if (labels && labels->size() != samples.rows()) {
    throw InvalidArgument("Dataset '" + name + "': " + std::to_string(labels->size()) + " labels for " +
                          std::to_string(samples.rows()) + " samples");
  }
}

Dataset Dataset::subset_of_class(std::size_t label) const {
  if (!labels) throw InvalidArgument("subset_of_class: dataset '" + name + "' is unlabeled");
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < labels->size(); ++i) {
    if ((*labels)[i] == label) idx.push_back(i);
  }
  if (idx.empty()) throw InvalidArgument("subset_of_class: no samples with label " + std::to_string(label));
  Dataset out{samples.gather_rows(idx), std::vector<std::size_t>(idx.size(), label), name, meta};
  return out;
}

namespace {

std::string format_double(double v) {
  std::ostringstream out;
  out << std::setprecision(17) << v;
  return out.str();
}

}  // namespace

Dataset sample_modes(const ModeSpec& modes, std::size_t n, Rng& rng, std::string name) {
  modes.validate();
  Tensor samples(Shape{n, 2});
  std::vector<std::size_t> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t k = rng.index(modes.modes());
    labels[i] = k;
    samples.at(i, 0) = modes.centers[k][0] + modes.std * rng.normal();
    samples.at(i, 1) = modes.centers[k][1] + modes.std * rng.normal();
  }
  Dataset ds{std::move(samples), std::move(labels), std::move(name), {}};
  ds.meta["modes"] = std::to_string(modes.modes());
  ds.meta["mode_std"] = format_double(modes.std);
  std::ostringstream centers;
  for (std::size_t k = 0; k < modes.modes(); ++k) {
    if (k) centers << ';';
    centers << format_double(modes.centers[k][0]) << ',' << format_double(modes.centers[k][1]);
  }
  ds.meta["centers"] = centers.str();
  return ds;
}

Dataset gen_nine_gaussians(std::size_t n, Rng& rng) {
  if (n < 9) throw InvalidArgument("gen_nine_gaussians: need at least 9 samples");
  Dataset ds = sample_modes(nine_gaussian_modes(), n, rng, "nine-gaussians");
  ds.meta["layout"] = "grid";
  return ds;
}

Dataset gen_three_circles(std::size_t n, Rng& rng) {
  if (n < 3) throw InvalidArgument("gen_three_circles: need at least 3 samples");
  constexpr std::array<double, 3> kRadii{1.0, 2.0, 3.0};
  constexpr double kNoise = 0.05;
  Tensor samples(Shape{n, 2});
  std::vector<std::size_t> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t ring = rng.index(kRadii.size());
    const double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double radius = kRadii[ring] + kNoise * rng.normal();
    labels[i] = ring;
    samples.at(i, 0) = radius * std::cos(angle);
    samples.at(i, 1) = radius * std::sin(angle);
  }
  Dataset ds{std::move(samples), std::move(labels), "three-circles", {}};
  ds.meta["radii"] = "1,2,3";
  ds.meta["radial_std"] = format_double(kNoise);
  return ds;
}

namespace {

std::vector<unsigned char> read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError(FormatError::Kind::Io, "cannot open " + path.string());
  return std::vector<unsigned char>(std::istreambuf_iterator<char>(in), {});
}

std::uint32_t read_be32(const std::vector<unsigned char>& bytes, std::size_t offset, const std::filesystem::path& path) {
  if (offset + 4 > bytes.size()) throw FormatError(FormatError::Kind::Truncated, path.string() + ": truncated header");
  return (std::uint32_t{bytes[offset]} << 24) | (std::uint32_t{bytes[offset + 1]} << 16) |
         (std::uint32_t{bytes[offset + 2]} << 8) | std::uint32_t{bytes[offset + 3]};
}

void write_be32(std::ostream& out, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16), static_cast<char>(v >> 8),
                     static_cast<char>(v)};
  out.write(b, 4);
}

constexpr std::uint32_t kImageMagic = 0x00000803;
constexpr std::uint32_t kLabelMagic = 0x00000801;

}  // namespace

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels) {
  const auto img = read_all(images);
  const auto lab = read_all(labels);

  if (read_be32(img, 0, images) != kImageMagic) {
    throw FormatError(FormatError::Kind::BadMagic, images.string() + ": bad IDX image magic");
  }
  if (read_be32(lab, 0, labels) != kLabelMagic) {
    throw FormatError(FormatError::Kind::BadMagic, labels.string() + ": bad IDX label magic");
  }
  const std::size_t n = read_be32(img, 4, images);
  const std::size_t rows = read_be32(img, 8, images);
  const std::size_t cols = read_be32(img, 12, images);
  const std::size_t n_labels = read_be32(lab, 4, labels);
  if (n != n_labels) {
    throw FormatError(FormatError::Kind::CountMismatch, "IDX count mismatch: " + std::to_string(n) + " images vs " +
                                                            std::to_string(n_labels) + " labels");
  }
  if (n == 0 || rows == 0 || cols == 0) throw FormatError(FormatError::Kind::Parse, images.string() + ": empty IDX");
  const std::size_t pixels = rows * cols;
  if (img.size() < 16 + n * pixels) {
    throw FormatError(FormatError::Kind::Truncated, images.string() + ": truncated pixel payload");
  }
  if (lab.size() < 8 + n) throw FormatError(FormatError::Kind::Truncated, labels.string() + ": truncated labels");

  Tensor samples(Shape{n, pixels});
  for (std::size_t i = 0; i < n * pixels; ++i) samples[i] = static_cast<double>(img[16 + i]) / 255.0;
  std::vector<std::size_t> y(n);
  for (std::size_t i = 0; i < n; ++i) y[i] = lab[8 + i];
  Dataset ds{std::move(samples), std::move(y), images.stem().string(), {}};
  ds.meta["image_rows"] = std::to_string(rows);
  ds.meta["image_cols"] = std::to_string(cols);
  return ds;
}

void write_idx(const std::filesystem::path& images, const std::filesystem::path& labels, const Dataset& ds,
               std::size_t image_rows, std::size_t image_cols) {
  if (image_rows * image_cols != ds.dim()) throw ShapeError("write_idx", Shape{image_rows, image_cols}, ds.samples.shape());
  if (!ds.labels) throw InvalidArgument("write_idx: dataset has no labels");
  std::ofstream img(images, std::ios::binary);
  std::ofstream lab(labels, std::ios::binary);
  if (!img || !lab) throw FormatError(FormatError::Kind::Io, "write_idx: cannot open output");
  write_be32(img, kImageMagic);
  write_be32(img, static_cast<std::uint32_t>(ds.size()));
  write_be32(img, static_cast<std::uint32_t>(image_rows));
  write_be32(img, static_cast<std::uint32_t>(image_cols));
  for (double v : ds.samples.storage()) {
    img.put(static_cast<char>(static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0))));
  }
  write_be32(lab, kLabelMagic);
  write_be32(lab, static_cast<std::uint32_t>(ds.size()));
  for (auto l : *ds.labels) lab.put(static_cast<char>(static_cast<unsigned char>(l)));
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) {
    const auto first = cell.find_first_not_of(" \t\r");
    const auto last = cell.find_last_not_of(" \t\r");
    cells.push_back(first == std::string::npos ? std::string() : cell.substr(first, last - first + 1));
  }
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

}  // namespace

Dataset load_csv(const std::filesystem::path& path, const CsvOptions& options) {
  std::ifstream in(path);
  if (!in) throw FormatError(FormatError::Kind::Io, "cannot open " + path.string());

  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
  std::string line;
  std::size_t line_no = 0;
  std::size_t width = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto cells = split_csv(line);
    if (options.header && header.empty()) {
      header = std::move(cells);
      width = header.size();
      continue;
    }
    if (width == 0) width = cells.size();
    if (cells.size() != width) {
      throw FormatError(FormatError::Kind::Ragged, path.string() + ": row " + std::to_string(line_no) + " has " +
                                                       std::to_string(cells.size()) + " cells, expected " +
                                                       std::to_string(width));
    }
    std::vector<double> values(width);
    for (std::size_t c = 0; c < width; ++c) {
      const char* begin = cells[c].c_str();
      char* end = nullptr;
      errno = 0;
      values[c] = std::strtod(begin, &end);
      if (cells[c].empty() || *end != '\0' || errno == ERANGE) {
        throw FormatError(FormatError::Kind::NonNumeric, path.string() + ": non-numeric cell at row " +
                                                             std::to_string(line_no) + ", column " +
                                                             std::to_string(c + 1));
      }
    }
    rows.push_back(std::move(values));
  }
  if (rows.empty()) throw FormatError(FormatError::Kind::Parse, path.string() + ": no data rows");

  std::optional<std::size_t> label_col;
  if (options.label_column) {
    const std::string& want = *options.label_column;
    for (std::size_t c = 0; c < header.size(); ++c) {
      if (header[c] == want) label_col = c;
    }
    if (!label_col && !want.empty() && want.find_first_not_of("0123456789") == std::string::npos) {
      label_col = std::stoul(want);
    }
    if (!label_col || *label_col >= width) {
      throw InvalidArgument(path.string() + ": label column '" + want + "' not found");
    }
    if (width < 2) throw InvalidArgument(path.string() + ": no feature columns besides the label");
  }

  const std::size_t features = width - (label_col ? 1 : 0);
  Tensor samples(Shape{rows.size(), features});
  std::vector<std::size_t> labels;
  for (std::size_t r = 0; r < rows.size(); ++r) {
    std::size_t out_c = 0;
    for (std::size_t c = 0; c < width; ++c) {
      if (label_col && c == *label_col) {
        const double v = rows[r][c];
        if (v < 0.0 || v != std::floor(v)) {
          throw FormatError(FormatError::Kind::NonNumeric, path.string() + ": label at row " + std::to_string(r + 1) +
                                                               " is not a non-negative integer");
        }
        labels.push_back(static_cast<std::size_t>(v));
      } else {
        samples.at(r, out_c++) = rows[r][c];
      }
    }
  }
  Dataset ds{std::move(samples), std::nullopt, path.stem().string(), {}};
  if (label_col) ds.labels = std::move(labels);
  return ds;
}

void write_csv(const std::filesystem::path& path, const Dataset& ds, const std::vector<std::string>& columns) {
  std::ofstream out(path);
  if (!out) throw FormatError(FormatError::Kind::Io, "cannot write " + path.string());
  for (std::size_t c = 0; c < columns.size(); ++c) out << (c ? "," : "") << columns[c];
  out << '\n';
  out << std::setprecision(17);
  for (std::size_t r = 0; r < ds.size(); ++r) {
    for (std::size_t c = 0; c < ds.dim(); ++c) out << (c ? "," : "") << ds.samples.at(r, c);
    if (ds.labels) out << ',' << (*ds.labels)[r];
    out << '\n';
  }
  if (!out) throw FormatError(FormatError::Kind::Io, "write failed for " + path.string());
}

std::vector<std::size_t> permutation(std::size_t n, Rng& rng) {
  std::vector<std::size_t> p(n);
  for (std::size_t i = 0; i < n; ++i) p[i] = i;
  for (std::size_t i = n; i > 1; --i) std::swap(p[i - 1], p[rng.index(i)]);
  return p;
}

Batcher::Batcher(const Dataset& ds, std::size_t batch_size, Rng& rng, bool shuffle)
    : ds_(ds), batch_size_(batch_size) {
  if (batch_size == 0) throw InvalidArgument("Batcher: batch size must be at least 1");
  if (shuffle) {
    order_ = permutation(ds.size(), rng);
  } else {
    order_.resize(ds.size());
    for (std::size_t i = 0; i < order_.size(); ++i) order_[i] = i;
  }
}

bool Batcher::next(Batch& out) {
  if (cursor_ >= order_.size()) return false;
  const std::size_t end = std::min(order_.size(), cursor_ + batch_size_);
  out.indices.assign(order_.begin() + static_cast<std::ptrdiff_t>(cursor_),
                     order_.begin() + static_cast<std::ptrdiff_t>(end));
  out.samples = ds_.samples.gather_rows(out.indices);
  out.labels.clear();
  if (ds_.labels) {
    for (auto i : out.indices) out.labels.push_back((*ds_.labels)[i]);
  }
  cursor_ = end;
  return true;
}

Batch sample_batch(const Dataset& ds, std::size_t batch_size, Rng& rng) {
  Batch b;
  b.indices.resize(batch_size);
  for (auto& i : b.indices) i = rng.index(ds.size());
  b.samples = ds.samples.gather_rows(b.indices);
  if (ds.labels) {
    for (auto i : b.indices) b.labels.push_back((*ds.labels)[i]);
  }
  return b;
}

}  // namespace amix
