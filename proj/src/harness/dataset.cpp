#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "difflab/dataset.hpp"
#include "difflab/rng.hpp"

namespace difflab {

Bounds Dataset::bounding_box() const {
  if (x.empty()) throw std::domain_error("bounding_box: empty dataset");
  Bounds b;
  b.lo.assign(dim, std::numeric_limits<double>::infinity());
  b.hi.assign(dim, -std::numeric_limits<double>::infinity());
  for (const Vec& row : x) {
    for (int i = 0; i < dim; ++i) {
      b.lo[i] = std::min(b.lo[i], row[i]);
      b.hi[i] = std::max(b.hi[i], row[i]);
    }
  }
  return b;
}

}  // namespace difflab

namespace difflab::harness {

DatasetKind dataset_kind_from_string(const std::string& name) {
  if (name == "gaussian_mixture") return DatasetKind::kGaussianMixture;
  if (name == "image_like") return DatasetKind::kImageLike;
  throw std::invalid_argument("unknown dataset kind: " + name);
}

const char* to_string(DatasetKind k) {
  return k == DatasetKind::kGaussianMixture ? "gaussian_mixture" : "image_like";
}

namespace {

// Balanced +-1 texture pattern; classes c1 != c2 disagree on a fixed fraction
// of coordinates as the mask below cycles.
double texture_sign(int cls, int coord, int classes) {
  int bits = 1;
  while ((1 << bits) < classes) ++bits;
  const int period = (1 << bits) - 1;
  const unsigned mask = static_cast<unsigned>(coord % period) + 1u;
  const unsigned overlap = static_cast<unsigned>(cls) & mask;
  return (std::popcount(overlap) % 2 == 0) ? 1.0 : -1.0;
}

std::vector<Vec> mixture_centers(const DatasetSpec& spec) {
  std::vector<Vec> centers(spec.classes, Vec(spec.dims, 0.0));
  for (int c = 0; c < spec.classes; ++c) {
    if (spec.core_dims == 1) {
      centers[c][0] = spec.classes == 1
                          ? 0.0
                          : spec.center_scale * (2.0 * c / (spec.classes - 1) - 1.0);
    } else {
      // Equally spaced on a circle of radius scale*sqrt(2) in the first two
      // core coordinates; for four classes these are the (+-scale, +-scale)
      // corners.
      const double angle = 2.0 * std::numbers::pi * c / spec.classes +
                           std::numbers::pi / 4.0;
      const double radius = spec.center_scale * std::numbers::sqrt2;
      centers[c][0] = radius * std::cos(angle);
      centers[c][1] = radius * std::sin(angle);
    }
    for (int j = spec.core_dims; j < spec.dims; ++j)
      centers[c][j] = spec.texture_delta * texture_sign(c, j - spec.core_dims, spec.classes);
  }
  return centers;
}

std::vector<Vec> image_centers(const DatasetSpec& spec) {
  const int side = spec.image_side;
  const double mid = (side - 1) / 2.0;
  const double ring = side / 3.0;
  const double width = side / 5.0;
  std::vector<Vec> centers(spec.classes, Vec(side * side, 0.0));
  for (int c = 0; c < spec.classes; ++c) {
    const double angle = 2.0 * std::numbers::pi * c / spec.classes;
    const double br = mid + ring * std::cos(angle);
    const double bc = mid + ring * std::sin(angle);
    for (int r = 0; r < side; ++r) {
      for (int col = 0; col < side; ++col) {
        const double d2 = (r - br) * (r - br) + (col - bc) * (col - bc);
        centers[c][r * side + col] = 0.15 + 0.7 * std::exp(-d2 / (2.0 * width * width));
      }
    }
  }
  return centers;
}

double coord_sigma(const DatasetSpec& spec, int j) {
  if (spec.kind == DatasetKind::kImageLike) return spec.pixel_sigma;
  return j < spec.core_dims ? spec.core_sigma : spec.texture_sigma;
}

Dataset sample_split(const DatasetSpec& spec, const std::vector<Vec>& centers,
                     int count, RngStream rng) {
  Dataset d;
  d.dim = spec.dims;
  d.num_classes = spec.classes;
  d.x.reserve(count);
  d.y.reserve(count);
  for (int i = 0; i < count; ++i) {
    const int cls = i % spec.classes;
    Vec row(spec.dims);
    for (int j = 0; j < spec.dims; ++j) {
      row[j] = centers[cls][j] + coord_sigma(spec, j) * rng.next_gaussian();
      if (spec.kind == DatasetKind::kImageLike && spec.clamp01)
        row[j] = std::clamp(row[j], 0.0, 1.0);
    }
    d.x.push_back(std::move(row));
    d.y.push_back(cls);
  }
  return d;
}

}  // namespace

void DatasetSpec::validate() const {
  if (classes < 1) throw std::invalid_argument("dataset: classes must be >= 1");
  if (train_size < classes || test_size < classes)
    throw std::invalid_argument("dataset: train/test sizes must be >= class count");
  if (kind == DatasetKind::kGaussianMixture) {
    if (dims < 1 || core_dims < 1 || core_dims > dims)
      throw std::invalid_argument("dataset: need 1 <= core_dims <= dims");
    if (!(core_sigma > 0.0) || !(texture_sigma >= 0.0))
      throw std::invalid_argument("dataset: spreads must be positive");
    // Learnability: centers pairwise separated by at least 4x the core spread.
    const auto centers = mixture_centers(*this);
    double min_dist = std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < centers.size(); ++a) {
      for (std::size_t b = a + 1; b < centers.size(); ++b) {
        double d2 = 0.0;
        for (int j = 0; j < dims; ++j) {
          const double diff = centers[a][j] - centers[b][j];
          d2 += diff * diff;
        }
        min_dist = std::min(min_dist, std::sqrt(d2));
      }
    }
    if (classes > 1 && min_dist < 4.0 * core_sigma)
      throw std::invalid_argument("dataset: class centers closer than 4x core spread");
  } else {
    if (image_side < 2) throw std::invalid_argument("dataset: image_side must be >= 2");
    if (dims != image_side * image_side)
      throw std::invalid_argument("dataset: dims must equal image_side^2");
    if (!(pixel_sigma > 0.0))
      throw std::invalid_argument("dataset: pixel_sigma must be positive");
  }
}

std::vector<Vec> class_centers(const DatasetSpec& spec) {
  spec.validate();
  return spec.kind == DatasetKind::kGaussianMixture ? mixture_centers(spec)
                                                    : image_centers(spec);
}

SplitDataset make_dataset(const DatasetSpec& spec) {
  spec.validate();
  const auto centers = class_centers(spec);
  RngStream root(spec.seed, RngStream::tag("dataset"));
  SplitDataset out;
  out.train = sample_split(spec, centers, spec.train_size, root.derive("train"));
  out.test = sample_split(spec, centers, spec.test_size, root.derive("test"));
  return out;
}

}  // namespace difflab::harness
