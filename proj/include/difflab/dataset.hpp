#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "difflab/data.hpp"

namespace difflab::harness {

enum class DatasetKind { kGaussianMixture, kImageLike };

DatasetKind dataset_kind_from_string(const std::string& name);
const char* to_string(DatasetKind k);

// Synthetic stand-ins for the image benchmarks.  The Gaussian mixture places
// well-separated class centers in a low-dimensional core subspace and gives
// every class a weak, class-specific offset pattern on the remaining
// "texture" coordinates.  Classifiers trained on clean draws lean on those
// weak coordinates, which is what makes small l-inf perturbations effective
// while the denoiser can still wash them out.
struct DatasetSpec {
  DatasetKind kind = DatasetKind::kGaussianMixture;
  int dims = 24;
  int classes = 4;
  int train_size = 4000;
  int test_size = 1000;
  std::uint64_t seed = 1;

  // gaussian mixture parameters
  int core_dims = 2;
  double center_scale = 3.0;
  double core_sigma = 0.5;
  double texture_delta = 0.25;
  double texture_sigma = 0.5;

  // image-like parameters
  int image_side = 6;
  double pixel_sigma = 0.1;
  bool clamp01 = true;

  void validate() const;  // throws std::invalid_argument
};

struct SplitDataset {
  Dataset train, test;
};

std::vector<Vec> class_centers(const DatasetSpec& spec);

// Deterministic in the spec (including the seed); class labels are assigned
// round-robin so counts are balanced within one.
SplitDataset make_dataset(const DatasetSpec& spec);

}  // namespace difflab::harness
