#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "lawn/image.hpp"
#include "lawn/imaging.hpp"

namespace lawn::data {

/// One labeled example: an image file and the lawn area it depicts.
/// origin_id names the pre-augmentation picture a record descends from.
struct ManifestRecord {
  std::string image_path;  // relative to the manifest's directory
  double area_sq_m = 0.0;
  std::string origin_id;

  bool operator==(const ManifestRecord&) const = default;
};

using Manifest = std::vector<ManifestRecord>;

/// CSV manifest I/O. Header `image_path,area_sq_m,origin_id`, UTF-8, LF line
/// endings. Parse errors carry the offending 1-based line number.
Manifest load_manifest(const std::filesystem::path& path);
void save_manifest(const Manifest& m, const std::filesystem::path& path);

struct AugmentParams {
  double rotation_max_deg = 20.0;
  bool flip_horizontal = true;
  bool flip_vertical = true;
  double brightness_lo = 0.8;
  double brightness_hi = 1.2;
  int copies = 50;

  void validate() const;
};

/// One randomized, label-preserving variant of img. Draw order: rotation
/// angle, horizontal flip coin (if enabled), vertical flip coin (if enabled),
/// brightness factor — all from a generator seeded exactly with `seed`.
/// Rotation uses nearest-neighbor resampling about the image center with
/// black fill; output size equals input size.
imaging::Image augment_image(const imaging::Image& img, const AugmentParams& params,
                             uint64_t seed);

/// Writes the original plus `copies` augmented variants of every record into
/// out_root and returns the combined manifest (originals first per record,
/// order preserved). Copy seeds derive from hash(base_seed, origin_id, index).
Manifest generate_augmented_dataset(const Manifest& manifest, const AugmentParams& params,
                                    uint64_t base_seed,
                                    const std::filesystem::path& in_root,
                                    const std::filesystem::path& out_root);

struct SplitSpec {
  std::array<double, 3> ratios = {0.7, 0.15, 0.15};  // train, val, test
  bool by_original = true;
  uint64_t seed = 0;
  /// Record-level only: exact split sizes (must sum to the record count).
  std::optional<std::array<size_t, 3>> explicit_counts;

  void validate() const;
};

struct SplitResult {
  Manifest train, val, test;
};

/// by_original: shuffles distinct origin_ids, allocates them by largest-
/// remainder rounding, and keeps every record with its origin — no origin
/// spans two splits. Otherwise shuffles and allocates records directly (the
/// leakage-prone protocol).
SplitResult split_dataset(const Manifest& manifest, const SplitSpec& spec);

/// Synthetic scene generator: green-textured lawn, centered gray house,
/// driveway strip, elliptical trees. The label is exact by construction:
/// lawn-class pixel count times meters_per_pixel^2.
struct SceneConfig {
  int size = 128;
  double meters_per_pixel = 0.25;
  double house_fraction_lo = 0.05;
  double house_fraction_hi = 0.35;
  int tree_count_lo = 2;
  int tree_count_hi = 8;
  uint64_t seed = 0;

  void validate() const;
};

enum class PixelClass : uint8_t { lawn = 0, house = 1, driveway = 2, tree = 3 };

struct SyntheticScene {
  imaging::Image image;            // 3-channel
  double area_sq_m = 0.0;          // lawn pixels * mpp^2
  std::vector<uint8_t> mask;       // PixelClass per pixel, row-major
};

SyntheticScene generate_synthetic_scene(const SceneConfig& cfg, uint64_t index);

/// Reads a record's image and applies the pipeline's preprocessing.
imaging::Image load_input_image(const std::filesystem::path& root, const ManifestRecord& rec,
                                imaging::PreprocessMethod method,
                                const imaging::PreprocessParams& params = {});

}  // namespace lawn::data
