#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "lawn/image.hpp"

namespace lawn::imaging {

/// Canny operating point. low/high act on the 8-bit clamped gradient
/// magnitude; sigma is the pre-smoothing Gaussian in pixels.
struct CannyParams {
  double sigma = 1.4;
  uint8_t low = 50;
  uint8_t high = 150;

  void validate() const;
};

/// ITU-R 601 luma: gray = round(0.299 R + 0.587 G + 0.114 B).
Image to_grayscale(const Image& img);

std::array<uint64_t, 256> histogram(const Image& img);

/// Otsu's threshold: the t maximizing between-class variance of the split
/// [0..t] / [t+1..255], scanned over candidates whose low class is nonempty;
/// ties break toward the smallest t.
int otsu_threshold(const std::array<uint64_t, 256>& hist);

/// sample > t -> 255, else 0.
BinaryImage threshold_binary(const Image& img, int t);

/// Sampled, normalized 1-D Gaussian of radius ceil(3*sigma).
std::vector<double> gaussian_kernel(double sigma);

/// Separable Gaussian smoothing, clamp-to-border, rounded to 8 bits once at
/// the end of the vertical pass.
Image gaussian_blur(const Image& img, double sigma);

/// Blur -> Sobel 3x3 -> Euclidean magnitude clamped to 8 bits -> non-maximum
/// suppression over 4 quantized directions -> double-threshold hysteresis
/// (weak pixels kept iff 8-connected to a strong one).
BinaryImage canny_edges(const Image& img, const CannyParams& p);

/// Moore-neighbor border following with Jacob's stopping criterion. One outer
/// contour per 8-connected foreground component, in scan order.
std::vector<Contour> find_contours(const BinaryImage& bin);

/// Absolute shoelace area of the contour polygon; fewer than 3 points -> 0.
double contour_area(const Contour& c);

enum class PreprocessMethod { none, threshold, contour, canny };

PreprocessMethod parse_preprocess_method(const std::string& name);
std::string to_string(PreprocessMethod m);

struct PreprocessParams {
  std::optional<int> fixed_threshold;  // overrides Otsu when set
  double contour_blur_sigma = 1.4;
  CannyParams canny;
};

/// The three preprocessing pipelines plus identity:
///   none      -> input unchanged
///   threshold -> gray -> (Otsu | fixed t) -> binary
///   contour   -> gray -> blur -> (Otsu | fixed t) -> binary -> 1-px contour
///                polylines (255) on black
///   canny     -> gray -> canny_edges
Image preprocess(const Image& img, PreprocessMethod method,
                 const PreprocessParams& params = {});

}  // namespace lawn::imaging
