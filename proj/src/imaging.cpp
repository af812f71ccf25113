#include "lawn/imaging.hpp"

#include <algorithm>
#include <cmath>
#include <deque>

namespace lawn::imaging {

void CannyParams::validate() const {
  if (!(sigma > 0.0)) throw std::invalid_argument("canny: sigma must be > 0");
  if (!(low > 0 && low < high)) throw std::invalid_argument("canny: need 0 < low < high <= 255");
}

Image to_grayscale(const Image& img) {
  if (img.channels != 3)
    throw std::invalid_argument("to_grayscale: input must have 3 channels");
  Image out(img.width, img.height, 1);
  const size_t n = static_cast<size_t>(img.width) * img.height;
  for (size_t i = 0; i < n; ++i) {
    const uint8_t* px = &img.data[i * 3];
    double g = 0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2];
    long v = std::llround(g);
    out.data[i] = static_cast<uint8_t>(std::clamp(v, 0l, 255l));
  }
  return out;
}

std::array<uint64_t, 256> histogram(const Image& img) {
  if (img.channels != 1)
    throw std::invalid_argument("histogram: input must have 1 channel");
  std::array<uint64_t, 256> h{};
  for (uint8_t v : img.data) ++h[v];
  return h;
}

int otsu_threshold(const std::array<uint64_t, 256>& hist) {
  uint64_t total = 0;
  double total_sum = 0.0;
  for (int i = 0; i < 256; ++i) {
    total += hist[i];
    total_sum += static_cast<double>(i) * static_cast<double>(hist[i]);
  }
  if (total == 0) throw std::invalid_argument("otsu_threshold: empty histogram");

  int best_t = -1;
  double best_var = -1.0;
  uint64_t w0 = 0;
  double sum0 = 0.0;
  for (int t = 0; t < 256; ++t) {
    w0 += hist[t];
    sum0 += static_cast<double>(t) * static_cast<double>(hist[t]);
    if (w0 == 0) continue;  // low class empty: not a candidate
    uint64_t w1 = total - w0;
    double var;
    if (w1 == 0) {
      var = 0.0;
    } else {
      double mu0 = sum0 / static_cast<double>(w0);
      double mu1 = (total_sum - sum0) / static_cast<double>(w1);
      double d = mu0 - mu1;
      var = static_cast<double>(w0) * static_cast<double>(w1) * d * d;
    }
    if (var > best_var) {
      best_var = var;
      best_t = t;
    }
  }
  return best_t;
}

BinaryImage threshold_binary(const Image& img, int t) {
  if (img.channels != 1)
    throw std::invalid_argument("threshold_binary: input must have 1 channel");
  BinaryImage out(img.width, img.height);
  for (size_t i = 0; i < img.data.size(); ++i)
    out.data[i] = img.data[i] > t ? 255 : 0;
  return out;
}

std::vector<double> gaussian_kernel(double sigma) {
  if (!(sigma > 0.0)) throw std::invalid_argument("gaussian_kernel: sigma must be > 0");
  int radius = static_cast<int>(std::ceil(3.0 * sigma));
  std::vector<double> k(static_cast<size_t>(2 * radius + 1));
  double sum = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    double w = std::exp(-(static_cast<double>(i) * i) / (2.0 * sigma * sigma));
    k[static_cast<size_t>(i + radius)] = w;
    sum += w;
  }
  for (double& w : k) w /= sum;
  return k;
}

Image gaussian_blur(const Image& img, double sigma) {
  if (img.channels != 1)
    throw std::invalid_argument("gaussian_blur: input must have 1 channel");
  std::vector<double> kernel = gaussian_kernel(sigma);
  int radius = static_cast<int>(kernel.size() / 2);
  const int w = img.width, h = img.height;

  // Horizontal then vertical pass in double precision; round once at the end.
  std::vector<double> tmp(static_cast<size_t>(w) * h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) {
        int xs = std::clamp(x + i, 0, w - 1);
        acc += kernel[static_cast<size_t>(i + radius)] * img.at(xs, y);
      }
      tmp[static_cast<size_t>(y) * w + x] = acc;
    }
  }
  Image out(w, h, 1);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) {
        int ys = std::clamp(y + i, 0, h - 1);
        acc += kernel[static_cast<size_t>(i + radius)] * tmp[static_cast<size_t>(ys) * w + x];
      }
      out.at(x, y) = static_cast<uint8_t>(std::clamp(std::llround(acc), 0ll, 255ll));
    }
  }
  return out;
}

namespace {

// Sobel pair at (x, y) with clamp-to-border sampling.
inline void sobel_at(const Image& img, int x, int y, double& gx, double& gy) {
  const int w = img.width, h = img.height;
  auto s = [&](int xs, int ys) -> double {
    return img.at(std::clamp(xs, 0, w - 1), std::clamp(ys, 0, h - 1));
  };
  double tl = s(x - 1, y - 1), t = s(x, y - 1), tr = s(x + 1, y - 1);
  double l = s(x - 1, y), r = s(x + 1, y);
  double bl = s(x - 1, y + 1), b = s(x, y + 1), br = s(x + 1, y + 1);
  gx = (tr + 2.0 * r + br) - (tl + 2.0 * l + bl);
  gy = (bl + 2.0 * b + br) - (tl + 2.0 * t + tr);
}

}  // namespace

BinaryImage canny_edges(const Image& img, const CannyParams& p) {
  p.validate();
  if (img.channels != 1)
    throw std::invalid_argument("canny_edges: input must have 1 channel");
  const int w = img.width, h = img.height;
  Image smooth = gaussian_blur(img, p.sigma);

  std::vector<uint8_t> mag(static_cast<size_t>(w) * h, 0);
  std::vector<uint8_t> sector(static_cast<size_t>(w) * h, 0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double gx, gy;
      sobel_at(smooth, x, y, gx, gy);
      double m = std::sqrt(gx * gx + gy * gy);
      long m8 = std::llround(std::min(m, 255.0));
      size_t idx = static_cast<size_t>(y) * w + x;
      mag[idx] = static_cast<uint8_t>(m8);
      double ang = std::atan2(gy, gx) * 180.0 / 3.14159265358979323846;
      if (ang < 0.0) ang += 180.0;
      uint8_t sec;
      if (ang < 22.5 || ang >= 157.5) sec = 0;       // E-W
      else if (ang < 67.5) sec = 1;                  // SE-NW (y grows down)
      else if (ang < 112.5) sec = 2;                 // N-S
      else sec = 3;                                  // SW-NE
      sector[idx] = sec;
    }
  }

  // Non-maximum suppression along the gradient direction. An asymmetric tie
  // rule (>= toward the positive direction, > toward the negative) keeps
  // exactly one pixel of an equal-magnitude pair.
  static constexpr int dxa[4] = {1, 1, 0, -1};
  static constexpr int dya[4] = {0, 1, 1, 1};
  std::vector<uint8_t> keep(static_cast<size_t>(w) * h, 0);
  auto mag_at = [&](int x, int y) -> int {
    if (x < 0 || x >= w || y < 0 || y >= h) return 0;
    return mag[static_cast<size_t>(y) * w + x];
  };
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      size_t idx = static_cast<size_t>(y) * w + x;
      int m = mag[idx];
      if (m < p.low) continue;
      int s = sector[idx];
      int ma = mag_at(x + dxa[s], y + dya[s]);
      int mb = mag_at(x - dxa[s], y - dya[s]);
      if (m >= ma && m > mb) keep[idx] = m >= p.high ? 2 : 1;
    }
  }

  // Hysteresis: flood from strong pixels through 8-connected weak ones.
  BinaryImage out(w, h);
  std::deque<Point> queue;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (keep[static_cast<size_t>(y) * w + x] == 2) {
        out.at(x, y) = 255;
        queue.push_back({x, y});
      }
  while (!queue.empty()) {
    Point pt = queue.front();
    queue.pop_front();
    for (int dy = -1; dy <= 1; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) {
        if (dx == 0 && dy == 0) continue;
        int nx = pt.x + dx, ny = pt.y + dy;
        if (nx < 0 || nx >= w || ny < 0 || ny >= h) continue;
        size_t nidx = static_cast<size_t>(ny) * w + nx;
        if (keep[nidx] == 1 && out.data[nidx] == 0) {
          out.data[nidx] = 255;
          queue.push_back({nx, ny});
        }
      }
    }
  }
  return out;
}

namespace {

// Moore neighborhood in clockwise screen order (y grows down).
constexpr int kMooreDx[8] = {-1, -1, 0, 1, 1, 1, 0, -1};
constexpr int kMooreDy[8] = {0, -1, -1, -1, 0, 1, 1, 1};

Contour trace_moore(const BinaryImage& bin, Point start) {
  auto fg = [&](int x, int y) {
    return x >= 0 && x < bin.width && y >= 0 && y < bin.height && bin.at(x, y) != 0;
  };
  Contour c;
  c.points.push_back(start);

  Point cur = start;
  int back_dir = 0;  // direction from cur toward the backtrack pixel (west)
  bool have_first = false;
  int first_dir = -1;  // Jacob's criterion: stop when the initial departure
                       // move out of the start pixel is about to repeat
  const size_t guard = 4 * static_cast<size_t>(bin.width) * bin.height + 8;
  for (size_t step = 0; step < guard; ++step) {
    int found = -1;
    for (int k = 1; k <= 8; ++k) {
      int d = (back_dir + k) % 8;
      if (fg(cur.x + kMooreDx[d], cur.y + kMooreDy[d])) {
        found = d;
        break;
      }
    }
    if (found < 0) return c;  // isolated pixel
    if (have_first && cur == start && found == first_dir) break;
    if (!have_first) {
      have_first = true;
      first_dir = found;
    }
    Point next{cur.x + kMooreDx[found], cur.y + kMooreDy[found]};
    // Backtrack becomes the last background neighbor examined, seen from next.
    int prev = (found + 7) % 8;
    Point back{cur.x + kMooreDx[prev], cur.y + kMooreDy[prev]};
    cur = next;
    back_dir = 0;
    for (int d = 0; d < 8; ++d) {
      if (cur.x + kMooreDx[d] == back.x && cur.y + kMooreDy[d] == back.y) {
        back_dir = d;
        break;
      }
    }
    c.points.push_back(cur);
  }
  // The walk re-enters the start just before the stop fires; drop that
  // duplicate so simple loops list each boundary pixel once.
  if (c.points.size() > 1 && c.points.back() == c.points.front()) c.points.pop_back();
  return c;
}

}  // namespace

std::vector<Contour> find_contours(const BinaryImage& bin) {
  const int w = bin.width, h = bin.height;
  std::vector<int32_t> label(static_cast<size_t>(w) * h, 0);
  std::vector<Point> first_pixel;

  // Label 8-connected components in scan order; remember each component's
  // first pixel as the trace start.
  int32_t next_label = 0;
  std::deque<Point> queue;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      size_t idx = static_cast<size_t>(y) * w + x;
      if (bin.data[idx] == 0 || label[idx] != 0) continue;
      ++next_label;
      first_pixel.push_back({x, y});
      label[idx] = next_label;
      queue.push_back({x, y});
      while (!queue.empty()) {
        Point p = queue.front();
        queue.pop_front();
        for (int d = 0; d < 8; ++d) {
          int nx = p.x + kMooreDx[d], ny = p.y + kMooreDy[d];
          if (nx < 0 || nx >= w || ny < 0 || ny >= h) continue;
          size_t nidx = static_cast<size_t>(ny) * w + nx;
          if (bin.data[nidx] != 0 && label[nidx] == 0) {
            label[nidx] = next_label;
            queue.push_back({nx, ny});
          }
        }
      }
    }
  }

  std::vector<Contour> out;
  out.reserve(first_pixel.size());
  for (const Point& p : first_pixel) out.push_back(trace_moore(bin, p));
  return out;
}

double contour_area(const Contour& c) {
  const auto& pts = c.points;
  if (pts.size() < 3) return 0.0;
  double acc = 0.0;
  for (size_t i = 0; i < pts.size(); ++i) {
    const Point& a = pts[i];
    const Point& b = pts[(i + 1) % pts.size()];
    acc += static_cast<double>(a.x) * b.y - static_cast<double>(b.x) * a.y;
  }
  return std::abs(acc) * 0.5;
}

PreprocessMethod parse_preprocess_method(const std::string& name) {
  if (name == "none") return PreprocessMethod::none;
  if (name == "threshold") return PreprocessMethod::threshold;
  if (name == "contour") return PreprocessMethod::contour;
  if (name == "canny") return PreprocessMethod::canny;
  throw std::invalid_argument("unknown preprocess method: " + name);
}

std::string to_string(PreprocessMethod m) {
  switch (m) {
    case PreprocessMethod::none: return "none";
    case PreprocessMethod::threshold: return "threshold";
    case PreprocessMethod::contour: return "contour";
    case PreprocessMethod::canny: return "canny";
  }
  throw std::invalid_argument("unknown preprocess method tag");
}

namespace {

Image as_gray(const Image& img) {
  return img.channels == 3 ? to_grayscale(img) : img;
}

int pick_threshold(const Image& gray, const PreprocessParams& params) {
  if (params.fixed_threshold) {
    int t = *params.fixed_threshold;
    if (t < 0 || t > 255) throw std::invalid_argument("fixed threshold out of [0,255]");
    return t;
  }
  return otsu_threshold(histogram(gray));
}

}  // namespace

Image preprocess(const Image& img, PreprocessMethod method,
                 const PreprocessParams& params) {
  switch (method) {
    case PreprocessMethod::none:
      return img;
    case PreprocessMethod::threshold: {
      Image gray = as_gray(img);
      return threshold_binary(gray, pick_threshold(gray, params)).to_image();
    }
    case PreprocessMethod::contour: {
      Image gray = gaussian_blur(as_gray(img), params.contour_blur_sigma);
      BinaryImage bin = threshold_binary(gray, pick_threshold(gray, params));
      Image out(img.width, img.height, 1);
      for (const Contour& c : find_contours(bin))
        for (const Point& p : c.points) out.at(p.x, p.y) = 255;
      return out;
    }
    case PreprocessMethod::canny:
      return canny_edges(as_gray(img), params.canny).to_image();
  }
  throw std::invalid_argument("unknown preprocess method tag");
}

}  // namespace lawn::imaging
