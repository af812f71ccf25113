#include "lawn/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "lawn/rng.hpp"

namespace lawn::data {

namespace {

constexpr std::string_view kManifestHeader = "image_path,area_sq_m,origin_id";

[[noreturn]] void parse_fail(const std::filesystem::path& path, size_t line,
                             const std::string& what) {
  throw std::runtime_error("manifest: " + path.string() + ": line " +
                           std::to_string(line) + ": " + what);
}

std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

}  // namespace

Manifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("manifest: cannot open " + path.string());
  Manifest out;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (lineno == 1) {
      if (line != kManifestHeader) parse_fail(path, 1, "bad header");
      continue;
    }
    if (line.empty()) continue;
    size_t c1 = line.find(',');
    size_t c2 = c1 == std::string::npos ? std::string::npos : line.find(',', c1 + 1);
    if (c1 == std::string::npos || c2 == std::string::npos ||
        line.find(',', c2 + 1) != std::string::npos)
      parse_fail(path, lineno, "expected 3 columns");
    ManifestRecord rec;
    rec.image_path = line.substr(0, c1);
    std::string area_s = line.substr(c1 + 1, c2 - c1 - 1);
    rec.origin_id = line.substr(c2 + 1);
    double area = 0.0;
    auto res = std::from_chars(area_s.data(), area_s.data() + area_s.size(), area);
    if (res.ec != std::errc() || res.ptr != area_s.data() + area_s.size())
      parse_fail(path, lineno, "non-numeric area '" + area_s + "'");
    if (area < 0.0) parse_fail(path, lineno, "negative area");
    if (rec.image_path.empty()) parse_fail(path, lineno, "empty image path");
    if (rec.origin_id.empty()) parse_fail(path, lineno, "empty origin id");
    rec.area_sq_m = area;
    out.push_back(std::move(rec));
  }
  if (lineno == 0) parse_fail(path, 1, "missing header");
  return out;
}

void save_manifest(const Manifest& m, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("manifest: cannot open " + path.string() + " for write");
  out << kManifestHeader << '\n';
  for (const ManifestRecord& rec : m)
    out << rec.image_path << ',' << format_double(rec.area_sq_m) << ',' << rec.origin_id << '\n';
  if (!out) throw std::runtime_error("manifest: write failed for " + path.string());
}

void AugmentParams::validate() const {
  if (!(rotation_max_deg >= 0.0 && rotation_max_deg <= 180.0))
    throw std::invalid_argument("augment: rotation_max_deg must be in [0, 180]");
  if (!(brightness_lo > 0.0 && brightness_lo <= brightness_hi))
    throw std::invalid_argument("augment: need 0 < brightness_lo <= brightness_hi");
  if (copies < 1) throw std::invalid_argument("augment: copies must be >= 1");
}

namespace {

imaging::Image rotate_nn(const imaging::Image& img, double deg) {
  const double rad = deg * 3.14159265358979323846 / 180.0;
  const double c = std::cos(rad), s = std::sin(rad);
  const double cx = (img.width - 1) / 2.0, cy = (img.height - 1) / 2.0;
  imaging::Image out(img.width, img.height, img.channels);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      // Inverse mapping keeps every output pixel defined.
      double dx = x - cx, dy = y - cy;
      long xs = std::llround(cx + c * dx + s * dy);
      long ys = std::llround(cy - s * dx + c * dy);
      if (xs < 0 || xs >= img.width || ys < 0 || ys >= img.height) continue;  // black fill
      for (int ch = 0; ch < img.channels; ++ch)
        out.at(x, y, ch) = img.at(static_cast<int>(xs), static_cast<int>(ys), ch);
    }
  }
  return out;
}

void flip_horizontal_inplace(imaging::Image& img) {
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width / 2; ++x)
      for (int c = 0; c < img.channels; ++c)
        std::swap(img.at(x, y, c), img.at(img.width - 1 - x, y, c));
}

void flip_vertical_inplace(imaging::Image& img) {
  for (int y = 0; y < img.height / 2; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < img.channels; ++c)
        std::swap(img.at(x, y, c), img.at(x, img.height - 1 - y, c));
}

}  // namespace

imaging::Image augment_image(const imaging::Image& img, const AugmentParams& params,
                             uint64_t seed) {
  params.validate();
  Rng rng(seed);
  double angle = rng.uniform(-params.rotation_max_deg, params.rotation_max_deg);
  bool do_h = params.flip_horizontal && rng.coin();
  bool do_v = params.flip_vertical && rng.coin();
  double factor = rng.uniform(params.brightness_lo, params.brightness_hi);

  imaging::Image out = angle != 0.0 ? rotate_nn(img, angle) : img;
  if (do_h) flip_horizontal_inplace(out);
  if (do_v) flip_vertical_inplace(out);
  if (factor != 1.0) {
    for (uint8_t& v : out.data)
      v = static_cast<uint8_t>(std::clamp(std::llround(v * factor), 0ll, 255ll));
  }
  return out;
}

Manifest generate_augmented_dataset(const Manifest& manifest, const AugmentParams& params,
                                    uint64_t base_seed,
                                    const std::filesystem::path& in_root,
                                    const std::filesystem::path& out_root) {
  params.validate();
  if (manifest.empty())
    throw std::invalid_argument("generate_augmented_dataset: empty manifest");
  std::filesystem::create_directories(out_root);

  Manifest out;
  out.reserve(manifest.size() * (static_cast<size_t>(params.copies) + 1));
  for (const ManifestRecord& rec : manifest) {
    imaging::Image img;
    try {
      img = imaging::read_pnm(in_root / rec.image_path);
    } catch (const std::exception& e) {
      throw std::runtime_error(std::string("augment: cannot read ") +
                               (in_root / rec.image_path).string() + ": " + e.what());
    }
    const char* ext = img.channels == 1 ? ".pgm" : ".ppm";
    std::string stem = std::filesystem::path(rec.image_path).stem().string();

    std::string orig_name = stem + ext;
    imaging::write_pnm(img, out_root / orig_name);
    out.push_back({orig_name, rec.area_sq_m, rec.origin_id});

    for (int k = 0; k < params.copies; ++k) {
      uint64_t seed = seed_hash(base_seed, rec.origin_id, static_cast<uint64_t>(k));
      imaging::Image aug = augment_image(img, params, seed);
      char suffix[16];
      std::snprintf(suffix, sizeof(suffix), "_aug%02d", k);
      std::string name = stem + suffix + ext;
      imaging::write_pnm(aug, out_root / name);
      out.push_back({name, rec.area_sq_m, rec.origin_id});
    }
  }
  return out;
}

void SplitSpec::validate() const {
  double sum = ratios[0] + ratios[1] + ratios[2];
  for (double r : ratios)
    if (!(r > 0.0)) throw std::invalid_argument("split: ratios must be positive");
  if (std::abs(sum - 1.0) > 1e-9)
    throw std::invalid_argument("split: ratios must sum to 1");
  if (explicit_counts && by_original)
    throw std::invalid_argument("split: explicit counts require record-level mode");
}

namespace {

// Largest-remainder allocation of n items into 3 buckets.
std::array<size_t, 3> allocate(size_t n, const std::array<double, 3>& ratios) {
  std::array<size_t, 3> base{};
  std::array<double, 3> frac{};
  size_t used = 0;
  for (int i = 0; i < 3; ++i) {
    double q = ratios[static_cast<size_t>(i)] * static_cast<double>(n);
    base[static_cast<size_t>(i)] = static_cast<size_t>(std::floor(q));
    frac[static_cast<size_t>(i)] = q - std::floor(q);
    used += base[static_cast<size_t>(i)];
  }
  std::array<int, 3> order = {0, 1, 2};
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (frac[static_cast<size_t>(a)] != frac[static_cast<size_t>(b)])
      return frac[static_cast<size_t>(a)] > frac[static_cast<size_t>(b)];
    return a < b;
  });
  for (size_t r = 0; r < n - used; ++r) ++base[static_cast<size_t>(order[r % 3])];
  return base;
}

}  // namespace

SplitResult split_dataset(const Manifest& manifest, const SplitSpec& spec) {
  spec.validate();
  SplitResult out;

  if (spec.by_original) {
    std::vector<std::string> origins;
    std::set<std::string> seen;
    for (const ManifestRecord& rec : manifest)
      if (seen.insert(rec.origin_id).second) origins.push_back(rec.origin_id);
    if (origins.size() < 3)
      throw std::invalid_argument("split: need at least 3 distinct origins");
    Rng rng(spec.seed);
    rng.shuffle(origins);
    std::array<size_t, 3> counts = allocate(origins.size(), spec.ratios);
    std::map<std::string, int> bucket_of;
    size_t pos = 0;
    for (int b = 0; b < 3; ++b)
      for (size_t i = 0; i < counts[static_cast<size_t>(b)]; ++i)
        bucket_of[origins[pos++]] = b;
    for (const ManifestRecord& rec : manifest) {
      switch (bucket_of.at(rec.origin_id)) {
        case 0: out.train.push_back(rec); break;
        case 1: out.val.push_back(rec); break;
        default: out.test.push_back(rec); break;
      }
    }
    return out;
  }

  std::vector<size_t> idx(manifest.size());
  for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  Rng rng(spec.seed);
  rng.shuffle(idx);
  std::array<size_t, 3> counts = spec.explicit_counts
                                     ? *spec.explicit_counts
                                     : allocate(manifest.size(), spec.ratios);
  if (counts[0] + counts[1] + counts[2] != manifest.size())
    throw std::invalid_argument("split: explicit counts must sum to the record count");
  size_t pos = 0;
  for (size_t i = 0; i < counts[0]; ++i) out.train.push_back(manifest[idx[pos++]]);
  for (size_t i = 0; i < counts[1]; ++i) out.val.push_back(manifest[idx[pos++]]);
  for (size_t i = 0; i < counts[2]; ++i) out.test.push_back(manifest[idx[pos++]]);
  return out;
}

void SceneConfig::validate() const {
  if (size < 32) throw std::invalid_argument("scene: size must be >= 32");
  if (!(meters_per_pixel > 0.0)) throw std::invalid_argument("scene: meters_per_pixel must be > 0");
  if (!(house_fraction_lo >= 0.0 && house_fraction_lo <= house_fraction_hi &&
        house_fraction_hi <= 1.0))
    throw std::invalid_argument("scene: need 0 <= house_lo <= house_hi <= 1");
  if (!(tree_count_lo >= 0 && tree_count_lo <= tree_count_hi))
    throw std::invalid_argument("scene: need 0 <= tree_lo <= tree_hi");
}

SyntheticScene generate_synthetic_scene(const SceneConfig& cfg, uint64_t index) {
  cfg.validate();
  Rng rng(seed_hash(cfg.seed, "scene", index));
  const int n = cfg.size;

  SyntheticScene scene;
  scene.image = imaging::Image(n, n, 3);
  scene.mask.assign(static_cast<size_t>(n) * n, static_cast<uint8_t>(PixelClass::lawn));

  auto paint_rect = [&](int x0, int y0, int x1, int y1, PixelClass cls) {
    x0 = std::max(x0, 0); y0 = std::max(y0, 0);
    x1 = std::min(x1, n); y1 = std::min(y1, n);
    for (int y = y0; y < y1; ++y)
      for (int x = x0; x < x1; ++x)
        scene.mask[static_cast<size_t>(y) * n + x] = static_cast<uint8_t>(cls);
  };

  // House: centered rectangle covering a drawn fraction of the image.
  double frac = rng.uniform(cfg.house_fraction_lo, cfg.house_fraction_hi);
  double aspect = rng.uniform(0.6, 1.4);
  double target_area = frac * n * n;
  int hw = std::min(n, static_cast<int>(std::llround(std::sqrt(target_area * aspect))));
  int hh = hw > 0 ? static_cast<int>(std::llround(target_area / hw)) : 0;
  if (hh > n) {  // aspect pushed one side past the frame; rebalance
    hh = n;
    hw = std::min(n, static_cast<int>(std::llround(target_area / hh)));
  }
  bool has_house = hw > 0 && hh > 0;
  int hx0 = (n - hw) / 2, hy0 = (n - hh) / 2;
  if (has_house) {
    paint_rect(hx0, hy0, hx0 + hw, hy0 + hh, PixelClass::house);
    // Driveway: strip from the house's bottom edge to the image bottom.
    int dw = std::max(2, hw / 3);
    int dx0 = hx0 + (hw - dw) / 2;
    paint_rect(dx0, hy0 + hh, dx0 + dw, n, PixelClass::driveway);
  }

  // Trees: filled ellipses, drawn over whatever is beneath them.
  int tree_count = static_cast<int>(rng.uniform_int(cfg.tree_count_lo, cfg.tree_count_hi));
  for (int t = 0; t < tree_count; ++t) {
    double cx = rng.uniform(0.0, static_cast<double>(n));
    double cy = rng.uniform(0.0, static_cast<double>(n));
    double rx = std::max(1.0, rng.uniform(0.03, 0.08) * n);
    double ry = std::max(1.0, rng.uniform(0.03, 0.08) * n);
    int x0 = std::max(0, static_cast<int>(std::floor(cx - rx)));
    int x1 = std::min(n - 1, static_cast<int>(std::ceil(cx + rx)));
    int y0 = std::max(0, static_cast<int>(std::floor(cy - ry)));
    int y1 = std::min(n - 1, static_cast<int>(std::ceil(cy + ry)));
    for (int y = y0; y <= y1; ++y) {
      for (int x = x0; x <= x1; ++x) {
        double ex = (x - cx) / rx, ey = (y - cy) / ry;
        if (ex * ex + ey * ey <= 1.0)
          scene.mask[static_cast<size_t>(y) * n + x] = static_cast<uint8_t>(PixelClass::tree);
      }
    }
  }

  // Colors; lawn gets per-pixel noise so thresholding sees real texture.
  size_t lawn_pixels = 0;
  for (int y = 0; y < n; ++y) {
    for (int x = 0; x < n; ++x) {
      size_t i = static_cast<size_t>(y) * n + x;
      uint8_t* px = &scene.image.data[i * 3];
      switch (static_cast<PixelClass>(scene.mask[i])) {
        case PixelClass::lawn: {
          ++lawn_pixels;
          int base[3] = {60, 140, 60};
          for (int c = 0; c < 3; ++c) {
            long v = base[c] + rng.uniform_int(-20, 20);
            px[c] = static_cast<uint8_t>(std::clamp(v, 0l, 255l));
          }
          break;
        }
        case PixelClass::house:
          px[0] = 120; px[1] = 120; px[2] = 120;
          break;
        case PixelClass::driveway:
          px[0] = 90; px[1] = 90; px[2] = 90;
          break;
        case PixelClass::tree:
          px[0] = 30; px[1] = 80; px[2] = 30;
          break;
      }
    }
  }
  scene.area_sq_m = static_cast<double>(lawn_pixels) * cfg.meters_per_pixel * cfg.meters_per_pixel;
  return scene;
}

imaging::Image load_input_image(const std::filesystem::path& root, const ManifestRecord& rec,
                                imaging::PreprocessMethod method,
                                const imaging::PreprocessParams& params) {
  return imaging::preprocess(imaging::read_pnm(root / rec.image_path), method, params);
}

}  // namespace lawn::data
