#include "phantom.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "csv.hpp"
#include "rng.hpp"
#include "threads.hpp"

static_assert(std::endian::native == std::endian::little,
              "phantom image container assumes a little-endian host");

namespace lab {

std::vector<std::uint8_t> Phantom::band_mask() const {
  std::vector<std::uint8_t> out(mask.size(), 0);
  for (size_t i = 0; i < mask.size(); ++i) out[i] = (mask[i] == kBand) ? 1 : 0;
  return out;
}

namespace {

constexpr double kTwoPi = 6.283185307179586476925286766559;

struct Geometry {
  double cx, cy, a, b, rot;
  double cavity_rho, band_rho;  // label = cavity below cavity_rho, band up to band_rho, tissue to 1
  double gap_center, gap_width; // radians; gap_width 0 means intact band
};

std::vector<std::uint8_t> rasterize(const Geometry& g, int side) {
  std::vector<std::uint8_t> mask(static_cast<size_t>(side) * side, kBackground);
  double cr = std::cos(g.rot), sr = std::sin(g.rot);
  for (int y = 0; y < side; ++y)
    for (int x = 0; x < side; ++x) {
      double dx = x + 0.5 - g.cx, dy = y + 0.5 - g.cy;
      double u = (dx * cr + dy * sr) / g.a;
      double v = (-dx * sr + dy * cr) / g.b;
      double rho = std::sqrt(u * u + v * v);
      std::uint8_t label = kBackground;
      if (rho <= g.cavity_rho) label = kCavity;
      else if (rho <= g.band_rho) label = kBand;
      else if (rho <= 1.0) label = kTissue;
      if (label == kBand && g.gap_width > 0) {
        double ang = std::atan2(v, u);
        double d = std::fabs(std::remainder(ang - g.gap_center, kTwoPi));
        if (d <= g.gap_width / 2) label = kTissue;  // the break
      }
      mask[static_cast<size_t>(y) * side + x] = label;
    }
  return mask;
}

// 3x3 box blur with clamped borders
void box_blur(std::vector<real>& img, int side, int passes) {
  std::vector<real> tmp(img.size());
  for (int p = 0; p < passes; ++p) {
    for (int y = 0; y < side; ++y)
      for (int x = 0; x < side; ++x) {
        real acc = 0;
        int cnt = 0;
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            int yy = y + dy, xx = x + dx;
            if (yy < 0 || yy >= side || xx < 0 || xx >= side) continue;
            acc += img[static_cast<size_t>(yy) * side + xx];
            ++cnt;
          }
        tmp[static_cast<size_t>(y) * side + x] = acc / static_cast<real>(cnt);
      }
    img = tmp;
  }
}

void clamp01(std::vector<real>& img) {
  for (auto& v : img) v = std::min(real(1), std::max(real(0), v));
}

std::vector<real> render_mri(const std::vector<std::uint8_t>& mask, int side, Rng& rng) {
  // smooth render: layer intensities plus a low-frequency bias field
  static const real level[4] = {real(0.30), real(0.45), real(0.95), real(0.38)};
  std::vector<real> img(mask.size());
  for (size_t i = 0; i < mask.size(); ++i) img[i] = level[mask[i]];
  // bilinear 4x4 bias grid
  const int G = 4;
  real bias[G * G];
  for (auto& b : bias) b = static_cast<real>(rng.uniform(-0.04, 0.04));
  for (int y = 0; y < side; ++y)
    for (int x = 0; x < side; ++x) {
      double gy = static_cast<double>(y) / (side - 1) * (G - 1);
      double gx = static_cast<double>(x) / (side - 1) * (G - 1);
      int y0 = std::min(static_cast<int>(gy), G - 2), x0 = std::min(static_cast<int>(gx), G - 2);
      double fy = gy - y0, fx = gx - x0;
      real v = static_cast<real>(bias[y0 * G + x0] * (1 - fy) * (1 - fx) +
                                 bias[y0 * G + x0 + 1] * (1 - fy) * fx +
                                 bias[(y0 + 1) * G + x0] * fy * (1 - fx) +
                                 bias[(y0 + 1) * G + x0 + 1] * fy * fx);
      img[static_cast<size_t>(y) * side + x] += v;
    }
  clamp01(img);
  return img;
}

std::vector<real> render_us(const std::vector<std::uint8_t>& mask, int side, Rng& rng) {
  // speckled render: multiplicative smoothed noise plus depth attenuation
  static const real level[4] = {real(0.10), real(0.38), real(0.90), real(0.25)};
  std::vector<real> speckle(mask.size());
  for (auto& v : speckle) v = static_cast<real>(rng.uniform(-1.0, 1.0));
  box_blur(speckle, side, 1);
  std::vector<real> img(mask.size());
  for (int y = 0; y < side; ++y)
    for (int x = 0; x < side; ++x) {
      size_t i = static_cast<size_t>(y) * side + x;
      real atten = real(1) - real(0.12) * static_cast<real>(y) / static_cast<real>(side);
      img[i] = level[mask[i]] * (real(1) + real(0.22) * speckle[i]) * atten;
    }
  clamp01(img);
  return img;
}

}  // namespace

int classify_mask(const std::vector<std::uint8_t>& mask, int side) {
  // flood from every cavity pixel through non-band pixels; border reach = broken
  std::vector<std::uint8_t> visited(mask.size(), 0);
  std::vector<int> stack;
  for (size_t i = 0; i < mask.size(); ++i)
    if (mask[i] == kCavity) {
      stack.push_back(static_cast<int>(i));
      visited[i] = 1;
    }
  if (stack.empty()) throw DataError("classify_mask: no cavity in mask");
  while (!stack.empty()) {
    int i = stack.back();
    stack.pop_back();
    int y = i / side, x = i % side;
    if (y == 0 || y == side - 1 || x == 0 || x == side - 1) return 1;
    const int dy[4] = {-1, 1, 0, 0}, dx[4] = {0, 0, -1, 1};
    for (int d = 0; d < 4; ++d) {
      int j = (y + dy[d]) * side + (x + dx[d]);
      if (!visited[j] && mask[j] != kBand) {
        visited[j] = 1;
        stack.push_back(j);
      }
    }
  }
  return 0;
}

Phantom gen_phantom(std::uint64_t seed, int side, bool invasion) {
  if (side < 16) throw ConfigError("phantom side must be at least 16");
  Rng base(seed);
  for (int attempt = 0; attempt < 100; ++attempt) {
    Rng rng = base.fork(static_cast<std::uint64_t>(attempt));
    Geometry g;
    g.cx = side * rng.uniform(0.44, 0.56);
    g.cy = side * rng.uniform(0.44, 0.56);
    g.a = side * rng.uniform(0.36, 0.45);
    g.b = side * rng.uniform(0.33, 0.42);
    g.rot = rng.uniform(0.0, kTwoPi / 2);
    g.cavity_rho = rng.uniform(0.44, 0.50);
    g.band_rho = g.cavity_rho + rng.uniform(0.20, 0.26);
    g.gap_center = rng.uniform(0.0, kTwoPi);
    g.gap_width = invasion ? rng.uniform(0.55, 1.0) : 0.0;
    auto mask = rasterize(g, side);
    bool has_cavity = std::count(mask.begin(), mask.end(), kCavity) > 0;
    if (!has_cavity || classify_mask(mask, side) != (invasion ? 1 : 0))
      continue;  // rasterization broke the intended topology; redraw
    Phantom ph;
    ph.side = side;
    ph.seed = seed;
    ph.invasion = invasion ? 1 : 0;
    ph.mask = std::move(mask);
    ph.mri = render_mri(ph.mask, side, rng);
    ph.us = render_us(ph.mask, side, rng);
    return ph;
  }
  throw Error("gen_phantom: could not realize requested topology for seed " +
              std::to_string(seed));
}

void write_phnt(const std::string& path, const PhntImage& img) {
  if (static_cast<int>(img.pixels.size()) != img.side * img.side * img.channels)
    throw DataError("phnt image pixel count does not match header");
  std::string out;
  out.append("PHNT", 4);
  auto put_u32 = [&out](std::uint32_t v) { out.append(reinterpret_cast<char*>(&v), 4); };
  put_u32(static_cast<std::uint32_t>(img.side));
  put_u32(static_cast<std::uint32_t>(img.channels));
  put_u32(static_cast<std::uint32_t>(img.label));
  std::vector<float> f32(img.pixels.size());
  for (size_t i = 0; i < f32.size(); ++i) f32[i] = static_cast<float>(img.pixels[i]);
  out.append(reinterpret_cast<const char*>(f32.data()), f32.size() * sizeof(float));
  write_text_file(path, out);
}

PhntImage read_phnt(const std::string& path) {
  std::string buf = read_text_file(path);
  if (buf.size() < 16 || buf.compare(0, 4, "PHNT") != 0)
    throw DataError("not a PHNT image: " + path);
  auto get_u32 = [&buf](size_t off) {
    std::uint32_t v;
    std::memcpy(&v, buf.data() + off, 4);
    return v;
  };
  PhntImage img;
  img.side = static_cast<int>(get_u32(4));
  img.channels = static_cast<int>(get_u32(8));
  img.label = static_cast<int>(get_u32(12));
  size_t n = static_cast<size_t>(img.side) * img.side * img.channels;
  if (buf.size() != 16 + n * sizeof(float))
    throw DataError("PHNT payload size mismatch: " + path);
  img.pixels.resize(n);
  const float* f32 = reinterpret_cast<const float*>(buf.data() + 16);
  for (size_t i = 0; i < n; ++i) img.pixels[i] = static_cast<real>(f32[i]);
  return img;
}

std::vector<IndexRow> gen_dataset(const std::string& root, const DatasetSpec& spec) {
  if (spec.n_per_class < 10) throw ConfigError("n_per_class must be at least 10");
  int n = spec.n_per_class;
  int n_val = n / 10, n_test = n / 10, n_train = n - n_val - n_test;
  struct Item {
    std::uint64_t seed;
    int label;
    std::string split;
  };
  std::vector<Item> items;
  for (int cls = 0; cls < 2; ++cls)
    for (int idx = 0; idx < n; ++idx) {
      std::uint64_t seed =
          spec.seed * 1000000ULL + static_cast<std::uint64_t>(cls) * 100000ULL + idx;
      std::string split = idx < n_train ? "train" : (idx < n_train + n_val ? "val" : "test");
      items.push_back({seed, cls, split});
    }
  for (const char* s : {"train", "val", "test"})
    std::filesystem::create_directories(std::filesystem::path(root) / s);

  std::vector<IndexRow> index;
  parallel_for(static_cast<std::int64_t>(items.size()), [&](std::int64_t i) {
    const Item& it = items[static_cast<size_t>(i)];
    Phantom ph = gen_phantom(it.seed, spec.side, it.label == 1);
    auto rel = [&](const char* kind) {
      return it.split + "/" + kind + "_" + std::to_string(it.seed) + ".phnt";
    };
    PhntImage img;
    img.side = spec.side;
    img.channels = 1;
    img.label = it.label;
    img.pixels = ph.us;
    write_phnt(root + "/" + rel("us"), img);
    img.pixels = ph.mri;
    write_phnt(root + "/" + rel("mri"), img);
    img.pixels.assign(ph.mask.begin(), ph.mask.end());
    write_phnt(root + "/" + rel("mask"), img);
  });
  for (const Item& it : items) {
    for (const char* kind : {"us", "mri"})
      index.push_back({it.split + "/" + std::string(kind) + "_" + std::to_string(it.seed) +
                           ".phnt",
                       it.split, it.label, it.seed});
  }
  CsvTable t;
  t.header = {"path", "split", "label", "seed"};
  for (const auto& r : index)
    t.rows.push_back({r.path, r.split, std::to_string(r.label), std::to_string(r.seed)});
  write_csv(root + "/index.csv", t);
  return index;
}

std::vector<IndexRow> read_index(const std::string& root) {
  CsvTable t = read_csv(root + "/index.csv");
  if (t.header != std::vector<std::string>{"path", "split", "label", "seed"})
    throw DataError("unexpected index.csv header in " + root);
  std::vector<IndexRow> rows;
  for (const auto& r : t.rows) {
    if (r.size() != 4) throw DataError("malformed index.csv row in " + root);
    rows.push_back({r[0], r[1], std::stoi(r[2]), std::stoull(r[3])});
  }
  return rows;
}

std::vector<std::uint8_t> otsu_binarize(const std::vector<real>& img) {
  if (img.empty()) throw DataError("otsu on empty image");
  constexpr int kBins = 256;
  int hist[kBins] = {0};
  for (real v : img) {
    int b = static_cast<int>(std::min(real(1), std::max(real(0), v)) * (kBins - 1));
    ++hist[b];
  }
  double total = static_cast<double>(img.size());
  double sum_all = 0;
  for (int b = 0; b < kBins; ++b) sum_all += b * static_cast<double>(hist[b]);
  double w0 = 0, sum0 = 0, best_sigma = -1;
  int best_t = 0;
  for (int t = 0; t < kBins - 1; ++t) {
    w0 += hist[t];
    if (w0 == 0) continue;
    double w1 = total - w0;
    if (w1 == 0) break;
    sum0 += t * static_cast<double>(hist[t]);
    double mu0 = sum0 / w0, mu1 = (sum_all - sum0) / w1;
    double sigma = w0 * w1 * (mu0 - mu1) * (mu0 - mu1);
    if (sigma > best_sigma) {
      best_sigma = sigma;
      best_t = t;
    }
  }
  std::vector<std::uint8_t> out(img.size());
  real thresh = static_cast<real>(best_t + 1) / (kBins - 1);
  for (size_t i = 0; i < img.size(); ++i) out[i] = img[i] >= thresh ? 1 : 0;
  return out;
}

double dice(const std::vector<std::uint8_t>& a, const std::vector<std::uint8_t>& b) {
  if (a.size() != b.size()) throw DataError("dice: size mismatch");
  std::int64_t inter = 0, na = 0, nb = 0;
  for (size_t i = 0; i < a.size(); ++i) {
    na += a[i] ? 1 : 0;
    nb += b[i] ? 1 : 0;
    inter += (a[i] && b[i]) ? 1 : 0;
  }
  if (na + nb == 0) throw DataError("dice: both masks empty");
  return 2.0 * static_cast<double>(inter) / static_cast<double>(na + nb);
}

double structure_fidelity(const std::vector<real>& translated,
                          const std::vector<std::uint8_t>& junction_mask, int side) {
  if (static_cast<int>(translated.size()) != side * side ||
      translated.size() != junction_mask.size())
    throw DataError("structure_fidelity: image and mask sizes do not match");
  bool any = false;
  for (auto v : junction_mask) any = any || v;
  if (!any) throw DataError("structure_fidelity: empty junction mask");
  return dice(otsu_binarize(translated), junction_mask);
}

}  // namespace lab
