// Deterministic two-modality phantom generator. Every phantom is a nested
// ellipse anatomy (outer tissue, junction band, inner cavity) rendered twice
// with distinct modality statistics; the binary label is "the junction band
// is broken", true by construction exactly for invasion phantoms.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "common.hpp"

namespace lab {

// mask labels
inline constexpr std::uint8_t kBackground = 0;
inline constexpr std::uint8_t kTissue = 1;
inline constexpr std::uint8_t kBand = 2;
inline constexpr std::uint8_t kCavity = 3;

struct Phantom {
  int side = 0;
  std::uint64_t seed = 0;
  int invasion = 0;
  std::vector<std::uint8_t> mask;  // side*side labels
  std::vector<real> mri;           // smooth render, values in [0,1]
  std::vector<real> us;            // speckled, depth-attenuated render
  std::vector<std::uint8_t> band_mask() const;
};

Phantom gen_phantom(std::uint64_t seed, int side, bool invasion);

// ground-truth rule: invasion iff a flood fill from the cavity reaches the
// image border without crossing band pixels
int classify_mask(const std::vector<std::uint8_t>& mask, int side);

// ---- on-disk dataset ----------------------------------------------------

// raw image container: 16-byte header (magic "PHNT", u32 side, u32 channels,
// u32 label), then side*side*channels little-endian float32 pixels
struct PhntImage {
  int side = 0, channels = 1, label = 0;
  std::vector<real> pixels;
};

void write_phnt(const std::string& path, const PhntImage& img);
PhntImage read_phnt(const std::string& path);

struct IndexRow {
  std::string path;  // relative to the dataset root
  std::string split; // train / val / test
  int label = 0;
  std::uint64_t seed = 0;
};

struct DatasetSpec {
  int n_per_class = 100;  // >= 10
  int side = 32;
  std::uint64_t seed = 42;
};

// Writes us_/mri_/mask_ files under <root>/<split>/ plus index.csv. Splits
// are 8:1:1 per class over disjoint seed ranges; val/test are exactly
// balanced.
std::vector<IndexRow> gen_dataset(const std::string& root, const DatasetSpec& spec);

std::vector<IndexRow> read_index(const std::string& root);

// ---- structure fidelity ---------------------------------------------------

std::vector<std::uint8_t> otsu_binarize(const std::vector<real>& img);
double dice(const std::vector<std::uint8_t>& a, const std::vector<std::uint8_t>& b);
// Otsu-thresholds the translated image and compares the bright class to the
// source junction band.
double structure_fidelity(const std::vector<real>& translated,
                          const std::vector<std::uint8_t>& junction_mask, int side);

}  // namespace lab
