#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "figret/image.hpp"

namespace figret {

struct LabeledExample {
  Image image;
  int type_label = 0;
  int class_label = 0;
  std::string id;
  // Space-separated metadata words; the first is the synthetic domain name.
  std::string tags;

  friend bool operator==(const LabeledExample&, const LabeledExample&) = default;
};

using Corpus = std::vector<LabeledExample>;

struct CorpusSpec {
  int types = 4;
  int classes = 8;
  int per_cell = 10;
  int image_size = 64;
  std::uint64_t seed = 7;

  void validate() const;
};

// Rendering families indexed by type label (wraps around past the last one).
const std::vector<std::string>& type_family_names();
// Domain tag attached to each class label.
std::string domain_name(int class_label);

// T x K x per_cell examples, ordered by (type, class, index). A pure function of spec.
Corpus generate_synthetic_corpus(const CorpusSpec& spec);

// Draws a single figure; exposed for page composition and tests.
Image render_figure(int type_label, int class_label, int size, std::uint64_t seed);

struct AugmentParams {
  double rotation_max_deg = 15.0;
  double deform_amp = 1.5;
  double hflip_prob = 0.0;
};

LabeledExample augment(const LabeledExample& example, const AugmentParams& params, std::uint64_t seed);

struct SplitRatios {
  double train = 6.0;
  double val = 1.0;
  double test = 1.0;

  void validate() const;
};

struct Splits {
  Corpus train;
  Corpus val;
  Corpus test;
};

// Augments every class-label stratum up to target_per_class, then partitions
// each stratum by ratios (largest remainder).
Splits balance_and_split(const Corpus& corpus, const SplitRatios& ratios, int target_per_class,
                         std::uint64_t seed, const AugmentParams& aug = {});

struct Segment {
  int x = 0, y = 0;  // crop origin on the page
  int area = 0;      // foreground pixel count
  Image image;
};

// Connected-component figure segmentation: ink is pixel < 0.5, 8-connectivity.
// merge_gap > 0 additionally joins ink pixels closer than merge_gap (Chebyshev)
// so a figure made of several strokes yields one crop. Results are ordered by
// bounding-box top, then left.
std::vector<Segment> segment_page_regions(const Image& page, int min_area, int pad, int merge_gap = 0);
std::vector<Image> segment_page(const Image& page, int min_area, int pad, int merge_gap = 0);

// On-disk layout: root/<split>/<class>/<type>/<id>.pgm plus root/manifest.json.
struct ManifestEntry {
  std::string id;
  std::string split;
  int class_label = 0;
  int type_label = 0;
  std::string path;  // relative to root
  std::string tags;
};

struct Manifest {
  CorpusSpec spec;
  std::vector<ManifestEntry> entries;
};

void write_corpus(const std::filesystem::path& root, const Splits& splits, const CorpusSpec& spec);
Manifest read_manifest(const std::filesystem::path& root);
Corpus load_split(const std::filesystem::path& root, const Manifest& manifest, const std::string& split);

}  // namespace figret
