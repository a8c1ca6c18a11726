#include "figret/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numbers>
#include <numeric>
#include <array>
#include <set>
#include <sstream>

#include "json.hpp"

#include "figret/error.hpp"
#include "figret/random.hpp"
#include "figret/util.hpp"

namespace figret {

void CorpusSpec::validate() const {
  if (types < 2) throw ParameterError("corpus: types must be >= 2");
  if (classes < 2) throw ParameterError("corpus: classes must be >= 2");
  if (per_cell < 1) throw ParameterError("corpus: per_cell must be >= 1");
  if (image_size < 16) throw ParameterError("corpus: image_size must be >= 16");
}

void SplitRatios::validate() const {
  if (!(train > 0) || !(val > 0) || !(test > 0)) throw ParameterError("split ratios must all be > 0");
}

const std::vector<std::string>& type_family_names() {
  static const std::vector<std::string> names = {"drawing", "flowchart", "graph", "table"};
  return names;
}

std::string domain_name(int class_label) {
  static const std::vector<std::string> names = {"flywheel", "milling", "aircraft", "robotics",
                                                 "valve",    "gearbox", "pump",     "sensor"};
  if (class_label >= 0 && class_label < static_cast<int>(names.size())) return names[class_label];
  return "domain" + std::to_string(class_label);
}

namespace {

// Ink-on-paper canvas in a nominal 64-unit coordinate frame scaled to the image size.
class Canvas {
 public:
  explicit Canvas(int size) : img_(size, size, 1.0f), scale_(size / 64.0) {}

  void line(double x0, double y0, double x1, double y1, double width) {
    x0 *= scale_, y0 *= scale_, x1 *= scale_, y1 *= scale_;
    const double r = 0.5 * width * std::max(1.0, scale_) + 0.1;
    const int bx0 = static_cast<int>(std::floor(std::min(x0, x1) - r - 1));
    const int bx1 = static_cast<int>(std::ceil(std::max(x0, x1) + r + 1));
    const int by0 = static_cast<int>(std::floor(std::min(y0, y1) - r - 1));
    const int by1 = static_cast<int>(std::ceil(std::max(y0, y1) + r + 1));
    const double dx = x1 - x0, dy = y1 - y0;
    const double len2 = dx * dx + dy * dy;
    for (int y = by0; y <= by1; ++y) {
      for (int x = bx0; x <= bx1; ++x) {
        if (!img_.contains(x, y)) continue;
        const double px = x + 0.5, py = y + 0.5;
        double t = len2 > 0 ? ((px - x0) * dx + (py - y0) * dy) / len2 : 0.0;
        t = std::clamp(t, 0.0, 1.0);
        const double ex = x0 + t * dx - px, ey = y0 + t * dy - py;
        if (ex * ex + ey * ey <= r * r) img_.at(x, y) = 0.0f;
      }
    }
  }

  void rect(double x0, double y0, double x1, double y1, double width) {
    line(x0, y0, x1, y0, width);
    line(x1, y0, x1, y1, width);
    line(x1, y1, x0, y1, width);
    line(x0, y1, x0, y0, width);
  }

  void fill_rect(double x0, double y0, double x1, double y1) {
    for (int y = static_cast<int>(std::floor(y0 * scale_)); y < static_cast<int>(std::ceil(y1 * scale_)); ++y)
      for (int x = static_cast<int>(std::floor(x0 * scale_)); x < static_cast<int>(std::ceil(x1 * scale_)); ++x)
        if (img_.contains(x, y)) img_.at(x, y) = 0.0f;
  }

  void polyline(const std::vector<std::pair<double, double>>& pts, double width) {
    for (std::size_t i = 1; i < pts.size(); ++i)
      line(pts[i - 1].first, pts[i - 1].second, pts[i].first, pts[i].second, width);
  }

  void circle(double cx, double cy, double radius, double width, int segments = 24) {
    std::vector<std::pair<double, double>> pts;
    for (int i = 0; i <= segments; ++i) {
      const double a = 2.0 * std::numbers::pi * i / segments;
      pts.emplace_back(cx + radius * std::cos(a), cy + radius * std::sin(a));
    }
    polyline(pts, width);
  }

  Image take() { return std::move(img_); }

 private:
  Image img_;
  double scale_;
};

// Content lives in [4, 48]^2; the bottom-right corner holds the class motif.
void draw_family(Canvas& cv, int family, int density, double width, Rng& rng) {
  switch (family) {
    case 0: {  // line drawing: an outline part with interior strokes
      const double cx = rng.uniform(22, 28), cy = rng.uniform(22, 28);
      const double rx = rng.uniform(14, 19), ry = rng.uniform(12, 18);
      const int sides = rng.range(5, 7);
      std::vector<std::pair<double, double>> pts;
      const double phase = rng.uniform(0, 1);
      for (int i = 0; i <= sides; ++i) {
        const double a = 2.0 * std::numbers::pi * (i + phase) / sides;
        pts.emplace_back(cx + rx * std::cos(a), cy + ry * std::sin(a));
      }
      cv.polyline(pts, width);
      for (int s = 0; s < density; ++s) {
        const double a = rng.uniform(0, std::numbers::pi);
        const double l = rng.uniform(6, 12);
        const double ox = cx + rng.uniform(-6, 6), oy = cy + rng.uniform(-6, 6);
        cv.line(ox - l * std::cos(a), oy - l * std::sin(a), ox + l * std::cos(a), oy + l * std::sin(a), width);
      }
      break;
    }
    case 1: {  // flowchart: boxes in a column joined by connectors
      const int boxes = 1 + density;
      const double top = rng.uniform(3, 6), bottom = rng.uniform(44, 48);
      const double step = (bottom - top) / boxes;
      const double cx = rng.uniform(20, 28);
      const double half_w = rng.uniform(8, 13);
      for (int b = 0; b < boxes; ++b) {
        const double y0 = top + b * step, y1 = y0 + step * 0.6;
        cv.rect(cx - half_w, y0, cx + half_w, y1, width);
        if (b + 1 < boxes) cv.line(cx, y1, cx, top + (b + 1) * step, width);
      }
      break;
    }
    case 2: {  // plot: axes, ticks and a curve
      const double ox = rng.uniform(5, 8), oy = rng.uniform(42, 46);
      cv.line(ox, 3, ox, oy, width);
      cv.line(ox, oy, 48, oy, width);
      for (int t = 1; t <= 4; ++t) cv.line(ox + t * 9, oy, ox + t * 9, oy + 2, width);
      const double freq = 0.5 + 0.5 * density;
      const double amp = rng.uniform(8, 13), mid = rng.uniform(20, 26), ph = rng.uniform(0, 6.28);
      std::vector<std::pair<double, double>> pts;
      for (int i = 0; i <= 40; ++i) {
        const double x = ox + 2 + i * (44 - ox) / 40.0;
        pts.emplace_back(x, mid + amp * std::sin(ph + freq * 2.0 * std::numbers::pi * i / 40.0));
      }
      cv.polyline(pts, width);
      break;
    }
    default: {  // table: an outer frame with row and column rules
      const double x0 = rng.uniform(3, 7), y0 = rng.uniform(3, 7);
      const double x1 = rng.uniform(42, 48), y1 = rng.uniform(40, 46);
      cv.rect(x0, y0, x1, y1, width);
      const int rows = 1 + density, cols = rng.range(2, 3);
      for (int r = 1; r <= rows; ++r) cv.line(x0, y0 + r * (y1 - y0) / (rows + 1), x1, y0 + r * (y1 - y0) / (rows + 1), width);
      for (int c = 1; c < cols; ++c) cv.line(x0 + c * (x1 - x0) / cols, y0, x0 + c * (x1 - x0) / cols, y1, width);
      break;
    }
  }
}

void draw_motif(Canvas& cv, int motif, double width, Rng& rng) {
  const double cx = 55 + rng.uniform(-1.5, 1.5), cy = 55 + rng.uniform(-1.5, 1.5);
  switch (motif) {
    case 0: cv.fill_rect(cx - 5, cy - 5, cx + 5, cy + 5); break;
    case 1: cv.circle(cx, cy, 5.5, width + 1.0, 20); break;
    case 2:
      cv.line(cx - 6, cy - 6, cx + 6, cy + 6, width + 1.0);
      cv.line(cx - 6, cy + 6, cx + 6, cy - 6, width + 1.0);
      break;
    default:
      cv.polyline({{cx - 6, cy + 5}, {cx + 6, cy + 5}, {cx, cy - 6}, {cx - 6, cy + 5}}, width + 1.0);
      break;
  }
}

}  // namespace

Image render_figure(int type_label, int class_label, int size, std::uint64_t seed) {
  if (type_label < 0 || class_label < 0) throw ParameterError("render: labels must be non-negative");
  if (size < 16) throw ParameterError("render: size must be >= 16");
  Rng rng(seed);
  Canvas cv(size);
  const int family = type_label % 4;
  const double width = 1.0 + (type_label / 4);
  const int motif = class_label % 4;
  const int density = 1 + 2 * (class_label / 4);
  draw_family(cv, family, density, width, rng);
  draw_motif(cv, motif, width, rng);
  Image img = cv.take();
  quantize_to_8bit(img);
  return img;
}

Corpus generate_synthetic_corpus(const CorpusSpec& spec) {
  spec.validate();
  Corpus out;
  out.reserve(static_cast<std::size_t>(spec.types) * spec.classes * spec.per_cell);
  const auto& families = type_family_names();
  for (int t = 0; t < spec.types; ++t) {
    for (int c = 0; c < spec.classes; ++c) {
      for (int i = 0; i < spec.per_cell; ++i) {
        LabeledExample ex;
        ex.type_label = t;
        ex.class_label = c;
        char buf[64];
        std::snprintf(buf, sizeof buf, "t%d-c%d-%04d", t, c, i);
        ex.id = buf;
        ex.tags = domain_name(c) + " " + families[t % families.size()];
        ex.image = render_figure(t, c, spec.image_size,
                                 derive_seed(spec.seed, static_cast<std::uint64_t>(t) * 1000003u + c, i));
        out.push_back(std::move(ex));
      }
    }
  }
  return out;
}

namespace {

float sample_bilinear(const Image& img, double x, double y) {
  const int x0 = static_cast<int>(std::floor(x)), y0 = static_cast<int>(std::floor(y));
  const double fx = x - x0, fy = y - y0;
  auto px = [&](int xi, int yi) -> double { return img.contains(xi, yi) ? img.at(xi, yi) : 1.0; };
  const double v = (1 - fx) * (1 - fy) * px(x0, y0) + fx * (1 - fy) * px(x0 + 1, y0) +
                   (1 - fx) * fy * px(x0, y0 + 1) + fx * fy * px(x0 + 1, y0 + 1);
  return static_cast<float>(std::clamp(v, 0.0, 1.0));
}

}  // namespace

LabeledExample augment(const LabeledExample& example, const AugmentParams& params, std::uint64_t seed) {
  if (!(params.rotation_max_deg >= 0.0 && params.rotation_max_deg <= 180.0))
    throw ParameterError("augment: rotation_max_deg must be in [0,180]");
  if (!(params.deform_amp >= 0.0)) throw ParameterError("augment: deform_amp must be >= 0");
  if (!(params.hflip_prob >= 0.0 && params.hflip_prob <= 1.0))
    throw ParameterError("augment: hflip_prob must be in [0,1]");
  example.image.validate();

  LabeledExample out = example;
  if (params.rotation_max_deg == 0.0 && params.deform_amp == 0.0 && params.hflip_prob == 0.0) return out;

  Rng rng(seed);
  const Image& src = example.image;
  const int w = src.width, h = src.height;
  const double angle = rng.uniform(-params.rotation_max_deg, params.rotation_max_deg) * std::numbers::pi / 180.0;
  const bool flip = rng.uniform() < params.hflip_prob;

  // Smooth displacement field: a coarse grid of random offsets, bilinearly upsampled.
  constexpr int kGrid = 5;
  std::vector<double> gdx(kGrid * kGrid), gdy(kGrid * kGrid);
  for (int i = 0; i < kGrid * kGrid; ++i) {
    gdx[i] = rng.uniform(-params.deform_amp, params.deform_amp);
    gdy[i] = rng.uniform(-params.deform_amp, params.deform_amp);
  }
  auto field = [&](const std::vector<double>& g, double u, double v) {
    const double gx = u * (kGrid - 1), gy = v * (kGrid - 1);
    const int i0 = std::min(static_cast<int>(gx), kGrid - 2), j0 = std::min(static_cast<int>(gy), kGrid - 2);
    const double fx = gx - i0, fy = gy - j0;
    return (1 - fx) * (1 - fy) * g[j0 * kGrid + i0] + fx * (1 - fy) * g[j0 * kGrid + i0 + 1] +
           (1 - fx) * fy * g[(j0 + 1) * kGrid + i0] + fx * fy * g[(j0 + 1) * kGrid + i0 + 1];
  };

  const double cx = (w - 1) / 2.0, cy = (h - 1) / 2.0;
  const double ca = std::cos(angle), sa = std::sin(angle);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double u = w > 1 ? static_cast<double>(x) / (w - 1) : 0.0;
      const double v = h > 1 ? static_cast<double>(y) / (h - 1) : 0.0;
      double sx = x + field(gdx, u, v), sy = y + field(gdy, u, v);
      if (flip) sx = (w - 1) - sx;
      const double rx = sx - cx, ry = sy - cy;
      out.image.at(x, y) = sample_bilinear(src, cx + ca * rx + sa * ry, cy - sa * rx + ca * ry);
    }
  }
  quantize_to_8bit(out.image);
  return out;
}

Splits balance_and_split(const Corpus& corpus, const SplitRatios& ratios, int target_per_class,
                         std::uint64_t seed, const AugmentParams& aug) {
  if (corpus.empty()) throw ParameterError("balance_and_split: corpus is empty");
  ratios.validate();

  std::map<int, std::vector<const LabeledExample*>> strata;
  std::set<std::string> ids;
  for (const auto& ex : corpus) {
    if (!ids.insert(ex.id).second) throw ParameterError("balance_and_split: duplicate id " + ex.id);
    strata[ex.class_label].push_back(&ex);
  }
  std::size_t max_count = 0;
  for (const auto& [label, members] : strata) max_count = std::max(max_count, members.size());
  if (target_per_class < 0 || static_cast<std::size_t>(target_per_class) < max_count)
    throw ParameterError("balance_and_split: target_per_class " + std::to_string(target_per_class) +
                         " is below the largest class count " + std::to_string(max_count));

  const double weights[3] = {ratios.train, ratios.val, ratios.test};
  const double total_w = weights[0] + weights[1] + weights[2];
  std::size_t sizes[3];
  {
    double rem[3];
    std::size_t assigned = 0;
    for (int s = 0; s < 3; ++s) {
      const double exact = target_per_class * weights[s] / total_w;
      sizes[s] = static_cast<std::size_t>(std::floor(exact));
      rem[s] = exact - sizes[s];
      assigned += sizes[s];
    }
    std::array<int, 3> order = {0, 1, 2};
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return rem[a] > rem[b]; });
    for (int i = 0; assigned < static_cast<std::size_t>(target_per_class); ++i, ++assigned) ++sizes[order[i % 3]];
  }

  Splits out;
  Corpus* dest[3] = {&out.train, &out.val, &out.test};
  for (const auto& [label, members] : strata) {
    Corpus stratum;
    for (const auto* ex : members) stratum.push_back(*ex);
    for (std::size_t j = 0; stratum.size() < static_cast<std::size_t>(target_per_class); ++j) {
      const LabeledExample& src = *members[j % members.size()];
      LabeledExample a = augment(src, aug, derive_seed(seed, "augment", static_cast<std::uint64_t>(label) << 32 | j));
      a.id = src.id + "-aug" + std::to_string(j);
      if (ids.count(a.id)) throw ParameterError("balance_and_split: augmented id collides: " + a.id);
      stratum.push_back(std::move(a));
    }
    Rng rng(derive_seed(seed, "split", static_cast<std::uint64_t>(label)));
    rng.shuffle(stratum.begin(), stratum.end());
    std::size_t pos = 0;
    for (int s = 0; s < 3; ++s)
      for (std::size_t i = 0; i < sizes[s]; ++i) dest[s]->push_back(std::move(stratum[pos++]));
  }
  return out;
}

namespace {

struct DisjointSet {
  std::vector<int> parent;
  explicit DisjointSet(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  int find(int a) {
    while (parent[a] != a) a = parent[a] = parent[parent[a]];
    return a;
  }
  void unite(int a, int b) {
    a = find(a), b = find(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
};

}  // namespace

std::vector<Segment> segment_page_regions(const Image& page, int min_area, int pad, int merge_gap) {
  page.validate();
  if (min_area < 0 || pad < 0 || merge_gap < 0) throw ParameterError("segment_page: negative parameter");
  const int w = page.width, h = page.height;
  const int reach = 1 + merge_gap;
  DisjointSet ds(static_cast<std::size_t>(w) * h);
  auto ink = [&](int x, int y) { return page.at(x, y) < 0.5f; };
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!ink(x, y)) continue;
      // Look back over the already-visited half of the neighborhood.
      for (int dy = -reach; dy <= 0; ++dy) {
        for (int dx = -reach; dx <= reach; ++dx) {
          if (dy == 0 && dx >= 0) break;
          const int nx = x + dx, ny = y + dy;
          if (page.contains(nx, ny) && ink(nx, ny)) ds.unite(y * w + x, ny * w + nx);
        }
      }
    }
  }
  struct Box {
    int x0, y0, x1, y1, area;
  };
  std::map<int, Box> boxes;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (!ink(x, y)) continue;
      const int root = ds.find(y * w + x);
      auto [it, fresh] = boxes.try_emplace(root, Box{x, y, x, y, 0});
      Box& b = it->second;
      b.x0 = std::min(b.x0, x), b.y0 = std::min(b.y0, y);
      b.x1 = std::max(b.x1, x), b.y1 = std::max(b.y1, y);
      ++b.area;
    }
  }
  std::vector<Box> kept;
  for (const auto& [root, b] : boxes)
    if (b.area >= min_area) kept.push_back(b);
  std::sort(kept.begin(), kept.end(), [](const Box& a, const Box& b) {
    return a.y0 != b.y0 ? a.y0 < b.y0 : a.x0 < b.x0;
  });
  std::vector<Segment> out;
  for (const Box& b : kept) {
    const int x0 = std::max(0, b.x0 - pad), y0 = std::max(0, b.y0 - pad);
    const int x1 = std::min(w - 1, b.x1 + pad), y1 = std::min(h - 1, b.y1 + pad);
    out.push_back(Segment{x0, y0, b.area, crop(page, x0, y0, x1 - x0 + 1, y1 - y0 + 1)});
  }
  return out;
}

std::vector<Image> segment_page(const Image& page, int min_area, int pad, int merge_gap) {
  std::vector<Image> out;
  for (auto& s : segment_page_regions(page, min_area, pad, merge_gap)) out.push_back(std::move(s.image));
  return out;
}

namespace {

nlohmann::json spec_to_json(const CorpusSpec& s) {
  return {{"types", s.types}, {"classes", s.classes}, {"per_cell", s.per_cell},
          {"image_size", s.image_size}, {"seed", s.seed}};
}

}  // namespace

void write_corpus(const std::filesystem::path& root, const Splits& splits, const CorpusSpec& spec) {
  namespace fs = std::filesystem;
  nlohmann::json entries = nlohmann::json::array();
  const std::pair<const char*, const Corpus*> parts[] = {{"train", &splits.train}, {"val", &splits.val}, {"test", &splits.test}};
  for (const auto& [name, set] : parts) {
    for (const auto& ex : *set) {
      const fs::path rel = fs::path(name) / std::to_string(ex.class_label) / std::to_string(ex.type_label) / (ex.id + ".pgm");
      fs::create_directories((root / rel).parent_path());
      write_pgm(root / rel, ex.image);
      entries.push_back({{"id", ex.id}, {"split", name}, {"class", ex.class_label},
                         {"type", ex.type_label}, {"path", rel.generic_string()}, {"tags", ex.tags}});
    }
  }
  nlohmann::json doc = {{"version", 1}, {"spec", spec_to_json(spec)}, {"entries", entries}};
  write_file_atomic(root / "manifest.json", doc.dump(1) + "\n");
}

Manifest read_manifest(const std::filesystem::path& root) {
  const auto path = root / "manifest.json";
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("manifest " + path.string() + ": " + e.what());
  }
  Manifest m;
  try {
    if (doc.at("version").get<int>() != 1) throw FormatError("manifest: unsupported version");
    const auto& s = doc.at("spec");
    m.spec.types = s.at("types");
    m.spec.classes = s.at("classes");
    m.spec.per_cell = s.at("per_cell");
    m.spec.image_size = s.at("image_size");
    m.spec.seed = s.at("seed");
    for (const auto& e : doc.at("entries")) {
      m.entries.push_back(ManifestEntry{e.at("id"), e.at("split"), e.at("class"), e.at("type"), e.at("path"),
                                        e.value("tags", std::string())});
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("manifest " + path.string() + ": " + e.what());
  }
  return m;
}

Corpus load_split(const std::filesystem::path& root, const Manifest& manifest, const std::string& split) {
  Corpus out;
  for (const auto& e : manifest.entries) {
    if (!split.empty() && e.split != split) continue;
    LabeledExample ex;
    ex.id = e.id;
    ex.type_label = e.type_label;
    ex.class_label = e.class_label;
    ex.tags = e.tags;
    ex.image = read_pgm(root / e.path);
    out.push_back(std::move(ex));
  }
  return out;
}

}  // namespace figret
