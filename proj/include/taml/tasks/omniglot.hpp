#pragma once

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "taml/autodiff/matrix.hpp"
#include "taml/rng.hpp"
#include "taml/tasks/classification.hpp"

/// Omniglot-layout ingestion: root/alphabet/character/<instance images>.
namespace taml::tasks::omniglot {

namespace fs = std::filesystem;
using ad::Matrix;

/// Grayscale raster with values in [0,1], row-major.
struct Image {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<double> pixels;

  double at(std::size_t x, std::size_t y) const { return pixels[y * width + x]; }
};

inline std::optional<Image> read_png(const fs::path& path, std::string& error) {
  png_image img{};
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str())) {
    error = img.message;
    return std::nullopt;
  }
  img.format = PNG_FORMAT_GRAY;
  std::vector<png_byte> buf(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, buf.data(), 0, nullptr)) {
    error = img.message;
    png_image_free(&img);
    return std::nullopt;
  }
  Image out{img.width, img.height, std::vector<double>(buf.size())};
  for (std::size_t i = 0; i < buf.size(); ++i) out.pixels[i] = static_cast<double>(buf[i]) / 255.0;
  return out;
}

/// Binary (P5) or ASCII (P2) portable graymap.
inline std::optional<Image> read_pgm(const fs::path& path, std::string& error) {
  std::ifstream is(path, std::ios::binary);
  if (!is) {
    error = "cannot open";
    return std::nullopt;
  }
  auto token = [&]() -> std::string {
    std::string t;
    int c;
    while ((c = is.get()) != EOF) {
      if (c == '#') {
        while ((c = is.get()) != EOF && c != '\n') {
        }
        continue;
      }
      if (std::isspace(c)) {
        if (!t.empty()) break;
        continue;
      }
      t.push_back(static_cast<char>(c));
    }
    return t;
  };
  const std::string magic = token();
  if (magic != "P2" && magic != "P5") {
    error = "not a PGM file";
    return std::nullopt;
  }
  std::size_t w = 0, h = 0;
  unsigned long maxval = 0;
  try {
    w = std::stoul(token());
    h = std::stoul(token());
    maxval = std::stoul(token());
  } catch (const std::exception&) {
    error = "bad PGM header";
    return std::nullopt;
  }
  if (w == 0 || h == 0 || maxval == 0 || maxval > 65535) {
    error = "bad PGM header";
    return std::nullopt;
  }
  Image out{w, h, std::vector<double>(w * h)};
  const double scale = 1.0 / static_cast<double>(maxval);
  for (double& p : out.pixels) {
    unsigned long v = 0;
    if (magic == "P2") {
      const std::string t = token();
      if (t.empty()) {
        error = "truncated PGM data";
        return std::nullopt;
      }
      v = std::stoul(t);
    } else if (maxval < 256) {
      const int c = is.get();
      if (c == EOF) {
        error = "truncated PGM data";
        return std::nullopt;
      }
      v = static_cast<unsigned long>(c);
    } else {
      const int hi = is.get(), lo = is.get();
      if (lo == EOF) {
        error = "truncated PGM data";
        return std::nullopt;
      }
      v = (static_cast<unsigned long>(hi) << 8) | static_cast<unsigned long>(lo);
    }
    p = std::min(1.0, static_cast<double>(v) * scale);
  }
  return out;
}

inline bool is_image_file(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" || ext == ".pgm";
}

inline std::optional<Image> read_image(const fs::path& path, std::string& error) {
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" ? read_png(path, error) : read_pgm(path, error);
}

/// Box-filter resample to side x side: each output pixel is the
/// coverage-weighted mean of the source pixels under it.
inline std::vector<double> resample(const Image& img, std::size_t side) {
  std::vector<double> out(side * side, 0.0);
  const double sx = static_cast<double>(img.width) / static_cast<double>(side);
  const double sy = static_cast<double>(img.height) / static_cast<double>(side);
  for (std::size_t oy = 0; oy < side; ++oy) {
    const double y0 = oy * sy, y1 = (oy + 1) * sy;
    for (std::size_t ox = 0; ox < side; ++ox) {
      const double x0 = ox * sx, x1 = (ox + 1) * sx;
      double acc = 0.0, area = 0.0;
      for (auto y = static_cast<std::size_t>(y0); y < img.height && static_cast<double>(y) < y1; ++y) {
        const double wy = std::min<double>(y + 1, y1) - std::max<double>(y, y0);
        for (auto x = static_cast<std::size_t>(x0); x < img.width && static_cast<double>(x) < x1; ++x) {
          const double wx = std::min<double>(x + 1, x1) - std::max<double>(x, x0);
          acc += wx * wy * img.at(x, y);
          area += wx * wy;
        }
      }
      out[oy * side + ox] = area > 0.0 ? acc / area : 0.0;
    }
  }
  return out;
}

/// Rotates a square side x side raster counter-clockwise by quarter turns.
inline std::vector<double> rotate(const std::vector<double>& px, std::size_t side, int quarter_turns) {
  std::vector<double> cur = px;
  for (int q = 0; q < ((quarter_turns % 4) + 4) % 4; ++q) {
    std::vector<double> next(cur.size());
    for (std::size_t y = 0; y < side; ++y) {
      for (std::size_t x = 0; x < side; ++x) next[(side - 1 - x) * side + y] = cur[y * side + x];
    }
    cur = std::move(next);
  }
  return cur;
}

struct Options {
  std::size_t image_side = 28;
  bool rotations = true;
  std::uint64_t seed = 0;
  std::size_t train_characters = 1200;
  std::size_t val_characters = 100;
};

struct ImageClass {
  std::string character;  // "alphabet/character"
  int rotation_degrees = 0;
  std::vector<std::vector<double>> instances;
};

struct SkippedFile {
  std::string path;
  std::string reason;
};

enum class Split { Train, Val, Test };

inline const char* to_string(Split s) {
  switch (s) {
    case Split::Train:
      return "train";
    case Split::Val:
      return "val";
    case Split::Test:
      return "test";
  }
  return "?";
}

struct Dataset {
  Options options;
  std::vector<ImageClass> classes;
  std::vector<std::string> train, val, test;
  std::vector<SkippedFile> skipped;

  const std::vector<std::string>& characters(Split s) const {
    return s == Split::Train ? train : s == Split::Val ? val : test;
  }

  std::vector<std::size_t> class_indices(Split s) const {
    const auto& chars = characters(s);
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < classes.size(); ++i) {
      if (std::binary_search(chars.begin(), chars.end(), classes[i].character)) idx.push_back(i);
    }
    return idx;
  }
};

namespace detail {
inline std::vector<fs::path> sorted_dirs(const fs::path& p) {
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(p)) {
    if (e.is_directory()) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}
}  // namespace detail

/// Loads every character, resizes to image_side, optionally adds the three
/// other quarter-turn rotations as separate classes, and assigns characters
/// (with all their rotations) to train/val/test by a seeded shuffle.
inline Dataset ingest(const fs::path& root, const Options& opt, std::ostream& warnings = std::cerr) {
  if (opt.image_side == 0) throw std::invalid_argument("omniglot: image_side must be >= 1");
  if (!fs::is_directory(root)) throw std::invalid_argument("omniglot: not a directory: " + root.string());
  Dataset ds;
  ds.options = opt;
  std::vector<std::string> characters;
  for (const auto& alphabet : detail::sorted_dirs(root)) {
    for (const auto& character : detail::sorted_dirs(alphabet)) {
      const std::string name = alphabet.filename().string() + "/" + character.filename().string();
      std::vector<fs::path> files;
      for (const auto& e : fs::directory_iterator(character)) {
        if (e.is_regular_file() && is_image_file(e.path())) files.push_back(e.path());
      }
      std::sort(files.begin(), files.end());
      std::vector<std::vector<double>> base;
      for (const auto& f : files) {
        std::string error;
        auto img = read_image(f, error);
        if (!img) {
          warnings << "omniglot: skipping " << f.string() << ": " << error << '\n';
          ds.skipped.push_back({fs::relative(f, root).generic_string(), error});
          continue;
        }
        base.push_back(resample(*img, opt.image_side));
      }
      if (base.empty()) throw std::runtime_error("omniglot: character " + name + " has no readable images");
      characters.push_back(name);
      const int turns = opt.rotations ? 4 : 1;
      for (int q = 0; q < turns; ++q) {
        ImageClass c{name, 90 * q, {}};
        for (const auto& px : base) c.instances.push_back(rotate(px, opt.image_side, q));
        ds.classes.push_back(std::move(c));
      }
    }
  }
  if (characters.empty()) throw std::runtime_error("omniglot: no characters under " + root.string());
  if (characters.size() < opt.train_characters + opt.val_characters) {
    throw std::invalid_argument("omniglot: " + std::to_string(characters.size()) + " characters cannot fill a " +
                                std::to_string(opt.train_characters) + "/" + std::to_string(opt.val_characters) +
                                " train/val split");
  }
  std::vector<std::string> order = characters;
  Rng rng = make_stream(opt.seed, "omniglot-split");
  std::shuffle(order.begin(), order.end(), rng);
  ds.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(opt.train_characters));
  ds.val.assign(order.begin() + static_cast<std::ptrdiff_t>(opt.train_characters),
                order.begin() + static_cast<std::ptrdiff_t>(opt.train_characters + opt.val_characters));
  ds.test.assign(order.begin() + static_cast<std::ptrdiff_t>(opt.train_characters + opt.val_characters), order.end());
  for (auto* v : {&ds.train, &ds.val, &ds.test}) std::sort(v->begin(), v->end());
  return ds;
}

inline nlohmann::json manifest(const Dataset& ds) {
  nlohmann::json j;
  j["seed"] = ds.options.seed;
  j["image_side"] = ds.options.image_side;
  j["rotations"] = ds.options.rotations;
  j["train"] = ds.train;
  j["val"] = ds.val;
  j["test"] = ds.test;
  j["skipped"] = nlohmann::json::array();
  for (const auto& s : ds.skipped) j["skipped"].push_back({{"path", s.path}, {"reason", s.reason}});
  return j;
}

inline void write_manifest(const Dataset& ds, const fs::path& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write manifest " + path.string());
  os << manifest(ds).dump(2) << '\n';
}

struct EpisodeSpec {
  std::size_t ways = 5;
  std::size_t shots = 1;
  std::size_t query = 1;
  Split split = Split::Train;
};

/// Draws N distinct classes of the split and K + Q distinct instances of each.
inline ClassificationTask sample_episode(const Dataset& ds, const EpisodeSpec& spec, Rng& rng) {
  const auto pool = ds.class_indices(spec.split);
  if (pool.size() < spec.ways) {
    throw std::invalid_argument(std::string("omniglot: split ") + to_string(spec.split) + " has " +
                                std::to_string(pool.size()) + " classes, need " + std::to_string(spec.ways));
  }
  std::vector<std::size_t> chosen;
  std::sample(pool.begin(), pool.end(), std::back_inserter(chosen), spec.ways, rng);
  std::shuffle(chosen.begin(), chosen.end(), rng);
  const std::size_t d = ds.options.image_side * ds.options.image_side;
  ClassificationTask t;
  t.ways = spec.ways;
  t.shots = spec.shots;
  t.support_x = Matrix(spec.ways * spec.shots, d);
  t.query_x = Matrix(spec.ways * spec.query, d);
  for (std::size_t c = 0; c < spec.ways; ++c) {
    const auto& cls = ds.classes[chosen[c]];
    if (cls.instances.size() < spec.shots + spec.query) {
      throw std::invalid_argument("omniglot: class " + cls.character + " has too few instances for K + Q");
    }
    std::vector<std::size_t> idx(cls.instances.size());
    std::iota(idx.begin(), idx.end(), 0);
    std::shuffle(idx.begin(), idx.end(), rng);
    for (std::size_t k = 0; k < spec.shots + spec.query; ++k) {
      const bool support = k < spec.shots;
      Matrix& dst = support ? t.support_x : t.query_x;
      const std::size_t row = support ? c * spec.shots + k : c * spec.query + (k - spec.shots);
      std::copy(cls.instances[idx[k]].begin(), cls.instances[idx[k]].end(), dst.data() + row * d);
    }
    for (std::size_t k = 0; k < spec.shots; ++k) t.support_y.push_back(c);
    for (std::size_t k = 0; k < spec.query; ++k) t.query_y.push_back(c);
  }
  return t;
}

}  // namespace taml::tasks::omniglot
