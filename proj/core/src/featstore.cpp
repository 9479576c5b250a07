#include "partloc/featstore.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "partloc/error.hpp"

namespace partloc {
namespace {

static_assert(std::endian::native == std::endian::little, "feature store I/O assumes a little-endian host");

template <typename T>
void put_le(std::string& buf, T value) {
  char bytes[sizeof(T)];
  std::memcpy(bytes, &value, sizeof(T));
  buf.append(bytes, sizeof(T));
}

template <typename T>
T get_le(const std::string& buf, std::size_t& pos, const std::filesystem::path& path) {
  if (pos + sizeof(T) > buf.size()) throw ParseError(path.string(), 0, "truncated feature store");
  T value;
  std::memcpy(&value, buf.data() + pos, sizeof(T));
  pos += sizeof(T);
  return value;
}

// Whole-sample symmetric reflection: -1 -> 0, n -> n-1.
int reflect(int i, int n) noexcept {
  if (n == 1) return 0;
  const int period = 2 * n;
  i %= period;
  if (i < 0) i += period;
  return i < n ? i : period - 1 - i;
}

struct AxisTap {
  int offset;  // pixel index relative to the integer base
  double weight;
};

// Area-averaging taps of each output cell along one axis. `start` is the crop
// origin relative to the integer base, `cell` the cell width in pixels.
std::vector<std::vector<AxisTap>> axis_taps(double start, double cell, int grid) {
  std::vector<std::vector<AxisTap>> taps(static_cast<std::size_t>(grid));
  for (int g = 0; g < grid; ++g) {
    const double lo = start + g * cell;
    const double hi = start + (g + 1) * cell;
    for (int j = static_cast<int>(std::floor(lo)); j < hi; ++j) {
      const double w = std::min<double>(j + 1, hi) - std::max<double>(j, lo);
      if (w > 0.0) taps[static_cast<std::size_t>(g)].push_back({j, w});
    }
  }
  return taps;
}

}  // namespace

double cosine_distance(std::span<const float> a, std::span<const float> b) {
  if (a.size() != b.size()) throw InvalidArgument("cosine_distance: dimension mismatch");
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += static_cast<double>(a[i]) * b[i];
    aa += static_cast<double>(a[i]) * a[i];
    bb += static_cast<double>(b[i]) * b[i];
  }
  if (aa == 0.0 || bb == 0.0) throw InvalidArgument("cosine_distance: undefined cosine for a zero vector");
  return std::clamp(1.0 - ab / (std::sqrt(aa) * std::sqrt(bb)), 0.0, 2.0);
}

double dot(std::span<const float> a, std::span<const double> w) noexcept {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * w[i];
  return s;
}

Raster read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(path.string(), 0, "cannot open image");
  std::string magic;
  int w = 0, h = 0, maxval = 0;
  auto skip_comments = [&] {
    in >> std::ws;
    while (in.peek() == '#') {
      std::string ignored;
      std::getline(in, ignored);
      in >> std::ws;
    }
  };
  in >> magic;
  if (magic != "P5") throw ParseError(path.string(), 0, "not a binary PGM (P5)");
  skip_comments();
  in >> w;
  skip_comments();
  in >> h;
  skip_comments();
  in >> maxval;
  if (!in || w <= 0 || h <= 0 || maxval != 255) throw ParseError(path.string(), 0, "unsupported PGM header");
  in.get();
  Raster r{w, h, std::vector<std::uint8_t>(static_cast<std::size_t>(w) * static_cast<std::size_t>(h))};
  in.read(reinterpret_cast<char*>(r.pixels.data()), static_cast<std::streamsize>(r.pixels.size()));
  if (in.gcount() != static_cast<std::streamsize>(r.pixels.size())) {
    throw ParseError(path.string(), 0, "truncated PGM data");
  }
  return r;
}

std::pair<int, int> pgm_size(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(path.string(), 0, "cannot open image");
  std::string magic;
  int w = 0, h = 0;
  in >> magic;
  auto skip_comments = [&] {
    in >> std::ws;
    while (in.peek() == '#') {
      std::string ignored;
      std::getline(in, ignored);
      in >> std::ws;
    }
  };
  skip_comments();
  in >> w;
  skip_comments();
  in >> h;
  if (magic != "P5" || !in || w <= 0 || h <= 0) throw ParseError(path.string(), 0, "bad PGM header");
  return {w, h};
}

void write_pgm(const std::filesystem::path& path, const Raster& raster) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError(path.string(), 0, "cannot open for writing");
  out << "P5\n" << raster.width << ' ' << raster.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(raster.pixels.data()), static_cast<std::streamsize>(raster.pixels.size()));
}

ToyExtractOptions toy_options_for(const std::string& channel) {
  ToyExtractOptions opts;
  if (channel == kDetectorChannel) {
    opts.grid = 16;
  } else if (channel == kAppearanceChannel) {
    opts.grid = 8;
  } else {
    throw InvalidArgument("unknown feature channel '" + channel + "'");
  }
  return opts;
}

ToyFeature toy_extract(const Raster& image, const BBox& region, const ToyExtractOptions& options) {
  if (options.grid <= 0 || !(options.warp_size > 2 * options.context_pixels)) {
    throw InvalidArgument("toy_extract: bad options");
  }
  if (!intersects_image(region, image.width, image.height)) {
    throw InvalidArgument("toy_extract: region lies outside the image");
  }
  const double inner = options.warp_size - 2.0 * options.context_pixels;
  const double border_x = options.context_pixels * region.width() / inner;
  const double border_y = options.context_pixels * region.height() / inner;

  // Work relative to the integer part of the region origin so that an integer
  // translation of region and content yields the same taps.
  const double base_x = std::floor(region.x_min());
  const double base_y = std::floor(region.y_min());
  const double start_x = (region.x_min() - base_x) - border_x;
  const double start_y = (region.y_min() - base_y) - border_y;
  const double cell_w = (region.width() + 2.0 * border_x) / options.grid;
  const double cell_h = (region.height() + 2.0 * border_y) / options.grid;

  const auto taps_x = axis_taps(start_x, cell_w, options.grid);
  const auto taps_y = axis_taps(start_y, cell_h, options.grid);
  const int bx = static_cast<int>(base_x);
  const int by = static_cast<int>(base_y);

  const std::size_t n = static_cast<std::size_t>(options.grid) * static_cast<std::size_t>(options.grid);
  std::vector<double> cells(n, 0.0);
  for (int gy = 0; gy < options.grid; ++gy) {
    for (int gx = 0; gx < options.grid; ++gx) {
      double acc = 0.0;
      for (const AxisTap& ty : taps_y[static_cast<std::size_t>(gy)]) {
        const int y = reflect(by + ty.offset, image.height);
        double row = 0.0;
        for (const AxisTap& tx : taps_x[static_cast<std::size_t>(gx)]) {
          row += tx.weight * image.at(reflect(bx + tx.offset, image.width), y);
        }
        acc += ty.weight * row;
      }
      cells[static_cast<std::size_t>(gy * options.grid + gx)] = acc / (cell_w * cell_h);
    }
  }

  double mean = 0.0;
  for (double v : cells) mean += v;
  mean /= static_cast<double>(n);
  double norm2 = 0.0;
  for (double& v : cells) {
    v -= mean;
    norm2 += v * v;
  }

  ToyFeature out;
  out.values.assign(n, 0.0f);
  const double norm = std::sqrt(norm2);
  // Anything below this is rounding noise on a flat crop.
  if (norm < 1e-9) {
    out.degenerate = true;
    return out;
  }
  for (std::size_t i = 0; i < n; ++i) out.values[i] = static_cast<float>(cells[i] / norm);
  return out;
}

FeatureStore::FeatureStore(FeatureChannel channel) : channel_(std::move(channel)) {
  if (channel_.dim == 0) throw InvalidArgument("feature channel dim must be positive");
}

void FeatureStore::put(FeatureKey key, std::span<const float> values) {
  if (values.size() != channel_.dim) {
    throw InvalidArgument("feature store '" + channel_.name + "': expected dim " + std::to_string(channel_.dim) +
                          ", got " + std::to_string(values.size()));
  }
  if (!std::all_of(values.begin(), values.end(), [](float v) { return std::isfinite(v); })) {
    throw InvalidArgument("feature store: non-finite value");
  }
  records_[key].assign(values.begin(), values.end());
}

const FeatureVector& FeatureStore::get(FeatureKey key) const {
  auto it = records_.find(key);
  if (it == records_.end()) {
    throw LookupError("feature store '" + channel_.name + "': no entry for image " + std::to_string(key.image_id) +
                      " region " + std::to_string(key.region_id));
  }
  return it->second;
}

namespace {

std::string serialize_records(const std::map<FeatureKey, FeatureVector>& records) {
  std::string buf;
  for (const auto& [key, values] : records) {
    put_le(buf, key.image_id);
    put_le(buf, key.region_id);
    for (float v : values) put_le(buf, v);
  }
  return buf;
}

}  // namespace

void FeatureStore::save(const std::filesystem::path& path) const {
  std::string buf = "PGFS";
  put_le(buf, kFormatVersion);
  put_le(buf, static_cast<std::uint32_t>(channel_.name.size()));
  buf += channel_.name;
  put_le(buf, channel_.dim);
  put_le(buf, static_cast<std::uint64_t>(records_.size()));
  buf += serialize_records(records_);
  // Records are already written in key order, so the index is the identity.
  std::uint64_t ordinal = 0;
  for (const auto& [key, values] : records_) {
    put_le(buf, key.image_id);
    put_le(buf, key.region_id);
    put_le(buf, ordinal++);
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError(path.string(), 0, "cannot open for writing");
  out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  if (!out) throw ParseError(path.string(), 0, "write failed");
}

FeatureStore FeatureStore::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError(path.string(), 0, "cannot open feature store");
  std::ostringstream ss;
  ss << in.rdbuf();
  const std::string buf = ss.str();

  if (buf.size() < 4 || buf.compare(0, 4, "PGFS") != 0) throw ParseError(path.string(), 0, "bad magic");
  std::size_t pos = 4;
  const auto version = get_le<std::uint32_t>(buf, pos, path);
  if (version != kFormatVersion) {
    throw ParseError(path.string(), 0, "unsupported format version " + std::to_string(version));
  }
  const auto name_len = get_le<std::uint32_t>(buf, pos, path);
  if (pos + name_len > buf.size()) throw ParseError(path.string(), 0, "truncated channel name");
  FeatureChannel channel{buf.substr(pos, name_len), 0};
  pos += name_len;
  channel.dim = get_le<std::uint32_t>(buf, pos, path);
  const auto count = get_le<std::uint64_t>(buf, pos, path);
  if (channel.dim == 0) throw ParseError(path.string(), 0, "zero dim");

  const std::size_t record_bytes = 12 + 4 * static_cast<std::size_t>(channel.dim);
  if (count > (buf.size() - pos) / record_bytes) throw ParseError(path.string(), 0, "truncated records");

  std::vector<std::pair<FeatureKey, FeatureVector>> rows;
  rows.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    FeatureKey key{get_le<std::uint64_t>(buf, pos, path), get_le<std::uint32_t>(buf, pos, path)};
    FeatureVector v(channel.dim);
    std::memcpy(v.data(), buf.data() + pos, 4 * static_cast<std::size_t>(channel.dim));
    pos += 4 * static_cast<std::size_t>(channel.dim);
    rows.emplace_back(key, std::move(v));
  }

  FeatureStore store(channel);
  FeatureKey prev{};
  for (std::uint64_t i = 0; i < count; ++i) {
    FeatureKey key{get_le<std::uint64_t>(buf, pos, path), get_le<std::uint32_t>(buf, pos, path)};
    const auto ordinal = get_le<std::uint64_t>(buf, pos, path);
    if (ordinal >= count || rows[ordinal].first != key) throw ParseError(path.string(), 0, "index/record mismatch");
    if (i > 0 && !(prev < key)) throw ParseError(path.string(), 0, "index not strictly sorted");
    prev = key;
    store.put(key, rows[ordinal].second);
  }
  if (pos != buf.size()) throw ParseError(path.string(), 0, "trailing bytes after index");
  return store;
}

std::uint64_t FeatureStore::checksum() const {
  const std::string buf = serialize_records(records_);
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : buf) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace partloc
