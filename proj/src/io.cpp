#include "holoseg/io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include "holoseg/random.hpp"

namespace holoseg::io {

namespace {

constexpr char kMagic[4] = {'H', 'S', 'T', 'N'};
constexpr std::uint8_t kVersion = 1;
constexpr std::uint8_t kDtypeF32 = 1;

std::string at(std::size_t offset) { return " at byte offset " + std::to_string(offset); }

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t get_u32(const std::uint8_t* p) {
  return std::uint32_t(p[0]) | std::uint32_t(p[1]) << 8 | std::uint32_t(p[2]) << 16 |
         std::uint32_t(p[3]) << 24;
}

/// Reader for the whitespace-separated header of PNM files.
class PnmHeader {
 public:
  explicit PnmHeader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  std::string magic() {
    if (bytes_.size() < 2) throw FormatError("pnm: file too short for magic" + at(0));
    pos_ = 2;
    return {char(bytes_[0]), char(bytes_[1])};
  }

  std::uint64_t number(const char* what) {
    skip_space_and_comments();
    const std::size_t start = pos_;
    std::uint64_t v = 0;
    while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
      v = v * 10 + (bytes_[pos_++] - '0');
      if (v > std::numeric_limits<std::uint32_t>::max()) {
        throw FormatError(std::string("pnm: ") + what + " overflows" + at(start));
      }
    }
    if (pos_ == start) throw FormatError(std::string("pnm: expected ") + what + at(start));
    return v;
  }

  /// Consumes the single whitespace byte that ends the header.
  std::size_t payload_offset() {
    if (pos_ >= bytes_.size() || !std::isspace(bytes_[pos_])) {
      throw FormatError("pnm: missing whitespace before payload" + at(pos_));
    }
    return pos_ + 1;
  }

 private:
  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      if (std::isspace(bytes_[pos_])) {
        ++pos_;
      } else if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else {
        break;
      }
    }
  }

  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

void append(std::vector<std::uint8_t>& out, const std::string& s) { out.insert(out.end(), s.begin(), s.end()); }

}  // namespace

// ---------------------------------------------------------------------------
// Tensor container

std::vector<std::uint8_t> encode_tensor(const Tensor& t) {
  if (t.rank() == 0 || t.rank() > 255) throw FormatError("tensor: rank must be in [1, 255]");
  std::vector<std::uint8_t> out(kMagic, kMagic + 4);
  out.push_back(kVersion);
  out.push_back(kDtypeF32);
  out.push_back(static_cast<std::uint8_t>(t.rank()));
  for (Index d : t.dims()) {
    if (d > Index(std::numeric_limits<std::uint32_t>::max())) {
      throw FormatError("tensor: extent " + std::to_string(d) + " does not fit 32 bits");
    }
    put_u32(out, static_cast<std::uint32_t>(d));
  }
  out.reserve(out.size() + 4 * static_cast<std::size_t>(t.size()));
  for (Index i = 0; i < t.size(); ++i) {
    const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(t[i]));
    put_u32(out, bits);
  }
  return out;
}

Tensor decode_tensor(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 7) throw FormatError("tensor: truncated header" + at(bytes.size()));
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw FormatError("tensor: bad magic" + at(0));
  if (bytes[4] != kVersion) {
    throw FormatError("tensor: unsupported version " + std::to_string(bytes[4]) + at(4));
  }
  if (bytes[5] != kDtypeF32) {
    throw FormatError("tensor: unsupported dtype " + std::to_string(bytes[5]) + at(5));
  }
  const std::size_t rank = bytes[6];
  if (rank == 0) throw FormatError("tensor: rank 0" + at(6));
  std::size_t offset = 7;
  if (bytes.size() < offset + 4 * rank) throw FormatError("tensor: truncated extents" + at(bytes.size()));
  Dims dims;
  std::uint64_t count = 1;
  for (std::size_t i = 0; i < rank; ++i, offset += 4) {
    const std::uint32_t d = get_u32(bytes.data() + offset);
    if (d == 0) throw FormatError("tensor: zero extent" + at(offset));
    if (count > std::numeric_limits<std::uint64_t>::max() / 4 / d) {
      throw FormatError("tensor: extent product overflows" + at(offset));
    }
    count *= d;
    dims.push_back(static_cast<Index>(d));
  }
  const std::uint64_t expected = offset + 4 * count;
  if (bytes.size() < expected) {
    throw FormatError("tensor: truncated payload, expected " + std::to_string(4 * count) +
                      " bytes" + at(bytes.size()));
  }
  if (bytes.size() > expected) throw FormatError("tensor: trailing bytes" + at(expected));
  Tensor t(dims);
  for (Index i = 0; i < t.size(); ++i, offset += 4) {
    t[i] = static_cast<double>(std::bit_cast<float>(get_u32(bytes.data() + offset)));
  }
  return t;
}

void write_tensor(const fs::path& path, const Tensor& t) { write_bytes(path, encode_tensor(t)); }

Tensor read_tensor(const fs::path& path) {
  try {
    return decode_tensor(read_bytes(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// PGM / PPM

std::vector<std::uint8_t> encode_pgm(const LabelMap& labels) {
  if (labels.size() == 0) throw FormatError("pgm: empty label map");
  if ((labels < 0).any() || (labels > 65535).any()) {
    throw FormatError("pgm: labels must lie in [0, 65535]");
  }
  const int maxval = (labels <= 255).all() ? 255 : 65535;
  std::vector<std::uint8_t> out;
  append(out, "P5\n" + std::to_string(labels.cols()) + " " + std::to_string(labels.rows()) + "\n" +
                  std::to_string(maxval) + "\n");
  for (Index i = 0; i < labels.size(); ++i) {
    const auto v = static_cast<std::uint32_t>(labels.data()[i]);
    if (maxval == 65535) out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v & 0xff));
  }
  return out;
}

LabelMap decode_pgm(const std::vector<std::uint8_t>& bytes) {
  PnmHeader header(bytes);
  if (header.magic() != "P5") throw FormatError("pgm: expected P5 magic" + at(0));
  const auto width = header.number("width");
  const auto height = header.number("height");
  const auto maxval = header.number("maxval");
  if (width == 0 || height == 0) throw FormatError("pgm: zero image extent");
  if (maxval == 0 || maxval > 65535) throw FormatError("pgm: maxval " + std::to_string(maxval) + " unsupported");
  const std::size_t offset = header.payload_offset();
  const std::size_t sample = maxval > 255 ? 2 : 1;
  const std::uint64_t need = width * height * sample;
  if (bytes.size() - offset < need) {
    throw FormatError("pgm: truncated payload, expected " + std::to_string(need) + " bytes" +
                      at(bytes.size()));
  }
  LabelMap labels(static_cast<Index>(height), static_cast<Index>(width));
  for (Index i = 0; i < labels.size(); ++i) {
    const std::size_t p = offset + static_cast<std::size_t>(i) * sample;
    const std::uint32_t v = sample == 2 ? (std::uint32_t(bytes[p]) << 8 | bytes[p + 1]) : bytes[p];
    if (v > maxval) {
      throw FormatError("pgm: sample " + std::to_string(v) + " exceeds maxval " +
                        std::to_string(maxval) + at(p));
    }
    labels.data()[i] = static_cast<std::int32_t>(v);
  }
  return labels;
}

void write_pgm(const fs::path& path, const LabelMap& labels) { write_bytes(path, encode_pgm(labels)); }

LabelMap read_pgm(const fs::path& path) {
  try {
    return decode_pgm(read_bytes(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

std::vector<std::uint8_t> encode_ppm(const RgbImage& image) {
  if (image.width <= 0 || image.height <= 0 ||
      image.pixels.size() != static_cast<std::size_t>(image.width * image.height * 3)) {
    throw FormatError("ppm: inconsistent image buffer");
  }
  std::vector<std::uint8_t> out;
  append(out, "P6\n");
  for (const auto& c : image.comments) {
    if (c.find('\n') != std::string::npos) throw FormatError("ppm: comment contains a newline");
    append(out, "# " + c + "\n");
  }
  append(out, std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n");
  out.insert(out.end(), image.pixels.begin(), image.pixels.end());
  return out;
}

RgbImage decode_ppm(const std::vector<std::uint8_t>& bytes) {
  PnmHeader header(bytes);
  if (header.magic() != "P6") throw FormatError("ppm: expected P6 magic" + at(0));
  const auto width = header.number("width");
  const auto height = header.number("height");
  const auto maxval = header.number("maxval");
  if (width == 0 || height == 0) throw FormatError("ppm: zero image extent");
  if (maxval != 255) throw FormatError("ppm: only maxval 255 is supported");
  const std::size_t offset = header.payload_offset();
  const std::uint64_t need = width * height * 3;
  if (bytes.size() - offset < need) {
    throw FormatError("ppm: truncated payload, expected " + std::to_string(need) + " bytes" +
                      at(bytes.size()));
  }
  RgbImage img(static_cast<Index>(width), static_cast<Index>(height));
  std::copy_n(bytes.begin() + static_cast<std::ptrdiff_t>(offset), need, img.pixels.begin());
  // Comments are recovered from the header text.
  std::string text(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(offset));
  std::istringstream lines(text);
  for (std::string line; std::getline(lines, line);)
    if (line.rfind("# ", 0) == 0) img.comments.push_back(line.substr(2));
  return img;
}

void write_ppm(const fs::path& path, const RgbImage& image) { write_bytes(path, encode_ppm(image)); }

RgbImage read_ppm(const fs::path& path) {
  try {
    return decode_ppm(read_bytes(path));
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

RgbImage render_labels(const LabelMap& labels, Index num_classes, std::uint64_t palette_seed,
                       std::optional<std::int32_t> ignore_label) {
  if (num_classes <= 0) throw Error("render_labels: class count must be positive");
  std::vector<std::array<std::uint8_t, 3>> palette(static_cast<std::size_t>(num_classes));
  Rng rng = make_rng(palette_seed, {0x5041});
  std::uniform_int_distribution<int> channel(40, 255);
  for (auto& color : palette)
    for (auto& v : color) v = static_cast<std::uint8_t>(channel(rng));

  RgbImage img(labels.cols(), labels.rows());
  for (Index y = 0; y < labels.rows(); ++y) {
    for (Index x = 0; x < labels.cols(); ++x) {
      const std::int32_t k = labels(y, x);
      if (ignore_label && k == *ignore_label) continue;  // black
      if (k < 0 || k >= num_classes) {
        throw Error("render_labels: label " + std::to_string(k) + " at (" + std::to_string(y) +
                    ", " + std::to_string(x) + ") outside [0, " + std::to_string(num_classes) + ")");
      }
      std::copy_n(palette[static_cast<std::size_t>(k)].begin(), 3, img.at(y, x));
    }
  }
  return img;
}

// ---------------------------------------------------------------------------
// Text inputs

LabelSet parse_label_set(const std::string& text) {
  std::string cleaned = text;
  std::replace(cleaned.begin(), cleaned.end(), ',', ' ');
  std::istringstream in(cleaned);
  LabelSet out;
  std::string token;
  while (in >> token) {
    std::size_t used = 0;
    long v = 0;
    try {
      v = std::stol(token, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != token.size() || v < 0 || v > std::numeric_limits<std::int32_t>::max()) {
      throw FormatError("label set: '" + token + "' is not a class id");
    }
    out.insert(static_cast<std::int32_t>(v));
  }
  return out;
}

LabelSet read_label_set(const fs::path& path) {
  const auto bytes = read_bytes(path);
  return parse_label_set(std::string(bytes.begin(), bytes.end()));
}

std::vector<double> parse_number_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream in(text);
  for (std::string token; std::getline(in, token, ',');) {
    std::size_t used = 0;
    double v = 0;
    try {
      v = std::stod(token, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != token.size() || !std::isfinite(v)) {
      throw FormatError("number list: '" + token + "' is not a number");
    }
    out.push_back(v);
  }
  if (out.empty()) throw FormatError("number list: empty");
  return out;
}

std::vector<fs::path> list_files(const fs::path& dir, const std::string& extension) {
  if (!fs::is_directory(dir)) throw Error(dir.string() + ": not a directory");
  std::vector<fs::path> out;
  for (const auto& entry : fs::directory_iterator(dir))
    if (entry.is_regular_file() && entry.path().extension() == extension) out.push_back(entry.path());
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<std::uint8_t> read_bytes(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(path.string() + ": cannot open for reading");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const fs::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(path.string() + ": cannot open for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error(path.string() + ": write failed");
}

void write_text(const fs::path& path, const std::string& text) {
  write_bytes(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

// ---------------------------------------------------------------------------
// Checkpoints

void save_checkpoint(const fs::path& dir, const Weights& weights) {
  fs::create_directories(dir);
  std::string manifest;
  weights.for_each([&](const std::string& name, const Tensor& t) {
    const std::string file = name + ".hstn";
    write_tensor(dir / file, t);
    manifest += name + " " + file + " " + dims_to_string(t.dims()) + "\n";
  });
  write_text(dir / "manifest.txt", manifest);
}

Weights load_checkpoint(const fs::path& dir, const MicroNetConfig& config) {
  Weights w = Weights::zeros(config);
  const auto bytes = read_bytes(dir / "manifest.txt");
  std::istringstream in(std::string(bytes.begin(), bytes.end()));
  std::size_t loaded = 0;
  for (std::string line; std::getline(in, line);) {
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string name, file;
    if (!(fields >> name >> file)) throw FormatError("manifest: malformed line '" + line + "'");
    Tensor& slot = w.by_name(name);
    Tensor t = read_tensor(dir / file);
    if (!t.same_shape(slot)) {
      throw FormatError("checkpoint: " + name + " has shape " + dims_to_string(t.dims()) +
                        ", config expects " + dims_to_string(slot.dims()));
    }
    slot = std::move(t);
    ++loaded;
  }
  if (loaded != w.names().size()) throw FormatError("checkpoint: manifest is missing tensors");
  return w;
}

}  // namespace holoseg::io
