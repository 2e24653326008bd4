#pragma once

// File formats:
//   tensor  "HSTN" | version u8 = 1 | dtype u8 = 1 (f32 LE) | rank u8 |
//           rank x u32 LE extents | row-major f32 LE payload
//   labels  binary PGM (P5), maxval 255 or 65535 (16-bit samples big-endian)
//   images  binary PPM (P6), maxval 255

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "holoseg/image.hpp"
#include "holoseg/micronet.hpp"
#include "holoseg/tensor.hpp"

namespace holoseg::io {

namespace fs = std::filesystem;

/// Malformed or unreadable input. The message names the byte offset when
/// the problem is inside a file.
class FormatError : public Error {
 public:
  using Error::Error;
};

std::vector<std::uint8_t> encode_tensor(const Tensor& t);
Tensor decode_tensor(const std::vector<std::uint8_t>& bytes);
void write_tensor(const fs::path& path, const Tensor& t);
Tensor read_tensor(const fs::path& path);

/// Picks maxval 255 when every label fits below 255, else 65535.
std::vector<std::uint8_t> encode_pgm(const LabelMap& labels);
LabelMap decode_pgm(const std::vector<std::uint8_t>& bytes);
void write_pgm(const fs::path& path, const LabelMap& labels);
LabelMap read_pgm(const fs::path& path);

std::vector<std::uint8_t> encode_ppm(const RgbImage& image);
RgbImage decode_ppm(const std::vector<std::uint8_t>& bytes);
void write_ppm(const fs::path& path, const RgbImage& image);
RgbImage read_ppm(const fs::path& path);

/// Deterministic class -> RGB palette; the ignore label renders black.
RgbImage render_labels(const LabelMap& labels, Index num_classes, std::uint64_t palette_seed = 0,
                       std::optional<std::int32_t> ignore_label = kDefaultIgnoreLabel);

/// Whitespace- or comma-separated class ids.
LabelSet parse_label_set(const std::string& text);
LabelSet read_label_set(const fs::path& path);

/// "0,0.2,1" -> {0, 0.2, 1}.
std::vector<double> parse_number_list(const std::string& text);

/// Regular files under `dir` with the given extension, sorted by name.
std::vector<fs::path> list_files(const fs::path& dir, const std::string& extension);

std::vector<std::uint8_t> read_bytes(const fs::path& path);
void write_bytes(const fs::path& path, const std::vector<std::uint8_t>& bytes);
void write_text(const fs::path& path, const std::string& text);

/// Checkpoint directory: one tensor file per weight plus manifest.txt
/// listing "name file dims" per line in visiting order.
void save_checkpoint(const fs::path& dir, const Weights& weights);
Weights load_checkpoint(const fs::path& dir, const MicroNetConfig& config);

}  // namespace holoseg::io
