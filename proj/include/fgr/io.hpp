#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fgr/network.hpp"
#include "fgr/preprocess.hpp"
#include "fgr/tensor.hpp"
#include "fgr/train.hpp"

namespace fgr {

// ---------------------------------------------------------------------------
// FER-style CSV (header `emotion,pixels,Usage`, 2304 space-separated pixels)

enum class FerUsage { Training, PublicTest, PrivateTest };

struct FerRecord {
  Tensorf image;  // (48, 48), values 0..255
  int emotion = 0;
  FerUsage usage = FerUsage::Training;
};

std::vector<FerRecord> parse_fer_csv(const std::string& path);
void write_fer_csv(const std::vector<FerRecord>& records,
                   const std::string& path);

// ---------------------------------------------------------------------------
// Manifest (TSV, one row per image, `-` marks absent values)

struct ManifestRow {
  std::string image;
  std::optional<FaceAnnotation> eyes;
  std::optional<int> emotion;    // 0..6
  std::optional<int> age;        // 0..16
  std::optional<int> gender;     // 0..1
  std::optional<int> ethnicity;  // 0..4
  std::optional<int> glasses;    // 0..1
  std::optional<int> beard;      // 0..2
  std::optional<int> mustache;   // 0..2
  std::optional<std::vector<float>> target;  // k coeffs + yaw + pitch
};

std::vector<ManifestRow> read_manifest(const std::string& path);
void write_manifest(const std::vector<ManifestRow>& rows,
                    const std::string& path);

// ---------------------------------------------------------------------------
// Binary model file ("FGR1"): version, layer stack with raw little-endian
// f32 parameters, trailing CRC32. Momentum buffers are not persisted.

void save_model(const NetworkState<float>& net, const std::string& path);
NetworkState<float> load_model(const std::string& path);

// PixelStats sidecar, same chunked layout under the "FST1" tag.
void save_pixel_stats(const PixelStats& stats, const std::string& path);
PixelStats load_pixel_stats(const std::string& path);

// Appearance model ("FAM1", same layout family).
struct AppearanceModel;  // appearance.hpp
void save_appearance_model(const AppearanceModel& model,
                           const std::string& path);
AppearanceModel load_appearance_model(const std::string& path);

// ---------------------------------------------------------------------------
// 8-bit binary PGM (P5, maxval 255)

Tensorf read_pgm(const std::string& path);           // (h, w), values 0..255
void write_pgm(const Tensorf& image, const std::string& path);

// ---------------------------------------------------------------------------
// CSV exports

void write_train_log_csv(const TrainLog& log, const std::string& path,
                         const std::vector<std::string>& header_comments = {});

void write_text_file(const std::string& path, const std::string& content);
std::string read_text_file(const std::string& path);

std::uint32_t crc32(const std::uint8_t* data, std::size_t len);

}  // namespace fgr
