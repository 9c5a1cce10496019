#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "chanprune/core.hpp"

// CATF feature dumps.
//
//   bytes 0..3   "CATF"
//   bytes 4..7   format version, u32 little-endian (= 1)
//   bytes 8..11  header length in bytes, u32 little-endian
//   header       UTF-8 JSON: {num_samples, layers: [{name, channels, height,
//                width, kernel}], dtype: "f32le",
//                layout: "sample-major [n][c][h][w]", input_channels?}
//   payload      one block per layer in header order, n*c*h*w f32 LE values
//
// `kernel` and `input_channels` are optional on read (defaults 1 and 3).
namespace chanprune {

inline constexpr std::uint32_t kCatfVersion = 1;
inline constexpr int kDefaultInputChannels = 3;

enum class CatfErrorCode {
  kIo = 1,
  kBadMagic,
  kUnsupportedVersion,
  kTruncatedHeader,
  kMalformedHeader,
  kTruncatedBlock,
  kTrailingBytes,
};

class CatfError : public std::runtime_error {
 public:
  CatfError(CatfErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}
  CatfErrorCode code() const { return code_; }

 private:
  CatfErrorCode code_;
};

struct CatfLayer {
  std::string name;
  int kernel = 1;
  FeatureBlock block;
};

struct FeatureDump {
  int num_samples = 0;
  std::optional<int> input_channels;
  std::vector<CatfLayer> layers;
};

void write_feature_dump(const std::filesystem::path& path,
                        const FeatureDump& dump);
FeatureDump read_feature_dump(const std::filesystem::path& path);

/// Serialized bytes, as written by write_feature_dump.
std::vector<char> encode_feature_dump(const FeatureDump& dump);
FeatureDump decode_feature_dump(const std::vector<char>& bytes);

/// FLOPs description implied by the dump's layer shapes.
NetSpec netspec_from_dump(const FeatureDump& dump);

}  // namespace chanprune
