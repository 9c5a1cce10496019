#include "chanprune/catf.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include <fmt/format.h>
#include "json.hpp"

namespace chanprune {
namespace {

using Json = nlohmann::json;

constexpr char kMagic[4] = {'C', 'A', 'T', 'F'};
constexpr const char* kDtype = "f32le";
constexpr const char* kLayout = "sample-major [n][c][h][w]";

void put_u32(std::vector<char>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
}

std::uint32_t get_u32(const char* p) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) {
    v |= static_cast<std::uint32_t>(static_cast<unsigned char>(p[i])) << (8 * i);
  }
  return v;
}

std::size_t block_values(const FeatureBlock& b) {
  return static_cast<std::size_t>(b.samples) * b.channels * b.height * b.width;
}

[[noreturn]] void malformed(const std::string& what) {
  throw CatfError(CatfErrorCode::kMalformedHeader,
                  fmt::format("malformed header: {}", what));
}

int positive_int(const Json& j, const char* key) {
  if (!j.contains(key) || !j.at(key).is_number_integer()) {
    malformed(fmt::format("missing integer '{}'", key));
  }
  const auto v = j.at(key).get<long long>();
  if (v < 1 || v > (1LL << 31) - 1) {
    malformed(fmt::format("'{}' must be a positive 32-bit integer", key));
  }
  return static_cast<int>(v);
}

}  // namespace

std::vector<char> encode_feature_dump(const FeatureDump& dump) {
  Json header;
  header["num_samples"] = dump.num_samples;
  header["dtype"] = kDtype;
  header["layout"] = kLayout;
  if (dump.input_channels) header["input_channels"] = *dump.input_channels;
  header["layers"] = Json::array();
  for (const auto& layer : dump.layers) {
    const auto& b = layer.block;
    if (b.samples != dump.num_samples || b.values.size() != block_values(b)) {
      throw InvalidInput(
          fmt::format("layer '{}' does not match the dump's shape", layer.name));
    }
    header["layers"].push_back({{"name", layer.name},
                                {"channels", b.channels},
                                {"height", b.height},
                                {"width", b.width},
                                {"kernel", layer.kernel}});
  }
  const std::string text = header.dump();

  std::vector<char> out(kMagic, kMagic + 4);
  put_u32(out, kCatfVersion);
  put_u32(out, static_cast<std::uint32_t>(text.size()));
  out.insert(out.end(), text.begin(), text.end());
  for (const auto& layer : dump.layers) {
    for (double v : layer.block.values) {
      put_u32(out, std::bit_cast<std::uint32_t>(static_cast<float>(v)));
    }
  }
  return out;
}

FeatureDump decode_feature_dump(const std::vector<char>& bytes) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw CatfError(CatfErrorCode::kBadMagic, "bad magic, expected 'CATF'");
  }
  if (bytes.size() < 12) {
    throw CatfError(CatfErrorCode::kTruncatedHeader, "truncated header");
  }
  const std::uint32_t version = get_u32(bytes.data() + 4);
  if (version != kCatfVersion) {
    throw CatfError(CatfErrorCode::kUnsupportedVersion,
                    fmt::format("unsupported version {}", version));
  }
  const std::size_t header_len = get_u32(bytes.data() + 8);
  if (bytes.size() - 12 < header_len) {
    throw CatfError(CatfErrorCode::kTruncatedHeader, "truncated header");
  }

  Json header;
  try {
    header = Json::parse(bytes.begin() + 12, bytes.begin() + 12 + header_len);
  } catch (const Json::exception& e) {
    malformed(e.what());
  }
  if (!header.is_object()) malformed("not a JSON object");
  if (header.value("dtype", "") != kDtype) malformed("dtype must be f32le");
  if (header.value("layout", "") != kLayout) {
    malformed(fmt::format("layout must be '{}'", kLayout));
  }

  FeatureDump dump;
  dump.num_samples = positive_int(header, "num_samples");
  if (header.contains("input_channels")) {
    dump.input_channels = positive_int(header, "input_channels");
  }
  if (!header.contains("layers") || !header["layers"].is_array() ||
      header["layers"].empty()) {
    malformed("'layers' must be a nonempty array");
  }

  std::size_t at = 12 + header_len;
  int index = 0;
  for (const auto& meta : header["layers"]) {
    CatfLayer layer;
    if (!meta.contains("name") || !meta["name"].is_string()) {
      malformed(fmt::format("layer {} has no name", index));
    }
    layer.name = meta["name"].get<std::string>();
    layer.kernel = meta.contains("kernel") ? positive_int(meta, "kernel") : 1;
    auto& b = layer.block;
    b.samples = dump.num_samples;
    b.channels = positive_int(meta, "channels");
    b.height = positive_int(meta, "height");
    b.width = positive_int(meta, "width");

    const std::size_t count = block_values(b);
    if ((bytes.size() - at) / 4 < count) {
      throw CatfError(CatfErrorCode::kTruncatedBlock,
                      fmt::format("truncated block, layer {}", index));
    }
    b.values.resize(count);
    for (std::size_t i = 0; i < count; ++i, at += 4) {
      b.values[i] = std::bit_cast<float>(get_u32(bytes.data() + at));
    }
    dump.layers.push_back(std::move(layer));
    ++index;
  }
  if (at != bytes.size()) {
    throw CatfError(CatfErrorCode::kTrailingBytes,
                    fmt::format("header/payload disagreement: {} trailing bytes",
                                bytes.size() - at));
  }
  return dump;
}

void write_feature_dump(const std::filesystem::path& path,
                        const FeatureDump& dump) {
  const auto bytes = encode_feature_dump(dump);
  std::ofstream out(path, std::ios::binary);
  if (!out || !out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()))) {
    throw CatfError(CatfErrorCode::kIo, fmt::format("cannot write {}", path.string()));
  }
}

FeatureDump read_feature_dump(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw CatfError(CatfErrorCode::kIo, fmt::format("cannot read {}", path.string()));
  }
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)),
                          std::istreambuf_iterator<char>());
  return decode_feature_dump(bytes);
}

NetSpec netspec_from_dump(const FeatureDump& dump) {
  NetSpec spec;
  spec.input_channels = dump.input_channels.value_or(kDefaultInputChannels);
  for (const auto& layer : dump.layers) {
    spec.layers.push_back({layer.name, layer.block.channels, layer.block.height,
                           layer.block.width, layer.kernel});
  }
  return validate_netspec(spec);
}

}  // namespace chanprune
