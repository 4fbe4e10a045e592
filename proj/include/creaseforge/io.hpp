#pragma once

#include "creaseforge/raster.hpp"

#include <nlohmann/json_fwd.hpp>

#include <filesystem>
#include <string>
#include <string_view>

namespace creaseforge {

/// Writes to a sibling temp file, then renames over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view bytes);

std::string read_file(const std::filesystem::path& path);

/// Binary PGM (P5, maxval 255).
std::string encode_pgm(const CreaseImage& image);
CreaseImage decode_pgm(std::string_view bytes);
void write_pgm(const std::filesystem::path& path, const CreaseImage& image);
CreaseImage read_pgm(const std::filesystem::path& path);

nlohmann::json read_json(const std::filesystem::path& path);
void write_json(const std::filesystem::path& path, const nlohmann::json& j);

/// Incremental SHA-256, hex-encoded.
class Sha256 {
public:
  Sha256();
  ~Sha256();
  Sha256(const Sha256&) = delete;
  Sha256& operator=(const Sha256&) = delete;

  void update(std::string_view bytes);
  std::string hex_digest();

private:
  void* ctx_;
};

}  // namespace creaseforge
