#pragma once

#include <zlib.h>

#include <opencv2/imgcodecs.hpp>

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "welfare/error.hpp"

namespace welfare::reporting {

namespace detail {
inline void put_be32(std::string& out, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) out.push_back(static_cast<char>((v >> s) & 0xFF));
}
}  // namespace detail

inline std::string text_chunk(const std::string& key, const std::string& value) {
  std::string body = "tEXt" + key;
  body.push_back('\0');
  body += value;
  std::string chunk;
  detail::put_be32(chunk, static_cast<std::uint32_t>(body.size() - 4));
  chunk += body;
  detail::put_be32(chunk, static_cast<std::uint32_t>(
                              crc32(0L, reinterpret_cast<const Bytef*>(body.data()), static_cast<uInt>(body.size()))));
  return chunk;
}

/// PNG bytes for `image` with tEXt chunks (sorted by key) right after IHDR.
inline std::string encode_png(const cv::Mat& image, const std::map<std::string, std::string>& text = {}) {
  std::vector<uchar> buf;
  if (!cv::imencode(".png", image, buf, {cv::IMWRITE_PNG_COMPRESSION, 6})) throw Error("png encoding failed");
  std::string png(buf.begin(), buf.end());
  constexpr std::size_t kAfterIhdr = 8 + 25;  // signature + IHDR chunk
  if (png.size() < kAfterIhdr || png.compare(12, 4, "IHDR") != 0) throw Error("unexpected png layout");
  std::string chunks;
  for (const auto& [k, v] : text) chunks += text_chunk(k, v);
  png.insert(kAfterIhdr, chunks);
  return png;
}

inline std::map<std::string, std::string> read_png_text(const std::string& png) {
  std::map<std::string, std::string> out;
  std::size_t pos = 8;
  auto be32 = [&](std::size_t p) {
    return (static_cast<std::uint32_t>(static_cast<unsigned char>(png[p])) << 24) |
           (static_cast<std::uint32_t>(static_cast<unsigned char>(png[p + 1])) << 16) |
           (static_cast<std::uint32_t>(static_cast<unsigned char>(png[p + 2])) << 8) |
           static_cast<std::uint32_t>(static_cast<unsigned char>(png[p + 3]));
  };
  while (pos + 12 <= png.size()) {
    const auto len = be32(pos);
    const auto type = png.substr(pos + 4, 4);
    if (type == "tEXt") {
      const auto data = png.substr(pos + 8, len);
      const auto nul = data.find('\0');
      out[data.substr(0, nul)] = data.substr(nul + 1);
    }
    if (type == "IEND") break;
    pos += 12 + len;
  }
  return out;
}

inline void write_file(const std::filesystem::path& path, const std::string& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace welfare::reporting
