#pragma once

#include <filesystem>

#include "hardneg/corpus/jsonl.hpp"
#include "hardneg/gateway/types.hpp"

namespace hardneg::gateway {

// Loads a page image, sniffing PNG/JPEG from the magic bytes.
inline ImagePart load_image(const std::filesystem::path& path) {
    if (!std::filesystem::is_regular_file(path)) throw IoError("image not found: " + path.string());
    ImagePart img;
    img.bytes = read_file(path);
    const auto& b = img.bytes;
    if (b.size() >= 4 && static_cast<unsigned char>(b[0]) == 0x89 && b.compare(1, 3, "PNG") == 0) {
        img.media_type = "image/png";
    } else if (b.size() >= 3 && static_cast<unsigned char>(b[0]) == 0xFF && static_cast<unsigned char>(b[1]) == 0xD8 &&
               static_cast<unsigned char>(b[2]) == 0xFF) {
        img.media_type = "image/jpeg";
    } else {
        throw IoError("not a PNG or JPEG image: " + path.string());
    }
    return img;
}

}  // namespace hardneg::gateway
