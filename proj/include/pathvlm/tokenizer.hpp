#pragma once

#include <string>
#include <vector>

namespace pathvlm {

// Byte-fallback tokenizer with a 512-entry vocab shared by the text tower
// and the LM: ids 0..3 are specials, 4..259 map bytes, the rest is reserved.
class ByteTokenizer {
public:
    static constexpr int kPad = 0;
    static constexpr int kBos = 1;
    static constexpr int kEos = 2;
    static constexpr int kSep = 3;
    static constexpr int kByteOffset = 4;
    static constexpr int kVocab = 512;

    // raw bytes -> ids, no specials added
    std::vector<int> encode(const std::string& text) const {
        std::vector<int> ids;
        ids.reserve(text.size());
        for (unsigned char c : text) ids.push_back(kByteOffset + c);
        return ids;
    }

    // ids -> bytes; specials and reserved ids are skipped
    std::string decode(const std::vector<int>& ids) const {
        std::string out;
        for (int id : ids)
            if (id >= kByteOffset && id < kByteOffset + 256) out.push_back(static_cast<char>(id - kByteOffset));
        return out;
    }

    std::vector<int> truncate(std::vector<int> ids, size_t max_len) const {
        if (ids.size() > max_len) ids.resize(max_len);
        return ids;
    }
};

}  // namespace pathvlm
