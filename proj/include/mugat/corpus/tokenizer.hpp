#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "mugat/corpus/font.hpp"

namespace mugat::corpus {

/// Character-level tokenizer over the font alphabet plus newline.
/// Ids 0-3 are PAD, BOS, EOS, UNK.
class Tokenizer {
public:
    static constexpr int pad = 0;
    static constexpr int bos = 1;
    static constexpr int eos = 2;
    static constexpr int unk = 3;
    static constexpr int num_specials = 4;

    Tokenizer()
    {
        to_id_.fill(unk);
        for (const Glyph& g : kFont) add(g.ch);
        add('\n');
    }

    std::size_t vocab_size() const noexcept { return alphabet_.size() + num_specials; }
    const std::string& alphabet() const noexcept { return alphabet_; }

    /// BOS, one id per character, EOS. Unknown characters map to UNK and are
    /// counted in `unknown` when given.
    std::vector<int> encode(std::string_view text, std::size_t* unknown = nullptr) const
    {
        std::vector<int> ids;
        ids.reserve(text.size() + 2);
        ids.push_back(bos);
        for (const char c : text) {
            const int id = to_id_[static_cast<unsigned char>(c)];
            if (id == unk && unknown) ++*unknown;
            ids.push_back(id);
        }
        ids.push_back(eos);
        return ids;
    }

    /// Inverse of encode(): specials are dropped, decoding stops at EOS.
    std::string decode(const std::vector<int>& ids) const
    {
        std::string out;
        for (const int id : ids) {
            if (id == eos) break;
            if (id < num_specials || static_cast<std::size_t>(id) >= vocab_size()) continue;
            out += alphabet_[static_cast<std::size_t>(id - num_specials)];
        }
        return out;
    }

private:
    void add(char c)
    {
        to_id_[static_cast<unsigned char>(c)] = static_cast<int>(alphabet_.size()) + num_specials;
        alphabet_ += c;
    }

    std::string alphabet_;
    std::array<int, 256> to_id_{};
};

}  // namespace mugat::corpus
