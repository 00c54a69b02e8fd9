#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string_view>

namespace mugat::corpus {

// Classic public-domain 5x7 bitmap font, column-major: five column bytes per
// glyph, bit 0 is the top pixel row.

inline constexpr int kGlyphWidth = 5;
inline constexpr int kGlyphHeight = 7;
/// Every character occupies one 8x8 cell; the glyph sits at (1, 0) inside it.
inline constexpr int kCellSize = 8;
inline constexpr int kGlyphOffsetX = 1;
inline constexpr int kGlyphOffsetY = 0;

struct Glyph {
    char ch;
    std::array<std::uint8_t, kGlyphWidth> columns;
};

inline constexpr std::array<Glyph, 49> kFont{{
    {' ', {0x00, 0x00, 0x00, 0x00, 0x00}}, {'A', {0x7C, 0x12, 0x11, 0x12, 0x7C}}, {'B', {0x7F, 0x49, 0x49, 0x49, 0x36}},
    {'C', {0x3E, 0x41, 0x41, 0x41, 0x22}}, {'D', {0x7F, 0x41, 0x41, 0x22, 0x1C}}, {'E', {0x7F, 0x49, 0x49, 0x49, 0x41}},
    {'F', {0x7F, 0x09, 0x09, 0x09, 0x01}}, {'G', {0x3E, 0x41, 0x49, 0x49, 0x7A}}, {'H', {0x7F, 0x08, 0x08, 0x08, 0x7F}},
    {'I', {0x00, 0x41, 0x7F, 0x41, 0x00}}, {'J', {0x20, 0x40, 0x41, 0x3F, 0x01}}, {'K', {0x7F, 0x08, 0x14, 0x22, 0x41}},
    {'L', {0x7F, 0x40, 0x40, 0x40, 0x40}}, {'M', {0x7F, 0x02, 0x0C, 0x02, 0x7F}}, {'N', {0x7F, 0x04, 0x08, 0x10, 0x7F}},
    {'O', {0x3E, 0x41, 0x41, 0x41, 0x3E}}, {'P', {0x7F, 0x09, 0x09, 0x09, 0x06}}, {'Q', {0x3E, 0x41, 0x51, 0x21, 0x5E}},
    {'R', {0x7F, 0x09, 0x19, 0x29, 0x46}}, {'S', {0x46, 0x49, 0x49, 0x49, 0x31}}, {'T', {0x01, 0x01, 0x7F, 0x01, 0x01}},
    {'U', {0x3F, 0x40, 0x40, 0x40, 0x3F}}, {'V', {0x1F, 0x20, 0x40, 0x20, 0x1F}}, {'W', {0x3F, 0x40, 0x38, 0x40, 0x3F}},
    {'X', {0x63, 0x14, 0x08, 0x14, 0x63}}, {'Y', {0x07, 0x08, 0x70, 0x08, 0x07}}, {'Z', {0x61, 0x51, 0x49, 0x45, 0x43}},
    {'0', {0x3E, 0x51, 0x49, 0x45, 0x3E}}, {'1', {0x00, 0x42, 0x7F, 0x40, 0x00}}, {'2', {0x42, 0x61, 0x51, 0x49, 0x46}},
    {'3', {0x21, 0x41, 0x45, 0x4B, 0x31}}, {'4', {0x18, 0x14, 0x12, 0x7F, 0x10}}, {'5', {0x27, 0x45, 0x45, 0x45, 0x39}},
    {'6', {0x3C, 0x4A, 0x49, 0x49, 0x30}}, {'7', {0x01, 0x71, 0x09, 0x05, 0x03}}, {'8', {0x36, 0x49, 0x49, 0x49, 0x36}},
    {'9', {0x06, 0x49, 0x49, 0x29, 0x1E}}, {'.', {0x00, 0x60, 0x60, 0x00, 0x00}}, {',', {0x00, 0x50, 0x30, 0x00, 0x00}},
    {':', {0x00, 0x36, 0x36, 0x00, 0x00}}, {';', {0x00, 0x56, 0x36, 0x00, 0x00}}, {'-', {0x08, 0x08, 0x08, 0x08, 0x08}},
    {'+', {0x08, 0x08, 0x3E, 0x08, 0x08}}, {'^', {0x04, 0x02, 0x01, 0x02, 0x04}}, {'|', {0x00, 0x00, 0x7F, 0x00, 0x00}},
    {'/', {0x20, 0x10, 0x08, 0x04, 0x02}}, {'(', {0x00, 0x1C, 0x22, 0x41, 0x00}}, {')', {0x00, 0x41, 0x22, 0x1C, 0x00}},
    {'\'', {0x00, 0x05, 0x03, 0x00, 0x00}},
}};

inline const Glyph* find_glyph(char c)
{
    for (const Glyph& g : kFont) {
        if (g.ch == c) return &g;
    }
    return nullptr;
}

inline bool glyph_pixel(const Glyph& g, int x, int y)
{
    return ((g.columns[static_cast<std::size_t>(x)] >> y) & 1U) != 0;
}

inline bool renderable(std::string_view text)
{
    for (const char c : text) {
        if (!find_glyph(c)) return false;
    }
    return true;
}

}  // namespace mugat::corpus
