#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "mugat/corpus/config.hpp"
#include "mugat/corpus/document.hpp"
#include "mugat/corpus/font.hpp"

namespace mugat::corpus {

/// Monochrome page raster: 1 = ink, 0 = background.
struct PageBitmap {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<std::uint8_t> pixels;
    std::string markup;
    std::size_t doc_id = 0;
    std::size_t page_index = 0;
    bool has_prev = false;
    bool has_next = false;

    std::uint8_t at(std::size_t y, std::size_t x) const { return pixels[y * width + x]; }
    std::uint8_t& at(std::size_t y, std::size_t x) { return pixels[y * width + x]; }
};

inline PageBitmap blank_page(std::size_t height, std::size_t width)
{
    PageBitmap b;
    b.height = height;
    b.width = width;
    b.pixels.assign(height * width, 0);
    return b;
}

enum class Separator : std::uint8_t { solid, dashed, none };

struct Style {
    std::size_t top_margin_lines = 1;
    Separator separator = Separator::solid;

    static Style from_id(std::size_t id) { return Style{1 + id % 2, static_cast<Separator>((id / 2) % 3)}; }
};

/// Cell geometry of the three-column table: date | place | summary, with one
/// separator cell between columns.
struct TableGeometry {
    std::size_t image_h = 64;
    std::size_t image_w = 96;
    std::size_t date_cells = 3;
    std::size_t place_cells = 2;
    std::size_t summary_cells = 5;

    static TableGeometry from(const GenConfig& c) { return {c.image_h, c.image_w, c.date_cells, c.place_cells, c.summary_cells}; }

    std::size_t date_col() const { return 0; }
    std::size_t place_col() const { return date_cells + 1; }
    std::size_t summary_col() const { return date_cells + place_cells + 2; }
};

class RenderError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline void draw_glyph(PageBitmap& page, const Glyph& g, std::size_t cell_x, std::size_t cell_y)
{
    const std::size_t x0 = cell_x * kCellSize + kGlyphOffsetX;
    const std::size_t y0 = cell_y * kCellSize + kGlyphOffsetY;
    for (int x = 0; x < kGlyphWidth; ++x) {
        for (int y = 0; y < kGlyphHeight; ++y) {
            if (glyph_pixel(g, x, y)) page.at(y0 + static_cast<std::size_t>(y), x0 + static_cast<std::size_t>(x)) = 1;
        }
    }
}

inline void draw_text(PageBitmap& page, std::string_view text, std::size_t cell_x, std::size_t cell_y, std::size_t width_cells)
{
    if (text.size() > width_cells) {
        throw RenderError("text '" + std::string(text) + "' overflows a " + std::to_string(width_cells) + "-cell column");
    }
    for (std::size_t i = 0; i < text.size(); ++i) {
        const Glyph* g = find_glyph(text[i]);
        if (!g) throw RenderError(std::string("no glyph for character '") + text[i] + "'");
        draw_glyph(page, *g, cell_x + i, cell_y);
    }
}

inline void draw_separator(PageBitmap& page, Separator kind, std::size_t cell_x, std::size_t cell_y)
{
    if (kind == Separator::none) return;
    const std::size_t x = cell_x * kCellSize + 3;
    for (std::size_t y = 0; y < static_cast<std::size_t>(kCellSize); ++y) {
        if (kind == Separator::dashed && y % 2) continue;
        page.at(cell_y * kCellSize + y, x) = 1;
    }
}

/// Rasterises a page layout. Only start rows print date and place; inner and
/// carried rows leave those cells blank. An empty layout yields a blank page.
inline PageBitmap render_page(const PageLayout& layout, const Style& style, const TableGeometry& geo)
{
    PageBitmap page = blank_page(geo.image_h, geo.image_w);
    page.doc_id = layout.doc_id;
    page.page_index = layout.page_index;
    const std::size_t lines = geo.image_h / kCellSize;
    if (layout.rows.size() + style.top_margin_lines > lines) {
        throw RenderError("layout of " + std::to_string(layout.rows.size()) + " rows does not fit the page");
    }
    for (std::size_t i = 0; i < layout.rows.size(); ++i) {
        const LayoutRow& row = layout.rows[i];
        const std::size_t line = style.top_margin_lines + i;
        if (row.kind == RowKind::start) {
            draw_text(page, row.date, geo.date_col(), line, geo.date_cells);
            draw_text(page, row.place, geo.place_col(), line, geo.place_cells);
        }
        draw_separator(page, style.separator, geo.place_col() - 1, line);
        draw_separator(page, style.separator, geo.summary_col() - 1, line);
        draw_text(page, row.summary, geo.summary_col(), line, geo.summary_cells);
    }
    return page;
}

/// Number of pixel positions where `text` appears as a run of glyphs at the
/// font's cell pitch (exact 5x7 match per glyph). Used to audit which strings
/// are visible on a page.
inline std::size_t count_text_matches(const PageBitmap& page, std::string_view text)
{
    std::vector<const Glyph*> glyphs;
    for (const char c : text) {
        const Glyph* g = find_glyph(c);
        if (!g) return 0;
        glyphs.push_back(g);
    }
    if (glyphs.empty()) return 0;
    const std::size_t span_w = (glyphs.size() - 1) * kCellSize + kGlyphWidth;
    if (span_w > page.width || static_cast<std::size_t>(kGlyphHeight) > page.height) return 0;
    std::size_t matches = 0;
    for (std::size_t y = 0; y + kGlyphHeight <= page.height; ++y) {
        for (std::size_t x = 0; x + span_w <= page.width; ++x) {
            bool ok = true;
            for (std::size_t k = 0; k < glyphs.size() && ok; ++k) {
                for (int gx = 0; gx < kGlyphWidth && ok; ++gx) {
                    for (int gy = 0; gy < kGlyphHeight && ok; ++gy) {
                        const bool ink = page.at(y + static_cast<std::size_t>(gy), x + k * kCellSize + static_cast<std::size_t>(gx)) != 0;
                        ok = ink == glyph_pixel(*glyphs[k], gx, gy);
                    }
                }
            }
            if (ok) ++matches;
        }
    }
    return matches;
}

}  // namespace mugat::corpus
