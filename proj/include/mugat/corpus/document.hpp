#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "mugat/corpus/config.hpp"

namespace mugat::corpus {

struct Entry {
    std::size_t date_id = 0;
    std::size_t place_id = 0;
    std::string date;
    std::string place;
    std::string summary;        // words separated by single spaces
    std::size_t row_count = 1;  // lines of the wrapped summary

    friend bool operator==(const Entry&, const Entry&) = default;
};

struct DocumentSpec {
    std::size_t doc_id = 0;
    std::vector<Entry> entries;
    std::size_t style_id = 0;

    friend bool operator==(const DocumentSpec&, const DocumentSpec&) = default;
};

/// Greedy word wrap into lines of at most `width` characters.
inline std::vector<std::string> wrap_summary(const std::string& summary, std::size_t width)
{
    std::vector<std::string> lines;
    std::istringstream in(summary);
    std::string word, line;
    while (in >> word) {
        if (word.size() > width) throw ConfigError("word '" + word + "' wider than the summary column");
        if (line.empty()) {
            line = word;
        } else if (line.size() + 1 + word.size() <= width) {
            line += ' ' + word;
        } else {
            lines.push_back(line);
            line = word;
        }
    }
    if (!line.empty()) lines.push_back(line);
    return lines;
}

/// How a layout row relates to its entry.
enum class RowKind : std::uint8_t {
    start,    // first row of the entry: date and place are printed
    inner,    // later row, the entry started higher up on the same page
    carried,  // later row of an entry that started on an earlier page
};

struct LayoutRow {
    std::size_t entry = 0;
    std::size_t row_in_entry = 0;
    RowKind kind = RowKind::start;
    std::string date;
    std::string place;
    std::string summary;
};

struct PageLayout {
    std::size_t doc_id = 0;
    std::size_t page_index = 0;
    std::size_t style_id = 0;
    std::vector<LayoutRow> rows;
};

/// Packs entry rows onto pages of `rows_per_page` rows in order. An entry that
/// crosses a page boundary continues at the top of the next page with carried
/// rows, which print only the summary column.
inline std::vector<PageLayout> paginate(const DocumentSpec& doc, std::size_t rows_per_page, std::size_t summary_width)
{
    if (rows_per_page < 2) throw ConfigError("rows_per_page must be >= 2");
    std::vector<PageLayout> pages;
    std::size_t global_row = 0;
    for (std::size_t e = 0; e < doc.entries.size(); ++e) {
        const Entry& entry = doc.entries[e];
        const auto lines = wrap_summary(entry.summary, summary_width);
        if (lines.size() != entry.row_count) throw ConfigError("entry row_count disagrees with its wrapped summary");
        const std::size_t first_page = global_row / rows_per_page;
        for (std::size_t r = 0; r < lines.size(); ++r, ++global_row) {
            const std::size_t page = global_row / rows_per_page;
            if (page == pages.size()) pages.push_back(PageLayout{doc.doc_id, page, doc.style_id, {}});
            const RowKind kind = r == 0 ? RowKind::start : (page == first_page ? RowKind::inner : RowKind::carried);
            pages[page].rows.push_back(LayoutRow{e, r, kind, entry.date, entry.place, lines[r]});
        }
    }
    return pages;
}

/// Draws one document. Everything is a function of `seed`; date and place of
/// each entry are resampled until they differ from those of the entry carried
/// onto the page where it starts, so a continued entry's metadata never shows
/// up anywhere on its continuation page.
inline DocumentSpec generate_document(std::uint64_t seed, std::size_t doc_id, const GenConfig& cfg, const Lexicons& lex)
{
    cfg.validate();
    std::mt19937_64 rng(seed);
    DocumentSpec doc;
    doc.doc_id = doc_id;
    doc.style_id = static_cast<std::size_t>(uniform_below(rng, cfg.num_styles));
    const auto n_entries = static_cast<std::size_t>(
        uniform_int(rng, static_cast<std::int64_t>(cfg.entries_min), static_cast<std::int64_t>(cfg.entries_max)));

    std::vector<std::size_t> entry_first_row;
    std::size_t cursor = 0;
    for (std::size_t e = 0; e < n_entries; ++e) {
        Entry entry;
        const auto n_words = static_cast<std::size_t>(uniform_int(rng, static_cast<std::int64_t>(cfg.summary_words_min),
                                                                  static_cast<std::int64_t>(cfg.summary_words_max)));
        for (std::size_t w = 0; w < n_words; ++w) {
            if (w) entry.summary += ' ';
            entry.summary += lex.words[uniform_below(rng, lex.words.size())];
        }
        entry.row_count = wrap_summary(entry.summary, cfg.summary_cells).size();

        // Entry owning the top row of the page this entry starts on, if that
        // entry began on an earlier page.
        const Entry* carried = nullptr;
        const std::size_t page_top = (cursor / cfg.rows_per_page) * cfg.rows_per_page;
        if (cursor % cfg.rows_per_page != 0) {
            for (std::size_t k = doc.entries.size(); k-- > 0;) {
                if (entry_first_row[k] <= page_top) {
                    if (entry_first_row[k] < page_top) carried = &doc.entries[k];
                    break;
                }
            }
        }
        do {
            entry.date_id = static_cast<std::size_t>(uniform_below(rng, lex.dates.size()));
        } while (carried && entry.date_id == carried->date_id);
        do {
            entry.place_id = static_cast<std::size_t>(uniform_below(rng, lex.places.size()));
        } while (carried && entry.place_id == carried->place_id);
        entry.date = lex.dates[entry.date_id];
        entry.place = lex.places[entry.place_id];

        entry_first_row.push_back(cursor);
        cursor += entry.row_count;
        doc.entries.push_back(std::move(entry));
    }
    return doc;
}

}  // namespace mugat::corpus
