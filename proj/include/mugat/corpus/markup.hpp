#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "mugat/corpus/document.hpp"

namespace mugat::corpus {

// Toy markup dialect, one pipe-delimited line per layout row:
//   start row    | J05 | XY | AB CD |
//   inner row    |  |  | EF |
//   carried row  | ^J05 | ^XY | EF |
// Carried rows repeat the date and place of an entry begun on an earlier page;
// those cells are blank in the page image, so only the previous page tells
// the model what to write. The caret marks the cell as carried over.

inline constexpr char kCarryMark = '^';

inline std::string markup_row(const LayoutRow& row)
{
    switch (row.kind) {
    case RowKind::start: return "| " + row.date + " | " + row.place + " | " + row.summary + " |";
    case RowKind::inner: return "|  |  | " + row.summary + " |";
    case RowKind::carried:
        return std::string("| ") + kCarryMark + row.date + " | " + kCarryMark + row.place + " | " + row.summary + " |";
    }
    return {};
}

inline std::string target_markup(const PageLayout& layout)
{
    std::string out;
    for (std::size_t i = 0; i < layout.rows.size(); ++i) {
        if (i) out += '\n';
        out += markup_row(layout.rows[i]);
    }
    return out;
}

/// Cells of one markup line, with the surrounding "| " and " |" removed.
/// Lines that do not follow the dialect come back with fewer than 3 cells.
inline std::vector<std::string> split_markup_cells(std::string_view line)
{
    std::vector<std::string> cells;
    if (line.size() < 2 || line.front() != '|' || line.back() != '|') return cells;
    std::string_view body = line.substr(1, line.size() - 2);
    std::size_t pos = 0;
    while (true) {
        const std::size_t bar = body.find('|', pos);
        std::string_view cell = body.substr(pos, bar == std::string_view::npos ? std::string_view::npos : bar - pos);
        if (!cell.empty() && cell.front() == ' ') cell.remove_prefix(1);
        if (!cell.empty() && cell.back() == ' ') cell.remove_suffix(1);
        cells.emplace_back(cell);
        if (bar == std::string_view::npos) break;
        pos = bar + 1;
    }
    return cells;
}

inline std::vector<std::string> split_lines(std::string_view text)
{
    std::vector<std::string> lines;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const std::size_t nl = text.find('\n', pos);
        if (nl == std::string_view::npos) {
            lines.emplace_back(text.substr(pos));
            break;
        }
        lines.emplace_back(text.substr(pos, nl - pos));
        pos = nl + 1;
    }
    return lines;
}

/// Date cell of each markup line (carry mark stripped), empty when the line is
/// malformed or the cell is blank.
inline std::vector<std::string> markup_dates(std::string_view markup)
{
    std::vector<std::string> dates;
    for (const auto& line : split_lines(markup)) {
        auto cells = split_markup_cells(line);
        std::string date = cells.size() >= 3 ? cells[0] : std::string{};
        if (!date.empty() && date.front() == kCarryMark) date.erase(0, 1);
        dates.push_back(date);
    }
    return dates;
}

/// Indices of the carried rows of a markup string.
inline std::vector<std::size_t> carried_rows(std::string_view markup)
{
    std::vector<std::size_t> rows;
    const auto lines = split_lines(markup);
    for (std::size_t i = 0; i < lines.size(); ++i) {
        const auto cells = split_markup_cells(lines[i]);
        if (cells.size() >= 3 && !cells[0].empty() && cells[0].front() == kCarryMark) rows.push_back(i);
    }
    return rows;
}

}  // namespace mugat::corpus
