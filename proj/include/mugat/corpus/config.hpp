#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <random>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mugat/corpus/font.hpp"
#include "mugat/numerics/rng.hpp"

namespace mugat::corpus {

class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Training-split context proportions (curr only, prev+curr, curr+next, all three).
inline constexpr std::array<double, 4> kScenarioCounts{1276.0, 1758.0, 1758.0, 2898.0};

inline std::array<double, 4> default_scenario_quotas()
{
    const double total = kScenarioCounts[0] + kScenarioCounts[1] + kScenarioCounts[2] + kScenarioCounts[3];
    return {kScenarioCounts[0] / total, kScenarioCounts[1] / total, kScenarioCounts[2] / total, kScenarioCounts[3] / total};
}

/// Alphabets are disjoint on purpose: places never occur inside summary words
/// and dates are the only strings carrying digits.
inline constexpr std::string_view kMonthLetters = "JFMAYULGSOND";
inline constexpr std::string_view kPlaceLetters = "FGJMPQUVWXYZ";
inline constexpr std::string_view kWordLetters = "ABCDEHIKLNORST";

struct GenConfig {
    std::size_t num_documents = 600;
    std::size_t entries_min = 5;
    std::size_t entries_max = 12;
    std::size_t summary_words_min = 2;
    std::size_t summary_words_max = 6;
    std::size_t word_len_min = 2;
    std::size_t word_len_max = 5;
    std::size_t k_date = 12;
    std::size_t k_place = 8;
    std::size_t word_lexicon_size = 48;
    std::size_t rows_per_page = 6;
    std::size_t image_h = 64;
    std::size_t image_w = 96;
    std::size_t date_cells = 3;
    std::size_t place_cells = 2;
    std::size_t summary_cells = 5;
    std::size_t num_styles = 6;
    std::uint64_t lexicon_seed = 7;
    std::array<double, 3> split_ratios{0.8, 0.1, 0.1};
    std::array<double, 4> scenario_quotas = default_scenario_quotas();

    std::size_t lines_per_page() const { return image_h / kCellSize; }
    std::size_t cells_per_line() const { return image_w / kCellSize; }
    static constexpr std::size_t max_top_margin = 2;

    void validate() const
    {
        auto fail = [](const std::string& m) { throw ConfigError("invalid generator config: " + m); };
        if (num_documents < 1) fail("num_documents must be >= 1");
        if (entries_min < 1 || entries_min > entries_max) fail("entry count range is empty");
        if (summary_words_min < 1 || summary_words_min > summary_words_max) fail("summary length range is empty");
        if (word_len_min < 1 || word_len_min > word_len_max) fail("word length range is empty");
        if (word_len_max > summary_cells) fail("words longer than the summary column");
        if (k_date < 2 || k_place < 2 || word_lexicon_size < 2) fail("lexicon sizes must be >= 2");
        if (k_date > kMonthLetters.size() * 28) fail("k_date too large for the month/day space");
        if (k_place > kPlaceLetters.size() * kPlaceLetters.size()) fail("k_place too large");
        if (date_cells != 3) fail("date_cells must be 3 (month letter + two-digit day)");
        if (place_cells != 2) fail("place_cells must be 2");
        if (rows_per_page < 2) fail("rows_per_page must be >= 2");
        if (image_h % kCellSize || image_w % kCellSize) fail("image dimensions must be multiples of the 8px cell");
        if (cells_per_line() < date_cells + place_cells + summary_cells + 2) fail("page too narrow for the three columns");
        if (lines_per_page() < rows_per_page + max_top_margin) fail("page too short for rows_per_page plus margins");
        if (num_styles < 1 || num_styles > 6) fail("num_styles must be in [1, 6]");
        double r = 0, q = 0;
        for (double v : split_ratios) {
            if (v < 0) fail("negative split ratio");
            r += v;
        }
        for (double v : scenario_quotas) {
            if (v < 0) fail("negative scenario quota");
            q += v;
        }
        if (std::abs(r - 1.0) > 1e-9) fail("split ratios must sum to 1");
        if (std::abs(q - 1.0) > 1e-9) fail("scenario quotas must sum to 1");
    }
};

inline void to_json(nlohmann::json& j, const GenConfig& c)
{
    j = nlohmann::json{{"num_documents", c.num_documents},
                       {"entries_min", c.entries_min},
                       {"entries_max", c.entries_max},
                       {"summary_words_min", c.summary_words_min},
                       {"summary_words_max", c.summary_words_max},
                       {"word_len_min", c.word_len_min},
                       {"word_len_max", c.word_len_max},
                       {"k_date", c.k_date},
                       {"k_place", c.k_place},
                       {"word_lexicon_size", c.word_lexicon_size},
                       {"rows_per_page", c.rows_per_page},
                       {"image_h", c.image_h},
                       {"image_w", c.image_w},
                       {"date_cells", c.date_cells},
                       {"place_cells", c.place_cells},
                       {"summary_cells", c.summary_cells},
                       {"num_styles", c.num_styles},
                       {"lexicon_seed", c.lexicon_seed},
                       {"split_ratios", c.split_ratios},
                       {"scenario_quotas", c.scenario_quotas}};
}

inline void from_json(const nlohmann::json& j, GenConfig& c)
{
    GenConfig d;
    auto get = [&](const char* key, auto& field) {
        if (j.contains(key)) j.at(key).get_to(field);
    };
    c = d;
    get("num_documents", c.num_documents);
    get("entries_min", c.entries_min);
    get("entries_max", c.entries_max);
    get("summary_words_min", c.summary_words_min);
    get("summary_words_max", c.summary_words_max);
    get("word_len_min", c.word_len_min);
    get("word_len_max", c.word_len_max);
    get("k_date", c.k_date);
    get("k_place", c.k_place);
    get("word_lexicon_size", c.word_lexicon_size);
    get("rows_per_page", c.rows_per_page);
    get("image_h", c.image_h);
    get("image_w", c.image_w);
    get("date_cells", c.date_cells);
    get("place_cells", c.place_cells);
    get("summary_cells", c.summary_cells);
    get("num_styles", c.num_styles);
    get("lexicon_seed", c.lexicon_seed);
    get("split_ratios", c.split_ratios);
    get("scenario_quotas", c.scenario_quotas);
}

struct Lexicons {
    std::vector<std::string> dates;
    std::vector<std::string> places;
    std::vector<std::string> words;
};

/// Builds the date, place and word lexicons. They depend only on the
/// generator config, so corpora generated with different seeds share them.
inline Lexicons build_lexicons(const GenConfig& cfg)
{
    cfg.validate();
    std::mt19937_64 rng(derive_seed(cfg.lexicon_seed, 0x1E));
    Lexicons lex;
    std::set<std::string> seen;
    while (lex.dates.size() < cfg.k_date) {
        const char month = kMonthLetters[uniform_below(rng, kMonthLetters.size())];
        const auto day = uniform_int(rng, 1, 28);
        std::string s{month};
        s += static_cast<char>('0' + day / 10);
        s += static_cast<char>('0' + day % 10);
        if (seen.insert(s).second) lex.dates.push_back(s);
    }
    while (lex.places.size() < cfg.k_place) {
        std::string s;
        for (std::size_t i = 0; i < cfg.place_cells; ++i) s += kPlaceLetters[uniform_below(rng, kPlaceLetters.size())];
        if (seen.insert(s).second) lex.places.push_back(s);
    }
    while (lex.words.size() < cfg.word_lexicon_size) {
        const auto len = static_cast<std::size_t>(uniform_int(rng, static_cast<std::int64_t>(cfg.word_len_min),
                                                              static_cast<std::int64_t>(cfg.word_len_max)));
        std::string s;
        for (std::size_t i = 0; i < len; ++i) s += kWordLetters[uniform_below(rng, kWordLetters.size())];
        if (seen.insert(s).second) lex.words.push_back(s);
    }
    return lex;
}

}  // namespace mugat::corpus
