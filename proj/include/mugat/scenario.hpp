#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace mugat {

/// Which neighbours of the current page are available.
enum class Scenario : std::uint8_t { curr_only, prev_curr, curr_next, full };

inline constexpr std::array<Scenario, 4> kScenarios{Scenario::curr_only, Scenario::prev_curr, Scenario::curr_next, Scenario::full};

inline constexpr bool has_prev(Scenario s) { return s == Scenario::prev_curr || s == Scenario::full; }
inline constexpr bool has_next(Scenario s) { return s == Scenario::curr_next || s == Scenario::full; }

inline constexpr Scenario scenario_of(bool prev, bool next)
{
    if (prev && next) return Scenario::full;
    if (prev) return Scenario::prev_curr;
    if (next) return Scenario::curr_next;
    return Scenario::curr_only;
}

inline std::string_view to_string(Scenario s)
{
    switch (s) {
    case Scenario::curr_only: return "curr_only";
    case Scenario::prev_curr: return "prev_curr";
    case Scenario::curr_next: return "curr_next";
    case Scenario::full: return "full";
    }
    return "?";
}

inline Scenario parse_scenario(std::string_view name)
{
    for (Scenario s : kScenarios) {
        if (to_string(s) == name) return s;
    }
    throw std::invalid_argument("unknown scenario '" + std::string(name) + "'");
}

}  // namespace mugat
