#pragma once

#include <chrono>
#include <compare>
#include <cstdint>
#include <string>
#include <string_view>

namespace chartval {

/// Calendar date stored as days since 1970-01-01. Text form is ISO-8601 (YYYY-MM-DD).
class Date {
public:
    constexpr Date() = default;
    constexpr explicit Date(std::int32_t days_since_epoch) : days_(days_since_epoch) {}
    Date(int year, unsigned month, unsigned day);

    static Date parse(std::string_view iso);

    constexpr std::int32_t days() const noexcept { return days_; }
    std::string iso() const;

    constexpr Date operator+(std::int32_t n) const noexcept { return Date(days_ + n); }
    constexpr Date operator-(std::int32_t n) const noexcept { return Date(days_ - n); }
    constexpr std::int32_t operator-(Date other) const noexcept { return days_ - other.days_; }

    constexpr auto operator<=>(const Date&) const = default;

private:
    std::int32_t days_ = 0;
};

/// Inclusive date range.
struct DateRange {
    Date first;
    Date last;

    constexpr bool contains(Date d) const noexcept { return first <= d && d <= last; }
    static constexpr DateRange around(Date center, std::int32_t radius_days) noexcept {
        return {center - radius_days, center + radius_days};
    }
    constexpr bool operator==(const DateRange&) const = default;
};

using Clock = std::chrono::system_clock;
using Timestamp = std::chrono::sys_time<std::chrono::milliseconds>;

/// "2024-03-01T12:30:05.250Z"
std::string format_timestamp(Timestamp t);
Timestamp parse_timestamp(std::string_view text);

} // namespace chartval
