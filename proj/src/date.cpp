#include "chartval/date.hpp"

#include "chartval/error.hpp"

#include <charconv>
#include <cstdio>

namespace chartval {

namespace {

int parse_int(std::string_view s, std::string_view what) {
    int v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size()) {
        throw ParseError("bad " + std::string(what) + " in '" + std::string(s) + "'");
    }
    return v;
}

std::chrono::year_month_day parse_ymd(std::string_view iso) {
    if (iso.size() != 10 || iso[4] != '-' || iso[7] != '-') {
        throw ParseError("expected YYYY-MM-DD date, got '" + std::string(iso) + "'");
    }
    const std::chrono::year_month_day ymd{
        std::chrono::year{parse_int(iso.substr(0, 4), "year")},
        std::chrono::month{static_cast<unsigned>(parse_int(iso.substr(5, 2), "month"))},
        std::chrono::day{static_cast<unsigned>(parse_int(iso.substr(8, 2), "day"))}};
    if (!ymd.ok()) throw ParseError("invalid calendar date '" + std::string(iso) + "'");
    return ymd;
}

} // namespace

Date::Date(int year, unsigned month, unsigned day) {
    const std::chrono::year_month_day ymd{std::chrono::year{year}, std::chrono::month{month},
                                          std::chrono::day{day}};
    if (!ymd.ok()) throw DomainError("invalid calendar date");
    days_ = std::chrono::sys_days{ymd}.time_since_epoch().count();
}

Date Date::parse(std::string_view iso) {
    return Date(std::chrono::sys_days{parse_ymd(iso)}.time_since_epoch().count());
}

std::string Date::iso() const {
    const std::chrono::year_month_day ymd{std::chrono::sys_days{std::chrono::days{days_}}};
    char buf[16];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
    return buf;
}

std::string format_timestamp(Timestamp t) {
    const auto day = std::chrono::floor<std::chrono::days>(t);
    const std::chrono::hh_mm_ss hms{t - day};
    char buf[40];
    std::snprintf(buf, sizeof buf, "%sT%02d:%02d:%02d.%03dZ",
                  Date(day.time_since_epoch().count()).iso().c_str(),
                  static_cast<int>(hms.hours().count()), static_cast<int>(hms.minutes().count()),
                  static_cast<int>(hms.seconds().count()),
                  static_cast<int>(hms.subseconds().count()));
    return buf;
}

Timestamp parse_timestamp(std::string_view text) {
    // YYYY-MM-DDTHH:MM:SS[.mmm]Z
    if (text.size() < 20 || text[10] != 'T' || text.back() != 'Z' || text[13] != ':' ||
        text[16] != ':') {
        throw ParseError("expected ISO-8601 UTC timestamp, got '" + std::string(text) + "'");
    }
    const auto day = std::chrono::sys_days{parse_ymd(text.substr(0, 10))};
    const int hh = parse_int(text.substr(11, 2), "hour");
    const int mm = parse_int(text.substr(14, 2), "minute");
    const int ss = parse_int(text.substr(17, 2), "second");
    int ms = 0;
    if (text.size() > 20) {
        if (text[19] != '.') throw ParseError("bad timestamp fraction in '" + std::string(text) + "'");
        std::string_view frac = text.substr(20, text.size() - 21);
        if (frac.empty() || frac.size() > 3) throw ParseError("bad timestamp fraction");
        ms = parse_int(frac, "milliseconds");
        for (std::size_t i = frac.size(); i < 3; ++i) ms *= 10;
    }
    if (hh > 23 || mm > 59 || ss > 60) throw ParseError("timestamp field out of range");
    return Timestamp{day.time_since_epoch()} + std::chrono::hours{hh} + std::chrono::minutes{mm} +
           std::chrono::seconds{ss} + std::chrono::milliseconds{ms};
}

} // namespace chartval
