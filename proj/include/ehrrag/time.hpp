#pragma once

#include <compare>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <string_view>

namespace ehrrag {

/// UTC instant with second resolution.
///
/// Accepted input forms: "YYYY-MM-DD HH:MM:SS", ISO-8601
/// "YYYY-MM-DDTHH:MM:SS" with optional fractional seconds (truncated),
/// optional trailing 'Z' or "+HH:MM"/"-HH:MM" offset (normalized to UTC),
/// and bare "YYYY-MM-DD" (midnight). Formatting always emits
/// "YYYY-MM-DD HH:MM:SS".
class Timestamp {
public:
    Timestamp() = default;
    explicit constexpr Timestamp(std::int64_t epoch_seconds) : secs_(epoch_seconds) {}

    static std::optional<Timestamp> parse(std::string_view text);
    static constexpr Timestamp invalid() { return Timestamp(); }

    constexpr bool valid() const { return secs_ != kInvalid; }
    constexpr std::int64_t epoch_seconds() const { return secs_; }

    std::string to_string() const;

    constexpr Timestamp plus_seconds(std::int64_t s) const { return Timestamp(secs_ + s); }

    friend constexpr auto operator<=>(const Timestamp&, const Timestamp&) = default;

private:
    static constexpr std::int64_t kInvalid = std::numeric_limits<std::int64_t>::min();
    std::int64_t secs_ = kInvalid;
};

/// Signed (to - from) in fractional days.
inline double days_between(Timestamp from, Timestamp to) {
    return static_cast<double>(to.epoch_seconds() - from.epoch_seconds()) / 86400.0;
}

constexpr std::int64_t seconds_from_days(double days) {
    return static_cast<std::int64_t>(days * 86400.0);
}

}  // namespace ehrrag
