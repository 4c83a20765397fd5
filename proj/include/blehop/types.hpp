#pragma once

#include <compare>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace blehop {

/// Data channel index, 0..36. Advertising channels (37..39) never appear here.
using Channel = std::uint8_t;

inline constexpr int kNumDataChannels = 37;
inline constexpr std::int64_t kCounterPeriod = 65536;
inline constexpr std::int64_t kSlotNs = 1'250'000;            // 1.25 ms
inline constexpr std::int64_t kMinIntervalNs = 6 * kSlotNs;   // 7.5 ms
inline constexpr std::int64_t kMaxIntervalNs = 3200 * kSlotNs; // 4 s

struct AccessAddress {
    std::uint32_t value = 0;

    constexpr std::uint16_t high() const { return static_cast<std::uint16_t>(value >> 16); }
    constexpr std::uint16_t low() const { return static_cast<std::uint16_t>(value & 0xFFFFu); }

    friend constexpr auto operator<=>(AccessAddress, AccessAddress) = default;
};

struct ChannelIdentifier {
    std::uint16_t value = 0;

    friend constexpr auto operator<=>(ChannelIdentifier, ChannelIdentifier) = default;
};

/// 16-bit connection event counter; arithmetic wraps at 65536.
struct EventCounter {
    std::uint16_t value = 0;

    constexpr EventCounter() = default;
    constexpr explicit EventCounter(std::uint16_t v) : value(v) {}

    /// Reduces any (possibly negative) event index onto the counter ring.
    static constexpr EventCounter from_index(std::int64_t index) {
        auto r = index % kCounterPeriod;
        if (r < 0) r += kCounterPeriod;
        return EventCounter(static_cast<std::uint16_t>(r));
    }

    constexpr EventCounter advanced(std::int64_t events) const {
        return from_index(static_cast<std::int64_t>(value) + events);
    }

    friend constexpr auto operator<=>(EventCounter, EventCounter) = default;
};

enum class CsaVersion { Csa1, Csa2 };

const char* to_string(CsaVersion v);

enum class ErrorKind {
    InvalidArgument,
    Config,
    Parse,
    InsufficientData,
    Estimation,
    Ambiguous,
    Io,
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

/// Parse failure with the 1-based row (and column, 0 when unknown) it occurred at.
class ParseError : public Error {
public:
    ParseError(std::size_t row, std::size_t column, const std::string& reason);

    std::size_t row() const noexcept { return row_; }
    std::size_t column() const noexcept { return column_; }

private:
    std::size_t row_;
    std::size_t column_;
};

std::string format_access_address(AccessAddress aa);
AccessAddress parse_access_address(const std::string& text);

} // namespace blehop
