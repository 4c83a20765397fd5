#pragma once

#include "blehop/types.hpp"

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace blehop {

/// Set of allowed data channels. Bit i of the mask is channel i.
/// Always holds between 2 and 37 channels.
class ChannelMap {
public:
    static constexpr std::uint64_t kFullMask = (std::uint64_t{1} << kNumDataChannels) - 1;

    /// All 37 data channels.
    ChannelMap();

    /// Throws Error(InvalidArgument) when bits above 36 are set or fewer than two channels remain.
    static ChannelMap from_mask(std::uint64_t mask);
    static ChannelMap from_channels(std::span<const Channel> channels);
    static ChannelMap full() { return ChannelMap(); }

    /// Accepts "0x1FFFFFFC00" style hex (prefix optional, case-insensitive).
    static ChannelMap parse(const std::string& text);

    /// Uppercase hex with 0x prefix, at least 10 digits, e.g. "0x1FFFFFFC00".
    std::string to_hex() const;

    std::uint64_t mask() const { return mask_; }
    int size() const { return static_cast<int>(ordered_.size()); }
    bool contains(int channel) const;

    /// Ascending allowed channels.
    std::span<const Channel> ordered() const { return ordered_; }
    Channel at(int index) const { return ordered_.at(static_cast<std::size_t>(index)); }

    /// Position of an allowed channel in ordered(), -1 if not allowed.
    int index_of(int channel) const;

    friend bool operator==(const ChannelMap& a, const ChannelMap& b) { return a.mask_ == b.mask_; }

private:
    explicit ChannelMap(std::uint64_t mask, int);

    std::uint64_t mask_;
    std::vector<Channel> ordered_;
};

} // namespace blehop
