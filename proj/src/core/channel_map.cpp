#include "blehop/channel_map.hpp"

#include <bit>
#include <cctype>
#include <cstdio>

namespace blehop {

ChannelMap::ChannelMap() : ChannelMap(kFullMask, 0) {}

ChannelMap::ChannelMap(std::uint64_t mask, int) : mask_(mask) {
    ordered_.reserve(static_cast<std::size_t>(std::popcount(mask)));
    for (int ch = 0; ch < kNumDataChannels; ++ch) {
        if ((mask >> ch) & 1u) ordered_.push_back(static_cast<Channel>(ch));
    }
}

ChannelMap ChannelMap::from_mask(std::uint64_t mask) {
    if (mask & ~kFullMask) {
        throw Error(ErrorKind::InvalidArgument, "channel map has bits set above channel 36");
    }
    if (std::popcount(mask) < 2) {
        throw Error(ErrorKind::InvalidArgument, "channel map must allow at least two channels");
    }
    return ChannelMap(mask, 0);
}

ChannelMap ChannelMap::from_channels(std::span<const Channel> channels) {
    std::uint64_t mask = 0;
    for (Channel ch : channels) {
        if (ch >= kNumDataChannels) {
            throw Error(ErrorKind::InvalidArgument,
                        "channel " + std::to_string(ch) + " is not a data channel");
        }
        mask |= std::uint64_t{1} << ch;
    }
    return from_mask(mask);
}

ChannelMap ChannelMap::parse(const std::string& text) {
    std::size_t pos = 0;
    if (text.size() > 2 && text[0] == '0' && (text[1] == 'x' || text[1] == 'X')) pos = 2;
    if (pos == text.size() || text.size() - pos > 16) {
        throw Error(ErrorKind::Parse, "invalid channel map '" + text + "'");
    }
    std::uint64_t mask = 0;
    for (; pos < text.size(); ++pos) {
        const auto c = static_cast<unsigned char>(text[pos]);
        if (!std::isxdigit(c)) throw Error(ErrorKind::Parse, "invalid channel map '" + text + "'");
        const unsigned digit = std::isdigit(c) ? c - '0' : std::toupper(c) - 'A' + 10;
        mask = (mask << 4) | digit;
    }
    try {
        return from_mask(mask);
    } catch (const Error& e) {
        throw Error(ErrorKind::Parse, "channel map '" + text + "': " + e.what());
    }
}

std::string ChannelMap::to_hex() const {
    char buf[24];
    std::snprintf(buf, sizeof buf, "0x%010llX", static_cast<unsigned long long>(mask_));
    return buf;
}

bool ChannelMap::contains(int channel) const {
    return channel >= 0 && channel < kNumDataChannels && ((mask_ >> channel) & 1u);
}

int ChannelMap::index_of(int channel) const {
    if (!contains(channel)) return -1;
    const std::uint64_t below = mask_ & ((std::uint64_t{1} << channel) - 1);
    return std::popcount(below);
}

} // namespace blehop
