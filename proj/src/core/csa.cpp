#include "blehop/csa.hpp"

namespace blehop {

namespace {

std::int64_t floor_mod(std::int64_t a, std::int64_t m) {
    const auto r = a % m;
    return r < 0 ? r + m : r;
}

std::uint8_t reverse_byte(std::uint8_t b) {
    b = static_cast<std::uint8_t>(((b & 0xF0u) >> 4) | ((b & 0x0Fu) << 4));
    b = static_cast<std::uint8_t>(((b & 0xCCu) >> 2) | ((b & 0x33u) << 2));
    b = static_cast<std::uint8_t>(((b & 0xAAu) >> 1) | ((b & 0x55u) << 1));
    return b;
}

} // namespace

void ConnectionParams::validate() const {
    if (c_int_ns < kMinIntervalNs || c_int_ns > kMaxIntervalNs || c_int_ns % kSlotNs != 0) {
        throw Error(ErrorKind::Config, "connection interval " + std::to_string(c_int_ns) +
                                           " ns is not a multiple of 1.25 ms in [7.5 ms, 4 s]");
    }
    if (csa_version == CsaVersion::Csa1) {
        if (hop_increment < kMinHopIncrement || hop_increment > kMaxHopIncrement) {
            throw Error(ErrorKind::Config,
                        "hop increment " + std::to_string(hop_increment) + " outside [5, 16]");
        }
        if (initial_channel >= kNumDataChannels) {
            throw Error(ErrorKind::Config, "initial channel must be a data channel");
        }
    }
}

Channel csa1_unmapped_channel(int prev_channel, int hop_increment) {
    if (prev_channel < 0 || prev_channel >= kNumDataChannels) {
        throw Error(ErrorKind::InvalidArgument, "previous channel outside 0..36");
    }
    if (hop_increment < kMinHopIncrement || hop_increment > kMaxHopIncrement) {
        throw Error(ErrorKind::InvalidArgument, "hop increment outside [5, 16]");
    }
    return static_cast<Channel>((prev_channel + hop_increment) % kNumDataChannels);
}

Channel remap_csa1(int unmapped, const ChannelMap& map) {
    if (unmapped < 0 || unmapped >= kNumDataChannels) {
        throw Error(ErrorKind::InvalidArgument, "unmapped channel outside 0..36");
    }
    if (map.contains(unmapped)) return static_cast<Channel>(unmapped);
    return map.at(unmapped % map.size());
}

Channel csa1_unmapped_for_event(Channel initial_channel, int hop_increment, std::int64_t event) {
    // (event + 1) * hop only matters mod 37, so reduce first to stay far from overflow.
    const auto steps = floor_mod(event + 1, kNumDataChannels);
    return static_cast<Channel>(
        floor_mod(initial_channel + steps * hop_increment, kNumDataChannels));
}

ChannelIdentifier channel_identifier(AccessAddress aa) {
    return ChannelIdentifier{static_cast<std::uint16_t>(aa.high() ^ aa.low())};
}

std::uint16_t perm16(std::uint16_t x) {
    const auto lo = reverse_byte(static_cast<std::uint8_t>(x & 0xFFu));
    const auto hi = reverse_byte(static_cast<std::uint8_t>(x >> 8));
    return static_cast<std::uint16_t>((hi << 8) | lo);
}

std::uint16_t mam(std::uint16_t x, ChannelIdentifier ci) {
    const std::uint32_t wide = 17u * static_cast<std::uint32_t>(x) + ci.value;
    return static_cast<std::uint16_t>(wide & 0xFFFFu);
}

std::uint16_t prn_e(EventCounter k, ChannelIdentifier ci) {
    std::uint16_t v = static_cast<std::uint16_t>(k.value ^ ci.value);
    for (int round = 0; round < 3; ++round) v = mam(perm16(v), ci);
    return static_cast<std::uint16_t>(v ^ ci.value);
}

Channel csa2_unmapped_channel(EventCounter k, ChannelIdentifier ci) {
    return static_cast<Channel>(prn_e(k, ci) % kNumDataChannels);
}

int csa2_remap_index(std::uint16_t prn, int n_ch) {
    return static_cast<int>((static_cast<std::uint32_t>(n_ch) * prn) >> 16);
}

Channel remap_csa2(EventCounter k, ChannelIdentifier ci, const ChannelMap& map) {
    const auto prn = prn_e(k, ci);
    const auto unmapped = static_cast<Channel>(prn % kNumDataChannels);
    if (map.contains(unmapped)) return unmapped;
    return map.at(csa2_remap_index(prn, map.size()));
}

ChannelSelection select_channel(const ConnectionParams& params, std::int64_t event) {
    if (params.csa_version == CsaVersion::Csa1) {
        const auto unmapped =
            csa1_unmapped_for_event(params.initial_channel, params.hop_increment, event);
        return {unmapped, remap_csa1(unmapped, params.channel_map)};
    }
    const auto ci = channel_identifier(params.access_address);
    const auto k = EventCounter::from_index(event);
    const auto prn = prn_e(k, ci);
    const auto unmapped = static_cast<Channel>(prn % kNumDataChannels);
    const auto& map = params.channel_map;
    if (map.contains(unmapped)) return {unmapped, unmapped};
    return {unmapped, map.at(csa2_remap_index(prn, map.size()))};
}

} // namespace blehop
