#pragma once

// Link-layer channel selection: CSA#1 (hop-increment recursion, period 37)
// and CSA#2 (per-event 16-bit PRN built from xor / permutation / MAM stages).

#include "blehop/channel_map.hpp"
#include "blehop/types.hpp"

#include <cstdint>
#include <optional>

namespace blehop {

inline constexpr int kMinHopIncrement = 5;
inline constexpr int kMaxHopIncrement = 16;

struct ConnectionParams {
    CsaVersion csa_version = CsaVersion::Csa2;
    std::int64_t c_int_ns = kMinIntervalNs;
    ChannelMap channel_map;
    AccessAddress access_address;
    int hop_increment = kMinHopIncrement; // CSA1 only
    Channel initial_channel = 0;          // CSA1 only: unmapped channel preceding event 0

    /// Throws Error(Config) on out-of-range fields.
    void validate() const;
};

// CSA#1

/// mod(prev + hop_increment, 37). Throws on out-of-range input.
Channel csa1_unmapped_channel(int prev_channel, int hop_increment);

/// Identity for allowed channels, else ordered[unmapped mod n_ch].
Channel remap_csa1(int unmapped, const ChannelMap& map);

/// Unmapped CSA1 channel of event `event`, seeded so that event 0 follows initial_channel.
/// Closed form of the recursion: mod(initial + (event + 1) * hop, 37).
Channel csa1_unmapped_for_event(Channel initial_channel, int hop_increment, std::int64_t event);

// CSA#2

ChannelIdentifier channel_identifier(AccessAddress aa);

/// Bit-reverses the low and the high byte independently.
std::uint16_t perm16(std::uint16_t x);

/// Multiply-add-modulo: (17x + ci) mod 2^16.
std::uint16_t mam(std::uint16_t x, ChannelIdentifier ci);

std::uint16_t prn_e(EventCounter k, ChannelIdentifier ci);

Channel csa2_unmapped_channel(EventCounter k, ChannelIdentifier ci);

/// Index into the ordered channel list used when the unmapped channel is excluded:
/// floor(n_ch * prn_e / 2^16).
int csa2_remap_index(std::uint16_t prn, int n_ch);

Channel remap_csa2(EventCounter k, ChannelIdentifier ci, const ChannelMap& map);

// Dispatch

struct ChannelSelection {
    Channel unmapped;
    Channel mapped;
    bool remapped() const { return unmapped != mapped; }
};

/// Channel used at event `event`. For CSA2 the event index is reduced onto the
/// 16-bit counter; CSA1 uses it as the number of hops since the seed.
ChannelSelection select_channel(const ConnectionParams& params, std::int64_t event);

inline Channel channel_for_event(const ConnectionParams& params, std::int64_t event) {
    return select_channel(params, event).mapped;
}

} // namespace blehop
