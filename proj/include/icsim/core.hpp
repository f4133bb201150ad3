#pragma once

#include <cstdint>

#include "types.hpp"

namespace icsim {

/// One i.i.d. CN(0,1) channel realization. The realization seed is derived
/// from (master_seed, trial_index) only, so the draw does not depend on which
/// other trials ran before it.
ChannelSet generate_channels(const SystemConfig& config, std::uint64_t trial_index);

/// Uplink network: H'[k][l] = H[l][k]^H.
ChannelSet reciprocal_channels(const ChannelSet& ch);

/// Q_k, B_k, R_k per user and R'_{k,l}, R_{k,l}, Q_{k,l}, B_{k,l} per stream.
/// B_{k,l} is built as B_k plus the user's other streams, so for single-stream
/// users B_{k,l} and B_k are bit-identical.
CovarianceBundle assemble_covariances(const ChannelSet& ch, const BeamformerSet& bf,
                                      const PowerAllocation& pw);

/// Throws ConfigError unless filters and powers fit the channel shapes.
void check_shapes(const ChannelSet& ch, const BeamformerSet& bf, const PowerAllocation& pw);

/// Stream counts d[k] of a filter set.
std::vector<int> stream_counts(const BeamformerSet& bf);

/// FNV-1a over the binary channel serialization; used to verify that rival
/// schemes consumed identical inputs.
std::uint64_t channel_hash(const ChannelSet& ch);
std::uint64_t filters_hash(const std::vector<CMatrix>& filters);

}  // namespace icsim
