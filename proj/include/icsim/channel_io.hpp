#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "types.hpp"

namespace icsim::io {

// Channel container, all fields little-endian:
//   "ICCH" | u32 version | u32 K | K*K x (u32 N[k], u32 M[l]) for (k,l) in
//   row-major order | entries of every H[k][l] (k-major, then l), each matrix
//   row-major as interleaved f64 (re, im) | u64 realization seed
inline constexpr std::uint32_t kChannelFormatVersion = 1;

std::vector<std::uint8_t> encode_channels(const ChannelSet& ch);
ChannelSet decode_channels(const std::vector<std::uint8_t>& bytes);

void write_channels(const std::filesystem::path& path, const ChannelSet& ch);
ChannelSet read_channels(const std::filesystem::path& path);

/// Human-readable mirror of the binary container, for debugging only.
std::string channels_to_json(const ChannelSet& ch);
ChannelSet channels_from_json(const std::string& text);

// Filter container with the same layout conventions:
//   "ICBF" | u32 version | u32 K | K x (u32 rows, u32 cols) | entries
// Used to persist the random initial transmit filters of a trial.
std::vector<std::uint8_t> encode_filters(const std::vector<CMatrix>& filters);
std::vector<CMatrix> decode_filters(const std::vector<std::uint8_t>& bytes);

void write_filters(const std::filesystem::path& path, const std::vector<CMatrix>& filters);
std::vector<CMatrix> read_filters(const std::filesystem::path& path);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);

}  // namespace icsim::io
