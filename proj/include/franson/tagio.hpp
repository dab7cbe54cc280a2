#pragma once

#include <string>
#include <vector>

#include "franson/timetag.hpp"

namespace franson {

enum class TagFormat { binary, csv };

// Binary layout (little-endian):
//   header, 16 bytes: magic "FTAG" | u16 version (=1) | u8 party |
//                     u8 reserved (=0) | i64 epoch_ps
//   records, 9 bytes each: u8 channel | i64 timestamp_ps
//
// CSV layout: header line "channel,timestamp_ps", then one
// "TOA_H,1234"-style row per tag. CSV carries no party/epoch metadata; the
// reader takes them as hints (binary ignores the hints and trusts its
// header). Both writers are deterministic byte for byte.
inline constexpr std::uint16_t kTagFormatVersion = 1;

TagStream read_tags(const std::string& path, TagFormat format,
                    Party csv_party = Party::alice,
                    std::int64_t csv_epoch_ps = 0);

void write_tags(const TagStream& stream, const std::string& path,
                TagFormat format);

// Merges already-sorted streams of the same party and epoch into one sorted
// stream. A (timestamp, channel) duplicate across inputs is a data error,
// as is mixing parties or epochs.
TagStream merge_sorted(const std::vector<const TagStream*>& streams);
TagStream merge_sorted(const std::vector<TagStream>& streams);

}  // namespace franson
