#pragma once

#include <cstdint>
#include <string_view>
#include <vector>

namespace franson {

enum class Party : std::uint8_t { alice = 0, bob = 1 };

// Detector channels of one party. The arrival-time module resolves
// polarization (H/V behind a PBS), the superposition module resolves the
// interferometer output port: transmitted -> plus, reflected -> minus.
enum class Channel : std::uint8_t {
  toa_h = 0,
  toa_v = 1,
  tsup_plus = 2,
  tsup_minus = 3,
};

inline constexpr int kNumChannels = 4;

inline bool is_toa(Channel c) {
  return c == Channel::toa_h || c == Channel::toa_v;
}
inline bool is_tsup(Channel c) { return !is_toa(c); }

// +1 for the transmitted port, -1 for the reflected port.
inline int tsup_sign(Channel c) { return c == Channel::tsup_plus ? +1 : -1; }

std::string_view channel_name(Channel c);
bool channel_from_name(std::string_view name, Channel& out);

struct TimeTag {
  std::int64_t timestamp_ps = 0;
  Channel channel = Channel::toa_h;
  Party party = Party::alice;
};

// One party's detection record, column-wise so that the hot paths (sorting,
// correlation, frame walks) touch a dense int64 array. Tags are strictly
// ordered by (timestamp, channel); an exact duplicate of both fields is
// illegal since one detector cannot fire twice in the same picosecond.
// Timestamps are picoseconds relative to epoch_ps and must be non-negative.
struct TagStream {
  Party party = Party::alice;
  std::int64_t epoch_ps = 0;
  std::vector<std::int64_t> ts;
  std::vector<std::uint8_t> ch;

  std::size_t size() const { return ts.size(); }
  bool empty() const { return ts.empty(); }

  void push_back(std::int64_t t, Channel c) {
    ts.push_back(t);
    ch.push_back(static_cast<std::uint8_t>(c));
  }

  TimeTag at(std::size_t i) const {
    return TimeTag{ts[i], static_cast<Channel>(ch[i]), party};
  }

  void reserve(std::size_t n) {
    ts.reserve(n);
    ch.reserve(n);
  }

  // Throws data_error naming the first offending record if the stream is not
  // strictly (timestamp, channel)-sorted, holds a duplicate, a negative
  // timestamp, or an out-of-range channel byte.
  void validate() const;

  // Restores the ordering invariant in place: sorts by (timestamp, channel).
  // Duplicates still trip validate() afterwards; callers that can produce
  // them must resolve duplicates themselves.
  void sort();

  bool operator==(const TagStream& o) const = default;
};

// Index range [first, last) of tags with timestamp in [t0_ps, t1_ps).
struct TagRange {
  std::size_t first = 0;
  std::size_t last = 0;
  std::size_t size() const { return last - first; }
};

TagRange slice(const TagStream& s, std::int64_t t0_ps, std::int64_t t1_ps);

// Cleanup after a near-monotone time transform: sorts channels within each
// equal-timestamp run, drops (timestamp, channel) duplicates keeping the
// first (1 ps detector dead time), and drops negative timestamps. Assumes
// timestamps themselves are already non-decreasing.
void restore_stream_order(TagStream& s);

}  // namespace franson
