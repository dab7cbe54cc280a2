#include "franson/tagio.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>
#include <utility>

#include "franson/errors.hpp"

namespace franson {

namespace {

constexpr char kMagic[4] = {'F', 'T', 'A', 'G'};
constexpr std::size_t kHeaderBytes = 16;
constexpr std::size_t kRecordBytes = 9;

std::uint64_t load_le64(const unsigned char* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

void store_le64(unsigned char* p, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) p[i] = static_cast<unsigned char>(v >> (8 * i));
}

[[noreturn]] void fail(const std::string& path, const std::string& what) {
  throw data_error(path + ": " + what);
}

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

TagStream read_binary(const std::string& path) {
  FilePtr f(std::fopen(path.c_str(), "rb"));
  if (!f) fail(path, "cannot open for reading");

  unsigned char header[kHeaderBytes];
  if (std::fread(header, 1, kHeaderBytes, f.get()) != kHeaderBytes)
    fail(path, "truncated header");
  if (std::memcmp(header, kMagic, 4) != 0) fail(path, "bad magic");
  std::uint16_t version =
      static_cast<std::uint16_t>(header[4] | (header[5] << 8));
  if (version != kTagFormatVersion)
    fail(path, "unsupported version " + std::to_string(version));
  if (header[6] > 1)
    fail(path, "bad party byte " + std::to_string(header[6]));

  TagStream s;
  s.party = static_cast<Party>(header[6]);
  s.epoch_ps = static_cast<std::int64_t>(load_le64(header + 8));

  constexpr std::size_t kChunkRecords = 1 << 16;
  std::vector<unsigned char> buf(kChunkRecords * kRecordBytes);
  std::int64_t prev_ts = -1;
  std::uint8_t prev_ch = 0;
  std::size_t record = 0;
  while (true) {
    std::size_t got = std::fread(buf.data(), 1, buf.size(), f.get());
    if (got == 0) break;
    if (got % kRecordBytes != 0)
      fail(path, "truncated record at byte " +
                     std::to_string(kHeaderBytes + record * kRecordBytes +
                                    (got / kRecordBytes) * kRecordBytes));
    std::size_t n = got / kRecordBytes;
    s.reserve(s.size() + n);
    for (std::size_t i = 0; i < n; ++i, ++record) {
      const unsigned char* p = buf.data() + i * kRecordBytes;
      std::uint8_t ch = p[0];
      std::size_t byte_off = kHeaderBytes + record * kRecordBytes;
      if (ch >= kNumChannels)
        fail(path, "bad channel " + std::to_string(ch) + " at byte " +
                       std::to_string(byte_off) + " (record " +
                       std::to_string(record) + ")");
      std::int64_t ts = static_cast<std::int64_t>(load_le64(p + 1));
      if (ts < 0)
        fail(path, "negative timestamp at record " + std::to_string(record));
      if (ts < prev_ts || (ts == prev_ts && ch <= prev_ch)) {
        if (ts == prev_ts && ch == prev_ch)
          fail(path, "duplicate (timestamp, channel) at record " +
                         std::to_string(record));
        fail(path, "record " + std::to_string(record) +
                       " out of (timestamp, channel) order");
      }
      prev_ts = ts;
      prev_ch = ch;
      s.ts.push_back(ts);
      s.ch.push_back(ch);
    }
    if (got < buf.size()) break;
  }
  return s;
}

void write_binary(const TagStream& s, const std::string& path) {
  FilePtr f(std::fopen(path.c_str(), "wb"));
  if (!f) fail(path, "cannot open for writing");

  unsigned char header[kHeaderBytes];
  std::memcpy(header, kMagic, 4);
  header[4] = static_cast<unsigned char>(kTagFormatVersion & 0xff);
  header[5] = static_cast<unsigned char>(kTagFormatVersion >> 8);
  header[6] = static_cast<unsigned char>(s.party);
  header[7] = 0;
  store_le64(header + 8, static_cast<std::uint64_t>(s.epoch_ps));
  if (std::fwrite(header, 1, kHeaderBytes, f.get()) != kHeaderBytes)
    fail(path, "write failed");

  constexpr std::size_t kChunkRecords = 1 << 16;
  std::vector<unsigned char> buf(kChunkRecords * kRecordBytes);
  std::size_t filled = 0;
  auto flush = [&]() {
    if (filled &&
        std::fwrite(buf.data(), 1, filled, f.get()) != filled)
      fail(path, "write failed");
    filled = 0;
  };
  for (std::size_t i = 0; i < s.size(); ++i) {
    unsigned char* p = buf.data() + filled;
    p[0] = s.ch[i];
    store_le64(p + 1, static_cast<std::uint64_t>(s.ts[i]));
    filled += kRecordBytes;
    if (filled == buf.size()) flush();
  }
  flush();
  if (std::fflush(f.get()) != 0) fail(path, "write failed");
}

TagStream read_csv(const std::string& path, Party party,
                   std::int64_t epoch_ps) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(path, "cannot open for reading");

  TagStream s;
  s.party = party;
  s.epoch_ps = epoch_ps;

  std::string line;
  if (!std::getline(in, line) || line != "channel,timestamp_ps")
    fail(path, "bad or missing header line (want \"channel,timestamp_ps\")");

  std::size_t lineno = 1;
  std::int64_t prev_ts = -1;
  std::uint8_t prev_ch = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto bad = [&](const std::string& why) {
      fail(path, "line " + std::to_string(lineno) + ": " + why);
    };
    auto comma = line.find(',');
    if (comma == std::string::npos) bad("expected \"channel,timestamp_ps\"");
    if (line.find(',', comma + 1) != std::string::npos) bad("too many fields");
    Channel ch;
    if (!channel_from_name(std::string_view(line).substr(0, comma), ch))
      bad("unknown channel \"" + line.substr(0, comma) + "\"");
    const char* first = line.data() + comma + 1;
    const char* last = line.data() + line.size();
    std::int64_t ts = 0;
    auto [ptr, ec] = std::from_chars(first, last, ts);
    if (ec != std::errc() || ptr != last) bad("bad timestamp field");
    if (ts < 0) bad("negative timestamp");
    std::uint8_t chb = static_cast<std::uint8_t>(ch);
    if (ts < prev_ts || (ts == prev_ts && chb <= prev_ch)) {
      if (ts == prev_ts && chb == prev_ch) bad("duplicate (timestamp, channel)");
      bad("out of (timestamp, channel) order");
    }
    prev_ts = ts;
    prev_ch = chb;
    s.push_back(ts, ch);
  }
  return s;
}

void write_csv(const TagStream& s, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(path, "cannot open for writing");
  out << "channel,timestamp_ps\n";
  for (std::size_t i = 0; i < s.size(); ++i)
    out << channel_name(static_cast<Channel>(s.ch[i])) << ',' << s.ts[i]
        << '\n';
  if (!out) fail(path, "write failed");
}

}  // namespace

std::string_view channel_name(Channel c) {
  switch (c) {
    case Channel::toa_h: return "TOA_H";
    case Channel::toa_v: return "TOA_V";
    case Channel::tsup_plus: return "TSUP_PLUS";
    case Channel::tsup_minus: return "TSUP_MINUS";
  }
  return "?";
}

bool channel_from_name(std::string_view name, Channel& out) {
  for (int i = 0; i < kNumChannels; ++i) {
    Channel c = static_cast<Channel>(i);
    if (name == channel_name(c)) {
      out = c;
      return true;
    }
  }
  return false;
}

void TagStream::validate() const {
  if (ts.size() != ch.size())
    throw data_error("tag stream column length mismatch");
  for (std::size_t i = 0; i < ts.size(); ++i) {
    if (ch[i] >= kNumChannels)
      throw data_error("tag " + std::to_string(i) + ": bad channel " +
                       std::to_string(ch[i]));
    if (ts[i] < 0)
      throw data_error("tag " + std::to_string(i) + ": negative timestamp");
    if (i > 0) {
      if (ts[i] < ts[i - 1] || (ts[i] == ts[i - 1] && ch[i] < ch[i - 1]))
        throw data_error("tag " + std::to_string(i) +
                         ": out of (timestamp, channel) order");
      if (ts[i] == ts[i - 1] && ch[i] == ch[i - 1])
        throw data_error("tag " + std::to_string(i) +
                         ": duplicate (timestamp, channel)");
    }
  }
}

void TagStream::sort() {
  std::vector<std::pair<std::int64_t, std::uint8_t>> zip(ts.size());
  for (std::size_t i = 0; i < ts.size(); ++i) zip[i] = {ts[i], ch[i]};
  std::sort(zip.begin(), zip.end());
  for (std::size_t i = 0; i < zip.size(); ++i) {
    ts[i] = zip[i].first;
    ch[i] = zip[i].second;
  }
}

void restore_stream_order(TagStream& s) {
  std::size_t n = s.ts.size();
  std::size_t w = 0;
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i + 1;
    while (j < n && s.ts[j] == s.ts[i]) ++j;
    if (s.ts[i] >= 0) {
      if (j > i + 1)
        std::sort(s.ch.begin() + static_cast<std::ptrdiff_t>(i),
                  s.ch.begin() + static_cast<std::ptrdiff_t>(j));
      for (std::size_t k = i; k < j; ++k) {
        if (k > i && s.ch[k] == s.ch[k - 1]) continue;
        s.ts[w] = s.ts[k];
        s.ch[w] = s.ch[k];
        ++w;
      }
    }
    i = j;
  }
  s.ts.resize(w);
  s.ch.resize(w);
}

TagRange slice(const TagStream& s, std::int64_t t0_ps, std::int64_t t1_ps) {
  TagRange r;
  r.first = static_cast<std::size_t>(
      std::lower_bound(s.ts.begin(), s.ts.end(), t0_ps) - s.ts.begin());
  r.last = static_cast<std::size_t>(
      std::lower_bound(s.ts.begin() + static_cast<std::ptrdiff_t>(r.first),
                       s.ts.end(), t1_ps) -
      s.ts.begin());
  return r;
}

TagStream read_tags(const std::string& path, TagFormat format,
                    Party csv_party, std::int64_t csv_epoch_ps) {
  return format == TagFormat::binary ? read_binary(path)
                                     : read_csv(path, csv_party, csv_epoch_ps);
}

void write_tags(const TagStream& stream, const std::string& path,
                TagFormat format) {
  if (format == TagFormat::binary)
    write_binary(stream, path);
  else
    write_csv(stream, path);
}

TagStream merge_sorted(const std::vector<const TagStream*>& streams) {
  TagStream out;
  if (streams.empty()) return out;
  out.party = streams.front()->party;
  out.epoch_ps = streams.front()->epoch_ps;
  std::size_t total = 0;
  for (const auto* s : streams) {
    if (s->party != out.party)
      throw data_error("merge_sorted: streams from different parties");
    if (s->epoch_ps != out.epoch_ps)
      throw data_error("merge_sorted: streams with different epochs");
    s->validate();
    total += s->size();
  }
  out.reserve(total);

  // Small input counts in practice, so a linear scan over stream heads is
  // simpler than a heap and just as fast.
  std::vector<std::size_t> pos(streams.size(), 0);
  std::int64_t prev_ts = -1;
  std::uint8_t prev_ch = 0;
  bool have_prev = false;
  while (out.size() < total) {
    int best = -1;
    for (std::size_t k = 0; k < streams.size(); ++k) {
      if (pos[k] >= streams[k]->size()) continue;
      if (best < 0) {
        best = static_cast<int>(k);
        continue;
      }
      auto tb = streams[best]->ts[pos[best]];
      auto cb = streams[best]->ch[pos[best]];
      auto tk = streams[k]->ts[pos[k]];
      auto ck = streams[k]->ch[pos[k]];
      if (tk < tb || (tk == tb && ck < cb)) best = static_cast<int>(k);
    }
    auto t = streams[best]->ts[pos[best]];
    auto c = streams[best]->ch[pos[best]];
    if (have_prev && t == prev_ts && c == prev_ch)
      throw data_error("merge_sorted: duplicate (timestamp, channel) across "
                       "streams at timestamp " +
                       std::to_string(t));
    out.ts.push_back(t);
    out.ch.push_back(c);
    prev_ts = t;
    prev_ch = c;
    have_prev = true;
    ++pos[best];
  }
  return out;
}

TagStream merge_sorted(const std::vector<TagStream>& streams) {
  std::vector<const TagStream*> ptrs;
  ptrs.reserve(streams.size());
  for (const auto& s : streams) ptrs.push_back(&s);
  return merge_sorted(ptrs);
}

}  // namespace franson
