#pragma once

#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "franson/timetag.hpp"

namespace testutil {

// Self-deleting scratch directory under the system temp root.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<unsigned> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("franson_" + tag + "_" + std::to_string(::getpid()) + "_" +
             std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::string file(const std::string& name) const {
    return (path_ / name).string();
  }

 private:
  std::filesystem::path path_;
};

inline std::vector<unsigned char> slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  return std::vector<unsigned char>(std::istreambuf_iterator<char>(in),
                                    std::istreambuf_iterator<char>());
}

inline void spit(const std::string& path,
                 const std::vector<unsigned char>& bytes) {
  std::ofstream out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

inline void spit_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

// Independent ordering oracle: collect, sort by (timestamp, channel) with a
// plain comparator, rebuild. Used to cross-check merge_sorted and stream
// sorting without going through the production code path.
inline franson::TagStream sorted_oracle(
    const std::vector<franson::TagStream>& streams) {
  franson::TagStream out;
  if (!streams.empty()) {
    out.party = streams.front().party;
    out.epoch_ps = streams.front().epoch_ps;
  }
  std::vector<std::pair<std::int64_t, std::uint8_t>> all;
  for (const auto& s : streams)
    for (std::size_t i = 0; i < s.size(); ++i) all.emplace_back(s.ts[i], s.ch[i]);
  std::sort(all.begin(), all.end());
  for (auto& [t, c] : all) out.push_back(t, static_cast<franson::Channel>(c));
  return out;
}

}  // namespace testutil
