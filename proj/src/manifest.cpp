#include "franson/manifest.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "franson/errors.hpp"

namespace franson {

bool RunManifest::has_stage(const std::string& name) const {
  return find_stage(name) != nullptr;
}

const StageRecord* RunManifest::find_stage(const std::string& name) const {
  for (const auto& s : stages)
    if (s.name == name) return &s;
  return nullptr;
}

std::string fnv1a_hex(const void* data, std::size_t len) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", (unsigned long long)h);
  return buf;
}

std::string digest_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw data_error("cannot open for digest: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  const std::string bytes = ss.str();
  return fnv1a_hex(bytes.data(), bytes.size());
}

void save_manifest(const std::string& path, const RunManifest& m) {
  nlohmann::json j;
  j["tool_version"] = m.tool_version;
  j["seed"] = m.seed;
  j["scenario"] = m.scenario;
  j["stages"] = nlohmann::json::array();
  for (const auto& st : m.stages) {
    nlohmann::json js;
    js["name"] = st.name;
    js["wall_ms"] = st.wall_ms;
    js["inputs"] = nlohmann::json::array();
    for (const auto& f : st.inputs)
      js["inputs"].push_back({{"path", f.path}, {"digest", f.digest}});
    js["outputs"] = nlohmann::json::array();
    for (const auto& f : st.outputs)
      js["outputs"].push_back({{"path", f.path}, {"digest", f.digest}});
    j["stages"].push_back(std::move(js));
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw data_error("cannot write manifest: " + path);
  out << j.dump(2) << '\n';
  if (!out) throw data_error("short write on manifest: " + path);
}

RunManifest load_manifest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw data_error("cannot open manifest: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw data_error("malformed manifest " + path + ": " + e.what());
  }
  RunManifest m;
  try {
    m.tool_version = j.at("tool_version").get<std::string>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.scenario = j.at("scenario").get<std::string>();
    for (const auto& js : j.at("stages")) {
      StageRecord st;
      st.name = js.at("name").get<std::string>();
      st.wall_ms = js.at("wall_ms").get<double>();
      for (const auto& f : js.at("inputs"))
        st.inputs.push_back({f.at("path").get<std::string>(),
                             f.at("digest").get<std::string>()});
      for (const auto& f : js.at("outputs"))
        st.outputs.push_back({f.at("path").get<std::string>(),
                              f.at("digest").get<std::string>()});
      m.stages.push_back(std::move(st));
    }
  } catch (const nlohmann::json::exception& e) {
    throw data_error("manifest " + path + " missing fields: " + e.what());
  }
  return m;
}

}  // namespace franson
