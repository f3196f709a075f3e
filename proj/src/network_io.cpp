#include "stabdro/network_io.hpp"

#include <fstream>

namespace stabdro {

namespace {

void read_sources(const nlohmann::json& j, const char* key, SourceKind kind, const char* prefix, GridModel& grid) {
  if (!j.contains(key)) return;
  int idx = 0;
  for (const auto& s : j.at(key)) {
    Source src;
    src.bus = s.at("bus").get<int>();
    src.reactance = s.at("Xg").get<double>();
    src.kind = kind;
    src.name = s.value("name", std::string(prefix) + std::to_string(++idx));
    grid.sources.push_back(src);
  }
}

}  // namespace

GridModel grid_from_json(const nlohmann::json& j) {
  GridModel grid;
  try {
    grid.buses = j.at("buses").get<std::vector<int>>();
    for (const auto& b : j.at("branches")) {
      grid.branches.push_back({b.at("from").get<int>(), b.at("to").get<int>(), b.at("x").get<double>()});
    }
    read_sources(j, "sgs", SourceKind::kSynchronous, "SG", grid);
    read_sources(j, "gfm", SourceKind::kGridForming, "GFM", grid);
    int idx = 0;
    for (const auto& u : j.value("gfl", nlohmann::json::array())) {
      GflUnit unit;
      unit.bus = u.at("bus").get<int>();
      unit.voltage = u.value("V", 1.0);
      unit.capacity = u.value("capacity", 1.0);
      unit.name = u.value("name", "GFL" + std::to_string(++idx));
      grid.gfl.push_back(unit);
    }
  } catch (const nlohmann::json::exception& e) {
    throw InvalidModelError(std::string("malformed network description: ") + e.what());
  }
  grid.validate();
  return grid;
}

nlohmann::json grid_to_json(const GridModel& grid) {
  nlohmann::json j;
  j["buses"] = grid.buses;
  j["branches"] = nlohmann::json::array();
  for (const auto& b : grid.branches) j["branches"].push_back({{"from", b.from}, {"to", b.to}, {"x", b.reactance}});
  j["sgs"] = nlohmann::json::array();
  j["gfm"] = nlohmann::json::array();
  for (const auto& s : grid.sources) {
    auto& dst = s.kind == SourceKind::kSynchronous ? j["sgs"] : j["gfm"];
    dst.push_back({{"bus", s.bus}, {"Xg", s.reactance}, {"name", s.name}});
  }
  j["gfl"] = nlohmann::json::array();
  for (const auto& u : grid.gfl) {
    j["gfl"].push_back({{"bus", u.bus}, {"V", u.voltage}, {"capacity", u.capacity}, {"name", u.name}});
  }
  return j;
}

nlohmann::json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open " + path);
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw InputError("cannot parse " + path + ": " + e.what());
  }
}

GridModel load_grid(const std::string& path) { return grid_from_json(read_json_file(path)); }

}  // namespace stabdro
