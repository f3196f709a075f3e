#pragma once

#include <string>

#include <json.hpp>

#include "stabdro/grid.hpp"

namespace stabdro {

/// {buses, branches:[{from,to,x}], sgs:[{bus,Xg}], gfm:[{bus,Xg}], gfl:[{bus,V,capacity}]}
/// V defaults to 1 and capacity to 1. Throws InvalidModelError.
GridModel grid_from_json(const nlohmann::json& j);
nlohmann::json grid_to_json(const GridModel& grid);

/// Throws InputError when the file cannot be read.
GridModel load_grid(const std::string& path);

/// Reads and parses a JSON file; InputError on a missing or malformed file.
nlohmann::json read_json_file(const std::string& path);

}  // namespace stabdro
