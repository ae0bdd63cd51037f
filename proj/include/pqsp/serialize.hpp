#pragma once

#include <filesystem>
#include <string>

#include <nlohmann/json_fwd.hpp>

#include "pqsp/grid.hpp"

namespace pqsp {

// Field CSV: header "r,value", one row per node, both columns written with
// shortest-round-trip formatting so read(write(f)) is bit exact. A JSON
// sidecar <path>.json carries the grid spec, the profile tag and any extra
// metadata handed in.
void write_field_csv(const std::filesystem::path& path, const RadialField& f,
                     const nlohmann::json* extra_metadata = nullptr);

RadialField read_field_csv(const std::filesystem::path& path);

// Atomic text write (temp file + rename).
void write_text_atomic(const std::filesystem::path& path,
                       const std::string& content);

std::string format_double(double v);  // shortest round-trip decimal
double parse_double(const std::string& s);

nlohmann::json grid_to_json(const RadialGrid& grid);
GridPtr grid_from_json(const nlohmann::json& j);
nlohmann::json profile_to_json(const Profile& p);
Profile profile_from_json(const nlohmann::json& j);

}  // namespace pqsp
