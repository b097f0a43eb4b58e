#pragma once

#include <string>

#include "genealogy/feller.hpp"
#include "genealogy/spatial.hpp"
#include "genealogy/verification.hpp"

namespace genealogy {

// Ums document: {"ceiling": c, "trees": [node...]},
// node = {"h": height, "children": [node...]} | {"mass": m}.
// Doubles round-trip bit-exactly.
std::string ums_to_json(const Ums& u);
Ums ums_from_json(const std::string& text);

// MarkedUms: leaf nodes additionally carry
// {"mark": site} or {"mark": {"initial": s, "times": [...], "sites": [...]}}.
std::string marked_ums_to_json(const MarkedUms& u);
MarkedUms marked_ums_from_json(const std::string& text);

// Event log: {"n": N, "horizon": t, "particles":
//   [{"id","parent","founder","birth","death","split"}...]}
std::string genealogy_to_json(const Genealogy& g);

}  // namespace genealogy
