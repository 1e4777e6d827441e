#pragma once

#include <string>

#include "core/param.hpp"

namespace df {

// Parameter file layout: magic "DFLD1", u32 entry count, then per entry
// path length (u32 LE) + UTF-8 path + rank (u32) + extents (u32 each) +
// raw little-endian float64 data; a trailing list of frozen entry names
// (u32 count, then length-prefixed paths) closes the file.
void write_params(const ParamSet& params, const std::string& path);
ParamSet read_params(const std::string& path);

}  // namespace df
