#pragma once

#include "aprm/types.hpp"

#include <filesystem>
#include <iosfwd>
#include <string>

namespace aprm {

// One JSON object per line:
//   {"id": str, "question": str, "steps": [{"features": [num...], "text": str?}],
//    "gold_first_error": int | null}
// A missing "gold_first_error" key means the trajectory carries no gold label.
Dataset load_dataset(const std::filesystem::path& path);
Dataset read_dataset(std::istream& in);

void save_dataset(const Dataset& data, const std::filesystem::path& path);
void write_dataset(const Dataset& data, std::ostream& out);

std::string trajectory_to_line(const Trajectory& traj);

} // namespace aprm
