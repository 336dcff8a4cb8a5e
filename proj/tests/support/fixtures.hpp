#pragma once

#include <algorithm>
#include <filesystem>
#include <string>
#include <vector>

namespace fixtures {

inline const std::filesystem::path dir = VISINF_JPEG_FIXTURES;

// Baseline JPEG fixtures that have a reference-decoded PPM next to them.
inline std::vector<std::string> reference_names() {
  std::vector<std::string> names;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.path().extension() != ".jpg") continue;
    auto ppm = e.path();
    ppm.replace_extension(".ppm");
    if (std::filesystem::exists(ppm)) names.push_back(e.path().stem().string());
  }
  std::sort(names.begin(), names.end());
  return names;
}

inline std::filesystem::path jpg(const std::string& name) { return dir / (name + ".jpg"); }
inline std::filesystem::path ppm(const std::string& name) { return dir / (name + ".ppm"); }

}  // namespace fixtures
