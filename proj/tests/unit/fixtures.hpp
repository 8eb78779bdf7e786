#pragma once

#include <fstream>
#include <map>
#include <stdexcept>
#include <string>

namespace testing {

inline std::string fixture_path(const std::string& name) { return std::string(EVONAS_FIXTURE_DIR) + "/" + name; }

// "key value..." lines; the value is the rest of the line after the first space.
inline std::map<std::string, std::string> load_keyed_fixture(const std::string& name) {
  std::ifstream in(fixture_path(name));
  if (!in) throw std::runtime_error("missing fixture " + name);
  std::map<std::string, std::string> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto sp = line.find(' ');
    out[line.substr(0, sp)] = sp == std::string::npos ? "" : line.substr(sp + 1);
  }
  return out;
}

}  // namespace testing
