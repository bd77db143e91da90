#pragma once

// Golden-file comparison. Set CAPSGRAM_UPDATE_GOLDEN=1 to (re)write the
// expected files from the current output after verifying it by hand.

#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

namespace capsgram::golden {

inline std::string path(const std::string& name) { return std::string(CAPSGRAM_GOLDEN_DIR) + "/" + name; }

inline void expect_matches(const std::string& name, const std::string& actual) {
  if (const char* update = std::getenv("CAPSGRAM_UPDATE_GOLDEN"); update && std::string(update) == "1") {
    std::ofstream(path(name), std::ios::binary) << actual;
    return;
  }
  std::ifstream in(path(name), std::ios::binary);
  ASSERT_TRUE(in.good()) << "missing golden file " << path(name);
  std::stringstream ss;
  ss << in.rdbuf();
  EXPECT_EQ(ss.str(), actual) << "golden mismatch: " << name;
}

}  // namespace capsgram::golden
