#pragma once

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "mdsum/corpus.hpp"

namespace testing_support {

namespace fs = std::filesystem;

// Scratch directory removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::mt19937_64 rng{std::random_device{}()};
    path_ = fs::temp_directory_path() / ("mdsum_test_" + std::to_string(rng()));
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const fs::path& path() const { return path_; }
  std::string file(const std::string& name) const { return (path_ / name).string(); }

 private:
  fs::path path_;
};

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

// "p0 p1 ... p{n-1}"
inline std::string words(std::size_t n, const std::string& prefix = "w") {
  std::string out;
  for (std::size_t i = 0; i < n; ++i) {
    if (i) out += ' ';
    out += prefix + std::to_string(i);
  }
  return out;
}

inline mdsum::Example make_example(const std::string& id, const std::vector<std::string>& texts,
                                   std::vector<std::string> refs = {"reference summary"}) {
  mdsum::Example ex;
  ex.id = id;
  ex.dataset_tag = "synthetic";
  for (std::size_t i = 0; i < texts.size(); ++i) {
    ex.documents.push_back({"d" + std::to_string(i), texts[i], std::nullopt, std::nullopt});
  }
  ex.references = std::move(refs);
  return ex;
}

}  // namespace testing_support
