#pragma once

#include <gtest/gtest.h>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <unistd.h>

#include "calib/error.hpp"
#include "calib/random.hpp"
#include "calib/se3.hpp"

namespace calib::test {

// Scratch directory removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("calib_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  std::string str() const { return path_.string(); }
  std::string file(const std::string& rel) const { return (path_ / rel).string(); }

 private:
  std::filesystem::path path_;
};

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

inline Vec3 random_unit(Rng& rng) {
  std::normal_distribution<double> n;
  Vec3 v(n(rng), n(rng), n(rng));
  return v.normalized();
}

inline Mat3 random_rotation(Rng& rng) {
  std::uniform_real_distribution<double> a(0.0, kPi);
  return exp_so3(random_unit(rng) * a(rng));
}

inline Extrinsic random_pose(Rng& rng, double trans_scale = 1.0) {
  std::uniform_real_distribution<double> u(-trans_scale, trans_scale);
  return Extrinsic(random_rotation(rng), Vec3(u(rng), u(rng), u(rng)));
}

// Runs `f` and returns the ErrorCode it threw; fails the test otherwise.
template <class F>
ErrorCode error_code_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "expected calib::Error";
  return ErrorCode::kInvalidArgument;
}

}  // namespace calib::test
