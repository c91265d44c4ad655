#pragma once

#include <filesystem>
#include <random>
#include <string>

#include "doctest.h"
#include "nestery/error.hpp"
#include "nestery/vm.hpp"

namespace testing {

// Fresh directory under the system temp dir, removed on scope exit.
class TempDir {
 public:
  TempDir() {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("nestery-test-" + std::to_string(rd()) + "-" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline nestery::VmDefinition make_def(std::uint64_t id, nestery::ResourceVector r, int level = 1,
                                      std::string name = {}) {
  nestery::VmDefinition d;
  d.uuid = nestery::Uuid::from_u64(id);
  d.name = name.empty() ? "vm" + std::to_string(id) : std::move(name);
  d.resources = r;
  d.image_ref = "app.qcow2";
  d.level = level;
  return d;
}

}  // namespace testing

// Runs `expr` and checks it throws nestery::Error with the given code.
#define CHECK_ERROR(expr, error_code)                                  \
  do {                                                                 \
    bool thrown_ = false;                                              \
    try {                                                              \
      (void)(expr);                                                    \
    } catch (const nestery::Error& e_) {                               \
      thrown_ = true;                                                  \
      CHECK_MESSAGE(e_.code() == (error_code), e_.what());             \
    }                                                                  \
    CHECK_MESSAGE(thrown_, "expected " #error_code " from " #expr);    \
  } while (0)

#define CHECK_ERROR_DETAIL(expr, error_code, expected_detail)          \
  do {                                                                 \
    bool thrown_ = false;                                              \
    try {                                                              \
      (void)(expr);                                                    \
    } catch (const nestery::Error& e_) {                               \
      thrown_ = true;                                                  \
      CHECK_MESSAGE(e_.code() == (error_code), e_.what());             \
      CHECK(e_.detail() == (expected_detail));                         \
    }                                                                  \
    CHECK_MESSAGE(thrown_, "expected " #error_code " from " #expr);    \
  } while (0)
