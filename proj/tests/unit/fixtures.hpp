#pragma once

#include <atomic>
#include <filesystem>
#include <string>

#include <unistd.h>

#include "sct/model.hpp"
#include "synthetic.hpp"

namespace sct::testing {

inline ModelConfig small_config() {
  ModelConfig c;
  c.M = 8;
  c.D = 10;
  c.optimizer.max_iter = 40;
  c.tm_optimizer.max_iter = 40;
  c.max_conditioning = 6;
  return c;
}

/// 6 x 6 skewed field with 24 training and 6 test replicates.
inline const SyntheticField& small_field() {
  static const SyntheticField f = skewed_field(21, 24, 6, 6, 6);
  return f;
}

inline const FittedModel& small_model() {
  static const FittedModel m = FittedModel::fit(small_field().train, small_config());
  return m;
}

/// Unique path under the system temp directory, removed on destruction.
class TempFile {
 public:
  explicit TempFile(const std::string& suffix) {
    static std::atomic<int> counter{0};
    path_ = (std::filesystem::temp_directory_path() /
             ("sct_unit_" + std::to_string(::getpid()) + "_" + std::to_string(counter++) + suffix))
                .string();
  }
  ~TempFile() { std::filesystem::remove(path_); }
  TempFile(const TempFile&) = delete;
  TempFile& operator=(const TempFile&) = delete;
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

}  // namespace sct::testing
