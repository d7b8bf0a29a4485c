// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace lsc {

template <typename Real>
using MatX = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Real>
using VecX = Eigen::Matrix<Real, Eigen::Dynamic, 1>;

using MatF = MatX<float>;
using MatD = MatX<double>;
using VecF = VecX<float>;
using VecD = VecX<double>;

/// Error hierarchy. `error_class()` is the stable machine-parseable tag the
/// CLI prints on failure.
class Error : public std::runtime_error {
 public:
  Error(std::string cls, const std::string& msg)
      : std::runtime_error(cls + ": " + msg), cls_(std::move(cls)) {}
  const std::string& error_class() const { return cls_; }

 private:
  std::string cls_;
};

class InvalidArgumentError : public Error {
 public:
  explicit InvalidArgumentError(const std::string& msg) : Error("invalid-argument", msg) {}
};

class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& msg) : Error("configuration", msg) {}
};

class IoError : public Error {
 public:
  explicit IoError(const std::string& msg) : Error("io", msg) {}
};

class FormatError : public Error {
 public:
  explicit FormatError(const std::string& msg) : Error("format", msg) {}
};

class CorruptionError : public Error {
 public:
  explicit CorruptionError(const std::string& msg) : Error("corruption", msg) {}
};

class UnsupportedError : public Error {
 public:
  explicit UnsupportedError(const std::string& msg) : Error("unsupported-operation", msg) {}
};

class DataAlignmentError : public Error {
 public:
  explicit DataAlignmentError(const std::string& msg) : Error("data-alignment", msg) {}
};

class TrainAbortError : public Error {
 public:
  explicit TrainAbortError(const std::string& msg) : Error("train-abort", msg) {}
};

inline void check_arg(bool cond, const std::string& msg) {
  if (!cond) throw InvalidArgumentError(msg);
}

/// ceil(log2(v)) computed in exact integer arithmetic; v >= 1.
inline int ceil_log2(std::uint64_t v) {
  check_arg(v >= 1, "ceil_log2 requires v >= 1");
  int bits = 0;
  std::uint64_t cap = 1;
  while (cap < v) {
    cap <<= 1;
    ++bits;
  }
  return bits;
}

}  // namespace lsc
