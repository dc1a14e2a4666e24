/*
 * Copyright 2026 The tmjx Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#ifndef TMJX_COMMON_HPP_
#define TMJX_COMMON_HPP_

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace tmjx {

inline constexpr const char* kVersion = TMJX_VERSION;

// Binary prediction target: no / present TMJ involvement.
enum class Label : std::uint8_t { kTmj0 = 0, kTmj1 = 1 };
inline constexpr int kNumClasses = 2;

inline int label_index(Label l) { return static_cast<int>(l); }
inline Label label_from_index(int i) { return i == 0 ? Label::kTmj0 : Label::kTmj1; }
std::string_view label_name(Label l);

enum class Gender : std::uint8_t { kFemale = 0, kMale = 1 };
std::string_view gender_name(Gender g);
Gender parse_gender(std::string_view token);

// Error hierarchy. Each category maps onto one CLI exit code.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual int exit_code() const { return 4; }
};

// Bad input: malformed files, schema violations, invalid configuration.
class ValidationError : public Error {
 public:
  using Error::Error;
  int exit_code() const override { return 2; }
};

class IoError : public Error {
 public:
  using Error::Error;
  int exit_code() const override { return 3; }
};

// A computed result broke one of its own contracts.
class InvariantError : public Error {
 public:
  using Error::Error;
  int exit_code() const override { return 4; }
};

// Derives an independent 64-bit seed for substream `stream` of `seed`
// (splitmix64 finalizer over the pair).
std::uint64_t substream_seed(std::uint64_t seed, std::uint64_t stream);

// FNV-1a, used for stable content digests (schema hash, report digest).
std::uint64_t fnv1a64(std::string_view bytes);
std::string hex64(std::uint64_t v);

// Shortest decimal representation that parses back to the same double.
std::string format_real(double v);
std::optional<double> parse_real(std::string_view token);

// Dense row-major matrix of doubles.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool empty() const { return rows_ == 0; }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const {
    return {data_.data() + r * cols_, cols_};
  }

  void append_row(std::span<const double> values);
  Matrix select_rows(std::span<const std::size_t> indices) const;

  const std::vector<double>& data() const { return data_; }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// Runs fn(i) for i in [0, n) on up to `threads` workers. Work items are
// claimed from a shared counter; callers write results into slot i so the
// outcome does not depend on the thread count. threads <= 0 means hardware
// concurrency.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn);

}  // namespace tmjx

#endif  // TMJX_COMMON_HPP_
