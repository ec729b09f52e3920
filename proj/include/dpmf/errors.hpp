//
// Copyright 2026 The dpmf Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
//
#ifndef DPMF_ERRORS_HPP_
#define DPMF_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace dpmf {

// Bad input data: parse failures, out-of-range ratings, corrupt files, I/O.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public DataError {
 public:
  ParseError(std::size_t line, const std::string& what)
      : DataError("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class RangeError : public DataError {
 public:
  RangeError(std::size_t line, const std::string& what)
      : DataError("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class EmptyDatasetError : public DataError {
 public:
  EmptyDatasetError() : DataError("dataset contains no ratings") {}
};

class CorruptFileError : public DataError {
 public:
  using DataError::DataError;
};

class IoError : public DataError {
 public:
  using DataError::DataError;
};

// Training produced non-finite values.
class DivergenceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// The constraint loop of the private release gave up.
class RetryLimitError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Ridge system without regularization was not positive definite.
class SingularSystemError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace dpmf

#endif  // DPMF_ERRORS_HPP_
