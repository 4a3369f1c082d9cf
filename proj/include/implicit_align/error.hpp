/* Copyright 2026 The implicit-align Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/
#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace ialign {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class DataError : public Error {
 public:
  using Error::Error;
};

// Raised when too few classes have a non-empty target pseudo-label bucket to
// build a class-aligned minibatch.
class DegenerateCacheError : public Error {
 public:
  DegenerateCacheError(std::size_t live_classes, std::size_t required)
      : Error("degenerate pseudo-label cache: " + std::to_string(live_classes) +
              " live classes, at least " + std::to_string(required) +
              " required"),
        live_classes_(live_classes),
        required_(required) {}
  DegenerateCacheError(std::size_t live_classes, std::size_t required, const std::string& what)
      : Error(what), live_classes_(live_classes), required_(required) {}

  std::size_t live_classes() const { return live_classes_; }
  std::size_t required() const { return required_; }

 private:
  std::size_t live_classes_;
  std::size_t required_;
};

}  // namespace ialign
