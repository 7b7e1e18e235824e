// Copyright NAPReS contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace napres {

/// Raised for invalid inputs and failed pipeline stages. The message is a
/// single line suitable for a CLI diagnostic.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace napres
