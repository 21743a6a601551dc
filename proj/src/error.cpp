// SPDX-License-Identifier: Apache-2.0
#include "frameattn/error.hpp"

#include <filesystem>

namespace frameattn {

int exit_code(const std::exception& e) noexcept {
  if (dynamic_cast<const NumericError*>(&e)) return 3;
  if (dynamic_cast<const DataError*>(&e) || dynamic_cast<const IoError*>(&e) ||
      dynamic_cast<const std::filesystem::filesystem_error*>(&e)) {
    return 2;
  }
  return 1;
}

}  // namespace frameattn
