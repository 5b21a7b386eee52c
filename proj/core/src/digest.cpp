// SPDX-License-Identifier: Apache-2.0

#include "haven/digest.hpp"

#include <cstdio>

namespace haven {

std::string to_hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string digest_hex(std::string_view bytes) { return to_hex(fnv1a64(bytes)); }

}  // namespace haven
