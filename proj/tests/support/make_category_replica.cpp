// SPDX-License-Identifier: Apache-2.0
//
// Writes the statistics-table replica dataset to the path given.

#include <iostream>

#include "generators.hpp"

int main(int argc, char** argv) {
  if (argc != 2) {
    std::cerr << "usage: make_category_replica OUT.jsonl\n";
    return 1;
  }
  haven::save_dataset(argv[1], haven::testing::category_replica());
  return 0;
}
