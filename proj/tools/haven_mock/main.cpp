// SPDX-License-Identifier: Apache-2.0
//
// haven-mock: serves a scripted chat-completions endpoint on loopback.

#include <csignal>
#include <cstdlib>
#include <iostream>
#include <string>

#include "haven/mock_server.hpp"

namespace {

haven::MockServer* g_server = nullptr;

void on_signal(int) {
  if (g_server) g_server->stop();
}

int usage() {
  std::cerr << "usage: haven-mock SCRIPT.json [PORT]\n";
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2 || argc > 3) return usage();
  try {
    const int port = argc == 3 ? std::stoi(argv[2]) : 0;
    haven::MockServer server(haven::MockScript::load(argv[1]));
    g_server = &server;
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    server.start("127.0.0.1", port);
    std::cout << server.base_url() << std::endl;
    server.wait();
  } catch (const std::exception& e) {
    std::cerr << "haven-mock: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
