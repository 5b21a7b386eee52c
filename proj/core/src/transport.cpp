// SPDX-License-Identifier: Apache-2.0

#include "haven/transport.hpp"

#include <httplib.h>

namespace haven {

namespace {

struct SplitUrl {
  std::string scheme_host_port;
  std::string path_prefix;
};

SplitUrl split_base_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw ConfigError("base_url needs a scheme: " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, ""};
  std::string prefix = url.substr(path_start);
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
  return {url.substr(0, path_start), prefix};
}

}  // namespace

HttpResponse HttpTransport::post(const HttpRequest& request) {
  const SplitUrl url = split_base_url(request.base_url);
  httplib::Client client(url.scheme_host_port);
  const auto secs = static_cast<time_t>(request.timeout_s);
  const auto usecs = static_cast<time_t>((request.timeout_s - static_cast<double>(secs)) * 1e6);
  client.set_connection_timeout(secs, usecs);
  client.set_read_timeout(secs, usecs);
  client.set_write_timeout(secs, usecs);

  httplib::Headers headers;
  if (!request.bearer_token.empty()) {
    headers.emplace("Authorization", "Bearer " + request.bearer_token);
  }
  auto res = client.Post(url.path_prefix + request.path, headers, request.body, "application/json");
  if (!res) {
    throw TransportError("POST " + request.base_url + request.path + " failed: " +
                         httplib::to_string(res.error()));
  }
  return {res->status, res->body};
}

ConcurrencyLimiter::ConcurrencyLimiter(std::size_t max_in_flight)
    : capacity_(max_in_flight), available_(max_in_flight) {
  if (max_in_flight == 0) throw ConfigError("max_concurrency must be at least 1");
}

void ConcurrencyLimiter::acquire() {
  std::unique_lock lock(mu_);
  cv_.wait(lock, [this] { return available_ > 0; });
  --available_;
}

void ConcurrencyLimiter::release() {
  {
    std::lock_guard lock(mu_);
    ++available_;
  }
  cv_.notify_one();
}

}  // namespace haven
