// SPDX-License-Identifier: Apache-2.0
//
// HTTP transport seam and the process-wide request limiter. Everything that
// talks to an endpoint goes through a Transport so tests can script replies.

#pragma once

#include <condition_variable>
#include <cstddef>
#include <memory>
#include <mutex>
#include <string>

#include "haven/error.hpp"

namespace haven {

struct HttpRequest {
  std::string base_url;  // e.g. "http://127.0.0.1:8080/v1"
  std::string path;      // appended to base_url, e.g. "/chat/completions"
  std::string bearer_token;
  std::string body;
  double timeout_s = 60.0;
};

struct HttpResponse {
  int status = 0;
  std::string body;
};

// Connection failure or timeout. Retryable.
class TransportError : public Error {
 public:
  using Error::Error;
};

class Transport {
 public:
  virtual ~Transport() = default;
  // Throws TransportError when no HTTP status was obtained.
  virtual HttpResponse post(const HttpRequest& request) = 0;
};

// cpp-httplib backed transport. Supports https:// when built with OpenSSL.
class HttpTransport final : public Transport {
 public:
  HttpResponse post(const HttpRequest& request) override;
};

// Counting limiter bounding in-flight transport calls across model and judge
// traffic.
class ConcurrencyLimiter {
 public:
  explicit ConcurrencyLimiter(std::size_t max_in_flight);

  void acquire();
  void release();
  std::size_t capacity() const noexcept { return capacity_; }

  class Permit {
   public:
    explicit Permit(ConcurrencyLimiter* limiter) : limiter_(limiter) {
      if (limiter_) limiter_->acquire();
    }
    ~Permit() {
      if (limiter_) limiter_->release();
    }
    Permit(const Permit&) = delete;
    Permit& operator=(const Permit&) = delete;

   private:
    ConcurrencyLimiter* limiter_;
  };

 private:
  std::size_t capacity_;
  std::size_t available_;
  std::mutex mu_;
  std::condition_variable cv_;
};

}  // namespace haven
