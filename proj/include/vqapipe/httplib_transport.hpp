#pragma once

// Production transport for RemoteClient. Kept out of http_client.hpp so test
// code with fake transports does not pay for the httplib include.

#include <httplib.h>

#include "vqapipe/http_client.hpp"

namespace vqapipe {

class HttplibTransport : public Transport {
 public:
  explicit HttplibTransport(const ClientConfig& config)
      : client_(config.base_url.c_str()) {
    auto seconds = static_cast<time_t>(config.timeout_seconds);
    auto micros = static_cast<time_t>((config.timeout_seconds - static_cast<double>(seconds)) * 1e6);
    client_.set_connection_timeout(seconds, micros);
    client_.set_read_timeout(seconds, micros);
    client_.set_write_timeout(seconds, micros);
  }

  HttpResponse post(const std::string& path, const std::string& json_body,
                    const std::map<std::string, std::string>& headers) override {
    httplib::Headers h(headers.begin(), headers.end());
    auto result = client_.Post(path.c_str(), h, json_body, "application/json");
    if (!result) {
      if (result.error() == httplib::Error::ConnectionTimeout ||
          result.error() == httplib::Error::Read || result.error() == httplib::Error::Write) {
        throw Timeout("request to " + path + " timed out");
      }
      throw RemoteError(0, "transport failure: " + httplib::to_string(result.error()));
    }
    return HttpResponse{result->status, result->body};
  }

 private:
  httplib::Client client_;
};

}  // namespace vqapipe
