#pragma once

// Remote chat-completion backend. The wire shape is the prevailing
// {model, messages:[{role, content:[text part, image parts]}]} POST so any
// hosted VisionLLM can serve as the answer model. The transport is
// injectable for tests; the default wraps cpp-httplib.

#include <condition_variable>
#include <cstdlib>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "vqapipe/model_client.hpp"

namespace vqapipe {

struct ClientConfig {
  std::string base_url = "http://127.0.0.1:8000";
  std::string model_name = "default";
  double timeout_seconds = 60.0;
  int max_retries = 2;
  int max_concurrent_requests = 4;
  std::string auth_token_env = "";       // name of the env var holding the token
  std::string chat_path = "/v1/chat/completions";
  std::string embeddings_path = "";      // empty: backend lacks embeddings
  size_t embedding_dim = kDefaultEmbeddingDim;
  bool hash_embedding_fallback = true;   // fall back instead of failing SCR
  bool debug_log = false;                // request/response bodies to stderr

  void validate() const {
    if (timeout_seconds <= 0.0) throw Error("ClientConfig: timeout must be > 0");
    if (max_concurrent_requests < 1) throw Error("ClientConfig: concurrency must be >= 1");
    if (max_retries < 0) throw Error("ClientConfig: retries must be >= 0");
  }
};

struct HttpResponse {
  int status = 0;
  std::string body;
};

class Transport {
 public:
  virtual ~Transport() = default;
  virtual HttpResponse post(const std::string& path, const std::string& json_body,
                            const std::map<std::string, std::string>& headers) = 0;
};

class RemoteClient : public ModelClient {
 public:
  RemoteClient(ClientConfig config, std::shared_ptr<Transport> transport)
      : config_(std::move(config)), transport_(std::move(transport)) {
    config_.validate();
  }

  std::string generate(const ModelRequest& request) override {
    request.validate();
    nlohmann::json content = nlohmann::json::array();
    content.push_back({{"type", "text"}, {"text", request.prompt}});
    for (const ImageRef& image : request.image_refs) {
      content.push_back({{"type", "image_url"},
                         {"image_url", {{"url", image.uri},
                                        {"camera", std::string(camera_name(image.camera))}}}});
    }
    nlohmann::json body = {
        {"model", config_.model_name},
        {"messages", nlohmann::json::array({{{"role", "user"}, {"content", content}}})},
        {"max_tokens", request.decode.max_tokens},
    };
    if (request.decode.deterministic) body["temperature"] = 0.0;

    nlohmann::json reply = post_json(config_.chat_path, body);
    try {
      std::string text = reply.at("choices").at(0).at("message").at("content").get<std::string>();
      text = trim(text);
      if (text.empty()) throw RemoteError(200, "backend returned an empty answer");
      return text;
    } catch (const nlohmann::json::exception& e) {
      throw RemoteError(200, std::string("unexpected chat reply shape: ") + e.what());
    }
  }

  Embedding embed(const std::string& text) override {
    if (text.empty()) return Embedding{std::vector<double>(config_.embedding_dim, 0.0)};
    if (config_.embeddings_path.empty()) {
      if (config_.hash_embedding_fallback) return hash_embed(text, config_.embedding_dim);
      throw BackendLacksEmbeddings("no embeddings endpoint configured");
    }
    nlohmann::json body = {{"model", config_.model_name}, {"input", text}};
    nlohmann::json reply = post_json(config_.embeddings_path, body);
    try {
      const auto& data = reply.at("data");
      if (data.empty()) throw RemoteError(200, "embeddings reply has no data");
      // Mean-pool when the backend returns per-token vectors.
      std::vector<double> pooled = data.at(0).at("embedding").get<std::vector<double>>();
      for (size_t i = 1; i < data.size(); ++i) {
        std::vector<double> next = data.at(i).at("embedding").get<std::vector<double>>();
        if (next.size() != pooled.size()) throw RemoteError(200, "ragged embedding reply");
        for (size_t d = 0; d < pooled.size(); ++d) pooled[d] += next[d];
      }
      for (double& v : pooled) v /= static_cast<double>(data.size());
      return Embedding{std::move(pooled)};
    } catch (const nlohmann::json::exception& e) {
      throw RemoteError(200, std::string("unexpected embeddings reply shape: ") + e.what());
    }
  }

  double judge(const std::string& question, const std::string& ground_truth,
               const std::string& prediction) override {
    std::string prompt =
        "Rate how semantically similar the candidate answer is to the reference "
        "answer for the question below. Reply with a single line of the form "
        "\"Score: <integer 0-100>\".\nQuestion: " + question +
        "\nReference: " + ground_truth + "\nCandidate: " + prediction;
    ModelRequest req;
    req.image_refs = {ImageRef{Camera::CAM_FRONT, "none://judge"}};
    req.prompt = prompt;
    for (int attempt = 0; attempt < 2; ++attempt) {
      std::string reply = generate(req);
      if (auto score = parse_judge_score(reply)) return *score;
    }
    throw UnparsableJudgeReply("judge reply carried no score");
  }

  std::string id() const override { return "remote:" + config_.model_name; }
  std::string embedder_id() const override {
    return config_.embeddings_path.empty() ? hash_embedder_id(config_.embedding_dim)
                                           : "remote:" + config_.model_name;
  }

  // First in-range number following "Score:" (case-insensitive), else the
  // first standalone number in the reply.
  static std::optional<double> parse_judge_score(const std::string& reply) {
    std::string lower = to_lower(reply);
    size_t from = lower.find("score");
    size_t start = from == std::string::npos ? 0 : from;
    for (size_t i = start; i < lower.size(); ++i) {
      if (!std::isdigit(static_cast<unsigned char>(lower[i]))) continue;
      size_t end = i;
      while (end < lower.size() &&
             (std::isdigit(static_cast<unsigned char>(lower[end])) || lower[end] == '.')) {
        ++end;
      }
      double value = std::stod(lower.substr(i, end - i));
      if (value >= 0.0 && value <= 100.0) return value;
      i = end;
    }
    return std::nullopt;
  }

 private:
  nlohmann::json post_json(const std::string& path, const nlohmann::json& body) {
    std::map<std::string, std::string> headers{{"Content-Type", "application/json"}};
    if (!config_.auth_token_env.empty()) {
      if (const char* token = std::getenv(config_.auth_token_env.c_str())) {
        headers["Authorization"] = std::string("Bearer ") + token;
      }
    }

    ConcurrencyTicket ticket(*this);
    std::string last_error = "no attempt made";
    const int attempts = 1 + config_.max_retries;
    for (int attempt = 0; attempt < attempts; ++attempt) {
      // Auth stays in headers and is never logged.
      if (config_.debug_log) {
        std::fprintf(stderr, "[vqapipe:debug] POST %s attempt %d body %s\n", path.c_str(),
                     attempt + 1, body.dump().c_str());
      }
      HttpResponse response;
      try {
        response = transport_->post(path, body.dump(), headers);
      } catch (const Timeout&) {
        last_error = "timeout";
        continue;
      } catch (const std::exception& e) {
        last_error = e.what();
        continue;
      }
      if (config_.debug_log) {
        std::fprintf(stderr, "[vqapipe:debug] status %d body %s\n", response.status,
                     response.body.c_str());
      }
      if (response.status == 200) {
        try {
          return nlohmann::json::parse(response.body);
        } catch (const nlohmann::json::exception& e) {
          last_error = std::string("invalid JSON body: ") + e.what();
          continue;
        }
      }
      last_error = "http status " + std::to_string(response.status);
      if (response.status >= 400 && response.status < 500 && response.status != 429) {
        throw RemoteError(response.status, "remote rejected request: " + last_error);
      }
    }
    throw ExhaustedRetries("gave up after " + std::to_string(attempts) +
                           " attempts: " + last_error);
  }

  // Bounds in-flight requests without std::counting_semaphore so the cap can
  // exceed the implementation's compile-time maximum.
  class ConcurrencyTicket {
   public:
    explicit ConcurrencyTicket(RemoteClient& client) : client_(client) {
      std::unique_lock<std::mutex> lock(client_.slots_mutex_);
      client_.slots_cv_.wait(lock, [&] {
        return client_.in_flight_ < client_.config_.max_concurrent_requests;
      });
      ++client_.in_flight_;
    }
    ~ConcurrencyTicket() {
      {
        std::lock_guard<std::mutex> lock(client_.slots_mutex_);
        --client_.in_flight_;
      }
      client_.slots_cv_.notify_one();
    }

   private:
    RemoteClient& client_;
  };

  ClientConfig config_;
  std::shared_ptr<Transport> transport_;
  std::mutex slots_mutex_;
  std::condition_variable slots_cv_;
  int in_flight_ = 0;
};

}  // namespace vqapipe
