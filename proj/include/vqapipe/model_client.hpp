#pragma once

// Uniform interface to answer generation, sentence embedding and judging.
// Backends: remote HTTP endpoint (http_client.hpp), deterministic mock
// (below), and the simulator's noisy oracle (simworld.hpp).

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "vqapipe/embedding.hpp"
#include "vqapipe/error.hpp"
#include "vqapipe/scene_graph.hpp"

namespace vqapipe {

struct ImageRef {
  Camera camera = Camera::CAM_FRONT;
  std::string uri;
};

struct DecodeOptions {
  bool deterministic = true;  // pseudo-labeling always decodes greedily
  int max_tokens = 256;
};

struct ModelRequest {
  std::vector<ImageRef> image_refs;  // 1..6 view-tagged images
  std::string prompt;
  DecodeOptions decode;

  void validate() const {
    if (image_refs.empty() || image_refs.size() > 6) {
      throw Error("ModelRequest requires 1..6 images, got " +
                  std::to_string(image_refs.size()));
    }
    if (prompt.empty()) throw Error("ModelRequest requires a non-empty prompt");
  }
};

class ModelClient {
 public:
  virtual ~ModelClient() = default;

  // Non-empty trimmed answer text; deterministic decode means identical
  // requests yield identical bytes.
  virtual std::string generate(const ModelRequest& request) = 0;

  // Mean-pooled sentence embedding; "" maps to the zero vector.
  virtual Embedding embed(const std::string& text) = 0;

  // Similarity grade in [0, 100].
  virtual double judge(const std::string& question, const std::string& ground_truth,
                       const std::string& prediction) = 0;

  virtual std::string id() const = 0;
  virtual std::string embedder_id() const = 0;
};

// round(100 * clamp(cosine(embed(gt), embed(pred)), 0, 1))
inline double surrogate_judge(ModelClient& client, const std::string& ground_truth,
                              const std::string& prediction) {
  double c = cosine(client.embed(ground_truth), client.embed(prediction));
  return std::round(100.0 * clamp01(c));
}

// Deterministic test backend keyed by exact prompt text.
class MockClient : public ModelClient {
 public:
  explicit MockClient(size_t embedding_dim = kDefaultEmbeddingDim)
      : embedding_dim_(embedding_dim) {}

  void set_answer(const std::string& prompt, const std::string& answer) {
    answers_[prompt] = answer;
  }
  void set_default_answer(std::string answer) { default_answer_ = std::move(answer); }

  std::string generate(const ModelRequest& request) override {
    request.validate();
    auto it = answers_.find(request.prompt);
    if (it != answers_.end()) return trim(it->second);
    if (!default_answer_.empty()) return default_answer_;
    throw RemoteError(0, "mock has no answer for prompt: " + request.prompt);
  }

  Embedding embed(const std::string& text) override { return hash_embed(text, embedding_dim_); }

  double judge(const std::string&, const std::string& ground_truth,
               const std::string& prediction) override {
    return surrogate_judge(*this, ground_truth, prediction);
  }

  std::string id() const override { return "mock"; }
  std::string embedder_id() const override { return hash_embedder_id(embedding_dim_); }

 private:
  std::map<std::string, std::string> answers_;
  std::string default_answer_;
  size_t embedding_dim_;
};

}  // namespace vqapipe
