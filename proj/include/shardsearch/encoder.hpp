#pragma once

#include <Eigen/Core>

#include <chrono>
#include <span>
#include <string>
#include <vector>

namespace shardsearch {

struct EmbeddingSpec {
  int dim = 768;
  int max_tokens = 512;

  void validate() const;
};

/// Maps texts to fixed-width float vectors.
class Encoder {
 public:
  virtual ~Encoder() = default;
  virtual int dim() const = 0;
  virtual std::vector<Eigen::VectorXf> embed(std::span<const std::string> texts) = 0;

  Eigen::VectorXf embed_one(const std::string& text) { return embed(std::span(&text, 1)).front(); }
};

/// Deterministic offline encoder: each analyzed token (after truncation to
/// max_tokens) hashes to a signed one-hot vector, and the text embedding is
/// the mean of those. Empty text gives the zero vector.
class HashingEncoder final : public Encoder {
 public:
  explicit HashingEncoder(EmbeddingSpec spec = {});
  int dim() const override { return spec_.dim; }
  std::vector<Eigen::VectorXf> embed(std::span<const std::string> texts) override;

 private:
  EmbeddingSpec spec_;
};

/// Client for a model server's `POST /embed` ({"texts":[...]} -> {"vectors":[[...]]}).
/// Requests are split into batches of at most `batch_size` texts.
class RemoteEncoder final : public Encoder {
 public:
  RemoteEncoder(std::string endpoint, int dim, std::size_t batch_size = 32,
                std::chrono::milliseconds timeout = std::chrono::seconds(30));
  int dim() const override { return dim_; }
  std::vector<Eigen::VectorXf> embed(std::span<const std::string> texts) override;

 private:
  std::string endpoint_;
  int dim_;
  std::size_t batch_size_;
  std::chrono::milliseconds timeout_;
};

/// Answer of a model server's `GET /spec`.
struct ModelServerSpec {
  int dim = 0;
  int max_tokens = 0;
  bool uses_url = false;
};

/// Throws UpstreamError, Error{timeout | malformed_json | missing_field}.
ModelServerSpec fetch_model_spec(const std::string& endpoint,
                                 std::chrono::milliseconds timeout = std::chrono::seconds(30));

/// Text a document contributes to its embedding: title, newline, body.
std::string dense_text(const std::string& title, const std::string& body);

}  // namespace shardsearch
