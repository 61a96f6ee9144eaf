#include "shardsearch/encoder.hpp"

#include <cmath>

#include "hash.hpp"
#include "http_util.hpp"
#include "shardsearch/analyzer.hpp"
#include "shardsearch/error.hpp"

namespace shardsearch {

void EmbeddingSpec::validate() const {
  if (dim <= 0) throw Error(Errc::invalid_args, "embedding dim must be > 0");
  if (max_tokens <= 0) throw Error(Errc::invalid_args, "max_tokens must be > 0");
}

std::string dense_text(const std::string& title, const std::string& body) { return title + "\n" + body; }

HashingEncoder::HashingEncoder(EmbeddingSpec spec) : spec_(spec) { spec_.validate(); }

std::vector<Eigen::VectorXf> HashingEncoder::embed(std::span<const std::string> texts) {
  std::vector<Eigen::VectorXf> out;
  out.reserve(texts.size());
  for (const auto& text : texts) {
    Eigen::VectorXf v = Eigen::VectorXf::Zero(spec_.dim);
    auto tokens = analyze(text);
    if (tokens.size() > static_cast<std::size_t>(spec_.max_tokens)) tokens.resize(spec_.max_tokens);
    for (const auto& tok : tokens) {
      const std::uint64_t h = detail::fnv1a64(tok);
      const auto bucket = static_cast<Eigen::Index>(h % static_cast<std::uint64_t>(spec_.dim));
      v[bucket] += (h >> 63) ? -1.0f : 1.0f;
    }
    if (!tokens.empty()) v /= static_cast<float>(tokens.size());
    out.push_back(std::move(v));
  }
  return out;
}

RemoteEncoder::RemoteEncoder(std::string endpoint, int dim, std::size_t batch_size, std::chrono::milliseconds timeout)
    : endpoint_(std::move(endpoint)), dim_(dim), batch_size_(batch_size == 0 ? 1 : batch_size), timeout_(timeout) {
  if (dim_ <= 0) throw Error(Errc::invalid_args, "embedding dim must be > 0");
}

std::vector<Eigen::VectorXf> RemoteEncoder::embed(std::span<const std::string> texts) {
  std::vector<Eigen::VectorXf> out;
  out.reserve(texts.size());
  auto client = detail::make_client(endpoint_, timeout_);
  for (std::size_t start = 0; start < texts.size(); start += batch_size_) {
    const auto batch = texts.subspan(start, std::min(batch_size_, texts.size() - start));
    nlohmann::json req = {{"texts", std::vector<std::string>(batch.begin(), batch.end())}};
    const auto res = detail::post_json(*client, "/embed", req);
    const auto it = res.find("vectors");
    if (it == res.end() || !it->is_array()) throw Error(Errc::malformed_json, "/embed response lacks 'vectors'");
    if (it->size() != batch.size()) {
      throw Error(Errc::shape_mismatch, "/embed returned " + std::to_string(it->size()) + " vectors for " +
                                            std::to_string(batch.size()) + " texts");
    }
    for (const auto& vec : *it) {
      if (!vec.is_array() || static_cast<int>(vec.size()) != dim_) {
        throw Error(Errc::dimension_mismatch, "/embed vector width differs from " + std::to_string(dim_));
      }
      Eigen::VectorXf v(dim_);
      for (int i = 0; i < dim_; ++i) {
        if (!vec[i].is_number()) throw Error(Errc::malformed_json, "/embed vector component is not a number");
        v[i] = vec[i].get<float>();
        if (!std::isfinite(v[i])) throw Error(Errc::non_finite_value, "/embed vector component");
      }
      out.push_back(std::move(v));
    }
  }
  return out;
}

ModelServerSpec fetch_model_spec(const std::string& endpoint, std::chrono::milliseconds timeout) {
  auto client = detail::make_client(endpoint, timeout);
  const auto res = detail::get_json(*client, "/spec");
  if (!res.is_object()) throw Error(Errc::malformed_json, "/spec response is not an object");
  for (const char* key : {"dim", "max_tokens"}) {
    if (!res.contains(key) || !res[key].is_number_integer()) throw Error(Errc::missing_field, std::string("/spec ") + key);
  }
  ModelServerSpec spec;
  spec.dim = res["dim"].get<int>();
  spec.max_tokens = res["max_tokens"].get<int>();
  spec.uses_url = res.value("uses_url", false);
  return spec;
}

}  // namespace shardsearch
