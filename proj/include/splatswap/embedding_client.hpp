// Copyright Contributors to the splatswap Project
// SPDX-License-Identifier: Apache-2.0
//
// Client for the embedding service: newline-delimited JSON over TCP.
//
//   request  {"id":u64,"op":"embed","width":W,"height":H,"pixels_b64":"...","affine":[[a,b,tx],[c,d,ty]]|null}
//   response {"id":u64,"ok":true,"embeddings":[{"name":"arcface","dim":512,"values":[...]},...]}
//            {"id":u64,"ok":false,"error":"..."}
#pragma once

#include "splatswap/identity.hpp"

#include <chrono>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace splatswap {

inline constexpr int kDefaultEmbedPort = 7701;
inline constexpr const char *kEmbedEndpointEnv = "GSWAP_EMBED_ENDPOINT";

struct Endpoint {
    std::string host = "127.0.0.1";
    int port = kDefaultEmbedPort;

    /// "host:port", "host" or ":port".
    static Endpoint parse(std::string_view text);
    /// GSWAP_EMBED_ENDPOINT when set, otherwise `fallback`.
    static Endpoint from_env(const Endpoint &fallback);
    static Endpoint from_env();
    std::string str() const { return host + ":" + std::to_string(port); }
};

struct ClientOptions {
    int attempts = 3;
    std::chrono::milliseconds backoff{500};
    std::chrono::milliseconds timeout{30000};
};

std::string base64_encode(std::span<const std::uint8_t> bytes);

/// Row-major RGB8 with rounding and clamping.
std::vector<std::uint8_t> to_rgb8(const Image<double> &image);

std::string encode_embed_request(std::uint64_t id, const Image<double> &image,
                                 const std::optional<AlignmentAffine> &affine);

/// Parses one response line. Non-unit vectors are renormalized with a warning.
/// Throws ServiceProtocolError (malformed or id mismatch) or IdentityError (ok:false).
std::vector<IdentityEmbedding> parse_embed_response(const std::string &line, std::uint64_t expected_id);

/// One connection, one in-flight request. Connection failures are retried
/// `attempts` times with `backoff` between attempts.
class EmbeddingClient {
  public:
    EmbeddingClient();
    explicit EmbeddingClient(Endpoint endpoint, ClientOptions options = ClientOptions());
    ~EmbeddingClient();
    EmbeddingClient(const EmbeddingClient &) = delete;
    EmbeddingClient &operator=(const EmbeddingClient &) = delete;

    std::vector<IdentityEmbedding> embed(const Image<double> &image,
                                         const std::optional<AlignmentAffine> &affine = std::nullopt);

    const Endpoint &endpoint() const { return mEndpoint; }

  private:
    void connect_with_retry();
    void close();
    std::string read_line();
    void write_all(const std::string &data);

    Endpoint mEndpoint;
    ClientOptions mOptions;
    int mFd = -1;
    std::uint64_t mNextId = 1;
    std::string mBuffer;
};

/// One model of the remote service exposed as an (non-differentiable) encoder.
class RemoteEncoder final : public IdentityEncoder {
  public:
    RemoteEncoder(std::shared_ptr<EmbeddingClient> client, std::string model,
                  std::optional<AlignmentAffine> affine = std::nullopt);

    const std::string &name() const override { return mModel; }
    IdentityEmbedding encode(const Image<double> &image) const override;

  private:
    std::shared_ptr<EmbeddingClient> mClient;
    std::string mModel;
    std::optional<AlignmentAffine> mAffine;
};

} // namespace splatswap
