// Copyright Contributors to the splatswap Project
// SPDX-License-Identifier: Apache-2.0
//
#include "splatswap/embedding_client.hpp"

#include "splatswap/errors.hpp"
#include "splatswap/log.hpp"

#include <json.hpp>

#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <sys/time.h>
#include <unistd.h>

#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <algorithm>
#include <cstring>
#include <thread>

namespace splatswap {

Endpoint Endpoint::parse(std::string_view text) {
    Endpoint e;
    const auto colon = text.rfind(':');
    if (colon == std::string_view::npos) {
        if (!text.empty()) e.host = std::string(text);
        return e;
    }
    if (colon > 0) e.host = std::string(text.substr(0, colon));
    const std::string port(text.substr(colon + 1));
    char *end = nullptr;
    const long p = std::strtol(port.c_str(), &end, 10);
    if (port.empty() || *end != '\0' || p <= 0 || p > 65535) {
        throw ConfigError("invalid endpoint port in '" + std::string(text) + "'");
    }
    e.port = static_cast<int>(p);
    return e;
}

Endpoint Endpoint::from_env(const Endpoint &fallback) {
    if (const char *env = std::getenv(kEmbedEndpointEnv); env && *env) return parse(env);
    return fallback;
}

Endpoint Endpoint::from_env() { return from_env(Endpoint{}); }

std::string base64_encode(std::span<const std::uint8_t> bytes) {
    static constexpr char kTable[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
    std::string out;
    out.reserve((bytes.size() + 2) / 3 * 4);
    std::size_t i = 0;
    for (; i + 2 < bytes.size(); i += 3) {
        const std::uint32_t v = std::uint32_t(bytes[i]) << 16 | std::uint32_t(bytes[i + 1]) << 8 | bytes[i + 2];
        out += kTable[v >> 18 & 63];
        out += kTable[v >> 12 & 63];
        out += kTable[v >> 6 & 63];
        out += kTable[v & 63];
    }
    if (const std::size_t rest = bytes.size() - i; rest > 0) {
        std::uint32_t v = std::uint32_t(bytes[i]) << 16;
        if (rest == 2) v |= std::uint32_t(bytes[i + 1]) << 8;
        out += kTable[v >> 18 & 63];
        out += kTable[v >> 12 & 63];
        out += rest == 2 ? kTable[v >> 6 & 63] : '=';
        out += '=';
    }
    return out;
}

std::vector<std::uint8_t> to_rgb8(const Image<double> &image) {
    std::vector<std::uint8_t> out(static_cast<std::size_t>(image.height() * image.width() * 3));
    std::size_t k = 0;
    for (Index y = 0; y < image.height(); ++y)
        for (Index x = 0; x < image.width(); ++x)
            for (int c = 0; c < 3; ++c)
                out[k++] = static_cast<std::uint8_t>(std::lround(std::clamp(image[c](y, x), 0.0, 1.0) * 255.0));
    return out;
}

std::string encode_embed_request(std::uint64_t id, const Image<double> &image,
                                 const std::optional<AlignmentAffine> &affine) {
    nlohmann::json req;
    req["id"] = id;
    req["op"] = "embed";
    req["width"] = image.width();
    req["height"] = image.height();
    req["pixels_b64"] = base64_encode(to_rgb8(image));
    if (affine) {
        const auto &m = affine->matrix;
        req["affine"] = {{m(0, 0), m(0, 1), m(0, 2)}, {m(1, 0), m(1, 1), m(1, 2)}};
    } else {
        req["affine"] = nullptr;
    }
    return req.dump();
}

std::vector<IdentityEmbedding> parse_embed_response(const std::string &line, std::uint64_t expected_id) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception &) {
        throw ServiceProtocolError("malformed response line: " + line);
    }
    if (!doc.is_object() || !doc.contains("id") || !doc["id"].is_number_unsigned() || !doc.contains("ok") ||
        !doc["ok"].is_boolean()) {
        throw ServiceProtocolError("response missing id/ok: " + line);
    }
    if (doc["id"].get<std::uint64_t>() != expected_id) {
        throw ServiceProtocolError("response id " + doc["id"].dump() + " does not match request " +
                                   std::to_string(expected_id) + ": " + line);
    }
    if (!doc["ok"].get<bool>()) {
        const std::string err = doc.contains("error") && doc["error"].is_string() ? doc["error"].get<std::string>()
                                                                                 : std::string("unknown error");
        throw IdentityError("embedding service error: " + err);
    }
    if (!doc.contains("embeddings") || !doc["embeddings"].is_array()) {
        throw ServiceProtocolError("response missing embeddings: " + line);
    }
    std::vector<IdentityEmbedding> out;
    for (const auto &item : doc["embeddings"]) {
        if (!item.is_object() || !item.contains("name") || !item["name"].is_string() || !item.contains("values") ||
            !item["values"].is_array()) {
            throw ServiceProtocolError("malformed embedding entry: " + line);
        }
        IdentityEmbedding e;
        e.encoder_name = item["name"].get<std::string>();
        const auto &values = item["values"];
        e.vector.resize(static_cast<Index>(values.size()));
        for (std::size_t i = 0; i < values.size(); ++i) {
            if (!values[i].is_number()) throw ServiceProtocolError("non-numeric embedding value: " + line);
            e.vector[static_cast<Index>(i)] = values[i].get<double>();
        }
        if (item.contains("dim") && (!item["dim"].is_number_integer() || item["dim"].get<Index>() != e.vector.size())) {
            throw ServiceProtocolError("embedding '" + e.encoder_name + "' dim does not match its values: " + line);
        }
        const double n = e.vector.norm();
        if (!(n > 0) || !std::isfinite(n)) {
            throw ServiceProtocolError("embedding '" + e.encoder_name + "' has zero or non-finite norm: " + line);
        }
        if (std::abs(n - 1.0) > 1e-4) {
            log_warning("embedding '" + e.encoder_name + "' had norm " + std::to_string(n) + "; renormalized");
            e.vector /= n;
        }
        out.push_back(std::move(e));
    }
    return out;
}

EmbeddingClient::EmbeddingClient() : EmbeddingClient(Endpoint::from_env()) {}

EmbeddingClient::EmbeddingClient(Endpoint endpoint, ClientOptions options)
    : mEndpoint(std::move(endpoint)), mOptions(options) {}

EmbeddingClient::~EmbeddingClient() { close(); }

void EmbeddingClient::close() {
    if (mFd >= 0) ::close(mFd);
    mFd = -1;
    mBuffer.clear();
}

void EmbeddingClient::connect_with_retry() {
    std::string last_error;
    for (int attempt = 0; attempt < mOptions.attempts; ++attempt) {
        if (attempt > 0) std::this_thread::sleep_for(mOptions.backoff);
        addrinfo hints{};
        hints.ai_family = AF_UNSPEC;
        hints.ai_socktype = SOCK_STREAM;
        addrinfo *res = nullptr;
        const std::string port = std::to_string(mEndpoint.port);
        if (int rc = ::getaddrinfo(mEndpoint.host.c_str(), port.c_str(), &hints, &res); rc != 0) {
            last_error = gai_strerror(rc);
            continue;
        }
        for (addrinfo *ai = res; ai; ai = ai->ai_next) {
            const int fd = ::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol);
            if (fd < 0) continue;
            timeval tv{};
            tv.tv_sec = static_cast<long>(mOptions.timeout.count() / 1000);
            tv.tv_usec = static_cast<long>((mOptions.timeout.count() % 1000) * 1000);
            ::setsockopt(fd, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof(tv));
            ::setsockopt(fd, SOL_SOCKET, SO_SNDTIMEO, &tv, sizeof(tv));
            if (::connect(fd, ai->ai_addr, ai->ai_addrlen) == 0) {
                const int one = 1;
                ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
                mFd = fd;
                break;
            }
            last_error = std::strerror(errno);
            ::close(fd);
        }
        ::freeaddrinfo(res);
        if (mFd >= 0) return;
    }
    throw ServiceConnectionError("cannot reach embedding service at " + mEndpoint.str() + " after " +
                                 std::to_string(mOptions.attempts) + " attempts: " + last_error);
}

void EmbeddingClient::write_all(const std::string &data) {
    std::size_t sent = 0;
    while (sent < data.size()) {
        const ssize_t n = ::send(mFd, data.data() + sent, data.size() - sent, MSG_NOSIGNAL);
        if (n < 0) {
            const int err = errno;
            close();
            if (err == EAGAIN || err == EWOULDBLOCK) throw ServiceTimeoutError("timed out sending to " + mEndpoint.str());
            throw ServiceConnectionError("send to " + mEndpoint.str() + " failed: " + std::strerror(err));
        }
        sent += static_cast<std::size_t>(n);
    }
}

std::string EmbeddingClient::read_line() {
    for (;;) {
        if (const auto nl = mBuffer.find('\n'); nl != std::string::npos) {
            std::string line = mBuffer.substr(0, nl);
            mBuffer.erase(0, nl + 1);
            return line;
        }
        char chunk[65536];
        const ssize_t n = ::recv(mFd, chunk, sizeof(chunk), 0);
        if (n > 0) {
            mBuffer.append(chunk, static_cast<std::size_t>(n));
            continue;
        }
        const int err = errno;
        close();
        if (n == 0) throw ServiceConnectionError("embedding service at " + mEndpoint.str() + " closed the connection");
        if (err == EAGAIN || err == EWOULDBLOCK) throw ServiceTimeoutError("timed out waiting for " + mEndpoint.str());
        throw ServiceConnectionError("recv from " + mEndpoint.str() + " failed: " + std::strerror(err));
    }
}

std::vector<IdentityEmbedding> EmbeddingClient::embed(const Image<double> &image,
                                                      const std::optional<AlignmentAffine> &affine) {
    if (mFd < 0) connect_with_retry();
    const std::uint64_t id = mNextId++;
    write_all(encode_embed_request(id, image, affine) + "\n");
    const std::string line = read_line();
    return parse_embed_response(line, id);
}

RemoteEncoder::RemoteEncoder(std::shared_ptr<EmbeddingClient> client, std::string model,
                             std::optional<AlignmentAffine> affine)
    : mClient(std::move(client)), mModel(std::move(model)), mAffine(affine) {}

IdentityEmbedding RemoteEncoder::encode(const Image<double> &image) const {
    for (auto &e : mClient->embed(image, mAffine)) {
        if (e.encoder_name == mModel) return e;
    }
    throw IdentityError("embedding service returned no '" + mModel + "' embedding", mModel);
}

} // namespace splatswap
