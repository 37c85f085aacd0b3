#include "distprm/sha256.hpp"

#include <cstdio>
#include <stdexcept>

#include <openssl/evp.h>

namespace distprm {

struct Sha256::Impl {
    EVP_MD_CTX* ctx = nullptr;
    bool finished = false;
};

Sha256::Sha256() : impl_(std::make_unique<Impl>()) {
    impl_->ctx = EVP_MD_CTX_new();
    if (!impl_->ctx || EVP_DigestInit_ex(impl_->ctx, EVP_sha256(), nullptr) != 1) {
        throw std::runtime_error("sha256: OpenSSL digest init failed");
    }
}

Sha256::~Sha256() { EVP_MD_CTX_free(impl_->ctx); }

void Sha256::update(std::string_view bytes) {
    if (impl_->finished) throw std::logic_error("sha256: update after digest");
    if (EVP_DigestUpdate(impl_->ctx, bytes.data(), bytes.size()) != 1) {
        throw std::runtime_error("sha256: OpenSSL digest update failed");
    }
}

std::string Sha256::hex_digest() {
    if (impl_->finished) throw std::logic_error("sha256: digest already taken");
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_DigestFinal_ex(impl_->ctx, md, &len) != 1) throw std::runtime_error("sha256: OpenSSL digest failed");
    impl_->finished = true;
    std::string out;
    out.reserve(2 * len);
    char buf[3];
    for (unsigned int i = 0; i < len; ++i) {
        std::snprintf(buf, sizeof buf, "%02x", md[i]);
        out += buf;
    }
    return out;
}

std::string sha256_hex(std::string_view bytes) {
    Sha256 h;
    h.update(bytes);
    return h.hex_digest();
}

}  // namespace distprm
