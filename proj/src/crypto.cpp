#include "v2g/crypto.hpp"

#include <openssl/crypto.h>
#include <openssl/evp.h>
#include <openssl/hmac.h>
#include <sodium.h>

namespace v2g {

Digest sha256(std::span<const std::uint8_t> data) {
    Digest out{};
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), out.data(), &len, EVP_sha256(), nullptr) != 1 || len != out.size())
        throw CryptoError("sha256 failed");
    return out;
}

KeyPair KeyedDigestScheme::derive_keypair(std::span<const std::uint8_t> seed) const {
    const auto key = sha256(seed);
    Bytes k(key.begin(), key.end());
    return {k, k};
}

Bytes KeyedDigestScheme::sign(std::span<const std::uint8_t> message, std::span<const std::uint8_t> signing_key) const {
    if (signing_key.size() != 32) throw CryptoError("hmac-sha256: signing key must be 32 bytes");
    Bytes tag(32);
    unsigned int len = 0;
    if (!HMAC(EVP_sha256(), signing_key.data(), static_cast<int>(signing_key.size()), message.data(), message.size(),
              tag.data(), &len) ||
        len != tag.size())
        throw CryptoError("hmac-sha256 failed");
    return tag;
}

bool KeyedDigestScheme::verify(std::span<const std::uint8_t> message, std::span<const std::uint8_t> signature,
                               std::span<const std::uint8_t> verify_key) const {
    if (verify_key.size() != 32 || signature.size() != 32) return false;
    const auto expected = sign(message, verify_key);
    return CRYPTO_memcmp(expected.data(), signature.data(), expected.size()) == 0;
}

bool KeyedDigestScheme::valid_verify_key(std::span<const std::uint8_t> verify_key) const {
    return verify_key.size() == 32;
}

Ed25519Scheme::Ed25519Scheme() {
    if (sodium_init() < 0) throw CryptoError("libsodium initialisation failed");
}

KeyPair Ed25519Scheme::derive_keypair(std::span<const std::uint8_t> seed) const {
    const auto s = sha256(seed);
    KeyPair kp{Bytes(crypto_sign_SECRETKEYBYTES), Bytes(crypto_sign_PUBLICKEYBYTES)};
    crypto_sign_seed_keypair(kp.verify_key.data(), kp.signing_key.data(), s.data());
    return kp;
}

Bytes Ed25519Scheme::sign(std::span<const std::uint8_t> message, std::span<const std::uint8_t> signing_key) const {
    if (signing_key.size() != crypto_sign_SECRETKEYBYTES) throw CryptoError("ed25519: malformed signing key");
    Bytes sig(crypto_sign_BYTES);
    crypto_sign_detached(sig.data(), nullptr, message.data(), message.size(), signing_key.data());
    return sig;
}

bool Ed25519Scheme::verify(std::span<const std::uint8_t> message, std::span<const std::uint8_t> signature,
                           std::span<const std::uint8_t> verify_key) const {
    if (signature.size() != crypto_sign_BYTES || verify_key.size() != crypto_sign_PUBLICKEYBYTES) return false;
    return crypto_sign_verify_detached(signature.data(), message.data(), message.size(), verify_key.data()) == 0;
}

bool Ed25519Scheme::valid_verify_key(std::span<const std::uint8_t> verify_key) const {
    return verify_key.size() == crypto_sign_PUBLICKEYBYTES;
}

std::shared_ptr<const SignatureScheme> make_scheme(std::string_view name) {
    if (name == "hmac-sha256") return std::make_shared<KeyedDigestScheme>();
    if (name == "ed25519") return std::make_shared<Ed25519Scheme>();
    throw CryptoError("unknown signature scheme '" + std::string(name) + "'");
}

WalletKey make_wallet(const SignatureScheme& scheme, std::string wallet_id, std::uint64_t seed) {
    codec::Writer w;
    w.str("v2g-wallet").u64(seed).str(wallet_id);
    auto kp = scheme.derive_keypair(w.data());
    return WalletKey{std::move(wallet_id), std::move(kp.signing_key), std::move(kp.verify_key), 0};
}

}  // namespace v2g
