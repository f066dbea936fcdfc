#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>

#include "v2g/codec.hpp"

namespace v2g {

using codec::Bytes;
using Digest = std::array<std::uint8_t, 32>;

class CryptoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

Digest sha256(std::span<const std::uint8_t> data);

struct KeyPair {
    Bytes signing_key;
    Bytes verify_key;
};

/// Pluggable signature scheme. Implementations must be deterministic in
/// derive_keypair so that runs are reproducible from a seed.
class SignatureScheme {
public:
    virtual ~SignatureScheme() = default;

    virtual std::string_view name() const = 0;
    virtual KeyPair derive_keypair(std::span<const std::uint8_t> seed) const = 0;
    virtual Bytes sign(std::span<const std::uint8_t> message, std::span<const std::uint8_t> signing_key) const = 0;
    virtual bool verify(std::span<const std::uint8_t> message, std::span<const std::uint8_t> signature,
                        std::span<const std::uint8_t> verify_key) const = 0;
    virtual bool valid_verify_key(std::span<const std::uint8_t> verify_key) const = 0;
};

/// HMAC-SHA256 tag as the signature; the verify key equals the signing key.
/// Bit-reproducible, and only meaningful inside a simulation where the key
/// registry is trusted.
class KeyedDigestScheme final : public SignatureScheme {
public:
    std::string_view name() const override { return "hmac-sha256"; }
    KeyPair derive_keypair(std::span<const std::uint8_t> seed) const override;
    Bytes sign(std::span<const std::uint8_t> message, std::span<const std::uint8_t> signing_key) const override;
    bool verify(std::span<const std::uint8_t> message, std::span<const std::uint8_t> signature,
                std::span<const std::uint8_t> verify_key) const override;
    bool valid_verify_key(std::span<const std::uint8_t> verify_key) const override;
};

/// Ed25519 (libsodium). Deterministic signatures; keypairs derived from a
/// 32-byte seed.
class Ed25519Scheme final : public SignatureScheme {
public:
    Ed25519Scheme();
    std::string_view name() const override { return "ed25519"; }
    KeyPair derive_keypair(std::span<const std::uint8_t> seed) const override;
    Bytes sign(std::span<const std::uint8_t> message, std::span<const std::uint8_t> signing_key) const override;
    bool verify(std::span<const std::uint8_t> message, std::span<const std::uint8_t> signature,
                std::span<const std::uint8_t> verify_key) const override;
    bool valid_verify_key(std::span<const std::uint8_t> verify_key) const override;
};

/// "hmac-sha256" or "ed25519"; throws CryptoError otherwise.
std::shared_ptr<const SignatureScheme> make_scheme(std::string_view name);

struct WalletKey {
    std::string wallet_id;
    Bytes signing_key;
    Bytes verify_key;
    std::uint64_t next_nonce = 0;
};

/// Wallet with a keypair derived from sha256("v2g-wallet" | seed | wallet_id).
WalletKey make_wallet(const SignatureScheme& scheme, std::string wallet_id, std::uint64_t seed);

}  // namespace v2g
