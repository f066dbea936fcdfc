#pragma once

// In-process permissioned ledger.
//
// Transactions are signed by a registered wallet and carry a per-wallet nonce
// that must advance by exactly one per accepted transaction, and the slot they
// were created in. Blocks are hash-linked through their headers and approved by
// a strict majority of the registered full nodes, each vote being a signature
// over the header digest. The genesis block carries the membership (signature
// scheme, full nodes, wallet verify keys) so an exported ledger file can be
// verified on its own.
//
// Encodings (see codec.hpp for primitives):
//   Transaction  u8 kind | payload | str sender | u64 nonce | u64 slot | bytes signature
//                (the signature covers every field before it)
//   BlockHeader  u64 height | u64 slot | 32B prev_hash | 32B payload_hash | str proposer
//   Block        header | list<Transaction> | list<(str node_id, bytes sig)> |
//                u8 has_membership [ str scheme | list<str> full_nodes | list<(str id, bytes key)> ]
//   payload_hash = sha256(u8 has_membership [membership] | list<Transaction>)

#include <cstdint>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "v2g/crypto.hpp"
#include "v2g/market.hpp"

namespace v2g {

enum class TxKind : std::uint8_t { PlugIn = 1, EvInfo, OracleUpdate, SolutionProposal, Dispatch, Settlement };

const char* to_string(TxKind kind);

struct PlugInPayload {
    EvId ev_id;
    std::string node_id;
    bool operator==(const PlugInPayload&) const = default;
};

struct EvInfoPayload {
    EvChargeState state;
    bool operator==(const EvInfoPayload&) const = default;
};

struct OracleUpdatePayload {
    MarketParams params;
    bool operator==(const OracleUpdatePayload&) const = default;
};

struct SolutionProposalPayload {
    double p_d_star = 0.0;
    RevenueBreakdown breakdown;
    bool operator==(const SolutionProposalPayload&) const = default;
};

struct DispatchPayload {
    EvId ev_id;
    double x = 0.0;
    double payment = 0.0;  // CNY paid by the EV; negative when the EV is credited
    bool operator==(const DispatchPayload&) const = default;
};

struct SettlementPayload {
    EvId ev_id;
    double amount = 0.0;  // same sign convention as DispatchPayload::payment
    bool operator==(const SettlementPayload&) const = default;
};

// Alternative order matches TxKind.
using Payload = std::variant<PlugInPayload, EvInfoPayload, OracleUpdatePayload, SolutionProposalPayload,
                             DispatchPayload, SettlementPayload>;

struct Transaction {
    Payload payload;
    std::string sender;
    std::uint64_t nonce = 0;
    std::uint64_t slot = 0;
    Bytes signature;

    TxKind kind() const { return static_cast<TxKind>(payload.index() + 1); }
    Bytes signing_message() const;
    bool operator==(const Transaction&) const = default;
};

/// Signs with the wallet's next nonce and advances it.
Transaction make_transaction(Payload payload, WalletKey& wallet, std::uint64_t slot, const SignatureScheme& scheme);

struct BlockHeader {
    std::uint64_t height = 0;
    std::uint64_t slot = 0;
    Digest prev_hash{};
    Digest payload_hash{};
    std::string proposer;

    Digest digest() const;
    bool operator==(const BlockHeader&) const = default;
};

struct Vote {
    std::string node_id;
    Bytes signature;
    bool operator==(const Vote&) const = default;
};

struct Membership {
    std::string scheme;
    std::vector<std::string> full_nodes;
    std::map<std::string, Bytes> wallets;  // wallet_id -> verify key
    bool operator==(const Membership&) const = default;
};

struct Block {
    BlockHeader header;
    std::vector<Transaction> txns;
    std::vector<Vote> votes;
    std::optional<Membership> membership;  // genesis only
    bool operator==(const Block&) const = default;
};

Bytes encode(const Transaction& tx);
Bytes encode(const BlockHeader& header);
Bytes encode(const Block& block);
Block decode_block(std::span<const std::uint8_t> data);

Digest payload_digest(const std::optional<Membership>& membership, std::span<const Transaction> txns);

Bytes vote_message(const Digest& header_digest);
Vote sign_vote(const WalletKey& node_wallet, const BlockHeader& header, const SignatureScheme& scheme);

enum class VerifyError : std::uint8_t {
    None,
    Empty,
    BadGenesis,
    BadMembership,
    BadHeight,
    BadLinkage,
    BadPayloadHash,
    BadSlot,
    UnknownProposer,
    BadSignature,
    BadNonce,
    StaleTransaction,
    BadVote,
    InsufficientVotes,
};

const char* to_string(VerifyError e);

struct VerifyResult {
    VerifyError error = VerifyError::None;
    std::uint64_t height = 0;  // first failing height when error != None
    std::string detail;

    bool ok() const { return error == VerifyError::None; }
    explicit operator bool() const { return ok(); }
};

namespace detail {
struct ChainContext;
}

class LedgerError : public std::runtime_error {
public:
    enum class Code { InsufficientVotes, InvalidTransaction, InvalidBlock };
    LedgerError(Code code, const std::string& what) : std::runtime_error(what), code_(code) {}
    Code code() const { return code_; }

private:
    Code code_;
};

/// Immutable-by-value chain. Blocks and the membership context are shared
/// between copies, so handing every full node its own Chain is cheap.
class Chain {
public:
    static Chain genesis(Membership membership);
    /// Verifies the blocks and builds the chain; throws LedgerError when invalid.
    static Chain from_blocks(std::vector<Block> blocks);

    std::size_t length() const { return blocks_.size(); }
    const Block& block(std::size_t height) const { return *blocks_.at(height); }
    const Block& tip() const { return *blocks_.back(); }
    std::vector<BlockHeader> headers() const;

    const Membership& membership() const;
    const SignatureScheme& scheme() const;
    const Bytes* verify_key(const std::string& wallet_id) const;
    bool is_full_node(const std::string& node_id) const;
    std::size_t full_node_count() const;

    std::uint64_t next_nonce(const std::string& wallet_id) const;
    /// Slot of the last non-genesis block, if any.
    std::optional<std::uint64_t> last_slot() const;

    /// Header for a block on top of this chain; votes are collected separately.
    Block propose(std::uint64_t slot, const std::string& proposer, std::vector<Transaction> txns) const;

    bool same_as(const Chain& other) const;

private:
    friend Chain append_block(const Chain& chain, Block block);
    friend VerifyResult verify_chain(const Chain& chain);

    std::vector<std::shared_ptr<const Block>> blocks_;
    std::shared_ptr<const detail::ChainContext> context_;
    std::shared_ptr<const std::map<std::string, std::uint64_t>> nonces_;
};

/// Validates the block against the chain tip (linkage, payload digest,
/// signatures, nonces, slot, votes) and returns the extended chain.
Chain append_block(const Chain& chain, Block block);

/// Full-node check: everything append_block checks, replayed from genesis.
VerifyResult verify_chain(const Chain& chain);
VerifyResult verify_blocks(std::span<const Block> blocks);

using HeaderChain = std::vector<BlockHeader>;

/// Light-client check: heights, genesis, and hash linkage only.
VerifyResult verify_header_chain(std::span<const BlockHeader> headers);
/// Appends after checking linkage against the current tip.
bool extend_header_chain(HeaderChain& headers, const BlockHeader& next);

enum class RejectReason : std::uint8_t {
    BadSignature,  // forged, tampered, or unregistered sender
    ReplayedNonce, // nonce already consumed
    NonceGap,      // nonce skips ahead of the sender's next nonce
    StaleSlot,     // created for another slot
};

const char* to_string(RejectReason r);

struct SubmitResult {
    std::optional<RejectReason> rejected;
    bool accepted() const { return !rejected; }
};

/// Pending transactions for one slot, with a nonce overlay on top of the chain.
class TxPool {
public:
    explicit TxPool(std::uint64_t slot) : slot_(slot) {}

    std::uint64_t slot() const { return slot_; }
    const std::vector<Transaction>& pending() const { return pending_; }
    std::vector<Transaction> take() { return std::move(pending_); }

private:
    friend SubmitResult submit_transaction(TxPool& pool, Transaction tx, const Chain& chain);

    std::uint64_t slot_;
    std::vector<Transaction> pending_;
    std::map<std::string, std::uint64_t> next_nonce_;
};

SubmitResult submit_transaction(TxPool& pool, Transaction tx, const Chain& chain);

/// One hex-encoded block per line, genesis first.
void write_ledger(std::ostream& out, const Chain& chain);
/// Throws codec::DecodeError on malformed input. No validity checks.
std::vector<Block> read_ledger(std::istream& in);

}  // namespace v2g
