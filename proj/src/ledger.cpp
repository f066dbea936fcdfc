#include "v2g/ledger.hpp"

#include <algorithm>
#include <istream>
#include <ostream>
#include <set>

namespace v2g {

namespace detail {

struct ChainContext {
    Membership membership;
    std::shared_ptr<const SignatureScheme> scheme;
    std::set<std::string> nodes;
};

}  // namespace detail

using codec::DecodeError;
using codec::Reader;
using codec::Writer;

const char* to_string(TxKind kind) {
    switch (kind) {
        case TxKind::PlugIn: return "PlugIn";
        case TxKind::EvInfo: return "EvInfo";
        case TxKind::OracleUpdate: return "OracleUpdate";
        case TxKind::SolutionProposal: return "SolutionProposal";
        case TxKind::Dispatch: return "Dispatch";
        case TxKind::Settlement: return "Settlement";
    }
    return "?";
}

const char* to_string(VerifyError e) {
    switch (e) {
        case VerifyError::None: return "ok";
        case VerifyError::Empty: return "empty chain";
        case VerifyError::BadGenesis: return "bad genesis block";
        case VerifyError::BadMembership: return "bad membership record";
        case VerifyError::BadHeight: return "height out of sequence";
        case VerifyError::BadLinkage: return "prev_hash does not match previous header";
        case VerifyError::BadPayloadHash: return "payload_hash does not match transactions";
        case VerifyError::BadSlot: return "slot not after previous block";
        case VerifyError::UnknownProposer: return "proposer is not a registered full node";
        case VerifyError::BadSignature: return "transaction signature invalid";
        case VerifyError::BadNonce: return "transaction nonce out of sequence";
        case VerifyError::StaleTransaction: return "transaction slot differs from block slot";
        case VerifyError::BadVote: return "invalid or duplicate vote";
        case VerifyError::InsufficientVotes: return "votes do not exceed half the full nodes";
    }
    return "?";
}

const char* to_string(RejectReason r) {
    switch (r) {
        case RejectReason::BadSignature: return "BadSignature";
        case RejectReason::ReplayedNonce: return "ReplayedNonce";
        case RejectReason::NonceGap: return "NonceGap";
        case RejectReason::StaleSlot: return "StaleSlot";
    }
    return "?";
}

// ---------------------------------------------------------------------------
// Encoding

namespace {

void write_state(Writer& w, const EvChargeState& s) {
    w.u64(s.ev_id.value).f64(s.capacity).f64(s.soc).f64(s.beta).f64(s.a).f64(s.u_idle);
    w.u8(s.departure ? 1 : 0);
    if (s.departure) w.f64(s.departure->target_soc).u32(s.departure->slots_remaining);
}

EvChargeState read_state(Reader& r) {
    EvChargeState s;
    s.ev_id = EvId{r.u64()};
    s.capacity = r.f64();
    s.soc = r.f64();
    s.beta = r.f64();
    s.a = r.f64();
    s.u_idle = r.f64();
    switch (r.u8()) {
        case 0: break;
        case 1: {
            DepartureRequirement d;
            d.target_soc = r.f64();
            d.slots_remaining = r.u32();
            s.departure = d;
            break;
        }
        default: throw DecodeError("bad optional flag");
    }
    return s;
}

void write_breakdown(Writer& w, const RevenueBreakdown& b) {
    w.f64(b.r_service).f64(b.r_grid_v2g).f64(b.c_v2g).f64(b.c_limit).f64(b.total);
}

RevenueBreakdown read_breakdown(Reader& r) {
    RevenueBreakdown b;
    b.r_service = r.f64();
    b.r_grid_v2g = r.f64();
    b.c_v2g = r.f64();
    b.c_limit = r.f64();
    b.total = r.f64();
    return b;
}

struct PayloadWriter {
    Writer& w;
    void operator()(const PlugInPayload& p) const { w.u64(p.ev_id.value).str(p.node_id); }
    void operator()(const EvInfoPayload& p) const { write_state(w, p.state); }
    void operator()(const OracleUpdatePayload& p) const {
        const auto& m = p.params;
        w.f64(m.p_real_time).f64(m.w_service).f64(m.w_grid).f64(m.p_delay).f64(m.p_d_min);
        w.f64(m.p_d_max).f64(m.e0).f64(m.delta).f64(m.epsilon).f64(m.e_limit);
    }
    void operator()(const SolutionProposalPayload& p) const {
        w.f64(p.p_d_star);
        write_breakdown(w, p.breakdown);
    }
    void operator()(const DispatchPayload& p) const { w.u64(p.ev_id.value).f64(p.x).f64(p.payment); }
    void operator()(const SettlementPayload& p) const { w.u64(p.ev_id.value).f64(p.amount); }
};

Payload read_payload(Reader& r, std::uint8_t kind) {
    switch (static_cast<TxKind>(kind)) {
        case TxKind::PlugIn: {
            PlugInPayload p;
            p.ev_id = EvId{r.u64()};
            p.node_id = r.str();
            return p;
        }
        case TxKind::EvInfo: return EvInfoPayload{read_state(r)};
        case TxKind::OracleUpdate: {
            MarketParams m;
            m.p_real_time = r.f64();
            m.w_service = r.f64();
            m.w_grid = r.f64();
            m.p_delay = r.f64();
            m.p_d_min = r.f64();
            m.p_d_max = r.f64();
            m.e0 = r.f64();
            m.delta = r.f64();
            m.epsilon = r.f64();
            m.e_limit = r.f64();
            return OracleUpdatePayload{m};
        }
        case TxKind::SolutionProposal: {
            SolutionProposalPayload p;
            p.p_d_star = r.f64();
            p.breakdown = read_breakdown(r);
            return p;
        }
        case TxKind::Dispatch: {
            DispatchPayload p;
            p.ev_id = EvId{r.u64()};
            p.x = r.f64();
            p.payment = r.f64();
            return p;
        }
        case TxKind::Settlement: {
            SettlementPayload p;
            p.ev_id = EvId{r.u64()};
            p.amount = r.f64();
            return p;
        }
    }
    throw DecodeError("unknown transaction kind " + std::to_string(kind));
}

void write_unsigned(Writer& w, const Transaction& tx) {
    w.u8(static_cast<std::uint8_t>(tx.kind()));
    std::visit(PayloadWriter{w}, tx.payload);
    w.str(tx.sender).u64(tx.nonce).u64(tx.slot);
}

void write_tx(Writer& w, const Transaction& tx) {
    write_unsigned(w, tx);
    w.bytes(tx.signature);
}

Transaction read_tx(Reader& r) {
    Transaction tx;
    const auto kind = r.u8();
    tx.payload = read_payload(r, kind);
    tx.sender = r.str();
    tx.nonce = r.u64();
    tx.slot = r.u64();
    tx.signature = r.bytes();
    return tx;
}

void write_header(Writer& w, const BlockHeader& h) {
    w.u64(h.height).u64(h.slot).raw(h.prev_hash).raw(h.payload_hash).str(h.proposer);
}

BlockHeader read_header(Reader& r) {
    BlockHeader h;
    h.height = r.u64();
    h.slot = r.u64();
    auto prev = r.raw(32);
    std::copy(prev.begin(), prev.end(), h.prev_hash.begin());
    auto payload = r.raw(32);
    std::copy(payload.begin(), payload.end(), h.payload_hash.begin());
    h.proposer = r.str();
    return h;
}

void write_membership(Writer& w, const std::optional<Membership>& m) {
    w.u8(m ? 1 : 0);
    if (!m) return;
    w.str(m->scheme);
    w.count(m->full_nodes.size());
    for (const auto& n : m->full_nodes) w.str(n);
    w.count(m->wallets.size());
    for (const auto& [id, key] : m->wallets) w.str(id).bytes(key);
}

std::optional<Membership> read_membership(Reader& r) {
    switch (r.u8()) {
        case 0: return std::nullopt;
        case 1: break;
        default: throw DecodeError("bad optional flag");
    }
    Membership m;
    m.scheme = r.str();
    const auto nodes = r.count(4);
    for (std::size_t i = 0; i < nodes; ++i) m.full_nodes.push_back(r.str());
    const auto wallets = r.count(8);
    for (std::size_t i = 0; i < wallets; ++i) {
        auto id = r.str();
        auto key = r.bytes();
        if (!m.wallets.emplace(std::move(id), std::move(key)).second) throw DecodeError("duplicate wallet id");
    }
    return m;
}

}  // namespace

Bytes Transaction::signing_message() const {
    Writer w;
    write_unsigned(w, *this);
    return w.take();
}

Bytes encode(const Transaction& tx) {
    Writer w;
    write_tx(w, tx);
    return w.take();
}

Bytes encode(const BlockHeader& header) {
    Writer w;
    write_header(w, header);
    return w.take();
}

Bytes encode(const Block& block) {
    Writer w;
    write_header(w, block.header);
    w.count(block.txns.size());
    for (const auto& tx : block.txns) write_tx(w, tx);
    w.count(block.votes.size());
    for (const auto& v : block.votes) w.str(v.node_id).bytes(v.signature);
    write_membership(w, block.membership);
    return w.take();
}

Block decode_block(std::span<const std::uint8_t> data) {
    Reader r(data);
    Block b;
    b.header = read_header(r);
    const auto ntx = r.count(1 + 4 + 8 + 8 + 4);
    b.txns.reserve(ntx);
    for (std::size_t i = 0; i < ntx; ++i) b.txns.push_back(read_tx(r));
    const auto nvotes = r.count(8);
    for (std::size_t i = 0; i < nvotes; ++i) {
        Vote v;
        v.node_id = r.str();
        v.signature = r.bytes();
        b.votes.push_back(std::move(v));
    }
    b.membership = read_membership(r);
    r.expect_done();
    return b;
}

Digest BlockHeader::digest() const { return sha256(encode(*this)); }

Digest payload_digest(const std::optional<Membership>& membership, std::span<const Transaction> txns) {
    Writer w;
    write_membership(w, membership);
    w.count(txns.size());
    for (const auto& tx : txns) write_tx(w, tx);
    return sha256(w.data());
}

Transaction make_transaction(Payload payload, WalletKey& wallet, std::uint64_t slot, const SignatureScheme& scheme) {
    Transaction tx{std::move(payload), wallet.wallet_id, wallet.next_nonce, slot, {}};
    tx.signature = scheme.sign(tx.signing_message(), wallet.signing_key);
    ++wallet.next_nonce;
    return tx;
}

Bytes vote_message(const Digest& header_digest) {
    Writer w;
    w.str("v2g-vote").raw(header_digest);
    return w.take();
}

Vote sign_vote(const WalletKey& node_wallet, const BlockHeader& header, const SignatureScheme& scheme) {
    return Vote{node_wallet.wallet_id, scheme.sign(vote_message(header.digest()), node_wallet.signing_key)};
}

// ---------------------------------------------------------------------------
// Validation

namespace {

using Context = detail::ChainContext;
using NonceMap = std::map<std::string, std::uint64_t>;

struct TipState {
    Digest digest{};
    std::uint64_t height = 0;
    std::optional<std::uint64_t> last_slot;
    NonceMap nonces;
};

VerifyResult failure(VerifyError e, std::uint64_t height, std::string detail = {}) {
    return VerifyResult{e, height, std::move(detail)};
}

// Builds the context from a genesis block, or reports why it is unusable.
std::shared_ptr<const Context> make_context(const Block& genesis, VerifyResult& result) {
    const auto& h = genesis.header;
    if (h.height != 0 || h.slot != 0 || h.prev_hash != Digest{} || !h.proposer.empty() || !genesis.txns.empty() ||
        !genesis.votes.empty() || !genesis.membership) {
        result = failure(VerifyError::BadGenesis, 0);
        return nullptr;
    }
    if (h.payload_hash != payload_digest(genesis.membership, genesis.txns)) {
        result = failure(VerifyError::BadPayloadHash, 0);
        return nullptr;
    }
    auto ctx = std::make_shared<Context>();
    ctx->membership = *genesis.membership;
    try {
        ctx->scheme = make_scheme(ctx->membership.scheme);
    } catch (const CryptoError& e) {
        result = failure(VerifyError::BadMembership, 0, e.what());
        return nullptr;
    }
    for (const auto& node : ctx->membership.full_nodes) {
        if (!ctx->nodes.insert(node).second || !ctx->membership.wallets.contains(node)) {
            result = failure(VerifyError::BadMembership, 0, "full node '" + node + "' duplicated or without key");
            return nullptr;
        }
    }
    if (ctx->nodes.empty()) {
        result = failure(VerifyError::BadMembership, 0, "no full nodes");
        return nullptr;
    }
    for (const auto& [id, key] : ctx->membership.wallets) {
        if (!ctx->scheme->valid_verify_key(key)) {
            result = failure(VerifyError::BadMembership, 0, "malformed key for '" + id + "'");
            return nullptr;
        }
    }
    result = {};
    return ctx;
}

VerifyResult check_transaction(const Context& ctx, const Transaction& tx, std::uint64_t height, std::uint64_t slot,
                               NonceMap& nonces) {
    const auto key = ctx.membership.wallets.find(tx.sender);
    if (key == ctx.membership.wallets.end() || !ctx.scheme->verify(tx.signing_message(), tx.signature, key->second))
        return failure(VerifyError::BadSignature, height, tx.sender + " nonce " + std::to_string(tx.nonce));
    if (tx.slot != slot) return failure(VerifyError::StaleTransaction, height, tx.sender);
    auto& next = nonces[tx.sender];
    if (tx.nonce != next)
        return failure(VerifyError::BadNonce, height,
                       tx.sender + " expected " + std::to_string(next) + " got " + std::to_string(tx.nonce));
    ++next;
    return {};
}

VerifyResult check_block(const Context& ctx, const TipState& tip, const Block& block, NonceMap& nonces) {
    const auto& h = block.header;
    const auto height = tip.height + 1;
    if (h.height != height) return failure(VerifyError::BadHeight, height);
    if (h.prev_hash != tip.digest) return failure(VerifyError::BadLinkage, height);
    if (block.membership) return failure(VerifyError::BadMembership, height, "membership outside genesis");
    if (h.payload_hash != payload_digest(block.membership, block.txns)) return failure(VerifyError::BadPayloadHash, height);
    if (tip.last_slot && h.slot <= *tip.last_slot) return failure(VerifyError::BadSlot, height);
    if (!ctx.nodes.contains(h.proposer)) return failure(VerifyError::UnknownProposer, height, h.proposer);

    for (const auto& tx : block.txns) {
        if (auto r = check_transaction(ctx, tx, height, h.slot, nonces); !r) return r;
    }

    const auto message = vote_message(h.digest());
    std::set<std::string> voters;
    for (const auto& v : block.votes) {
        if (!ctx.nodes.contains(v.node_id) || !voters.insert(v.node_id).second ||
            !ctx.scheme->verify(message, v.signature, ctx.membership.wallets.at(v.node_id)))
            return failure(VerifyError::BadVote, height, v.node_id);
    }
    if (voters.size() * 2 <= ctx.nodes.size())
        return failure(VerifyError::InsufficientVotes, height,
                       std::to_string(voters.size()) + " of " + std::to_string(ctx.nodes.size()));
    return {};
}

template <typename BlockAt>
VerifyResult verify_sequence(std::size_t n, BlockAt&& block_at) {
    if (n == 0) return failure(VerifyError::Empty, 0);
    VerifyResult result;
    const auto ctx = make_context(block_at(0), result);
    if (!ctx) return result;
    TipState tip{block_at(0).header.digest(), 0, std::nullopt, {}};
    for (std::size_t i = 1; i < n; ++i) {
        const Block& b = block_at(i);
        if (auto r = check_block(*ctx, tip, b, tip.nonces); !r) return r;
        tip.digest = b.header.digest();
        tip.height = b.header.height;
        tip.last_slot = b.header.slot;
    }
    return {};
}

LedgerError::Code code_for(VerifyError e) {
    switch (e) {
        case VerifyError::InsufficientVotes: return LedgerError::Code::InsufficientVotes;
        case VerifyError::BadSignature:
        case VerifyError::BadNonce:
        case VerifyError::StaleTransaction: return LedgerError::Code::InvalidTransaction;
        default: return LedgerError::Code::InvalidBlock;
    }
}

[[noreturn]] void raise(const VerifyResult& r) {
    std::string msg = std::string("block ") + std::to_string(r.height) + ": " + to_string(r.error);
    if (!r.detail.empty()) msg += " (" + r.detail + ")";
    throw LedgerError(code_for(r.error), msg);
}

}  // namespace

// ---------------------------------------------------------------------------
// Chain

Chain Chain::genesis(Membership membership) {
    Block g;
    g.membership = std::move(membership);
    g.header.payload_hash = payload_digest(g.membership, g.txns);
    return from_blocks({std::move(g)});
}

Chain Chain::from_blocks(std::vector<Block> blocks) {
    if (auto r = verify_blocks(blocks); !r) raise(r);
    Chain c;
    VerifyResult unused;
    c.context_ = make_context(blocks.front(), unused);
    auto nonces = std::make_shared<NonceMap>();
    for (auto& b : blocks) {
        for (const auto& tx : b.txns) ++(*nonces)[tx.sender];
        c.blocks_.push_back(std::make_shared<const Block>(std::move(b)));
    }
    c.nonces_ = std::move(nonces);
    return c;
}

std::vector<BlockHeader> Chain::headers() const {
    std::vector<BlockHeader> out;
    out.reserve(blocks_.size());
    for (const auto& b : blocks_) out.push_back(b->header);
    return out;
}

const Membership& Chain::membership() const { return context_->membership; }
const SignatureScheme& Chain::scheme() const { return *context_->scheme; }

const Bytes* Chain::verify_key(const std::string& wallet_id) const {
    const auto it = context_->membership.wallets.find(wallet_id);
    return it == context_->membership.wallets.end() ? nullptr : &it->second;
}

bool Chain::is_full_node(const std::string& node_id) const { return context_->nodes.contains(node_id); }
std::size_t Chain::full_node_count() const { return context_->nodes.size(); }

std::uint64_t Chain::next_nonce(const std::string& wallet_id) const {
    const auto it = nonces_->find(wallet_id);
    return it == nonces_->end() ? 0 : it->second;
}

std::optional<std::uint64_t> Chain::last_slot() const {
    if (blocks_.size() < 2) return std::nullopt;
    return blocks_.back()->header.slot;
}

Block Chain::propose(std::uint64_t slot, const std::string& proposer, std::vector<Transaction> txns) const {
    Block b;
    b.header.height = tip().header.height + 1;
    b.header.slot = slot;
    b.header.prev_hash = tip().header.digest();
    b.header.proposer = proposer;
    b.header.payload_hash = payload_digest(std::nullopt, txns);
    b.txns = std::move(txns);
    return b;
}

bool Chain::same_as(const Chain& other) const {
    if (blocks_.size() != other.blocks_.size()) return false;
    for (std::size_t i = 0; i < blocks_.size(); ++i) {
        if (blocks_[i] != other.blocks_[i] && encode(*blocks_[i]) != encode(*other.blocks_[i])) return false;
    }
    return true;
}

Chain append_block(const Chain& chain, Block block) {
    TipState tip{chain.tip().header.digest(), chain.tip().header.height, chain.last_slot(), {}};
    auto nonces = std::make_shared<NonceMap>(*chain.nonces_);
    if (auto r = check_block(*chain.context_, tip, block, *nonces); !r) raise(r);
    Chain next = chain;
    next.blocks_.push_back(std::make_shared<const Block>(std::move(block)));
    next.nonces_ = std::move(nonces);
    return next;
}

VerifyResult verify_chain(const Chain& chain) {
    return verify_sequence(chain.blocks_.size(), [&](std::size_t i) -> const Block& { return *chain.blocks_[i]; });
}

VerifyResult verify_blocks(std::span<const Block> blocks) {
    return verify_sequence(blocks.size(), [&](std::size_t i) -> const Block& { return blocks[i]; });
}

VerifyResult verify_header_chain(std::span<const BlockHeader> headers) {
    if (headers.empty()) return failure(VerifyError::Empty, 0);
    if (headers[0].height != 0 || headers[0].prev_hash != Digest{}) return failure(VerifyError::BadGenesis, 0);
    for (std::size_t i = 1; i < headers.size(); ++i) {
        if (headers[i].height != i) return failure(VerifyError::BadHeight, i);
        if (headers[i].prev_hash != headers[i - 1].digest()) return failure(VerifyError::BadLinkage, i);
    }
    return {};
}

bool extend_header_chain(HeaderChain& headers, const BlockHeader& next) {
    if (headers.empty()) {
        if (next.height != 0 || next.prev_hash != Digest{}) return false;
    } else if (next.height != headers.back().height + 1 || next.prev_hash != headers.back().digest()) {
        return false;
    }
    headers.push_back(next);
    return true;
}

// ---------------------------------------------------------------------------
// Pool

SubmitResult submit_transaction(TxPool& pool, Transaction tx, const Chain& chain) {
    const Bytes* key = chain.verify_key(tx.sender);
    if (!key || !chain.scheme().verify(tx.signing_message(), tx.signature, *key))
        return {RejectReason::BadSignature};
    const auto overlay = pool.next_nonce_.find(tx.sender);
    const auto expected = overlay != pool.next_nonce_.end() ? overlay->second : chain.next_nonce(tx.sender);
    if (tx.nonce < expected) return {RejectReason::ReplayedNonce};
    if (tx.nonce > expected) return {RejectReason::NonceGap};
    if (tx.slot != pool.slot()) return {RejectReason::StaleSlot};
    pool.next_nonce_[tx.sender] = tx.nonce + 1;
    pool.pending_.push_back(std::move(tx));
    return {};
}

// ---------------------------------------------------------------------------
// File format

void write_ledger(std::ostream& out, const Chain& chain) {
    for (std::size_t h = 0; h < chain.length(); ++h) out << codec::to_hex(encode(chain.block(h))) << '\n';
}

std::vector<Block> read_ledger(std::istream& in) {
    std::vector<Block> blocks;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        try {
            if (line.empty()) throw DecodeError("empty line");
            blocks.push_back(decode_block(codec::from_hex(line)));
        } catch (const DecodeError& e) {
            throw DecodeError("line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    if (blocks.empty()) throw DecodeError("ledger file contains no blocks");
    return blocks;
}

}  // namespace v2g
