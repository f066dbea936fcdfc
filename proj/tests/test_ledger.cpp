#include <set>
#include <sstream>

#include "doctest.h"
#include "support.hpp"
#include "v2g/codec.hpp"
#include "v2g/crypto.hpp"
#include "v2g/ledger.hpp"

using namespace v2g;
using v2g::testing::Gen;

namespace {

const char* const kSchemes[] = {"hmac-sha256", "ed25519"};

struct Network {
    std::shared_ptr<const SignatureScheme> scheme;
    std::vector<WalletKey> nodes;
    std::vector<WalletKey> users;
    Chain chain;

    Network(const std::string& scheme_name, std::size_t n_nodes, std::size_t n_users, std::uint64_t seed = 3)
        : scheme(make_scheme(scheme_name)) {
        Membership m;
        m.scheme = scheme_name;
        for (std::size_t i = 0; i < n_nodes; ++i) {
            nodes.push_back(make_wallet(*scheme, "scp-" + std::to_string(i), seed));
            m.full_nodes.push_back(nodes.back().wallet_id);
            m.wallets.emplace(nodes.back().wallet_id, nodes.back().verify_key);
        }
        for (std::size_t i = 0; i < n_users; ++i) {
            users.push_back(make_wallet(*scheme, "ev-" + std::to_string(i), seed));
            m.wallets.emplace(users.back().wallet_id, users.back().verify_key);
        }
        chain = Chain::genesis(std::move(m));
    }

    Transaction dispatch(std::size_t user, std::uint64_t slot, double x = 0.25) {
        return make_transaction(DispatchPayload{EvId{user}, x, 1.5 * x}, users[user], slot, *scheme);
    }

    Block vote(Block block, std::size_t voters) const {
        for (std::size_t i = 0; i < voters; ++i) block.votes.push_back(sign_vote(nodes[i], block.header, *scheme));
        return block;
    }

    // Commits one block per slot with every user sending one transaction.
    void grow(std::size_t blocks) {
        for (std::size_t b = 0; b < blocks; ++b) {
            const std::uint64_t slot = chain.last_slot().value_or(0) + 1;
            std::vector<Transaction> txns;
            for (std::size_t u = 0; u < users.size(); ++u) txns.push_back(dispatch(u, slot, 0.1 * (u + 1)));
            auto block = chain.propose(slot, nodes[slot % nodes.size()].wallet_id, std::move(txns));
            chain = append_block(chain, vote(std::move(block), nodes.size() / 2 + 1));
        }
    }

    std::vector<Block> blocks() const {
        std::vector<Block> out;
        for (std::size_t h = 0; h < chain.length(); ++h) out.push_back(chain.block(h));
        return out;
    }
};

}  // namespace

TEST_CASE("signature round trip, bit flips, and wrong keys") {
    for (const char* name : kSchemes) {
        CAPTURE(name);
        const auto scheme = make_scheme(name);
        const auto k = make_wallet(*scheme, "alice", 1);
        const auto k2 = make_wallet(*scheme, "bob", 1);
        const codec::Bytes m{'s', 'l', 'o', 't', ' ', '4', '2'};
        const auto sig = scheme->sign(m, k.signing_key);
        CHECK(scheme->verify(m, sig, k.verify_key));
        CHECK_FALSE(scheme->verify(m, sig, k2.verify_key));
        for (std::size_t bit = 0; bit < m.size() * 8; ++bit) {
            auto m2 = m;
            m2[bit / 8] ^= static_cast<std::uint8_t>(1u << (bit % 8));
            CHECK_FALSE(scheme->verify(m2, sig, k.verify_key));
        }
        for (std::size_t bit = 0; bit < sig.size() * 8; ++bit) {
            auto s2 = sig;
            s2[bit / 8] ^= static_cast<std::uint8_t>(1u << (bit % 8));
            CHECK_FALSE(scheme->verify(m, s2, k.verify_key));
        }
        CHECK(make_wallet(*scheme, "alice", 1).verify_key == k.verify_key);
        CHECK(make_wallet(*scheme, "alice", 2).verify_key != k.verify_key);
        CHECK_FALSE(scheme->valid_verify_key(codec::Bytes(5, 0)));
    }
    CHECK_THROWS_AS(make_scheme("rsa"), CryptoError);
}

TEST_CASE("sha256 known answer") {
    const std::string abc = "abc";
    const auto d = sha256({reinterpret_cast<const std::uint8_t*>(abc.data()), abc.size()});
    CHECK(codec::to_hex(d) == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("transaction admission") {
    for (const char* name : kSchemes) {
        CAPTURE(name);
        Network net(name, 3, 2);
        TxPool pool(1);
        const auto tx = net.dispatch(0, 1);
        CHECK(submit_transaction(pool, tx, net.chain).accepted());

        const auto replay = submit_transaction(pool, tx, net.chain);
        REQUIRE_FALSE(replay.accepted());
        CHECK(*replay.rejected == RejectReason::ReplayedNonce);

        auto tampered = net.dispatch(0, 1);
        std::get<DispatchPayload>(tampered.payload).payment = -100.0;
        CHECK(*submit_transaction(pool, tampered, net.chain).rejected == RejectReason::BadSignature);

        auto forged = net.dispatch(1, 1);
        forged.sender = "ev-0";
        CHECK(*submit_transaction(pool, forged, net.chain).rejected == RejectReason::BadSignature);

        auto stranger = make_wallet(*net.scheme, "mallory", 3);
        const auto unknown = make_transaction(DispatchPayload{}, stranger, 1, *net.scheme);
        CHECK(*submit_transaction(pool, unknown, net.chain).rejected == RejectReason::BadSignature);

        net.users[1].next_nonce = 5;
        CHECK(*submit_transaction(pool, net.dispatch(1, 1), net.chain).rejected == RejectReason::NonceGap);
        net.users[1].next_nonce = 0;

        CHECK(*submit_transaction(pool, net.dispatch(1, 2), net.chain).rejected == RejectReason::StaleSlot);
        CHECK(pool.pending().size() == 1);
    }
}

TEST_CASE("append block with majority votes") {
    for (const char* name : kSchemes) {
        CAPTURE(name);
        Network net(name, 5, 2);
        auto block = net.chain.propose(1, "scp-1", {net.dispatch(0, 1), net.dispatch(1, 1)});
        const auto next = append_block(net.chain, net.vote(block, 3));
        CHECK(next.length() == 2);
        CHECK(next.block(1).header.prev_hash == net.chain.tip().header.digest());
        CHECK(verify_chain(next).ok());
        CHECK(next.next_nonce("ev-0") == 1);
        CHECK(net.chain.length() == 1);  // the original is untouched

        try {
            (void)append_block(net.chain, net.vote(block, 2));
            FAIL("two of five votes accepted");
        } catch (const LedgerError& e) {
            CHECK(e.code() == LedgerError::Code::InsufficientVotes);
        }

        auto dup = net.vote(block, 2);
        dup.votes.push_back(dup.votes.front());
        CHECK_THROWS_AS((void)append_block(net.chain, dup), LedgerError);

        auto forged_vote = net.vote(block, 3);
        forged_vote.votes.push_back(Vote{"scp-4", forged_vote.votes.front().signature});
        CHECK_THROWS_AS((void)append_block(net.chain, forged_vote), LedgerError);

        auto reordered = net.vote(block, 3);
        std::swap(reordered.txns[0], reordered.txns[1]);
        CHECK_THROWS_AS((void)append_block(net.chain, reordered), LedgerError);
    }
}

TEST_CASE("single-node network commits on its own vote") {
    Network net("hmac-sha256", 1, 1);
    const auto block = net.chain.propose(1, "scp-0", {net.dispatch(0, 1)});
    CHECK(append_block(net.chain, net.vote(block, 1)).length() == 2);
    CHECK_THROWS_AS((void)append_block(net.chain, block), LedgerError);
}

TEST_CASE("reordering transactions after sealing breaks verification") {
    Network net("hmac-sha256", 3, 3);
    net.grow(3);
    auto blocks = net.blocks();
    REQUIRE(verify_blocks(blocks).ok());
    std::swap(blocks[2].txns[0], blocks[2].txns[2]);
    const auto r = verify_blocks(blocks);
    CHECK(r.error == VerifyError::BadPayloadHash);
    CHECK(r.height == 2);
}

TEST_CASE("block slots and proposers are checked") {
    Network net("hmac-sha256", 3, 1);
    net.grow(2);
    const auto slot = *net.chain.last_slot();
    auto same_slot = net.chain.propose(slot, "scp-0", {});
    CHECK_THROWS_AS((void)append_block(net.chain, net.vote(same_slot, 2)), LedgerError);
    auto outsider = net.chain.propose(slot + 1, "scp-9", {});
    CHECK_THROWS_AS((void)append_block(net.chain, net.vote(outsider, 2)), LedgerError);
    auto stale_tx = net.chain.propose(slot + 1, "scp-0", {net.dispatch(0, slot)});
    CHECK_THROWS_AS((void)append_block(net.chain, net.vote(stale_tx, 2)), LedgerError);
}

TEST_CASE("tamper completeness on a small chain") {
    for (const char* name : kSchemes) {
        CAPTURE(name);
        Network net(name, 3, 2);
        net.grow(3);
        const auto blocks = net.blocks();
        REQUIRE(verify_blocks(blocks).ok());
        std::size_t mutations = 0;
        for (std::size_t h = 0; h < blocks.size(); ++h) {
            const auto bytes = encode(blocks[h]);
            for (std::size_t i = 0; i < bytes.size(); ++i) {
                for (std::uint8_t mask : {std::uint8_t{0x01}, std::uint8_t{0x80}}) {
                    auto mutated = bytes;
                    mutated[i] ^= mask;
                    ++mutations;
                    auto copy = blocks;
                    try {
                        copy[h] = decode_block(mutated);
                    } catch (const codec::DecodeError&) {
                        continue;  // unreadable counts as rejected
                    }
                    const bool ok = verify_blocks(copy).ok();
                    if (ok) FAIL_CHECK("mutation survived: block " << h << " byte " << i);
                }
            }
        }
        CHECK(mutations > 1000);
    }
}

TEST_CASE("prefixes of a valid chain are valid and headers agree") {
    Network net("hmac-sha256", 4, 3);
    net.grow(6);
    const auto blocks = net.blocks();
    for (std::size_t n = 1; n <= blocks.size(); ++n) {
        const std::vector<Block> prefix(blocks.begin(), blocks.begin() + n);
        CHECK(verify_blocks(prefix).ok());
    }
    const auto headers = net.chain.headers();
    CHECK(verify_header_chain(headers).ok());
    HeaderChain light;
    for (const auto& h : headers) CHECK(extend_header_chain(light, h));
    CHECK(light == headers);
    CHECK_FALSE(extend_header_chain(light, headers[2]));

    auto broken = headers;
    broken[3].payload_hash[0] ^= 1;
    CHECK(verify_header_chain(broken).height == 4);
    CHECK_FALSE(verify_blocks({}).ok());
}

TEST_CASE("ledger export round trip") {
    for (const char* name : kSchemes) {
        Network net(name, 3, 2);
        net.grow(4);
        std::stringstream ss;
        write_ledger(ss, net.chain);
        const auto blocks = read_ledger(ss);
        CHECK(blocks == net.blocks());
        const auto rebuilt = Chain::from_blocks(blocks);
        CHECK(rebuilt.same_as(net.chain));
        CHECK(rebuilt.tip().header.digest() == net.chain.tip().header.digest());

        std::stringstream bad("zz\n");
        CHECK_THROWS_AS(read_ledger(bad), codec::DecodeError);
        std::stringstream odd("abc\n");
        CHECK_THROWS_AS(read_ledger(odd), codec::DecodeError);
    }
}

TEST_CASE("replay is impossible under random submission sequences") {
    Gen g(8);
    for (int trial = 0; trial < 20; ++trial) {
        Network net("hmac-sha256", 3, 3, trial);
        std::vector<Transaction> seen;
        std::set<std::pair<std::string, std::uint64_t>> accepted;
        for (std::uint64_t slot = 1; slot <= 6; ++slot) {
            TxPool pool(slot);
            for (int step = 0; step < 12; ++step) {
                Transaction tx;
                switch (g.below(3)) {
                    case 0:
                        tx = net.dispatch(g.below(3), slot, g.uniform(-1, 1));
                        break;
                    case 1:
                        if (seen.empty()) continue;
                        tx = seen[g.below(seen.size())];
                        break;
                    default: {
                        if (seen.empty()) continue;
                        tx = seen[g.below(seen.size())];
                        tx.slot = slot;  // re-stamped replay
                        break;
                    }
                }
                seen.push_back(tx);
                if (submit_transaction(pool, tx, net.chain).accepted()) {
                    CHECK(accepted.emplace(tx.sender, tx.nonce).second);
                }
            }
            // Wallets whose transactions were refused fall behind; resync them.
            auto block = net.chain.propose(slot, "scp-0", pool.take());
            net.chain = append_block(net.chain, net.vote(std::move(block), 2));
            for (auto& u : net.users) u.next_nonce = net.chain.next_nonce(u.wallet_id);
        }
        CHECK(verify_chain(net.chain).ok());
    }
}
