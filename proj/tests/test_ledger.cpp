#include <gtest/gtest.h>

#include <json.hpp>
#include <sstream>

#include "oracle.hpp"
#include "v2g/ledger.hpp"

using namespace v2g;
using namespace v2g::ledger;

namespace {

LedgerEntry tx_entry(std::string pid, std::uint32_t slot, std::int64_t wh, std::int64_t micros) {
  TransactionRecord t{std::move(pid), "evcs-1", slot, Energy::wh(wh), Money::micros(micros), 1000 + slot};
  return {EntryKind::TransactionRecord, t.encode(), 1000 + slot, "contract"};
}

LedgerEntry dispute_entry(std::string pid, std::uint32_t slot) {
  DisputeRecord d{std::move(pid), "evcs-1", slot, DisputeCause::PaymentDefault,
                  Energy::wh(20000), std::nullopt, Money::micros(4'500'000), 7};
  return {EntryKind::DisputeRecord, d.encode(), 7, "contract"};
}

LedgerEntry anchor_entry(std::uint8_t fill) {
  CredentialAnchor a;
  a.credential_id.mutable_view()[0] = fill;
  a.subject = "subject-" + std::to_string(fill);
  a.expiry = 99;
  return {EntryKind::CredentialAnchor, a.encode(), 1, "v2g-ca"};
}

Ledger sample_chain(std::size_t blocks, crypto::Drbg& rng) {
  Ledger l;
  for (std::size_t b = 0; b < blocks; ++b) {
    const auto n = rng.below(4);
    for (std::uint64_t i = 0; i < n; ++i) {
      switch (rng.below(3)) {
        case 0: l.append_entry(anchor_entry(static_cast<std::uint8_t>(rng.below(256)))); break;
        case 1: l.append_entry(tx_entry("pid-" + std::to_string(rng.below(50)), static_cast<std::uint32_t>(b),
                                        static_cast<std::int64_t>(rng.below(40000)) - 20000,
                                        static_cast<std::int64_t>(rng.below(9'000'000))));
          break;
        default: l.append_entry(dispute_entry("pid-" + std::to_string(rng.below(50)), static_cast<std::uint32_t>(b)));
      }
    }
    l.seal_block();
  }
  return l;
}

// Hand-rolled canonical encoding of a block header and entries.
std::string oracle_block_hash(const Block& b) {
  oracle::Bytes in;
  oracle::put_be(in, b.height, 8);
  oracle::put(in, b.prev_hash.array());
  oracle::put_be(in, b.entries.size(), 4);
  for (const auto& e : b.entries) {
    in.push_back(static_cast<std::uint8_t>(e.kind));
    oracle::put_be(in, e.payload.size(), 4);
    oracle::put(in, e.payload);
    oracle::put_be(in, static_cast<std::uint64_t>(e.timestamp), 8);
    oracle::put_be(in, e.author.size(), 2);
    oracle::put(in, std::string_view(e.author));
  }
  return oracle::hex(oracle::sha256(in));
}

Errc error_of(auto&& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error raised";
  return Errc::IoFailure;
}

}  // namespace

TEST(Ledger, SealKeepsSubmissionOrder) {
  Ledger l;
  l.append_entry(tx_entry("a", 0, 1, 1));
  l.append_entry(tx_entry("b", 0, 2, 2));
  l.append_entry(tx_entry("c", 0, 3, 3));
  const auto& b = l.seal_block();
  ASSERT_EQ(b.entries.size(), 3u);
  EXPECT_EQ(TransactionRecord::decode(b.entries[0].payload).pid, "a");
  EXPECT_EQ(TransactionRecord::decode(b.entries[1].payload).pid, "b");
  EXPECT_EQ(TransactionRecord::decode(b.entries[2].payload).pid, "c");
  EXPECT_EQ(l.pending(), 0u);
  Query q;
  q.pid = "b";
  EXPECT_EQ(l.query(q).size(), 1u);
}

TEST(Ledger, MalformedEntriesRejected) {
  Ledger l;
  EXPECT_EQ(error_of([&] { l.append_entry({EntryKind::TransactionRecord, {1, 2, 3}, 0, "x"}); }),
            Errc::MalformedEntry);
  auto good = tx_entry("a", 0, 1, 1);
  good.payload.push_back(0);  // trailing byte: decodes differently from its re-encoding
  EXPECT_EQ(error_of([&] { l.append_entry(good); }), Errc::MalformedEntry);
  auto wrong_kind = tx_entry("a", 0, 1, 1);
  wrong_kind.kind = EntryKind::CredentialAnchor;
  EXPECT_EQ(error_of([&] { l.append_entry(wrong_kind); }), Errc::MalformedEntry);
  EXPECT_EQ(l.pending(), 0u);
}

TEST(Ledger, EmptyBlocksAndHeights) {
  Ledger l;
  const auto& g = l.seal_block();
  EXPECT_EQ(g.height, 0u);
  EXPECT_EQ(g.prev_hash, crypto::Digest32{});
  EXPECT_TRUE(g.entries.empty());
  for (std::uint64_t h = 1; h < 5; ++h) EXPECT_EQ(l.seal_block().height, h);
  EXPECT_TRUE(l.verify_chain());
  EXPECT_EQ(l.blocks()[3].prev_hash, l.blocks()[2].block_hash);
}

TEST(Ledger, BlockHashMatchesIndependentRecomputation) {
  auto rng = crypto::Drbg::from_u64(31);
  auto l = sample_chain(20, rng);
  for (const auto& b : l.blocks()) EXPECT_EQ(b.block_hash.hex(), oracle_block_hash(b));
}

TEST(Ledger, HundredBlockChainVerifies) {
  auto rng = crypto::Drbg::from_u64(32);
  EXPECT_TRUE(sample_chain(100, rng).verify_chain());
}

TEST(Ledger, SingleByteFlipInAnyEntryDetected) {
  auto rng = crypto::Drbg::from_u64(33);
  const auto base = sample_chain(100, rng);
  int trials = 0;
  while (trials < 50) {
    auto blocks = base.blocks();
    auto& b = blocks[rng.below(blocks.size())];
    if (b.entries.empty()) continue;
    auto& e = b.entries[rng.below(b.entries.size())];
    ByteWriter w;
    e.encode_into(w);
    auto bytes = w.view();
    bytes[rng.below(bytes.size())] ^= static_cast<std::uint8_t>(1 + rng.below(255));
    try {
      ByteReader r(bytes);
      e = LedgerEntry::decode_from(r);
      r.expect_end();
    } catch (const Error&) {
      ++trials;  // no longer a parseable entry
      continue;
    }
    EXPECT_FALSE(Ledger::from_blocks(std::move(blocks)).verify_chain());
    ++trials;
  }
}

TEST(Ledger, SwappedBlocksBreakTheChain) {
  auto rng = crypto::Drbg::from_u64(34);
  auto blocks = sample_chain(10, rng).blocks();
  std::swap(blocks[3], blocks[4]);
  EXPECT_FALSE(Ledger::from_blocks(blocks).verify_chain());
  std::swap(blocks[3], blocks[4]);
  EXPECT_TRUE(Ledger::from_blocks(blocks).verify_chain());
  blocks[4].height = 3;
  blocks[4].block_hash = blocks[4].compute_hash();
  EXPECT_FALSE(Ledger::from_blocks(blocks).verify_chain());
}

TEST(Ledger, QueryFilters) {
  Ledger l;
  auto anchor = anchor_entry(7);
  l.append_entry(anchor);
  l.append_entry(tx_entry("p1", 1, 100, 10));
  l.append_entry(tx_entry("p2", 2, 200, 20));
  l.seal_block();
  l.append_entry(tx_entry("p3", 3, 300, 30));
  l.append_entry(tx_entry("p4", 4, 400, 40));
  l.append_entry(dispute_entry("p5", 3));
  l.seal_block();

  Query by_id;
  by_id.credential_id = CredentialAnchor::decode(anchor.payload).credential_id;
  EXPECT_EQ(l.query(by_id).size(), 1u);

  Query unknown;
  unknown.pid = "nobody";
  EXPECT_TRUE(l.query(unknown).empty());

  Query range;
  range.kind = EntryKind::TransactionRecord;
  range.slots = {{1, 3}};
  auto hits = l.query(range);
  ASSERT_EQ(hits.size(), 3u);
  EXPECT_EQ(TransactionRecord::decode(hits[0].payload).pid, "p1");
  EXPECT_EQ(TransactionRecord::decode(hits[2].payload).pid, "p3");

  Query disputes;
  disputes.slots = {{3, 3}};
  EXPECT_EQ(l.query(disputes).size(), 2u);
  EXPECT_EQ(l.entry_count(), 6u);
}

TEST(Ledger, RecordsRoundtripCanonically) {
  TransactionRecord t{"pid", "evcs", 4, Energy::wh(-12345), Money::micros(2'500'000), 77};
  EXPECT_EQ(TransactionRecord::decode(t.encode()), t);
  DisputeRecord d{"pid", "evcs", 4, DisputeCause::MeterMismatch, std::nullopt, Energy::wh(5),
                  Money::micros(1), 8};
  EXPECT_EQ(DisputeRecord::decode(d.encode()), d);
}

TEST(Ledger, JsonlExportImportRoundtrip) {
  auto rng = crypto::Drbg::from_u64(35);
  auto l = sample_chain(15, rng);
  std::stringstream ss;
  l.export_jsonl(ss);
  const auto text = ss.str();

  std::istringstream lines(text);
  std::string first;
  std::getline(lines, first);
  auto j = nlohmann::ordered_json::parse(first);
  std::vector<std::string> keys;
  for (auto it = j.begin(); it != j.end(); ++it) keys.push_back(it.key());
  EXPECT_EQ(keys, (std::vector<std::string>{"height", "prev_hash", "entries", "block_hash"}));

  std::istringstream in(text);
  auto back = Ledger::import_jsonl(in);
  EXPECT_EQ(back.blocks(), l.blocks());
  EXPECT_TRUE(back.verify_chain());
}

TEST(Ledger, ImportRejectsGarbage) {
  std::istringstream in("{\"height\": 0}\n");
  EXPECT_EQ(error_of([&] { Ledger::import_jsonl(in); }), Errc::MalformedEntry);
}
