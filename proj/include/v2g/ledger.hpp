#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "v2g/bytes.hpp"
#include "v2g/crypto.hpp"
#include "v2g/units.hpp"

// Append-only hash-linked chain standing in for the consortium blockchain.
// A single sequencer orders entries; there is no consensus layer.
namespace v2g::ledger {

using crypto::Digest32;

enum class EntryKind : std::uint8_t {
  CredentialAnchor = 1,
  TransactionRecord = 2,
  DisputeRecord = 3,
};

std::string_view to_string(EntryKind kind) noexcept;

struct LedgerEntry {
  EntryKind kind = EntryKind::CredentialAnchor;
  Bytes payload;  // canonical encoding of one of the record types below
  SimTime timestamp = 0;
  std::string author;

  void encode_into(ByteWriter& w) const;
  static LedgerEntry decode_from(ByteReader& r);
  bool operator==(const LedgerEntry&) const = default;
};

enum class SubjectKind : std::uint8_t { User = 1, Station = 2 };

struct CredentialAnchor {
  Digest32 credential_id;  // hash of the credential's canonical encoding
  std::string subject;
  SubjectKind subject_kind = SubjectKind::User;
  std::uint32_t station_serial = 0;  // stable per physical station; 0 for users
  std::uint32_t epoch = 0;
  SimTime expiry = 0;

  Bytes encode() const;
  static CredentialAnchor decode(ByteView payload);
  bool operator==(const CredentialAnchor&) const = default;
};

struct TransactionRecord {
  std::string pid;
  std::string evcs_id;
  std::uint32_t slot = 0;
  Energy energy;
  Money amount;  // bill total
  SimTime finalized_at = 0;

  Bytes encode() const;
  static TransactionRecord decode(ByteView payload);
  bool operator==(const TransactionRecord&) const = default;
};

enum class DisputeCause : std::uint8_t { MeterMismatch = 1, BillRejected = 2, PaymentDefault = 3 };
std::string_view to_string(DisputeCause cause) noexcept;

struct DisputeRecord {
  std::string pid;
  std::string evcs_id;
  std::uint32_t slot = 0;
  DisputeCause cause = DisputeCause::MeterMismatch;
  std::optional<Energy> ev_reading;
  std::optional<Energy> evcs_reading;
  Money proposed_total;
  SimTime opened_at = 0;

  Bytes encode() const;
  static DisputeRecord decode(ByteView payload);
  bool operator==(const DisputeRecord&) const = default;
};

struct Block {
  std::uint64_t height = 0;
  Digest32 prev_hash;
  std::vector<LedgerEntry> entries;
  Digest32 block_hash;

  // hash(height | prev_hash | canonical(entries))
  Digest32 compute_hash() const;
  Bytes encode() const;
  static Block decode(ByteView bytes);
  bool operator==(const Block&) const = default;
};

struct Query {
  std::optional<EntryKind> kind;
  std::optional<std::string> pid;
  std::optional<std::string> evcs_id;
  std::optional<std::pair<std::uint32_t, std::uint32_t>> slots;  // inclusive
  std::optional<Digest32> credential_id;
  std::optional<std::uint32_t> station_serial;
};

class Ledger {
 public:
  Ledger() = default;
  // Adopts blocks as-is; call verify_chain() to check them.
  static Ledger from_blocks(std::vector<Block> blocks);

  // Queues entry for the next block. Throws Error(MalformedEntry) when the
  // payload does not decode, or re-encodes to different bytes.
  std::size_t append_entry(LedgerEntry entry);
  const Block& seal_block();

  bool verify_chain() const;
  std::vector<LedgerEntry> query(const Query& filter) const;

  const std::vector<Block>& blocks() const noexcept { return blocks_; }
  std::size_t pending() const noexcept { return pending_.size(); }
  std::size_t entry_count() const noexcept;

  void export_jsonl(std::ostream& out) const;
  static Ledger import_jsonl(std::istream& in);

 private:
  std::vector<Block> blocks_;
  std::vector<LedgerEntry> pending_;
};

}  // namespace v2g::ledger
