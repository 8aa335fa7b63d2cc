#include "v2g/ledger.hpp"

#include <istream>
#include <json.hpp>
#include <ostream>

#include "v2g/error.hpp"

namespace v2g::ledger {

namespace {

using json = nlohmann::ordered_json;

void write_optional_energy(ByteWriter& w, const std::optional<Energy>& e) {
  w.u8(e.has_value() ? 1 : 0);
  if (e) w.i64(e->wh());
}

std::optional<Energy> read_optional_energy(ByteReader& r) {
  const auto present = r.u8();
  if (present > 1) throw Error(Errc::MalformedEntry, "bad optional flag");
  if (present == 0) return std::nullopt;
  return Energy::wh(r.i64());
}

EntryKind entry_kind_from(std::uint8_t v) {
  if (v < 1 || v > 3) throw Error(Errc::MalformedEntry, "unknown entry kind");
  return static_cast<EntryKind>(v);
}

EntryKind entry_kind_from(std::string_view name) {
  for (auto k : {EntryKind::CredentialAnchor, EntryKind::TransactionRecord, EntryKind::DisputeRecord}) {
    if (to_string(k) == name) return k;
  }
  throw Error(Errc::MalformedEntry, "unknown entry kind '" + std::string(name) + "'");
}

Digest32 digest_from_hex(const std::string& hex) {
  return Digest32::from(from_hex(hex));
}

// Decodes and re-encodes; both must succeed and match byte for byte.
void check_canonical(const LedgerEntry& entry) {
  Bytes again;
  try {
    switch (entry.kind) {
      case EntryKind::CredentialAnchor: again = CredentialAnchor::decode(entry.payload).encode(); break;
      case EntryKind::TransactionRecord: again = TransactionRecord::decode(entry.payload).encode(); break;
      case EntryKind::DisputeRecord: again = DisputeRecord::decode(entry.payload).encode(); break;
    }
  } catch (const Error& e) {
    throw Error(Errc::MalformedEntry, e.what());
  }
  if (again != entry.payload) throw Error(Errc::MalformedEntry, "payload is not canonical");
}

bool in_slot_range(std::uint32_t slot, const std::pair<std::uint32_t, std::uint32_t>& range) {
  return slot >= range.first && slot <= range.second;
}

bool matches(const LedgerEntry& entry, const Query& q) {
  if (q.kind && entry.kind != *q.kind) return false;
  const bool wants_session_fields = q.pid || q.evcs_id || q.slots;
  const bool wants_anchor_fields = q.credential_id || q.station_serial;
  switch (entry.kind) {
    case EntryKind::CredentialAnchor: {
      if (wants_session_fields) return false;
      if (!wants_anchor_fields) return true;
      auto anchor = CredentialAnchor::decode(entry.payload);
      if (q.credential_id && anchor.credential_id != *q.credential_id) return false;
      if (q.station_serial && (anchor.subject_kind != SubjectKind::Station ||
                               anchor.station_serial != *q.station_serial)) {
        return false;
      }
      return true;
    }
    case EntryKind::TransactionRecord:
    case EntryKind::DisputeRecord: {
      if (wants_anchor_fields) return false;
      if (!wants_session_fields) return true;
      std::string pid, evcs_id;
      std::uint32_t slot = 0;
      if (entry.kind == EntryKind::TransactionRecord) {
        auto rec = TransactionRecord::decode(entry.payload);
        pid = rec.pid, evcs_id = rec.evcs_id, slot = rec.slot;
      } else {
        auto rec = DisputeRecord::decode(entry.payload);
        pid = rec.pid, evcs_id = rec.evcs_id, slot = rec.slot;
      }
      if (q.pid && pid != *q.pid) return false;
      if (q.evcs_id && evcs_id != *q.evcs_id) return false;
      if (q.slots && !in_slot_range(slot, *q.slots)) return false;
      return true;
    }
  }
  return false;
}

}  // namespace

std::string_view to_string(EntryKind kind) noexcept {
  switch (kind) {
    case EntryKind::CredentialAnchor: return "CredentialAnchor";
    case EntryKind::TransactionRecord: return "TransactionRecord";
    case EntryKind::DisputeRecord: return "DisputeRecord";
  }
  return "Unknown";
}

std::string_view to_string(DisputeCause cause) noexcept {
  switch (cause) {
    case DisputeCause::MeterMismatch: return "MeterMismatch";
    case DisputeCause::BillRejected: return "BillRejected";
    case DisputeCause::PaymentDefault: return "PaymentDefault";
  }
  return "Unknown";
}

void LedgerEntry::encode_into(ByteWriter& w) const {
  w.u8(static_cast<std::uint8_t>(kind)).bytes32(payload).i64(timestamp).str16(author);
}

LedgerEntry LedgerEntry::decode_from(ByteReader& r) {
  LedgerEntry e;
  e.kind = entry_kind_from(r.u8());
  e.payload = r.bytes32();
  e.timestamp = r.i64();
  e.author = r.str16();
  return e;
}

Bytes CredentialAnchor::encode() const {
  ByteWriter w;
  w.raw(credential_id.view())
      .str16(subject)
      .u8(static_cast<std::uint8_t>(subject_kind))
      .u32(station_serial)
      .u32(epoch)
      .i64(expiry);
  return std::move(w).take();
}

CredentialAnchor CredentialAnchor::decode(ByteView payload) {
  ByteReader r(payload);
  CredentialAnchor a;
  r.raw_into<32>(a.credential_id.mutable_view());
  a.subject = r.str16();
  const auto kind = r.u8();
  if (kind != 1 && kind != 2) throw Error(Errc::MalformedEntry, "bad subject kind");
  a.subject_kind = static_cast<SubjectKind>(kind);
  a.station_serial = r.u32();
  a.epoch = r.u32();
  a.expiry = r.i64();
  r.expect_end();
  return a;
}

Bytes TransactionRecord::encode() const {
  ByteWriter w;
  w.str16(pid).str16(evcs_id).u32(slot).i64(energy.wh()).i64(amount.micros()).i64(finalized_at);
  return std::move(w).take();
}

TransactionRecord TransactionRecord::decode(ByteView payload) {
  ByteReader r(payload);
  TransactionRecord t;
  t.pid = r.str16();
  t.evcs_id = r.str16();
  t.slot = r.u32();
  t.energy = Energy::wh(r.i64());
  t.amount = Money::micros(r.i64());
  t.finalized_at = r.i64();
  r.expect_end();
  return t;
}

Bytes DisputeRecord::encode() const {
  ByteWriter w;
  w.str16(pid).str16(evcs_id).u32(slot).u8(static_cast<std::uint8_t>(cause));
  write_optional_energy(w, ev_reading);
  write_optional_energy(w, evcs_reading);
  w.i64(proposed_total.micros()).i64(opened_at);
  return std::move(w).take();
}

DisputeRecord DisputeRecord::decode(ByteView payload) {
  ByteReader r(payload);
  DisputeRecord d;
  d.pid = r.str16();
  d.evcs_id = r.str16();
  d.slot = r.u32();
  const auto cause = r.u8();
  if (cause < 1 || cause > 3) throw Error(Errc::MalformedEntry, "bad dispute cause");
  d.cause = static_cast<DisputeCause>(cause);
  d.ev_reading = read_optional_energy(r);
  d.evcs_reading = read_optional_energy(r);
  d.proposed_total = Money::micros(r.i64());
  d.opened_at = r.i64();
  r.expect_end();
  return d;
}

Digest32 Block::compute_hash() const {
  ByteWriter w;
  w.u64(height).raw(prev_hash.view()).u32(static_cast<std::uint32_t>(entries.size()));
  for (const auto& e : entries) e.encode_into(w);
  return crypto::hash(w.view());
}

Bytes Block::encode() const {
  ByteWriter w;
  w.u64(height).raw(prev_hash.view()).u32(static_cast<std::uint32_t>(entries.size()));
  for (const auto& e : entries) e.encode_into(w);
  w.raw(block_hash.view());
  return std::move(w).take();
}

Block Block::decode(ByteView bytes) {
  ByteReader r(bytes);
  Block b;
  b.height = r.u64();
  r.raw_into<32>(b.prev_hash.mutable_view());
  const auto count = r.u32();
  if (count > r.remaining()) throw Error(Errc::Truncated, "entry count exceeds input");
  b.entries.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) b.entries.push_back(LedgerEntry::decode_from(r));
  r.raw_into<32>(b.block_hash.mutable_view());
  r.expect_end();
  return b;
}

Ledger Ledger::from_blocks(std::vector<Block> blocks) {
  Ledger l;
  l.blocks_ = std::move(blocks);
  return l;
}

std::size_t Ledger::append_entry(LedgerEntry entry) {
  if (entry.author.size() > 0xffff) throw Error(Errc::MalformedEntry, "author too long");
  check_canonical(entry);
  pending_.push_back(std::move(entry));
  return pending_.size() - 1;
}

const Block& Ledger::seal_block() {
  Block b;
  b.height = blocks_.size();
  if (!blocks_.empty()) b.prev_hash = blocks_.back().block_hash;
  b.entries = std::move(pending_);
  pending_.clear();
  b.block_hash = b.compute_hash();
  blocks_.push_back(std::move(b));
  return blocks_.back();
}

bool Ledger::verify_chain() const {
  Digest32 expected_prev;
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    const auto& b = blocks_[i];
    if (b.height != i || b.prev_hash != expected_prev) return false;
    if (b.compute_hash() != b.block_hash) return false;
    for (const auto& e : b.entries) {
      try {
        check_canonical(e);
      } catch (const Error&) {
        return false;
      }
    }
    expected_prev = b.block_hash;
  }
  return true;
}

std::vector<LedgerEntry> Ledger::query(const Query& filter) const {
  std::vector<LedgerEntry> out;
  for (const auto& b : blocks_) {
    for (const auto& e : b.entries) {
      if (matches(e, filter)) out.push_back(e);
    }
  }
  return out;
}

std::size_t Ledger::entry_count() const noexcept {
  std::size_t n = 0;
  for (const auto& b : blocks_) n += b.entries.size();
  return n;
}

void Ledger::export_jsonl(std::ostream& out) const {
  for (const auto& b : blocks_) {
    json line;
    line["height"] = b.height;
    line["prev_hash"] = b.prev_hash.hex();
    json entries = json::array();
    for (const auto& e : b.entries) {
      json je;
      je["kind"] = std::string(to_string(e.kind));
      je["payload"] = to_hex(e.payload);
      je["timestamp"] = e.timestamp;
      je["author"] = e.author;
      entries.push_back(std::move(je));
    }
    line["entries"] = std::move(entries);
    line["block_hash"] = b.block_hash.hex();
    out << line.dump() << '\n';
  }
  if (!out) throw Error(Errc::IoFailure, "ledger export failed");
}

Ledger Ledger::import_jsonl(std::istream& in) {
  std::vector<Block> blocks;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      auto j = json::parse(line);
      Block b;
      b.height = j.at("height").get<std::uint64_t>();
      b.prev_hash = digest_from_hex(j.at("prev_hash").get<std::string>());
      for (const auto& je : j.at("entries")) {
        LedgerEntry e;
        e.kind = entry_kind_from(je.at("kind").get<std::string>());
        e.payload = from_hex(je.at("payload").get<std::string>());
        e.timestamp = je.at("timestamp").get<SimTime>();
        e.author = je.at("author").get<std::string>();
        b.entries.push_back(std::move(e));
      }
      b.block_hash = digest_from_hex(j.at("block_hash").get<std::string>());
      blocks.push_back(std::move(b));
    } catch (const json::exception& e) {
      throw Error(Errc::MalformedEntry, e.what());
    }
  }
  return from_blocks(std::move(blocks));
}

}  // namespace v2g::ledger
