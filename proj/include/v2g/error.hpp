#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace v2g {

// Every failure the library reports carries one of these codes. Callers
// branch on code(); what() adds human-readable detail.
enum class Errc {
  // crypto
  WrongKey,
  Tampered,
  Oversize,
  NonceReuse,
  // pki
  DuplicateIdentity,
  UnknownUser,
  InvalidCount,
  UnknownStation,
  UnknownPid,
  ConsumedPid,
  StaleEpoch,
  AlreadyConsumed,
  // ledger
  MalformedEntry,
  // channels / codec
  Truncated,
  UnknownKind,
  BadLength,
  Unreachable,
  NotConnected,
  // actors
  PidConsumed,
  NotPlugged,
  StaleTimestamp,
  ReusedPid,
  DecryptFailed,
  HashChainMismatch,
  ChallengeMismatch,
  NotAuthenticated,
  UnexpectedMessage,
  NoResponse,
  CredentialRejected,
  // contract
  NoSession,
  InvalidParams,
  MissingReading,
  MeteringUnresolved,
  Rejected,
  SlotNotEnded,
  UnresolvedSlot,
  NoSchedule,
  // runner
  ConfigInvalid,
  IoFailure,
};

std::string_view to_string(Errc code) noexcept;

class Error : public std::runtime_error {
 public:
  explicit Error(Errc code, const std::string& detail = {});

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace v2g
