#include "v2g/error.hpp"

namespace v2g {

std::string_view to_string(Errc code) noexcept {
  switch (code) {
    case Errc::WrongKey: return "WrongKey";
    case Errc::Tampered: return "Tampered";
    case Errc::Oversize: return "Oversize";
    case Errc::NonceReuse: return "NonceReuse";
    case Errc::DuplicateIdentity: return "DuplicateIdentity";
    case Errc::UnknownUser: return "UnknownUser";
    case Errc::InvalidCount: return "InvalidCount";
    case Errc::UnknownStation: return "UnknownStation";
    case Errc::UnknownPid: return "UnknownPid";
    case Errc::ConsumedPid: return "ConsumedPid";
    case Errc::StaleEpoch: return "StaleEpoch";
    case Errc::AlreadyConsumed: return "AlreadyConsumed";
    case Errc::MalformedEntry: return "MalformedEntry";
    case Errc::Truncated: return "Truncated";
    case Errc::UnknownKind: return "UnknownKind";
    case Errc::BadLength: return "BadLength";
    case Errc::Unreachable: return "Unreachable";
    case Errc::NotConnected: return "NotConnected";
    case Errc::PidConsumed: return "PidConsumed";
    case Errc::NotPlugged: return "NotPlugged";
    case Errc::StaleTimestamp: return "StaleTimestamp";
    case Errc::ReusedPid: return "ReusedPid";
    case Errc::DecryptFailed: return "DecryptFailed";
    case Errc::HashChainMismatch: return "HashChainMismatch";
    case Errc::ChallengeMismatch: return "ChallengeMismatch";
    case Errc::NotAuthenticated: return "NotAuthenticated";
    case Errc::UnexpectedMessage: return "UnexpectedMessage";
    case Errc::NoResponse: return "NoResponse";
    case Errc::CredentialRejected: return "CredentialRejected";
    case Errc::NoSession: return "NoSession";
    case Errc::InvalidParams: return "InvalidParams";
    case Errc::MissingReading: return "MissingReading";
    case Errc::MeteringUnresolved: return "MeteringUnresolved";
    case Errc::Rejected: return "Rejected";
    case Errc::SlotNotEnded: return "SlotNotEnded";
    case Errc::UnresolvedSlot: return "UnresolvedSlot";
    case Errc::NoSchedule: return "NoSchedule";
    case Errc::ConfigInvalid: return "ConfigInvalid";
    case Errc::IoFailure: return "IoFailure";
  }
  return "Unknown";
}

Error::Error(Errc code, const std::string& detail)
    : std::runtime_error(detail.empty() ? std::string(to_string(code))
                                        : std::string(to_string(code)) + ": " + detail),
      code_(code) {}

}  // namespace v2g
