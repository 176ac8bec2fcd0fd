#include "agentrec/error.hpp"

namespace agentrec {

std::string_view errc_name(Errc code) noexcept {
  switch (code) {
    case Errc::InvalidArgument: return "InvalidArgument";
    case Errc::UnknownEntity: return "UnknownEntity";
    case Errc::UnknownTool: return "UnknownTool";
    case Errc::ToolFailure: return "ToolFailure";
    case Errc::SchemaViolation: return "SchemaViolation";
    case Errc::UnknownAgent: return "UnknownAgent";
    case Errc::ChannelClosed: return "ChannelClosed";
    case Errc::UnknownSchema: return "UnknownSchema";
    case Errc::PayloadInvalid: return "PayloadInvalid";
    case Errc::SelfChannel: return "SelfChannel";
    case Errc::ConflictingDelta: return "ConflictingDelta";
    case Errc::UnknownItem: return "UnknownItem";
    case Errc::NoInput: return "NoInput";
    case Errc::NoData: return "NoData";
    case Errc::NoFeasibleItem: return "NoFeasibleItem";
    case Errc::NoCompatibleBundle: return "NoCompatibleBundle";
    case Errc::MissingPalette: return "MissingPalette";
    case Errc::RevisionExhausted: return "RevisionExhausted";
    case Errc::NoTraces: return "NoTraces";
    case Errc::NoSummaries: return "NoSummaries";
    case Errc::OutOfRange: return "OutOfRange";
    case Errc::CyclicGraph: return "CyclicGraph";
    case Errc::NoCompliantCandidate: return "NoCompliantCandidate";
    case Errc::ConfigInvalid: return "ConfigInvalid";
    case Errc::Unreadable: return "Unreadable";
    case Errc::ParseError: return "ParseError";
  }
  return "Unknown";
}

}  // namespace agentrec
