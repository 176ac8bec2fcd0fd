#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace agentrec {

// Error kinds surfaced across module boundaries. The names are part of the
// machine-readable error records written by the CLI, so keep them stable.
enum class Errc {
  InvalidArgument,
  UnknownEntity,
  UnknownTool,
  ToolFailure,
  SchemaViolation,
  UnknownAgent,
  ChannelClosed,
  UnknownSchema,
  PayloadInvalid,
  SelfChannel,
  ConflictingDelta,
  UnknownItem,
  NoInput,
  NoData,
  NoFeasibleItem,
  NoCompatibleBundle,
  MissingPalette,
  RevisionExhausted,
  NoTraces,
  NoSummaries,
  OutOfRange,
  CyclicGraph,
  NoCompliantCandidate,
  ConfigInvalid,
  Unreadable,
  ParseError,
};

std::string_view errc_name(Errc code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what) : std::runtime_error(what), code_(code) {}

  Errc code() const noexcept { return code_; }
  std::string_view name() const noexcept { return errc_name(code_); }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& what) { throw Error(code, what); }

}  // namespace agentrec
