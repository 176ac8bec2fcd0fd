#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "agentrec/memory.hpp"

namespace agentrec {

/// Prompt handed to a language core. Section markers are layout only and are
/// not counted by token_count().
struct Prompt {
  std::vector<std::string> context;  // canonical texts of the regulated window
  std::string recent;                // STM tail
  std::string last_reply;            // this agent's most recent own turn, if any
  std::string input;

  std::string render() const;
  std::size_t token_count() const;
};

/// Scripted rule. `pattern` is a case-insensitive glob searched (unanchored)
/// in the prompt input; each '*' captures lazily except a trailing one, which
/// captures the rest. `response` may use {input}, {recent}, {context},
/// {last_reply} and {1}..{9} for the captures.
struct ScriptRule {
  std::string pattern;
  std::string response;
};

class LanguageCore {
 public:
  enum class Kind { Scripted, Remote };

  /// Throws InvalidArgument on an empty rule list or a malformed pattern.
  static LanguageCore scripted(std::vector<ScriptRule> rules);

  /// POSTs {"prompt", "max_tokens"} to `endpoint` + "/generate" and reads
  /// {"text"} back. Transport or protocol failures raise ToolFailure.
  static LanguageCore remote(std::string endpoint, std::size_t max_tokens = 256);

  Kind kind() const { return kind_; }
  const std::vector<ScriptRule>& rules() const { return rules_; }
  const std::string& endpoint() const { return endpoint_; }

  /// First matching rule's filled template; empty when nothing matches.
  std::string generate(const Prompt& prompt) const;

 private:
  struct Compiled;
  Kind kind_ = Kind::Scripted;
  std::vector<ScriptRule> rules_;
  std::shared_ptr<const std::vector<Compiled>> compiled_;
  std::string endpoint_;
  std::size_t max_tokens_ = 256;
};

struct Tool {
  std::string name;
  std::function<std::string(std::string_view)> handler;
  std::size_t cost_tokens = 0;
};

class ToolRegistry {
 public:
  /// Throws InvalidArgument on a duplicate or empty name.
  void add(Tool tool);
  const Tool* find(std::string_view name) const;
  bool contains(std::string_view name) const { return find(name) != nullptr; }
  std::vector<std::string> names() const;
  std::size_t size() const { return tools_.size(); }

 private:
  std::map<std::string, Tool, std::less<>> tools_;
};

struct ToolCall {
  std::string name;
  std::string args;
  std::string result;
  std::size_t cost_tokens = 0;
};

struct AgentConfig {
  std::size_t context_budget = 64;  // B
  std::size_t stm_tokens = 256;     // L_stm
  MemoryLabel retain_label = MemoryLabel::EPI;
};

struct AgentInput {
  std::string kind;
  std::string text;
  std::string sender = "user";
};

struct AgentOutput {
  std::string kind;
  std::string text;
};

class Agent {
 public:
  Agent(std::string id, LanguageCore core, std::set<std::string> input_kinds, std::set<std::string> output_kinds,
        ToolRegistry tools = {}, AgentConfig config = {});

  Agent(const Agent&) = delete;
  Agent& operator=(const Agent&) = delete;

  const std::string& id() const { return id_; }
  const LanguageCore& core() const { return core_; }
  const std::set<std::string>& input_kinds() const { return input_kinds_; }
  const std::set<std::string>& output_kinds() const { return output_kinds_; }
  const ToolRegistry& tools() const { return tools_; }
  ToolRegistry& tools() { return tools_; }
  const AgentConfig& config() const { return config_; }

  MemoryStore& memory() { return memory_; }
  const MemoryStore& memory() const { return memory_; }

  const std::vector<ToolCall>& call_log() const { return call_log_; }
  std::size_t total_tool_cost() const;

  /// Prompt assembled by the most recent step.
  const std::optional<Prompt>& last_prompt() const { return last_prompt_; }

 private:
  friend AgentOutput step_agent(Agent&, const AgentInput&, Timestamp, std::optional<std::string>);
  friend std::string invoke_tool(Agent&, std::string_view, std::string_view);

  std::string id_;
  LanguageCore core_;
  std::set<std::string> input_kinds_;
  std::set<std::string> output_kinds_;
  ToolRegistry tools_;
  AgentConfig config_;
  MemoryStore memory_;
  std::vector<ToolCall> call_log_;
  std::optional<Prompt> last_prompt_;
  std::mutex step_mutex_;
};

/// One policy step: regulate context, build the prompt, run the core, resolve
/// CALL(name, "args") directives in a single pass, then record the turn pair.
/// The reply kind defaults to the single output kind when there is only one.
/// Throws SchemaViolation for an unaccepted input kind or unproducible reply kind.
AgentOutput step_agent(Agent& agent, const AgentInput& input, Timestamp now,
                       std::optional<std::string> reply_kind = std::nullopt);

/// Throws UnknownTool, or ToolFailure (message prefixed with the tool name).
std::string invoke_tool(Agent& agent, std::string_view name, std::string_view args);

struct ToolDirective {
  std::size_t begin = 0;
  std::size_t end = 0;  // one past the closing ')'
  std::string name;
  std::string args;
};

/// Well-formed CALL(name, "args") directives in order of appearance. Args run
/// to the first `")`.
std::vector<ToolDirective> find_directives(std::string_view text);

}  // namespace agentrec
