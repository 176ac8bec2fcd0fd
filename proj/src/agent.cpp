#include "agentrec/agent.hpp"

#include <httplib.h>

#include <algorithm>
#include <cctype>
#include <nlohmann/json.hpp>
#include <regex>

#include "agentrec/error.hpp"
#include "agentrec/text.hpp"

namespace agentrec {

struct LanguageCore::Compiled {
  std::regex re;
};

namespace {

std::string glob_to_regex(std::string_view glob) {
  static const std::string_view kSpecial = R"(\^$.|?+()[]{})";
  std::string out;
  for (std::size_t i = 0; i < glob.size(); ++i) {
    char c = glob[i];
    if (c == '*') {
      out += (i + 1 == glob.size()) ? "([\\s\\S]*)" : "([\\s\\S]*?)";
    } else {
      if (kSpecial.find(c) != std::string_view::npos) out += '\\';
      out += c;
    }
  }
  return out;
}

std::string fill_template(const std::string& tmpl, const Prompt& prompt, const std::smatch& m) {
  std::string out;
  std::size_t i = 0;
  while (i < tmpl.size()) {
    if (tmpl[i] == '{') {
      std::size_t close = tmpl.find('}', i);
      if (close != std::string::npos) {
        std::string_view name(tmpl.data() + i + 1, close - i - 1);
        bool known = true;
        if (name == "input") {
          out += prompt.input;
        } else if (name == "recent") {
          out += prompt.recent;
        } else if (name == "last_reply") {
          out += prompt.last_reply;
        } else if (name == "context") {
          out += text::join(prompt.context, "; ");
        } else if (name.size() == 1 && name[0] >= '1' && name[0] <= '9') {
          auto g = static_cast<std::size_t>(name[0] - '0');
          if (g < m.size()) out += text::trim(m[g].str());
        } else {
          known = false;
        }
        if (known) {
          i = close + 1;
          continue;
        }
      }
    }
    out += tmpl[i++];
  }
  return out;
}

std::string remote_generate(const std::string& endpoint, std::size_t max_tokens, const Prompt& prompt) {
  // endpoint = scheme://host[:port][/base]
  auto scheme_end = endpoint.find("://");
  auto path_start = endpoint.find('/', scheme_end == std::string::npos ? 0 : scheme_end + 3);
  std::string origin = endpoint.substr(0, path_start);
  std::string base = path_start == std::string::npos ? "" : endpoint.substr(path_start);
  while (!base.empty() && base.back() == '/') base.pop_back();

  httplib::Client client(origin);
  client.set_connection_timeout(5);
  client.set_read_timeout(60);
  nlohmann::json body = {{"prompt", prompt.render()}, {"max_tokens", max_tokens}};
  auto res = client.Post(base + "/generate", body.dump(), "application/json");
  if (!res) fail(Errc::ToolFailure, "remote core: " + httplib::to_string(res.error()));
  if (res->status != 200) fail(Errc::ToolFailure, "remote core: HTTP " + std::to_string(res->status));
  auto reply = nlohmann::json::parse(res->body, nullptr, false);
  if (reply.is_discarded() || !reply.is_object() || !reply.contains("text") || !reply["text"].is_string()) {
    fail(Errc::ToolFailure, "remote core: response lacks a string \"text\" field");
  }
  return reply["text"].get<std::string>();
}

}  // namespace

std::string Prompt::render() const {
  std::string out = "[CONTEXT]\n";
  for (const auto& line : context) out += line + "\n";
  out += "[RECENT]\n" + recent + "\n[INPUT]\n" + input + "\n";
  return out;
}

std::size_t Prompt::token_count() const {
  std::size_t n = text::token_count(recent) + text::token_count(input);
  for (const auto& line : context) n += text::token_count(line);
  return n;
}

LanguageCore LanguageCore::scripted(std::vector<ScriptRule> rules) {
  if (rules.empty()) fail(Errc::InvalidArgument, "scripted core needs at least one rule");
  auto compiled = std::make_shared<std::vector<Compiled>>();
  for (const auto& r : rules) {
    try {
      compiled->push_back({std::regex(glob_to_regex(r.pattern), std::regex::ECMAScript | std::regex::icase)});
    } catch (const std::regex_error& e) {
      fail(Errc::InvalidArgument, "bad rule pattern '" + r.pattern + "': " + e.what());
    }
  }
  LanguageCore core;
  core.kind_ = Kind::Scripted;
  core.rules_ = std::move(rules);
  core.compiled_ = std::move(compiled);
  return core;
}

LanguageCore LanguageCore::remote(std::string endpoint, std::size_t max_tokens) {
  if (endpoint.empty()) fail(Errc::InvalidArgument, "remote core needs an endpoint");
  LanguageCore core;
  core.kind_ = Kind::Remote;
  core.endpoint_ = std::move(endpoint);
  core.max_tokens_ = max_tokens;
  return core;
}

std::string LanguageCore::generate(const Prompt& prompt) const {
  if (kind_ == Kind::Remote) return remote_generate(endpoint_, max_tokens_, prompt);
  for (std::size_t i = 0; i < rules_.size(); ++i) {
    std::smatch m;
    if (std::regex_search(prompt.input, m, (*compiled_)[i].re)) return fill_template(rules_[i].response, prompt, m);
  }
  return {};
}

void ToolRegistry::add(Tool tool) {
  if (tool.name.empty()) fail(Errc::InvalidArgument, "tool name must be non-empty");
  if (!tool.handler) fail(Errc::InvalidArgument, "tool '" + tool.name + "' has no handler");
  if (tools_.count(tool.name) != 0) fail(Errc::InvalidArgument, "duplicate tool '" + tool.name + "'");
  std::string name = tool.name;
  tools_.emplace(std::move(name), std::move(tool));
}

const Tool* ToolRegistry::find(std::string_view name) const {
  auto it = tools_.find(name);
  return it == tools_.end() ? nullptr : &it->second;
}

std::vector<std::string> ToolRegistry::names() const {
  std::vector<std::string> out;
  for (const auto& [name, _] : tools_) out.push_back(name);
  return out;
}

Agent::Agent(std::string id, LanguageCore core, std::set<std::string> input_kinds, std::set<std::string> output_kinds,
             ToolRegistry tools, AgentConfig config)
    : id_(std::move(id)),
      core_(std::move(core)),
      input_kinds_(std::move(input_kinds)),
      output_kinds_(std::move(output_kinds)),
      tools_(std::move(tools)),
      config_(config) {
  if (id_.empty()) fail(Errc::InvalidArgument, "agent id must be non-empty");
}

std::size_t Agent::total_tool_cost() const {
  std::size_t total = 0;
  for (const auto& c : call_log_) total += c.cost_tokens;
  return total;
}

std::vector<ToolDirective> find_directives(std::string_view s) {
  std::vector<ToolDirective> out;
  std::size_t pos = 0;
  while ((pos = s.find("CALL(", pos)) != std::string_view::npos) {
    std::size_t i = pos + 5;
    std::size_t comma = s.find(',', i);
    if (comma == std::string_view::npos) break;
    std::string name = text::trim(s.substr(i, comma - i));
    std::size_t q = comma + 1;
    while (q < s.size() && (s[q] == ' ' || s[q] == '\t')) ++q;
    bool name_ok = !name.empty() && std::all_of(name.begin(), name.end(), [](unsigned char c) {
      return std::isalnum(c) || c == '_' || c == '.' || c == '-';
    });
    if (!name_ok || q >= s.size() || s[q] != '"') {
      pos += 5;
      continue;
    }
    std::size_t close = s.find("\")", q + 1);
    if (close == std::string_view::npos) break;
    out.push_back({pos, close + 2, std::move(name), std::string(s.substr(q + 1, close - q - 1))});
    pos = close + 2;
  }
  return out;
}

std::string invoke_tool(Agent& agent, std::string_view name, std::string_view args) {
  const Tool* tool = agent.tools_.find(name);
  if (tool == nullptr) fail(Errc::UnknownTool, "unknown tool '" + std::string(name) + "'");
  std::string result;
  try {
    result = tool->handler(args);
  } catch (const std::exception& e) {
    fail(Errc::ToolFailure, tool->name + ": " + e.what());
  }
  agent.call_log_.push_back({tool->name, std::string(args), result, tool->cost_tokens});
  return result;
}

AgentOutput step_agent(Agent& agent, const AgentInput& input, Timestamp now, std::optional<std::string> reply_kind) {
  std::lock_guard lock(agent.step_mutex_);
  if (agent.input_kinds_.count(input.kind) == 0) {
    fail(Errc::SchemaViolation, agent.id_ + " does not accept kind '" + input.kind + "'");
  }
  std::string out_kind;
  if (reply_kind) {
    out_kind = *reply_kind;
  } else if (agent.output_kinds_.size() == 1) {
    out_kind = *agent.output_kinds_.begin();
  } else {
    fail(Errc::SchemaViolation, agent.id_ + ": reply kind is ambiguous");
  }
  if (agent.output_kinds_.count(out_kind) == 0) {
    fail(Errc::SchemaViolation, agent.id_ + " cannot produce kind '" + out_kind + "'");
  }

  const auto& cfg = agent.config_;
  Prompt prompt;
  prompt.input = input.text;
  prompt.recent = tail_window(agent.memory_, std::min(cfg.stm_tokens, cfg.context_budget));
  const std::size_t used = text::token_count(prompt.recent);
  auto window = regulate_context(agent.memory_, input.text, cfg.context_budget - used);
  for (const auto& s : window.items) prompt.context.push_back(s.item.canonical_text());
  const auto& log = agent.memory_.raw_log();
  for (auto it = log.rbegin(); it != log.rend(); ++it) {
    if (it->speaker == agent.id_) {
      prompt.last_reply = it->text;
      break;
    }
  }

  std::string raw = agent.core_.generate(prompt);
  std::string text;
  std::size_t cursor = 0;
  RawContext ctx;
  for (const auto& d : find_directives(raw)) {
    text.append(raw, cursor, d.begin - cursor);
    text += invoke_tool(agent, d.name, d.args);
    ctx.pending_tool_calls.emplace_back(d.name, d.args);
    cursor = d.end;
  }
  text.append(raw, cursor, std::string::npos);

  ctx.turns = {{input.sender, input.text}, {agent.id_, text}};
  ctx.trace = prompt.render();
  update_memory(agent.memory_, ctx, cfg.retain_label, now);
  agent.last_prompt_ = std::move(prompt);
  return {out_kind, text};
}

}  // namespace agentrec
