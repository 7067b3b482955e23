#pragma once

#include <condition_variable>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ehrrag/errors.hpp"

namespace ehrrag {

enum class TemplateId {
    baseline_predict,
    indicator_select,
    query_refine,
    sufficiency,
    factual_hypothesis,
    counterfactual_hypothesis,
    evidence_fusion,
    react_step,
};

std::string_view to_string(TemplateId id);
std::optional<TemplateId> template_id_from_string(std::string_view text);

/// Prompt body with {placeholder} variables. Every placeholder in the body
/// must be declared in required_vars; rendering fails on a missing var.
/// The special {evidence} placeholder marks where the truncatable evidence
/// block goes when the template is turned into a ChatRequest.
struct PromptTemplate {
    TemplateId id;
    std::string body;
    std::vector<std::string> required_vars;
};

class TemplateRegistry {
public:
    /// Built-in templates for all roles. Each demands a machine-parseable
    /// final line (answer marker + token).
    static const TemplateRegistry& builtin();

    const PromptTemplate& get(TemplateId id) const;

private:
    std::map<TemplateId, PromptTemplate> templates_;
};

/// Substitutes every required variable; throws ConfigError naming the first
/// missing one. Values are inserted verbatim and never re-scanned.
std::string render_prompt(const PromptTemplate& tmpl,
                          const std::map<std::string, std::string>& vars);

struct GenParams {
    double temperature = 0.0;
    int max_output_tokens = 1024;
};

/// A prompt split around its evidence block. Entries are ordered oldest
/// first; when the estimated token count exceeds the budget the gateway
/// drops entries from the front (oldest evidence goes first).
struct ChatRequest {
    TemplateId template_id = TemplateId::baseline_predict;
    std::string prefix;
    std::vector<std::string> evidence_entries;
    std::string suffix;
    GenParams params;

    std::string assemble(std::size_t skip_entries = 0) const;
};

/// Builds a ChatRequest from a template: the body is split at {evidence},
/// both halves rendered with vars, and the entries attached unrendered.
ChatRequest make_request(const TemplateRegistry& registry, TemplateId id,
                         const std::map<std::string, std::string>& vars,
                         std::vector<std::string> evidence_entries, GenParams params = {});

struct ChatUsage {
    std::size_t prompt_chars = 0;
    std::size_t est_prompt_tokens = 0;
    std::size_t reply_chars = 0;
};

struct ChatReply {
    std::string text;
    ChatUsage usage;
    double latency_ms = 0.0;  // informational only; never serialized into results
    std::vector<std::string> flags;
};

/// Transport layer under the gateway. Implementations throw TransportError
/// on transient failures; the gateway owns the retry policy.
class ChatClient {
public:
    virtual ~ChatClient() = default;
    virtual std::string name() const = 0;
    virtual std::string send(const std::string& prompt, TemplateId id, const GenParams& params) = 0;
};

/// Deterministic test double: first rule whose (template, substring)
/// matcher hits the request wins; otherwise the default reply.
class ScriptedResponder : public ChatClient {
public:
    struct Rule {
        std::optional<TemplateId> template_id;
        std::string contains;
        std::string reply;
    };

    explicit ScriptedResponder(std::string default_reply = "") : default_reply_(std::move(default_reply)) {}

    ScriptedResponder& add_rule(Rule rule);
    ScriptedResponder& when(TemplateId id, std::string reply);
    ScriptedResponder& when_contains(std::string substring, std::string reply);
    ScriptedResponder& when(TemplateId id, std::string substring, std::string reply);
    void set_default(std::string reply) { default_reply_ = std::move(reply); }

    static std::shared_ptr<ScriptedResponder> from_file(const std::filesystem::path& path);

    std::string name() const override { return "scripted"; }
    std::string send(const std::string& prompt, TemplateId id, const GenParams&) override;

private:
    std::vector<Rule> rules_;
    std::string default_reply_;
};

struct HttpChatConfig {
    std::string endpoint;  // e.g. http://host:port/v1/chat/completions
    std::string model;
    std::string api_key_env;
    int timeout_seconds = 120;
};

/// Chat-completions wire convention: message list in, choice text out.
class HttpChatClient : public ChatClient {
public:
    explicit HttpChatClient(HttpChatConfig config);

    std::string name() const override { return "http:" + config_.model; }
    std::string send(const std::string& prompt, TemplateId id, const GenParams& params) override;

private:
    HttpChatConfig config_;
};

struct GatewayConfig {
    std::size_t context_budget_tokens = 128000;
    double chars_per_token = 4.0;  // conservative estimation heuristic
    int retry_max_attempts = 3;
    int retry_base_delay_ms = 1000;  // doubles per retry
    int max_in_flight = 4;
    bool keep_transcript = false;
};

struct TranscriptEntry {
    TemplateId template_id;
    std::string prompt;
    std::string reply;
    std::vector<std::string> flags;
};

/// Single choke point for model I/O: context-budget enforcement with
/// oldest-first evidence truncation, transport retries with exponential
/// backoff, an in-flight cap, and an optional transcript.
class LlmGateway {
public:
    explicit LlmGateway(std::shared_ptr<ChatClient> client, GatewayConfig config = {});

    ChatReply complete(const ChatRequest& request);

    std::size_t estimate_tokens(std::string_view text) const;
    std::size_t call_count() const;
    std::vector<TranscriptEntry> transcript() const;
    void clear_transcript();
    const GatewayConfig& config() const { return config_; }
    std::string client_name() const { return client_->name(); }

private:
    std::shared_ptr<ChatClient> client_;
    GatewayConfig config_;
    mutable std::mutex mutex_;
    std::condition_variable slot_cv_;
    std::size_t calls_ = 0;
    std::size_t in_flight_ = 0;
    std::vector<TranscriptEntry> transcript_;
};

/// Extracts the first integer after `marker` and checks it against the
/// label space. Throws ParseError when no such integer exists or the value
/// is outside the space; callers own the retry/fallback ladder.
int parse_label(const std::string& text, std::string_view marker, std::span<const int> label_space);

}  // namespace ehrrag
