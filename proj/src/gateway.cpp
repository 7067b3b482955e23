#include "ehrrag/gateway.hpp"

#include <cctype>
#include <chrono>
#include <condition_variable>
#include <cstdlib>
#include <fstream>
#include <thread>

#include <httplib.h>
#include <json.hpp>

using nlohmann::json;

namespace ehrrag {

std::string_view to_string(TemplateId id) {
    switch (id) {
        case TemplateId::baseline_predict: return "baseline_predict";
        case TemplateId::indicator_select: return "indicator_select";
        case TemplateId::query_refine: return "query_refine";
        case TemplateId::sufficiency: return "sufficiency";
        case TemplateId::factual_hypothesis: return "factual_hypothesis";
        case TemplateId::counterfactual_hypothesis: return "counterfactual_hypothesis";
        case TemplateId::evidence_fusion: return "evidence_fusion";
        case TemplateId::react_step: return "react_step";
    }
    return "baseline_predict";
}

std::optional<TemplateId> template_id_from_string(std::string_view text) {
    for (TemplateId id : {TemplateId::baseline_predict, TemplateId::indicator_select,
                          TemplateId::query_refine, TemplateId::sufficiency,
                          TemplateId::factual_hypothesis, TemplateId::counterfactual_hypothesis,
                          TemplateId::evidence_fusion, TemplateId::react_step}) {
        if (to_string(id) == text) return id;
    }
    return std::nullopt;
}

namespace {

constexpr std::string_view kNoEvidenceMarker = "(no evidence retrieved)";

std::vector<std::string> scan_placeholders(const std::string& body) {
    std::vector<std::string> names;
    for (std::size_t i = 0; i < body.size(); ++i) {
        if (body[i] != '{') continue;
        const std::size_t close = body.find('}', i + 1);
        if (close == std::string::npos) break;
        names.push_back(body.substr(i + 1, close - i - 1));
        i = close;
    }
    return names;
}

PromptTemplate make_template(TemplateId id, std::string body) {
    PromptTemplate tmpl;
    tmpl.id = id;
    tmpl.body = std::move(body);
    tmpl.required_vars = scan_placeholders(tmpl.body);
    return tmpl;
}

}  // namespace

const TemplateRegistry& TemplateRegistry::builtin() {
    static const TemplateRegistry registry = [] {
        TemplateRegistry r;
        auto add = [&r](TemplateId id, std::string body) {
            r.templates_.emplace(id, make_template(id, std::move(body)));
        };

        add(TemplateId::baseline_predict,
            "You are a careful clinical prediction assistant.\n"
            "\n"
            "Task: {task_name}\n"
            "{task_description}\n"
            "\n"
            "Patient clinical events (chronological order):\n"
            "{evidence}\n"
            "\n"
            "{instructions}"
            "Possible labels: {label_space}\n"
            "Answer with exactly one final line in the form:\n"
            "FINAL: <label>\n");

        add(TemplateId::indicator_select,
            "You are assisting with clinical evidence retrieval.\n"
            "\n"
            "Task query: {task_query}\n"
            "\n"
            "Candidate clinical indicators (one per line):\n"
            "{candidates}\n"
            "\n"
            "Select the {n_fine} indicators most relevant to the task query,\n"
            "ordered from most to least relevant. Reply with exactly {n_fine}\n"
            "lines, each containing one indicator name copied verbatim from the\n"
            "candidate list.\n");

        add(TemplateId::query_refine,
            "You are refining a retrieval query over a patient's clinical history.\n"
            "\n"
            "Current query: {current_query}\n"
            "Queries already used:\n"
            "{query_history}\n"
            "\n"
            "Evidence retrieved so far:\n"
            "{evidence}\n"
            "\n"
            "Identify one missing but clinically salient aspect that the evidence\n"
            "does not yet cover. The refined query must be concise, focused on a\n"
            "single clinical dimension, and non-redundant with previous queries.\n"
            "Reply with exactly one line in the form:\n"
            "MISSING: <refined query>\n");

        add(TemplateId::sufficiency,
            "You are assessing evidence sufficiency for a clinical prediction task.\n"
            "\n"
            "Task: {task_name}\n"
            "{task_description}\n"
            "\n"
            "Evidence retrieved so far:\n"
            "{evidence}\n"
            "\n"
            "Is this evidence sufficient to answer the prediction task?\n"
            "Reply with exactly one line, either:\n"
            "SUFFICIENT: YES\n"
            "or\n"
            "SUFFICIENT: NO\n");

        add(TemplateId::factual_hypothesis,
            "You are evaluating evidence that the target outcome WILL occur.\n"
            "\n"
            "Task: {task_name}\n"
            "{task_description}\n"
            "\n"
            "{instructions}"
            "Numeric indicator trajectories (shared evidence):\n"
            "{numeric_evidence}\n"
            "\n"
            "Textual evidence retrieved for the factual query (chronological):\n"
            "{evidence}\n"
            "\n"
            "Form an explicit outcome hypothesis supported by this evidence.\n"
            "Possible labels: {label_space}\n"
            "Reply with a final line in the form:\n"
            "HYPOTHESIS: <label> | <one-sentence rationale>\n");

        add(TemplateId::counterfactual_hypothesis,
            "You are evaluating evidence that the target outcome will NOT occur.\n"
            "\n"
            "Task: {task_name}\n"
            "{task_description}\n"
            "\n"
            "{instructions}"
            "Numeric indicator trajectories (shared evidence):\n"
            "{numeric_evidence}\n"
            "\n"
            "Textual evidence retrieved for the counterfactual query (chronological):\n"
            "{evidence}\n"
            "\n"
            "Form an explicit outcome hypothesis supported by this evidence.\n"
            "Possible labels: {label_space}\n"
            "Reply with a final line in the form:\n"
            "HYPOTHESIS: <label> | <one-sentence rationale>\n");

        add(TemplateId::evidence_fusion,
            "You are making the final clinical prediction by comparing two\n"
            "competing hypotheses.\n"
            "\n"
            "Task: {task_name}\n"
            "{task_description}\n"
            "\n"
            "{instructions}"
            "Numeric indicator trajectories (shared evidence):\n"
            "{numeric_evidence}\n"
            "\n"
            "Fused textual evidence from both retrieval paths (chronological):\n"
            "{evidence}\n"
            "\n"
            "Factual hypothesis: {factual_hypothesis}\n"
            "Counterfactual hypothesis: {counterfactual_hypothesis}\n"
            "\n"
            "Compare the strength, directness, and clinical relevance of the\n"
            "evidence supporting each hypothesis, then decide.\n"
            "Possible labels: {label_space}\n"
            "Reply with a final line in the form:\n"
            "FINAL: <label>\n"
            "Optionally followed by:\n"
            "RATIONALE: <short explanation>\n");

        add(TemplateId::react_step,
            "You are gathering evidence from a patient's clinical history to\n"
            "answer a prediction task.\n"
            "\n"
            "Task: {task_name}\n"
            "{task_description}\n"
            "\n"
            "Queries already issued:\n"
            "{query_history}\n"
            "\n"
            "Evidence retrieved so far:\n"
            "{evidence}\n"
            "\n"
            "Think about what additional evidence would help, then issue the next\n"
            "retrieval query. Reply with a final line in the form:\n"
            "QUERY: <next retrieval query>\n");

        return r;
    }();
    return registry;
}

const PromptTemplate& TemplateRegistry::get(TemplateId id) const {
    auto it = templates_.find(id);
    if (it == templates_.end())
        throw ConfigError("no template registered for " + std::string(to_string(id)));
    return it->second;
}

namespace {

std::string render_fragment(const std::string& fragment, const std::map<std::string, std::string>& vars,
                            TemplateId id) {
    std::string out;
    out.reserve(fragment.size());
    for (std::size_t i = 0; i < fragment.size(); ++i) {
        if (fragment[i] != '{') {
            out.push_back(fragment[i]);
            continue;
        }
        const std::size_t close = fragment.find('}', i + 1);
        if (close == std::string::npos) {
            out.append(fragment, i, std::string::npos);
            break;
        }
        const std::string name = fragment.substr(i + 1, close - i - 1);
        auto it = vars.find(name);
        if (it == vars.end())
            throw ConfigError("render: missing variable '" + name + "' for template " +
                              std::string(to_string(id)));
        out += it->second;
        i = close;
    }
    return out;
}

}  // namespace

std::string render_prompt(const PromptTemplate& tmpl, const std::map<std::string, std::string>& vars) {
    return render_fragment(tmpl.body, vars, tmpl.id);
}

std::string ChatRequest::assemble(std::size_t skip_entries) const {
    std::string evidence;
    if (skip_entries >= evidence_entries.size()) {
        evidence = kNoEvidenceMarker;
    } else {
        for (std::size_t i = skip_entries; i < evidence_entries.size(); ++i) {
            if (i > skip_entries) evidence += "\n\n";
            evidence += evidence_entries[i];
        }
    }
    return prefix + evidence + suffix;
}

ChatRequest make_request(const TemplateRegistry& registry, TemplateId id,
                         const std::map<std::string, std::string>& vars,
                         std::vector<std::string> evidence_entries, GenParams params) {
    const PromptTemplate& tmpl = registry.get(id);
    ChatRequest request;
    request.template_id = id;
    request.params = params;
    request.evidence_entries = std::move(evidence_entries);

    const std::size_t split = tmpl.body.find("{evidence}");
    if (split == std::string::npos) {
        if (!request.evidence_entries.empty())
            throw ConfigError("template " + std::string(to_string(id)) +
                              " has no {evidence} block but evidence was supplied");
        request.prefix = render_fragment(tmpl.body, vars, id);
        return request;
    }
    request.prefix = render_fragment(tmpl.body.substr(0, split), vars, id);
    request.suffix = render_fragment(tmpl.body.substr(split + std::string("{evidence}").size()),
                                     vars, id);
    return request;
}

ScriptedResponder& ScriptedResponder::add_rule(Rule rule) {
    rules_.push_back(std::move(rule));
    return *this;
}

ScriptedResponder& ScriptedResponder::when(TemplateId id, std::string reply) {
    return add_rule({id, "", std::move(reply)});
}

ScriptedResponder& ScriptedResponder::when_contains(std::string substring, std::string reply) {
    return add_rule({std::nullopt, std::move(substring), std::move(reply)});
}

ScriptedResponder& ScriptedResponder::when(TemplateId id, std::string substring, std::string reply) {
    return add_rule({id, std::move(substring), std::move(reply)});
}

std::shared_ptr<ScriptedResponder> ScriptedResponder::from_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open scripted scenario file: " + path.string());
    json doc;
    try {
        in >> doc;
    } catch (const json::exception& e) {
        throw ConfigError("scenario file " + path.string() + ": " + e.what());
    }
    auto responder = std::make_shared<ScriptedResponder>(doc.value("default", ""));
    for (const auto& r : doc.value("rules", json::array())) {
        Rule rule;
        if (r.contains("template")) {
            auto id = template_id_from_string(r.at("template").get<std::string>());
            if (!id) throw ConfigError("scenario rule names unknown template '" +
                                       r.at("template").get<std::string>() + "'");
            rule.template_id = *id;
        }
        rule.contains = r.value("contains", "");
        rule.reply = r.at("reply").get<std::string>();
        responder->add_rule(std::move(rule));
    }
    return responder;
}

std::string ScriptedResponder::send(const std::string& prompt, TemplateId id, const GenParams&) {
    for (const auto& rule : rules_) {
        if (rule.template_id && *rule.template_id != id) continue;
        if (!rule.contains.empty() && prompt.find(rule.contains) == std::string::npos) continue;
        return rule.reply;
    }
    return default_reply_;
}

namespace {

struct SplitUrl {
    std::string base;
    std::string path;
};

SplitUrl split_chat_url(const std::string& url) {
    auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw ConfigError("endpoint URL missing scheme: " + url);
    auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) return {url, "/v1/chat/completions"};
    return {url.substr(0, path_start), url.substr(path_start)};
}

}  // namespace

HttpChatClient::HttpChatClient(HttpChatConfig config) : config_(std::move(config)) {
    if (config_.endpoint.empty()) throw ConfigError("http chat client needs an endpoint");
}

std::string HttpChatClient::send(const std::string& prompt, TemplateId, const GenParams& params) {
    const auto url = split_chat_url(config_.endpoint);
    httplib::Client client(url.base);
    client.set_read_timeout(config_.timeout_seconds, 0);
    client.set_connection_timeout(config_.timeout_seconds, 0);

    httplib::Headers headers;
    if (!config_.api_key_env.empty()) {
        if (const char* key = std::getenv(config_.api_key_env.c_str())) {
            headers.emplace("Authorization", std::string("Bearer ") + key);
        }
    }

    json body;
    body["model"] = config_.model;
    body["messages"] = json::array({json{{"role", "user"}, {"content", prompt}}});
    body["temperature"] = params.temperature;
    body["max_tokens"] = params.max_output_tokens;

    auto res = client.Post(url.path, headers, body.dump(), "application/json");
    if (!res) throw TransportError("chat endpoint unreachable: " + config_.endpoint);
    if (res->status < 200 || res->status >= 300)
        throw TransportError("chat endpoint returned status " + std::to_string(res->status));
    try {
        auto doc = json::parse(res->body);
        return doc.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const json::exception& e) {
        throw TransportError(std::string("malformed chat response: ") + e.what());
    }
}

LlmGateway::LlmGateway(std::shared_ptr<ChatClient> client, GatewayConfig config)
    : client_(std::move(client)), config_(config) {
    if (!client_) throw ConfigError("gateway requires a chat client");
    if (config_.chars_per_token <= 0) throw ConfigError("chars_per_token must be positive");
}

std::size_t LlmGateway::estimate_tokens(std::string_view text) const {
    return static_cast<std::size_t>(
        static_cast<double>(text.size()) / config_.chars_per_token + 0.999999);
}

ChatReply LlmGateway::complete(const ChatRequest& request) {
    {
        std::unique_lock<std::mutex> lock(mutex_);
        slot_cv_.wait(lock, [&] {
            return in_flight_ < static_cast<std::size_t>(std::max(1, config_.max_in_flight));
        });
        ++in_flight_;
    }
    struct SlotGuard {
        LlmGateway* gw;
        ~SlotGuard() {
            {
                std::lock_guard<std::mutex> lock(gw->mutex_);
                --gw->in_flight_;
            }
            gw->slot_cv_.notify_one();
        }
    } guard{this};

    ChatReply reply;
    std::string prompt = request.assemble(0);
    std::size_t skip = 0;
    while (estimate_tokens(prompt) > config_.context_budget_tokens &&
           skip < request.evidence_entries.size()) {
        ++skip;
        prompt = request.assemble(skip);
    }
    if (skip > 0) reply.flags.push_back("evidence_truncated:" + std::to_string(skip));
    if (estimate_tokens(prompt) > config_.context_budget_tokens)
        throw ConfigError("prompt exceeds context budget (" +
                          std::to_string(config_.context_budget_tokens) +
                          " tokens) even after evidence truncation");

    const auto started = std::chrono::steady_clock::now();
    const int attempts = std::max(1, config_.retry_max_attempts);
    for (int attempt = 1;; ++attempt) {
        try {
            reply.text = client_->send(prompt, request.template_id, request.params);
            break;
        } catch (const TransportError& e) {
            if (attempt >= attempts)
                throw TransportError(std::string(e.what()) + " (after " +
                                     std::to_string(attempt) + " attempts)");
            reply.flags.push_back("retry:" + std::to_string(attempt));
            const auto delay = config_.retry_base_delay_ms * (1 << (attempt - 1));
            if (delay > 0) std::this_thread::sleep_for(std::chrono::milliseconds(delay));
        }
    }
    reply.latency_ms = std::chrono::duration<double, std::milli>(
                           std::chrono::steady_clock::now() - started)
                           .count();
    reply.usage.prompt_chars = prompt.size();
    reply.usage.est_prompt_tokens = estimate_tokens(prompt);
    reply.usage.reply_chars = reply.text.size();

    {
        std::lock_guard<std::mutex> lock(mutex_);
        ++calls_;
        if (config_.keep_transcript) {
            transcript_.push_back({request.template_id, std::move(prompt), reply.text, reply.flags});
        }
    }
    return reply;
}

std::size_t LlmGateway::call_count() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return calls_;
}

std::vector<TranscriptEntry> LlmGateway::transcript() const {
    std::lock_guard<std::mutex> lock(mutex_);
    return transcript_;
}

void LlmGateway::clear_transcript() {
    std::lock_guard<std::mutex> lock(mutex_);
    transcript_.clear();
}

int parse_label(const std::string& text, std::string_view marker, std::span<const int> label_space) {
    if (label_space.empty()) throw ValidationError("parse_label: empty label space");
    std::size_t pos = 0;
    while ((pos = text.find(marker, pos)) != std::string::npos) {
        std::size_t i = pos + marker.size();
        while (i < text.size() && (text[i] == ' ' || text[i] == '\t')) ++i;
        bool negative = false;
        if (i < text.size() && text[i] == '-') {
            negative = true;
            ++i;
        }
        std::size_t digits_start = i;
        long value = 0;
        while (i < text.size() && std::isdigit(static_cast<unsigned char>(text[i]))) {
            value = value * 10 + (text[i] - '0');
            ++i;
        }
        if (i > digits_start) {
            const int label = static_cast<int>(negative ? -value : value);
            for (int allowed : label_space) {
                if (allowed == label) return label;
            }
            throw ParseError("label " + std::to_string(label) + " outside label space");
        }
        pos += marker.size();
    }
    throw ParseError("no '" + std::string(marker) + "' answer marker with an integer found");
}

}  // namespace ehrrag
