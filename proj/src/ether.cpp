#include "ehrrag/ether.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <unordered_set>

#include "ehrrag/ingest.hpp"

namespace ehrrag {

void TemporalScoringParams::validate() const {
    if (alpha < 0.0 || alpha > 1.0)
        throw ConfigError("alpha out of [0,1]: " + std::to_string(alpha));
    if (tau_recent_days <= 0.0) throw ConfigError("tau_recent must be a positive duration");
    if (tau_early_days <= 0.0) throw ConfigError("tau_early must be a positive duration");
    if (k_cand == 0 || k_final == 0) throw ConfigError("k_cand and k_final must be >= 1");
    if (k_final > k_cand) throw ConfigError("k_final must not exceed k_cand");
}

void IndicatorParams::validate() const {
    if (n_coarse == 0 || n_fine == 0 || n_recent == 0)
        throw ConfigError("indicator selection counts must be >= 1");
    if (n_fine > n_coarse) throw ConfigError("n_fine must not exceed n_coarse");
}

std::string normalize_indicator_name(std::string_view description) {
    std::string out;
    out.reserve(description.size());
    bool pending_space = false;
    for (char c : description) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            if (!out.empty()) pending_space = true;
        } else {
            if (pending_space) {
                out.push_back(' ');
                pending_space = false;
            }
            out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
        }
    }
    return out;
}

std::vector<std::string> NumericEvidence::indicator_names() const {
    std::vector<std::string> names;
    names.reserve(trajectories.size());
    for (const auto& t : trajectories) names.push_back(t.indicator_name);
    return names;
}

std::string NumericEvidence::render() const {
    if (trajectories.empty()) return "(no numeric evidence retrieved)";
    std::string out;
    for (const auto& t : trajectories) {
        out += "- " + t.indicator_name + ":";
        for (const auto& p : t.points) {
            out += " [" + p.timestamp.to_string() + "] " + format_numeric(p.value.value);
            if (!p.value.unit.empty()) out += " " + p.value.unit;
            out += ";";
        }
        if (!out.empty() && out.back() == ';') out.pop_back();
        out += "\n";
    }
    if (!out.empty() && out.back() == '\n') out.pop_back();
    return out;
}

std::vector<IndicatorTrajectory> aggregate_indicators(std::span<const ClinicalEvent> events,
                                                      Timestamp cutoff) {
    std::map<std::string, IndicatorTrajectory> grouped;
    for (const auto& event : events) {
        if (event.timestamp > cutoff) continue;
        const NumericValue* num = event.numeric();
        if (!num) continue;
        const std::string key = normalize_indicator_name(
            event.description.empty() ? event.concept_code : event.description);
        auto& traj = grouped[key];
        traj.indicator_name = key;
        traj.points.push_back({*num, event.timestamp});
    }

    std::vector<IndicatorTrajectory> out;
    out.reserve(grouped.size());
    for (auto& [key, traj] : grouped) {
        std::stable_sort(traj.points.begin(), traj.points.end(),
                         [](const TrajectoryPoint& a, const TrajectoryPoint& b) {
                             return a.timestamp < b.timestamp;
                         });
        out.push_back(std::move(traj));
    }
    return out;
}

std::vector<std::string> coarse_select_indicators(const std::string& task_query,
                                                  std::span<const IndicatorTrajectory> trajectories,
                                                  std::size_t n_coarse,
                                                  EmbeddingProvider& provider) {
    if (n_coarse == 0) throw ValidationError("coarse_select_indicators: n_coarse must be >= 1");
    if (trajectories.empty()) return {};

    const auto query_vec = provider.embed(task_query);
    struct Scored {
        const std::string* name;
        double score;
    };
    std::vector<Scored> scored;
    scored.reserve(trajectories.size());
    Diagnostics ignore;
    for (const auto& traj : trajectories) {
        const auto name_vec = provider.embed(traj.indicator_name);
        scored.push_back({&traj.indicator_name, cosine_similarity(query_vec, name_vec, &ignore)});
    }
    std::sort(scored.begin(), scored.end(), [](const Scored& a, const Scored& b) {
        if (a.score != b.score) return a.score > b.score;
        return *a.name < *b.name;
    });
    if (scored.size() > n_coarse) scored.resize(n_coarse);

    std::vector<std::string> out;
    out.reserve(scored.size());
    for (const auto& s : scored) out.push_back(*s.name);
    return out;
}

namespace {

/// Parses one indicator name per reply line, tolerating "-", "*", and
/// "1." style enumeration prefixes; only names present in the candidate
/// set survive.
std::vector<std::string> parse_indicator_reply(const std::string& reply,
                                               const std::vector<std::string>& candidates,
                                               std::size_t limit, bool* dropped_any) {
    std::unordered_set<std::string> candidate_set(candidates.begin(), candidates.end());
    std::vector<std::string> selected;
    std::unordered_set<std::string> seen;
    std::size_t pos = 0;
    while (pos <= reply.size() && selected.size() < limit) {
        std::size_t eol = reply.find('\n', pos);
        if (eol == std::string::npos) eol = reply.size();
        std::string line = reply.substr(pos, eol - pos);
        pos = eol + 1;

        std::size_t b = 0;
        while (b < line.size() &&
               (std::isspace(static_cast<unsigned char>(line[b])) || line[b] == '-' ||
                line[b] == '*' || std::isdigit(static_cast<unsigned char>(line[b])) ||
                line[b] == '.' || line[b] == ')')) {
            ++b;
        }
        std::size_t e = line.size();
        while (e > b && std::isspace(static_cast<unsigned char>(line[e - 1]))) --e;
        if (e <= b) {
            if (pos > reply.size()) break;
            continue;
        }
        const std::string name = normalize_indicator_name(line.substr(b, e - b));
        if (candidate_set.count(name)) {
            if (seen.insert(name).second) selected.push_back(name);
        } else if (dropped_any) {
            *dropped_any = true;
        }
        if (pos > reply.size()) break;
    }
    return selected;
}

}  // namespace

std::vector<std::string> rerank_indicators(LlmGateway& gateway, const std::string& task_query,
                                           const std::vector<std::string>& candidates,
                                           std::size_t n_fine, Diagnostics* diag) {
    if (candidates.empty()) throw ValidationError("rerank_indicators: no candidates");
    const std::size_t want = std::min(n_fine, candidates.size());

    std::string candidate_block;
    for (const auto& name : candidates) candidate_block += name + "\n";
    if (!candidate_block.empty()) candidate_block.pop_back();

    ChatRequest request = make_request(TemplateRegistry::builtin(), TemplateId::indicator_select,
                                       {{"task_query", task_query},
                                        {"candidates", candidate_block},
                                        {"n_fine", std::to_string(want)}},
                                       {});

    std::vector<std::string> selected;
    bool dropped = false;
    for (int attempt = 0; attempt < 2 && selected.empty(); ++attempt) {
        const ChatReply reply = gateway.complete(request);
        dropped = false;
        selected = parse_indicator_reply(reply.text, candidates, want, &dropped);
        if (selected.empty() && attempt == 0 && diag) diag->flag("rerank_retry");
    }

    if (selected.empty()) {
        if (diag) diag->flag("rerank_fallback_coarse");
        selected.assign(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(want));
        return selected;
    }
    if (dropped && diag) diag->flag("rerank_dropped_hallucinated");

    // Backfill from coarse order when the model returned fewer valid names.
    if (selected.size() < want) {
        std::unordered_set<std::string> have(selected.begin(), selected.end());
        for (const auto& name : candidates) {
            if (selected.size() >= want) break;
            if (have.insert(name).second) selected.push_back(name);
        }
        if (diag) diag->flag("rerank_backfilled");
    }
    return selected;
}

NumericEvidence collect_numeric_evidence(const std::vector<std::string>& selected,
                                         std::span<const IndicatorTrajectory> trajectories,
                                         std::size_t n_recent, Timestamp cutoff,
                                         Diagnostics* diag) {
    NumericEvidence evidence;
    for (const auto& name : selected) {
        const IndicatorTrajectory* found = nullptr;
        for (const auto& traj : trajectories) {
            if (traj.indicator_name == name) {
                found = &traj;
                break;
            }
        }
        if (!found) {
            if (diag) diag->flag("missing_indicator:" + name);
            continue;
        }
        IndicatorTrajectory kept;
        kept.indicator_name = name;
        for (const auto& p : found->points) {
            if (p.timestamp <= cutoff) kept.points.push_back(p);
        }
        if (kept.points.size() > n_recent) {
            kept.points.erase(kept.points.begin(),
                              kept.points.end() - static_cast<std::ptrdiff_t>(n_recent));
        }
        evidence.trajectories.push_back(std::move(kept));
    }
    return evidence;
}

double u_shape_time_score(Timestamp tau_c, Timestamp tau_star, Timestamp tau_first,
                          const TemporalScoringParams& params, Diagnostics* diag) {
    // Clock skew in source data can put the recorded first-event time after
    // the prediction time or an anchor outside the window; clamp into range.
    Timestamp first = tau_first;
    if (first > tau_star) {
        first = tau_star;
        if (diag) diag->flag("tau_first_after_tau_star_clamped");
    }
    Timestamp anchor = tau_c;
    if (anchor < first) {
        anchor = first;
        if (diag) diag->flag("tau_c_clamped_low");
    } else if (anchor > tau_star) {
        anchor = tau_star;
        if (diag) diag->flag("tau_c_clamped_high");
    }

    const double recent = std::exp(-days_between(anchor, tau_star) / params.tau_recent_days);
    const double early = std::exp(-days_between(first, anchor) / params.tau_early_days);
    return std::max(recent, early);
}

double hybrid_score(double s_sem, double s_time, double alpha) {
    return alpha * s_sem + (1.0 - alpha) * s_time;
}

std::vector<EvidenceChunk> retrieve_textual(const std::string& query, const VectorIndex& index,
                                            Timestamp tau_star,
                                            const TemporalScoringParams& params,
                                            EmbeddingProvider& provider) {
    params.validate();
    if (index.empty()) return {};
    if (index.cutoff.valid() && index.cutoff > tau_star)
        throw ValidationError("retrieve_textual: index cutoff is after the prediction time");

    const Timestamp tau_first =
        index.record_first_time.valid() ? index.record_first_time : index.chunks.front().time_span.earliest;

    // Stage 1: semantic candidate pool.
    const auto candidates = search_semantic(index, query, params.k_cand, provider);

    // Stage 2: hybrid re-ranking of the pool.
    struct Ranked {
        const EvidenceChunk* chunk;
        double score;
    };
    std::vector<Ranked> ranked;
    ranked.reserve(candidates.size());
    for (const auto& hit : candidates) {
        const double s_time = u_shape_time_score(hit.chunk->anchor_time(), tau_star, tau_first, params);
        ranked.push_back({hit.chunk, hybrid_score(hit.score, s_time, params.alpha)});
    }
    std::sort(ranked.begin(), ranked.end(), [](const Ranked& a, const Ranked& b) {
        if (a.score != b.score) return a.score > b.score;
        if (a.chunk->anchor_time() != b.chunk->anchor_time())
            return a.chunk->anchor_time() < b.chunk->anchor_time();
        return a.chunk->chunk_id < b.chunk->chunk_id;
    });
    if (ranked.size() > params.k_final) ranked.resize(params.k_final);

    // Stage 3: chronological order for the prompt.
    std::sort(ranked.begin(), ranked.end(), [](const Ranked& a, const Ranked& b) {
        if (a.chunk->anchor_time() != b.chunk->anchor_time())
            return a.chunk->anchor_time() < b.chunk->anchor_time();
        return a.chunk->chunk_id < b.chunk->chunk_id;
    });

    std::vector<EvidenceChunk> out;
    out.reserve(ranked.size());
    for (const auto& r : ranked) out.push_back(*r.chunk);
    return out;
}

}  // namespace ehrrag
