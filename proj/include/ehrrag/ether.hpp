#pragma once

#include <span>
#include <string>
#include <vector>

#include "ehrrag/core.hpp"
#include "ehrrag/gateway.hpp"
#include "ehrrag/index.hpp"

namespace ehrrag {

/// Knobs of the time-aware textual ranking stage.
struct TemporalScoringParams {
    double alpha = 0.75;            // semantic weight in the convex combination
    double tau_recent_days = 180.0; // recency decay window
    double tau_early_days = 3650.0; // onset-era decay window
    std::size_t k_cand = 100;       // semantic candidate pool
    std::size_t k_final = 5;        // chunks kept after hybrid ranking

    void validate() const;
};

/// Knobs of the coarse-to-fine numeric indicator stage.
struct IndicatorParams {
    std::size_t n_coarse = 30;
    std::size_t n_fine = 10;
    std::size_t n_recent = 5;

    void validate() const;
};

struct TrajectoryPoint {
    NumericValue value;
    Timestamp timestamp;
};

/// Time-ordered numeric series for one clinical indicator. Indicator
/// identity is the resolved description, case-folded and whitespace
/// normalized, so aliased codes for the same lab collapse together.
struct IndicatorTrajectory {
    std::string indicator_name;
    std::vector<TrajectoryPoint> points;
};

struct NumericEvidence {
    std::vector<IndicatorTrajectory> trajectories;

    bool empty() const { return trajectories.empty(); }
    std::vector<std::string> indicator_names() const;
    /// Deterministic textual rendering for prompts.
    std::string render() const;
};

std::string normalize_indicator_name(std::string_view description);

/// Groups every numeric-valued event at or before the cutoff into exactly
/// one trajectory; result sorted by indicator name, points time-ordered.
std::vector<IndicatorTrajectory> aggregate_indicators(std::span<const ClinicalEvent> events,
                                                      Timestamp cutoff);

/// Ranks indicator names by cosine similarity between the query embedding
/// and the name embedding; ties break alphabetically.
std::vector<std::string> coarse_select_indicators(const std::string& task_query,
                                                  std::span<const IndicatorTrajectory> trajectories,
                                                  std::size_t n_coarse,
                                                  EmbeddingProvider& provider);

/// Model-ranked subset of the candidates. Hallucinated names are dropped
/// and backfilled in coarse order; an unparseable reply (after one retry)
/// falls back to the coarse prefix, flagged.
std::vector<std::string> rerank_indicators(LlmGateway& gateway, const std::string& task_query,
                                           const std::vector<std::string>& candidates,
                                           std::size_t n_fine, Diagnostics* diag = nullptr);

/// Last min(n_recent, available) points at or before the cutoff for each
/// selected indicator, chronological order preserved. Unknown names are
/// skipped with a diagnostic.
NumericEvidence collect_numeric_evidence(const std::vector<std::string>& selected,
                                         std::span<const IndicatorTrajectory> trajectories,
                                         std::size_t n_recent, Timestamp cutoff,
                                         Diagnostics* diag = nullptr);

/// U-shaped temporal relevance: max of a recency decay anchored at the
/// prediction time and an onset decay anchored at the earliest record
/// time, both in fractional days. Anchors outside [tau_first, tau_star]
/// are clamped with a diagnostic; the result is always in (0, 1].
double u_shape_time_score(Timestamp tau_c, Timestamp tau_star, Timestamp tau_first,
                          const TemporalScoringParams& params, Diagnostics* diag = nullptr);

/// alpha * s_sem + (1 - alpha) * s_time.
double hybrid_score(double s_sem, double s_time, double alpha);

/// Full textual retrieval stage: semantic top-k_cand, hybrid re-ranking to
/// top-k_final (ties: earlier anchor, then chunk id), returned in
/// chronological order.
std::vector<EvidenceChunk> retrieve_textual(const std::string& query, const VectorIndex& index,
                                            Timestamp tau_star,
                                            const TemporalScoringParams& params,
                                            EmbeddingProvider& provider);

}  // namespace ehrrag
