#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "ehrrag/core.hpp"
#include "ehrrag/embedding.hpp"

namespace ehrrag {

/// 1-based inclusive row range into the serialized textual event list.
struct RowSpan {
    std::size_t start_row = 0;
    std::size_t end_row = 0;

    std::size_t length() const { return end_row - start_row + 1; }
    bool operator==(const RowSpan&) const = default;
};

struct TimeSpan {
    Timestamp earliest;
    Timestamp latest;
};

/// A serialized, embedded, time-spanned window of textual events: the unit
/// of retrieval, deduplication, and provenance. The chunk id hashes
/// (subject, row span, text) so it is stable across rebuilds and unique
/// within a subject even when two windows serialize identically.
struct EvidenceChunk {
    std::string chunk_id;
    std::string subject_id;
    RowSpan row_span;
    TimeSpan time_span;
    std::string text;
    std::vector<float> embedding;

    /// Temporal anchor for scoring: the latest event time in the chunk.
    Timestamp anchor_time() const { return time_span.latest; }
};

struct ChunkingParams {
    std::size_t chunk_size = 100;
    std::size_t overlap = 5;

    std::size_t stride() const { return chunk_size - overlap; }
    void validate() const;
};

struct SerializedLine {
    std::string text;
    Timestamp timestamp;
};

/// Splits lines into overlapping windows, embeddings not yet filled.
/// Chunk k covers rows [1 + k*stride, min(1 + k*stride + chunk_size - 1, N)]
/// and generation stops with the first chunk that reaches row N, so every
/// row is covered and consecutive chunks share exactly `overlap` rows.
std::vector<EvidenceChunk> chunk_events(std::span<const SerializedLine> lines,
                                        const ChunkingParams& params,
                                        const std::string& subject_id);

/// u.v / (|u||v|); zero vectors score 0 with a diagnostic instead of
/// erroring so one pathological row cannot abort a batch.
double cosine_similarity(std::span<const float> u, std::span<const float> v,
                         Diagnostics* diag = nullptr);

/// Per-subject exhaustive-scan index over the textual (non-numeric) events
/// at or before the cutoff. Immutable once built; concurrent searches are
/// safe.
struct VectorIndex {
    std::string subject_id;
    std::string provider_fingerprint;
    ChunkingParams chunking;
    Timestamp cutoff;
    /// Earliest event time (any modality) at or before the cutoff; the
    /// early anchor of the temporal score.
    Timestamp record_first_time;
    std::vector<EvidenceChunk> chunks;

    std::size_t size() const { return chunks.size(); }
    bool empty() const { return chunks.empty(); }
};

/// Numeric-valued events route to the indicator pipeline; everything else
/// (no value or text value, regardless of event_type) is serialized,
/// chunked, and embedded here.
VectorIndex build_index(const PatientRecord& record, Timestamp cutoff,
                        EmbeddingProvider& provider, const ChunkingParams& params);

struct SemanticHit {
    const EvidenceChunk* chunk = nullptr;
    double score = 0.0;
};

/// Brute-force cosine top-k, sorted by score descending with ties broken by
/// earlier anchor time then chunk id. Returns min(k, index size) hits.
std::vector<SemanticHit> search_semantic(const VectorIndex& index, const std::string& query_text,
                                         std::size_t k, EmbeddingProvider& provider);

/// Index persistence: manifest + chunk records, embeddings as raw
/// little-endian float32.
void save_index(const VectorIndex& index, const std::filesystem::path& dir);
VectorIndex load_index(const std::filesystem::path& dir);

}  // namespace ehrrag
