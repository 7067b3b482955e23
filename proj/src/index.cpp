#include "ehrrag/index.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "ehrrag/hash.hpp"
#include "ehrrag/ingest.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace ehrrag {

void ChunkingParams::validate() const {
    if (chunk_size == 0) throw ValidationError("chunk_size must be positive");
    if (overlap >= chunk_size)
        throw ValidationError("overlap (" + std::to_string(overlap) +
                              ") must be smaller than chunk_size (" + std::to_string(chunk_size) +
                              ")");
}

std::vector<EvidenceChunk> chunk_events(std::span<const SerializedLine> lines,
                                        const ChunkingParams& params,
                                        const std::string& subject_id) {
    params.validate();
    if (lines.empty()) throw ValidationError("chunk_events: no lines to chunk");

    const std::size_t n = lines.size();
    const std::size_t stride = params.stride();
    std::vector<EvidenceChunk> chunks;

    for (std::size_t start = 1;; start += stride) {
        const std::size_t end = std::min(start + params.chunk_size - 1, n);
        EvidenceChunk chunk;
        chunk.subject_id = subject_id;
        chunk.row_span = {start, end};
        chunk.time_span.earliest = lines[start - 1].timestamp;
        chunk.time_span.latest = lines[end - 1].timestamp;
        for (std::size_t row = start; row <= end; ++row) {
            if (row > start) chunk.text.push_back('\n');
            chunk.text += lines[row - 1].text;
        }
        std::uint64_t h = fnv1a64(subject_id);
        h = fnv1a64(std::to_string(start) + ":" + std::to_string(end), h);
        h = fnv1a64(chunk.text, h);
        chunk.chunk_id = to_hex16(h);
        chunks.push_back(std::move(chunk));
        if (end == n) break;
    }
    return chunks;
}

double cosine_similarity(std::span<const float> u, std::span<const float> v, Diagnostics* diag) {
    if (u.size() != v.size())
        throw ValidationError("cosine_similarity: dimension mismatch (" + std::to_string(u.size()) +
                              " vs " + std::to_string(v.size()) + ")");
    double dot = 0.0, nu = 0.0, nv = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        dot += static_cast<double>(u[i]) * v[i];
        nu += static_cast<double>(u[i]) * u[i];
        nv += static_cast<double>(v[i]) * v[i];
    }
    if (nu == 0.0 || nv == 0.0) {
        if (diag) diag->flag("zero_vector_similarity");
        return 0.0;
    }
    return dot / (std::sqrt(nu) * std::sqrt(nv));
}

VectorIndex build_index(const PatientRecord& record, Timestamp cutoff,
                        EmbeddingProvider& provider, const ChunkingParams& params) {
    params.validate();
    VectorIndex index;
    index.subject_id = record.subject_id;
    index.provider_fingerprint = provider.fingerprint();
    index.chunking = params;
    index.cutoff = cutoff;

    const auto history = history_before(record, cutoff);
    std::vector<SerializedLine> lines;
    for (const auto& event : history) {
        if (!index.record_first_time.valid() || event.timestamp < index.record_first_time)
            index.record_first_time = event.timestamp;
        if (event.is_numeric()) continue;  // routed to the indicator pipeline
        lines.push_back({serialize_event(event), event.timestamp});
    }
    if (lines.empty()) return index;

    index.chunks = chunk_events(lines, params, record.subject_id);
    for (auto& chunk : index.chunks) {
        chunk.embedding = provider.embed(chunk.text);
        if (chunk.embedding.size() != provider.dimension())
            throw TransportError("embedding provider returned wrong dimension for chunk " +
                                 chunk.chunk_id);
    }
    return index;
}

std::vector<SemanticHit> search_semantic(const VectorIndex& index, const std::string& query_text,
                                         std::size_t k, EmbeddingProvider& provider) {
    if (k == 0) throw ValidationError("search_semantic: k must be >= 1");
    if (index.empty()) return {};
    if (provider.fingerprint() != index.provider_fingerprint)
        throw ValidationError("search_semantic: provider fingerprint mismatch (index built with " +
                              index.provider_fingerprint + ")");

    const auto query = provider.embed(query_text);
    std::vector<SemanticHit> hits;
    hits.reserve(index.size());
    for (const auto& chunk : index.chunks) {
        hits.push_back({&chunk, cosine_similarity(query, chunk.embedding)});
    }
    std::sort(hits.begin(), hits.end(), [](const SemanticHit& a, const SemanticHit& b) {
        if (a.score != b.score) return a.score > b.score;
        if (a.chunk->anchor_time() != b.chunk->anchor_time())
            return a.chunk->anchor_time() < b.chunk->anchor_time();
        return a.chunk->chunk_id < b.chunk->chunk_id;
    });
    if (hits.size() > k) hits.resize(k);
    return hits;
}

namespace {

void append_le_float(std::string& out, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, sizeof(bits));
    out.push_back(static_cast<char>(bits & 0xFF));
    out.push_back(static_cast<char>((bits >> 8) & 0xFF));
    out.push_back(static_cast<char>((bits >> 16) & 0xFF));
    out.push_back(static_cast<char>((bits >> 24) & 0xFF));
}

float read_le_float(const unsigned char* p) {
    std::uint32_t bits = static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
                         (static_cast<std::uint32_t>(p[2]) << 16) |
                         (static_cast<std::uint32_t>(p[3]) << 24);
    float v;
    std::memcpy(&v, &bits, sizeof(v));
    return v;
}

}  // namespace

void save_index(const VectorIndex& index, const fs::path& dir) {
    fs::create_directories(dir);

    json manifest;
    manifest["subject_id"] = index.subject_id;
    manifest["provider_fingerprint"] = index.provider_fingerprint;
    manifest["chunk_size"] = index.chunking.chunk_size;
    manifest["overlap"] = index.chunking.overlap;
    manifest["cutoff"] = index.cutoff.valid() ? index.cutoff.to_string() : "";
    manifest["record_first_time"] =
        index.record_first_time.valid() ? index.record_first_time.to_string() : "";
    manifest["chunk_count"] = index.chunks.size();
    std::ofstream mout(dir / "index_manifest.json", std::ios::binary);
    mout << manifest.dump(2) << "\n";

    std::ofstream cout_(dir / "chunks.jsonl", std::ios::binary);
    std::string blob;
    for (const auto& chunk : index.chunks) {
        json j;
        j["id"] = chunk.chunk_id;
        j["rows"] = {chunk.row_span.start_row, chunk.row_span.end_row};
        j["span"] = {chunk.time_span.earliest.to_string(), chunk.time_span.latest.to_string()};
        j["text"] = chunk.text;
        j["dim"] = chunk.embedding.size();
        cout_ << j.dump() << "\n";
        for (float v : chunk.embedding) append_le_float(blob, v);
    }
    std::ofstream bout(dir / "embeddings.f32", std::ios::binary);
    bout << blob;
}

VectorIndex load_index(const fs::path& dir) {
    std::ifstream min(dir / "index_manifest.json");
    if (!min) throw DataError("not an index directory: " + dir.string());
    json manifest;
    min >> manifest;

    VectorIndex index;
    index.subject_id = manifest.at("subject_id").get<std::string>();
    index.provider_fingerprint = manifest.at("provider_fingerprint").get<std::string>();
    index.chunking.chunk_size = manifest.at("chunk_size").get<std::size_t>();
    index.chunking.overlap = manifest.at("overlap").get<std::size_t>();
    if (auto t = Timestamp::parse(manifest.value("cutoff", ""))) index.cutoff = *t;
    if (auto t = Timestamp::parse(manifest.value("record_first_time", "")))
        index.record_first_time = *t;

    std::ifstream bin(dir / "embeddings.f32", std::ios::binary);
    std::string blob((std::istreambuf_iterator<char>(bin)), std::istreambuf_iterator<char>());

    std::ifstream cin_(dir / "chunks.jsonl");
    std::string line;
    std::size_t offset = 0;
    while (std::getline(cin_, line)) {
        if (line.empty()) continue;
        json j = json::parse(line);
        EvidenceChunk chunk;
        chunk.chunk_id = j.at("id").get<std::string>();
        chunk.subject_id = index.subject_id;
        chunk.row_span = {j.at("rows")[0].get<std::size_t>(), j.at("rows")[1].get<std::size_t>()};
        auto t0 = Timestamp::parse(j.at("span")[0].get<std::string>());
        auto t1 = Timestamp::parse(j.at("span")[1].get<std::string>());
        if (!t0 || !t1) throw DataError("corrupt chunk time span in " + dir.string());
        chunk.time_span = {*t0, *t1};
        chunk.text = j.at("text").get<std::string>();
        const std::size_t dim = j.at("dim").get<std::size_t>();
        if (offset + dim * 4 > blob.size())
            throw DataError("embeddings.f32 truncated in " + dir.string());
        chunk.embedding.resize(dim);
        for (std::size_t i = 0; i < dim; ++i) {
            chunk.embedding[i] =
                read_le_float(reinterpret_cast<const unsigned char*>(blob.data()) + offset);
            offset += 4;
        }
        index.chunks.push_back(std::move(chunk));
    }
    return index;
}

}  // namespace ehrrag
