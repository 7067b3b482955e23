#pragma once

#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

#include "ehrrag/core.hpp"

namespace ehrrag {

/// Concept code -> human-readable description. Lookups are total: unknown
/// codes fall back to the raw code string.
struct OntologyMap {
    std::unordered_map<std::string, std::string> entries;

    static OntologyMap load(const std::filesystem::path& path);
};

/// Mapped description if present, otherwise the code verbatim. An
/// empty/whitespace code yields "" and raises a diagnostic; the serializer
/// substitutes "unknown" for such events at parse time.
std::string resolve_concept(const std::string& code, const OntologyMap& ontology,
                            Diagnostics* diag = nullptr);

/// Column-name mapping for MEDS-style delimited event files.
struct ColumnSchema {
    std::string subject_id = "subject_id";
    std::string time = "time";
    std::string code = "code";
    std::string event_type = "event_type";
    std::string numeric_value = "numeric_value";
    std::string unit = "unit";
    std::string text_value = "text_value";
};

struct CohortSource {
    std::filesystem::path events_path;
    std::filesystem::path ontology_path;
    std::filesystem::path labels_path;
    ColumnSchema schema;

    void check_paths_exist() const;
};

struct RejectedRow {
    std::size_t row_number;  // 1-based data row (header excluded)
    std::string reason;
};

struct ParseReport {
    std::vector<PatientRecord> records;  // sorted by subject_id, each validated
    std::vector<RejectedRow> rejected;
    std::size_t data_rows = 0;
    Diagnostics diagnostics;

    std::size_t event_count() const;
};

/// Parses the events file into one validated PatientRecord per subject.
/// Malformed rows become diagnostics, not failures; a missing required
/// column is a schema error (DataError).
ParseReport parse_events(const CohortSource& source);

/// "[time] type - description (value: ...)"; the value suffix is omitted
/// for valueless events and numeric values carry their unit when present.
std::string serialize_event(const ClinicalEvent& event);

/// Up to 6 significant digits, trailing zeros trimmed. Stable rendering
/// keeps chunk hashes and embeddings reproducible.
std::string format_numeric(double value);

struct LabelRow {
    std::string subject_id;
    Timestamp prediction_time;
    int label = 0;
};

std::vector<LabelRow> load_labels(const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Cohort store: directory of per-subject serialized records plus a manifest.
// ---------------------------------------------------------------------------

struct CohortManifest {
    std::size_t subject_count = 0;
    std::size_t event_count = 0;
    Timestamp time_min;
    Timestamp time_max;
    std::string content_hash;
};

class CohortStore {
public:
    static CohortStore open(const std::filesystem::path& root);

    const std::filesystem::path& root() const { return root_; }
    const CohortManifest& manifest() const { return manifest_; }
    const std::vector<std::string>& subject_ids() const { return subject_ids_; }

    PatientRecord load_record(const std::string& subject_id) const;
    bool has_labels() const;
    std::vector<LabelRow> load_labels() const;

private:
    std::filesystem::path root_;
    CohortManifest manifest_;
    std::vector<std::string> subject_ids_;
    std::unordered_map<std::string, std::string> subject_files_;
};

/// Writes records (and optional labels) under root; returns the manifest.
CohortManifest write_cohort_store(const std::filesystem::path& root,
                                  const std::vector<PatientRecord>& records,
                                  const std::vector<LabelRow>& labels);

}  // namespace ehrrag
