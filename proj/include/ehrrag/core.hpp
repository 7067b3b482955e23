#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "ehrrag/errors.hpp"
#include "ehrrag/time.hpp"

namespace ehrrag {

enum class EventType { diagnosis, procedure, measurement, medication, note, visit, other };

std::string_view to_string(EventType type);
std::optional<EventType> event_type_from_string(std::string_view text);

struct NumericValue {
    double value = 0.0;
    std::string unit;  // empty when the source row carries no unit

    bool operator==(const NumericValue&) const = default;
};

using EventValue = std::variant<NumericValue, std::string>;

/// One timestamped clinical fact: concept, modality-tagged value, instant.
struct ClinicalEvent {
    std::string concept_code;
    EventType event_type = EventType::other;
    std::string description;
    std::optional<EventValue> value;
    Timestamp timestamp;

    bool is_numeric() const {
        return value.has_value() && std::holds_alternative<NumericValue>(*value);
    }
    const NumericValue* numeric() const {
        return value ? std::get_if<NumericValue>(&*value) : nullptr;
    }
    const std::string* text_value() const {
        return value ? std::get_if<std::string>(&*value) : nullptr;
    }
};

/// Chronologically ordered event sequence for one subject. Immutable after
/// validation; safe to share read-only across pipeline workers.
struct PatientRecord {
    std::string subject_id;
    std::vector<ClinicalEvent> events;
};

enum class LabelType { binary, multiclass };

/// Prediction-task metadata: label space, dual retrieval queries, and
/// task-specific decision instructions, loaded from the task catalog file.
struct TaskSpec {
    std::string task_id;
    std::string name;
    std::string category;
    std::string description;
    std::string factual_query;
    std::string counterfactual_query;
    std::string base_query;
    LabelType label_type = LabelType::binary;
    std::vector<int> label_values;
    std::map<int, std::string> label_descriptions;
    std::string instructions;
    // Label emitted when the decision reply cannot be parsed twice. Tasks
    // whose instructions favor positives set this explicitly.
    int fallback_label = 0;

    bool label_in_space(int label) const;
    /// "0 (<7 days), 1 (>=7 days)" for prompt rendering.
    std::string label_space_text() const;
    void validate() const;
};

struct PredictionInstance {
    std::string subject_id;
    Timestamp prediction_time;
    std::optional<int> true_label;
};

/// Stable-sorts events by timestamp; equal timestamps keep input order so
/// downstream chunking is reproducible. Throws ValidationError on an empty
/// record or an invalid timestamp (message names the event index).
PatientRecord validate_record(PatientRecord record);

/// Events with timestamp <= cutoff (inclusive), order preserved. The record
/// must be validated; sortedness makes the result a prefix.
std::span<const ClinicalEvent> history_before(const PatientRecord& record, Timestamp cutoff);

std::vector<TaskSpec> load_tasks(const std::filesystem::path& path);
const TaskSpec& find_task(const std::vector<TaskSpec>& tasks, std::string_view task_id);

}  // namespace ehrrag
