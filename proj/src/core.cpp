#include "ehrrag/core.hpp"

#include <algorithm>
#include <fstream>

#include <json.hpp>

namespace ehrrag {

std::string_view to_string(EventType type) {
    switch (type) {
        case EventType::diagnosis: return "diagnosis";
        case EventType::procedure: return "procedure";
        case EventType::measurement: return "measurement";
        case EventType::medication: return "medication";
        case EventType::note: return "note";
        case EventType::visit: return "visit";
        case EventType::other: return "other";
    }
    return "other";
}

std::optional<EventType> event_type_from_string(std::string_view text) {
    if (text == "diagnosis") return EventType::diagnosis;
    if (text == "procedure") return EventType::procedure;
    if (text == "measurement") return EventType::measurement;
    if (text == "medication") return EventType::medication;
    if (text == "note") return EventType::note;
    if (text == "visit") return EventType::visit;
    if (text == "other") return EventType::other;
    return std::nullopt;
}

bool TaskSpec::label_in_space(int label) const {
    return std::find(label_values.begin(), label_values.end(), label) != label_values.end();
}

std::string TaskSpec::label_space_text() const {
    std::string out;
    for (std::size_t i = 0; i < label_values.size(); ++i) {
        if (i) out += ", ";
        out += std::to_string(label_values[i]);
        auto it = label_descriptions.find(label_values[i]);
        if (it != label_descriptions.end() && !it->second.empty()) {
            out += " (" + it->second + ")";
        }
    }
    return out;
}

void TaskSpec::validate() const {
    if (task_id.empty()) throw ValidationError("task: task_id is empty");
    if (label_values.empty()) throw ValidationError("task " + task_id + ": label_values is empty");
    std::vector<int> sorted = label_values;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
        throw ValidationError("task " + task_id + ": duplicate label values");
    if (factual_query.empty() || counterfactual_query.empty())
        throw ValidationError("task " + task_id + ": factual and counterfactual queries required");
    if (factual_query == counterfactual_query)
        throw ValidationError("task " + task_id + ": factual and counterfactual queries must differ");
    if (!label_in_space(fallback_label))
        throw ValidationError("task " + task_id + ": fallback_label outside label space");
    if (label_type == LabelType::binary && label_values.size() != 2)
        throw ValidationError("task " + task_id + ": binary task needs exactly 2 labels");
}

PatientRecord validate_record(PatientRecord record) {
    if (record.events.empty())
        throw ValidationError("record " + record.subject_id + ": no events");
    for (std::size_t i = 0; i < record.events.size(); ++i) {
        if (!record.events[i].timestamp.valid())
            throw ValidationError("record " + record.subject_id + ": event " + std::to_string(i) +
                                  " has an unparseable timestamp");
    }
    std::stable_sort(record.events.begin(), record.events.end(),
                     [](const ClinicalEvent& a, const ClinicalEvent& b) {
                         return a.timestamp < b.timestamp;
                     });
    return record;
}

std::span<const ClinicalEvent> history_before(const PatientRecord& record, Timestamp cutoff) {
    auto end = std::upper_bound(record.events.begin(), record.events.end(), cutoff,
                                [](Timestamp t, const ClinicalEvent& e) { return t < e.timestamp; });
    return {record.events.data(), static_cast<std::size_t>(end - record.events.begin())};
}

std::vector<TaskSpec> load_tasks(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open tasks file: " + path.string());
    nlohmann::json doc;
    try {
        in >> doc;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("tasks file " + path.string() + ": " + e.what());
    }

    const nlohmann::json& list = doc.is_array() ? doc : doc.at("tasks");
    std::vector<TaskSpec> tasks;
    for (const auto& t : list) {
        TaskSpec spec;
        spec.task_id = t.at("task_id").get<std::string>();
        spec.name = t.value("name", spec.task_id);
        spec.category = t.value("category", "");
        spec.description = t.value("description", "");
        spec.factual_query = t.at("factual_query").get<std::string>();
        spec.counterfactual_query = t.at("counterfactual_query").get<std::string>();
        spec.base_query = t.value("base_query", spec.factual_query);
        const std::string lt = t.value("label_type", "binary");
        if (lt == "binary") {
            spec.label_type = LabelType::binary;
        } else if (lt.rfind("multiclass", 0) == 0) {
            spec.label_type = LabelType::multiclass;
        } else {
            throw ConfigError("task " + spec.task_id + ": unknown label_type '" + lt + "'");
        }
        spec.label_values = t.at("label_values").get<std::vector<int>>();
        if (t.contains("label_descriptions")) {
            for (const auto& [key, val] : t.at("label_descriptions").items()) {
                spec.label_descriptions[std::stoi(key)] = val.get<std::string>();
            }
        }
        spec.instructions = t.value("instructions", "");
        spec.fallback_label = t.value("fallback_label", spec.label_values.front());
        spec.validate();
        tasks.push_back(std::move(spec));
    }
    if (tasks.empty()) throw ConfigError("tasks file " + path.string() + " defines no tasks");
    return tasks;
}

const TaskSpec& find_task(const std::vector<TaskSpec>& tasks, std::string_view task_id) {
    for (const auto& t : tasks) {
        if (t.task_id == task_id) return t;
    }
    throw ConfigError("unknown task id: " + std::string(task_id));
}

}  // namespace ehrrag
