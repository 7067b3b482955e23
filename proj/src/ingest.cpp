#include "ehrrag/ingest.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "ehrrag/csv.hpp"
#include "ehrrag/hash.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace ehrrag {
namespace {

std::string trim(std::string_view s) {
    std::size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

bool is_blank(std::string_view s) {
    return std::all_of(s.begin(), s.end(),
                       [](char c) { return std::isspace(static_cast<unsigned char>(c)); });
}

std::string sanitize_subject_filename(const std::string& subject_id) {
    std::string out;
    out.reserve(subject_id.size());
    bool changed = false;
    for (char c : subject_id) {
        if (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_') {
            out.push_back(c);
        } else {
            out.push_back('_');
            changed = true;
        }
    }
    if (out.empty() || changed) out += "_" + content_hash(subject_id).substr(0, 8);
    return out;
}

json event_to_json(const ClinicalEvent& e) {
    json j;
    j["code"] = e.concept_code;
    j["type"] = std::string(to_string(e.event_type));
    j["desc"] = e.description;
    j["ts"] = e.timestamp.to_string();
    if (const auto* num = e.numeric()) {
        j["num"] = num->value;
        if (!num->unit.empty()) j["unit"] = num->unit;
    } else if (const auto* text = e.text_value()) {
        j["text"] = *text;
    }
    return j;
}

ClinicalEvent event_from_json(const json& j) {
    ClinicalEvent e;
    e.concept_code = j.at("code").get<std::string>();
    e.event_type = event_type_from_string(j.at("type").get<std::string>()).value_or(EventType::other);
    e.description = j.at("desc").get<std::string>();
    auto ts = Timestamp::parse(j.at("ts").get<std::string>());
    if (!ts) throw DataError("cohort store event has unparseable timestamp");
    e.timestamp = *ts;
    if (j.contains("num")) {
        e.value = NumericValue{j.at("num").get<double>(), j.value("unit", "")};
    } else if (j.contains("text")) {
        e.value = j.at("text").get<std::string>();
    }
    return e;
}

}  // namespace

OntologyMap OntologyMap::load(const fs::path& path) {
    OntologyMap map;
    CsvReader reader(path);
    std::vector<std::string> row;
    bool first = true;
    while (reader.next(row)) {
        if (row.size() < 2) continue;
        if (first) {
            first = false;
            // Tolerate an optional header row.
            if (row[0] == "code" || row[0] == "concept_code") continue;
        }
        map.entries[row[0]] = row[1];
    }
    return map;
}

std::string resolve_concept(const std::string& code, const OntologyMap& ontology,
                            Diagnostics* diag) {
    if (is_blank(code)) {
        if (diag) diag->flag("empty_concept_code");
        return "";
    }
    auto it = ontology.entries.find(code);
    return it != ontology.entries.end() ? it->second : code;
}

void CohortSource::check_paths_exist() const {
    for (const auto* p : {&events_path, &ontology_path, &labels_path}) {
        if (!p->empty() && !fs::exists(*p))
            throw DataError("input path does not exist: " + p->string());
    }
}

std::size_t ParseReport::event_count() const {
    std::size_t n = 0;
    for (const auto& r : records) n += r.events.size();
    return n;
}

ParseReport parse_events(const CohortSource& source) {
    source.check_paths_exist();
    const OntologyMap ontology = OntologyMap::load(source.ontology_path);

    CsvReader reader(source.events_path);
    std::vector<std::string> header;
    if (!reader.next(header)) throw DataError("events file is empty (missing header)");

    auto find_col = [&](const std::string& name) -> std::ptrdiff_t {
        auto it = std::find(header.begin(), header.end(), name);
        return it == header.end() ? -1 : it - header.begin();
    };
    const auto& sc = source.schema;
    const std::ptrdiff_t col_subject = find_col(sc.subject_id);
    const std::ptrdiff_t col_time = find_col(sc.time);
    const std::ptrdiff_t col_code = find_col(sc.code);
    const std::ptrdiff_t col_type = find_col(sc.event_type);
    const std::ptrdiff_t col_num = find_col(sc.numeric_value);
    const std::ptrdiff_t col_unit = find_col(sc.unit);
    const std::ptrdiff_t col_text = find_col(sc.text_value);
    for (const auto& [col, name] :
         {std::pair{col_subject, sc.subject_id}, {col_time, sc.time}, {col_code, sc.code}}) {
        if (col < 0) throw DataError("events file missing required column '" + name + "'");
    }

    ParseReport report;
    std::map<std::string, PatientRecord> by_subject;
    std::vector<std::string> row;
    auto field = [&](std::ptrdiff_t col) -> std::string {
        return (col >= 0 && static_cast<std::size_t>(col) < row.size()) ? row[col] : "";
    };

    while (reader.next(row)) {
        ++report.data_rows;
        const std::size_t row_no = report.data_rows;
        if (row.size() == 1 && row[0].empty()) {
            report.rejected.push_back({row_no, "blank row"});
            continue;
        }

        const std::string subject = trim(field(col_subject));
        if (subject.empty()) {
            report.rejected.push_back({row_no, "empty subject_id"});
            continue;
        }
        auto ts = Timestamp::parse(field(col_time));
        if (!ts) {
            report.rejected.push_back({row_no, "unparseable time '" + field(col_time) + "'"});
            continue;
        }

        ClinicalEvent event;
        event.timestamp = *ts;
        event.concept_code = trim(field(col_code));
        const std::string type_text = trim(field(col_type));
        if (type_text.empty()) {
            event.event_type = EventType::other;
        } else if (auto type = event_type_from_string(type_text)) {
            event.event_type = *type;
        } else {
            report.rejected.push_back({row_no, "unknown event_type '" + type_text + "'"});
            continue;
        }

        Diagnostics resolve_diag;
        event.description = resolve_concept(event.concept_code, ontology, &resolve_diag);
        if (!resolve_diag.empty()) {
            event.description = "unknown";
            report.diagnostics.flag("row " + std::to_string(row_no) + ": empty concept code");
        }

        const std::string num_text = trim(field(col_num));
        const std::string text_val = field(col_text);
        if (!num_text.empty()) {
            char* end = nullptr;
            const double v = std::strtod(num_text.c_str(), &end);
            if (end == num_text.c_str() || *end != '\0' || !std::isfinite(v)) {
                report.rejected.push_back(
                    {row_no, "non-numeric value '" + num_text + "' in numeric column"});
                continue;
            }
            event.value = NumericValue{v, trim(field(col_unit))};
        } else if (!text_val.empty()) {
            event.value = text_val;
        }

        auto& record = by_subject[subject];
        record.subject_id = subject;
        record.events.push_back(std::move(event));
    }

    for (auto& [subject, record] : by_subject) {
        report.records.push_back(validate_record(std::move(record)));
    }
    return report;
}

std::string format_numeric(double value) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6g", value);
    return buf;
}

std::string serialize_event(const ClinicalEvent& event) {
    std::string out = "[" + event.timestamp.to_string() + "] ";
    out += to_string(event.event_type);
    out += " - ";
    out += event.description.empty() ? "unknown" : event.description;
    if (const auto* num = event.numeric()) {
        out += " (value: " + format_numeric(num->value);
        if (!num->unit.empty()) out += " " + num->unit;
        out += ")";
    } else if (const auto* text = event.text_value()) {
        out += " (value: " + *text + ")";
    }
    return out;
}

std::vector<LabelRow> load_labels(const fs::path& path) {
    CsvReader reader(path);
    std::vector<std::string> row;
    if (!reader.next(row)) throw DataError("labels file is empty: " + path.string());
    std::vector<LabelRow> labels;
    std::size_t row_no = 1;
    while (reader.next(row)) {
        ++row_no;
        if (row.size() == 1 && row[0].empty()) continue;
        if (row.size() < 3)
            throw DataError("labels row " + std::to_string(row_no) + ": expected 3 columns");
        LabelRow label;
        label.subject_id = trim(row[0]);
        auto ts = Timestamp::parse(row[1]);
        if (!ts) throw DataError("labels row " + std::to_string(row_no) + ": bad prediction_time");
        label.prediction_time = *ts;
        try {
            label.label = std::stoi(trim(row[2]));
        } catch (const std::exception&) {
            throw DataError("labels row " + std::to_string(row_no) + ": bad label");
        }
        labels.push_back(std::move(label));
    }
    return labels;
}

CohortManifest write_cohort_store(const fs::path& root, const std::vector<PatientRecord>& records,
                                  const std::vector<LabelRow>& labels) {
    fs::create_directories(root / "subjects");

    CohortManifest manifest;
    std::uint64_t hash = kFnvOffset;
    json subject_files = json::object();

    // Deterministic order: subjects sorted by id.
    std::vector<const PatientRecord*> sorted;
    sorted.reserve(records.size());
    for (const auto& r : records) sorted.push_back(&r);
    std::sort(sorted.begin(), sorted.end(),
              [](const PatientRecord* a, const PatientRecord* b) {
                  return a->subject_id < b->subject_id;
              });

    for (const PatientRecord* record : sorted) {
        std::string body;
        for (const auto& e : record->events) {
            body += event_to_json(e).dump();
            body += "\n";
            if (!manifest.time_min.valid() || e.timestamp < manifest.time_min)
                manifest.time_min = e.timestamp;
            if (!manifest.time_max.valid() || e.timestamp > manifest.time_max)
                manifest.time_max = e.timestamp;
        }
        const std::string filename = sanitize_subject_filename(record->subject_id) + ".jsonl";
        if (subject_files.contains(record->subject_id))
            throw DataError("duplicate subject id in cohort: " + record->subject_id);
        subject_files[record->subject_id] = filename;
        std::ofstream out(root / "subjects" / filename, std::ios::binary);
        if (!out) throw DataError("cannot write subject file under " + root.string());
        out << body;
        hash = fnv1a64(record->subject_id, hash);
        hash = fnv1a64(body, hash);
        manifest.subject_count += 1;
        manifest.event_count += record->events.size();
    }

    if (!labels.empty()) {
        std::ofstream out(root / "labels.csv", std::ios::binary);
        out << "subject_id,prediction_time,label\n";
        std::string body;
        for (const auto& l : labels) {
            body += csv_join({l.subject_id, l.prediction_time.to_string(),
                              std::to_string(l.label)});
        }
        out << body;
        hash = fnv1a64(body, hash);
    }

    manifest.content_hash = to_hex16(hash);

    json m;
    m["subject_count"] = manifest.subject_count;
    m["event_count"] = manifest.event_count;
    m["time_min"] = manifest.time_min.valid() ? manifest.time_min.to_string() : "";
    m["time_max"] = manifest.time_max.valid() ? manifest.time_max.to_string() : "";
    m["content_hash"] = manifest.content_hash;
    m["subject_files"] = subject_files;
    std::ofstream mout(root / "manifest.json", std::ios::binary);
    mout << m.dump(2) << "\n";
    return manifest;
}

CohortStore CohortStore::open(const fs::path& root) {
    CohortStore store;
    store.root_ = root;
    std::ifstream in(root / "manifest.json");
    if (!in) throw DataError("not a cohort store (missing manifest.json): " + root.string());
    json m;
    try {
        in >> m;
    } catch (const json::exception& e) {
        throw DataError("corrupt cohort manifest: " + std::string(e.what()));
    }
    store.manifest_.subject_count = m.value("subject_count", 0u);
    store.manifest_.event_count = m.value("event_count", 0u);
    if (auto t = Timestamp::parse(m.value("time_min", ""))) store.manifest_.time_min = *t;
    if (auto t = Timestamp::parse(m.value("time_max", ""))) store.manifest_.time_max = *t;
    store.manifest_.content_hash = m.value("content_hash", "");
    for (const auto& [subject, file] : m.at("subject_files").items()) {
        store.subject_ids_.push_back(subject);
        store.subject_files_[subject] = file.get<std::string>();
    }
    std::sort(store.subject_ids_.begin(), store.subject_ids_.end());
    return store;
}

PatientRecord CohortStore::load_record(const std::string& subject_id) const {
    auto it = subject_files_.find(subject_id);
    if (it == subject_files_.end())
        throw DataError("subject not in cohort store: " + subject_id);
    std::ifstream in(root_ / "subjects" / it->second, std::ios::binary);
    if (!in) throw DataError("missing subject file for " + subject_id);
    PatientRecord record;
    record.subject_id = subject_id;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        try {
            record.events.push_back(event_from_json(json::parse(line)));
        } catch (const json::exception& e) {
            throw DataError("corrupt event record for " + subject_id + ": " + e.what());
        }
    }
    return validate_record(std::move(record));
}

bool CohortStore::has_labels() const { return fs::exists(root_ / "labels.csv"); }

std::vector<LabelRow> CohortStore::load_labels() const {
    return ehrrag::load_labels(root_ / "labels.csv");
}

}  // namespace ehrrag
