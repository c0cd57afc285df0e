#include "churnprof/event_log.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <sstream>

#include "churnprof/common.hpp"

#include "json.hpp"

namespace churnprof {

namespace {

// Accepts integer epoch milliseconds or "YYYY-MM-DD HH:MM:SS[.fff]"
// (also with 'T' as the date/time separator).
std::int64_t parse_timestamp(std::string_view field, std::size_t line_number) {
    field = trim(field);
    if (field.empty()) throw DataError("line " + std::to_string(line_number) + ": empty timestamp");
    bool digits_only = field.find_first_not_of("0123456789") == std::string_view::npos;
    if (digits_only) {
        return parse_int(field, "timestamp, line " + std::to_string(line_number));
    }
    std::tm tm{};
    int year, mon, day, hh, mm;
    double ss;
    std::string s(field);
    if (std::sscanf(s.c_str(), "%d-%d-%d%*1[ T]%d:%d:%lf", &year, &mon, &day, &hh, &mm, &ss) != 6) {
        throw DataError("line " + std::to_string(line_number) + ": malformed timestamp '" + s + "'");
    }
    tm.tm_year = year - 1900;
    tm.tm_mon = mon - 1;
    tm.tm_mday = day;
    tm.tm_hour = hh;
    tm.tm_min = mm;
    tm.tm_sec = 0;
    std::time_t base = timegm(&tm);
    if (base == -1) {
        throw DataError("line " + std::to_string(line_number) + ": malformed timestamp '" + s + "'");
    }
    return static_cast<std::int64_t>(base) * 1000 + std::llround(ss * 1000.0);
}

char detect_delim(const std::string& header) {
    if (header.find('\t') != std::string::npos) return '\t';
    if (header.find(';') != std::string::npos && header.find(',') == std::string::npos) return ';';
    if (header.find('|') != std::string::npos && header.find(',') == std::string::npos) return '|';
    return ',';
}

std::string normalize_column(std::string_view name) {
    std::string out;
    for (char c : trim(name)) {
        if (c == ' ' || c == '-') c = '_';
        out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    }
    return out;
}

bool looks_like_header(const std::vector<std::string>& fields) {
    if (fields.empty()) return false;
    std::string first = normalize_column(fields[0]);
    return first == "event_id" || first == "customer_id" || first == "channel" || first == "tag";
}

}  // namespace

std::string to_string(ChurnLabel label) {
    switch (label) {
        case ChurnLabel::active: return "active";
        case ChurnLabel::cancelled: return "cancelled";
        default: return "unlabelled";
    }
}

ChurnLabel churn_label_from_string(std::string_view s) {
    std::string v = to_lower(trim(s));
    if (v == "active") return ChurnLabel::active;
    if (v == "cancelled" || v == "canceled") return ChurnLabel::cancelled;
    if (v == "unlabelled" || v == "unlabeled" || v.empty()) return ChurnLabel::unlabelled;
    throw DataError("unknown churn label '" + std::string(s) + "'");
}

bool Dataset::labelled() const {
    return !customers.empty() && customers.front().label != ChurnLabel::unlabelled;
}

std::size_t Dataset::total_journeys() const {
    std::size_t n = 0;
    for (const auto& c : customers) n += c.journeys.size();
    return n;
}

std::size_t Dataset::total_events() const {
    std::size_t n = 0;
    for (const auto& c : customers)
        for (const auto& j : c.journeys) n += j.tags.size();
    return n;
}

void Dataset::validate() const {
    std::size_t n_labelled = 0;
    for (const auto& c : customers) {
        if (c.label != ChurnLabel::unlabelled) ++n_labelled;
        int expect = 1;
        for (const auto& j : c.journeys) {
            if (j.customer_id != c.id)
                throw DataError("journey customer_id mismatch for customer " + c.id);
            if (j.journey_index != expect++)
                throw DataError("non-contiguous journey indices for customer " + c.id);
            if (j.tags.empty()) throw DataError("empty journey for customer " + c.id);
            if (j.gaps.size() + 1 != j.tags.size())
                throw DataError("gap/event count mismatch for customer " + c.id);
            if (j.genres.size() != j.tags.size())
                throw DataError("genre/event count mismatch for customer " + c.id);
            double sum = 0.0;
            for (double g : j.gaps) {
                if (!(g > 0.0)) throw DataError("non-positive gap for customer " + c.id);
                sum += g;
            }
            if (std::abs(sum - j.total_duration_s) > 1e-6)
                throw DataError("total_duration != sum of gaps for customer " + c.id);
            for (int g : j.genres) {
                if (g < 0 || g > n_genres)
                    throw DataError("genre out of range for customer " + c.id);
            }
        }
    }
    if (n_labelled != 0 && n_labelled != customers.size())
        throw DataError("labels must be present for all customers or for none");
}

LabelledStream parse_and_label(const std::vector<RawEventRecord>& records,
                               const LabelTables& tables) {
    LabelledStream out;
    out.stats.records_read = records.size();
    out.events.reserve(records.size());
    for (const auto& rec : records) {
        if (rec.event_id.empty())
            throw DataError("line " + std::to_string(rec.line_number) + ": empty event_id");
        if (rec.timestamp_ms < 0)
            throw DataError("line " + std::to_string(rec.line_number) + ": negative timestamp");
        if (!tables.click_events.count(rec.event_id)) {
            ++out.stats.dropped_non_click;
            continue;
        }
        std::string url = rec.url_context.value_or("");
        auto it = tables.context_labels.find({rec.event_id, url});
        if (it == tables.context_labels.end() && !url.empty()) {
            it = tables.context_labels.find({rec.event_id, std::string()});
        }
        if (it == tables.context_labels.end()) {
            ++out.stats.unresolved_context;
            continue;
        }
        LabelledEvent ev;
        ev.customer_id = rec.customer_id;
        ev.timestamp_ms = rec.timestamp_ms;
        ev.tag = it->second;
        ev.genre = rec.genre.value_or(0);
        ev.channel = rec.channel.value_or("");
        out.events.push_back(std::move(ev));
    }
    std::stable_sort(out.events.begin(), out.events.end(),
                     [](const LabelledEvent& a, const LabelledEvent& b) {
                         if (a.customer_id != b.customer_id) return a.customer_id < b.customer_id;
                         return a.timestamp_ms < b.timestamp_ms;
                     });
    return out;
}

std::vector<RawEventRecord> read_raw_log(std::istream& in, char delim, int n_genres) {
    std::string header;
    if (!std::getline(in, header)) throw DataError("raw log is empty");
    if (!header.empty() && header.back() == '\r') header.pop_back();
    if (delim == '\0') delim = detect_delim(header);

    auto cols = split_delimited(header, delim);
    int idx_customer = -1, idx_ts = -1, idx_event = -1, idx_url = -1;
    int idx_channel = -1, idx_genre = -1;
    std::vector<int> idx_spec;
    for (std::size_t i = 0; i < cols.size(); ++i) {
        std::string name = normalize_column(cols[i]);
        if (name == "customer_id" || name == "user_id") idx_customer = static_cast<int>(i);
        else if (name == "event_dt_tm" || name == "timestamp") idx_ts = static_cast<int>(i);
        else if (name == "event_id") idx_event = static_cast<int>(i);
        else if (name == "url" || name == "url_context") idx_url = static_cast<int>(i);
        else if (name == "channel") idx_channel = static_cast<int>(i);
        else if (name == "genre") idx_genre = static_cast<int>(i);
        else if (name.rfind("event_spec", 0) == 0) idx_spec.push_back(static_cast<int>(i));
    }
    if (idx_customer < 0 || idx_ts < 0 || idx_event < 0) {
        throw DataError("raw log header must name customer_id, EVENT_DT_TM and EVENT_ID");
    }

    std::vector<RawEventRecord> records;
    std::string line;
    std::size_t line_number = 1;
    while (std::getline(in, line)) {
        ++line_number;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty()) continue;
        auto fields = split_delimited(line, delim);
        auto field = [&](int idx) -> std::string {
            return (idx >= 0 && idx < static_cast<int>(fields.size())) ? fields[idx] : std::string();
        };
        RawEventRecord rec;
        rec.line_number = line_number;
        rec.customer_id = std::string(trim(field(idx_customer)));
        if (rec.customer_id.empty())
            throw DataError("line " + std::to_string(line_number) + ": empty customer_id");
        rec.timestamp_ms = parse_timestamp(field(idx_ts), line_number);
        rec.event_id = std::string(trim(field(idx_event)));
        for (int s : idx_spec) rec.event_spec.push_back(field(s));
        if (idx_url >= 0) {
            std::string url = std::string(trim(field(idx_url)));
            if (!url.empty()) rec.url_context = url;
        }
        if (idx_channel >= 0) {
            std::string ch = std::string(trim(field(idx_channel)));
            if (!ch.empty()) rec.channel = ch;
        }
        if (idx_genre >= 0) {
            std::string g = std::string(trim(field(idx_genre)));
            if (!g.empty()) {
                std::int64_t v = parse_int(g, "genre, line " + std::to_string(line_number));
                if (v >= 1 && v <= n_genres) rec.genre = static_cast<int>(v);
                else rec.genre = -1;  // out of range, counted by the caller
            }
        }
        records.push_back(std::move(rec));
    }
    return records;
}

std::vector<RawEventRecord> read_raw_log_file(const std::string& path, int n_genres) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open raw log: " + path);
    return read_raw_log(in, '\0', n_genres);
}

LabelTables load_label_tables(const std::string& click_path, const std::string& context_path,
                              const std::string& channel_genre_path) {
    LabelTables tables;
    {
        std::ifstream in(click_path);
        if (!in) throw DataError("cannot open click table: " + click_path);
        std::string line;
        bool first = true;
        while (std::getline(in, line)) {
            if (!line.empty() && line.back() == '\r') line.pop_back();
            auto t = trim(line);
            if (t.empty() || t.front() == '#') continue;
            char delim = detect_delim(line);
            auto fields = split_delimited(line, delim);
            if (first && looks_like_header(fields)) {
                first = false;
                continue;
            }
            first = false;
            tables.click_events.insert(std::string(trim(fields[0])));
        }
    }
    {
        std::ifstream in(context_path);
        if (!in) throw DataError("cannot open context table: " + context_path);
        std::string line;
        bool first = true;
        while (std::getline(in, line)) {
            if (!line.empty() && line.back() == '\r') line.pop_back();
            auto t = trim(line);
            if (t.empty() || t.front() == '#') continue;
            char delim = detect_delim(line);
            auto fields = split_delimited(line, delim);
            if (first && looks_like_header(fields)) {
                first = false;
                continue;
            }
            first = false;
            if (fields.size() < 2) throw DataError("context table row needs at least id and tag");
            std::string event_id(trim(fields[0]));
            std::string url, tag;
            if (fields.size() >= 3) {
                url = std::string(trim(fields[1]));
                tag = std::string(trim(fields[2]));
            } else {
                tag = std::string(trim(fields[1]));
            }
            auto key = std::make_pair(event_id, url);
            auto [it, inserted] = tables.context_labels.emplace(key, tag);
            if (!inserted && it->second != tag) {
                throw DataError("conflicting tags for (" + event_id + ", " + url + ")");
            }
        }
    }
    if (!channel_genre_path.empty()) {
        std::ifstream in(channel_genre_path);
        if (!in) throw DataError("cannot open channel-genre table: " + channel_genre_path);
        std::string line;
        bool first = true;
        while (std::getline(in, line)) {
            if (!line.empty() && line.back() == '\r') line.pop_back();
            auto t = trim(line);
            if (t.empty() || t.front() == '#') continue;
            char delim = detect_delim(line);
            auto fields = split_delimited(line, delim);
            if (first && looks_like_header(fields)) {
                first = false;
                continue;
            }
            first = false;
            if (fields.size() < 2) throw DataError("channel-genre table row needs channel and genre");
            tables.channel_genre[std::string(trim(fields[0]))] =
                static_cast<int>(parse_int(fields[1], "channel genre"));
        }
    }
    return tables;
}

std::vector<Journey> build_journeys(const std::vector<LabelledEvent>& events,
                                    const SessionBoundary& boundary,
                                    const LabelTables& tables,
                                    BuildStats* stats) {
    std::vector<Journey> journeys;
    BuildStats local;

    Journey current;
    int next_index = 1;
    auto close_current = [&]() {
        if (current.tags.empty()) return;
        double sum = 0.0;
        for (double g : current.gaps) sum += g;
        current.total_duration_s = sum;
        // Backfill genres from the journey channel where possible.
        int channel_genre = 0;
        if (!current.channel.empty()) {
            auto it = tables.channel_genre.find(current.channel);
            if (it != tables.channel_genre.end()) channel_genre = it->second;
        }
        if (channel_genre > 0) {
            for (int& g : current.genres)
                if (g == 0) g = channel_genre;
        }
        journeys.push_back(std::move(current));
        current = Journey{};
    };

    const LabelledEvent* prev = nullptr;
    for (const auto& ev : events) {
        bool new_customer = (prev == nullptr) || (prev->customer_id != ev.customer_id);
        if (!new_customer && ev.timestamp_ms < prev->timestamp_ms) {
            throw DataError("events out of order for customer " + ev.customer_id);
        }
        double gap_s = new_customer ? 0.0
                                    : static_cast<double>(ev.timestamp_ms - prev->timestamp_ms) / 1000.0;
        bool boundary_hit = new_customer || boundary.power_on_tags.count(ev.tag) > 0 ||
                            gap_s > boundary.gap_threshold_s;
        if (boundary_hit) {
            close_current();
            if (new_customer) next_index = 1;
            current.customer_id = ev.customer_id;
            current.journey_index = next_index++;
            current.start_ms = ev.timestamp_ms;
        } else {
            if (gap_s <= 0.0) {
                gap_s = boundary.zero_gap_floor_s;
                ++local.floored_zero_gaps;
            }
            current.gaps.push_back(gap_s);
        }
        current.tags.push_back(ev.tag);
        current.genres.push_back(ev.genre);
        current.end_ms = ev.timestamp_ms;
        if (current.channel.empty() && !ev.channel.empty()) current.channel = ev.channel;
        prev = &ev;
    }
    close_current();
    if (stats) *stats = local;
    return journeys;
}

Dataset group_journeys(std::vector<Journey> journeys, int n_genres) {
    Dataset data;
    data.n_genres = n_genres;
    std::set<std::string> seen;
    for (auto& j : journeys) {
        if (data.customers.empty() || data.customers.back().id != j.customer_id) {
            if (!seen.insert(j.customer_id).second)
                throw DataError("journeys of customer " + j.customer_id +
                                " are not contiguous");
            Customer c;
            c.id = j.customer_id;
            data.customers.push_back(std::move(c));
        }
        data.customers.back().journeys.push_back(std::move(j));
    }
    for (auto& c : data.customers) {
        int idx = 1;
        for (auto& j : c.journeys) j.journey_index = idx++;
    }
    return data;
}

Dataset truncate_dataset(const Dataset& data, int max_journeys, int max_events) {
    if (max_journeys < 1 || max_events < 1)
        throw std::invalid_argument("truncate_dataset: caps must be >= 1");
    Dataset out;
    out.n_genres = data.n_genres;
    out.customers.reserve(data.customers.size());
    for (const auto& c : data.customers) {
        Customer nc;
        nc.id = c.id;
        nc.label = c.label;
        std::size_t keep_j = std::min<std::size_t>(c.journeys.size(), max_journeys);
        for (std::size_t s = 0; s < keep_j; ++s) {
            Journey j = c.journeys[s];
            std::size_t keep_e = std::min<std::size_t>(j.tags.size(), max_events);
            if (keep_e < j.tags.size()) {
                j.tags.resize(keep_e);
                j.genres.resize(keep_e);
                j.gaps.resize(keep_e - 1);
                double sum = 0.0;
                for (double g : j.gaps) sum += g;
                j.total_duration_s = sum;
                j.end_ms = j.start_ms + std::llround(sum * 1000.0);
            }
            nc.journeys.push_back(std::move(j));
        }
        out.customers.push_back(std::move(nc));
    }
    return out;
}

void apply_labels(Dataset& data, const std::map<std::string, ChurnLabel>& labels) {
    for (auto& c : data.customers) {
        auto it = labels.find(c.id);
        if (it == labels.end()) throw DataError("no label for customer " + c.id);
        c.label = it->second;
    }
}

std::map<std::string, ChurnLabel> load_labels_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open labels file: " + path);
    std::map<std::string, ChurnLabel> labels;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        auto t = trim(line);
        if (t.empty() || t.front() == '#') continue;
        char delim = detect_delim(line);
        auto fields = split_delimited(line, delim);
        if (first && looks_like_header(fields)) {
            first = false;
            continue;
        }
        first = false;
        if (fields.size() < 2) throw DataError("labels row needs customer_id and label");
        labels[std::string(trim(fields[0]))] = churn_label_from_string(fields[1]);
    }
    return labels;
}

std::vector<LabelledEvent> flatten_journeys(const std::vector<Journey>& journeys) {
    std::vector<LabelledEvent> events;
    for (const auto& j : journeys) {
        double offset_s = 0.0;
        for (std::size_t i = 0; i < j.tags.size(); ++i) {
            if (i > 0) offset_s += j.gaps[i - 1];
            LabelledEvent ev;
            ev.customer_id = j.customer_id;
            ev.timestamp_ms = j.start_ms + std::llround(offset_s * 1000.0);
            ev.tag = j.tags[i];
            ev.genre = j.genres[i];
            ev.channel = j.channel;
            events.push_back(std::move(ev));
        }
    }
    return events;
}

void write_journeys_jsonl(const Dataset& data, const std::string& path) {
    data.validate();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write journeys file: " + path);
    std::string buf;
    for (const auto& c : data.customers) {
        for (const auto& j : c.journeys) {
            nlohmann::ordered_json obj;
            obj["customer_id"] = c.id;
            obj["journey_index"] = j.journey_index;
            obj["start"] = j.start_ms;
            obj["end"] = j.end_ms;
            obj["channel"] = j.channel;
            if (c.label != ChurnLabel::unlabelled) obj["label"] = to_string(c.label);
            nlohmann::ordered_json events = nlohmann::ordered_json::array();
            for (std::size_t i = 0; i < j.tags.size(); ++i) {
                nlohmann::ordered_json ev;
                ev["tag"] = j.tags[i];
                if (j.genres[i] > 0) ev["genre"] = j.genres[i];
                if (i > 0) ev["gap_s"] = j.gaps[i - 1];
                events.push_back(std::move(ev));
            }
            obj["events"] = std::move(events);
            buf += obj.dump();
            buf += '\n';
        }
    }
    out << buf;
    if (!out) throw DataError("write failed: " + path);
}

Dataset read_journeys_jsonl(const std::string& path, int n_genres) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open journeys file: " + path);
    std::vector<Journey> journeys;
    std::map<std::string, ChurnLabel> labels;
    std::string line;
    std::size_t line_number = 0;
    while (std::getline(in, line)) {
        ++line_number;
        if (trim(line).empty()) continue;
        nlohmann::json obj;
        try {
            obj = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw DataError("journeys line " + std::to_string(line_number) + ": " + e.what());
        }
        Journey j;
        j.customer_id = obj.at("customer_id").get<std::string>();
        j.journey_index = obj.at("journey_index").get<int>();
        j.start_ms = obj.at("start").get<std::int64_t>();
        j.end_ms = obj.at("end").get<std::int64_t>();
        j.channel = obj.value("channel", std::string());
        if (obj.contains("label")) {
            ChurnLabel label = churn_label_from_string(obj["label"].get<std::string>());
            auto [it, inserted] = labels.emplace(j.customer_id, label);
            if (!inserted && it->second != label)
                throw DataError("conflicting labels for customer " + j.customer_id);
        }
        double sum = 0.0;
        bool first_event = true;
        for (const auto& ev : obj.at("events")) {
            j.tags.push_back(ev.at("tag").get<std::string>());
            j.genres.push_back(ev.value("genre", 0));
            if (!first_event) {
                double gap = ev.at("gap_s").get<double>();
                if (!(gap > 0.0))
                    throw DataError("journeys line " + std::to_string(line_number) +
                                    ": non-positive gap");
                j.gaps.push_back(gap);
                sum += gap;
            } else if (ev.contains("gap_s")) {
                throw DataError("journeys line " + std::to_string(line_number) +
                                ": first event must not carry gap_s");
            }
            first_event = false;
        }
        if (j.tags.empty())
            throw DataError("journeys line " + std::to_string(line_number) + ": empty journey");
        j.total_duration_s = sum;
        journeys.push_back(std::move(j));
    }
    Dataset data = group_journeys(std::move(journeys), n_genres);
    if (!labels.empty()) apply_labels(data, labels);
    data.validate();
    return data;
}

}  // namespace churnprof
