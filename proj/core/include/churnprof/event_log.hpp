#ifndef CHURNPROF_EVENT_LOG_HPP
#define CHURNPROF_EVENT_LOG_HPP

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace churnprof {

/// One record of the raw set-top-box log, as read from the delimited export.
struct RawEventRecord {
    std::string customer_id;
    std::int64_t timestamp_ms = 0;
    std::string event_id;
    std::vector<std::string> event_spec;
    std::optional<std::string> url_context;
    std::optional<std::string> channel;
    std::optional<int> genre;  // 1..K when present
    std::size_t line_number = 0;
};

/// Reference tables used to turn raw records into labelled click events:
/// a set of click-action event ids, a (event_id, url) -> tag map, and an
/// optional channel -> genre map used to backfill missing genres.
struct LabelTables {
    std::set<std::string> click_events;
    // Key ("event_id", "url"); an entry with empty url is the fallback tag
    // for that event id when no url-specific row matches.
    std::map<std::pair<std::string, std::string>, std::string> context_labels;
    std::map<std::string, int> channel_genre;
};

struct LabelledEvent {
    std::string customer_id;
    std::int64_t timestamp_ms = 0;
    std::string tag;
    int genre = 0;  // 0 = unknown, else 1..K
    std::string channel;
};

/// One session: ordered events with strictly positive inter-event gaps.
/// `tags.size()` events, `gaps.size() == tags.size() - 1`; gaps are seconds
/// since the previous event.
struct Journey {
    std::string customer_id;
    int journey_index = 0;  // 1-based within customer
    std::vector<std::string> tags;
    std::vector<int> genres;  // per event, 0 = unknown
    std::vector<double> gaps;
    std::int64_t start_ms = 0;
    std::int64_t end_ms = 0;
    double total_duration_s = 0.0;
    std::string channel;

    int event_count() const { return static_cast<int>(tags.size()); }
};

enum class ChurnLabel { unlabelled, active, cancelled };

std::string to_string(ChurnLabel label);
ChurnLabel churn_label_from_string(std::string_view s);

struct Customer {
    std::string id;
    ChurnLabel label = ChurnLabel::unlabelled;
    std::vector<Journey> journeys;
};

struct Dataset {
    std::vector<Customer> customers;
    int n_genres = 8;

    bool labelled() const;
    std::size_t total_journeys() const;
    std::size_t total_events() const;
    /// Enforces contiguous journey indices and the all-or-none label rule.
    void validate() const;
};

struct ParseStats {
    std::size_t records_read = 0;
    std::size_t dropped_non_click = 0;
    std::size_t unresolved_context = 0;
    std::size_t genre_out_of_range = 0;
};

struct SessionBoundary {
    double gap_threshold_s = 1800.0;
    std::set<std::string> power_on_tags;
    // Gamma likelihoods need t > 0; duplicate timestamps are floored here.
    double zero_gap_floor_s = 0.001;
};

struct BuildStats {
    std::size_t floored_zero_gaps = 0;
};

struct LabelledStream {
    std::vector<LabelledEvent> events;
    ParseStats stats;
};

/// Filters the raw stream down to click events, resolves tags through the
/// reference tables and sorts by (customer, timestamp). Unknown event ids are
/// dropped and counted; a click id without a resolvable (id, url) tag is
/// skipped and counted separately.
LabelledStream parse_and_label(const std::vector<RawEventRecord>& records,
                               const LabelTables& tables);

/// Reads a delimited raw log. The header must name at least customer_id,
/// EVENT_DT_TM, EVENT_ID, EVENT_SPEC_1 and URL (case-insensitive); CHANNEL
/// and GENRE columns are picked up when present. Timestamps are integer
/// milliseconds since epoch or "YYYY-MM-DD HH:MM:SS[.fff]".
std::vector<RawEventRecord> read_raw_log(std::istream& in, char delim, int n_genres);
std::vector<RawEventRecord> read_raw_log_file(const std::string& path, int n_genres);

/// Loads the click-id table (one event id per line) and the context table
/// (event_id, url, tag). Lines starting with '#' and header rows are skipped.
LabelTables load_label_tables(const std::string& click_path, const std::string& context_path,
                              const std::string& channel_genre_path = "");

/// Partitions labelled events into journeys. A journey starts at the first
/// event of a customer, at any power-on tag, or after an inactivity gap
/// longer than the threshold. Events lacking a genre inherit the genre of the
/// journey's channel when the channel-genre table knows it.
std::vector<Journey> build_journeys(const std::vector<LabelledEvent>& events,
                                    const SessionBoundary& boundary,
                                    const LabelTables& tables = {},
                                    BuildStats* stats = nullptr);

/// Keeps the chronologically first `max_journeys` journeys per customer and
/// the first `max_events` events within each journey.
Dataset truncate_dataset(const Dataset& data, int max_journeys, int max_events);

Dataset group_journeys(std::vector<Journey> journeys, int n_genres);

/// Applies a customer -> label map; every customer must be covered.
void apply_labels(Dataset& data, const std::map<std::string, ChurnLabel>& labels);
std::map<std::string, ChurnLabel> load_labels_file(const std::string& path);

/// Flattens journeys back into a labelled event stream (timestamps rebuilt
/// from start times and cumulative gaps).
std::vector<LabelledEvent> flatten_journeys(const std::vector<Journey>& journeys);

// Journeys interchange format: one JSON object per line
//   {customer_id, journey_index, start, end, channel, events:[{tag, genre, gap_s}]}
// plus an optional "label" on lines of labelled datasets.
void write_journeys_jsonl(const Dataset& data, const std::string& path);
Dataset read_journeys_jsonl(const std::string& path, int n_genres);

}  // namespace churnprof

#endif
