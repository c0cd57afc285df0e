#ifndef CHURNPROF_PIPELINE_HPP
#define CHURNPROF_PIPELINE_HPP

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "churnprof/classify.hpp"
#include "churnprof/sampler.hpp"
#include "churnprof/simulate.hpp"

namespace churnprof {

// Stage option structs shared by the CLI subcommands and the pipeline runner.

struct PrepareOptions {
    std::string logs;
    std::string click_table;
    std::string context_table;
    std::string channel_genre_table;
    std::string labels;
    double gap_threshold_s = 1800.0;
    std::vector<std::string> power_on_tags;
    int max_journeys = 0;  // 0 = no truncation
    int max_events = 0;
    int n_genres = 8;
    std::string out;
};

struct PrepareResult {
    ParseStats parse_stats;
    BuildStats build_stats;
    std::size_t customers = 0;
    std::size_t journeys = 0;
    std::size_t events = 0;
};

PrepareResult stage_prepare(const PrepareOptions& opt);

struct SimulateOptions {
    ScenarioConfig scenario;
    std::string out_journeys;
    std::string out_truth;
};

void stage_simulate(const SimulateOptions& opt);

struct FitOptions {
    std::string journeys;
    McmcConfig mcmc;
    int n_genres = 8;
    std::string out_dir;
};

void stage_fit(const FitOptions& opt);

struct DiagnoseOptions {
    std::string draws_dir;
    std::string out_summary;
};

/// Writes the summary table and returns the worst R-hat among the global
/// parameters (NaN with a single chain).
double stage_diagnose(const DiagnoseOptions& opt);

struct ProfileOptions {
    std::string draws_dir;
    std::string journeys;
    int n_genres = 8;
    bool use_median = false;
    std::string out_profiles;
    std::string out_correlations;  // optional; skipped when unlabelled
};

void stage_profile(const ProfileOptions& opt);

struct ClusterOptions {
    std::string profiles;
    std::string naive_journeys;  // non-empty: also cluster the raw-gap features
    int k = 2;
    int n_genres = 8;
    std::string out_json;
    std::string out_newick;
    std::string out_clusters;
};

void stage_cluster(const ClusterOptions& opt);

struct ClassifyOptions {
    std::string profiles;
    std::string naive_journeys;  // non-empty: also run the naive source
    int n_genres = 8;
    ClassifyConfig config;
    std::string out_csv;
};

ClassificationReport stage_classify(const ClassifyOptions& opt);

struct ReportOptions {
    std::string draws_dir;
    std::string classification_csv;  // optional
    std::string out_txt;
};

void stage_report(const ReportOptions& opt);

// ---------------------------------------------------------------------------

/// Whole-pipeline configuration: one JSON document with per-stage sections.
/// Every seeded stage takes its seed from the root seed via
/// derive_seed(root, stage_name) unless the stage section pins one.
struct PipelineOptions {
    std::string config_path;
    std::vector<std::string> stages;  // empty = every stage present in config
};

void run_pipeline(const PipelineOptions& opt);

/// Stages in dependency order.
const std::vector<std::string>& pipeline_stage_order();

}  // namespace churnprof

#endif
