#include "churnprof/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "churnprof/cluster.hpp"
#include "churnprof/common.hpp"
#include "churnprof/features.hpp"
#include "churnprof/rng.hpp"

#include "json.hpp"

namespace fs = std::filesystem;

namespace churnprof {

namespace {

void require_file(const std::string& path, const std::string& hint) {
    if (!fs::exists(path)) throw DataError("missing " + path + "; " + hint);
}

std::vector<std::string> global_param_names(const ParamRegistry& reg) {
    std::vector<std::string> names;
    for (const auto& n : reg.names) {
        if (n.rfind("delta", 0) == 0 || n.rfind("beta", 0) == 0 || n.rfind("sigma", 0) == 0)
            names.push_back(n);
    }
    return names;
}

}  // namespace

PrepareResult stage_prepare(const PrepareOptions& opt) {
    require_file(opt.logs, "point --logs at the raw event log");
    require_file(opt.click_table, "the click-event reference table is required");
    require_file(opt.context_table, "the context reference table is required");
    LabelTables tables =
        load_label_tables(opt.click_table, opt.context_table, opt.channel_genre_table);

    std::vector<RawEventRecord> records = read_raw_log_file(opt.logs, opt.n_genres);
    PrepareResult result;
    for (const auto& rec : records) {
        if (rec.genre && *rec.genre < 0) ++result.parse_stats.genre_out_of_range;
    }
    for (auto& rec : records) {
        if (rec.genre && *rec.genre < 0) rec.genre.reset();
    }

    LabelledStream stream = parse_and_label(records, tables);
    result.parse_stats.records_read = stream.stats.records_read;
    result.parse_stats.dropped_non_click = stream.stats.dropped_non_click;
    result.parse_stats.unresolved_context = stream.stats.unresolved_context;

    SessionBoundary boundary;
    boundary.gap_threshold_s = opt.gap_threshold_s;
    boundary.power_on_tags.insert(opt.power_on_tags.begin(), opt.power_on_tags.end());
    std::vector<Journey> journeys = build_journeys(stream.events, boundary, tables,
                                                   &result.build_stats);
    Dataset data = group_journeys(std::move(journeys), opt.n_genres);
    if (!opt.labels.empty()) {
        apply_labels(data, load_labels_file(opt.labels));
    }
    if (opt.max_journeys > 0 || opt.max_events > 0) {
        data = truncate_dataset(data, opt.max_journeys > 0 ? opt.max_journeys : 1 << 30,
                                opt.max_events > 0 ? opt.max_events : 1 << 30);
    }
    data.validate();
    write_journeys_jsonl(data, opt.out);
    result.customers = data.customers.size();
    result.journeys = data.total_journeys();
    result.events = data.total_events();
    return result;
}

void stage_simulate(const SimulateOptions& opt) {
    SimulationResult sim = simulate_dataset(opt.scenario);
    write_journeys_jsonl(sim.data, opt.out_journeys);
    if (!opt.out_truth.empty()) write_truth_json(sim, opt.out_truth);
}

void stage_fit(const FitOptions& opt) {
    require_file(opt.journeys, "run prepare or simulate first");
    Dataset data = read_journeys_jsonl(opt.journeys, opt.n_genres);
    PriorConfig priors;
    ChainDraws draws = run_mcmc(prepare_data(data, opt.mcmc.model), priors, opt.mcmc);
    write_draws(draws, opt.out_dir);
}

double stage_diagnose(const DiagnoseOptions& opt) {
    require_file(opt.draws_dir + "/meta.json", "run fit first");
    ChainDraws draws = load_draws(opt.draws_dir);
    PosteriorSummary summary = summarize(draws);
    if (!opt.out_summary.empty()) write_summary_tsv(summary, opt.out_summary);
    double worst = std::numeric_limits<double>::quiet_NaN();
    for (const auto& name : global_param_names(draws.registry)) {
        double r = summary.at(name).rhat;
        if (std::isnan(worst) || (!std::isnan(r) && r > worst)) worst = r;
    }
    return worst;
}

void stage_profile(const ProfileOptions& opt) {
    require_file(opt.draws_dir + "/meta.json", "run fit first");
    require_file(opt.journeys, "run prepare or simulate first");
    ChainDraws draws = load_draws(opt.draws_dir);
    Dataset data = read_journeys_jsonl(opt.journeys, opt.n_genres);
    if (draws.customer_ids.size() != data.customers.size())
        throw DataError("draws and journeys disagree on the customer set");
    for (std::size_t c = 0; c < data.customers.size(); ++c) {
        if (draws.customer_ids[c] != data.customers[c].id)
            throw DataError("draws and journeys disagree on customer order at index " +
                            std::to_string(c + 1));
    }
    PosteriorSummary summary = summarize(draws);
    ProfileSet set = extract_profiles(summary, data, opt.use_median);
    standardize(set);
    write_profiles_csv(set, opt.out_profiles);
    if (!opt.out_correlations.empty() && data.labelled()) {
        std::size_t active = 0, cancelled = 0;
        for (const auto& c : data.customers) {
            if (c.label == ChurnLabel::active) ++active;
            if (c.label == ChurnLabel::cancelled) ++cancelled;
        }
        if (active >= 3 && cancelled >= 3) {
            write_text_file(opt.out_correlations, correlations_csv(group_correlations(set)));
        }
    }
}

namespace {

void cluster_and_write(const std::vector<std::vector<double>>& rows,
                       const std::vector<std::string>& labels, int k,
                       const std::string& out_json, const std::string& out_newick,
                       const std::string& out_clusters) {
    DistanceMatrix dist = distance_matrix(rows);
    Dendrogram dend = ward_linkage(dist, labels);
    write_text_file(out_json, dendrogram_json(dend));
    if (!out_newick.empty()) write_text_file(out_newick, to_newick(dend) + "\n");
    if (!out_clusters.empty() && k >= 1) {
        write_text_file(out_clusters, cluster_labels_csv(dend, cut_tree(dend, k)));
    }
}

std::string with_suffix(const std::string& path, const std::string& suffix) {
    auto dot = path.find_last_of('.');
    if (dot == std::string::npos) return path + suffix;
    return path.substr(0, dot) + suffix + path.substr(dot);
}

}  // namespace

void stage_cluster(const ClusterOptions& opt) {
    require_file(opt.profiles, "run profile first");
    ProfileSet set = read_profiles_csv(opt.profiles);
    if (set.profiles.empty()) throw DataError("no profiles in " + opt.profiles);
    if (set.profiles[0].standardized.empty()) standardize(set);
    std::vector<std::vector<double>> rows;
    std::vector<std::string> labels;
    for (const auto& prof : set.profiles) {
        rows.push_back(prof.standardized);
        labels.push_back(prof.customer_id);
    }
    cluster_and_write(rows, labels, opt.k, opt.out_json, opt.out_newick, opt.out_clusters);

    if (!opt.naive_journeys.empty()) {
        require_file(opt.naive_journeys, "run prepare or simulate first");
        Dataset data = read_journeys_jsonl(opt.naive_journeys, opt.n_genres);
        FeatureMatrix naive = naive_features(data);
        standardize_features(naive);
        cluster_and_write(naive.rows, naive.row_ids, opt.k, with_suffix(opt.out_json, "_naive"),
                          opt.out_newick.empty() ? "" : with_suffix(opt.out_newick, "_naive"),
                          opt.out_clusters.empty() ? "" : with_suffix(opt.out_clusters, "_naive"));
    }
}

ClassificationReport stage_classify(const ClassifyOptions& opt) {
    require_file(opt.profiles, "run profile first");
    ProfileSet set = read_profiles_csv(opt.profiles);
    if (set.profiles.empty()) throw DataError("no profiles in " + opt.profiles);
    if (set.profiles[0].standardized.empty()) standardize(set);
    FeatureMatrix model_features = features_from_profiles(set);

    ClassificationReport report;
    report.seed = opt.config.seed;
    {
        TrainTestSplit split =
            split_train_test(model_features, opt.config.split_ratio, opt.config.seed);
        report.train_size = split.train.n_rows();
        report.test_size = split.test.n_rows();
    }
    auto model_results = run_classifiers(model_features, opt.config);
    report.results.insert(report.results.end(), model_results.begin(), model_results.end());

    if (!opt.naive_journeys.empty()) {
        require_file(opt.naive_journeys, "run prepare or simulate first");
        Dataset data = read_journeys_jsonl(opt.naive_journeys, opt.n_genres);
        FeatureMatrix naive = naive_features(data);
        standardize_features(naive);
        auto naive_results = run_classifiers(naive, opt.config);
        report.results.insert(report.results.end(), naive_results.begin(), naive_results.end());
    }
    if (!opt.out_csv.empty()) write_text_file(opt.out_csv, report_csv(report));
    return report;
}

void stage_report(const ReportOptions& opt) {
    require_file(opt.draws_dir + "/meta.json", "run fit first");
    ChainDraws draws = load_draws(opt.draws_dir);
    PosteriorSummary summary = summarize(draws);

    std::string out;
    out += "Model parameter estimates\n";
    out += "=========================\n";
    out += render_summary_report(summary, global_param_names(draws.registry));
    out += "\n";

    out += "Genre effects on time between events\n";
    out += "------------------------------------\n";
    for (const auto& name : draws.registry.names) {
        if (name.rfind("beta[", 0) == 0) {
            out += render_percent_change(name, summary.at(name).mean);
            out += "\n";
        }
    }
    out += "\n";

    if (!opt.classification_csv.empty()) {
        require_file(opt.classification_csv, "run classify first");
        ClassificationReport report =
            report_from_csv_text(read_text_file(opt.classification_csv));
        out += "Churn classification\n";
        out += "====================\n";
        out += render_report_table(report);
    }
    write_text_file(opt.out_txt, out);
}

// ---------------------------------------------------------------------------
// Pipeline runner.

const std::vector<std::string>& pipeline_stage_order() {
    static const std::vector<std::string> order = {"prepare", "simulate", "fit",     "diagnose",
                                                   "profile", "cluster",  "classify", "report"};
    return order;
}

namespace {

struct Manifest {
    std::string stage;
    std::uint64_t seed = 0;
    bool seeded = false;
    std::vector<std::string> inputs;
    std::vector<std::string> outputs;
    double duration_ms = 0.0;
};

void write_manifest(const Manifest& man, const std::string& out_dir) {
    nlohmann::ordered_json j;
    j["stage"] = man.stage;
    if (man.seeded) j["seed"] = man.seed;
    auto artifact_list = [](const std::vector<std::string>& paths) {
        nlohmann::ordered_json arr = nlohmann::ordered_json::array();
        for (const auto& p : paths) {
            nlohmann::ordered_json e;
            e["path"] = p;
            if (fs::exists(p) && fs::is_regular_file(p)) {
                char buf[32];
                std::snprintf(buf, sizeof(buf), "%016llx",
                              static_cast<unsigned long long>(fnv1a64_file(p)));
                e["fnv1a64"] = buf;
            }
            arr.push_back(std::move(e));
        }
        return arr;
    };
    j["inputs"] = artifact_list(man.inputs);
    j["outputs"] = artifact_list(man.outputs);
    j["duration_ms"] = man.duration_ms;
    write_text_file(out_dir + "/manifest_" + man.stage + ".json", j.dump(2) + "\n");
}

std::string join_path(const std::string& dir, const std::string& rel) {
    if (rel.empty()) return rel;
    if (rel.front() == '/') return rel;
    return dir + "/" + rel;
}

class PipelineRunner {
public:
    explicit PipelineRunner(const std::string& config_path) {
        try {
            config_ = nlohmann::json::parse(read_text_file(config_path));
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError(std::string("pipeline config: ") + e.what());
        } catch (const DataError& e) {
            throw ConfigError(e.what());
        }
        if (!config_.contains("out_dir"))
            throw ConfigError("pipeline config: out_dir is required");
        out_dir_ = config_["out_dir"].get<std::string>();
        root_seed_ = config_.value("seed", 0ULL);
        n_genres_ = config_.value("genres", 8);
        fs::create_directories(out_dir_);
    }

    bool has_stage(const std::string& stage) const { return config_.contains(stage); }

    void run(const std::vector<std::string>& requested) {
        std::vector<std::string> stages = requested;
        if (stages.empty()) {
            for (const auto& s : pipeline_stage_order()) {
                if (has_stage(s)) stages.push_back(s);
            }
        } else {
            // Keep dependency order regardless of how they were asked for.
            std::vector<std::string> ordered;
            for (const auto& s : pipeline_stage_order()) {
                if (std::find(stages.begin(), stages.end(), s) != stages.end())
                    ordered.push_back(s);
            }
            for (const auto& s : stages) {
                if (std::find(ordered.begin(), ordered.end(), s) == ordered.end())
                    throw ConfigError("unknown pipeline stage '" + s + "'");
            }
            stages = ordered;
        }
        if (stages.empty()) throw ConfigError("pipeline config has no stages to run");
        for (const auto& s : stages) run_stage(s);
    }

private:
    nlohmann::json config_;
    std::string out_dir_;
    std::uint64_t root_seed_ = 0;
    int n_genres_ = 8;

    std::uint64_t stage_seed(const nlohmann::json& section, const std::string& stage) const {
        if (section.contains("seed")) return section["seed"].get<std::uint64_t>();
        return derive_seed(root_seed_, stage);
    }

    std::string stage_path(const nlohmann::json& section, const std::string& key,
                           const std::string& fallback) const {
        return join_path(out_dir_, section.value(key, fallback));
    }

    void run_stage(const std::string& stage) {
        if (!has_stage(stage))
            throw ConfigError("pipeline config has no '" + stage + "' section");
        const nlohmann::json& section = config_[stage];
        Manifest man;
        man.stage = stage;
        auto start = std::chrono::steady_clock::now();

        if (stage == "prepare") {
            PrepareOptions opt;
            opt.logs = section.at("logs").get<std::string>();
            opt.click_table = section.at("click_table").get<std::string>();
            opt.context_table = section.at("context_table").get<std::string>();
            opt.channel_genre_table = section.value("channel_genre_table", std::string());
            opt.labels = section.value("labels", std::string());
            opt.gap_threshold_s = section.value("gap_threshold_s", 1800.0);
            if (section.contains("power_on_tags"))
                opt.power_on_tags = section["power_on_tags"].get<std::vector<std::string>>();
            opt.max_journeys = section.value("max_journeys", 0);
            opt.max_events = section.value("max_events", 0);
            opt.n_genres = n_genres_;
            opt.out = stage_path(section, "out", "journeys.jsonl");
            man.inputs = {opt.logs, opt.click_table, opt.context_table};
            man.outputs = {opt.out};
            stage_prepare(opt);
        } else if (stage == "simulate") {
            SimulateOptions opt;
            nlohmann::json scen = section;
            scen.erase("out");
            scen.erase("truth");
            if (!scen.contains("seed")) scen["seed"] = stage_seed(section, stage);
            if (!scen.contains("n_genres")) scen["n_genres"] = n_genres_;
            opt.scenario = scenario_from_json_text(scen.dump());
            man.seeded = true;
            man.seed = opt.scenario.seed;
            opt.out_journeys = stage_path(section, "out", "journeys.jsonl");
            opt.out_truth = stage_path(section, "truth", "truth.json");
            man.outputs = {opt.out_journeys, opt.out_truth};
            stage_simulate(opt);
        } else if (stage == "fit") {
            FitOptions opt;
            nlohmann::json mc = section;
            mc.erase("journeys");
            mc.erase("out");
            if (!mc.contains("seed")) mc["seed"] = stage_seed(section, stage);
            opt.mcmc = mcmc_config_from_json_text(mc.dump());
            man.seeded = true;
            man.seed = opt.mcmc.seed;
            opt.journeys = stage_path(section, "journeys", "journeys.jsonl");
            opt.n_genres = n_genres_;
            opt.out_dir = stage_path(section, "out", "draws");
            man.inputs = {opt.journeys};
            man.outputs = {opt.out_dir + "/meta.json"};
            for (int c = 1; c <= opt.mcmc.n_chains; ++c) {
                man.outputs.push_back(opt.out_dir + "/chain_" + std::to_string(c) + ".tsv");
                man.outputs.push_back(opt.out_dir + "/acceptance_chain_" + std::to_string(c) +
                                      ".tsv");
            }
            stage_fit(opt);
        } else if (stage == "diagnose") {
            DiagnoseOptions opt;
            opt.draws_dir = stage_path(section, "draws", "draws");
            opt.out_summary = stage_path(section, "out", "summary.tsv");
            man.inputs = {opt.draws_dir + "/meta.json"};
            man.outputs = {opt.out_summary};
            stage_diagnose(opt);
        } else if (stage == "profile") {
            ProfileOptions opt;
            opt.draws_dir = stage_path(section, "draws", "draws");
            opt.journeys = stage_path(section, "journeys", "journeys.jsonl");
            opt.n_genres = n_genres_;
            opt.use_median = section.value("use_median", false);
            opt.out_profiles = stage_path(section, "out", "profiles.csv");
            opt.out_correlations = stage_path(section, "correlations", "correlations.csv");
            man.inputs = {opt.draws_dir + "/meta.json", opt.journeys};
            man.outputs = {opt.out_profiles};
            stage_profile(opt);
            if (fs::exists(opt.out_correlations)) man.outputs.push_back(opt.out_correlations);
        } else if (stage == "cluster") {
            ClusterOptions opt;
            opt.profiles = stage_path(section, "profiles", "profiles.csv");
            if (section.value("naive", false))
                opt.naive_journeys = stage_path(section, "journeys", "journeys.jsonl");
            opt.k = section.value("k", 2);
            opt.n_genres = n_genres_;
            opt.out_json = stage_path(section, "out", "dendrogram.json");
            opt.out_newick = stage_path(section, "newick", "dendrogram.nwk");
            opt.out_clusters = stage_path(section, "clusters", "clusters.csv");
            man.inputs = {opt.profiles};
            man.outputs = {opt.out_json, opt.out_newick, opt.out_clusters};
            if (!opt.naive_journeys.empty()) {
                man.inputs.push_back(opt.naive_journeys);
                man.outputs.push_back(with_suffix(opt.out_json, "_naive"));
                man.outputs.push_back(with_suffix(opt.out_newick, "_naive"));
                man.outputs.push_back(with_suffix(opt.out_clusters, "_naive"));
            }
            stage_cluster(opt);
        } else if (stage == "classify") {
            ClassifyOptions opt;
            opt.profiles = stage_path(section, "profiles", "profiles.csv");
            if (section.value("naive", true))
                opt.naive_journeys = stage_path(section, "journeys", "journeys.jsonl");
            opt.n_genres = n_genres_;
            opt.config.split_ratio = section.value("split", 0.7);
            opt.config.seed = stage_seed(section, stage);
            man.seeded = true;
            man.seed = opt.config.seed;
            if (section.contains("methods"))
                opt.config.methods = section["methods"].get<std::vector<std::string>>();
            opt.config.lasso_penalty = section.value("lasso_penalty", 0.02);
            opt.config.knn_k = section.value("knn_k", 1);
            opt.config.rf_trees = section.value("rf_trees", 1000);
            opt.config.svm_cost = section.value("svm_cost", 1.0);
            opt.config.svm_degree = section.value("svm_degree", 3);
            opt.out_csv = stage_path(section, "out", "report.csv");
            man.inputs = {opt.profiles};
            if (!opt.naive_journeys.empty()) man.inputs.push_back(opt.naive_journeys);
            man.outputs = {opt.out_csv};
            stage_classify(opt);
        } else if (stage == "report") {
            ReportOptions opt;
            opt.draws_dir = stage_path(section, "draws", "draws");
            opt.classification_csv = stage_path(section, "classification", "report.csv");
            opt.out_txt = stage_path(section, "out", "report.txt");
            man.inputs = {opt.draws_dir + "/meta.json", opt.classification_csv};
            man.outputs = {opt.out_txt};
            stage_report(opt);
        }

        auto end = std::chrono::steady_clock::now();
        man.duration_ms = std::chrono::duration<double, std::milli>(end - start).count();
        write_manifest(man, out_dir_);
    }
};

}  // namespace

void run_pipeline(const PipelineOptions& opt) {
    PipelineRunner runner(opt.config_path);
    runner.run(opt.stages);
}

}  // namespace churnprof
