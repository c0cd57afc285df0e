#ifndef CHURNPROF_SAMPLER_HPP
#define CHURNPROF_SAMPLER_HPP

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "churnprof/model.hpp"

namespace churnprof {

struct McmcConfig {
    int n_adapt = 1000;
    int n_burnin = 2000;
    int n_iter = 20000;
    int thin = 10;
    int n_chains = 3;
    std::uint64_t seed = 0;
    double target_accept = 0.44;
    int threads = 0;               // 0 = one per chain
    bool likelihood_off = false;   // sample the joint prior (validation mode)
    // Recompute the full log posterior every sweep and compare with the
    // incrementally tracked value; throws on drift > 1e-8. Test hook.
    bool check_consistency = false;
    ModelConfig model;

    int n_retained() const { return n_iter / thin; }
    void validate() const;
};

McmcConfig mcmc_config_from_json_text(const std::string& text);
McmcConfig load_mcmc_config_json(const std::string& path);

/// Canonical parameter naming/ordering shared by draw files, summaries and
/// truth files: delta, beta[k], sigma_d, sigma_b[k], sigma_p, then per
/// customer d0[c], b[c,k], phi[c], psi[c], then p[c,s].
struct ParamRegistry {
    std::vector<std::string> names;
    std::unordered_map<std::string, int> by_name;

    int size() const { return static_cast<int>(names.size()); }
    int index_of(const std::string& name) const;
    bool contains(const std::string& name) const { return by_name.count(name) > 0; }
};

ParamRegistry build_registry(const PreparedData& prep);

/// Flattens a parameter state into registry order.
std::vector<double> flatten_params(const PreparedData& prep, const HierarchicalParams& params);

struct AcceptanceRecord {
    std::string name;
    long proposals = 0;
    long accepts = 0;
    double scale = 0.0;  // frozen proposal sd after adaptation

    double rate() const { return proposals > 0 ? static_cast<double>(accepts) / proposals : 0.0; }
};

struct ChainDraws {
    ParamRegistry registry;
    McmcConfig config;
    std::vector<std::string> customer_ids;
    // chains[c] is row-major (n_retained x n_params).
    std::vector<std::vector<double>> chains;
    std::vector<std::vector<double>> log_posterior;  // per chain, per retained draw
    std::vector<std::vector<AcceptanceRecord>> acceptance;  // per chain

    int n_chains() const { return static_cast<int>(chains.size()); }
    int n_params() const { return registry.size(); }
    int n_retained() const;
    double value(int chain, int draw, int param) const;
    /// One parameter's retained draws, per chain.
    std::vector<std::vector<double>> column(const std::string& name) const;
};

/// Runs the adaptive random-walk Metropolis sampler: per chain, n_adapt
/// scale-adaptation sweeps (Robbins-Monro toward target_accept), n_burnin
/// discarded sweeps, then n_iter sweeps keeping every thin-th state. Chains
/// use independent streams derived from (seed, chain index) and run in
/// parallel; results do not depend on the thread count.
ChainDraws run_mcmc(const Dataset& data, const PriorConfig& priors, const McmcConfig& config);
ChainDraws run_mcmc(const PreparedData& prep, const PriorConfig& priors, const McmcConfig& config);

/// Data-derived starting state (shared by all chains): intercepts at observed
/// log mean counts, genre effects at log mean gaps, AR levels at zero,
/// dispersions at method-of-moments estimates.
HierarchicalParams initial_params(const PreparedData& prep);

/// Split-chain potential scale reduction factor. NaN when every split chain
/// has zero variance.
double rhat(const ChainDraws& draws, const std::string& name);
double split_rhat(const std::vector<std::vector<double>>& chains);

/// Effective sample size via the variogram autocorrelation estimator with
/// Geyer initial-positive-sequence truncation. NaN for constant chains;
/// capped at 1.25x the total draw count.
double ess(const ChainDraws& draws, const std::string& name);
double ess_from_chains(const std::vector<std::vector<double>>& chains);

struct ParamSummary {
    std::string name;
    double mean = 0.0;
    double sd = 0.0;
    double q025 = 0.0;
    double median = 0.0;
    double q975 = 0.0;
    double rhat = 0.0;
    double ess = 0.0;
};

struct PosteriorSummary {
    std::vector<ParamSummary> rows;
    std::unordered_map<std::string, int> by_name;

    bool contains(const std::string& name) const { return by_name.count(name) > 0; }
    const ParamSummary& at(const std::string& name) const;
};

/// Pooled-chain means, sds and type-7 interpolated 2.5%/97.5% quantiles,
/// plus R-hat and ESS per parameter.
PosteriorSummary summarize(const ChainDraws& draws);

/// Type-7 quantile (linear interpolation between order statistics).
double quantile_type7(std::vector<double> values, double p);

// Persistence: one tab-delimited file per chain (header = parameter names),
// an acceptance log per chain, and a meta.json with the registry, config and
// customer ids.
void write_draws(const ChainDraws& draws, const std::string& dir);
ChainDraws load_draws(const std::string& dir);

void write_summary_tsv(const PosteriorSummary& summary, const std::string& path);
PosteriorSummary load_summary_tsv(const std::string& path);

/// "estimate (sd) [lower, upper]" report for the global parameters.
std::string render_summary_report(const PosteriorSummary& summary,
                                  const std::vector<std::string>& names);

}  // namespace churnprof

#endif
