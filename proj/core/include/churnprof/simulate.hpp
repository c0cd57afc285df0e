#ifndef CHURNPROF_SIMULATE_HPP
#define CHURNPROF_SIMULATE_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "churnprof/event_log.hpp"
#include "churnprof/model.hpp"
#include "churnprof/rng.hpp"

namespace churnprof {

/// Generating parameters for one churn group. The hierarchy means/scales live
/// in `globals`; phi and psi need their own population settings because the
/// fitting priors for them are too vague to generate from.
struct GroupTruth {
    ChurnLabel label = ChurnLabel::active;
    double fraction = 0.5;
    GlobalParams globals;
    double phi_mean = 0.0;
    double phi_sd = 0.0;
    double psi = 1.0;
    double psi_log_sd = 0.0;  // psi_c = psi * exp(N(0, psi_log_sd^2))
};

struct ScenarioConfig {
    int n_customers = 40;
    int n_journeys = 50;
    int max_events = 300;
    int n_genres = 8;
    std::vector<double> genre_weights;  // empty = uniform
    std::vector<GroupTruth> groups;
    std::uint64_t seed = 1;

    void validate() const;
};

ScenarioConfig load_scenario_json(const std::string& path);
ScenarioConfig scenario_from_json_text(const std::string& text);

/// Exact Poisson draw: CDF inversion for small lambda, recursive halving
/// (infinite divisibility) above it. Deterministic given the rng stream.
long long sample_poisson(double lambda, Rng& rng);

/// Zero-truncated Poisson draw: inversion on the truncated CDF for
/// lambda < 30, rejection of zeros otherwise. Always >= 1.
long long sample_ztpois(double lambda, Rng& rng);

struct SimulationResult {
    Dataset data;
    HierarchicalParams truth;
    ModelConfig model_config;                 // shape the truth refers to
    std::map<std::string, double> truth_by_name;  // sampler-registry names
};

/// Draws a dataset from the generative model with known parameters. Customers
/// are assigned to groups in blocks by fraction; every per-customer draw uses
/// a seed derived from (scenario seed, customer index), so the output does
/// not depend on evaluation order.
SimulationResult simulate_dataset(const ScenarioConfig& scenario);

void write_truth_json(const SimulationResult& sim, const std::string& path);
std::map<std::string, double> read_truth_json(const std::string& path);

}  // namespace churnprof

#endif
