#include "churnprof/simulate.hpp"

#include <cmath>
#include <cstdio>

#include "churnprof/common.hpp"

#include "json.hpp"

namespace churnprof {

void ScenarioConfig::validate() const {
    if (n_customers < 1 || n_journeys < 1 || max_events < 1)
        throw ConfigError("scenario: counts and caps must be >= 1");
    if (n_genres < 1) throw ConfigError("scenario: n_genres must be >= 1");
    if (groups.empty()) throw ConfigError("scenario: at least one group required");
    double total = 0.0;
    for (const auto& grp : groups) {
        if (grp.fraction < 0.0) throw ConfigError("scenario: negative group fraction");
        total += grp.fraction;
        if (static_cast<int>(grp.globals.beta.size()) != n_genres ||
            static_cast<int>(grp.globals.sigma_b.size()) != n_genres)
            throw ConfigError("scenario: beta/sigma_b length must equal n_genres");
        if (grp.globals.sigma_d < 0.0 || grp.globals.sigma_p < 0.0 || grp.phi_sd < 0.0 ||
            grp.psi_log_sd < 0.0)
            throw ConfigError("scenario: negative scale parameter");
        if (!(grp.psi > 0.0)) throw ConfigError("scenario: psi must be > 0");
    }
    if (std::abs(total - 1.0) > 1e-9) throw ConfigError("scenario: group fractions must sum to 1");
    if (!genre_weights.empty()) {
        if (static_cast<int>(genre_weights.size()) != n_genres)
            throw ConfigError("scenario: genre_weights length must equal n_genres");
        double w = 0.0;
        for (double x : genre_weights) {
            if (x < 0.0) throw ConfigError("scenario: negative genre weight");
            w += x;
        }
        if (!(w > 0.0)) throw ConfigError("scenario: genre weights sum to zero");
    }
}

namespace {

GroupTruth group_from_json(const nlohmann::json& j, int n_genres) {
    GroupTruth grp;
    grp.label = churn_label_from_string(j.at("label").get<std::string>());
    grp.fraction = j.at("fraction").get<double>();
    grp.globals.delta = j.at("delta").get<double>();
    grp.globals.sigma_d = j.at("sigma_d").get<double>();
    grp.globals.beta = j.at("beta").get<std::vector<double>>();
    if (j.contains("sigma_b")) {
        grp.globals.sigma_b = j["sigma_b"].get<std::vector<double>>();
    } else {
        grp.globals.sigma_b.assign(n_genres, 0.0);
    }
    grp.globals.sigma_p = j.value("sigma_p", 0.0);
    grp.phi_mean = j.value("phi_mean", 0.0);
    grp.phi_sd = j.value("phi_sd", 0.0);
    grp.psi = j.value("psi", 1.0);
    grp.psi_log_sd = j.value("psi_log_sd", 0.0);
    return grp;
}

}  // namespace

ScenarioConfig scenario_from_json_text(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("scenario JSON: ") + e.what());
    }
    ScenarioConfig sc;
    try {
        sc.n_customers = j.at("n_customers").get<int>();
        sc.n_journeys = j.at("n_journeys").get<int>();
        sc.max_events = j.value("max_events", 300);
        sc.n_genres = j.value("n_genres", 8);
        sc.seed = j.value("seed", 1ULL);
        if (j.contains("genre_weights"))
            sc.genre_weights = j["genre_weights"].get<std::vector<double>>();
        for (const auto& grp : j.at("groups")) {
            sc.groups.push_back(group_from_json(grp, sc.n_genres));
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("scenario JSON: ") + e.what());
    }
    sc.validate();
    return sc;
}

ScenarioConfig load_scenario_json(const std::string& path) {
    try {
        return scenario_from_json_text(read_text_file(path));
    } catch (const DataError& e) {
        throw ConfigError(e.what());
    }
}

long long sample_poisson(double lambda, Rng& rng) {
    if (!(lambda > 0.0)) throw std::domain_error("sample_poisson: lambda must be > 0");
    if (!(lambda <= 1e6)) throw std::domain_error("sample_poisson: lambda too large");
    if (lambda < 30.0) {
        // Sequential CDF inversion.
        double u = rng.uniform();
        double p = std::exp(-lambda);
        double cum = p;
        long long n = 0;
        while (u > cum && n < 1000000) {
            ++n;
            p *= lambda / static_cast<double>(n);
            cum += p;
        }
        return n;
    }
    // Poisson is infinitely divisible: split until the inversion regime.
    long long halves = sample_poisson(lambda * 0.5, rng);
    return halves + sample_poisson(lambda - lambda * 0.5, rng);
}

long long sample_ztpois(double lambda, Rng& rng) {
    if (!(lambda > 0.0)) throw std::domain_error("sample_ztpois: lambda must be > 0");
    if (lambda < 30.0) {
        // Inversion of the truncated CDF: map u into (P(0), 1] and invert the
        // plain Poisson CDF there, so 0 can never come out.
        double p0 = std::exp(-lambda);
        double u = p0 + rng.uniform() * (1.0 - p0);
        double p = p0;
        double cum = p;
        long long n = 0;
        while (u > cum && n < 1000000) {
            ++n;
            p *= lambda / static_cast<double>(n);
            cum += p;
        }
        return n < 1 ? 1 : n;
    }
    // P(0) = e^-30 or smaller; reject zeros.
    while (true) {
        long long n = sample_poisson(lambda, rng);
        if (n >= 1) return n;
    }
}

namespace {

int sample_genre(const std::vector<double>& weights, int n_genres, Rng& rng) {
    if (weights.empty()) {
        return 1 + static_cast<int>(rng.uniform_below(static_cast<std::uint64_t>(n_genres)));
    }
    double total = 0.0;
    for (double w : weights) total += w;
    double u = rng.uniform() * total;
    double cum = 0.0;
    for (int k = 0; k < n_genres; ++k) {
        cum += weights[k];
        if (u <= cum) return k + 1;
    }
    return n_genres;
}

std::string customer_name(int index, int n_customers) {
    int width = n_customers >= 1000 ? 5 : 4;
    char buf[32];
    std::snprintf(buf, sizeof(buf), "cust%0*d", width, index + 1);
    return buf;
}

}  // namespace

SimulationResult simulate_dataset(const ScenarioConfig& scenario) {
    scenario.validate();
    const int K = scenario.n_genres;
    const int C = scenario.n_customers;

    // Block group assignment by fraction; the last group takes the remainder.
    std::vector<int> group_of(C, static_cast<int>(scenario.groups.size()) - 1);
    {
        int next = 0;
        for (std::size_t gi = 0; gi + 1 < scenario.groups.size(); ++gi) {
            int count = static_cast<int>(std::llround(scenario.groups[gi].fraction * C));
            for (int i = 0; i < count && next < C; ++i) group_of[next++] = static_cast<int>(gi);
        }
        while (next < C) group_of[next++] = static_cast<int>(scenario.groups.size()) - 1;
    }

    SimulationResult sim;
    sim.data.n_genres = K;
    sim.truth.global.beta.assign(K, 0.0);
    sim.truth.global.sigma_b.assign(K, 1.0);
    if (scenario.groups.size() == 1) {
        sim.truth.global = scenario.groups[0].globals;
    }

    const std::int64_t base_ms = 1600000000000LL;
    for (int c = 0; c < C; ++c) {
        const GroupTruth& grp = scenario.groups[group_of[c]];
        Rng rng(derive_seed(scenario.seed, static_cast<std::uint64_t>(c)));

        Customer cust;
        cust.id = customer_name(c, C);
        cust.label = grp.label;

        CustomerParams cp;
        cp.d0 = rng.normal(grp.globals.delta, grp.globals.sigma_d);
        cp.b.resize(K);
        for (int k = 0; k < K; ++k) cp.b[k] = rng.normal(grp.globals.beta[k], grp.globals.sigma_b[k]);
        cp.phi = rng.normal(grp.phi_mean, grp.phi_sd);
        cp.psi = grp.psi * std::exp(grp.psi_log_sd > 0.0 ? rng.normal(0.0, grp.psi_log_sd) : 0.0);

        double lambda = std::exp(cp.d0);
        if (!std::isfinite(lambda) || !(lambda > 0.0))
            throw NumericalError("simulate: non-finite event rate for customer " + cust.id);

        SessionParams sp;
        for (int s = 0; s < scenario.n_journeys; ++s) {
            double p_sc = rng.normal(cp.phi, grp.globals.sigma_p);
            sp.p.push_back(p_sc);
            long long n_events = std::min<long long>(sample_ztpois(lambda, rng), scenario.max_events);

            Journey j;
            j.customer_id = cust.id;
            j.journey_index = s + 1;
            j.start_ms = base_ms + static_cast<std::int64_t>(c) * 86400000LL +
                         static_cast<std::int64_t>(s) * 3600000LL;
            j.channel = "SIM";
            double prev_gap = 0.0;
            for (long long i = 0; i < n_events; ++i) {
                int genre = sample_genre(scenario.genre_weights, K, rng);
                j.genres.push_back(genre);
                j.tags.push_back("E_" + std::to_string(genre));
                if (i + 1 < n_events) {
                    // Gap i+1 follows event i+1; the first gap has no AR term.
                    double log_mu = cp.b[genre - 1];
                    if (i > 0) log_mu += p_sc * prev_gap;
                    log_mu = clip_log_mean(log_mu);
                    double gap = rng.gamma_mean_disp(std::exp(log_mu), cp.psi);
                    if (!std::isfinite(gap) || !(gap > 0.0))
                        throw NumericalError("simulate: non-finite gap in journey " + cust.id +
                                             "/" + std::to_string(s + 1));
                    j.gaps.push_back(gap);
                    prev_gap = gap;
                }
            }
            double sum = 0.0;
            for (double g : j.gaps) sum += g;
            j.total_duration_s = sum;
            j.end_ms = j.start_ms + std::llround(sum * 1000.0);
            cust.journeys.push_back(std::move(j));
        }
        sim.truth.per_customer.push_back(std::move(cp));
        sim.truth.per_session.push_back(std::move(sp));
        sim.data.customers.push_back(std::move(cust));
    }
    sim.data.validate();

    // Truth keyed by the draw-file parameter names.
    auto& tb = sim.truth_by_name;
    if (scenario.groups.size() == 1) {
        const GlobalParams& g = sim.truth.global;
        tb["delta"] = g.delta;
        tb["sigma_d"] = g.sigma_d;
        for (int k = 0; k < K; ++k) {
            tb["beta[" + std::to_string(k + 1) + "]"] = g.beta[k];
            tb["sigma_b[" + std::to_string(k + 1) + "]"] = g.sigma_b[k];
        }
        tb["sigma_p"] = g.sigma_p;
    }
    for (int c = 0; c < C; ++c) {
        std::string ci = std::to_string(c + 1);
        const CustomerParams& cp = sim.truth.per_customer[c];
        tb["d0[" + ci + "]"] = cp.d0;
        for (int k = 0; k < K; ++k) tb["b[" + ci + "," + std::to_string(k + 1) + "]"] = cp.b[k];
        tb["phi[" + ci + "]"] = cp.phi;
        tb["psi[" + ci + "]"] = cp.psi;
        for (std::size_t s = 0; s < sim.truth.per_session[c].p.size(); ++s) {
            tb["p[" + ci + "," + std::to_string(s + 1) + "]"] = sim.truth.per_session[c].p[s];
        }
    }
    return sim;
}

void write_truth_json(const SimulationResult& sim, const std::string& path) {
    nlohmann::ordered_json j;
    for (const auto& [name, value] : sim.truth_by_name) j[name] = value;
    write_text_file(path, j.dump(2) + "\n");
}

std::map<std::string, double> read_truth_json(const std::string& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_text_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("truth JSON: ") + e.what());
    }
    std::map<std::string, double> out;
    for (auto it = j.begin(); it != j.end(); ++it) out[it.key()] = it.value().get<double>();
    return out;
}

}  // namespace churnprof
