#include "churnprof/sampler.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <sstream>
#include <thread>

#include "churnprof/common.hpp"
#include "churnprof/rng.hpp"

#include "json.hpp"

namespace churnprof {

namespace {
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
inline double sq(double x) { return x * x; }
}  // namespace

void McmcConfig::validate() const {
    if (n_adapt < 0 || n_burnin < 0) throw ConfigError("mcmc: negative phase length");
    if (n_iter < 1) throw ConfigError("mcmc: n_iter must be >= 1");
    if (thin < 1) throw ConfigError("mcmc: thin must be >= 1");
    if (n_chains < 1) throw ConfigError("mcmc: n_chains must be >= 1");
    if (!(target_accept > 0.0 && target_accept < 1.0))
        throw ConfigError("mcmc: target_accept must be in (0,1)");
    if (n_iter / thin < 1) throw ConfigError("mcmc: no retained draws (n_iter < thin)");
}

McmcConfig mcmc_config_from_json_text(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("mcmc config JSON: ") + e.what());
    }
    McmcConfig cfg;
    cfg.n_adapt = j.value("n_adapt", cfg.n_adapt);
    cfg.n_burnin = j.value("n_burnin", cfg.n_burnin);
    cfg.n_iter = j.value("n_iter", cfg.n_iter);
    cfg.thin = j.value("thin", cfg.thin);
    cfg.n_chains = j.value("n_chains", cfg.n_chains);
    cfg.seed = j.value("seed", cfg.seed);
    cfg.target_accept = j.value("target_accept", cfg.target_accept);
    cfg.threads = j.value("threads", cfg.threads);
    cfg.likelihood_off = j.value("likelihood_off", cfg.likelihood_off);
    if (j.contains("count_covariate")) {
        std::string cov = j["count_covariate"].get<std::string>();
        if (cov == "none") cfg.model.count_covariate = ModelConfig::CountCovariate::none;
        else if (cov == "journey_index")
            cfg.model.count_covariate = ModelConfig::CountCovariate::journey_index;
        else throw ConfigError("mcmc: unknown count_covariate '" + cov + "'");
    }
    cfg.model.customer_level_ar = j.value("customer_level_ar", cfg.model.customer_level_ar);
    cfg.validate();
    return cfg;
}

McmcConfig load_mcmc_config_json(const std::string& path) {
    try {
        return mcmc_config_from_json_text(read_text_file(path));
    } catch (const DataError& e) {
        throw ConfigError(e.what());
    }
}

int ParamRegistry::index_of(const std::string& name) const {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw std::invalid_argument("unknown parameter '" + name + "'");
    return it->second;
}

ParamRegistry build_registry(const PreparedData& prep) {
    const bool covariate = prep.config.covariate_on();
    const bool customer_ar = prep.config.customer_level_ar;
    const int K = prep.n_genres;
    ParamRegistry reg;
    auto add = [&](std::string name) {
        reg.by_name.emplace(name, static_cast<int>(reg.names.size()));
        reg.names.push_back(std::move(name));
    };
    add("delta");
    for (int k = 1; k <= K; ++k) add("beta[" + std::to_string(k) + "]");
    add("sigma_d");
    for (int k = 1; k <= K; ++k) add("sigma_b[" + std::to_string(k) + "]");
    if (!customer_ar) add("sigma_p");
    if (covariate) {
        add("delta1");
        add("sigma_d1");
    }
    for (int c = 1; c <= prep.n_customers(); ++c) {
        std::string ci = std::to_string(c);
        add("d0[" + ci + "]");
        if (covariate) add("d1[" + ci + "]");
        for (int k = 1; k <= K; ++k) add("b[" + ci + "," + std::to_string(k) + "]");
        add("phi[" + ci + "]");
        add("psi[" + ci + "]");
    }
    if (!customer_ar) {
        for (int c = 1; c <= prep.n_customers(); ++c) {
            std::string ci = std::to_string(c);
            for (int s = 1; s <= prep.customers[c - 1].n_journeys(); ++s) {
                add("p[" + ci + "," + std::to_string(s) + "]");
            }
        }
    }
    return reg;
}

std::vector<double> flatten_params(const PreparedData& prep, const HierarchicalParams& params) {
    const bool covariate = prep.config.covariate_on();
    const bool customer_ar = prep.config.customer_level_ar;
    const int K = prep.n_genres;
    std::vector<double> out;
    out.push_back(params.global.delta);
    for (int k = 0; k < K; ++k) out.push_back(params.global.beta[k]);
    out.push_back(params.global.sigma_d);
    for (int k = 0; k < K; ++k) out.push_back(params.global.sigma_b[k]);
    if (!customer_ar) out.push_back(params.global.sigma_p);
    if (covariate) {
        out.push_back(params.global.delta1);
        out.push_back(params.global.sigma_d1);
    }
    for (int c = 0; c < prep.n_customers(); ++c) {
        const CustomerParams& cp = params.per_customer[c];
        out.push_back(cp.d0);
        if (covariate) out.push_back(cp.d1);
        for (int k = 0; k < K; ++k) out.push_back(cp.b[k]);
        out.push_back(cp.phi);
        out.push_back(cp.psi);
    }
    if (!customer_ar) {
        for (int c = 0; c < prep.n_customers(); ++c) {
            for (double p : params.per_session[c].p) out.push_back(p);
        }
    }
    return out;
}

HierarchicalParams initial_params(const PreparedData& prep) {
    const int K = prep.n_genres;
    HierarchicalParams params = make_params_shape(prep);

    double total_n = 0.0;
    double total_journeys = 0.0;
    std::vector<double> genre_gap_sum(K, 0.0);
    std::vector<long long> genre_gap_count(K, 0);
    for (const auto& pc : prep.customers) {
        total_n += pc.sum_n;
        total_journeys += pc.n_journeys();
        for (int e = 0; e < pc.n_event_terms(); ++e) {
            genre_gap_sum[pc.ev_genre[e]] += pc.ev_t[e];
            ++genre_gap_count[pc.ev_genre[e]];
        }
    }
    params.global.delta = std::log(total_n / total_journeys);
    for (int k = 0; k < K; ++k) {
        params.global.beta[k] =
            genre_gap_count[k] > 0 ? std::log(genre_gap_sum[k] / genre_gap_count[k]) : 0.0;
    }
    params.global.sigma_d = 1.0;
    params.global.sigma_b.assign(K, 1.0);
    params.global.sigma_p = 1.0;
    params.global.delta1 = 0.0;
    params.global.sigma_d1 = 1.0;

    for (int c = 0; c < prep.n_customers(); ++c) {
        const PreparedCustomer& pc = prep.customers[c];
        CustomerParams& cp = params.per_customer[c];
        cp.d0 = std::log(pc.sum_n / pc.n_journeys());
        for (int k = 0; k < K; ++k) {
            const auto& idx = pc.ev_by_genre[k];
            if (!idx.empty()) {
                double sum = 0.0;
                for (int e : idx) sum += pc.ev_t[e];
                cp.b[k] = std::log(sum / static_cast<double>(idx.size()));
            } else {
                cp.b[k] = params.global.beta[k];
            }
        }
        cp.phi = 0.0;
        // Method-of-moments dispersion from the modelled gaps.
        const int E = pc.n_event_terms();
        if (E >= 2) {
            double mean = 0.0;
            for (int e = 0; e < E; ++e) mean += pc.ev_t[e];
            mean /= E;
            double var = 0.0;
            for (int e = 0; e < E; ++e) var += sq(pc.ev_t[e] - mean);
            var /= (E - 1);
            cp.psi = var > 0.0 ? std::clamp(mean * mean / var, 0.01, 1e6) : 1.0;
        } else {
            cp.psi = 1.0;
        }
        // p_sc start at 0 (the phi starting level).
    }
    return params;
}

// ---------------------------------------------------------------------------
// Chain state and update sweep.

namespace {

enum class Kind : std::uint8_t {
    global_delta,
    global_beta,
    global_sigma_d,
    global_sigma_b,
    global_sigma_p,
    global_delta1,
    global_sigma_d1,
    cust_d0,
    cust_d1,
    cust_b,
    cust_phi,
    cust_psi,
    sess_p,
};

struct UpdateUnit {
    Kind kind;
    int c = -1;
    int k = -1;
    int s = -1;
};

std::vector<UpdateUnit> build_units(const PreparedData& prep) {
    const bool covariate = prep.config.covariate_on();
    const bool customer_ar = prep.config.customer_level_ar;
    const int K = prep.n_genres;
    std::vector<UpdateUnit> units;
    units.push_back({Kind::global_delta, -1, -1, -1});
    for (int k = 0; k < K; ++k) units.push_back({Kind::global_beta, -1, k, -1});
    units.push_back({Kind::global_sigma_d, -1, -1, -1});
    for (int k = 0; k < K; ++k) units.push_back({Kind::global_sigma_b, -1, k, -1});
    if (!customer_ar) units.push_back({Kind::global_sigma_p, -1, -1, -1});
    if (covariate) {
        units.push_back({Kind::global_delta1, -1, -1, -1});
        units.push_back({Kind::global_sigma_d1, -1, -1, -1});
    }
    for (int c = 0; c < prep.n_customers(); ++c) {
        units.push_back({Kind::cust_d0, c, -1, -1});
        if (covariate) units.push_back({Kind::cust_d1, c, -1, -1});
        for (int k = 0; k < K; ++k) units.push_back({Kind::cust_b, c, k, -1});
        units.push_back({Kind::cust_phi, c, -1, -1});
        units.push_back({Kind::cust_psi, c, -1, -1});
    }
    if (!customer_ar) {
        for (int c = 0; c < prep.n_customers(); ++c) {
            for (int s = 0; s < prep.customers[c].n_journeys(); ++s) {
                units.push_back({Kind::sess_p, c, -1, s});
            }
        }
    }
    return units;
}

// Registry index of each unit, in the same order that build_registry emits.
// (Units and registry entries are built by structurally identical walks.)

class ChainState {
public:
    ChainState(const PreparedData& prep, const PriorConfig& priors, const McmcConfig& cfg,
               const std::vector<UpdateUnit>& units, const HierarchicalParams& init,
               std::uint64_t chain_seed)
        : prep_(prep),
          priors_(priors),
          cfg_(cfg),
          units_(units),
          params_(init),
          rng_(chain_seed),
          customer_ar_(cfg.model.customer_level_ar),
          covariate_(cfg.model.covariate_on()),
          lik_on_(!cfg.likelihood_off) {
        log_scales_.assign(units_.size(), std::log(0.5));
        proposals_.assign(units_.size(), 0);
        accepts_.assign(units_.size(), 0);
        cur_log_mu_.resize(prep_.customers.size());
        cur_mu_inv_.resize(prep_.customers.size());
        std::size_t max_events = 0;
        for (std::size_t c = 0; c < prep_.customers.size(); ++c) {
            const auto& pc = prep_.customers[c];
            cur_log_mu_[c].resize(pc.n_event_terms());
            cur_mu_inv_[c].resize(pc.n_event_terms());
            max_events = std::max<std::size_t>(max_events, pc.n_event_terms());
        }
        scratch_log_mu_.resize(max_events);
        scratch_mu_inv_.resize(max_events);
        rebuild_caches();
        lp_ = full_log_posterior();
        if (!std::isfinite(lp_)) {
            LogPosteriorTerms t = joint_log_posterior_terms(prep_, params_, priors_);
            std::string term = "log posterior";
            if (!std::isfinite(t.count_loglik)) term = "count likelihood";
            else if (!std::isfinite(t.gamma_loglik)) term = "gamma likelihood";
            else if (!std::isfinite(t.session_slope_density)) term = "session slope density";
            else if (!std::isfinite(t.customer_priors)) term = "customer priors";
            else if (!std::isfinite(t.global_priors)) term = "global priors";
            throw NumericalError("non-finite " + term + " at initialization");
        }
    }

    void run(std::vector<double>& draws_out, std::vector<double>& lp_out,
             std::vector<AcceptanceRecord>& accept_out) {
        for (int t = 1; t <= cfg_.n_adapt; ++t) {
            adapt_gain_ = std::pow(static_cast<double>(t), -0.6);
            sweep(true);
            check_consistency();
        }
        // Freeze scales; acceptance statistics restart here.
        std::fill(proposals_.begin(), proposals_.end(), 0);
        std::fill(accepts_.begin(), accepts_.end(), 0);
        for (int t = 1; t <= cfg_.n_burnin; ++t) {
            sweep(false);
            check_consistency();
        }
        const int retained = cfg_.n_retained();
        draws_out.reserve(static_cast<std::size_t>(retained) * units_.size());
        lp_out.reserve(retained);
        for (int t = 1; t <= cfg_.n_iter; ++t) {
            sweep(false);
            check_consistency();
            if (t % cfg_.thin == 0) {
                std::vector<double> row = flatten_params(prep_, params_);
                draws_out.insert(draws_out.end(), row.begin(), row.end());
                lp_out.push_back(lp_);
            }
        }
        accept_out.resize(units_.size());
        for (std::size_t u = 0; u < units_.size(); ++u) {
            accept_out[u].proposals = proposals_[u];
            accept_out[u].accepts = accepts_[u];
            accept_out[u].scale = std::exp(log_scales_[u]);
        }
    }

private:
    const PreparedData& prep_;
    const PriorConfig& priors_;
    const McmcConfig& cfg_;
    const std::vector<UpdateUnit>& units_;
    HierarchicalParams params_;
    Rng rng_;
    const bool customer_ar_;
    const bool covariate_;
    const bool lik_on_;

    double lp_ = 0.0;
    double adapt_gain_ = 0.0;  // 0 outside adaptation
    std::vector<double> log_scales_;
    std::vector<long> proposals_;
    std::vector<long> accepts_;
    std::vector<std::vector<double>> cur_log_mu_;
    std::vector<std::vector<double>> cur_mu_inv_;
    std::vector<double> scratch_log_mu_;
    std::vector<double> scratch_mu_inv_;

    double ar_slope(int c, int j) const {
        return customer_ar_ ? params_.per_customer[c].phi : params_.per_session[c].p[j];
    }

    void rebuild_caches() {
        for (std::size_t c = 0; c < prep_.customers.size(); ++c) {
            const auto& pc = prep_.customers[c];
            const auto& b = params_.per_customer[c].b;
            for (int e = 0; e < pc.n_event_terms(); ++e) {
                double lm = clip_log_mean(b[pc.ev_genre[e]] +
                                          ar_slope(static_cast<int>(c), pc.ev_journey[e]) *
                                              pc.ev_tprev[e]);
                cur_log_mu_[c][e] = lm;
                cur_mu_inv_[c][e] = std::exp(-lm);
            }
        }
    }

    double full_log_posterior() const {
        LogPosteriorTerms t = joint_log_posterior_terms(prep_, params_, priors_);
        if (!lik_on_) return t.total() - t.count_loglik - t.gamma_loglik;
        return t.total();
    }

    void check_consistency() {
        if (!cfg_.check_consistency) return;
        double full = full_log_posterior();
        if (std::abs(full - lp_) > 1e-8 * std::max(1.0, std::abs(full))) {
            throw NumericalError("tracked log posterior drifted from full recomputation: " +
                                 format_double(lp_) + " vs " + format_double(full));
        }
        lp_ = full;
    }

    // Metropolis accept/adapt shared tail. `delta_post` is the change of the
    // joint log posterior itself; `jacobian` is the log-scale change-of-
    // variables term, which enters the acceptance ratio but not the tracked
    // posterior. `apply` commits the state change.
    template <class Apply>
    void finish(std::size_t u, double delta_post, double jacobian, Apply&& apply) {
        ++proposals_[u];
        double delta_accept = delta_post + jacobian;
        double log_u = std::log(rng_.uniform());
        bool accept = std::isfinite(delta_accept) ? (log_u < delta_accept) : (delta_accept > 0.0);
        if (accept) {
            apply();
            lp_ += delta_post;
            ++accepts_[u];
        }
        if (adapt_gain_ > 0.0) {
            double pa;
            if (std::isnan(delta_accept)) pa = 0.0;
            else if (delta_accept >= 0.0) pa = 1.0;
            else pa = std::exp(std::max(delta_accept, -745.0));
            log_scales_[u] += adapt_gain_ * (pa - cfg_.target_accept);
        }
    }

    template <class Apply>
    void finish(std::size_t u, double delta_post, Apply&& apply) {
        finish(u, delta_post, 0.0, std::forward<Apply>(apply));
    }

    // Rejects a proposal whose transformed value left the double range.
    void reject(std::size_t u) {
        finish(u, -std::numeric_limits<double>::infinity(), [] {});
    }

    static bool positive_finite(double x) { return x > 0.0 && std::isfinite(x); }

    double scale(std::size_t u) const { return std::exp(log_scales_[u]); }

    // Zero-truncated Poisson log likelihood of one customer as a function of
    // the count linear predictor pieces; O(1) in the intercept-only model.
    double count_loglik_intercept(const PreparedCustomer& pc, double d0) const {
        double lambda = std::exp(d0);
        if (!std::isfinite(lambda) || !(lambda > 0.0))
            return -std::numeric_limits<double>::infinity();
        double log_norm = std::log(-std::expm1(-lambda));
        return d0 * pc.sum_n - pc.n_journeys() * (lambda + log_norm);
    }

    double count_loglik_covariate(const PreparedCustomer& pc, double d0, double d1) const {
        double acc = 0.0;
        for (int s = 0; s < pc.n_journeys(); ++s) {
            double eta = d0 + d1 * pc.covariate[s];
            double lambda = std::exp(eta);
            if (!std::isfinite(lambda) || !(lambda > 0.0))
                return -std::numeric_limits<double>::infinity();
            double log_norm = std::log(-std::expm1(-lambda));
            acc += eta * static_cast<double>(pc.n[s]) - lambda - log_norm;
        }
        return acc;
    }

    void sweep(bool adapting) {
        adapt_gain_ = adapting ? adapt_gain_ : 0.0;
        GlobalParams& g = params_.global;
        const int C = prep_.n_customers();
        const double V = priors_.normal_var;

        for (std::size_t u = 0; u < units_.size(); ++u) {
            const UpdateUnit& unit = units_[u];
            double z = rng_.normal();
            switch (unit.kind) {
                case Kind::global_delta: {
                    double x = g.delta, xp = x + scale(u) * z;
                    double var_d = sq(g.sigma_d);
                    double d = log_pdf_normal(xp, 0.0, V) - log_pdf_normal(x, 0.0, V);
                    for (int c = 0; c < C; ++c) {
                        double d0 = params_.per_customer[c].d0;
                        d += log_pdf_normal(d0, xp, var_d) - log_pdf_normal(d0, x, var_d);
                    }
                    finish(u, d, [&] { g.delta = xp; });
                    break;
                }
                case Kind::global_beta: {
                    int k = unit.k;
                    double x = g.beta[k], xp = x + scale(u) * z;
                    double var_b = sq(g.sigma_b[k]);
                    double d = log_pdf_normal(xp, 0.0, V) - log_pdf_normal(x, 0.0, V);
                    for (int c = 0; c < C; ++c) {
                        double b = params_.per_customer[c].b[k];
                        d += log_pdf_normal(b, xp, var_b) - log_pdf_normal(b, x, var_b);
                    }
                    finish(u, d, [&] { g.beta[k] = xp; });
                    break;
                }
                case Kind::global_sigma_d: {
                    double v = std::log(g.sigma_d), vp = v + scale(u) * z;
                    double so = g.sigma_d, sn = std::exp(vp);
                    if (!positive_finite(sn)) {
                        reject(u);
                        break;
                    }
                    double d = log_pdf_half_cauchy(sn, priors_.halfcauchy_scale) -
                               log_pdf_half_cauchy(so, priors_.halfcauchy_scale);
                    for (int c = 0; c < C; ++c) {
                        double d0 = params_.per_customer[c].d0;
                        d += log_pdf_normal(d0, g.delta, sq(sn)) -
                             log_pdf_normal(d0, g.delta, sq(so));
                    }
                    finish(u, d, vp - v, [&] { g.sigma_d = sn; });
                    break;
                }
                case Kind::global_sigma_b: {
                    int k = unit.k;
                    double v = std::log(g.sigma_b[k]), vp = v + scale(u) * z;
                    double so = g.sigma_b[k], sn = std::exp(vp);
                    if (!positive_finite(sn)) {
                        reject(u);
                        break;
                    }
                    double d = log_pdf_half_cauchy(sn, priors_.halfcauchy_scale) -
                               log_pdf_half_cauchy(so, priors_.halfcauchy_scale);
                    for (int c = 0; c < C; ++c) {
                        double b = params_.per_customer[c].b[k];
                        d += log_pdf_normal(b, g.beta[k], sq(sn)) -
                             log_pdf_normal(b, g.beta[k], sq(so));
                    }
                    finish(u, d, vp - v, [&] { g.sigma_b[k] = sn; });
                    break;
                }
                case Kind::global_sigma_p: {
                    double v = std::log(g.sigma_p), vp = v + scale(u) * z;
                    double so = g.sigma_p, sn = std::exp(vp);
                    if (!positive_finite(sn)) {
                        reject(u);
                        break;
                    }
                    double d = log_pdf_half_cauchy(sn, priors_.halfcauchy_scale) -
                               log_pdf_half_cauchy(so, priors_.halfcauchy_scale);
                    double vo = sq(so), vn = sq(sn);
                    for (int c = 0; c < C; ++c) {
                        double phi = params_.per_customer[c].phi;
                        for (double p : params_.per_session[c].p) {
                            d += log_pdf_normal(p, phi, vn) - log_pdf_normal(p, phi, vo);
                        }
                    }
                    finish(u, d, vp - v, [&] { g.sigma_p = sn; });
                    break;
                }
                case Kind::global_delta1: {
                    double x = g.delta1, xp = x + scale(u) * z;
                    double var_d = sq(g.sigma_d1);
                    double d = log_pdf_normal(xp, 0.0, V) - log_pdf_normal(x, 0.0, V);
                    for (int c = 0; c < C; ++c) {
                        double d1 = params_.per_customer[c].d1;
                        d += log_pdf_normal(d1, xp, var_d) - log_pdf_normal(d1, x, var_d);
                    }
                    finish(u, d, [&] { g.delta1 = xp; });
                    break;
                }
                case Kind::global_sigma_d1: {
                    double v = std::log(g.sigma_d1), vp = v + scale(u) * z;
                    double so = g.sigma_d1, sn = std::exp(vp);
                    if (!positive_finite(sn)) {
                        reject(u);
                        break;
                    }
                    double d = log_pdf_half_cauchy(sn, priors_.halfcauchy_scale) -
                               log_pdf_half_cauchy(so, priors_.halfcauchy_scale);
                    for (int c = 0; c < C; ++c) {
                        double d1 = params_.per_customer[c].d1;
                        d += log_pdf_normal(d1, g.delta1, sq(sn)) -
                             log_pdf_normal(d1, g.delta1, sq(so));
                    }
                    finish(u, d, vp - v, [&] { g.sigma_d1 = sn; });
                    break;
                }
                case Kind::cust_d0: {
                    int c = unit.c;
                    const PreparedCustomer& pc = prep_.customers[c];
                    CustomerParams& cp = params_.per_customer[c];
                    double x = cp.d0, xp = x + scale(u) * z;
                    double d = log_pdf_normal(xp, g.delta, sq(g.sigma_d)) -
                               log_pdf_normal(x, g.delta, sq(g.sigma_d));
                    if (lik_on_) {
                        d += covariate_ ? count_loglik_covariate(pc, xp, cp.d1) -
                                              count_loglik_covariate(pc, x, cp.d1)
                                        : count_loglik_intercept(pc, xp) -
                                              count_loglik_intercept(pc, x);
                    }
                    finish(u, d, [&] { cp.d0 = xp; });
                    break;
                }
                case Kind::cust_d1: {
                    int c = unit.c;
                    const PreparedCustomer& pc = prep_.customers[c];
                    CustomerParams& cp = params_.per_customer[c];
                    double x = cp.d1, xp = x + scale(u) * z;
                    double d = log_pdf_normal(xp, g.delta1, sq(g.sigma_d1)) -
                               log_pdf_normal(x, g.delta1, sq(g.sigma_d1));
                    if (lik_on_) {
                        d += count_loglik_covariate(pc, cp.d0, xp) -
                             count_loglik_covariate(pc, cp.d0, x);
                    }
                    finish(u, d, [&] { cp.d1 = xp; });
                    break;
                }
                case Kind::cust_b: {
                    int c = unit.c;
                    int k = unit.k;
                    const PreparedCustomer& pc = prep_.customers[c];
                    CustomerParams& cp = params_.per_customer[c];
                    double x = cp.b[k], xp = x + scale(u) * z;
                    double d = log_pdf_normal(xp, g.beta[k], sq(g.sigma_b[k])) -
                               log_pdf_normal(x, g.beta[k], sq(g.sigma_b[k]));
                    const auto& idx = pc.ev_by_genre[k];
                    if (lik_on_ && !idx.empty()) {
                        const double psi = cp.psi;
                        double acc = 0.0;
                        for (std::size_t i = 0; i < idx.size(); ++i) {
                            int e = idx[i];
                            double lm = clip_log_mean(xp + ar_slope(c, pc.ev_journey[e]) *
                                                               pc.ev_tprev[e]);
                            double mi = std::exp(-lm);
                            scratch_log_mu_[i] = lm;
                            scratch_mu_inv_[i] = mi;
                            acc += -psi * (lm - cur_log_mu_[c][e]) -
                                   psi * pc.ev_t[e] * (mi - cur_mu_inv_[c][e]);
                        }
                        d += acc;
                        finish(u, d, [&] {
                            cp.b[k] = xp;
                            for (std::size_t i = 0; i < idx.size(); ++i) {
                                cur_log_mu_[c][idx[i]] = scratch_log_mu_[i];
                                cur_mu_inv_[c][idx[i]] = scratch_mu_inv_[i];
                            }
                        });
                    } else {
                        finish(u, d, [&] { cp.b[k] = xp; });
                    }
                    break;
                }
                case Kind::cust_phi: {
                    int c = unit.c;
                    const PreparedCustomer& pc = prep_.customers[c];
                    CustomerParams& cp = params_.per_customer[c];
                    double x = cp.phi, xp = x + scale(u) * z;
                    double d = log_pdf_normal(xp, 0.0, V) - log_pdf_normal(x, 0.0, V);
                    if (!customer_ar_) {
                        double var_p = sq(g.sigma_p);
                        for (double p : params_.per_session[c].p) {
                            d += log_pdf_normal(p, xp, var_p) - log_pdf_normal(p, x, var_p);
                        }
                        finish(u, d, [&] { cp.phi = xp; });
                    } else {
                        // phi IS the AR slope; the whole gamma likelihood of
                        // the customer moves with it.
                        const double psi = cp.psi;
                        const int E = pc.n_event_terms();
                        if (lik_on_ && E > 0) {
                            double acc = 0.0;
                            for (int e = 0; e < E; ++e) {
                                double lm = clip_log_mean(cp.b[pc.ev_genre[e]] +
                                                          xp * pc.ev_tprev[e]);
                                double mi = std::exp(-lm);
                                scratch_log_mu_[e] = lm;
                                scratch_mu_inv_[e] = mi;
                                acc += -psi * (lm - cur_log_mu_[c][e]) -
                                       psi * pc.ev_t[e] * (mi - cur_mu_inv_[c][e]);
                            }
                            d += acc;
                        }
                        finish(u, d, [&] {
                            cp.phi = xp;
                            if (lik_on_ && E > 0) {
                                std::copy_n(scratch_log_mu_.begin(), E, cur_log_mu_[c].begin());
                                std::copy_n(scratch_mu_inv_.begin(), E, cur_mu_inv_[c].begin());
                            }
                        });
                    }
                    break;
                }
                case Kind::cust_psi: {
                    int c = unit.c;
                    const PreparedCustomer& pc = prep_.customers[c];
                    CustomerParams& cp = params_.per_customer[c];
                    double w = std::log(cp.psi), wp = w + scale(u) * z;
                    double po = cp.psi, pn = std::exp(wp);
                    if (!positive_finite(pn)) {
                        reject(u);
                        break;
                    }
                    double d = log_pdf_gamma_shape_rate(pn, priors_.psi_shape, priors_.psi_rate) -
                               log_pdf_gamma_shape_rate(po, priors_.psi_shape, priors_.psi_rate);
                    const int E = pc.n_event_terms();
                    if (lik_on_ && E > 0) {
                        double s_logmu = 0.0, s_tmu = 0.0;
                        for (int e = 0; e < E; ++e) {
                            s_logmu += cur_log_mu_[c][e];
                            s_tmu += pc.ev_t[e] * cur_mu_inv_[c][e];
                        }
                        auto gamma_ll = [&](double ps) {
                            return E * (ps * std::log(ps) - std::lgamma(ps)) - ps * s_logmu +
                                   (ps - 1.0) * pc.sum_ev_log_t - ps * s_tmu;
                        };
                        d += gamma_ll(pn) - gamma_ll(po);
                    }
                    finish(u, d, wp - w, [&] { cp.psi = pn; });
                    break;
                }
                case Kind::sess_p: {
                    int c = unit.c;
                    int s = unit.s;
                    const PreparedCustomer& pc = prep_.customers[c];
                    CustomerParams& cp = params_.per_customer[c];
                    double x = params_.per_session[c].p[s], xp = x + scale(u) * z;
                    double var_p = sq(g.sigma_p);
                    double d = log_pdf_normal(xp, cp.phi, var_p) - log_pdf_normal(x, cp.phi, var_p);
                    const int begin = pc.ev_range[s].first;
                    const int end = pc.ev_range[s].second;
                    if (lik_on_ && begin < end) {
                        const double psi = cp.psi;
                        double acc = 0.0;
                        for (int e = begin; e < end; ++e) {
                            double lm = clip_log_mean(cp.b[pc.ev_genre[e]] + xp * pc.ev_tprev[e]);
                            double mi = std::exp(-lm);
                            scratch_log_mu_[e - begin] = lm;
                            scratch_mu_inv_[e - begin] = mi;
                            acc += -psi * (lm - cur_log_mu_[c][e]) -
                                   psi * pc.ev_t[e] * (mi - cur_mu_inv_[c][e]);
                        }
                        d += acc;
                        finish(u, d, [&] {
                            params_.per_session[c].p[s] = xp;
                            for (int e = begin; e < end; ++e) {
                                cur_log_mu_[c][e] = scratch_log_mu_[e - begin];
                                cur_mu_inv_[c][e] = scratch_mu_inv_[e - begin];
                            }
                        });
                    } else {
                        finish(u, d, [&] { params_.per_session[c].p[s] = xp; });
                    }
                    break;
                }
            }
        }
    }
};

}  // namespace

ChainDraws run_mcmc(const PreparedData& prep, const PriorConfig& priors,
                    const McmcConfig& config) {
    config.validate();
    if (prep.customers.empty()) throw DataError("run_mcmc: empty dataset");

    ChainDraws draws;
    draws.registry = build_registry(prep);
    draws.config = config;
    for (const auto& pc : prep.customers) draws.customer_ids.push_back(pc.id);
    draws.chains.resize(config.n_chains);
    draws.log_posterior.resize(config.n_chains);
    draws.acceptance.resize(config.n_chains);

    const std::vector<UpdateUnit> units = build_units(prep);
    if (static_cast<int>(units.size()) != draws.registry.size())
        throw NumericalError("internal: update units and registry disagree");
    const HierarchicalParams init = initial_params(prep);

    int hw = static_cast<int>(std::thread::hardware_concurrency());
    if (hw < 1) hw = 1;
    int n_threads = config.threads > 0 ? config.threads : std::min(config.n_chains, hw);
    n_threads = std::min(n_threads, config.n_chains);

    std::atomic<int> next_chain{0};
    std::vector<std::exception_ptr> errors(config.n_chains);
    auto worker = [&]() {
        while (true) {
            int chain = next_chain.fetch_add(1);
            if (chain >= config.n_chains) break;
            try {
                ChainState state(prep, priors, config, units, init,
                                 derive_seed(config.seed, static_cast<std::uint64_t>(chain)));
                std::vector<AcceptanceRecord> accept;
                state.run(draws.chains[chain], draws.log_posterior[chain], accept);
                for (std::size_t u = 0; u < accept.size(); ++u) {
                    accept[u].name = draws.registry.names[u];
                }
                draws.acceptance[chain] = std::move(accept);
            } catch (...) {
                errors[chain] = std::current_exception();
            }
        }
    };
    if (n_threads == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(n_threads);
        for (int i = 0; i < n_threads; ++i) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    for (const auto& err : errors) {
        if (err) std::rethrow_exception(err);
    }
    return draws;
}

ChainDraws run_mcmc(const Dataset& data, const PriorConfig& priors, const McmcConfig& config) {
    return run_mcmc(prepare_data(data, config.model), priors, config);
}

int ChainDraws::n_retained() const {
    if (chains.empty() || registry.size() == 0) return 0;
    return static_cast<int>(chains[0].size()) / registry.size();
}

double ChainDraws::value(int chain, int draw, int param) const {
    return chains[chain][static_cast<std::size_t>(draw) * registry.size() + param];
}

std::vector<std::vector<double>> ChainDraws::column(const std::string& name) const {
    int p = registry.index_of(name);
    std::vector<std::vector<double>> out(chains.size());
    for (std::size_t c = 0; c < chains.size(); ++c) {
        int n = static_cast<int>(chains[c].size()) / registry.size();
        out[c].reserve(n);
        for (int d = 0; d < n; ++d) out[c].push_back(value(static_cast<int>(c), d, p));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Convergence diagnostics.

namespace {

struct SplitStats {
    int m = 0;        // number of split chains
    int n = 0;        // length of each split chain
    double w = 0.0;   // mean within-chain variance
    double var_plus = 0.0;
    std::vector<std::vector<double>> splits;
};

SplitStats split_stats(const std::vector<std::vector<double>>& chains) {
    if (chains.size() < 2) throw std::invalid_argument("need >= 2 chains");
    std::size_t len = chains[0].size();
    for (const auto& ch : chains) {
        if (ch.size() != len) throw std::invalid_argument("chains must have equal length");
    }
    if (len < 4) throw std::invalid_argument("need >= 4 draws per chain");

    SplitStats st;
    st.n = static_cast<int>(len / 2);
    for (const auto& ch : chains) {
        st.splits.emplace_back(ch.begin(), ch.begin() + st.n);
        st.splits.emplace_back(ch.end() - st.n, ch.end());
    }
    st.m = static_cast<int>(st.splits.size());

    std::vector<double> means(st.m);
    double grand = 0.0;
    for (int j = 0; j < st.m; ++j) {
        double sum = 0.0;
        for (double x : st.splits[j]) sum += x;
        means[j] = sum / st.n;
        grand += means[j];
    }
    grand /= st.m;

    double w = 0.0;
    for (int j = 0; j < st.m; ++j) {
        double acc = 0.0;
        for (double x : st.splits[j]) acc += sq(x - means[j]);
        w += acc / (st.n - 1);
    }
    w /= st.m;

    double b_over_n = 0.0;
    for (int j = 0; j < st.m; ++j) b_over_n += sq(means[j] - grand);
    b_over_n /= (st.m - 1);

    st.w = w;
    st.var_plus = (st.n - 1.0) / st.n * w + b_over_n;
    return st;
}

}  // namespace

double split_rhat(const std::vector<std::vector<double>>& chains) {
    SplitStats st = split_stats(chains);
    if (!(st.w > 0.0)) return kNaN;  // all split chains constant
    return std::sqrt(st.var_plus / st.w);
}

double rhat(const ChainDraws& draws, const std::string& name) {
    return split_rhat(draws.column(name));
}

double ess_from_chains(const std::vector<std::vector<double>>& chains) {
    SplitStats st = split_stats(chains);
    if (!(st.var_plus > 0.0)) return kNaN;
    const int m = st.m;
    const int n = st.n;
    const double total = static_cast<double>(m) * n;

    // Variogram autocorrelation estimate, rho_t = 1 - V_t / (2 var+).
    auto rho_at = [&](int t) {
        double vt = 0.0;
        for (int j = 0; j < m; ++j) {
            const auto& ch = st.splits[j];
            double acc = 0.0;
            for (int i = 0; i + t < n; ++i) acc += sq(ch[i] - ch[i + t]);
            vt += acc / (n - t);
        }
        vt /= m;
        return 1.0 - vt / (2.0 * st.var_plus);
    };

    // Geyer initial monotone positive sequence over lag pairs.
    double tau = 0.0;
    double prev_pair = std::numeric_limits<double>::infinity();
    int max_lag = n - 1;
    for (int t = 0; t + 1 <= max_lag; t += 2) {
        double pair = (t == 0 ? 1.0 : rho_at(t)) + rho_at(t + 1);
        if (t > 0 && pair <= 0.0) break;
        pair = std::min(pair, prev_pair);
        prev_pair = pair;
        tau += 2.0 * pair;
        if (pair <= 0.0) break;
    }
    tau -= 1.0;

    double cap = 1.25 * total;
    if (!(tau > 0.0)) return cap;
    return std::min(total / tau, cap);
}

double ess(const ChainDraws& draws, const std::string& name) {
    return ess_from_chains(draws.column(name));
}

double quantile_type7(std::vector<double> values, double p) {
    if (values.empty()) throw std::invalid_argument("quantile of empty vector");
    std::sort(values.begin(), values.end());
    if (values.size() == 1) return values[0];
    double h = (static_cast<double>(values.size()) - 1.0) * p;
    double lo = std::floor(h);
    std::size_t i = static_cast<std::size_t>(lo);
    if (i + 1 >= values.size()) return values.back();
    return values[i] + (h - lo) * (values[i + 1] - values[i]);
}

PosteriorSummary summarize(const ChainDraws& draws) {
    if (draws.n_retained() == 0) throw DataError("summarize: no retained draws");
    PosteriorSummary summary;
    const int P = draws.n_params();
    const int R = draws.n_retained();
    const int M = draws.n_chains();
    std::vector<double> pooled;
    pooled.reserve(static_cast<std::size_t>(R) * M);
    for (int p = 0; p < P; ++p) {
        pooled.clear();
        for (int c = 0; c < M; ++c) {
            for (int d = 0; d < R; ++d) pooled.push_back(draws.value(c, d, p));
        }
        ParamSummary row;
        row.name = draws.registry.names[p];
        double mean = 0.0;
        for (double x : pooled) mean += x;
        mean /= pooled.size();
        double var = 0.0;
        for (double x : pooled) var += sq(x - mean);
        var = pooled.size() > 1 ? var / (pooled.size() - 1) : 0.0;
        row.mean = mean;
        row.sd = std::sqrt(var);
        row.q025 = quantile_type7(pooled, 0.025);
        row.median = quantile_type7(pooled, 0.5);
        row.q975 = quantile_type7(pooled, 0.975);
        if (M >= 2 && R >= 4) {
            auto cols = draws.column(row.name);
            row.rhat = split_rhat(cols);
            row.ess = ess_from_chains(cols);
        } else {
            row.rhat = kNaN;
            row.ess = kNaN;
        }
        summary.by_name.emplace(row.name, static_cast<int>(summary.rows.size()));
        summary.rows.push_back(std::move(row));
    }
    return summary;
}

const ParamSummary& PosteriorSummary::at(const std::string& name) const {
    auto it = by_name.find(name);
    if (it == by_name.end()) throw std::invalid_argument("summary has no parameter '" + name + "'");
    return rows[it->second];
}

// ---------------------------------------------------------------------------
// Persistence.

void write_draws(const ChainDraws& draws, const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    const int P = draws.n_params();
    for (int c = 0; c < draws.n_chains(); ++c) {
        std::string path = dir + "/chain_" + std::to_string(c + 1) + ".tsv";
        std::ofstream out(path, std::ios::binary);
        if (!out) throw DataError("cannot write " + path);
        std::string buf = "iteration";
        for (const auto& name : draws.registry.names) {
            buf += '\t';
            buf += name;
        }
        buf += "\tlp__\n";
        const int R = static_cast<int>(draws.chains[c].size()) / P;
        for (int d = 0; d < R; ++d) {
            buf += std::to_string((d + 1) * draws.config.thin);
            for (int p = 0; p < P; ++p) {
                buf += '\t';
                buf += format_double(draws.value(c, d, p));
            }
            buf += '\t';
            buf += format_double(draws.log_posterior[c][d]);
            buf += '\n';
            if (buf.size() > (1u << 20)) {
                out << buf;
                buf.clear();
            }
        }
        out << buf;
        if (!out) throw DataError("write failed: " + path);

        std::string apath = dir + "/acceptance_chain_" + std::to_string(c + 1) + ".tsv";
        std::ofstream aout(apath, std::ios::binary);
        if (!aout) throw DataError("cannot write " + apath);
        aout << "parameter\tproposals\taccepts\trate\tproposal_sd\n";
        for (const auto& rec : draws.acceptance[c]) {
            aout << rec.name << '\t' << rec.proposals << '\t' << rec.accepts << '\t'
                 << format_double(rec.rate()) << '\t' << format_double(rec.scale) << '\n';
        }
    }

    nlohmann::ordered_json meta;
    meta["n_chains"] = draws.n_chains();
    meta["n_retained"] = draws.n_retained();
    meta["param_names"] = draws.registry.names;
    meta["customer_ids"] = draws.customer_ids;
    nlohmann::ordered_json cfg;
    cfg["n_adapt"] = draws.config.n_adapt;
    cfg["n_burnin"] = draws.config.n_burnin;
    cfg["n_iter"] = draws.config.n_iter;
    cfg["thin"] = draws.config.thin;
    cfg["n_chains"] = draws.config.n_chains;
    cfg["seed"] = draws.config.seed;
    cfg["target_accept"] = draws.config.target_accept;
    cfg["likelihood_off"] = draws.config.likelihood_off;
    cfg["customer_level_ar"] = draws.config.model.customer_level_ar;
    cfg["count_covariate"] =
        draws.config.model.covariate_on() ? "journey_index" : "none";
    meta["config"] = std::move(cfg);
    write_text_file(dir + "/meta.json", meta.dump(2) + "\n");
}

ChainDraws load_draws(const std::string& dir) {
    nlohmann::json meta;
    try {
        meta = nlohmann::json::parse(read_text_file(dir + "/meta.json"));
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("draws meta.json: ") + e.what());
    }
    ChainDraws draws;
    for (const auto& n : meta.at("param_names")) {
        std::string name = n.get<std::string>();
        draws.registry.by_name.emplace(name, static_cast<int>(draws.registry.names.size()));
        draws.registry.names.push_back(std::move(name));
    }
    for (const auto& id : meta.at("customer_ids"))
        draws.customer_ids.push_back(id.get<std::string>());
    const auto& cfg = meta.at("config");
    draws.config.n_adapt = cfg.value("n_adapt", 0);
    draws.config.n_burnin = cfg.value("n_burnin", 0);
    draws.config.n_iter = cfg.value("n_iter", 1);
    draws.config.thin = cfg.value("thin", 1);
    draws.config.n_chains = cfg.value("n_chains", 1);
    draws.config.seed = cfg.value("seed", 0ULL);
    draws.config.target_accept = cfg.value("target_accept", 0.44);
    draws.config.likelihood_off = cfg.value("likelihood_off", false);
    draws.config.model.customer_level_ar = cfg.value("customer_level_ar", false);
    if (cfg.value("count_covariate", "none") == std::string("journey_index"))
        draws.config.model.count_covariate = ModelConfig::CountCovariate::journey_index;

    int n_chains = meta.at("n_chains").get<int>();
    const int P = draws.registry.size();
    for (int c = 0; c < n_chains; ++c) {
        std::string path = dir + "/chain_" + std::to_string(c + 1) + ".tsv";
        std::ifstream in(path, std::ios::binary);
        if (!in) throw DataError("cannot open " + path);
        std::string line;
        if (!std::getline(in, line)) throw DataError("empty draws file " + path);
        auto header = split_view(line, '\t');
        if (static_cast<int>(header.size()) != P + 2)
            throw DataError("draws header mismatch in " + path);
        for (int p = 0; p < P; ++p) {
            if (header[p + 1] != draws.registry.names[p])
                throw DataError("draws column mismatch in " + path);
        }
        std::vector<double> mat;
        std::vector<double> lp;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            auto fields = split_view(line, '\t');
            if (static_cast<int>(fields.size()) != P + 2)
                throw DataError("draws row width mismatch in " + path);
            for (int p = 0; p < P; ++p) mat.push_back(parse_double(fields[p + 1], path));
            lp.push_back(parse_double(fields[P + 1], path));
        }
        draws.chains.push_back(std::move(mat));
        draws.log_posterior.push_back(std::move(lp));
    }
    draws.acceptance.resize(n_chains);
    return draws;
}

void write_summary_tsv(const PosteriorSummary& summary, const std::string& path) {
    std::string buf = "parameter\tmean\tsd\tq2.5\tmedian\tq97.5\trhat\tess\n";
    for (const auto& row : summary.rows) {
        buf += row.name;
        buf += '\t';
        buf += format_double(row.mean);
        buf += '\t';
        buf += format_double(row.sd);
        buf += '\t';
        buf += format_double(row.q025);
        buf += '\t';
        buf += format_double(row.median);
        buf += '\t';
        buf += format_double(row.q975);
        buf += '\t';
        buf += format_double(row.rhat);
        buf += '\t';
        buf += format_double(row.ess);
        buf += '\n';
    }
    write_text_file(path, buf);
}

PosteriorSummary load_summary_tsv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open summary: " + path);
    PosteriorSummary summary;
    std::string line;
    if (!std::getline(in, line)) throw DataError("empty summary: " + path);
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto fields = split_view(line, '\t');
        if (fields.size() != 8) throw DataError("summary row width mismatch in " + path);
        ParamSummary row;
        row.name = std::string(fields[0]);
        row.mean = parse_double(fields[1], path);
        row.sd = parse_double(fields[2], path);
        row.q025 = parse_double(fields[3], path);
        row.median = parse_double(fields[4], path);
        row.q975 = parse_double(fields[5], path);
        row.rhat = parse_double(fields[6], path);
        row.ess = parse_double(fields[7], path);
        summary.by_name.emplace(row.name, static_cast<int>(summary.rows.size()));
        summary.rows.push_back(std::move(row));
    }
    return summary;
}

std::string render_summary_report(const PosteriorSummary& summary,
                                  const std::vector<std::string>& names) {
    char est[64];
    char buf[160];
    std::string out;
    out += "Parameter      Estimate (sd)        95% credible interval\n";
    out += "---------      -------------        ---------------------\n";
    for (const auto& name : names) {
        if (!summary.contains(name)) continue;
        const ParamSummary& row = summary.at(name);
        std::snprintf(est, sizeof(est), "%.2f (%.2f)", row.mean, row.sd);
        std::snprintf(buf, sizeof(buf), "%-14s %-20s [%.2f, %.2f]\n", name.c_str(), est,
                      row.q025, row.q975);
        out += buf;
    }
    out += "(sd = posterior standard deviation; interval bounds are type-7 interpolated "
           "quantiles)\n";
    return out;
}

}  // namespace churnprof
