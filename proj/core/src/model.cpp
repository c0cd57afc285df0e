#include "churnprof/model.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

#include "churnprof/common.hpp"

namespace churnprof {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kLogTwoPi = 1.8378770664093454836;  // log(2*pi)
}  // namespace

double log_pmf_ztpois(long long n, double lambda) {
    if (!(lambda > 0.0)) throw std::domain_error("log_pmf_ztpois: lambda must be > 0");
    if (n < 0) throw std::domain_error("log_pmf_ztpois: n must be >= 0");
    if (n == 0) return kNegInf;
    if (!std::isfinite(lambda)) return kNegInf;
    // log(1 - e^-lambda) via expm1 keeps small lambdas accurate.
    double log_norm = std::log(-std::expm1(-lambda));
    return static_cast<double>(n) * std::log(lambda) - lambda -
           std::lgamma(static_cast<double>(n) + 1.0) - log_norm;
}

double log_pdf_gamma_mean_disp(double t, double mu, double psi) {
    if (!(t > 0.0) || !(mu > 0.0) || !(psi > 0.0))
        throw std::domain_error("log_pdf_gamma_mean_disp: t, mu, psi must be > 0");
    // shape = psi, rate = psi/mu
    return psi * (std::log(psi) - std::log(mu)) - std::lgamma(psi) +
           (psi - 1.0) * std::log(t) - psi * t / mu;
}

double log_pdf_normal(double x, double mean, double var) {
    if (!(var > 0.0)) throw std::domain_error("log_pdf_normal: var must be > 0");
    double d = x - mean;
    return -0.5 * (kLogTwoPi + std::log(var)) - d * d / (2.0 * var);
}

double log_pdf_gamma_shape_rate(double x, double shape, double rate) {
    if (!(x > 0.0) || !(shape > 0.0) || !(rate > 0.0))
        throw std::domain_error("log_pdf_gamma_shape_rate: arguments must be > 0");
    return shape * std::log(rate) - std::lgamma(shape) + (shape - 1.0) * std::log(x) - rate * x;
}

double log_pdf_half_cauchy(double x, double scale) {
    if (!(scale > 0.0)) throw std::domain_error("log_pdf_half_cauchy: scale must be > 0");
    if (!(x > 0.0)) return kNegInf;
    double z = x / scale;
    return std::log(2.0) - std::log(std::numbers::pi) - std::log(scale) - std::log1p(z * z);
}

double ztpois_mean(double lambda) {
    if (!(lambda > 0.0)) throw std::domain_error("ztpois_mean: lambda must be > 0");
    return lambda / -std::expm1(-lambda);
}

double count_covariate_value(const ModelConfig& config, int journey_index, int n_journeys) {
    switch (config.count_covariate) {
        case ModelConfig::CountCovariate::none:
            return 0.0;
        case ModelConfig::CountCovariate::journey_index: {
            // Journey ordinal standardized within customer.
            if (n_journeys <= 1) return 0.0;
            double mean = (n_journeys + 1) / 2.0;
            double var = 0.0;
            for (int s = 1; s <= n_journeys; ++s) var += (s - mean) * (s - mean);
            var /= (n_journeys - 1);
            return (journey_index - mean) / std::sqrt(var);
        }
    }
    return 0.0;
}

LinearPredictors linear_predictors(const Journey& journey, const CustomerParams& cp,
                                   double p_sc, const ModelConfig& config) {
    LinearPredictors out;
    double eta_count = cp.d0;
    if (config.covariate_on()) {
        // A lone journey standardizes its own ordinal to 0; the full-dataset
        // covariate comes through joint_log_posterior.
        eta_count += cp.d1 * count_covariate_value(config, journey.journey_index, 1);
    }
    out.lambda = std::exp(eta_count);
    // Gap i follows event i and carries its genre; gap 1 is conditioned on,
    // gaps 2..n-1 get means b[genre_i] + p * t_{i-1}.
    const int n_gaps = static_cast<int>(journey.gaps.size());
    const int k_max = static_cast<int>(cp.b.size());
    out.mu.reserve(n_gaps > 1 ? n_gaps - 1 : 0);
    for (int k = 1; k < n_gaps; ++k) {
        int genre = journey.genres[k];
        if (genre < 1 || genre > k_max)
            throw std::domain_error("linear_predictors: genre out of range for event " +
                                    std::to_string(k + 1));
        double log_mu = clip_log_mean(cp.b[genre - 1] + p_sc * journey.gaps[k - 1]);
        out.mu.push_back(std::exp(log_mu));
    }
    return out;
}

PreparedData prepare_data(const Dataset& data, const ModelConfig& config) {
    data.validate();
    PreparedData prep;
    prep.n_genres = data.n_genres;
    prep.config = config;
    prep.customers.reserve(data.customers.size());
    for (const auto& c : data.customers) {
        if (c.journeys.empty())
            throw DataError("customer " + c.id + " has zero journeys");
        PreparedCustomer pc;
        pc.id = c.id;
        pc.label = c.label;
        int n_journeys = static_cast<int>(c.journeys.size());
        pc.ev_by_genre.resize(data.n_genres);
        for (int s = 0; s < n_journeys; ++s) {
            const Journey& j = c.journeys[s];
            long long n = j.event_count();
            pc.n.push_back(n);
            double lg = std::lgamma(static_cast<double>(n) + 1.0);
            pc.lgamma_n1.push_back(lg);
            pc.sum_n += static_cast<double>(n);
            pc.sum_lgamma_n1 += lg;
            pc.covariate.push_back(count_covariate_value(config, j.journey_index, n_journeys));

            // Gamma terms: gap k (0-based, k >= 1) with genre of event k and
            // the previous gap as AR input. Gap 0 is conditioned on. A journey
            // with an unknown genre on any modelled gap is excluded from the
            // gamma likelihood but keeps its count contribution.
            int begin = pc.n_event_terms();
            const int n_gaps = static_cast<int>(j.gaps.size());
            bool eligible = true;
            for (int k = 1; k < n_gaps; ++k) {
                if (j.genres[k] < 1 || j.genres[k] > data.n_genres) {
                    eligible = false;
                    break;
                }
            }
            if (eligible) {
                for (int k = 1; k < n_gaps; ++k) {
                    pc.ev_genre.push_back(j.genres[k] - 1);
                    pc.ev_t.push_back(j.gaps[k]);
                    pc.ev_log_t.push_back(std::log(j.gaps[k]));
                    pc.ev_tprev.push_back(j.gaps[k - 1]);
                    pc.ev_journey.push_back(s);
                }
            } else if (n_gaps > 1) {
                ++prep.gamma_excluded_journeys;
            }
            pc.ev_range.emplace_back(begin, pc.n_event_terms());
        }
        prep.customers.push_back(std::move(pc));
    }
    // Populate by-genre indices and the static log-gap sums.
    for (auto& pc : prep.customers) {
        for (int e = 0; e < pc.n_event_terms(); ++e) {
            pc.ev_by_genre[pc.ev_genre[e]].push_back(e);
            pc.sum_ev_log_t += pc.ev_log_t[e];
        }
    }
    return prep;
}

HierarchicalParams make_params_shape(const PreparedData& prep) {
    HierarchicalParams params;
    params.global.beta.assign(prep.n_genres, 0.0);
    params.global.sigma_b.assign(prep.n_genres, 1.0);
    params.per_customer.resize(prep.customers.size());
    params.per_session.resize(prep.customers.size());
    for (std::size_t c = 0; c < prep.customers.size(); ++c) {
        params.per_customer[c].b.assign(prep.n_genres, 0.0);
        params.per_session[c].p.assign(prep.customers[c].n_journeys(), 0.0);
    }
    return params;
}

namespace {

void check_alignment(const PreparedData& prep, const HierarchicalParams& params) {
    if (params.per_customer.size() != prep.customers.size() ||
        params.per_session.size() != prep.customers.size())
        throw std::invalid_argument("params/customer count mismatch");
    if (static_cast<int>(params.global.beta.size()) != prep.n_genres ||
        static_cast<int>(params.global.sigma_b.size()) != prep.n_genres)
        throw std::invalid_argument("global beta/sigma_b length mismatch");
    for (std::size_t c = 0; c < prep.customers.size(); ++c) {
        if (static_cast<int>(params.per_customer[c].b.size()) != prep.n_genres)
            throw std::invalid_argument("customer b length mismatch");
        if (static_cast<int>(params.per_session[c].p.size()) != prep.customers[c].n_journeys())
            throw std::invalid_argument("session p length mismatch");
    }
}

}  // namespace

LogPosteriorTerms joint_log_posterior_terms(const PreparedData& prep,
                                            const HierarchicalParams& params,
                                            const PriorConfig& priors) {
    check_alignment(prep, params);
    const bool covariate = prep.config.covariate_on();
    const bool customer_ar = prep.config.customer_level_ar;
    const GlobalParams& g = params.global;
    LogPosteriorTerms terms;

    for (std::size_t c = 0; c < prep.customers.size(); ++c) {
        const PreparedCustomer& pc = prep.customers[c];
        const CustomerParams& cp = params.per_customer[c];
        const SessionParams& sp = params.per_session[c];

        // Count likelihood.
        if (!covariate) {
            double lambda = std::exp(cp.d0);
            if (!(lambda > 0.0) || !std::isfinite(lambda)) {
                terms.count_loglik = kNegInf;
            } else {
                double log_norm = std::log(-std::expm1(-lambda));
                terms.count_loglik += cp.d0 * pc.sum_n - pc.n_journeys() * (lambda + log_norm) -
                                      pc.sum_lgamma_n1;
            }
        } else {
            for (int s = 0; s < pc.n_journeys(); ++s) {
                double lambda = std::exp(cp.d0 + cp.d1 * pc.covariate[s]);
                terms.count_loglik += log_pmf_ztpois(pc.n[s], lambda);
            }
        }

        // Gamma likelihood over eligible event terms.
        double psi = cp.psi;
        if (!(psi > 0.0)) {
            terms.gamma_loglik = kNegInf;
        } else {
            const double log_psi = std::log(psi);
            const double lg_psi = std::lgamma(psi);
            double acc = 0.0;
            for (int e = 0; e < pc.n_event_terms(); ++e) {
                double p = customer_ar ? cp.phi : sp.p[pc.ev_journey[e]];
                double log_mu = clip_log_mean(cp.b[pc.ev_genre[e]] + p * pc.ev_tprev[e]);
                acc += psi * (log_psi - log_mu) - lg_psi + (psi - 1.0) * pc.ev_log_t[e] -
                       psi * pc.ev_t[e] * std::exp(-log_mu);
            }
            terms.gamma_loglik += acc;
        }

        // Session slope densities.
        if (!customer_ar) {
            double var_p = g.sigma_p * g.sigma_p;
            for (double p : sp.p) terms.session_slope_density += log_pdf_normal(p, cp.phi, var_p);
        }

        // Customer-level priors.
        terms.customer_priors += log_pdf_normal(cp.d0, g.delta, g.sigma_d * g.sigma_d);
        for (int k = 0; k < prep.n_genres; ++k) {
            terms.customer_priors +=
                log_pdf_normal(cp.b[k], g.beta[k], g.sigma_b[k] * g.sigma_b[k]);
        }
        terms.customer_priors += log_pdf_normal(cp.phi, 0.0, priors.normal_var);
        if (cp.psi > 0.0) {
            terms.customer_priors +=
                log_pdf_gamma_shape_rate(cp.psi, priors.psi_shape, priors.psi_rate);
        } else {
            terms.customer_priors = kNegInf;
        }
        if (covariate) {
            terms.customer_priors += log_pdf_normal(cp.d1, g.delta1, g.sigma_d1 * g.sigma_d1);
        }
    }

    // Hyperpriors.
    terms.global_priors += log_pdf_normal(g.delta, 0.0, priors.normal_var);
    for (int k = 0; k < prep.n_genres; ++k)
        terms.global_priors += log_pdf_normal(g.beta[k], 0.0, priors.normal_var);
    terms.global_priors += log_pdf_half_cauchy(g.sigma_d, priors.halfcauchy_scale);
    for (int k = 0; k < prep.n_genres; ++k)
        terms.global_priors += log_pdf_half_cauchy(g.sigma_b[k], priors.halfcauchy_scale);
    if (!customer_ar)
        terms.global_priors += log_pdf_half_cauchy(g.sigma_p, priors.halfcauchy_scale);
    if (covariate) {
        terms.global_priors += log_pdf_normal(g.delta1, 0.0, priors.normal_var);
        terms.global_priors += log_pdf_half_cauchy(g.sigma_d1, priors.halfcauchy_scale);
    }
    return terms;
}

double joint_log_posterior(const PreparedData& prep, const HierarchicalParams& params,
                           const PriorConfig& priors) {
    return joint_log_posterior_terms(prep, params, priors).total();
}

double joint_log_posterior(const Dataset& data, const HierarchicalParams& params,
                           const PriorConfig& priors, const ModelConfig& config) {
    return joint_log_posterior(prepare_data(data, config), params, priors);
}

}  // namespace churnprof
