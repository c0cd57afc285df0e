#ifndef CHURNPROF_MODEL_HPP
#define CHURNPROF_MODEL_HPP

#include <string>
#include <vector>

#include "churnprof/event_log.hpp"

namespace churnprof {

/// Hyperparameters of the hierarchy: means and scales of the customer-level
/// effect distributions. K = number of genres.
struct GlobalParams {
    double delta = 0.0;            // mean of customer intercepts d0_c
    std::vector<double> beta;      // genre effect means, length K
    double sigma_d = 1.0;
    std::vector<double> sigma_b;   // length K
    double sigma_p = 1.0;
    // Optional journey-level count covariate (off by default).
    double delta1 = 0.0;
    double sigma_d1 = 1.0;
};

struct CustomerParams {
    double d0 = 0.0;               // log mean event count
    std::vector<double> b;         // genre effects, length K
    double phi = 0.0;              // mean autoregressive level
    double psi = 1.0;              // gamma dispersion, > 0
    double d1 = 0.0;               // used only when the count covariate is on
};

struct SessionParams {
    std::vector<double> p;         // one autoregressive slope per journey
};

struct PriorConfig {
    double normal_var = 1000.0;    // for delta, beta_k, phi_c (and delta1)
    double psi_shape = 0.001;
    double psi_rate = 0.001;
    double halfcauchy_scale = 2.5;
};

/// Structural switches of the likelihood. Defaults reproduce the fitted
/// case-study model: intercept-only counts, session-level AR slopes.
struct ModelConfig {
    enum class CountCovariate { none, journey_index };
    CountCovariate count_covariate = CountCovariate::none;
    // When true the AR slope is shared within customer (p_sc == phi_c) and
    // sigma_p drops out of the model.
    bool customer_level_ar = false;

    bool covariate_on() const { return count_covariate != CountCovariate::none; }
};

struct HierarchicalParams {
    GlobalParams global;
    std::vector<CustomerParams> per_customer;
    std::vector<SessionParams> per_session;  // aligned with per_customer
};

// Log-mean clip bounds for the gamma linear predictor: the raw-seconds AR
// term can push eta + omega far beyond the overflow range of exp.
inline constexpr double kLogMeanClip = 30.0;

inline double clip_log_mean(double x) {
    if (x > kLogMeanClip) return kLogMeanClip;
    if (x < -kLogMeanClip) return -kLogMeanClip;
    return x;
}

/// log P(N = n) for the zero-truncated Poisson: n >= 1,
/// n log(lambda) - lambda - log(n!) - log(1 - e^-lambda). Returns -inf for n = 0.
double log_pmf_ztpois(long long n, double lambda);

/// Log density of the mean-dispersion gamma (shape psi, rate psi/mu), so
/// E[T] = mu and Var(T) = mu^2/psi.
double log_pdf_gamma_mean_disp(double t, double mu, double psi);

double log_pdf_normal(double x, double mean, double var);
double log_pdf_gamma_shape_rate(double x, double shape, double rate);
double log_pdf_half_cauchy(double x, double scale);

/// Mean of the zero-truncated Poisson: lambda / (1 - e^-lambda).
double ztpois_mean(double lambda);

struct LinearPredictors {
    double lambda = 0.0;
    // mu[j] is the gamma mean of gap j+2 (1-based gap index); the first gap
    // of a journey is conditioned on and has no entry.
    std::vector<double> mu;
};

/// Journey-level count rate and per-gap gamma means. Requires the genres of
/// the modelled gaps (events 2..n-1) to be in 1..K.
LinearPredictors linear_predictors(const Journey& journey, const CustomerParams& cp,
                                   double p_sc, const ModelConfig& config = {});

/// Journey-level covariate for the count model (0 when the covariate is off).
double count_covariate_value(const ModelConfig& config, int journey_index, int n_journeys);

/// Full joint log density: count and gap likelihoods, session slopes,
/// customer-level effect distributions and the hyperpriors. -inf likelihood
/// terms propagate; shape mismatches throw.
double joint_log_posterior(const Dataset& data, const HierarchicalParams& params,
                           const PriorConfig& priors, const ModelConfig& config = {});

// ---------------------------------------------------------------------------
// Flattened dataset view used by the sampler: per-customer journey counts and
// the gamma-eligible event terms (events 2..n of journeys whose genres are all
// known), laid out for cheap single-parameter updates.

struct PreparedCustomer {
    std::string id;
    ChurnLabel label = ChurnLabel::unlabelled;
    std::vector<long long> n;           // events per journey
    std::vector<double> lgamma_n1;      // lgamma(n+1) per journey
    std::vector<double> covariate;      // count covariate per journey
    double sum_n = 0.0;
    double sum_lgamma_n1 = 0.0;
    double sum_ev_log_t = 0.0;          // over the gamma event terms

    // Flat event terms, journey-major.
    std::vector<int> ev_genre;          // 0-based genre
    std::vector<double> ev_t;           // gap
    std::vector<double> ev_log_t;
    std::vector<double> ev_tprev;       // previous gap
    std::vector<int> ev_journey;        // owning journey
    std::vector<std::pair<int, int>> ev_range;      // per journey [begin, end)
    std::vector<std::vector<int>> ev_by_genre;      // indices per genre

    int n_journeys() const { return static_cast<int>(n.size()); }
    int n_event_terms() const { return static_cast<int>(ev_t.size()); }
};

struct PreparedData {
    std::vector<PreparedCustomer> customers;
    int n_genres = 8;
    ModelConfig config;
    std::size_t gamma_excluded_journeys = 0;  // journeys with unknown genres

    int n_customers() const { return static_cast<int>(customers.size()); }
};

PreparedData prepare_data(const Dataset& data, const ModelConfig& config = {});

/// Allocates a parameter state of the right shape, zero-initialized.
HierarchicalParams make_params_shape(const PreparedData& prep);

double joint_log_posterior(const PreparedData& prep, const HierarchicalParams& params,
                           const PriorConfig& priors);

/// Same total, split by term group; used to name the offending term when the
/// starting state is non-finite.
struct LogPosteriorTerms {
    double count_loglik = 0.0;
    double gamma_loglik = 0.0;
    double session_slope_density = 0.0;
    double customer_priors = 0.0;
    double global_priors = 0.0;

    double total() const {
        return count_loglik + gamma_loglik + session_slope_density + customer_priors +
               global_priors;
    }
};

LogPosteriorTerms joint_log_posterior_terms(const PreparedData& prep,
                                            const HierarchicalParams& params,
                                            const PriorConfig& priors);

}  // namespace churnprof

#endif
