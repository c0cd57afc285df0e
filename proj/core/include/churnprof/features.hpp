#ifndef CHURNPROF_FEATURES_HPP
#define CHURNPROF_FEATURES_HPP

#include <array>
#include <string>
#include <vector>

#include "churnprof/event_log.hpp"
#include "churnprof/sampler.hpp"

namespace churnprof {

/// Per-customer posterior point estimates in fixed order:
/// d0, b1..bK, phi, psi (11 values when K = 8).
struct CustomerProfile {
    std::string customer_id;
    ChurnLabel label = ChurnLabel::unlabelled;
    std::vector<double> values;
    std::vector<double> standardized;  // empty until standardize() ran
};

struct ProfileSet {
    std::vector<CustomerProfile> profiles;
    std::vector<std::string> value_names;  // d0, b1..bK, phi, psi
    int n_genres = 8;

    int dimension() const { return n_genres + 3; }
};

std::vector<std::string> profile_value_names(int n_genres);

/// Posterior means of the per-customer parameters, looked up by name in the
/// summary (never by position), labels copied from the dataset. Set
/// `use_median` to take posterior medians instead of means.
ProfileSet extract_profiles(const PosteriorSummary& summary, const Dataset& data,
                            bool use_median = false);

/// Builds a profile set straight from known parameters (simulation truth).
ProfileSet profiles_from_params(const HierarchicalParams& params, const Dataset& data);

struct StandardizeResult {
    std::vector<int> zero_variance_columns;
};

/// Centers and scales every profile column to sample mean 0 and sd 1
/// (n-1 denominator). Zero-variance columns are set to 0 and reported.
StandardizeResult standardize(ProfileSet& set);

/// Multiplicative change in the mean gap time implied by a genre effect:
/// exp(b) - 1. Negative values render as "x% shorter".
double percent_change(double b);
std::string render_percent_change(const std::string& name, double b);

struct GroupCorrelations {
    std::vector<std::vector<double>> active;     // (K+3) x (K+3)
    std::vector<std::vector<double>> cancelled;  // (K+3) x (K+3)
    std::vector<std::string> names;
};

/// Pearson correlation matrices of the raw profile columns per churn group;
/// needs at least 3 customers per group.
GroupCorrelations group_correlations(const ProfileSet& set);

/// Single-matrix export: lower triangle from the active group, upper triangle
/// from the cancelled group, unit diagonal.
std::string correlations_csv(const GroupCorrelations& corr);

void write_profiles_csv(const ProfileSet& set, const std::string& path);
ProfileSet read_profiles_csv(const std::string& path);

}  // namespace churnprof

#endif
