#ifndef CHURNPROF_CLASSIFY_HPP
#define CHURNPROF_CLASSIFY_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "churnprof/event_log.hpp"
#include "churnprof/features.hpp"

namespace churnprof {

struct FeatureMatrix {
    std::vector<std::string> row_ids;
    std::vector<std::string> col_names;
    std::vector<ChurnLabel> labels;
    std::vector<std::vector<double>> rows;
    std::string source;  // "model_based" | "naive"

    int n_rows() const { return static_cast<int>(rows.size()); }
    int n_cols() const { return static_cast<int>(col_names.size()); }
    void validate() const;
};

/// Standardized profile columns as classifier features.
FeatureMatrix features_from_profiles(const ProfileSet& set);

/// The stacked raw-gap baseline: J* = min journey count across customers;
/// journey position j <= J* contributes min-events-at-j minus one gap columns,
/// in event order, journeys stacked in recorded order. With
/// `global_min_events` the per-position minimum is replaced by the global one.
FeatureMatrix naive_features(const Dataset& data, bool global_min_events = false);

/// Columns scaled to mean 0 / sd 1 over all rows; zero-variance columns to 0.
void standardize_features(FeatureMatrix& features);

struct TrainTestSplit {
    FeatureMatrix train;
    FeatureMatrix test;
};

/// Stratified-by-label seeded split; per label, round(ratio * n) rows train.
TrainTestSplit split_train_test(const FeatureMatrix& features, double ratio,
                                std::uint64_t seed);

// --- k nearest neighbours ---------------------------------------------------

/// Majority label among the k nearest Euclidean neighbours; distance ties and
/// vote ties break on the lowest training index.
std::vector<ChurnLabel> knn_classify(const FeatureMatrix& train, const FeatureMatrix& test,
                                     int k);

// --- L1-penalized logistic regression ----------------------------------------

struct LassoFit {
    double intercept = 0.0;
    std::vector<double> coefficients;
    bool converged = false;
    int sweeps = 0;
    double penalty = 0.0;
};

/// Cyclic coordinate descent on (1/n) log loss + penalty * ||w||_1 with an
/// unpenalized intercept; stops when no coefficient moves more than 1e-7 in a
/// sweep (or after 10^4 sweeps, returning the best iterate with a warning
/// flag). Positive class: cancelled.
LassoFit fit_lasso_logistic(const FeatureMatrix& train, double penalty);
std::vector<ChurnLabel> lasso_predict(const LassoFit& fit, const FeatureMatrix& test);
std::vector<ChurnLabel> lasso_logistic(const FeatureMatrix& train, double penalty,
                                       const FeatureMatrix& test);

// --- random forest ------------------------------------------------------------

struct CartNode {
    int feature = -1;       // -1 marks a leaf
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    ChurnLabel leaf = ChurnLabel::unlabelled;
};

struct CartTree {
    std::vector<CartNode> nodes;
    ChurnLabel predict(const std::vector<double>& x) const;
};

/// Single CART tree: Gini splits, grown to purity, mtry features per split.
CartTree fit_cart(const FeatureMatrix& train, const std::vector<int>& row_indices, int mtry,
                  std::uint64_t seed);

struct ForestConfig {
    int n_trees = 1000;
    int mtry = 0;  // 0 = floor(sqrt(p))
    bool bootstrap = true;
    std::uint64_t seed = 0;
};

struct ForestFit {
    std::vector<CartTree> trees;
};

ForestFit fit_random_forest(const FeatureMatrix& train, const ForestConfig& config);
std::vector<ChurnLabel> forest_predict(const ForestFit& fit, const FeatureMatrix& test);
std::vector<ChurnLabel> random_forest(const FeatureMatrix& train, int n_trees, int mtry,
                                      std::uint64_t seed, const FeatureMatrix& test);

// --- SVM with polynomial kernel ------------------------------------------------

struct SvmConfig {
    double cost = 1.0;
    int degree = 3;
    double gamma = 0.0;   // 0 = 1/p
    double coef0 = 0.0;   // kernel offset r
    double tol = 1e-6;
    long max_iter = 200000;
};

struct SvmFit {
    std::vector<double> alpha;       // dual variables, 0 <= alpha <= C
    std::vector<int> y;              // +1 cancelled, -1 active
    std::vector<std::vector<double>> support_x;  // training rows
    double bias = 0.0;
    double gamma = 0.0;
    double coef0 = 0.0;
    int degree = 3;
    double cost = 1.0;
    bool converged = false;
    double kkt_violation = 0.0;      // final m - M gap

    double alpha_y_sum() const;
};

double poly_kernel(const std::vector<double>& x, const std::vector<double>& z, double gamma,
                   int degree, double coef0);

/// Soft-margin C-SVC solved by SMO with maximal-violating-pair selection and
/// a second-order working-set heuristic. Dual feasibility (0 <= alpha <= C,
/// sum alpha_i y_i = 0) holds by construction at every iterate.
SvmFit fit_svm_poly(const FeatureMatrix& train, const SvmConfig& config);
std::vector<ChurnLabel> svm_predict(const SvmFit& fit, const FeatureMatrix& test);
std::vector<ChurnLabel> svm_poly(const FeatureMatrix& train, double cost, int degree,
                                 const FeatureMatrix& test);

// --- evaluation -----------------------------------------------------------------

struct MethodResult {
    std::string method;
    std::string source;
    double accuracy = 0.0;
    double tpr = 0.0;
    double fpr = 0.0;
    long tp = 0, fp = 0, tn = 0, fn = 0;
};

/// Positive class = cancelled. TPR = TP/(TP+FN), FPR = FP/(FP+TN).
MethodResult evaluate(const std::vector<ChurnLabel>& predictions,
                      const std::vector<ChurnLabel>& labels);

struct ClassificationReport {
    std::vector<MethodResult> results;
    int train_size = 0;
    int test_size = 0;
    std::uint64_t seed = 0;
};

struct ClassifyConfig {
    double split_ratio = 0.7;
    std::uint64_t seed = 42;
    std::vector<std::string> methods = {"svm", "knn", "rf", "lasso"};
    double lasso_penalty = 0.02;
    int knn_k = 1;
    int rf_trees = 1000;
    double svm_cost = 1.0;
    int svm_degree = 3;
};

/// Runs the configured methods on one feature source with a shared split.
std::vector<MethodResult> run_classifiers(const FeatureMatrix& features,
                                          const ClassifyConfig& config);

std::string report_csv(const ClassificationReport& report);
std::string render_report_table(const ClassificationReport& report);
ClassificationReport report_from_csv_text(const std::string& text);

}  // namespace churnprof

#endif
