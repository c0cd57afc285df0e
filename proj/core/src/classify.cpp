#include "churnprof/classify.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <sstream>

#include "churnprof/common.hpp"
#include "churnprof/rng.hpp"

namespace churnprof {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

void FeatureMatrix::validate() const {
    if (rows.size() != labels.size() || rows.size() != row_ids.size())
        throw DataError("feature matrix: row/label misalignment");
    for (const auto& row : rows) {
        if (row.size() != col_names.size()) throw DataError("feature matrix: ragged rows");
        for (double v : row) {
            if (!std::isfinite(v)) throw DataError("feature matrix: missing/non-finite entry");
        }
    }
}

FeatureMatrix features_from_profiles(const ProfileSet& set) {
    FeatureMatrix fm;
    fm.source = "model_based";
    fm.col_names = set.value_names;
    for (const auto& prof : set.profiles) {
        if (prof.standardized.empty())
            throw DataError("profiles must be standardized before classification");
        fm.row_ids.push_back(prof.customer_id);
        fm.labels.push_back(prof.label);
        fm.rows.push_back(prof.standardized);
    }
    fm.validate();
    return fm;
}

FeatureMatrix naive_features(const Dataset& data, bool global_min_events) {
    if (data.customers.empty()) throw DataError("naive_features: empty dataset");
    std::size_t min_journeys = std::numeric_limits<std::size_t>::max();
    for (const auto& c : data.customers) {
        if (c.journeys.empty()) throw DataError("naive_features: customer with zero journeys");
        min_journeys = std::min(min_journeys, c.journeys.size());
    }
    // Events kept per journey position: per-position minimum across customers,
    // or one global minimum when asked for.
    std::vector<std::size_t> keep_events(min_journeys, std::numeric_limits<std::size_t>::max());
    for (const auto& c : data.customers) {
        for (std::size_t j = 0; j < min_journeys; ++j) {
            keep_events[j] = std::min(keep_events[j], c.journeys[j].tags.size());
        }
    }
    if (global_min_events) {
        std::size_t global = *std::min_element(keep_events.begin(), keep_events.end());
        std::fill(keep_events.begin(), keep_events.end(), global);
    }

    FeatureMatrix fm;
    fm.source = "naive";
    for (std::size_t j = 0; j < min_journeys; ++j) {
        for (std::size_t g = 0; g + 1 < keep_events[j]; ++g) {
            fm.col_names.push_back("j" + std::to_string(j + 1) + "_gap" + std::to_string(g + 1));
        }
    }
    for (const auto& c : data.customers) {
        std::vector<double> row;
        row.reserve(fm.col_names.size());
        for (std::size_t j = 0; j < min_journeys; ++j) {
            const auto& gaps = c.journeys[j].gaps;
            for (std::size_t g = 0; g + 1 < keep_events[j]; ++g) row.push_back(gaps[g]);
        }
        fm.row_ids.push_back(c.id);
        fm.labels.push_back(c.label);
        fm.rows.push_back(std::move(row));
    }
    fm.validate();
    return fm;
}

void standardize_features(FeatureMatrix& features) {
    const std::size_t n = features.rows.size();
    if (n < 2) throw DataError("standardize_features needs at least 2 rows");
    for (int j = 0; j < features.n_cols(); ++j) {
        double mean = 0.0;
        for (const auto& row : features.rows) mean += row[j];
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (const auto& row : features.rows) {
            double d = row[j] - mean;
            var += d * d;
        }
        var /= static_cast<double>(n - 1);
        if (var > 0.0) {
            double sd = std::sqrt(var);
            for (auto& row : features.rows) row[j] = (row[j] - mean) / sd;
        } else {
            for (auto& row : features.rows) row[j] = 0.0;
        }
    }
}

TrainTestSplit split_train_test(const FeatureMatrix& features, double ratio,
                                std::uint64_t seed) {
    if (!(ratio > 0.0 && ratio < 1.0))
        throw ConfigError("split_train_test: ratio must be in (0,1)");
    features.validate();
    std::vector<int> active_idx, cancelled_idx;
    for (int i = 0; i < features.n_rows(); ++i) {
        switch (features.labels[i]) {
            case ChurnLabel::active: active_idx.push_back(i); break;
            case ChurnLabel::cancelled: cancelled_idx.push_back(i); break;
            default: throw DataError("split_train_test: unlabelled row " + features.row_ids[i]);
        }
    }
    Rng rng(seed);
    auto shuffle = [&](std::vector<int>& idx) {
        for (std::size_t i = idx.size(); i > 1; --i) {
            std::size_t j = rng.uniform_below(i);
            std::swap(idx[i - 1], idx[j]);
        }
    };
    shuffle(active_idx);
    shuffle(cancelled_idx);

    TrainTestSplit split;
    split.train.source = split.test.source = features.source;
    split.train.col_names = split.test.col_names = features.col_names;
    auto take = [&](const std::vector<int>& idx) {
        auto n_train = static_cast<std::size_t>(std::llround(ratio * idx.size()));
        for (std::size_t i = 0; i < idx.size(); ++i) {
            FeatureMatrix& dst = i < n_train ? split.train : split.test;
            dst.row_ids.push_back(features.row_ids[idx[i]]);
            dst.labels.push_back(features.labels[idx[i]]);
            dst.rows.push_back(features.rows[idx[i]]);
        }
    };
    take(active_idx);
    take(cancelled_idx);
    if (split.train.rows.empty() || split.test.rows.empty())
        throw DataError("split_train_test: degenerate split (empty train or test)");
    return split;
}

// --- k nearest neighbours ----------------------------------------------------

namespace {

double euclidean2(const std::vector<double>& a, const std::vector<double>& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        double d = a[i] - b[i];
        acc += d * d;
    }
    return acc;
}

}  // namespace

std::vector<ChurnLabel> knn_classify(const FeatureMatrix& train, const FeatureMatrix& test,
                                     int k) {
    if (k < 1 || k > train.n_rows())
        throw std::invalid_argument("knn: k must be in [1, train size]");
    std::vector<ChurnLabel> out;
    out.reserve(test.rows.size());
    std::vector<std::pair<double, int>> nb(train.rows.size());
    for (const auto& x : test.rows) {
        for (int i = 0; i < train.n_rows(); ++i) nb[i] = {euclidean2(train.rows[i], x), i};
        // Sorting by (distance, training index) settles distance ties.
        std::sort(nb.begin(), nb.end());
        int votes_cancelled = 0;
        for (int i = 0; i < k; ++i) {
            if (train.labels[nb[i].second] == ChurnLabel::cancelled) ++votes_cancelled;
        }
        if (2 * votes_cancelled == k) {
            // Vote tie: the nearest (lowest-index) neighbour decides.
            out.push_back(train.labels[nb[0].second]);
        } else {
            out.push_back(2 * votes_cancelled > k ? ChurnLabel::cancelled : ChurnLabel::active);
        }
    }
    return out;
}

// --- L1-penalized logistic regression ----------------------------------------

LassoFit fit_lasso_logistic(const FeatureMatrix& train, double penalty) {
    if (penalty < 0.0) throw std::invalid_argument("lasso: penalty must be >= 0");
    train.validate();
    const int n = train.n_rows();
    const int p = train.n_cols();
    if (n == 0) throw DataError("lasso: empty training set");

    std::vector<double> y(n);
    for (int i = 0; i < n; ++i) y[i] = train.labels[i] == ChurnLabel::cancelled ? 1.0 : 0.0;

    LassoFit fit;
    fit.penalty = penalty;
    fit.coefficients.assign(p, 0.0);
    std::vector<double> eta(n, 0.0);
    std::vector<double> prob(n, 0.5);

    // Curvature upper bounds (p(1-p) <= 1/4) make every coordinate step a
    // majorize-minimize move; the fixed point satisfies the L1 KKT system.
    std::vector<double> h(p, 0.0);
    for (int j = 0; j < p; ++j) {
        double acc = 0.0;
        for (int i = 0; i < n; ++i) acc += train.rows[i][j] * train.rows[i][j];
        h[j] = 0.25 * acc / n;
    }

    const double tol = 1e-7;
    const int max_sweeps = 10000;
    auto refresh_prob = [&]() {
        for (int i = 0; i < n; ++i) prob[i] = 1.0 / (1.0 + std::exp(-eta[i]));
    };
    refresh_prob();

    for (int sweep = 1; sweep <= max_sweeps; ++sweep) {
        fit.sweeps = sweep;
        double max_change = 0.0;
        // Intercept (unpenalized).
        {
            double g = 0.0;
            for (int i = 0; i < n; ++i) g += prob[i] - y[i];
            g /= n;
            double step = -g / 0.25;
            if (step != 0.0) {
                fit.intercept += step;
                for (int i = 0; i < n; ++i) eta[i] += step;
                refresh_prob();
                max_change = std::max(max_change, std::abs(step));
            }
        }
        for (int j = 0; j < p; ++j) {
            if (h[j] < 1e-12) continue;  // constant column
            double g = 0.0;
            for (int i = 0; i < n; ++i) g += train.rows[i][j] * (prob[i] - y[i]);
            g /= n;
            double w = fit.coefficients[j];
            double z = h[j] * w - g;
            double w_new = 0.0;
            if (z > penalty) w_new = (z - penalty) / h[j];
            else if (z < -penalty) w_new = (z + penalty) / h[j];
            double change = w_new - w;
            if (change != 0.0) {
                fit.coefficients[j] = w_new;
                for (int i = 0; i < n; ++i) eta[i] += change * train.rows[i][j];
                refresh_prob();
                max_change = std::max(max_change, std::abs(change));
            }
        }
        if (max_change < tol) {
            fit.converged = true;
            break;
        }
    }
    return fit;
}

std::vector<ChurnLabel> lasso_predict(const LassoFit& fit, const FeatureMatrix& test) {
    std::vector<ChurnLabel> out;
    out.reserve(test.rows.size());
    for (const auto& x : test.rows) {
        double eta = fit.intercept;
        for (std::size_t j = 0; j < x.size(); ++j) eta += fit.coefficients[j] * x[j];
        out.push_back(eta >= 0.0 ? ChurnLabel::cancelled : ChurnLabel::active);
    }
    return out;
}

std::vector<ChurnLabel> lasso_logistic(const FeatureMatrix& train, double penalty,
                                       const FeatureMatrix& test) {
    return lasso_predict(fit_lasso_logistic(train, penalty), test);
}

// --- random forest -------------------------------------------------------------

ChurnLabel CartTree::predict(const std::vector<double>& x) const {
    int node = 0;
    while (nodes[node].feature >= 0) {
        node = x[nodes[node].feature] <= nodes[node].threshold ? nodes[node].left
                                                               : nodes[node].right;
    }
    return nodes[node].leaf;
}

namespace {

ChurnLabel majority_label(const FeatureMatrix& train, const std::vector<int>& rows) {
    int cancelled = 0;
    for (int r : rows)
        if (train.labels[r] == ChurnLabel::cancelled) ++cancelled;
    int active = static_cast<int>(rows.size()) - cancelled;
    // Tie goes to "active" (label order), a fixed deterministic rule.
    return cancelled > active ? ChurnLabel::cancelled : ChurnLabel::active;
}

struct BestSplit {
    int feature = -1;
    double threshold = 0.0;
    double gain = 0.0;
};

double gini(int cancelled, int total) {
    if (total == 0) return 0.0;
    double q = static_cast<double>(cancelled) / total;
    return 2.0 * q * (1.0 - q);
}

}  // namespace

CartTree fit_cart(const FeatureMatrix& train, const std::vector<int>& row_indices, int mtry,
                  std::uint64_t seed) {
    const int p = train.n_cols();
    if (mtry < 1 || mtry > p) throw std::invalid_argument("fit_cart: mtry out of range");
    Rng rng(seed);
    CartTree tree;

    struct Item {
        std::vector<int> rows;
        int node;
    };
    std::vector<Item> stack;
    tree.nodes.emplace_back();
    stack.push_back({row_indices, 0});
    std::vector<int> all_features(p);
    for (int j = 0; j < p; ++j) all_features[j] = j;
    std::vector<std::pair<double, int>> sorted;  // (value, cancelled?)

    auto make_leaf = [&](int node_idx, const std::vector<int>& rows) {
        tree.nodes[node_idx].feature = -1;
        tree.nodes[node_idx].leaf = majority_label(train, rows);
    };

    while (!stack.empty()) {
        Item item = std::move(stack.back());
        stack.pop_back();

        int total = static_cast<int>(item.rows.size());
        int cancelled = 0;
        for (int r : item.rows)
            if (train.labels[r] == ChurnLabel::cancelled) ++cancelled;
        if (total == 0 || cancelled == 0 || cancelled == total) {
            make_leaf(item.node, item.rows);
            continue;
        }

        // mtry candidate features, sampled without replacement, evaluated in
        // ascending index order for deterministic tie breaking.
        std::vector<int> candidates = all_features;
        for (int i = 0; i < mtry; ++i) {
            std::size_t j = i + rng.uniform_below(static_cast<std::uint64_t>(p - i));
            std::swap(candidates[i], candidates[j]);
        }
        candidates.resize(mtry);
        std::sort(candidates.begin(), candidates.end());

        double parent_impurity = gini(cancelled, total);
        BestSplit best;
        for (int f : candidates) {
            sorted.clear();
            for (int r : item.rows) {
                sorted.emplace_back(train.rows[r][f],
                                    train.labels[r] == ChurnLabel::cancelled ? 1 : 0);
            }
            std::sort(sorted.begin(), sorted.end());
            int left_cancelled = 0;
            for (int i = 0; i + 1 < total; ++i) {
                left_cancelled += sorted[i].second;
                if (sorted[i].first == sorted[i + 1].first) continue;
                int left_n = i + 1;
                int right_n = total - left_n;
                double impurity =
                    (left_n * gini(left_cancelled, left_n) +
                     right_n * gini(cancelled - left_cancelled, right_n)) /
                    total;
                double gain = parent_impurity - impurity;
                if (gain > best.gain + 1e-12) {
                    best.feature = f;
                    best.threshold = 0.5 * (sorted[i].first + sorted[i + 1].first);
                    best.gain = gain;
                }
            }
        }
        if (best.feature < 0) {
            make_leaf(item.node, item.rows);
            continue;
        }
        std::vector<int> left_rows, right_rows;
        for (int r : item.rows) {
            (train.rows[r][best.feature] <= best.threshold ? left_rows : right_rows).push_back(r);
        }
        if (left_rows.empty() || right_rows.empty()) {
            make_leaf(item.node, item.rows);
            continue;
        }
        // Allocate children before touching the parent: emplace_back can
        // reallocate the node vector.
        int left_idx = static_cast<int>(tree.nodes.size());
        tree.nodes.emplace_back();
        int right_idx = static_cast<int>(tree.nodes.size());
        tree.nodes.emplace_back();
        CartNode& parent = tree.nodes[item.node];
        parent.feature = best.feature;
        parent.threshold = best.threshold;
        parent.left = left_idx;
        parent.right = right_idx;
        stack.push_back({std::move(right_rows), right_idx});
        stack.push_back({std::move(left_rows), left_idx});
    }
    return tree;
}

ForestFit fit_random_forest(const FeatureMatrix& train, const ForestConfig& config) {
    train.validate();
    if (config.n_trees < 1) throw std::invalid_argument("forest: n_trees must be >= 1");
    const int n = train.n_rows();
    const int p = train.n_cols();
    int mtry = config.mtry > 0 ? config.mtry : std::max(1, static_cast<int>(std::sqrt(p)));
    if (mtry > p) throw std::invalid_argument("forest: mtry exceeds feature count");

    ForestFit fit;
    fit.trees.reserve(config.n_trees);
    std::vector<int> identity(n);
    for (int i = 0; i < n; ++i) identity[i] = i;
    for (int t = 0; t < config.n_trees; ++t) {
        std::uint64_t tree_seed = derive_seed(config.seed, static_cast<std::uint64_t>(t));
        std::vector<int> rows;
        if (config.bootstrap) {
            Rng boot(derive_seed(tree_seed, std::uint64_t{0}));
            rows.reserve(n);
            for (int i = 0; i < n; ++i)
                rows.push_back(static_cast<int>(boot.uniform_below(static_cast<std::uint64_t>(n))));
        } else {
            rows = identity;
        }
        fit.trees.push_back(fit_cart(train, rows, mtry, derive_seed(tree_seed, std::uint64_t{1})));
    }
    return fit;
}

std::vector<ChurnLabel> forest_predict(const ForestFit& fit, const FeatureMatrix& test) {
    std::vector<ChurnLabel> out;
    out.reserve(test.rows.size());
    for (const auto& x : test.rows) {
        int cancelled = 0;
        for (const auto& tree : fit.trees)
            if (tree.predict(x) == ChurnLabel::cancelled) ++cancelled;
        int active = static_cast<int>(fit.trees.size()) - cancelled;
        out.push_back(cancelled > active ? ChurnLabel::cancelled : ChurnLabel::active);
    }
    return out;
}

std::vector<ChurnLabel> random_forest(const FeatureMatrix& train, int n_trees, int mtry,
                                      std::uint64_t seed, const FeatureMatrix& test) {
    ForestConfig config;
    config.n_trees = n_trees;
    config.mtry = mtry;
    config.seed = seed;
    return forest_predict(fit_random_forest(train, config), test);
}

// --- SVM -------------------------------------------------------------------------

double poly_kernel(const std::vector<double>& x, const std::vector<double>& z, double gamma,
                   int degree, double coef0) {
    double dot = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) dot += x[i] * z[i];
    return std::pow(gamma * dot + coef0, degree);
}

double SvmFit::alpha_y_sum() const {
    double acc = 0.0;
    for (std::size_t i = 0; i < alpha.size(); ++i) acc += alpha[i] * y[i];
    return acc;
}

SvmFit fit_svm_poly(const FeatureMatrix& train, const SvmConfig& config) {
    train.validate();
    if (!(config.cost > 0.0)) throw std::invalid_argument("svm: cost must be > 0");
    if (config.degree < 1) throw std::invalid_argument("svm: degree must be >= 1");
    const int n = train.n_rows();
    const int p = train.n_cols();
    const double C = config.cost;

    SvmFit fit;
    fit.gamma = config.gamma > 0.0 ? config.gamma : 1.0 / std::max(1, p);
    fit.coef0 = config.coef0;
    fit.degree = config.degree;
    fit.cost = C;
    fit.support_x = train.rows;
    fit.alpha.assign(n, 0.0);
    fit.y.resize(n);
    int n_pos = 0;
    for (int i = 0; i < n; ++i) {
        fit.y[i] = train.labels[i] == ChurnLabel::cancelled ? 1 : -1;
        if (fit.y[i] > 0) ++n_pos;
    }
    if (n_pos == 0 || n_pos == n) {
        // One-class training set: constant prediction, no dual problem.
        fit.bias = n_pos == n ? 1.0 : -1.0;
        fit.converged = true;
        return fit;
    }

    std::vector<std::vector<double>> kernel(n, std::vector<double>(n));
    for (int i = 0; i < n; ++i) {
        for (int j = i; j < n; ++j) {
            double v = poly_kernel(train.rows[i], train.rows[j], fit.gamma, fit.degree, fit.coef0);
            kernel[i][j] = v;
            kernel[j][i] = v;
        }
    }

    // u_i = sum_j alpha_j y_j K_ij; optimality gap is m - M over
    // m = max_{I_up} (y_i - u_i), M = min_{I_low} (y_i - u_i).
    std::vector<double> u(n, 0.0);
    auto in_up = [&](int i) {
        return (fit.y[i] > 0 && fit.alpha[i] < C) || (fit.y[i] < 0 && fit.alpha[i] > 0.0);
    };
    auto in_low = [&](int i) {
        return (fit.y[i] > 0 && fit.alpha[i] > 0.0) || (fit.y[i] < 0 && fit.alpha[i] < C);
    };

    long iter = 0;
    double gap = kInf;
    for (; iter < config.max_iter; ++iter) {
        int i = -1;
        double m = -kInf;
        for (int t = 0; t < n; ++t) {
            if (!in_up(t)) continue;
            double v = fit.y[t] - u[t];
            if (v > m) {
                m = v;
                i = t;
            }
        }
        double M = kInf;
        for (int t = 0; t < n; ++t) {
            if (!in_low(t)) continue;
            double v = fit.y[t] - u[t];
            if (v < M) M = v;
        }
        gap = m - M;
        if (i < 0 || gap <= config.tol) break;

        // Second-order choice of j: largest decrease of the dual objective.
        int j = -1;
        double best_obj = 0.0;
        for (int t = 0; t < n; ++t) {
            if (!in_low(t)) continue;
            double b_t = m - (fit.y[t] - u[t]);
            if (b_t <= 0.0) continue;
            double eta = std::max(kernel[i][i] + kernel[t][t] - 2.0 * kernel[i][t], 1e-12);
            double obj = -(b_t * b_t) / eta;
            if (obj < best_obj) {
                best_obj = obj;
                j = t;
            }
        }
        if (j < 0) break;

        double eta = std::max(kernel[i][i] + kernel[j][j] - 2.0 * kernel[i][j], 1e-12);
        double step = ((fit.y[i] - u[i]) - (fit.y[j] - u[j])) / eta;
        double old_ai = fit.alpha[i];
        double old_aj = fit.alpha[j];
        double constraint = fit.y[i] * old_ai + fit.y[j] * old_aj;

        double ai = old_ai + fit.y[i] * step;
        ai = std::clamp(ai, 0.0, C);
        double aj = fit.y[j] * (constraint - fit.y[i] * ai);
        aj = std::clamp(aj, 0.0, C);
        ai = fit.y[i] * (constraint - fit.y[j] * aj);
        fit.alpha[i] = ai;
        fit.alpha[j] = aj;

        double dai = (ai - old_ai) * fit.y[i];
        double daj = (aj - old_aj) * fit.y[j];
        if (dai != 0.0 || daj != 0.0) {
            for (int t = 0; t < n; ++t) u[t] += dai * kernel[i][t] + daj * kernel[j][t];
        }
    }
    fit.kkt_violation = gap;
    fit.converged = gap <= config.tol;
    if (!fit.converged) {
        std::fprintf(stderr,
                     "warning: SVM did not converge in %ld iterations (KKT violation %.3e)\n",
                     iter, gap);
    }

    // Bias from the violating-pair bounds (midpoint of the feasible interval).
    double m = -kInf, M = kInf;
    for (int t = 0; t < n; ++t) {
        double v = fit.y[t] - u[t];
        if (in_up(t)) m = std::max(m, v);
        if (in_low(t)) M = std::min(M, v);
    }
    if (std::isfinite(m) && std::isfinite(M)) fit.bias = 0.5 * (m + M);
    else if (std::isfinite(m)) fit.bias = m;
    else if (std::isfinite(M)) fit.bias = M;
    return fit;
}

std::vector<ChurnLabel> svm_predict(const SvmFit& fit, const FeatureMatrix& test) {
    std::vector<ChurnLabel> out;
    out.reserve(test.rows.size());
    for (const auto& x : test.rows) {
        double f = fit.bias;
        for (std::size_t i = 0; i < fit.alpha.size(); ++i) {
            if (fit.alpha[i] == 0.0) continue;
            f += fit.alpha[i] * fit.y[i] *
                 poly_kernel(fit.support_x[i], x, fit.gamma, fit.degree, fit.coef0);
        }
        out.push_back(f >= 0.0 ? ChurnLabel::cancelled : ChurnLabel::active);
    }
    return out;
}

std::vector<ChurnLabel> svm_poly(const FeatureMatrix& train, double cost, int degree,
                                 const FeatureMatrix& test) {
    SvmConfig config;
    config.cost = cost;
    config.degree = degree;
    return svm_predict(fit_svm_poly(train, config), test);
}

// --- evaluation ---------------------------------------------------------------

MethodResult evaluate(const std::vector<ChurnLabel>& predictions,
                      const std::vector<ChurnLabel>& labels) {
    if (predictions.size() != labels.size())
        throw std::invalid_argument("evaluate: prediction/label length mismatch");
    if (predictions.empty()) throw std::invalid_argument("evaluate: empty input");
    MethodResult r;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        bool truth_pos = labels[i] == ChurnLabel::cancelled;
        bool pred_pos = predictions[i] == ChurnLabel::cancelled;
        if (truth_pos && pred_pos) ++r.tp;
        else if (truth_pos && !pred_pos) ++r.fn;
        else if (!truth_pos && pred_pos) ++r.fp;
        else ++r.tn;
    }
    r.accuracy = static_cast<double>(r.tp + r.tn) / static_cast<double>(labels.size());
    r.tpr = (r.tp + r.fn) > 0 ? static_cast<double>(r.tp) / (r.tp + r.fn) : 0.0;
    r.fpr = (r.fp + r.tn) > 0 ? static_cast<double>(r.fp) / (r.fp + r.tn) : 0.0;
    return r;
}

std::vector<MethodResult> run_classifiers(const FeatureMatrix& features,
                                          const ClassifyConfig& config) {
    TrainTestSplit split = split_train_test(features, config.split_ratio, config.seed);
    std::vector<MethodResult> results;
    for (const auto& method : config.methods) {
        std::vector<ChurnLabel> preds;
        if (method == "svm") {
            preds = svm_poly(split.train, config.svm_cost, config.svm_degree, split.test);
        } else if (method == "knn") {
            preds = knn_classify(split.train, split.test,
                                 std::min(config.knn_k, split.train.n_rows()));
        } else if (method == "rf") {
            preds = random_forest(split.train, config.rf_trees, 0,
                                  derive_seed(config.seed, "rf"), split.test);
        } else if (method == "lasso") {
            preds = lasso_logistic(split.train, config.lasso_penalty, split.test);
        } else {
            throw ConfigError("unknown classification method '" + method + "'");
        }
        MethodResult r = evaluate(preds, split.test.labels);
        r.method = method;
        r.source = features.source;
        results.push_back(std::move(r));
    }
    return results;
}

std::string report_csv(const ClassificationReport& report) {
    std::string out = "method,source,accuracy,tpr,fpr,tp,fp,tn,fn\n";
    for (const auto& r : report.results) {
        out += r.method + "," + r.source + "," + format_double(r.accuracy) + "," +
               format_double(r.tpr) + "," + format_double(r.fpr) + "," + std::to_string(r.tp) +
               "," + std::to_string(r.fp) + "," + std::to_string(r.tn) + "," +
               std::to_string(r.fn) + "\n";
    }
    return out;
}

ClassificationReport report_from_csv_text(const std::string& text) {
    ClassificationReport report;
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw DataError("empty classification report");
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        auto fields = split_view(line, ',');
        if (fields.size() != 9) throw DataError("report row width mismatch");
        MethodResult r;
        r.method = std::string(fields[0]);
        r.source = std::string(fields[1]);
        r.accuracy = parse_double(fields[2], "report");
        r.tpr = parse_double(fields[3], "report");
        r.fpr = parse_double(fields[4], "report");
        r.tp = parse_int(fields[5], "report");
        r.fp = parse_int(fields[6], "report");
        r.tn = parse_int(fields[7], "report");
        r.fn = parse_int(fields[8], "report");
        report.results.push_back(std::move(r));
    }
    return report;
}

std::string render_report_table(const ClassificationReport& report) {
    auto display = [](const std::string& method) -> std::string {
        if (method == "svm") return "SVM";
        if (method == "knn") return "k-NN";
        if (method == "rf") return "RF";
        if (method == "lasso") return "LASSO-LR";
        return method;
    };
    std::vector<std::string> methods;
    for (const auto& r : report.results) {
        if (std::find(methods.begin(), methods.end(), r.method) == methods.end())
            methods.push_back(r.method);
    }
    auto find = [&](const std::string& method, const std::string& source) -> const MethodResult* {
        for (const auto& r : report.results) {
            if (r.method == method && r.source == source) return &r;
        }
        return nullptr;
    };
    char buf[200];
    std::string out;
    out += "Method      | Model-based         | Naive\n";
    out += "            | Acc   TPR   FPR     | Acc   TPR   FPR\n";
    out += "----------- | ------------------- | -------------------\n";
    for (const auto& method : methods) {
        const MethodResult* mb = find(method, "model_based");
        const MethodResult* nv = find(method, "naive");
        auto cell = [&](const MethodResult* r) -> std::string {
            if (!r) return "  -     -     -  ";
            char c[64];
            std::snprintf(c, sizeof(c), "%.2f  %.2f  %.2f", r->accuracy, r->tpr, r->fpr);
            return c;
        };
        std::snprintf(buf, sizeof(buf), "%-11s | %-19s | %-19s\n", display(method).c_str(),
                      cell(mb).c_str(), cell(nv).c_str());
        out += buf;
    }
    if (report.train_size > 0) {
        std::snprintf(buf, sizeof(buf), "(train %d / test %d, split seed %llu)\n",
                      report.train_size, report.test_size,
                      static_cast<unsigned long long>(report.seed));
        out += buf;
    }
    return out;
}

}  // namespace churnprof
