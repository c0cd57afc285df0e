#include "churnprof/features.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>

#include "churnprof/common.hpp"

namespace churnprof {

std::vector<std::string> profile_value_names(int n_genres) {
    std::vector<std::string> names;
    names.push_back("d0");
    for (int k = 1; k <= n_genres; ++k) names.push_back("b" + std::to_string(k));
    names.push_back("phi");
    names.push_back("psi");
    return names;
}

ProfileSet extract_profiles(const PosteriorSummary& summary, const Dataset& data,
                            bool use_median) {
    ProfileSet set;
    set.n_genres = data.n_genres;
    set.value_names = profile_value_names(data.n_genres);
    auto estimate = [&](const std::string& name) {
        const ParamSummary& row = summary.at(name);
        return use_median ? row.median : row.mean;
    };
    for (std::size_t c = 0; c < data.customers.size(); ++c) {
        const std::string ci = std::to_string(c + 1);
        CustomerProfile prof;
        prof.customer_id = data.customers[c].id;
        prof.label = data.customers[c].label;
        prof.values.push_back(estimate("d0[" + ci + "]"));
        for (int k = 1; k <= data.n_genres; ++k) {
            prof.values.push_back(estimate("b[" + ci + "," + std::to_string(k) + "]"));
        }
        prof.values.push_back(estimate("phi[" + ci + "]"));
        prof.values.push_back(estimate("psi[" + ci + "]"));
        set.profiles.push_back(std::move(prof));
    }
    return set;
}

ProfileSet profiles_from_params(const HierarchicalParams& params, const Dataset& data) {
    if (params.per_customer.size() != data.customers.size())
        throw std::invalid_argument("profiles_from_params: customer count mismatch");
    ProfileSet set;
    set.n_genres = data.n_genres;
    set.value_names = profile_value_names(data.n_genres);
    for (std::size_t c = 0; c < data.customers.size(); ++c) {
        const CustomerParams& cp = params.per_customer[c];
        CustomerProfile prof;
        prof.customer_id = data.customers[c].id;
        prof.label = data.customers[c].label;
        prof.values.push_back(cp.d0);
        for (int k = 0; k < data.n_genres; ++k) prof.values.push_back(cp.b[k]);
        prof.values.push_back(cp.phi);
        prof.values.push_back(cp.psi);
        set.profiles.push_back(std::move(prof));
    }
    return set;
}

StandardizeResult standardize(ProfileSet& set) {
    const std::size_t n = set.profiles.size();
    if (n < 2) throw DataError("standardize needs at least 2 customers");
    const int dim = set.dimension();
    StandardizeResult result;
    for (auto& prof : set.profiles) {
        if (static_cast<int>(prof.values.size()) != dim)
            throw DataError("profile dimension mismatch for " + prof.customer_id);
        prof.standardized.assign(dim, 0.0);
    }
    for (int j = 0; j < dim; ++j) {
        double mean = 0.0;
        for (const auto& prof : set.profiles) mean += prof.values[j];
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (const auto& prof : set.profiles) {
            double d = prof.values[j] - mean;
            var += d * d;
        }
        var /= static_cast<double>(n - 1);
        if (var > 0.0) {
            double sd = std::sqrt(var);
            for (auto& prof : set.profiles) prof.standardized[j] = (prof.values[j] - mean) / sd;
        } else {
            result.zero_variance_columns.push_back(j);
        }
    }
    return result;
}

double percent_change(double b) { return std::expm1(b); }

std::string render_percent_change(const std::string& name, double b) {
    double pc = percent_change(b);
    long pct = std::lround(std::abs(pc) * 100.0);
    char buf[160];
    if (pc < 0.0) {
        std::snprintf(buf, sizeof(buf), "%s = %.2f: times between events %ld%% shorter on average",
                      name.c_str(), b, pct);
    } else if (pc > 0.0) {
        std::snprintf(buf, sizeof(buf), "%s = %.2f: times between events %ld%% longer on average",
                      name.c_str(), b, pct);
    } else {
        std::snprintf(buf, sizeof(buf), "%s = %.2f: no change in times between events",
                      name.c_str(), b);
    }
    return buf;
}

namespace {

std::vector<std::vector<double>> pearson_matrix(const std::vector<const CustomerProfile*>& group,
                                                int dim) {
    const std::size_t n = group.size();
    std::vector<double> mean(dim, 0.0);
    for (const auto* p : group)
        for (int j = 0; j < dim; ++j) mean[j] += p->values[j];
    for (int j = 0; j < dim; ++j) mean[j] /= static_cast<double>(n);

    std::vector<std::vector<double>> cov(dim, std::vector<double>(dim, 0.0));
    for (const auto* p : group) {
        for (int a = 0; a < dim; ++a) {
            double da = p->values[a] - mean[a];
            for (int b = a; b < dim; ++b) {
                cov[a][b] += da * (p->values[b] - mean[b]);
            }
        }
    }
    std::vector<std::vector<double>> corr(dim, std::vector<double>(dim, 0.0));
    for (int a = 0; a < dim; ++a) {
        for (int b = a; b < dim; ++b) {
            double denom = std::sqrt(cov[a][a] * cov[b][b]);
            double r = denom > 0.0 ? cov[a][b] / denom : 0.0;
            corr[a][b] = r;
            corr[b][a] = r;
        }
    }
    return corr;
}

}  // namespace

GroupCorrelations group_correlations(const ProfileSet& set) {
    std::vector<const CustomerProfile*> active, cancelled;
    for (const auto& prof : set.profiles) {
        if (prof.label == ChurnLabel::active) active.push_back(&prof);
        else if (prof.label == ChurnLabel::cancelled) cancelled.push_back(&prof);
    }
    if (active.size() < 3 || cancelled.size() < 3)
        throw DataError("group_correlations needs >= 3 customers per group");
    GroupCorrelations corr;
    corr.names = set.value_names;
    corr.active = pearson_matrix(active, set.dimension());
    corr.cancelled = pearson_matrix(cancelled, set.dimension());
    return corr;
}

std::string correlations_csv(const GroupCorrelations& corr) {
    const int dim = static_cast<int>(corr.names.size());
    // Lower triangle: active group; upper triangle: cancelled group.
    std::string out = "parameter";
    for (const auto& n : corr.names) out += "," + n;
    out += "\n";
    for (int a = 0; a < dim; ++a) {
        out += corr.names[a];
        for (int b = 0; b < dim; ++b) {
            double v = a == b ? 1.0 : (a > b ? corr.active[a][b] : corr.cancelled[a][b]);
            out += ",";
            out += format_double(v);
        }
        out += "\n";
    }
    return out;
}

void write_profiles_csv(const ProfileSet& set, const std::string& path) {
    std::string buf = "customer_id,label";
    for (const auto& n : set.value_names) buf += "," + n;
    for (const auto& n : set.value_names) buf += ",z_" + n;
    buf += "\n";
    for (const auto& prof : set.profiles) {
        buf += prof.customer_id;
        buf += ",";
        buf += to_string(prof.label);
        for (double v : prof.values) {
            buf += ",";
            buf += format_double(v);
        }
        if (prof.standardized.empty()) {
            for (std::size_t j = 0; j < prof.values.size(); ++j) buf += ",";
        } else {
            for (double v : prof.standardized) {
                buf += ",";
                buf += format_double(v);
            }
        }
        buf += "\n";
    }
    write_text_file(path, buf);
}

ProfileSet read_profiles_csv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open profiles: " + path);
    std::string line;
    if (!std::getline(in, line)) throw DataError("empty profiles file: " + path);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    auto header = split_view(line, ',');
    if (header.size() < 4 || header[0] != "customer_id" || header[1] != "label")
        throw DataError("unexpected profiles header in " + path);
    // Columns: customer_id,label,<dim raw>,<dim standardized>
    int dim = static_cast<int>((header.size() - 2) / 2);
    if (2 + 2 * dim != static_cast<int>(header.size()))
        throw DataError("profiles header must carry raw and standardized columns");
    ProfileSet set;
    set.n_genres = dim - 3;
    for (int j = 0; j < dim; ++j) set.value_names.push_back(std::string(header[2 + j]));

    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty()) continue;
        auto fields = split_view(line, ',');
        if (static_cast<int>(fields.size()) != 2 + 2 * dim)
            throw DataError("profiles row width mismatch in " + path);
        CustomerProfile prof;
        prof.customer_id = std::string(fields[0]);
        prof.label = churn_label_from_string(fields[1]);
        for (int j = 0; j < dim; ++j) prof.values.push_back(parse_double(fields[2 + j], path));
        bool has_std = !trim(fields[2 + dim]).empty();
        if (has_std) {
            for (int j = 0; j < dim; ++j)
                prof.standardized.push_back(parse_double(fields[2 + dim + j], path));
        }
        set.profiles.push_back(std::move(prof));
    }
    return set;
}

}  // namespace churnprof
