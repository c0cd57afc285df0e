#ifndef CHURNPROF_BENCH_COMMON_HPP
#define CHURNPROF_BENCH_COMMON_HPP

#include "churnprof/simulate.hpp"

namespace churnprof::bench {

inline ScenarioConfig bench_scenario(int customers, int journeys) {
    ScenarioConfig sc;
    sc.n_customers = customers;
    sc.n_journeys = journeys;
    sc.max_events = 50;
    sc.n_genres = 8;
    sc.seed = 1;
    GroupTruth grp;
    grp.label = ChurnLabel::active;
    grp.fraction = 1.0;
    grp.globals.delta = 2.2;
    grp.globals.sigma_d = 0.3;
    grp.globals.beta = {-0.2, -0.1, -0.2, 0.0, -0.5, -0.3, 0.0, -0.9};
    grp.globals.sigma_b.assign(8, 0.5);
    grp.globals.sigma_p = 0.2;
    grp.phi_mean = -0.3;
    grp.phi_sd = 0.05;
    grp.psi = 3.0;
    sc.groups = {grp};
    return sc;
}

}  // namespace churnprof::bench

#endif
