#pragma once

#include <string>
#include <vector>

namespace gentron {

struct CheckResult {
    std::string name;
    bool ok = false;
    std::string detail;
};

struct CheckReport {
    std::string suite;
    std::vector<CheckResult> results;
    bool ok() const {
        for (const auto& r : results)
            if (!r.ok) return false;
        return true;
    }
};

// Suites: gradients, schedule, guidance, gaussian-oracle, video-identity.
std::vector<std::string> check_suites();
CheckReport run_check(const std::string& suite);

// Optimal eps-predictor when the data is N(mu, s^2 I):
//   eps*(x_t, t) = (x_t - sqrt(abar_t) mu) * sqrt(1 - abar_t) / (1 - abar_t (1 - s^2))
// Exposed so tests can pit it against brute-force conditional expectation.
double gaussian_oracle_eps(double x_t, double mu, double s, double alpha_bar);

} // namespace gentron
