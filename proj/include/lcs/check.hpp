#pragma once

// One certified identity: what was checked, which formula it instantiates,
// the measured residual and the tolerance it was held to.

#include <cmath>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace lcs {

struct Check {
    std::string name;
    std::string anchor; // formula the check instantiates
    double residual = 0.0;
    double tolerance = 0.0;
    bool passed = false;
    std::map<std::string, double> data; // ranks, counts, auxiliary measurements
    std::string detail;                 // worst point or failure explanation
};

inline Check make_check(std::string name, std::string anchor, double residual, double tol, std::string detail = {})
{
    Check c;
    c.name = std::move(name);
    c.anchor = std::move(anchor);
    c.residual = residual;
    c.tolerance = tol;
    c.passed = std::isfinite(residual) && residual < tol;
    c.detail = std::move(detail);
    return c;
}

// Boolean check with no residual.
inline Check make_flag(std::string name, std::string anchor, bool ok, std::string detail = {})
{
    Check c;
    c.name = std::move(name);
    c.anchor = std::move(anchor);
    c.residual = ok ? 0.0 : 1.0;
    c.tolerance = 0.5;
    c.passed = ok;
    c.detail = std::move(detail);
    return c;
}

inline bool all_passed(const std::vector<Check> &checks)
{
    for (const auto &c : checks) {
        if (!c.passed) {
            return false;
        }
    }
    return true;
}

inline const Check *find_check(const std::vector<Check> &checks, const std::string &name)
{
    for (const auto &c : checks) {
        if (c.name == name) {
            return &c;
        }
    }
    return nullptr;
}

inline void append(std::vector<Check> &into, const std::vector<Check> &from, const std::string &prefix = {})
{
    for (auto c : from) {
        if (!prefix.empty()) {
            c.name = prefix + c.name;
        }
        into.push_back(std::move(c));
    }
}

} // namespace lcs
