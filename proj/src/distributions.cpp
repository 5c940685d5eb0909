#include "mslca/distributions.hpp"

#include "mslca/errors.hpp"

#include <boost/math/special_functions/gamma.hpp>

#include <algorithm>

namespace mslca {

double chi2_cdf(double x, double dof) {
    if (!(dof > 0.0)) throw Error("chi-square degrees of freedom must be positive");
    if (x <= 0.0) return 0.0;
    return boost::math::gamma_p(0.5 * dof, 0.5 * x);
}

double chi2_sf(double x, double dof) {
    if (!(dof > 0.0)) throw Error("chi-square degrees of freedom must be positive");
    if (x <= 0.0) return 1.0;
    return boost::math::gamma_q(0.5 * dof, 0.5 * x);
}

double ks_distance(std::vector<double> sample, const std::function<double(double)>& cdf) {
    if (sample.empty()) throw Error("ks_distance: empty sample");
    std::sort(sample.begin(), sample.end());
    const double n = static_cast<double>(sample.size());
    double d = 0.0;
    for (std::size_t i = 0; i < sample.size(); ++i) {
        const double f = cdf(sample[i]);
        d = std::max({d, static_cast<double>(i + 1) / n - f, f - static_cast<double>(i) / n});
    }
    return d;
}

double ks_uniform(std::vector<double> sample) {
    return ks_distance(std::move(sample), [](double x) { return std::clamp(x, 0.0, 1.0); });
}

}  // namespace mslca
