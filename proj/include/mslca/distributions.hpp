#pragma once

#include <functional>
#include <vector>

namespace mslca {

// Chi-square CDF and upper tail with `dof` degrees of freedom (regularized
// incomplete gamma).
double chi2_cdf(double x, double dof);
double chi2_sf(double x, double dof);

// sup_x |F_n(x) - F(x)| for the empirical CDF of `sample`.
double ks_distance(std::vector<double> sample, const std::function<double(double)>& cdf);

double ks_uniform(std::vector<double> sample);

}  // namespace mslca
