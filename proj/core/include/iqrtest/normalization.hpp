#pragma once

#include <string>

namespace iqrtest {

// Interquantile distance from the median of the standard logistic
// distribution: |log(tau/(1-tau))|. Dividing an estimated interquantile
// range by this puts it on the scale of the logistic scale parameter.
double logistic_iqr(double tau);

// Same distance for the standard normal: |Phi^{-1}(tau)|.
double normal_iqr(double tau);

enum class Normalization { logistic, normal, none };

const char* to_string(Normalization n);
Normalization normalization_from_string(const std::string& name);

// Normalizing constant per flag; `none` returns 1.
double iqr_norm(Normalization n, double tau);

}  // namespace iqrtest
