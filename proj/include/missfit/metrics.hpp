#pragma once

#include "missfit/core.hpp"

namespace missfit {

double mean_squared_error(const Vector& y, const Vector& yhat);

// 1 - SS_res / SS_tot. Throws on zero-variance y.
double r_squared(const Vector& y, const Vector& yhat);

// Area under the ROC curve via the rank statistic with midranks for ties.
double auc(const Vector& y, const Vector& scores);

// 2 * AUC - 1. Throws unless both classes are present.
double scaled_auc(const Vector& y, const Vector& scores);

// R^2 for continuous targets, 2*AUC-1 for 0/1 targets.
double predictive_score(const Vector& y, const Vector& yhat);

}  // namespace missfit
