#pragma once

namespace metaclust::special {

// Digamma function for x > 0. Upward recurrence psi(x) = psi(x+1) - 1/x moves
// the argument to x >= 8, where a six-term asymptotic series takes over.
// Throws DomainError for x <= 0 or non-finite x.
double digamma(double x);

// Trigamma function (derivative of digamma) for x > 0, same scheme.
double trigamma(double x);

}  // namespace metaclust::special
