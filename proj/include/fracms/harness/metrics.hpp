#pragma once

#include "fracms/linalg.hpp"

#include <cmath>
#include <stdexcept>

namespace fracms::harness {

class UndefinedErrorError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

struct RelativeError {
    double l2_percent = 0.0;
    double h1_percent = 0.0;
};

/// Relative L2 and H1-seminorm errors of `test` against `ref`, in percent, using
/// the unit-coefficient fine mass M₁ and stiffness K₁ as Gram matrices.
inline RelativeError relative_errors(const linalg::Vector& ref, const linalg::Vector& test,
                                     const linalg::SparseMatrix& m1, const linalg::SparseMatrix& k1)
{
    if (ref.size() != test.size() || ref.size() != m1.rows() || ref.size() != k1.rows()) {
        throw linalg::StructuralError("relative_errors: length mismatch");
    }
    const linalg::Vector e = ref - test;
    const double ref_l2 = ref.dot(m1 * ref);
    const double ref_h1 = ref.dot(k1 * ref);
    if (!(ref_l2 > 0.0) || !(ref_h1 > 0.0)) {
        throw UndefinedErrorError("relative_errors: reference has zero norm");
    }
    return {100.0 * std::sqrt(std::max(0.0, e.dot(m1 * e)) / ref_l2),
            100.0 * std::sqrt(std::max(0.0, e.dot(k1 * e)) / ref_h1)};
}

} // namespace fracms::harness
