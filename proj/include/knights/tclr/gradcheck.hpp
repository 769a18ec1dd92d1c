#pragma once

#include <cstddef>
#include <cstdint>

namespace knights::tclr {

/// Entries whose magnitude is below this are compared in absolute terms.
inline constexpr double kGradCheckFloor = 1e-3;

/// |analytic - numeric| / max(|analytic|, |numeric|, kGradCheckFloor).
double gradient_relative_error(double analytic, double numeric);

struct GradCheckReport {
    std::size_t trials = 0;
    double instance = 0.0;      // worst relative error seen per loss
    double local_local = 0.0;
    double global_local = 0.0;
    double encoder = 0.0;       // TinyEncoder chain under the combined loss
};

/// Central finite differences against the analytic gradients on `trials`
/// random configurations (D <= 8, N and N_T <= 6, tau in {0.1, 0.5, 1.0}).
GradCheckReport run_gradient_check(std::size_t trials, std::uint64_t seed, double step = 1e-5);

}  // namespace knights::tclr
