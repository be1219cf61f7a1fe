#include "cpf/paths.hpp"

#include <cmath>

namespace cpf {

void validate_path(const PathSpec& spec)
{
    switch (spec.kind) {
        case PathKind::Line:
            if (std::abs(spec.direction.norm() - 1.0) > 1e-9) {
                throw ValidationError("path.direction: must be a unit vector");
            }
            if (!spec.allow_unbounded) {
                throw ValidationError(
                    "path.kind line: unbounded reference path; set allow_unbounded to "
                    "accept losing the bounded-path guarantee");
            }
            break;
        case PathKind::CircularHelix:
            if (!(spec.radius > 0.0)) {
                throw ValidationError("path.radius: must be > 0");
            }
            if (spec.angular_rate == 0.0) {
                throw ValidationError("path.angular_rate: must be nonzero");
            }
            break;
        case PathKind::SinusoidOffsetLine:
            if (std::abs(spec.direction.norm() - 1.0) > 1e-9) {
                throw ValidationError("path.direction: must be a unit vector");
            }
            if (spec.amplitude < 0.0) {
                throw ValidationError("path.amplitude: must be >= 0");
            }
            if (!(spec.spatial_frequency > 0.0)) {
                throw ValidationError("path.spatial_frequency: must be > 0");
            }
            break;
    }
}

Eigen::Vector3d eval_path(const PathSpec& spec, double gamma)
{
    switch (spec.kind) {
        case PathKind::Line:
            return spec.origin + spec.direction * gamma;
        case PathKind::CircularHelix: {
            const double th = spec.angular_rate * gamma;
            return spec.origin + Eigen::Vector3d(spec.radius * std::cos(th),
                                                 spec.radius * std::sin(th), spec.pitch * th);
        }
        case PathKind::SinusoidOffsetLine:
            return spec.origin + spec.direction * gamma + spec.lateral_offset +
                   Eigen::Vector3d(0.0, 0.0,
                                   spec.amplitude * std::sin(spec.spatial_frequency * gamma));
    }
    return Eigen::Vector3d::Zero();
}

Eigen::Vector3d eval_path_derivative(const PathSpec& spec, double gamma)
{
    switch (spec.kind) {
        case PathKind::Line:
            return spec.direction;
        case PathKind::CircularHelix: {
            const double th = spec.angular_rate * gamma;
            return spec.angular_rate * Eigen::Vector3d(-spec.radius * std::sin(th),
                                                       spec.radius * std::cos(th), spec.pitch);
        }
        case PathKind::SinusoidOffsetLine:
            return spec.direction +
                   Eigen::Vector3d(0.0, 0.0,
                                   spec.amplitude * spec.spatial_frequency *
                                       std::cos(spec.spatial_frequency * gamma));
    }
    return Eigen::Vector3d::Zero();
}

double path_derivative_bound(const PathSpec& spec)
{
    switch (spec.kind) {
        case PathKind::Line:
            return spec.direction.norm();
        case PathKind::CircularHelix:
            return std::abs(spec.angular_rate) * std::hypot(spec.radius, spec.pitch);
        case PathKind::SinusoidOffsetLine: {
            // || direction + e_z A f cos ||^2 is quadratic in cos with positive
            // curvature; the supremum sits at cos = +/-1.
            const double af = spec.amplitude * spec.spatial_frequency;
            const double dz = std::abs(spec.direction.z());
            return std::sqrt(spec.direction.squaredNorm() + 2.0 * dz * af + af * af);
        }
    }
    return 0.0;
}

double path_position_bound(const PathSpec& spec, double gamma_abs_max)
{
    switch (spec.kind) {
        case PathKind::Line:
            return spec.origin.norm() + spec.direction.norm() * gamma_abs_max;
        case PathKind::CircularHelix:
            return spec.origin.norm() +
                   std::hypot(spec.radius,
                              std::abs(spec.pitch * spec.angular_rate) * gamma_abs_max);
        case PathKind::SinusoidOffsetLine:
            return spec.origin.norm() + spec.lateral_offset.norm() + spec.amplitude +
                   spec.direction.norm() * gamma_abs_max;
    }
    return 0.0;
}

}  // namespace cpf
