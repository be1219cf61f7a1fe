#pragma once

#include <Eigen/Dense>

#include "cpf/errors.hpp"

namespace cpf {

enum class PathKind {
    Line,               // origin + direction * gamma
    CircularHelix,      // origin + (r cos th, r sin th, pitch th), th = angular_rate * gamma
    SinusoidOffsetLine  // origin + direction * gamma + lateral_offset + e_z amplitude sin(freq gamma)
};

/// Desired geometric path c_d(gamma), continuously differentiable with an
/// analytically known derivative sup-bound. The closed forms are exactly the
/// three expressions above; parameters not used by a kind are ignored.
///
/// A Line grows without bound in gamma and is only admitted with
/// `allow_unbounded` set; the flag documents that the run gives up the
/// bounded-reference guarantee the rest of the design assumes.
struct PathSpec {
    PathKind kind = PathKind::Line;
    Eigen::Vector3d origin = Eigen::Vector3d::Zero();
    Eigen::Vector3d direction = Eigen::Vector3d::UnitX();  // Line, SinusoidOffsetLine; unit norm
    double radius = 1.0;                                   // CircularHelix, m
    double pitch = 0.0;                                    // CircularHelix, m/rad
    double angular_rate = 1.0;                             // CircularHelix, rad per unit gamma
    double amplitude = 0.0;                                // SinusoidOffsetLine, m
    double spatial_frequency = 1.0;                        // SinusoidOffsetLine, 1/unit gamma
    Eigen::Vector3d lateral_offset = Eigen::Vector3d::Zero();  // SinusoidOffsetLine, m
    bool allow_unbounded = false;
};

/// Throws ValidationError when parameters are out of range for the kind.
void validate_path(const PathSpec& spec);

/// Path point c_d(gamma).
Eigen::Vector3d eval_path(const PathSpec& spec, double gamma);

/// Analytic tangent d c_d / d gamma.
Eigen::Vector3d eval_path_derivative(const PathSpec& spec, double gamma);

/// Exact analytic value of sup_gamma ||d c_d / d gamma||.
double path_derivative_bound(const PathSpec& spec);

/// Analytic bound on ||c_d(gamma)|| valid for |gamma| <= gamma_abs_max.
double path_position_bound(const PathSpec& spec, double gamma_abs_max);

}  // namespace cpf
