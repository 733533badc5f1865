#pragma once

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "mosk/operators.hpp"

namespace mosk {

enum class ProblemKind { MonotoneEquation, Inclusion, Minimax, Admm };

/// A test problem with a certified solution (or none).  Equation problems
/// carry G in `g`; inclusion problems carry A (resolvent) and B (forward +
/// resolvent).  Instances are immutable and shareable.
struct ProblemInstance {
  std::string id;
  ProblemKind kind = ProblemKind::MonotoneEquation;
  int dim = 0;

  Operator g;     // equation
  Operator a, b;  // inclusion

  std::optional<Vec> known_solution;
  std::string certification;  // analytic | linear-solve | active-set | subgradient | kkt-solve

  double lipschitz = 0.0;    // L of G (equation) or of B (inclusion)
  double gamma_default = 1.0;
  Vec x0;

  // Scheme-appropriate residual at a point: ||G(x)|| or ||G_gamma(x)||.
  double residual_at(const Vec& x, double gamma) const;
};

// Desk-scale caps for the certification oracles.
inline constexpr int kEnumDimCap = 6;
inline constexpr int kLinearSolveDimCap = 200;

// G(x) = S x with S block-diagonal 2x2 rotations scaled by `scale`; x* = 0.
ProblemInstance make_rotation(int dim, double scale);

// G(x) = M x + q with PSD-plus-skew M (verified); x* by dense linear solve.
ProblemInstance make_affine_monotone(const Mat& m, const Vec& q);

// A = N_[lo,hi] (clamp resolvent), B(x) = M x + q affine monotone; x* by
// active-set enumeration over the box faces (dim <= 6).
ProblemInstance make_box_inclusion(const Vec& lo, const Vec& hi, const Mat& m, const Vec& q,
                                   double gamma_default = 1.0);

// A = d(lambda ||.||_1), B(x) = M x + q; x* by coordinatewise subgradient
// sign enumeration (dim <= 6).
ProblemInstance make_l1_quadratic(double lambda, const Mat& m, const Vec& q,
                                  double gamma_default = 1.0);

// Brute-force certification oracles (independent of any solver code).
std::optional<Vec> solve_box_complementarity(const Vec& lo, const Vec& hi, const Mat& m, const Vec& q);
std::optional<Vec> solve_l1_subgradient(double lambda, const Mat& m, const Vec& q);

// JSON round trip for reproducible configs.
ProblemInstance problem_from_json(const nlohmann::json& j);
nlohmann::json problem_to_json(const ProblemInstance& p);

// Registered zoo (deterministic; seeded entries use fixed seeds).
std::vector<std::string> list_problems();
bool is_registered_problem(const std::string& id);
nlohmann::json registered_problem_json(const std::string& id);

}  // namespace mosk
