#pragma once

#include <cstdint>
#include <vector>

#include "evograd/meta.hpp"
#include "evograd/metrics.hpp"
#include "evograd/problems/mlp.hpp"

namespace evograd::problems::rotation {

inline constexpr std::size_t kPoints = 8;
inline constexpr std::size_t kClasses = 4;
inline constexpr std::size_t kFeatures = 2 * kPoints;

/// Train set in canonical orientation; val and test rotated by true_angle.
/// test_canonical holds the same test instances before rotation.
struct RotationTask {
  Dataset train;
  Dataset val;
  Dataset test;
  Dataset test_canonical;
  double true_angle = 0.0;  // degrees
};

/// Point-cloud glyphs: class c is a fixed random 8-point shape turned by
/// c * 60 degrees, so class identity depends on orientation. Each instance
/// is scaled by U(0.9, 1.1) and jittered per coordinate by N(0, noise^2).
/// Validation holds n / 5 instances, test 2000.
RotationTask gen_rotated_digits(std::size_t n, double true_angle_deg, std::uint64_t seed, double noise = 0.3);

/// Rotates every (x, y) pair of every row by `radians`.
Tensor rotate_points(const Tensor& x, double radians);

double degrees(double radians);
double radians(double degrees);

struct RotationConfig {
  std::size_t n = 3000;
  double true_angle = 30.0;
  double noise = 0.3;
  std::size_t hidden = 32;
  int epochs = 10;
  std::size_t batch = 128;
  double lr = 1e-3;
  double meta_lr = 1e-2;
  HypergradMethod method = HypergradMethod::evograd;
  UpdateOrder order = UpdateOrder::theta_first;
  PerturbationConfig evo;  // sign noise, sigma 0.001, tau 0.05, K 2
  T1T2Config t1t2;
  std::string run_id = "rotation";
};

struct RotationResult {
  double final_angle = 0.0;  // degrees
  double test_accuracy = 0.0;
  double same_orientation_accuracy = 0.0;
  double initial_hypergrad = 0.0;
  std::vector<MetricsRecord> records;
};

/// Trains the classifier on transformer(lambda)(train) while meta-learning
/// lambda on the rotated validation set. HypergradMethod::none trains on the
/// canonical data with lambda fixed at 0.
RotationResult run_rotation_experiment(const RotationConfig& cfg, std::uint64_t seed);

/// Loss callbacks for one step: train on the rotated batch, validate on
/// the val batch.
LossFns rotation_losses(const Dataset& train_batch, const Dataset& val_batch);

}  // namespace evograd::problems::rotation
