// Licensed under the Apache License 2.0 (see LICENSE file).
//
// Frame embedding: a small leaky-ReLU perceptron followed by projection onto
// the unit sphere, trained with the triplet hinge loss
//   L(a, p, n) = max(0, m + |f(a) - f(p)|^2 - |f(a) - f(n)|^2).

#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "tsync/matrix.hpp"

namespace tsync::embed {

inline constexpr double kLeakySlope = 0.01;
inline constexpr double kNormEpsilon = 1e-8;

struct Layer {
  MatrixD weights;  // out x in
  std::vector<double> bias;
  bool leaky = false;  // leaky ReLU applied after the affine map

  std::size_t in_dim() const { return weights.cols(); }
  std::size_t out_dim() const { return weights.rows(); }
};

struct EmbeddingModel {
  std::vector<Layer> layers;

  std::size_t input_dim() const { return layers.empty() ? 0 : layers.front().in_dim(); }
  std::size_t output_dim() const { return layers.empty() ? 0 : layers.back().out_dim(); }
  // Throws ArgumentError if the layer shapes do not chain or weights are not finite.
  void validate() const;
};

// input -> hidden (leaky ReLU) -> output, uniform Glorot initialisation.
EmbeddingModel make_model(std::size_t input_dim, std::size_t hidden_dim, std::size_t output_dim,
                          std::uint64_t seed);

// Single linear layer with W = I, b = 0.
EmbeddingModel identity_model(std::size_t dim);

// Rounds every parameter to float precision so the in-memory model equals
// what a checkpoint stores.
void snap_to_float(EmbeddingModel& model);

std::vector<double> embed(const EmbeddingModel& model, std::span<const float> features);
std::vector<double> embed(const EmbeddingModel& model, std::span<const double> features);

// Descriptors for frames 0, stride, 2*stride, ... of a journey.
struct DescriptorSeq {
  MatrixF values;  // n x d, rows unit norm
  std::uint32_t stride = 1;

  std::size_t size() const { return values.rows(); }
  std::size_t dim() const { return values.cols(); }
};

DescriptorSeq embed_sequence(const EmbeddingModel& model, const MatrixF& frames, std::size_t stride);

double distance(std::span<const double> x, std::span<const double> y);
double distance(std::span<const float> x, std::span<const float> y);

double triplet_loss(std::span<const double> a, std::span<const double> p, std::span<const double> n,
                    double margin);

// ---------------------------------------------------------------------------
// Labels and training

struct FrameRef {
  std::string journey;
  std::size_t frame = 0;

  auto operator<=>(const FrameRef&) const = default;
};

enum class Wave : std::uint8_t { Intra0 = 0, Inter1 = 1, Transitive2 = 2 };

struct TripletLabel {
  FrameRef anchor;
  FrameRef positive;
  FrameRef negative;
  Wave wave = Wave::Intra0;

  bool operator==(const TripletLabel&) const = default;
};

// Read-only access to raw frames by journey id.
class FrameStore {
 public:
  void add(std::string journey, const MatrixF* frames) { journeys_[std::move(journey)] = frames; }
  // Throws DataError if the reference does not resolve.
  std::span<const float> get(const FrameRef& ref) const;
  bool contains(const FrameRef& ref) const;

 private:
  std::map<std::string, const MatrixF*, std::less<>> journeys_;
};

struct TrainConfig {
  double margin = 0.5;
  double learning_rate = 0.05;
  std::size_t batch_size = 64;
  std::size_t epochs = 5;
  std::uint64_t seed = 7;
};

struct Gradients {
  std::vector<MatrixD> weights;
  std::vector<std::vector<double>> bias;

  explicit Gradients(const EmbeddingModel& model);
  void clear();
};

// Adds d(loss)/d(params) into `grad` and returns the loss. Subgradient 0 at
// the hinge.
double accumulate_triplet_gradient(const EmbeddingModel& model, std::span<const float> a,
                                   std::span<const float> p, std::span<const float> n,
                                   double margin, Gradients& grad);
double accumulate_triplet_gradient(const EmbeddingModel& model, std::span<const double> a,
                                   std::span<const double> p, std::span<const double> n,
                                   double margin, Gradients& grad);

// Mini-batch gradient descent on the mean batch loss. Returns the mean loss
// of each epoch. Throws NumericalError on a non-finite loss or weight.
std::vector<double> train(EmbeddingModel& model, const std::vector<TripletLabel>& labels,
                          const FrameStore& frames, const TrainConfig& cfg);

// ---------------------------------------------------------------------------
// Files

void write_checkpoint(const EmbeddingModel& model, const std::string& path);
EmbeddingModel read_checkpoint(const std::string& path);

void write_descriptors(const DescriptorSeq& seq, const std::string& path);
DescriptorSeq read_descriptors(const std::string& path);

}  // namespace tsync::embed
