#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "bdflow/numcore.hpp"

namespace bdflow {

enum class DatasetKind { Rings, XorBlobs };

std::string_view to_string(DatasetKind kind);
DatasetKind parse_dataset_kind(std::string_view name);

/// Labelled points in the plane, labels in {-1, +1}.
struct Dataset2D {
  Matrix x;           // 2 x p
  Vector y;           // p
  std::uint64_t seed = 0;
  DatasetKind kind = DatasetKind::Rings;

  std::size_t size() const { return static_cast<std::size_t>(y.size()); }
  /// Columns x1,x2,y.
  std::string to_csv() const;
};

/// rings: disk of radius 0.5 (label +1) inside an annulus 0.9..1.3 (label -1).
/// xor_blobs: Gaussian blobs (sd 0.3) at (+-1, +-1), label = sign(c1 c2).
/// Classes alternate, so both are the same size up to one point.
Dataset2D gen_dataset(DatasetKind kind, std::size_t p, std::uint64_t seed);

/// Fully connected ReLU network 2 -> width -> ... -> width -> 1.
/// `depth` counts weight layers; hidden layers apply ReLU, the output is linear.
struct MlpShape {
  int depth = 7;
  int width = 10;
  bool bias = true;

  int layer_in(int l) const { return l == 0 ? 2 : width; }
  int layer_out(int l) const { return l == depth - 1 ? 1 : width; }
  std::size_t parameter_count() const;
  /// Offset of layer l's weights in the flat vector; each layer stores W (row-major, out x in) then b.
  std::size_t offset(int l) const;
};

void to_json(nlohmann::json& j, const MlpShape& shape);
void from_json(const nlohmann::json& j, MlpShape& shape);

struct ForwardPass {
  double score = 0.0;
  std::vector<Vector> pre;   // pre-activations per layer
  std::vector<Vector> post;  // inputs to each layer; post[0] is x
};

/// Logistic loss sum_k w_k log(1 + exp(-y_k s(x_k))) over the whole dataset.
class MlpObjective final : public Objective {
 public:
  MlpObjective(MlpShape shape, Dataset2D data, std::optional<Vector> sample_weights = std::nullopt);

  std::size_t dimension() const override { return shape_.parameter_count(); }
  double value(const Vector& theta) const override;
  Vector gradient(const Vector& theta) const override;

  ForwardPass forward(const Vector& theta, const Vector& x) const;
  /// Scores for every column of xs.
  Vector scores(const Vector& theta, const Matrix& xs) const;
  /// Full-batch backpropagation; same as gradient().
  Vector backward(const Vector& theta) const;
  /// Gaussian weights with standard deviation sqrt(2 / fan_in), zero biases.
  Vector initial_parameters(std::uint64_t seed) const;

  const MlpShape& shape() const { return shape_; }
  const Dataset2D& data() const { return data_; }

 private:
  void check(const Vector& theta) const;
  double loss_and_gradient(const Vector& theta, Vector* grad) const;

  MlpShape shape_;
  Dataset2D data_;
  Vector weights_;
};

/// Fraction of points with sign(score) = label; a zero score is wrong.
double accuracy(const MlpObjective& mlp, const Vector& theta, const Dataset2D& data);

/// theta as little-endian binary64 in `path`, shape header in `path` + ".json".
void save_checkpoint(const std::filesystem::path& path, const Vector& theta, const MlpShape& shape);
Vector load_checkpoint(const std::filesystem::path& path, MlpShape* shape = nullptr);

}  // namespace bdflow
