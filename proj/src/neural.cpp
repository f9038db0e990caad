#include "bdflow/neural.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "bdflow/errors.hpp"
#include "bdflow/report_io.hpp"
#include "bdflow/rng.hpp"

namespace bdflow {

namespace {

using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstWeights = Eigen::Map<const RowMajor>;
using Weights = Eigen::Map<RowMajor>;

constexpr std::uint64_t kDataStream = 3;
constexpr std::uint64_t kInitStream = 4;

double softplus(double t) { return std::max(t, 0.0) + std::log1p(std::exp(-std::abs(t))); }

double sigmoid(double t) {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

}  // namespace

std::string_view to_string(DatasetKind kind) {
  return kind == DatasetKind::Rings ? "rings" : "xor_blobs";
}

DatasetKind parse_dataset_kind(std::string_view name) {
  if (name == "rings") return DatasetKind::Rings;
  if (name == "xor_blobs" || name == "xor") return DatasetKind::XorBlobs;
  throw InvalidArgument("unknown dataset generator '" + std::string(name) + "'");
}

std::string Dataset2D::to_csv() const {
  std::ostringstream o;
  o << "x1,x2,y\n";
  for (Eigen::Index k = 0; k < y.size(); ++k)
    o << format_double(x(0, k)) << ',' << format_double(x(1, k)) << ',' << (y(k) > 0 ? "1" : "-1") << '\n';
  return o.str();
}

Dataset2D gen_dataset(DatasetKind kind, std::size_t p, std::uint64_t seed) {
  if (p < 4) throw InvalidArgument("dataset needs at least 4 points");
  CounterRng rng(seed, kDataStream);
  Dataset2D d;
  d.seed = seed;
  d.kind = kind;
  d.x.resize(2, static_cast<Eigen::Index>(p));
  d.y.resize(static_cast<Eigen::Index>(p));
  for (Eigen::Index k = 0; k < d.y.size(); ++k) {
    if (kind == DatasetKind::Rings) {
      const bool inner = k % 2 == 0;
      const double angle = rng.uniform(0.0, 2.0 * std::numbers::pi);
      const double r = inner ? 0.5 * std::sqrt(rng.uniform()) : std::sqrt(rng.uniform(0.81, 1.69));
      d.x(0, k) = r * std::cos(angle);
      d.x(1, k) = r * std::sin(angle);
      d.y(k) = inner ? 1.0 : -1.0;
    } else {
      const int blob = static_cast<int>(k % 4);
      const double c1 = blob % 2 == 0 ? 1.0 : -1.0;
      const double c2 = blob < 2 ? 1.0 : -1.0;
      d.x(0, k) = c1 + 0.3 * rng.normal();
      d.x(1, k) = c2 + 0.3 * rng.normal();
      d.y(k) = c1 * c2;
    }
  }
  return d;
}

std::size_t MlpShape::parameter_count() const { return offset(depth); }

std::size_t MlpShape::offset(int l) const {
  if (depth < 1 || width < 1) throw InvalidArgument("network needs depth >= 1 and width >= 1");
  std::size_t total = 0;
  for (int i = 0; i < l; ++i) {
    total += static_cast<std::size_t>(layer_out(i)) * static_cast<std::size_t>(layer_in(i));
    if (bias) total += static_cast<std::size_t>(layer_out(i));
  }
  return total;
}

void to_json(nlohmann::json& j, const MlpShape& shape) {
  j = nlohmann::json{{"depth", shape.depth}, {"width", shape.width}, {"bias", shape.bias}, {"input", 2}};
}

void from_json(const nlohmann::json& j, MlpShape& shape) {
  shape.depth = j.at("depth").get<int>();
  shape.width = j.at("width").get<int>();
  shape.bias = j.value("bias", true);
}

MlpObjective::MlpObjective(MlpShape shape, Dataset2D data, std::optional<Vector> sample_weights)
    : shape_(shape), data_(std::move(data)) {
  (void)shape_.parameter_count();
  if (data_.x.rows() != 2 || data_.x.cols() != data_.y.size())
    throw InvalidArgument("dataset inputs must be 2 x p with p labels");
  weights_ = sample_weights ? *sample_weights : Vector::Ones(data_.y.size());
  if (weights_.size() != data_.y.size()) throw InvalidArgument("one sample weight per point required");
}

void MlpObjective::check(const Vector& theta) const {
  if (static_cast<std::size_t>(theta.size()) != shape_.parameter_count())
    throw InvalidArgument("parameter vector has the wrong length");
}

ForwardPass MlpObjective::forward(const Vector& theta, const Vector& x) const {
  check(theta);
  if (x.size() != 2) throw InvalidArgument("network input must be 2-dimensional");
  ForwardPass out;
  out.post.push_back(x);
  for (int l = 0; l < shape_.depth; ++l) {
    const int in = shape_.layer_in(l), o = shape_.layer_out(l);
    const double* base = theta.data() + shape_.offset(l);
    Vector z = ConstWeights(base, o, in) * out.post.back();
    if (shape_.bias) z += Eigen::Map<const Vector>(base + o * in, o);
    out.pre.push_back(z);
    if (l + 1 < shape_.depth) out.post.push_back(z.cwiseMax(0.0));
  }
  out.score = out.pre.back()(0);
  return out;
}

Vector MlpObjective::scores(const Vector& theta, const Matrix& xs) const {
  check(theta);
  Matrix h = xs;
  for (int l = 0; l < shape_.depth; ++l) {
    const int in = shape_.layer_in(l), o = shape_.layer_out(l);
    const double* base = theta.data() + shape_.offset(l);
    Matrix z = ConstWeights(base, o, in) * h;
    if (shape_.bias) z.colwise() += Eigen::Map<const Vector>(base + o * in, o);
    h = l + 1 < shape_.depth ? Matrix(z.cwiseMax(0.0)) : z;
  }
  return h.row(0).transpose();
}

double MlpObjective::loss_and_gradient(const Vector& theta, Vector* grad) const {
  check(theta);
  const int depth = shape_.depth;
  std::vector<Matrix> inputs(static_cast<std::size_t>(depth));
  std::vector<Matrix> pre(static_cast<std::size_t>(depth));
  Matrix h = data_.x;
  for (int l = 0; l < depth; ++l) {
    const int in = shape_.layer_in(l), o = shape_.layer_out(l);
    const double* base = theta.data() + shape_.offset(l);
    inputs[static_cast<std::size_t>(l)] = h;
    Matrix z = ConstWeights(base, o, in) * h;
    if (shape_.bias) z.colwise() += Eigen::Map<const Vector>(base + o * in, o);
    if (l + 1 < depth) h = z.cwiseMax(0.0);
    pre[static_cast<std::size_t>(l)] = std::move(z);
  }
  const Eigen::Index p = data_.y.size();
  const auto& s = pre.back();
  double loss = 0.0;
  Matrix delta(1, p);
  for (Eigen::Index k = 0; k < p; ++k) {
    const double t = -data_.y(k) * s(0, k);
    loss += weights_(k) * softplus(t);
    delta(0, k) = -data_.y(k) * weights_(k) * sigmoid(t);
  }
  if (grad == nullptr) return loss;

  grad->setZero(theta.size());
  for (int l = depth - 1; l >= 0; --l) {
    const int in = shape_.layer_in(l), o = shape_.layer_out(l);
    const std::size_t off = shape_.offset(l);
    Weights(grad->data() + off, o, in) = delta * inputs[static_cast<std::size_t>(l)].transpose();
    if (shape_.bias) Eigen::Map<Vector>(grad->data() + off + o * in, o) = delta.rowwise().sum();
    if (l > 0) {
      const Matrix back = ConstWeights(theta.data() + off, o, in).transpose() * delta;
      const Matrix& z = pre[static_cast<std::size_t>(l - 1)];
      delta = back.cwiseProduct((z.array() > 0.0).cast<double>().matrix());
    }
  }
  return loss;
}

double MlpObjective::value(const Vector& theta) const { return loss_and_gradient(theta, nullptr); }

Vector MlpObjective::gradient(const Vector& theta) const {
  Vector g;
  loss_and_gradient(theta, &g);
  return g;
}

Vector MlpObjective::backward(const Vector& theta) const { return gradient(theta); }

Vector MlpObjective::initial_parameters(std::uint64_t seed) const {
  CounterRng rng(seed, kInitStream);
  Vector theta = Vector::Zero(static_cast<Eigen::Index>(shape_.parameter_count()));
  for (int l = 0; l < shape_.depth; ++l) {
    const int in = shape_.layer_in(l), o = shape_.layer_out(l);
    const double scale = std::sqrt(2.0 / in);
    const std::size_t off = shape_.offset(l);
    for (int i = 0; i < o * in; ++i) theta(static_cast<Eigen::Index>(off) + i) = scale * rng.normal();
  }
  return theta;
}

double accuracy(const MlpObjective& mlp, const Vector& theta, const Dataset2D& data) {
  if (data.size() == 0) return 0.0;
  const Vector s = mlp.scores(theta, data.x);
  std::size_t hits = 0;
  for (Eigen::Index k = 0; k < s.size(); ++k) {
    if (s(k) * data.y(k) > 0.0) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(data.size());
}

void save_checkpoint(const std::filesystem::path& path, const Vector& theta, const MlpShape& shape) {
  if (static_cast<std::size_t>(theta.size()) != shape.parameter_count())
    throw InvalidArgument("checkpoint length does not match the shape");
  std::string bytes(static_cast<std::size_t>(theta.size()) * 8, '\0');
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    auto bits = std::bit_cast<std::uint64_t>(theta(i));
    for (int b = 0; b < 8; ++b) bytes[static_cast<std::size_t>(i) * 8 + b] = static_cast<char>((bits >> (8 * b)) & 0xff);
  }
  write_text(path, bytes);
  nlohmann::json header{{"shape", shape}, {"count", theta.size()}, {"dtype", "float64-le"},
                        {"file", path.filename().string()}};
  write_text(path.string() + ".json", header.dump(2) + "\n");
}

Vector load_checkpoint(const std::filesystem::path& path, MlpShape* shape) {
  const auto header = nlohmann::json::parse(read_text(path.string() + ".json"));
  const auto count = header.at("count").get<std::size_t>();
  const std::string bytes = read_text(path);
  if (bytes.size() != count * 8) throw InvalidArgument("checkpoint size does not match its header");
  Vector theta(static_cast<Eigen::Index>(count));
  for (std::size_t i = 0; i < count; ++i) {
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[i * 8 + b])) << (8 * b);
    theta(static_cast<Eigen::Index>(i)) = std::bit_cast<double>(bits);
  }
  if (shape != nullptr) *shape = header.at("shape").get<MlpShape>();
  return theta;
}

}  // namespace bdflow
