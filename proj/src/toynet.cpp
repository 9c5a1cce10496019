#include "chanprune/toynet.hpp"

#include <bit>
#include <cmath>
#include <fstream>
#include <random>

#include <fmt/format.h>
#include "json.hpp"

namespace chanprune {
namespace {

using Json = nlohmann::json;

constexpr int kModelFormatVersion = 1;

struct Activations {
  std::vector<Eigen::MatrixXd> pre;   // z_l
  std::vector<Eigen::MatrixXd> post;  // a_l, after masking
  Eigen::MatrixXd logits;
};

Activations run(const ToyNet& net, const Eigen::MatrixXd& samples,
                std::span<const LayerMask> masks) {
  if (samples.cols() != net.input_dim()) {
    throw InvalidInput(fmt::format("samples have {} features, net expects {}",
                                   samples.cols(), net.input_dim()));
  }
  if (masks.size() > net.hidden.size()) {
    throw InvalidInput("more masks than hidden layers");
  }
  Activations act;
  Eigen::MatrixXd input = samples.transpose();
  for (std::size_t l = 0; l < net.hidden.size(); ++l) {
    const auto& layer = net.hidden[l];
    Eigen::MatrixXd z = layer.weight * input;
    z.colwise() += layer.bias;
    Eigen::MatrixXd a = z.cwiseMax(0.0);
    if (l < masks.size()) {
      if (masks[l].channels() != a.rows()) {
        throw InvalidInput(fmt::format("mask {} covers {} channels, layer has {}",
                                       l, masks[l].channels(), a.rows()));
      }
      for (Eigen::Index c = 0; c < a.rows(); ++c) {
        if (!masks[l].keeps(static_cast<int>(c))) a.row(c).setZero();
      }
    }
    act.pre.push_back(std::move(z));
    act.post.push_back(a);
    input = std::move(a);
  }
  act.logits = net.classifier.weight * input;
  act.logits.colwise() += net.classifier.bias;
  return act;
}

// Column-wise softmax probabilities and the mean cross-entropy.
double softmax_xent(const Eigen::MatrixXd& logits, std::span<const int> labels,
                    Eigen::MatrixXd* probs) {
  const Eigen::Index n = logits.cols();
  Eigen::MatrixXd p(logits.rows(), n);
  double total = 0.0;
  for (Eigen::Index j = 0; j < n; ++j) {
    const double peak = logits.col(j).maxCoeff();
    p.col(j) = (logits.col(j).array() - peak).exp();
    const double z = p.col(j).sum();
    p.col(j) /= z;
    total += -(logits(labels[j], j) - peak - std::log(z));
  }
  if (probs) *probs = std::move(p);
  return total / static_cast<double>(n);
}

template <typename Fn>
void for_each_tensor(ToyNet& net, Fn&& fn) {
  for (auto& layer : net.hidden) {
    fn(layer.weight.data(), layer.weight.size());
    fn(layer.bias.data(), layer.bias.size());
  }
  fn(net.classifier.weight.data(), net.classifier.weight.size());
  fn(net.classifier.bias.data(), net.classifier.bias.size());
}

Json shape_of(const DenseLayer& layer) {
  return Json{{"rows", layer.weight.rows()}, {"cols", layer.weight.cols()}};
}

DenseLayer shaped(const Json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  if (rows < 1 || cols < 1) throw InvalidInput("model layer shape must be positive");
  return {Eigen::MatrixXd::Zero(rows, cols), Eigen::VectorXd::Zero(rows)};
}

}  // namespace

int ToyNet::input_dim() const {
  return static_cast<int>(hidden.empty() ? classifier.weight.cols()
                                         : hidden.front().weight.cols());
}

std::vector<int> ToyNet::widths() const {
  std::vector<int> w;
  for (const auto& layer : hidden) w.push_back(static_cast<int>(layer.weight.rows()));
  return w;
}

std::size_t ToyNet::parameter_count() const {
  std::size_t n = 0;
  for (const auto& layer : hidden) n += layer.weight.size() + layer.bias.size();
  return n + classifier.weight.size() + classifier.bias.size();
}

NetSpec ToyNet::spec() const {
  NetSpec spec;
  spec.input_channels = input_dim();
  for (std::size_t l = 0; l < hidden.size(); ++l) {
    spec.layers.push_back({fmt::format("fc{}", l + 1),
                           static_cast<int>(hidden[l].weight.rows()), 1, 1, 1});
  }
  return spec;
}

void validate_toynet(const ToyNet& net) {
  Eigen::Index prev = net.input_dim();
  auto check = [&](const DenseLayer& layer, const std::string& name) {
    if (layer.weight.cols() != prev || layer.bias.size() != layer.weight.rows()) {
      throw InvalidInput(fmt::format("{}: shapes do not chain", name));
    }
    if (!layer.weight.allFinite() || !layer.bias.allFinite()) {
      throw InvalidInput(fmt::format("{}: non-finite parameters", name));
    }
    prev = layer.weight.rows();
  };
  for (std::size_t l = 0; l < net.hidden.size(); ++l) {
    check(net.hidden[l], fmt::format("layer {}", l));
  }
  check(net.classifier, "classifier");
}

ToyNet make_toynet(int input_dim, std::span<const int> widths, int num_classes,
                   std::uint64_t seed) {
  if (input_dim < 1 || num_classes < 2) {
    throw InvalidInput("toy net needs input_dim >= 1 and >= 2 classes");
  }
  std::mt19937_64 rng(seed);
  auto make = [&](int out, int in) {
    std::normal_distribution<double> init(0.0, std::sqrt(2.0 / in));
    DenseLayer layer{Eigen::MatrixXd(out, in), Eigen::VectorXd::Zero(out)};
    for (Eigen::Index j = 0; j < layer.weight.cols(); ++j) {
      for (Eigen::Index i = 0; i < layer.weight.rows(); ++i) {
        layer.weight(i, j) = init(rng);
      }
    }
    return layer;
  };
  ToyNet net;
  int prev = input_dim;
  for (int w : widths) {
    if (w < 1) throw InvalidInput("hidden width must be >= 1");
    net.hidden.push_back(make(w, prev));
    prev = w;
  }
  net.classifier = make(num_classes, prev);
  return net;
}

LabeledBatch gen_synthetic(const Eigen::MatrixXd& means, int samples,
                           double noise_scale, std::uint64_t seed) {
  const auto k = static_cast<int>(means.rows());
  if (samples < 2 * k) throw InvalidInput("synthetic data needs N >= 2K");
  if (!(noise_scale > 0.0)) throw InvalidInput("noise scale must be > 0");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, noise_scale);
  Eigen::MatrixXd x(samples, means.cols());
  std::vector<int> labels(samples);
  for (int i = 0; i < samples; ++i) {
    labels[i] = i % k;
    for (Eigen::Index j = 0; j < means.cols(); ++j) {
      x(i, j) = means(labels[i], j) + noise(rng);
    }
  }
  return make_batch(std::move(x), std::move(labels), k);
}

LabeledBatch gen_synthetic(const SyntheticSpec& spec, std::uint64_t stream) {
  if (!(spec.mean_scale > 0.0)) throw InvalidInput("mean scale must be > 0");
  if (spec.input_dim < 1) throw InvalidInput("input_dim must be >= 1");
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> draw(0.0, spec.mean_scale);
  Eigen::MatrixXd means(spec.num_classes, spec.input_dim);
  for (int k = 0; k < spec.num_classes; ++k) {
    for (int j = 0; j < spec.input_dim; ++j) means(k, j) = draw(rng);
  }
  return gen_synthetic(means, spec.samples, spec.noise_scale,
                       layer_seed(spec.seed, static_cast<int>(stream)));
}

ForwardResult forward_features(const ToyNet& net, const Eigen::MatrixXd& samples,
                               std::span<const LayerMask> masks) {
  Activations act = run(net, samples, masks);
  return {std::move(act.post), std::move(act.logits)};
}

double loss(const ToyNet& net, const LabeledBatch& batch) {
  return softmax_xent(run(net, batch.samples, {}).logits, batch.labels, nullptr);
}

ToyNet gradient(const ToyNet& net, const LabeledBatch& batch,
                double* loss_out) {
  Activations act = run(net, batch.samples, {});
  Eigen::MatrixXd delta;
  const double value = softmax_xent(act.logits, batch.labels, &delta);
  if (loss_out) *loss_out = value;

  const double inv_n = 1.0 / static_cast<double>(batch.size());
  for (int j = 0; j < batch.size(); ++j) delta(batch.labels[j], j) -= 1.0;
  delta *= inv_n;

  ToyNet grad = net;
  const Eigen::MatrixXd input_t = batch.samples;  // N x p
  auto layer_input_t = [&](std::size_t l) -> Eigen::MatrixXd {
    if (l == 0) return input_t;
    return act.post[l - 1].transpose();
  };

  const std::size_t L = net.hidden.size();
  grad.classifier.weight = delta * layer_input_t(L);
  grad.classifier.bias = delta.rowwise().sum();
  Eigen::MatrixXd upstream = net.classifier.weight.transpose() * delta;

  for (std::size_t l = L; l-- > 0;) {
    Eigen::MatrixXd dz =
        upstream.array() * (act.pre[l].array() > 0.0).cast<double>();
    grad.hidden[l].weight = dz * layer_input_t(l);
    grad.hidden[l].bias = dz.rowwise().sum();
    if (l > 0) upstream = net.hidden[l].weight.transpose() * dz;
  }
  return grad;
}

std::vector<double> flatten(const ToyNet& net) {
  std::vector<double> out;
  out.reserve(net.parameter_count());
  for_each_tensor(const_cast<ToyNet&>(net), [&](double* p, Eigen::Index n) {
    out.insert(out.end(), p, p + n);
  });
  return out;
}

void unflatten(ToyNet& net, std::span<const double> params) {
  if (params.size() != net.parameter_count()) {
    throw InvalidInput(fmt::format("{} parameters for a net of {}",
                                   params.size(), net.parameter_count()));
  }
  std::size_t at = 0;
  for_each_tensor(net, [&](double* p, Eigen::Index n) {
    std::copy(params.begin() + at, params.begin() + at + n, p);
    at += n;
  });
}

ToyNet train(ToyNet net, const LabeledBatch& data, const TrainConfig& config,
             std::vector<double>* losses) {
  validate_toynet(net);
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    double value = 0.0;
    ToyNet grad = gradient(net, data, &value);
    if (!std::isfinite(value)) {
      throw TrainingDiverged(
          fmt::format("loss became {} at epoch {}", value, epoch));
    }
    if (losses) losses->push_back(value);
    for (std::size_t l = 0; l < net.hidden.size(); ++l) {
      net.hidden[l].weight -= config.lr * grad.hidden[l].weight;
      net.hidden[l].bias -= config.lr * grad.hidden[l].bias;
    }
    net.classifier.weight -= config.lr * grad.classifier.weight;
    net.classifier.bias -= config.lr * grad.classifier.bias;
  }
  return net;
}

ToyNet apply_masks(const ToyNet& net, std::span<const LayerMask> masks) {
  if (masks.size() != net.hidden.size()) {
    throw InvalidInput(fmt::format("{} masks for {} hidden layers",
                                   masks.size(), net.hidden.size()));
  }
  ToyNet out;
  IndexSet cols(net.input_dim());
  for (int i = 0; i < net.input_dim(); ++i) cols[i] = i;
  for (std::size_t l = 0; l < net.hidden.size(); ++l) {
    const auto& src = net.hidden[l];
    if (masks[l].channels() != src.weight.rows()) {
      throw InvalidInput(fmt::format("mask {} covers {} channels, layer has {}",
                                     l, masks[l].channels(), src.weight.rows()));
    }
    const IndexSet& rows = masks[l].indices();
    out.hidden.push_back({src.weight(rows, cols), src.bias(rows)});
    cols = rows;
  }
  IndexSet classes(net.num_classes());
  for (int k = 0; k < net.num_classes(); ++k) classes[k] = k;
  out.classifier = {net.classifier.weight(classes, cols), net.classifier.bias};
  return out;
}

double accuracy_from_logits(const Eigen::MatrixXd& logits,
                            std::span<const int> labels) {
  if (logits.cols() != static_cast<Eigen::Index>(labels.size())) {
    throw InvalidInput("logits and labels disagree on N");
  }
  if (labels.empty()) return 0.0;
  int correct = 0;
  for (Eigen::Index j = 0; j < logits.cols(); ++j) {
    Eigen::Index best = 0;
    for (Eigen::Index k = 1; k < logits.rows(); ++k) {
      if (logits(k, j) > logits(best, j)) best = k;
    }
    if (best == labels[j]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

double evaluate(const ToyNet& net, const LabeledBatch& batch) {
  return accuracy_from_logits(run(net, batch.samples, {}).logits, batch.labels);
}

FeatureBlock to_block(const Eigen::MatrixXd& activations) {
  FeatureBlock block;
  block.samples = static_cast<int>(activations.cols());
  block.channels = static_cast<int>(activations.rows());
  block.values.resize(activations.size());
  std::size_t at = 0;
  for (Eigen::Index n = 0; n < activations.cols(); ++n) {
    for (Eigen::Index c = 0; c < activations.rows(); ++c) {
      block.values[at++] = activations(c, n);
    }
  }
  return block;
}

FeatureBlock ToyNetFeatures::layer_features(int layer,
                                            std::span<const LayerMask> upstream) {
  if (layer < 0 || layer >= static_cast<int>(net_.hidden.size())) {
    throw InvalidInput(fmt::format("toy net has no layer {}", layer));
  }
  auto masks = upstream.first(std::min<std::size_t>(upstream.size(), layer));
  return to_block(run(net_, samples_, masks).post[layer]);
}

void save_toynet(const ToyNet& net, const std::filesystem::path& path) {
  validate_toynet(net);
  auto blob = path;
  blob.replace_extension(".bin");

  Json doc;
  doc["format"] = "chanprune-toynet";
  doc["version"] = kModelFormatVersion;
  doc["dtype"] = "f64le";
  doc["input_dim"] = net.input_dim();
  doc["hidden"] = Json::array();
  for (const auto& layer : net.hidden) doc["hidden"].push_back(shape_of(layer));
  doc["classifier"] = shape_of(net.classifier);
  doc["param_count"] = net.parameter_count();
  doc["params_file"] = blob.filename().string();

  std::ofstream meta(path);
  if (!meta) throw IoError(fmt::format("cannot write {}", path.string()));
  meta << doc.dump(2) << '\n';

  std::ofstream bin(blob, std::ios::binary);
  if (!bin) throw IoError(fmt::format("cannot write {}", blob.string()));
  for (double v : flatten(net)) {
    auto bits = std::bit_cast<std::uint64_t>(v);
    char bytes[8];
    for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((bits >> (8 * i)) & 0xFF);
    bin.write(bytes, 8);
  }
}

ToyNet load_toynet(const std::filesystem::path& path) {
  std::ifstream meta(path);
  if (!meta) throw IoError(fmt::format("cannot read {}", path.string()));
  Json doc;
  try {
    doc = Json::parse(meta);
  } catch (const Json::exception& e) {
    throw InvalidInput(fmt::format("malformed model file: {}", e.what()));
  }
  if (doc.value("format", "") != "chanprune-toynet" ||
      doc.value("version", 0) != kModelFormatVersion) {
    throw InvalidInput("unsupported model format or version");
  }

  ToyNet net;
  for (const auto& shape : doc.at("hidden")) net.hidden.push_back(shaped(shape));
  net.classifier = shaped(doc.at("classifier"));
  if (net.input_dim() != doc.at("input_dim").get<int>()) {
    throw InvalidInput("model input_dim disagrees with layer shapes");
  }

  const auto blob = path.parent_path() / doc.at("params_file").get<std::string>();
  std::ifstream bin(blob, std::ios::binary);
  if (!bin) throw IoError(fmt::format("cannot read {}", blob.string()));
  std::vector<double> params(net.parameter_count());
  for (double& v : params) {
    unsigned char bytes[8];
    if (!bin.read(reinterpret_cast<char*>(bytes), 8)) {
      throw InvalidInput("model parameter file is truncated");
    }
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
    v = std::bit_cast<double>(bits);
  }
  if (bin.peek() != std::char_traits<char>::eof()) {
    throw InvalidInput("model parameter file has trailing bytes");
  }
  unflatten(net, params);
  validate_toynet(net);
  return net;
}

}  // namespace chanprune
