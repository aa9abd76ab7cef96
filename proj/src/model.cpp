#include "shot/model.hpp"

#include <cmath>
#include <fstream>
#include <random>
#include <sstream>

#include "json.hpp"

#include "shot/error.hpp"

namespace shot {

namespace {

using json = nlohmann::json;
namespace pn = param_names;

std::string hidden_name(std::size_t i, const char* what) {
  return std::string(pn::kHiddenPrefix) + std::to_string(i) + "." + what;
}

Tensor uniform(std::mt19937_64& rng, std::size_t rows, std::size_t cols, double bound) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  Tensor t(rows, cols);
  for (double& v : t.data()) v = dist(rng);
  return t;
}

Tensor uniform_vec(std::mt19937_64& rng, std::size_t n, double bound) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> v(n);
  for (double& x : v) x = dist(rng);
  return Tensor::vector(std::move(v));
}

ForwardResult forward_impl(const Model& model, Tape& tape, const Tensor& batch, Mode mode,
                           BatchNormState* running) {
  if (batch.rank() != 2 || batch.cols() != model.dims.input_dim) {
    throw ShapeError("forward: batch shape " + shape_string(batch.shape()) + " does not match input_dim " +
                     std::to_string(model.dims.input_dim));
  }
  if (mode == Mode::Train && batch.rows() < 2) throw ConfigError("forward: train mode needs at least 2 rows");
  require_finite(batch, "forward input");

  auto enc = model.encoder.bind(tape);
  auto cls = model.classifier.bind(tape);

  Var h = tape.constant(batch);
  for (std::size_t i = 0; i < model.dims.hidden.size(); ++i) {
    h = relu(matmul(h, enc.at(hidden_name(i, "w"))) + enc.at(hidden_name(i, "b")));
  }

  Var pre = matmul(h, enc.at(pn::kBottleneckWeight));
  Var bias = enc.at(pn::kBottleneckBias);
  Var features;
  if (!model.arch.batch_norm) {
    features = pre + bias;
  } else if (mode == Mode::Train) {
    // The bias cancels under batch centering, so it is left out of the train
    // graph; it only shifts the running mean. Its train-mode gradient is exactly 0.
    const double eps = model.arch.bn_epsilon;
    Var mu = mean_axis(pre, 0);
    Var centered = pre - mu;
    Var var = mean_axis(square(centered), 0);
    Var normed = centered / sqrt(add_scalar(var, eps));
    features = normed * enc.at(pn::kBnGamma) + enc.at(pn::kBnBeta);

    if (running) {
      const double m = model.arch.bn_momentum;
      const double n = static_cast<double>(batch.rows());
      const Tensor& b = bias.value();
      for (std::size_t j = 0; j < model.dims.bottleneck; ++j) {
        running->running_mean[j] = (1.0 - m) * running->running_mean[j] + m * (mu.value()[j] + b[j]);
        const double unbiased = var.value()[j] * n / (n - 1.0);
        running->running_var[j] = (1.0 - m) * running->running_var[j] + m * unbiased;
      }
    }
  } else {
    const double eps = model.arch.bn_epsilon;
    Tensor inv_std = Tensor::zeros_like(model.bn.running_var);
    for (std::size_t j = 0; j < inv_std.size(); ++j) inv_std[j] = 1.0 / std::sqrt(model.bn.running_var[j] + eps);
    Var shifted = pre + bias - tape.constant(model.bn.running_mean);
    features = shifted * tape.constant(inv_std) * enc.at(pn::kBnGamma) + enc.at(pn::kBnBeta);
  }

  Var logits;
  if (model.arch.weight_norm) {
    Var v = cls.at(pn::kClsDirection);
    Var row_norm = transpose(sqrt(sum_axis(square(v), 1)));  // 1 x K
    logits = matmul(features, transpose(v)) * (cls.at(pn::kClsScale) / row_norm);
  } else {
    logits = matmul(features, transpose(cls.at(pn::kClsWeight)));
  }
  return {features, logits};
}

json tensor_to_json(const Tensor& t) {
  return json{{"shape", t.shape()}, {"data", std::vector<double>(t.data().begin(), t.data().end())}};
}

Tensor tensor_from_json(const json& j) {
  return Tensor(j.at("shape").get<std::vector<std::size_t>>(), j.at("data").get<std::vector<double>>());
}

json params_to_json(const ParamSet& ps) {
  json out = json::object();
  for (const auto& [name, p] : ps) {
    json e = tensor_to_json(p.value);
    e["trainable"] = p.trainable;
    out[name] = std::move(e);
  }
  return out;
}

ParamSet params_from_json(const json& j) {
  ParamSet ps;
  for (const auto& [name, e] : j.items()) ps.add(name, tensor_from_json(e), e.at("trainable").get<bool>());
  return ps;
}

}  // namespace

std::size_t Model::parameter_count() const { return encoder.scalar_count() + classifier.scalar_count(); }

std::size_t Model::state_count() const {
  std::size_t n = parameter_count();
  if (arch.batch_norm) n += bn.running_mean.size() + bn.running_var.size();
  return n;
}

Model build_model(const ModelDims& dims, std::uint64_t seed, const ArchOptions& arch) {
  if (dims.num_classes < 2) throw ConfigError("build_model: need at least 2 classes");
  if (dims.input_dim < 1 || dims.bottleneck < 1) throw ConfigError("build_model: dimensions must be >= 1");
  for (auto h : dims.hidden) {
    if (h < 1) throw ConfigError("build_model: hidden widths must be >= 1");
  }
  if (!(arch.bn_momentum > 0.0 && arch.bn_momentum <= 1.0)) throw ConfigError("build_model: bn_momentum must lie in (0, 1]");
  if (!(arch.bn_epsilon > 0.0)) throw ConfigError("build_model: bn_epsilon must be positive");

  std::mt19937_64 rng(seed);
  Model m;
  m.dims = dims;
  m.arch = arch;

  std::size_t fan_in = dims.input_dim;
  for (std::size_t i = 0; i < dims.hidden.size(); ++i) {
    const double fi = static_cast<double>(fan_in);
    m.encoder.add(hidden_name(i, "w"), uniform(rng, fan_in, dims.hidden[i], std::sqrt(6.0 / fi)));
    m.encoder.add(hidden_name(i, "b"), uniform_vec(rng, dims.hidden[i], 1.0 / std::sqrt(fi)));
    fan_in = dims.hidden[i];
  }
  const double fi = static_cast<double>(fan_in);
  m.encoder.add(pn::kBottleneckWeight, uniform(rng, fan_in, dims.bottleneck, std::sqrt(3.0 / fi)));
  m.encoder.add(pn::kBottleneckBias, uniform_vec(rng, dims.bottleneck, 1.0 / std::sqrt(fi)));
  if (arch.batch_norm) {
    m.encoder.add(pn::kBnGamma, Tensor::vector(std::vector<double>(dims.bottleneck, 1.0)));
    m.encoder.add(pn::kBnBeta, Tensor::vector(std::vector<double>(dims.bottleneck, 0.0)));
    m.bn.running_mean = Tensor::vector(std::vector<double>(dims.bottleneck, 0.0));
    m.bn.running_var = Tensor::vector(std::vector<double>(dims.bottleneck, 1.0));
  }

  const double bound = 1.0 / std::sqrt(static_cast<double>(dims.bottleneck));
  Tensor v = uniform(rng, dims.num_classes, dims.bottleneck, bound);
  if (arch.weight_norm) {
    std::vector<double> s(dims.num_classes);
    for (std::size_t k = 0; k < dims.num_classes; ++k) {
      double sq = 0.0;
      for (double x : v.row(k)) sq += x * x;
      s[k] = std::sqrt(sq);
    }
    m.classifier.add(pn::kClsDirection, std::move(v));
    m.classifier.add(pn::kClsScale, Tensor::vector(std::move(s)));
  } else {
    m.classifier.add(pn::kClsWeight, std::move(v));
  }
  return m;
}

ForwardResult forward(Model& model, Tape& tape, const Tensor& batch, Mode mode) {
  if (mode == Mode::Eval) return forward_impl(model, tape, batch, mode, nullptr);
  return forward_impl(model, tape, batch, mode, model.arch.batch_norm ? &model.bn : nullptr);
}

ForwardResult forward_eval(const Model& model, Tape& tape, const Tensor& batch) {
  return forward_impl(model, tape, batch, Mode::Eval, nullptr);
}

Outputs predict(const Model& model, const Tensor& batch) {
  Tape tape;
  auto r = forward_eval(model, tape, batch);
  return {r.features.value(), r.logits.value()};
}

Tensor effective_classifier_weight(const Model& model) {
  if (!model.arch.weight_norm) return model.classifier.value(pn::kClsWeight);
  Tensor w = model.classifier.value(pn::kClsDirection);
  const Tensor& s = model.classifier.value(pn::kClsScale);
  for (std::size_t k = 0; k < w.rows(); ++k) {
    double sq = 0.0;
    for (double x : w.row(k)) sq += x * x;
    const double f = s[k] / std::sqrt(sq);
    for (double& x : w.row(k)) x *= f;
  }
  return w;
}

Model freeze_classifier(Model model) {
  model.classifier_frozen = true;
  model.classifier.set_trainable(false);
  return model;
}

Model clone_encoder(const Model& src) {
  Model m = src;
  m.encoder.reset_momentum();
  m.classifier.reset_momentum();
  return m;
}

void reestimate_batch_norm(Model& model, const Tensor& data) {
  if (!model.arch.batch_norm) return;
  if (data.rows() < 2) throw ConfigError("reestimate_batch_norm: need at least 2 rows");
  // Pre-BN activations via a throwaway eval pass with identity normalisation.
  Model probe = model;
  probe.bn.running_mean = Tensor::zeros_like(model.bn.running_mean);
  probe.bn.running_var = Tensor::vector(std::vector<double>(model.dims.bottleneck, 1.0 - model.arch.bn_epsilon));
  probe.encoder.value(pn::kBnGamma) = Tensor::vector(std::vector<double>(model.dims.bottleneck, 1.0));
  probe.encoder.value(pn::kBnBeta) = Tensor::vector(std::vector<double>(model.dims.bottleneck, 0.0));
  Tensor pre = predict(probe, data).features;
  const double n = static_cast<double>(pre.rows());
  for (std::size_t j = 0; j < pre.cols(); ++j) {
    double mu = 0.0;
    for (std::size_t i = 0; i < pre.rows(); ++i) mu += pre(i, j);
    mu /= n;
    double ss = 0.0;
    for (std::size_t i = 0; i < pre.rows(); ++i) ss += (pre(i, j) - mu) * (pre(i, j) - mu);
    model.bn.running_mean[j] = mu;
    model.bn.running_var[j] = ss / (n - 1.0);
  }
}

std::string model_to_json(const Model& model) {
  json j;
  j["format"] = kModelFormat;
  j["dims"] = {{"input_dim", model.dims.input_dim},
               {"hidden", model.dims.hidden},
               {"bottleneck", model.dims.bottleneck},
               {"num_classes", model.dims.num_classes}};
  j["arch"] = {{"batch_norm", model.arch.batch_norm},
               {"weight_norm", model.arch.weight_norm},
               {"bn_momentum", model.arch.bn_momentum},
               {"bn_epsilon", model.arch.bn_epsilon}};
  j["classifier_frozen"] = model.classifier_frozen;
  j["encoder"] = params_to_json(model.encoder);
  j["classifier"] = params_to_json(model.classifier);
  if (model.arch.batch_norm) {
    j["bn"] = {{"running_mean", tensor_to_json(model.bn.running_mean)},
               {"running_var", tensor_to_json(model.bn.running_var)}};
  }
  return j.dump(1);
}

Model model_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw IoError(std::string("model: invalid JSON: ") + e.what());
  }
  if (j.value("format", "") != kModelFormat) throw IoError("model: unsupported format tag");
  try {
    Model m;
    const auto& d = j.at("dims");
    m.dims.input_dim = d.at("input_dim").get<std::size_t>();
    m.dims.hidden = d.at("hidden").get<std::vector<std::size_t>>();
    m.dims.bottleneck = d.at("bottleneck").get<std::size_t>();
    m.dims.num_classes = d.at("num_classes").get<std::size_t>();
    const auto& a = j.at("arch");
    m.arch.batch_norm = a.at("batch_norm").get<bool>();
    m.arch.weight_norm = a.at("weight_norm").get<bool>();
    m.arch.bn_momentum = a.at("bn_momentum").get<double>();
    m.arch.bn_epsilon = a.at("bn_epsilon").get<double>();
    m.classifier_frozen = j.at("classifier_frozen").get<bool>();
    m.encoder = params_from_json(j.at("encoder"));
    m.classifier = params_from_json(j.at("classifier"));
    if (m.arch.batch_norm) {
      m.bn.running_mean = tensor_from_json(j.at("bn").at("running_mean"));
      m.bn.running_var = tensor_from_json(j.at("bn").at("running_var"));
    }
    return m;
  } catch (const json::exception& e) {
    throw IoError(std::string("model: malformed document: ") + e.what());
  }
}

void save_model(const Model& model, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("save_model: cannot write " + path.string());
  out << model_to_json(model) << '\n';
  if (!out) throw IoError("save_model: write failed for " + path.string());
}

Model load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("load_model: cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return model_from_json(ss.str());
}

}  // namespace shot
