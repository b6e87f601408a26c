#include "ipr/model.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "ipr/errors.hpp"
#include "ipr/fp_format.hpp"

namespace ipr {

namespace {

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;

double act_apply(Activation act, double x) {
  switch (act) {
    case Activation::Linear:
      return x;
    case Activation::Relu:
      return x > 0.0 ? x : 0.0;
    case Activation::Tanh:
      return std::tanh(x);
    case Activation::Gelu: {
      const double u = kGeluC * (x + kGeluA * x * x * x);
      return 0.5 * x * (1.0 + std::tanh(u));
    }
  }
  throw InputError("act_apply: unknown activation");
}

double act_derivative(Activation act, double x) {
  switch (act) {
    case Activation::Linear:
      return 1.0;
    case Activation::Relu:
      return x > 0.0 ? 1.0 : 0.0;
    case Activation::Tanh: {
      const double t = std::tanh(x);
      return 1.0 - t * t;
    }
    case Activation::Gelu: {
      const double u = kGeluC * (x + kGeluA * x * x * x);
      const double t = std::tanh(u);
      const double du = kGeluC * (1.0 + 3.0 * kGeluA * x * x);
      return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
    }
  }
  throw InputError("act_derivative: unknown activation");
}

Layer make_layer(std::size_t in_dim, std::size_t out_dim, Activation act,
                 RngStream& rng) {
  Layer layer;
  layer.weight = Matrix(out_dim, in_dim);
  const double scale = std::sqrt(2.0 / static_cast<double>(in_dim));
  for (std::size_t r = 0; r < out_dim; ++r) {
    for (std::size_t c = 0; c < in_dim; ++c) {
      layer.weight(r, c) = scale * rng.next_gaussian();
    }
  }
  layer.bias.assign(out_dim, 0.0);
  layer.act = act;
  return layer;
}

std::vector<Layer> make_stack(std::size_t in_dim,
                              const std::vector<std::size_t>& hidden,
                              std::size_t out_dim, Activation hidden_act,
                              RngStream& rng) {
  std::vector<Layer> stack;
  std::size_t prev = in_dim;
  for (std::size_t width : hidden) {
    stack.push_back(make_layer(prev, width, hidden_act, rng));
    prev = width;
  }
  stack.push_back(make_layer(prev, out_dim, Activation::Linear, rng));
  return stack;
}

void check_same_shape(const Matrix& a, const Matrix& b, const std::string& name) {
  if (a.rows != b.rows || a.cols != b.cols) {
    throw InputError("shape mismatch on " + name);
  }
}

}  // namespace

std::string activation_name(Activation act) {
  switch (act) {
    case Activation::Linear:
      return "linear";
    case Activation::Relu:
      return "relu";
    case Activation::Tanh:
      return "tanh";
    case Activation::Gelu:
      return "gelu";
  }
  throw InputError("activation_name: unknown activation");
}

Activation activation_from_name(const std::string& name) {
  if (name == "linear") return Activation::Linear;
  if (name == "relu") return Activation::Relu;
  if (name == "tanh") return Activation::Tanh;
  if (name == "gelu") return Activation::Gelu;
  throw ConfigError("unknown activation '" + name + "'");
}

void ModelConfig::validate() const {
  if (input_dim == 0) {
    throw ConfigError("model: input_dim must be positive");
  }
  if (embedding_dim == 0) {
    throw ConfigError("model: embedding_dim must be positive");
  }
  if (class_count < 2) {
    throw ConfigError("model: class_count must be at least 2, got " +
                      std::to_string(class_count));
  }
  for (std::size_t w : encoder_hidden) {
    if (w == 0) throw ConfigError("model: encoder hidden width must be positive");
  }
  for (std::size_t w : classifier_hidden) {
    if (w == 0) throw ConfigError("model: classifier hidden width must be positive");
  }
}

ModelParams ModelParams::init(const ModelConfig& config, RngStream& rng) {
  config.validate();
  ModelParams params;
  params.input_dim = config.input_dim;
  params.embedding_dim = config.embedding_dim;
  params.class_count = config.class_count;
  params.encoder = make_stack(config.input_dim, config.encoder_hidden,
                              config.embedding_dim, config.hidden_activation,
                              rng);
  params.classifier = make_stack(config.embedding_dim, config.classifier_hidden,
                                 config.class_count, config.hidden_activation,
                                 rng);
  return params;
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto* stack : {&encoder, &classifier}) {
    for (const Layer& layer : *stack) {
      n += layer.weight.values.size() + layer.bias.size();
    }
  }
  return n;
}

Vector forward_stack(const std::vector<Layer>& stack, const Vector& x,
                     ForwardCache* cache) {
  if (stack.empty()) {
    throw InputError("forward_stack: empty layer stack");
  }
  if (cache != nullptr) {
    cache->input = x;
    cache->pre_activations.clear();
    cache->activations.clear();
    cache->valid = false;
  }
  Vector a = x;
  for (const Layer& layer : stack) {
    Vector z = matvec(layer.weight, a);
    for (std::size_t i = 0; i < z.size(); ++i) {
      z[i] += layer.bias[i];
    }
    Vector out(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) {
      out[i] = act_apply(layer.act, z[i]);
    }
    if (cache != nullptr) {
      cache->pre_activations.push_back(z);
      cache->activations.push_back(out);
    }
    a = std::move(out);
  }
  if (cache != nullptr) {
    cache->valid = true;
  }
  return a;
}

Vector encode(const ModelParams& params, const Vector& x) {
  if (x.size() != params.input_dim) {
    throw InputError("encode: expected input of length " +
                     std::to_string(params.input_dim) + ", got " +
                     std::to_string(x.size()));
  }
  return forward_stack(params.encoder, x, nullptr);
}

Vector encode(const ModelParams& params, const Vector& x, ForwardCache& cache) {
  if (x.size() != params.input_dim) {
    throw InputError("encode: expected input of length " +
                     std::to_string(params.input_dim) + ", got " +
                     std::to_string(x.size()));
  }
  return forward_stack(params.encoder, x, &cache);
}

Vector classify(const ModelParams& params, const Vector& embedding) {
  if (embedding.size() != params.embedding_dim) {
    throw InputError("classify: expected embedding of length " +
                     std::to_string(params.embedding_dim) + ", got " +
                     std::to_string(embedding.size()));
  }
  return forward_stack(params.classifier, embedding, nullptr);
}

Vector classify(const ModelParams& params, const Vector& embedding,
                ForwardCache& cache) {
  if (embedding.size() != params.embedding_dim) {
    throw InputError("classify: expected embedding of length " +
                     std::to_string(params.embedding_dim) + ", got " +
                     std::to_string(embedding.size()));
  }
  return forward_stack(params.classifier, embedding, &cache);
}

std::size_t argmax_class(const Vector& logits) {
  if (logits.empty()) {
    throw InputError("argmax_class: empty logits");
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < logits.size(); ++i) {
    if (logits[i] > logits[best]) best = i;
  }
  return best;
}

CrossEntropy cross_entropy_loss(const Vector& logits, std::size_t target,
                                double weight) {
  if (logits.empty()) {
    throw InputError("cross_entropy_loss: empty logits");
  }
  if (target >= logits.size()) {
    throw InputError("cross_entropy_loss: target " + std::to_string(target) +
                     " out of range for " + std::to_string(logits.size()) +
                     " classes");
  }
  if (weight < 0.0) {
    throw InputError("cross_entropy_loss: negative class weight");
  }
  if (!all_finite(logits)) {
    throw NumericalError("cross_entropy_loss: non-finite logits");
  }
  const double lse = log_sum_exp(logits);
  CrossEntropy result;
  result.loss = weight * (lse - logits[target]);
  result.logit_grad.resize(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double p = std::exp(logits[i] - lse);
    result.logit_grad[i] = weight * (p - (i == target ? 1.0 : 0.0));
  }
  return result;
}

StackGrads backward_stack(const std::vector<Layer>& stack,
                          const ForwardCache& cache, const Vector& upstream) {
  if (!cache.valid || cache.activations.size() != stack.size()) {
    throw InputError("backward_stack: missing or stale forward cache");
  }
  if (upstream.size() != cache.activations.back().size()) {
    throw InputError("backward_stack: upstream gradient has length " +
                     std::to_string(upstream.size()) + ", expected " +
                     std::to_string(cache.activations.back().size()));
  }
  StackGrads grads;
  grads.layers.resize(stack.size());
  Vector delta = upstream;  // d(loss)/d(activation of current layer)
  for (std::size_t li = stack.size(); li-- > 0;) {
    const Layer& layer = stack[li];
    const Vector& z = cache.pre_activations[li];
    const Vector& below =
        li == 0 ? cache.input : cache.activations[li - 1];
    Vector dz(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) {
      dz[i] = delta[i] * act_derivative(layer.act, z[i]);
    }
    LayerGrads& lg = grads.layers[li];
    lg.weight = Matrix(layer.weight.rows, layer.weight.cols);
    for (std::size_t r = 0; r < layer.weight.rows; ++r) {
      for (std::size_t c = 0; c < layer.weight.cols; ++c) {
        lg.weight(r, c) = dz[r] * below[c];
      }
    }
    lg.bias = dz;
    Vector next(layer.weight.cols, 0.0);
    for (std::size_t c = 0; c < layer.weight.cols; ++c) {
      double acc = 0.0;
      for (std::size_t r = 0; r < layer.weight.rows; ++r) {
        acc += layer.weight(r, c) * dz[r];
      }
      next[c] = acc;
    }
    delta = std::move(next);
  }
  grads.input_grad = std::move(delta);
  return grads;
}

ModelGrads ModelGrads::zeros_like(const ModelParams& params) {
  ModelGrads g;
  for (const Layer& layer : params.encoder) {
    g.encoder.push_back({Matrix(layer.weight.rows, layer.weight.cols),
                         Vector(layer.bias.size(), 0.0)});
  }
  for (const Layer& layer : params.classifier) {
    g.classifier.push_back({Matrix(layer.weight.rows, layer.weight.cols),
                            Vector(layer.bias.size(), 0.0)});
  }
  return g;
}

namespace {

void add_scaled(std::vector<LayerGrads>& into, const StackGrads& from,
                double scale, const char* what) {
  if (into.size() != from.layers.size()) {
    throw InputError(std::string("ModelGrads: layer count mismatch on ") + what);
  }
  for (std::size_t li = 0; li < into.size(); ++li) {
    check_same_shape(into[li].weight, from.layers[li].weight, what);
    auto& w = into[li].weight.values;
    const auto& gw = from.layers[li].weight.values;
    for (std::size_t i = 0; i < w.size(); ++i) {
      w[i] += scale * gw[i];
    }
    auto& b = into[li].bias;
    const auto& gb = from.layers[li].bias;
    for (std::size_t i = 0; i < b.size(); ++i) {
      b[i] += scale * gb[i];
    }
  }
}

}  // namespace

void ModelGrads::add_scaled_encoder(const StackGrads& g, double scale) {
  add_scaled(encoder, g, scale, "encoder");
}

void ModelGrads::add_scaled_classifier(const StackGrads& g, double scale) {
  add_scaled(classifier, g, scale, "classifier");
}

void AdamWConfig::validate() const {
  if (!(learning_rate > 0.0)) {
    throw ConfigError("adamw: learning_rate must be positive");
  }
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError("adamw: betas must lie in [0, 1)");
  }
  if (!(epsilon > 0.0)) {
    throw ConfigError("adamw: epsilon must be positive");
  }
  if (weight_decay < 0.0) {
    throw ConfigError("adamw: weight_decay must be non-negative");
  }
}

AdamW::AdamW(const ModelParams& params, AdamWConfig config) : cfg_(config) {
  cfg_.validate();
  ModelGrads zero = ModelGrads::zeros_like(params);
  m_.encoder = zero.encoder;
  m_.classifier = zero.classifier;
  v_.encoder = zero.encoder;
  v_.classifier = zero.classifier;
}

namespace {

void check_grads_finite(const std::vector<LayerGrads>& grads,
                        const char* stack_name) {
  for (std::size_t li = 0; li < grads.size(); ++li) {
    for (double g : grads[li].weight.values) {
      if (!std::isfinite(g)) {
        throw NumericalError("adamw: non-finite gradient in " +
                             std::string(stack_name) + "[" +
                             std::to_string(li) + "].weight");
      }
    }
    for (double g : grads[li].bias) {
      if (!std::isfinite(g)) {
        throw NumericalError("adamw: non-finite gradient in " +
                             std::string(stack_name) + "[" +
                             std::to_string(li) + "].bias");
      }
    }
  }
}

void adamw_update(std::vector<double>& p, std::vector<double>& m,
                  std::vector<double>& v, const std::vector<double>& g,
                  const AdamWConfig& cfg, double bc1, double bc2) {
  for (std::size_t i = 0; i < p.size(); ++i) {
    m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
    v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
    const double m_hat = m[i] / bc1;
    const double v_hat = v[i] / bc2;
    const double update = m_hat / (std::sqrt(v_hat) + cfg.epsilon);
    p[i] -= cfg.learning_rate * (update + cfg.weight_decay * p[i]);
  }
}

}  // namespace

void AdamW::step(ModelParams& params, const ModelGrads& grads) {
  if (grads.encoder.size() != params.encoder.size() ||
      grads.classifier.size() != params.classifier.size()) {
    throw InputError("adamw: gradient layout does not match parameters");
  }
  check_grads_finite(grads.encoder, "encoder");
  check_grads_finite(grads.classifier, "classifier");

  ++step_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));

  for (std::size_t li = 0; li < params.encoder.size(); ++li) {
    adamw_update(params.encoder[li].weight.values,
                 m_.encoder[li].weight.values, v_.encoder[li].weight.values,
                 grads.encoder[li].weight.values, cfg_, bc1, bc2);
    adamw_update(params.encoder[li].bias, m_.encoder[li].bias,
                 v_.encoder[li].bias, grads.encoder[li].bias, cfg_, bc1, bc2);
  }
  for (std::size_t li = 0; li < params.classifier.size(); ++li) {
    adamw_update(params.classifier[li].weight.values,
                 m_.classifier[li].weight.values,
                 v_.classifier[li].weight.values,
                 grads.classifier[li].weight.values, cfg_, bc1, bc2);
    adamw_update(params.classifier[li].bias, m_.classifier[li].bias,
                 v_.classifier[li].bias, grads.classifier[li].bias, cfg_, bc1,
                 bc2);
  }
}

void AdamW::restore(std::int64_t step, Moments m, Moments v) {
  step_ = step;
  m_ = std::move(m);
  v_ = std::move(v);
}

void AdamW::set_learning_rate(double rate) {
  if (!std::isfinite(rate) || rate <= 0.0) {
    throw ConfigError("optimizer: learning rate must be positive and finite");
  }
  cfg_.learning_rate = rate;
}

namespace {

using json = nlohmann::ordered_json;

json floats_to_json(const std::vector<double>& values) {
  json arr = json::array();
  for (double v : values) {
    arr.push_back(format_double(v));
  }
  return arr;
}

std::vector<double> floats_from_json(const json& arr, const std::string& where) {
  if (!arr.is_array()) {
    throw ParseError("checkpoint: expected array at " + where);
  }
  std::vector<double> out;
  out.reserve(arr.size());
  for (const auto& item : arr) {
    if (!item.is_string()) {
      throw ParseError("checkpoint: expected decimal string at " + where);
    }
    out.push_back(parse_double(item.get<std::string>()));
  }
  return out;
}

json layer_to_json(const Layer& layer) {
  json j;
  j["rows"] = layer.weight.rows;
  j["cols"] = layer.weight.cols;
  j["activation"] = activation_name(layer.act);
  j["weight"] = floats_to_json(layer.weight.values);
  j["bias"] = floats_to_json(layer.bias);
  return j;
}

Layer layer_from_json(const json& j, const std::string& where) {
  Layer layer;
  const std::size_t rows = j.at("rows").get<std::size_t>();
  const std::size_t cols = j.at("cols").get<std::size_t>();
  layer.weight = Matrix(rows, cols);
  layer.weight.values = floats_from_json(j.at("weight"), where + ".weight");
  if (layer.weight.values.size() != rows * cols) {
    throw ParseError("checkpoint: weight size mismatch at " + where);
  }
  layer.bias = floats_from_json(j.at("bias"), where + ".bias");
  if (layer.bias.size() != rows) {
    throw ParseError("checkpoint: bias size mismatch at " + where);
  }
  layer.act = activation_from_name(j.at("activation").get<std::string>());
  return layer;
}

json stack_to_json(const std::vector<Layer>& stack) {
  json arr = json::array();
  for (const Layer& layer : stack) {
    arr.push_back(layer_to_json(layer));
  }
  return arr;
}

std::vector<Layer> stack_from_json(const json& arr, const std::string& where) {
  if (!arr.is_array() || arr.empty()) {
    throw ParseError("checkpoint: expected non-empty layer array at " + where);
  }
  std::vector<Layer> stack;
  for (std::size_t i = 0; i < arr.size(); ++i) {
    stack.push_back(layer_from_json(arr[i], where + "[" + std::to_string(i) + "]"));
  }
  return stack;
}

json moments_to_json(const AdamW::Moments& m) {
  json j;
  json enc = json::array();
  for (const LayerGrads& lg : m.encoder) {
    json e;
    e["weight"] = floats_to_json(lg.weight.values);
    e["bias"] = floats_to_json(lg.bias);
    enc.push_back(e);
  }
  json cls = json::array();
  for (const LayerGrads& lg : m.classifier) {
    json e;
    e["weight"] = floats_to_json(lg.weight.values);
    e["bias"] = floats_to_json(lg.bias);
    cls.push_back(e);
  }
  j["encoder"] = enc;
  j["classifier"] = cls;
  return j;
}

AdamW::Moments moments_from_json(const json& j, const ModelParams& params,
                                 const std::string& where) {
  AdamW::Moments m;
  auto read_stack = [&](const json& arr, const std::vector<Layer>& shape,
                        std::vector<LayerGrads>& out, const std::string& tag) {
    if (!arr.is_array() || arr.size() != shape.size()) {
      throw ParseError("checkpoint: moment layout mismatch at " + where + tag);
    }
    for (std::size_t i = 0; i < arr.size(); ++i) {
      LayerGrads lg;
      lg.weight = Matrix(shape[i].weight.rows, shape[i].weight.cols);
      lg.weight.values =
          floats_from_json(arr[i].at("weight"), where + tag + ".weight");
      lg.bias = floats_from_json(arr[i].at("bias"), where + tag + ".bias");
      if (lg.weight.values.size() != shape[i].weight.values.size() ||
          lg.bias.size() != shape[i].bias.size()) {
        throw ParseError("checkpoint: moment size mismatch at " + where + tag);
      }
      out.push_back(std::move(lg));
    }
  };
  read_stack(j.at("encoder"), params.encoder, m.encoder, ".encoder");
  read_stack(j.at("classifier"), params.classifier, m.classifier, ".classifier");
  return m;
}

}  // namespace

std::string checkpoint_string(const ModelParams& params,
                              const AdamW* optimizer) {
  json j;
  j["schema_version"] = 1;
  j["kind"] = "model_checkpoint";
  j["input_dim"] = params.input_dim;
  j["embedding_dim"] = params.embedding_dim;
  j["class_count"] = params.class_count;
  j["encoder"] = stack_to_json(params.encoder);
  j["classifier"] = stack_to_json(params.classifier);
  if (optimizer != nullptr) {
    json opt;
    opt["step"] = optimizer->step_count();
    opt["learning_rate"] = format_double(optimizer->config().learning_rate);
    opt["beta1"] = format_double(optimizer->config().beta1);
    opt["beta2"] = format_double(optimizer->config().beta2);
    opt["epsilon"] = format_double(optimizer->config().epsilon);
    opt["weight_decay"] = format_double(optimizer->config().weight_decay);
    opt["m"] = moments_to_json(optimizer->first_moment());
    opt["v"] = moments_to_json(optimizer->second_moment());
    j["optimizer"] = opt;
  }
  return j.dump(2) + "\n";
}

void save_checkpoint(const std::string& path, const ModelParams& params,
                     const AdamW* optimizer) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw IoError("cannot open checkpoint for writing: " + path);
  }
  out << checkpoint_string(params, optimizer);
  if (!out) {
    throw IoError("failed while writing checkpoint: " + path);
  }
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open checkpoint: " + path);
  }
  json j;
  try {
    j = json::parse(in);
  } catch (const std::exception& e) {
    throw ParseError("checkpoint " + path + ": " + e.what());
  }
  try {
    if (j.at("schema_version").get<int>() != 1) {
      throw ParseError("checkpoint " + path + ": unsupported schema_version");
    }
    LoadedCheckpoint loaded;
    loaded.params.input_dim = j.at("input_dim").get<std::size_t>();
    loaded.params.embedding_dim = j.at("embedding_dim").get<std::size_t>();
    loaded.params.class_count = j.at("class_count").get<std::size_t>();
    loaded.params.encoder = stack_from_json(j.at("encoder"), "encoder");
    loaded.params.classifier = stack_from_json(j.at("classifier"), "classifier");
    if (j.contains("optimizer")) {
      const json& opt = j.at("optimizer");
      AdamWConfig cfg;
      cfg.learning_rate = parse_double(opt.at("learning_rate").get<std::string>());
      cfg.beta1 = parse_double(opt.at("beta1").get<std::string>());
      cfg.beta2 = parse_double(opt.at("beta2").get<std::string>());
      cfg.epsilon = parse_double(opt.at("epsilon").get<std::string>());
      cfg.weight_decay = parse_double(opt.at("weight_decay").get<std::string>());
      loaded.optimizer_config = cfg;
      loaded.optimizer_step = opt.at("step").get<std::int64_t>();
      loaded.optimizer_m = moments_from_json(opt.at("m"), loaded.params, "m");
      loaded.optimizer_v = moments_from_json(opt.at("v"), loaded.params, "v");
    }
    return loaded;
  } catch (const json::exception& e) {
    throw ParseError("checkpoint " + path + ": " + e.what());
  }
}

std::optional<AdamW> LoadedCheckpoint::make_optimizer() const {
  if (!optimizer_config.has_value()) {
    return std::nullopt;
  }
  AdamW opt(params, *optimizer_config);
  opt.restore(*optimizer_step, *optimizer_m, *optimizer_v);
  return opt;
}

}  // namespace ipr
