#include "fawn/checkpoint.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "fawn/errors.hpp"

namespace fawn {

using nlohmann::json;

namespace {

json matrix_json(const Eigen::MatrixXd& m) {
  std::vector<double> data;
  data.reserve(static_cast<std::size_t>(m.size()));
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) data.push_back(m(i, j));
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", data}};
}

Eigen::MatrixXd matrix_from(const json& j) {
  const auto rows = j.at("rows").get<Eigen::Index>();
  const auto cols = j.at("cols").get<Eigen::Index>();
  const auto data = j.at("data").get<std::vector<double>>();
  if (rows < 0 || cols < 0 || static_cast<Eigen::Index>(data.size()) != rows * cols) {
    throw ParseError("checkpoint: matrix data does not match its shape");
  }
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index k = 0; k < cols; ++k) m(i, k) = data[static_cast<std::size_t>(i * cols + k)];
  return m;
}

json vector_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Eigen::VectorXd vector_from(const json& j) {
  const auto data = j.get<std::vector<double>>();
  return Eigen::Map<const Eigen::VectorXd>(data.data(), static_cast<Eigen::Index>(data.size()));
}

json spec_json(const NetworkSpec& spec) {
  json t = json::array();
  for (Transfer tr : spec.transfer) t.push_back(to_string(tr));
  json j{{"layer_widths", spec.layer_widths},
         {"transfer", t},
         {"weight_family", to_string(spec.weight_family)},
         {"output_mode", to_string(spec.output_mode)},
         {"input_noise", nullptr}};
  if (spec.input_noise) {
    j["input_noise"] = {
        {"kind", spec.input_noise->kind == NoiseKind::additive ? "additive" : "multiplicative"},
        {"eps_mean", vector_json(spec.input_noise->eps_mean)},
        {"eps_variance", vector_json(spec.input_noise->eps_variance)}};
  }
  return j;
}

NetworkSpec spec_from(const json& j) {
  NetworkSpec spec;
  spec.layer_widths = j.at("layer_widths").get<std::vector<int>>();
  for (const auto& t : j.at("transfer")) spec.transfer.push_back(parse_transfer(t.get<std::string>()));
  spec.weight_family = parse_family(j.at("weight_family").get<std::string>());
  spec.output_mode = parse_output_mode(j.at("output_mode").get<std::string>());
  if (!j.at("input_noise").is_null()) {
    const auto& n = j["input_noise"];
    NoiseSpec<double> noise;
    const auto kind = n.at("kind").get<std::string>();
    if (kind != "additive" && kind != "multiplicative") throw ParseError("unknown noise kind " + kind);
    noise.kind = kind == "additive" ? NoiseKind::additive : NoiseKind::multiplicative;
    noise.eps_mean = vector_from(n.at("eps_mean"));
    noise.eps_variance = vector_from(n.at("eps_variance"));
    spec.input_noise = noise;
  }
  spec.validate();
  return spec;
}

json stats_json(const StandardizationStats& s) {
  return {{"feature_mean", vector_json(s.feature_mean)},
          {"feature_std", vector_json(s.feature_std)},
          {"target_mean", vector_json(s.target_mean)},
          {"target_std", vector_json(s.target_std)},
          {"constant_feature", s.constant_feature},
          {"constant_target", s.constant_target}};
}

StandardizationStats stats_from(const json& j) {
  return {vector_from(j.at("feature_mean")),
          vector_from(j.at("feature_std")),
          vector_from(j.at("target_mean")),
          vector_from(j.at("target_std")),
          j.at("constant_feature").get<std::vector<bool>>(),
          j.at("constant_target").get<std::vector<bool>>()};
}

}  // namespace

std::string checkpoint_to_string(const ModelState& model) {
  json layers = json::array();
  for (const Layer& layer : model.layers) {
    std::visit(
        [&](const auto& l) {
          json j;
          if constexpr (std::is_same_v<std::decay_t<decltype(l)>, GaussianWeightLayer>) {
            j = {{"family", "gaussian"}, {"mu", matrix_json(l.mu)}, {"rho", matrix_json(l.rho)}};
          } else {
            j = {{"family", "bernoulli"},
                 {"logit_p", matrix_json(l.logit_p)},
                 {"scale", matrix_json(l.scale)}};
          }
          j["bias_mu"] = vector_json(l.bias_mu);
          j["bias_rho"] = vector_json(l.bias_rho);
          layers.push_back(std::move(j));
        },
        layer);
  }
  json m = json::array();
  json v = json::array();
  for (const auto& t : model.optimizer.m) m.push_back(matrix_json(t));
  for (const auto& t : model.optimizer.v) v.push_back(matrix_json(t));

  json doc{{"magic", kCheckpointMagic},
           {"spec", spec_json(model.spec)},
           {"layers", layers},
           {"prior", {{"tilde_mu", model.prior.tilde_mu}, {"tilde_rho", model.prior.tilde_rho}}},
           {"likelihood", {{"hat_rho", vector_json(model.likelihood.hat_rho)}}},
           {"optimizer", {{"t", model.optimizer.t}, {"m", m}, {"v", v}}},
           {"standardization", nullptr}};
  if (model.standardization) doc["standardization"] = stats_json(*model.standardization);
  return doc.dump(1);
}

ModelState checkpoint_from_string(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    throw ParseError(std::string("checkpoint: ") + e.what());
  }
  if (!doc.is_object() || doc.value("magic", "") != kCheckpointMagic) {
    throw ParseError("checkpoint: missing FAWN1 magic");
  }
  try {
    ModelState model;
    model.spec = spec_from(doc.at("spec"));
    for (const auto& l : doc.at("layers")) {
      const auto family = l.at("family").get<std::string>();
      if (family == "gaussian") {
        model.layers.emplace_back(GaussianWeightLayer{matrix_from(l.at("mu")), matrix_from(l.at("rho")),
                                                      vector_from(l.at("bias_mu")),
                                                      vector_from(l.at("bias_rho"))});
      } else if (family == "bernoulli") {
        model.layers.emplace_back(BernoulliWeightLayer{
            matrix_from(l.at("logit_p")), matrix_from(l.at("scale")), vector_from(l.at("bias_mu")),
            vector_from(l.at("bias_rho"))});
      } else {
        throw ParseError("checkpoint: unknown layer family " + family);
      }
    }
    check_layers(model.spec, model.layers);
    model.prior = {doc.at("prior").at("tilde_mu").get<double>(),
                   doc.at("prior").at("tilde_rho").get<double>()};
    model.likelihood.hat_rho = vector_from(doc.at("likelihood").at("hat_rho"));
    const auto& opt = doc.at("optimizer");
    model.optimizer.t = opt.at("t").get<std::int64_t>();
    for (const auto& t : opt.at("m")) model.optimizer.m.push_back(matrix_from(t));
    for (const auto& t : opt.at("v")) model.optimizer.v.push_back(matrix_from(t));
    if (!doc.at("standardization").is_null()) {
      model.standardization = stats_from(doc["standardization"]);
    }
    return model;
  } catch (const json::exception& e) {
    throw ParseError(std::string("checkpoint: ") + e.what());
  }
}

void save_checkpoint(const std::filesystem::path& path, const ModelState& model) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot write " + path.string());
  out << checkpoint_to_string(model) << '\n';
}

ModelState load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return checkpoint_from_string(buf.str());
}

}  // namespace fawn
