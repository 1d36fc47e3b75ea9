#include "structmarl/mlp.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace structmarl {

std::vector<int> Mlp::layer_sizes() const {
  std::vector<int> sizes{in_dim()};
  for (const auto& wl : w) sizes.push_back(static_cast<int>(wl.rows()));
  return sizes;
}

bool Mlp::all_finite() const {
  for (const auto& wl : w) {
    if (!wl.allFinite()) return false;
  }
  for (const auto& bl : b) {
    if (!bl.allFinite()) return false;
  }
  return true;
}

Mlp init_glorot(const std::vector<int>& sizes, Mlp::Head head, double u_max,
                Rng& rng) {
  if (sizes.size() < 2) {
    throw std::invalid_argument("init_glorot: need at least in and out dims");
  }
  for (int s : sizes) {
    if (s < 1) throw std::invalid_argument("init_glorot: dims must be >= 1");
  }
  Mlp net;
  net.head = head;
  net.u_max = u_max;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    const int fan_in = sizes[l];
    const int fan_out = sizes[l + 1];
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    Eigen::MatrixXd wl(fan_out, fan_in);
    // Column-major fill order; frozen so seeds reproduce exactly.
    for (int c = 0; c < fan_in; ++c) {
      for (int r = 0; r < fan_out; ++r) {
        wl(r, c) = rng.uniform(-bound, bound);
      }
    }
    net.w.push_back(std::move(wl));
    net.b.push_back(Eigen::VectorXd::Zero(fan_out));
  }
  return net;
}

namespace {

void apply_head(const Mlp& net, Eigen::MatrixXd& z) {
  switch (net.head) {
    case Mlp::Head::Linear:
      return;
    case Mlp::Head::Tanh:
      z = (net.u_max * z.array().tanh()).matrix();
      return;
    case Mlp::Head::Softmax:
      // Shift by the column max; exact result is shift-invariant.
      for (Eigen::Index c = 0; c < z.cols(); ++c) {
        auto col = z.col(c).array();
        col = (col - col.maxCoeff()).exp();
        col /= col.sum();
      }
      return;
  }
}

}  // namespace

Eigen::MatrixXd forward(const Mlp& net, const Eigen::MatrixXd& input,
                        ForwardCache& cache) {
  if (input.rows() != net.in_dim()) {
    throw std::invalid_argument("forward: input dim mismatch");
  }
  const std::size_t layers = net.w.size();
  cache.activations.assign(layers + 1, Eigen::MatrixXd());
  cache.activations[0] = input;
  for (std::size_t l = 0; l < layers; ++l) {
    Eigen::MatrixXd z =
        (net.w[l] * cache.activations[l]).colwise() + net.b[l];
    if (l + 1 < layers) {
      z = z.cwiseMax(0.0);
    } else {
      apply_head(net, z);
    }
    cache.activations[l + 1] = std::move(z);
  }
  return cache.activations.back();
}

Eigen::MatrixXd forward(const Mlp& net, const Eigen::MatrixXd& input) {
  if (input.rows() != net.in_dim()) {
    throw std::invalid_argument("forward: input dim mismatch");
  }
  const std::size_t layers = net.w.size();
  Eigen::MatrixXd a = input;
  for (std::size_t l = 0; l < layers; ++l) {
    Eigen::MatrixXd z = (net.w[l] * a).colwise() + net.b[l];
    if (l + 1 < layers) {
      z = z.cwiseMax(0.0);
    } else {
      apply_head(net, z);
    }
    a = std::move(z);
  }
  return a;
}

Eigen::VectorXd forward(const Mlp& net, const Eigen::VectorXd& input) {
  return forward(net, Eigen::MatrixXd(input)).col(0);
}

GradBundle backward(const Mlp& net, const ForwardCache& cache,
                    const Eigen::MatrixXd& upstream, bool with_params) {
  const std::size_t layers = net.w.size();
  if (cache.activations.size() != layers + 1) {
    throw std::invalid_argument("backward: stale cache");
  }
  const Eigen::MatrixXd& y = cache.activations.back();
  if (upstream.rows() != y.rows() || upstream.cols() != y.cols()) {
    throw std::invalid_argument("backward: upstream shape mismatch");
  }

  GradBundle grad;
  if (with_params) {
    grad.dw.resize(layers);
    grad.db.resize(layers);
  }

  // Head jacobian applied to the upstream gradient.
  Eigen::MatrixXd dz;
  switch (net.head) {
    case Mlp::Head::Linear:
      dz = upstream;
      break;
    case Mlp::Head::Tanh:
      // y = u * tanh(z), dy/dz = u - y^2 / u.
      dz = (upstream.array() *
            (net.u_max - y.array().square() / net.u_max))
               .matrix();
      break;
    case Mlp::Head::Softmax: {
      dz = upstream.cwiseProduct(y);
      const Eigen::RowVectorXd dot = dz.colwise().sum();
      dz -= y * dot.asDiagonal();
      break;
    }
  }

  for (std::size_t l = layers; l-- > 0;) {
    if (with_params) {
      grad.dw[l].noalias() = dz * cache.activations[l].transpose();
      grad.db[l] = dz.rowwise().sum();
    }
    Eigen::MatrixXd da = net.w[l].transpose() * dz;
    if (l > 0) {
      // ReLU gate: the cached activation is positive iff the
      // pre-activation was.
      dz = da.cwiseProduct(
          (cache.activations[l].array() > 0.0).cast<double>().matrix());
    } else {
      grad.dinput = std::move(da);
    }
  }
  return grad;
}

OptimState make_adam(const Mlp& net, double lr) {
  OptimState opt;
  opt.lr = lr;
  for (std::size_t l = 0; l < net.w.size(); ++l) {
    opt.mw.push_back(Eigen::MatrixXd::Zero(net.w[l].rows(), net.w[l].cols()));
    opt.vw.push_back(Eigen::MatrixXd::Zero(net.w[l].rows(), net.w[l].cols()));
    opt.mb.push_back(Eigen::VectorXd::Zero(net.b[l].size()));
    opt.vb.push_back(Eigen::VectorXd::Zero(net.b[l].size()));
  }
  return opt;
}

void optim_step(Mlp& net, OptimState& opt, const GradBundle& grad) {
  if (grad.dw.size() != net.w.size() || grad.db.size() != net.b.size()) {
    throw std::invalid_argument("optim_step: grad/net layer mismatch");
  }
  opt.step += 1;
  const double c1 = 1.0 - std::pow(opt.beta1, static_cast<double>(opt.step));
  const double c2 = 1.0 - std::pow(opt.beta2, static_cast<double>(opt.step));
  for (std::size_t l = 0; l < net.w.size(); ++l) {
    opt.mw[l] = opt.beta1 * opt.mw[l] + (1.0 - opt.beta1) * grad.dw[l];
    opt.vw[l] = (opt.beta2 * opt.vw[l].array() +
                 (1.0 - opt.beta2) * grad.dw[l].array().square())
                    .matrix();
    net.w[l].array() -= opt.lr * (opt.mw[l].array() / c1) /
                        ((opt.vw[l].array() / c2).sqrt() + opt.eps);

    opt.mb[l] = opt.beta1 * opt.mb[l] + (1.0 - opt.beta1) * grad.db[l];
    opt.vb[l] = (opt.beta2 * opt.vb[l].array() +
                 (1.0 - opt.beta2) * grad.db[l].array().square())
                    .matrix();
    net.b[l].array() -= opt.lr * (opt.mb[l].array() / c1) /
                        ((opt.vb[l].array() / c2).sqrt() + opt.eps);
  }
}

void soft_update(const Mlp& main, Mlp& target, double tau) {
  if (main.w.size() != target.w.size()) {
    throw std::invalid_argument("soft_update: mismatched layer counts");
  }
  for (std::size_t l = 0; l < main.w.size(); ++l) {
    target.w[l] = tau * main.w[l] + (1.0 - tau) * target.w[l];
    target.b[l] = tau * main.b[l] + (1.0 - tau) * target.b[l];
  }
}

namespace {

const char* head_name(Mlp::Head head) {
  switch (head) {
    case Mlp::Head::Softmax: return "softmax";
    case Mlp::Head::Tanh: return "tanh";
    default: return "linear";
  }
}

Mlp::Head head_from_name(const std::string& name) {
  if (name == "softmax") return Mlp::Head::Softmax;
  if (name == "tanh") return Mlp::Head::Tanh;
  if (name == "linear") return Mlp::Head::Linear;
  throw std::invalid_argument("checkpoint: unknown head '" + name + "'");
}

}  // namespace

std::string checkpoint_to_json(const Mlp& net) {
  nlohmann::json doc;
  doc["format_version"] = 1;
  doc["layer_sizes"] = net.layer_sizes();
  doc["head"] = head_name(net.head);
  doc["u_max"] = net.u_max;
  nlohmann::json weights = nlohmann::json::array();
  nlohmann::json biases = nlohmann::json::array();
  for (std::size_t l = 0; l < net.w.size(); ++l) {
    nlohmann::json rows = nlohmann::json::array();
    for (Eigen::Index r = 0; r < net.w[l].rows(); ++r) {
      nlohmann::json row = nlohmann::json::array();
      for (Eigen::Index c = 0; c < net.w[l].cols(); ++c) {
        row.push_back(net.w[l](r, c));
      }
      rows.push_back(std::move(row));
    }
    weights.push_back(std::move(rows));
    nlohmann::json bias = nlohmann::json::array();
    for (Eigen::Index r = 0; r < net.b[l].size(); ++r) {
      bias.push_back(net.b[l](r));
    }
    biases.push_back(std::move(bias));
  }
  doc["weights"] = std::move(weights);
  doc["biases"] = std::move(biases);
  return doc.dump(2) + "\n";
}

Mlp checkpoint_from_json(const std::string& text) {
  const nlohmann::json doc = nlohmann::json::parse(text);
  if (doc.value("format_version", 0) != 1) {
    throw std::invalid_argument("checkpoint: unsupported format_version");
  }
  const std::vector<int> sizes =
      doc.at("layer_sizes").get<std::vector<int>>();
  if (sizes.size() < 2) {
    throw std::invalid_argument("checkpoint: layer_sizes too short");
  }
  Mlp net;
  net.head = head_from_name(doc.at("head").get<std::string>());
  net.u_max = doc.at("u_max").get<double>();
  const auto& weights = doc.at("weights");
  const auto& biases = doc.at("biases");
  if (weights.size() != sizes.size() - 1 || biases.size() != sizes.size() - 1) {
    throw std::invalid_argument("checkpoint: layer count mismatch");
  }
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    Eigen::MatrixXd wl(sizes[l + 1], sizes[l]);
    const auto& rows = weights[l];
    if (static_cast<int>(rows.size()) != sizes[l + 1]) {
      throw std::invalid_argument("checkpoint: weight shape mismatch");
    }
    for (Eigen::Index r = 0; r < wl.rows(); ++r) {
      const auto& row = rows[r];
      if (static_cast<int>(row.size()) != sizes[l]) {
        throw std::invalid_argument("checkpoint: weight shape mismatch");
      }
      for (Eigen::Index c = 0; c < wl.cols(); ++c) {
        wl(r, c) = row[c].get<double>();
      }
    }
    Eigen::VectorXd bl(sizes[l + 1]);
    if (static_cast<int>(biases[l].size()) != sizes[l + 1]) {
      throw std::invalid_argument("checkpoint: bias shape mismatch");
    }
    for (Eigen::Index r = 0; r < bl.size(); ++r) {
      bl(r) = biases[l][r].get<double>();
    }
    net.w.push_back(std::move(wl));
    net.b.push_back(std::move(bl));
  }
  return net;
}

void save_checkpoint(const Mlp& net, const std::filesystem::path& file) {
  std::ofstream out(file, std::ios::binary);
  if (!out) {
    throw std::runtime_error("cannot write checkpoint: " + file.string());
  }
  out << checkpoint_to_json(net);
}

Mlp load_checkpoint(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) {
    throw std::runtime_error("cannot open checkpoint: " + file.string());
  }
  std::ostringstream buf;
  buf << in.rdbuf();
  return checkpoint_from_json(buf.str());
}

}  // namespace structmarl
