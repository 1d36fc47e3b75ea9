#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "structmarl/rng.hpp"

namespace structmarl {

// Dense ReLU network in double precision. Batched calls treat columns as
// samples. The output head is part of the network: Softmax normalizes
// each column, Tanh squashes into [-u_max, u_max], Linear is the
// identity.
struct Mlp {
  enum class Head { Linear, Softmax, Tanh };

  std::vector<Eigen::MatrixXd> w;  // w[l]: (out_l x in_l)
  std::vector<Eigen::VectorXd> b;
  Head head = Head::Linear;
  double u_max = 1.0;

  int in_dim() const { return static_cast<int>(w.front().cols()); }
  int out_dim() const { return static_cast<int>(w.back().rows()); }
  std::vector<int> layer_sizes() const;
  bool all_finite() const;
};

// Uniform(-g, g) weights with g = sqrt(6 / (fan_in + fan_out)), zero
// biases. sizes = {in, hidden..., out} needs at least one transform.
Mlp init_glorot(const std::vector<int>& sizes, Mlp::Head head, double u_max,
                Rng& rng);

// Post-activation values per layer; activations[0] is the input and
// activations.back() the head output.
struct ForwardCache {
  std::vector<Eigen::MatrixXd> activations;
};

Eigen::MatrixXd forward(const Mlp& net, const Eigen::MatrixXd& input);
Eigen::MatrixXd forward(const Mlp& net, const Eigen::MatrixXd& input,
                        ForwardCache& cache);
Eigen::VectorXd forward(const Mlp& net, const Eigen::VectorXd& input);

struct GradBundle {
  std::vector<Eigen::MatrixXd> dw;
  std::vector<Eigen::VectorXd> db;
  Eigen::MatrixXd dinput;
};

// Exact reverse-mode pass for the batch held in `cache`. `upstream` is
// d(loss)/d(output), one column per sample; parameter gradients sum over
// the batch. with_params = false skips dw/db when only dinput is needed.
GradBundle backward(const Mlp& net, const ForwardCache& cache,
                    const Eigen::MatrixXd& upstream, bool with_params = true);

// Adam with bias correction.
struct OptimState {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long step = 0;
  std::vector<Eigen::MatrixXd> mw, vw;
  std::vector<Eigen::VectorXd> mb, vb;
};

OptimState make_adam(const Mlp& net, double lr);
void optim_step(Mlp& net, OptimState& opt, const GradBundle& grad);

// target <- tau * main + (1 - tau) * target, elementwise.
void soft_update(const Mlp& main, Mlp& target, double tau);

// JSON checkpoint with exact double round-trip.
std::string checkpoint_to_json(const Mlp& net);
Mlp checkpoint_from_json(const std::string& text);
void save_checkpoint(const Mlp& net, const std::filesystem::path& file);
Mlp load_checkpoint(const std::filesystem::path& file);

}  // namespace structmarl
