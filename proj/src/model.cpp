#include "scoreaug/model.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <stdexcept>
#include <string>

namespace scoreaug {

namespace {

using Eigen::Map;
using Eigen::MatrixXd;
using Eigen::VectorXd;

Map<const MatrixXd> weight_view(const VectorXd& theta, int offset, int out, int in) {
  return Map<const MatrixXd>(theta.data() + offset, out, in);
}

Map<const VectorXd> bias_view(const VectorXd& theta, int offset, int n) {
  return Map<const VectorXd>(theta.data() + offset, n);
}

}  // namespace

DenoiserNet::DenoiserNet(NetConfig cfg, double sigma_data)
    : cfg_(std::move(cfg)), sigma_data_(sigma_data) {
  if (cfg_.noise_embed_dim % 2 != 0 || cfg_.noise_embed_dim < 2) {
    throw std::invalid_argument("noise_embed_dim must be a positive even number");
  }
  if (cfg_.hidden.empty()) throw std::invalid_argument("need at least one hidden layer");
  if (!(sigma_data_ > 0.0)) throw std::invalid_argument("sigma_data must be > 0");

  const int pairs = cfg_.noise_embed_dim / 2;
  embed_freqs_.resize(pairs);
  for (int p = 0; p < pairs; ++p) {
    embed_freqs_(p) =
        pairs > 1 ? std::pow(1000.0, static_cast<double>(p) / (pairs - 1)) : 1.0;
  }

  int offset = 0;
  cond_w_offset_ = offset;
  offset += cfg_.noise_embed_dim * cfg_.cond_dim;

  int in_dim = cfg_.data_dim + cfg_.noise_embed_dim;
  for (size_t l = 0; l <= cfg_.hidden.size(); ++l) {
    const int out_dim =
        l < cfg_.hidden.size() ? cfg_.hidden[l] : cfg_.data_dim;
    LayerView view{offset, offset + out_dim * in_dim, in_dim, out_dim};
    offset = view.b_offset + out_dim;
    layers_.push_back(view);
    in_dim = out_dim;
  }
  theta_ = VectorXd::Zero(offset);
}

void DenoiserNet::init_params(Rng& rng) {
  theta_.setZero();
  const int embed = cfg_.noise_embed_dim;
  for (int i = 0; i < embed * cfg_.cond_dim; ++i) {
    theta_(cond_w_offset_ + i) = rng.normal() / std::sqrt(static_cast<double>(cfg_.cond_dim));
  }
  for (size_t l = 0; l + 1 < layers_.size(); ++l) {
    const LayerView& v = layers_[l];
    // tanh gain 5/3 after the first layer keeps pre-activation variance near 1.
    const double gain = l == 0 ? 1.0 : 5.0 / 3.0;
    const double std = gain / std::sqrt(static_cast<double>(v.in_dim));
    for (int i = 0; i < v.out_dim * v.in_dim; ++i) {
      theta_(v.w_offset + i) = std * rng.normal();
    }
  }
  // Last layer stays zero: the fresh denoiser is exactly the skip path.
}

Eigen::VectorXd DenoiserNet::embed(double sigma, const VectorXd& cond,
                                   const VectorXd& theta) const {
  if (cond.size() != cfg_.cond_dim) {
    throw std::invalid_argument("condition vector has wrong length");
  }
  const double u = preconditioning(sigma, sigma_data_).c_noise;
  VectorXd e(cfg_.noise_embed_dim);
  for (int p = 0; p < cfg_.noise_embed_dim / 2; ++p) {
    e(2 * p) = std::sin(embed_freqs_(p) * u);
    e(2 * p + 1) = std::cos(embed_freqs_(p) * u);
  }
  e += weight_view(theta, cond_w_offset_, cfg_.noise_embed_dim, cfg_.cond_dim) * cond;
  return e;
}

Eigen::VectorXd DenoiserNet::forward(const VectorXd& x, double sigma,
                                     const VectorXd& cond) const {
  if (x.size() != cfg_.data_dim) throw std::invalid_argument("input has wrong dimension");
  const Preconditioning pre = preconditioning(sigma, sigma_data_);
  VectorXd a(cfg_.data_dim + cfg_.noise_embed_dim);
  a.head(cfg_.data_dim) = pre.c_in * x;
  a.tail(cfg_.noise_embed_dim) = embed(sigma, cond, theta_);
  for (size_t l = 0; l < layers_.size(); ++l) {
    const LayerView& v = layers_[l];
    VectorXd z = weight_view(theta_, v.w_offset, v.out_dim, v.in_dim) * a +
                 bias_view(theta_, v.b_offset, v.out_dim);
    a = l + 1 < layers_.size() ? VectorXd(z.array().tanh()) : std::move(z);
  }
  return pre.c_skip * x + pre.c_out * a;
}

double DenoiserNet::loss_and_grad(const std::vector<Sample>& batch, VectorXd& grad,
                                  Rng* dropout_rng) const {
  if (batch.empty()) throw std::invalid_argument("loss_and_grad: empty batch");
  grad = VectorXd::Zero(theta_.size());
  const double inv_b = 1.0 / static_cast<double>(batch.size());
  const int n_aff = static_cast<int>(layers_.size());
  const bool use_dropout = cfg_.dropout > 0.0 && dropout_rng != nullptr;
  const double keep = 1.0 - cfg_.dropout;

  double loss = 0.0;
  std::vector<VectorXd> act(n_aff);        // inputs to each affine block
  std::vector<VectorXd> tanh_out(n_aff);   // tanh outputs per hidden layer
  std::vector<VectorXd> mask(n_aff);

  for (size_t s = 0; s < batch.size(); ++s) {
    const Sample& sm = batch[s];
    const Preconditioning pre = preconditioning(sm.sigma, sigma_data_);

    act[0].resize(cfg_.data_dim + cfg_.noise_embed_dim);
    act[0].head(cfg_.data_dim) = pre.c_in * sm.x;
    act[0].tail(cfg_.noise_embed_dim) = embed(sm.sigma, sm.cond, theta_);

    VectorXd out;
    for (int l = 0; l < n_aff; ++l) {
      const LayerView& v = layers_[l];
      VectorXd z = weight_view(theta_, v.w_offset, v.out_dim, v.in_dim) * act[l] +
                   bias_view(theta_, v.b_offset, v.out_dim);
      if (l + 1 < n_aff) {
        tanh_out[l] = z.array().tanh();
        act[l + 1] = tanh_out[l];
        if (use_dropout) {
          mask[l].resize(v.out_dim);
          for (int i = 0; i < v.out_dim; ++i) {
            mask[l](i) = dropout_rng->uniform01() < keep ? 1.0 / keep : 0.0;
          }
          act[l + 1] = act[l + 1].cwiseProduct(mask[l]);
        }
      } else {
        out = std::move(z);
      }
    }

    const VectorXd denoised = pre.c_skip * sm.x + pre.c_out * out;
    const VectorXd residual = denoised - sm.target;
    const double term = sm.weight * residual.squaredNorm() * inv_b;
    if (!std::isfinite(term)) {
      throw std::runtime_error("non-finite loss at batch index " + std::to_string(s));
    }
    loss += term;

    VectorXd delta = (2.0 * sm.weight * inv_b * pre.c_out) * residual;
    for (int l = n_aff - 1; l >= 0; --l) {
      const LayerView& v = layers_[l];
      Map<MatrixXd>(grad.data() + v.w_offset, v.out_dim, v.in_dim).noalias() +=
          delta * act[l].transpose();
      Map<VectorXd>(grad.data() + v.b_offset, v.out_dim) += delta;
      if (l == 0) {
        const VectorXd d_embed =
            (weight_view(theta_, v.w_offset, v.out_dim, v.in_dim).transpose() * delta)
                .tail(cfg_.noise_embed_dim);
        Map<MatrixXd>(grad.data() + cond_w_offset_, cfg_.noise_embed_dim, cfg_.cond_dim)
            .noalias() += d_embed * sm.cond.transpose();
      } else {
        VectorXd da =
            weight_view(theta_, v.w_offset, v.out_dim, v.in_dim).transpose() * delta;
        if (use_dropout) da = da.cwiseProduct(mask[l - 1]);
        delta = da.cwiseProduct(
            (1.0 - tanh_out[l - 1].array().square()).matrix());
      }
    }
  }
  return loss;
}

namespace {

void write_bytes(std::FILE* f, const void* p, size_t n) {
  if (std::fwrite(p, 1, n, f) != n) throw std::runtime_error("checkpoint write failed");
}

void read_bytes(std::FILE* f, void* p, size_t n) {
  if (std::fread(p, 1, n, f) != n) throw std::runtime_error("checkpoint read failed");
}

void write_u32(std::FILE* f, std::uint32_t v) { write_bytes(f, &v, 4); }
void write_u64(std::FILE* f, std::uint64_t v) { write_bytes(f, &v, 8); }
void write_f64(std::FILE* f, double v) { write_bytes(f, &v, 8); }

std::uint32_t read_u32(std::FILE* f) {
  std::uint32_t v;
  read_bytes(f, &v, 4);
  return v;
}
std::uint64_t read_u64(std::FILE* f) {
  std::uint64_t v;
  read_bytes(f, &v, 8);
  return v;
}
double read_f64(std::FILE* f) {
  double v;
  read_bytes(f, &v, 8);
  return v;
}

constexpr char kMagic[8] = {'S', 'A', 'U', 'G', 'C', 'K', 'P', 'T'};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  std::FILE* f = std::fopen(path.string().c_str(), "wb");
  if (!f) throw std::runtime_error("cannot open checkpoint for writing: " + path.string());
  write_bytes(f, kMagic, 8);
  write_u32(f, 1);
  write_u32(f, static_cast<std::uint32_t>(ckpt.net.data_dim));
  write_u32(f, static_cast<std::uint32_t>(ckpt.net.cond_dim));
  write_u32(f, static_cast<std::uint32_t>(ckpt.net.noise_embed_dim));
  write_f64(f, ckpt.net.dropout);
  write_f64(f, ckpt.sigma_data);
  write_u64(f, ckpt.step);
  write_u32(f, static_cast<std::uint32_t>(ckpt.net.hidden.size()));
  for (int h : ckpt.net.hidden) write_u32(f, static_cast<std::uint32_t>(h));
  write_u64(f, static_cast<std::uint64_t>(ckpt.theta.size()));
  for (const Eigen::VectorXd* v : {&ckpt.theta, &ckpt.ema, &ckpt.adam_m, &ckpt.adam_v}) {
    if (v->size() != ckpt.theta.size()) {
      std::fclose(f);
      throw std::runtime_error("checkpoint arrays have inconsistent sizes");
    }
    write_bytes(f, v->data(), sizeof(double) * v->size());
  }
  std::fclose(f);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::FILE* f = std::fopen(path.string().c_str(), "rb");
  if (!f) throw std::runtime_error("cannot open checkpoint: " + path.string());
  char magic[8];
  read_bytes(f, magic, 8);
  if (std::memcmp(magic, kMagic, 8) != 0) {
    std::fclose(f);
    throw std::runtime_error("not a checkpoint file: " + path.string());
  }
  const std::uint32_t version = read_u32(f);
  if (version != 1) {
    std::fclose(f);
    throw std::runtime_error("unsupported checkpoint version");
  }
  Checkpoint ckpt;
  ckpt.net.data_dim = static_cast<int>(read_u32(f));
  ckpt.net.cond_dim = static_cast<int>(read_u32(f));
  ckpt.net.noise_embed_dim = static_cast<int>(read_u32(f));
  ckpt.net.dropout = read_f64(f);
  ckpt.sigma_data = read_f64(f);
  ckpt.step = read_u64(f);
  const std::uint32_t n_hidden = read_u32(f);
  ckpt.net.hidden.resize(n_hidden);
  for (std::uint32_t i = 0; i < n_hidden; ++i) ckpt.net.hidden[i] = static_cast<int>(read_u32(f));
  const std::uint64_t p = read_u64(f);
  for (Eigen::VectorXd* v : {&ckpt.theta, &ckpt.ema, &ckpt.adam_m, &ckpt.adam_v}) {
    v->resize(static_cast<Eigen::Index>(p));
    read_bytes(f, v->data(), sizeof(double) * p);
  }
  std::fclose(f);
  return ckpt;
}

}  // namespace scoreaug
