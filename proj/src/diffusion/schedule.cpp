// Copyright 2026 The DiffuPT Workbench Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <cmath>

#include "diffupt/diffusion.hpp"

namespace diffupt::diffusion {

void NoiseSchedule::check_timestep(std::size_t t) const {
  if (t < 1 || t > T) {
    throw DiffusionError("timestep " + std::to_string(t) + " outside [1, " + std::to_string(T) + "]");
  }
}

NoiseSchedule linear_schedule(std::size_t T, double beta_start, double beta_end) {
  if (T < 2) throw DiffusionError("schedule needs T >= 2, got " + std::to_string(T));
  if (!(beta_start > 0.0 && beta_start < beta_end && beta_end < 1.0)) {
    throw DiffusionError("schedule needs 0 < beta_start < beta_end < 1");
  }
  NoiseSchedule s;
  s.T = T;
  s.beta.resize(T);
  s.alpha.resize(T);
  s.alpha_bar.resize(T);
  s.sigma.resize(T);
  double prod = 1.0;
  for (std::size_t i = 0; i < T; ++i) {
    s.beta[i] = beta_start + (beta_end - beta_start) * static_cast<double>(i) / static_cast<double>(T - 1);
    s.alpha[i] = 1.0 - s.beta[i];
    prod *= s.alpha[i];
    s.alpha_bar[i] = prod;
  }
  for (std::size_t t = 1; t <= T; ++t) {
    const double prev = s.alpha_bar_at(t - 1);
    s.sigma[t - 1] = std::sqrt(s.beta[t - 1] * (1.0 - prev) / (1.0 - s.alpha_bar[t - 1]));
  }
  return s;
}

Tensor q_sample(const Tensor& x0, std::size_t t, const Tensor& eps, const NoiseSchedule& sched) {
  sched.check_timestep(t);
  if (x0.shape() != eps.shape()) {
    throw num::ShapeError("q_sample: x0 " + num::to_string(x0.shape()) + " vs eps " +
                          num::to_string(eps.shape()));
  }
  const double ab = sched.alpha_bar_at(t);
  return num::add(num::scale(x0, std::sqrt(ab)), num::scale(eps, std::sqrt(1.0 - ab)));
}

Tensor q_sample(const Tensor& x0, std::span<const std::size_t> t, const Tensor& eps,
                const NoiseSchedule& sched) {
  if (x0.shape() != eps.shape()) {
    throw num::ShapeError("q_sample: x0 " + num::to_string(x0.shape()) + " vs eps " +
                          num::to_string(eps.shape()));
  }
  const std::size_t n = x0.rank() == 0 ? 1 : x0.dim(0);
  if (t.size() != n) throw num::ShapeError("q_sample: one timestep per sample required");
  const std::size_t stride = n == 0 ? 0 : x0.size() / n;
  std::vector<double> out(x0.size());
  for (std::size_t i = 0; i < n; ++i) {
    sched.check_timestep(t[i]);
    const double a = std::sqrt(sched.alpha_bar_at(t[i]));
    const double b = std::sqrt(1.0 - sched.alpha_bar_at(t[i]));
    for (std::size_t j = 0; j < stride; ++j) {
      out[i * stride + j] = a * x0.data()[i * stride + j] + b * eps.data()[i * stride + j];
    }
  }
  return Tensor(x0.shape(), std::move(out));
}

Tensor cfg_epsilon(const Tensor& eps_cond, const Tensor& eps_uncond, double w) {
  if (eps_cond.shape() != eps_uncond.shape()) {
    throw num::ShapeError("cfg_epsilon: shape mismatch " + num::to_string(eps_cond.shape()) +
                          " vs " + num::to_string(eps_uncond.shape()));
  }
  std::vector<double> out(eps_cond.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = (1.0 + w) * eps_cond[i] - w * eps_uncond[i];
  }
  return Tensor(eps_cond.shape(), std::move(out));
}

namespace {

void require_same(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw num::ShapeError(std::string(op) + ": shape mismatch " + num::to_string(a.shape()) +
                          " vs " + num::to_string(b.shape()));
  }
}

Tensor normal_like(const Tensor& like, RngStream& rng) {
  std::vector<double> z(like.size());
  rng.fill_normal(z);
  return Tensor(like.shape(), std::move(z));
}

}  // namespace

Tensor ddpm_step(const Tensor& x_t, std::size_t t, const Tensor& eps_hat,
                 const NoiseSchedule& sched, const Tensor& noise) {
  sched.check_timestep(t);
  require_same("ddpm_step", x_t, eps_hat);
  if (t > 1) require_same("ddpm_step", x_t, noise);
  const double alpha = sched.alpha[t - 1];
  const double coef = sched.beta[t - 1] / std::sqrt(1.0 - sched.alpha_bar[t - 1]);
  const double inv_sqrt_alpha = 1.0 / std::sqrt(alpha);
  const double sigma = t > 1 ? sched.sigma[t - 1] : 0.0;
  std::vector<double> out(x_t.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = inv_sqrt_alpha * (x_t[i] - coef * eps_hat[i]);
    if (t > 1) out[i] += sigma * noise[i];
  }
  return Tensor(x_t.shape(), std::move(out));
}

Tensor ddpm_step(const Tensor& x_t, std::size_t t, const Tensor& eps_hat,
                 const NoiseSchedule& sched, RngStream& rng) {
  sched.check_timestep(t);
  return ddpm_step(x_t, t, eps_hat, sched, t > 1 ? normal_like(x_t, rng) : Tensor());
}

Tensor predict_x0(const Tensor& x_t, std::size_t t, const Tensor& eps_hat,
                  const NoiseSchedule& sched) {
  sched.check_timestep(t);
  require_same("predict_x0", x_t, eps_hat);
  const double ab = sched.alpha_bar_at(t);
  const double a = std::sqrt(ab), b = std::sqrt(1.0 - ab);
  std::vector<double> out(x_t.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = (x_t[i] - b * eps_hat[i]) / a;
  return Tensor(x_t.shape(), std::move(out));
}

Tensor ddim_step(const Tensor& x_t, std::size_t t, std::size_t t_prev, const Tensor& eps_hat,
                 const NoiseSchedule& sched, double eta, const Tensor& noise) {
  if (t_prev >= t) {
    throw DiffusionError("ddim_step: t_prev (" + std::to_string(t_prev) + ") must be below t (" +
                         std::to_string(t) + ")");
  }
  if (eta < 0.0 || eta > 1.0) throw DiffusionError("ddim_step: eta must lie in [0, 1]");
  const Tensor x0 = predict_x0(x_t, t, eps_hat, sched);
  const double ab = sched.alpha_bar_at(t);
  const double ab_prev = sched.alpha_bar_at(t_prev);
  const double sigma =
      eta * std::sqrt((1.0 - ab_prev) / (1.0 - ab)) * std::sqrt(1.0 - ab / ab_prev);
  const double dir = std::sqrt(std::max(1.0 - ab_prev - sigma * sigma, 0.0));
  const bool stochastic = sigma > 0.0;
  if (stochastic) require_same("ddim_step", x_t, noise);
  std::vector<double> out(x_t.size());
  const double a_prev = std::sqrt(ab_prev);
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = a_prev * x0[i] + dir * eps_hat[i];
    if (stochastic) out[i] += sigma * noise[i];
  }
  return Tensor(x_t.shape(), std::move(out));
}

Tensor ddim_step(const Tensor& x_t, std::size_t t, std::size_t t_prev, const Tensor& eps_hat,
                 const NoiseSchedule& sched, double eta, RngStream& rng) {
  return ddim_step(x_t, t, t_prev, eps_hat, sched, eta,
                   eta > 0.0 ? normal_like(x_t, rng) : Tensor());
}

}  // namespace diffupt::diffusion
