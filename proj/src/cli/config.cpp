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

#include "diffupt/config.hpp"

#include <boost/uuid/detail/sha1.hpp>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace diffupt::config {

using pipeline::WorkbenchConfig;

namespace {

// ---- value codecs -------------------------------------------------------------------

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  if (trim(s).empty()) return out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  return out;
}

std::string fmt_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

double parse_double(const std::string& s) {
  double v = 0.0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size() || !std::isfinite(v)) {
    throw std::invalid_argument("expected a finite number, got '" + s + "'");
  }
  return v;
}

std::uint64_t parse_u64(const std::string& s) {
  std::uint64_t v = 0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size()) {
    throw std::invalid_argument("expected a non-negative integer, got '" + s + "'");
  }
  return v;
}

bool parse_bool(const std::string& s) {
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw std::invalid_argument("expected true or false, got '" + s + "'");
}

template <class T>
std::string fmt_list(const std::vector<T>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ", ";
    if constexpr (std::is_same_v<T, double>) {
      out += fmt_double(v[i]);
    } else if constexpr (std::is_same_v<T, std::string>) {
      out += v[i];
    } else {
      out += std::to_string(v[i]);
    }
  }
  return out;
}

// ---- schema -------------------------------------------------------------------------

struct Field {
  std::string section;
  std::string key;
  std::function<std::string(const WorkbenchConfig&)> get;
  std::function<void(WorkbenchConfig&, const std::string&)> set;
};

template <class T, class Ref>
Field scalar(std::string section, std::string key, Ref ref) {
  Field f{std::move(section), std::move(key), nullptr, nullptr};
  f.get = [ref](const WorkbenchConfig& c) {
    const T& v = ref(const_cast<WorkbenchConfig&>(c));
    if constexpr (std::is_same_v<T, double>) {
      return fmt_double(v);
    } else if constexpr (std::is_same_v<T, bool>) {
      return std::string(v ? "true" : "false");
    } else {
      return std::to_string(v);
    }
  };
  f.set = [ref](WorkbenchConfig& c, const std::string& s) {
    if constexpr (std::is_same_v<T, double>) {
      ref(c) = parse_double(s);
    } else if constexpr (std::is_same_v<T, bool>) {
      ref(c) = parse_bool(s);
    } else {
      ref(c) = static_cast<T>(parse_u64(s));
    }
  };
  return f;
}

#define DPT_FIELD(T, sec, key, expr) \
  scalar<T>(sec, key, [](WorkbenchConfig& c) -> T& { return expr; })

const std::vector<Field>& fields() {
  static const std::vector<Field> all = [] {
    std::vector<Field> f;
    // dataset
    f.push_back(DPT_FIELD(std::size_t, "dataset", "image_size", c.dataset.synth.image_size));
    f.push_back(DPT_FIELD(double, "dataset", "disc_radius_min", c.dataset.synth.disc_radius_min));
    f.push_back(DPT_FIELD(double, "dataset", "disc_radius_max", c.dataset.synth.disc_radius_max));
    f.push_back(DPT_FIELD(double, "dataset", "center_jitter", c.dataset.synth.center_jitter));
    f.push_back(DPT_FIELD(double, "dataset", "cup_ratio_majority_mean", c.dataset.synth.cup_ratio_majority.mean));
    f.push_back(DPT_FIELD(double, "dataset", "cup_ratio_majority_sd", c.dataset.synth.cup_ratio_majority.sd));
    f.push_back(DPT_FIELD(double, "dataset", "cup_ratio_minority_mean", c.dataset.synth.cup_ratio_minority.mean));
    f.push_back(DPT_FIELD(double, "dataset", "cup_ratio_minority_sd", c.dataset.synth.cup_ratio_minority.sd));
    f.push_back(DPT_FIELD(double, "dataset", "noise_sd", c.dataset.synth.noise_sd));
    f.push_back(DPT_FIELD(double, "dataset", "background_level", c.dataset.synth.background_level));
    f.push_back(DPT_FIELD(double, "dataset", "disc_level", c.dataset.synth.disc_level));
    f.push_back(DPT_FIELD(double, "dataset", "cup_level", c.dataset.synth.cup_level));
    f.push_back(DPT_FIELD(std::uint64_t, "dataset", "seed", c.dataset.synth.seed));
    f.push_back(DPT_FIELD(std::size_t, "dataset", "pool_negative", c.dataset.pool_negative));
    f.push_back(DPT_FIELD(std::size_t, "dataset", "pool_positive", c.dataset.pool_positive));
    f.push_back(DPT_FIELD(double, "dataset", "train_fraction", c.dataset.fractions.train));
    f.push_back(DPT_FIELD(double, "dataset", "val_fraction", c.dataset.fractions.val));
    f.push_back(DPT_FIELD(double, "dataset", "test_fraction", c.dataset.fractions.test));
    f.push_back(DPT_FIELD(double, "dataset", "val_minority", c.dataset.val_minority));
    f.push_back(DPT_FIELD(double, "dataset", "test_minority", c.dataset.test_minority));
    // autoencoder
    f.push_back(DPT_FIELD(bool, "autoencoder", "enabled", c.generator.latent));
    f.push_back(DPT_FIELD(std::size_t, "autoencoder", "latent_channels", c.generator.autoencoder.latent_channels));
    f.push_back(DPT_FIELD(std::size_t, "autoencoder", "downsample", c.generator.autoencoder.downsample));
    f.push_back(DPT_FIELD(std::size_t, "autoencoder", "hidden", c.generator.autoencoder.hidden));
    f.push_back(DPT_FIELD(std::size_t, "autoencoder", "iterations", c.generator.autoencoder_train.iterations));
    f.push_back(DPT_FIELD(std::size_t, "autoencoder", "batch", c.generator.autoencoder_train.batch));
    f.push_back(DPT_FIELD(double, "autoencoder", "lr", c.generator.autoencoder_train.lr));
    f.push_back(DPT_FIELD(double, "autoencoder", "holdout_fraction", c.generator.autoencoder_train.holdout_fraction));
    // diffusion
    f.push_back(DPT_FIELD(std::size_t, "diffusion", "timesteps", c.generator.timesteps));
    f.push_back(DPT_FIELD(double, "diffusion", "beta_start", c.generator.beta_start));
    f.push_back(DPT_FIELD(double, "diffusion", "beta_end", c.generator.beta_end));
    f.push_back(DPT_FIELD(std::size_t, "diffusion", "base_channels", c.generator.denoiser.base_channels));
    f.push_back(DPT_FIELD(std::size_t, "diffusion", "levels", c.generator.denoiser.levels));
    f.push_back(DPT_FIELD(std::size_t, "diffusion", "time_embedding", c.generator.denoiser.time_embedding));
    f.push_back(DPT_FIELD(std::size_t, "diffusion", "iterations", c.generator.diffusion_train.iterations));
    f.push_back(DPT_FIELD(std::size_t, "diffusion", "batch", c.generator.diffusion_train.batch));
    f.push_back(DPT_FIELD(double, "diffusion", "lr", c.generator.diffusion_train.lr));
    f.push_back(DPT_FIELD(double, "diffusion", "p_uncond", c.generator.diffusion_train.p_uncond));
    f.push_back(DPT_FIELD(double, "diffusion", "guidance", c.diffupt.generation.guidance.w));
    f.push_back(Field{"diffusion", "sampler",
                      [](const WorkbenchConfig& c) {
                        return std::string(c.diffupt.generation.sampler.kind == diffusion::SamplerChoice::Kind::kDdpm
                                               ? "ddpm"
                                               : "ddim");
                      },
                      [](WorkbenchConfig& c, const std::string& s) {
                        if (s == "ddpm") {
                          c.diffupt.generation.sampler.kind = diffusion::SamplerChoice::Kind::kDdpm;
                        } else if (s == "ddim") {
                          c.diffupt.generation.sampler.kind = diffusion::SamplerChoice::Kind::kDdim;
                        } else {
                          throw std::invalid_argument("expected ddpm or ddim, got '" + s + "'");
                        }
                      }});
    f.push_back(DPT_FIELD(std::size_t, "diffusion", "sampler_steps", c.diffupt.generation.sampler.steps));
    f.push_back(DPT_FIELD(double, "diffusion", "sampler_eta", c.diffupt.generation.sampler.eta));
    // classifier
    f.push_back(Field{"classifier", "widths",
                      [](const WorkbenchConfig& c) { return fmt_list(c.classifier.widths); },
                      [](WorkbenchConfig& c, const std::string& s) {
                        c.classifier.widths.clear();
                        for (const auto& w : split_list(s)) c.classifier.widths.push_back(parse_u64(w));
                      }});
    f.push_back(Field{"classifier", "baseline_loss",
                      [](const WorkbenchConfig& c) {
                        return std::string(c.baseline.loss == cls::LossKind::kBce ? "bce" : "weighted_bce");
                      },
                      [](WorkbenchConfig& c, const std::string& s) {
                        if (s == "bce") {
                          c.baseline.loss = cls::LossKind::kBce;
                        } else if (s == "weighted_bce") {
                          c.baseline.loss = cls::LossKind::kWeightedBce;
                        } else {
                          throw std::invalid_argument("expected bce or weighted_bce, got '" + s + "'");
                        }
                      }});
    f.push_back(Field{"classifier", "baseline_sampler",
                      [](const WorkbenchConfig& c) {
                        return std::string(c.baseline.sampler.kind == data::SamplerKind::kUniform ? "uniform"
                                                                                                  : "weighted");
                      },
                      [](WorkbenchConfig& c, const std::string& s) {
                        if (s == "uniform") {
                          c.baseline.sampler.kind = data::SamplerKind::kUniform;
                        } else if (s == "weighted") {
                          c.baseline.sampler.kind = data::SamplerKind::kClassWeighted;
                        } else {
                          throw std::invalid_argument("expected uniform or weighted, got '" + s + "'");
                        }
                      }});
    f.push_back(DPT_FIELD(double, "classifier", "lr", c.baseline.lr));
    f.push_back(DPT_FIELD(std::size_t, "classifier", "iterations", c.baseline.iterations));
    f.push_back(DPT_FIELD(std::size_t, "classifier", "batch", c.baseline.batch));
    f.push_back(DPT_FIELD(std::size_t, "classifier", "eval_interval", c.baseline.eval_interval));
    // pipeline
    f.push_back(DPT_FIELD(double, "pipeline", "pretrain_lr", c.diffupt.pretrain.lr));
    f.push_back(DPT_FIELD(std::size_t, "pipeline", "pretrain_iterations", c.diffupt.pretrain.iterations));
    f.push_back(DPT_FIELD(double, "pipeline", "finetune_lr", c.diffupt.finetune.lr));
    f.push_back(DPT_FIELD(std::size_t, "pipeline", "finetune_iterations", c.diffupt.finetune.iterations));
    f.push_back(DPT_FIELD(std::size_t, "pipeline", "generate_negative", c.diffupt.generation.n_negative));
    f.push_back(DPT_FIELD(std::size_t, "pipeline", "generate_positive", c.diffupt.generation.n_positive));
    f.push_back(DPT_FIELD(bool, "pipeline", "filter", c.diffupt.generation.filter.enabled));
    f.push_back(DPT_FIELD(double, "pipeline", "filter_threshold", c.diffupt.generation.filter.threshold));
    f.push_back(DPT_FIELD(double, "pipeline", "max_attempts_factor", c.diffupt.generation.max_attempts_factor));
    f.push_back(DPT_FIELD(std::size_t, "pipeline", "smote_neighbors", c.smote_neighbors));
    f.push_back(DPT_FIELD(std::size_t, "pipeline", "augment_count", c.augment_count));
    f.push_back(Field{"pipeline", "sweep_counts", [](const WorkbenchConfig& c) { return fmt_list(c.sweep_counts); },
                      [](WorkbenchConfig& c, const std::string& s) {
                        c.sweep_counts.clear();
                        for (const auto& v : split_list(s)) c.sweep_counts.push_back(parse_u64(v));
                      }});
    f.push_back(Field{"pipeline", "distributions",
                      [](const WorkbenchConfig& c) { return fmt_list(c.distributions); },
                      [](WorkbenchConfig& c, const std::string& s) {
                        c.distributions.clear();
                        for (const auto& v : split_list(s)) c.distributions.push_back(parse_double(v));
                      }});
    f.push_back(Field{"pipeline", "methods", [](const WorkbenchConfig& c) { return fmt_list(c.methods); },
                      [](WorkbenchConfig& c, const std::string& s) {
                        auto list = split_list(s);
                        for (const auto& m : list) {
                          try {
                            pipeline::parse_method(m);
                          } catch (const std::exception& e) {
                            throw std::invalid_argument(e.what());
                          }
                        }
                        c.methods = std::move(list);
                      }});
    // run
    f.push_back(Field{"run", "seeds", [](const WorkbenchConfig& c) { return fmt_list(c.seeds); },
                      [](WorkbenchConfig& c, const std::string& s) {
                        c.seeds.clear();
                        for (const auto& v : split_list(s)) c.seeds.push_back(parse_u64(v));
                      }});
    return f;
  }();
  return all;
}

#undef DPT_FIELD

// Regimes that share the classifier block's batch and cadence.
void propagate(WorkbenchConfig& c) {
  for (cls::TrainRegime* r : {&c.diffupt.pretrain, &c.diffupt.finetune}) {
    r->batch = c.baseline.batch;
    r->eval_interval = c.baseline.eval_interval;
  }
  const auto& plan = c.diffupt.generation;
  const std::size_t total = plan.n_negative + plan.n_positive;
  if (total > 0) {
    char label[32];
    const double pos = 100.0 * static_cast<double>(plan.n_positive) / static_cast<double>(total);
    std::snprintf(label, sizeof label, "%g-%g", std::round(pos), 100.0 - std::round(pos));
    c.diffupt.generation.distribution = label;
  }
}

std::string where(const std::string& section, const std::string& key, std::size_t line) {
  return "[" + section + "] " + key + (line ? " (line " + std::to_string(line) + ")" : "");
}

}  // namespace

WorkbenchConfig parse_config(const std::string& text) {
  WorkbenchConfig cfg;
  std::map<std::string, std::size_t> seen;  // "section.key" -> line
  std::string section;
  std::istringstream in(text);
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string line = trim(raw);
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("malformed section header at line " + std::to_string(line_no), line_no);
      section = trim(std::string_view(line).substr(1, line.size() - 2));
      bool known = false;
      for (const auto& f : fields()) known = known || f.section == section;
      if (!known) throw ConfigError("unknown section [" + section + "] at line " + std::to_string(line_no), line_no);
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("expected 'key = value' at line " + std::to_string(line_no), line_no);
    }
    if (section.empty()) {
      throw ConfigError("key outside any section at line " + std::to_string(line_no), line_no);
    }
    const std::string key = trim(std::string_view(line).substr(0, eq));
    const std::string value = trim(std::string_view(line).substr(eq + 1));
    const Field* field = nullptr;
    for (const auto& f : fields()) {
      if (f.section == section && f.key == key) field = &f;
    }
    if (field == nullptr) throw ConfigError("unknown key " + where(section, key, line_no), line_no);
    if (!seen.emplace(section + "." + key, line_no).second) {
      throw ConfigError("duplicate key " + where(section, key, line_no), line_no);
    }
    try {
      field->set(cfg, value);
    } catch (const std::invalid_argument& e) {
      throw ConfigError("invalid value for " + where(section, key, line_no) + ": " + e.what(), line_no);
    }
  }
  propagate(cfg);

  auto line_of = [&](const std::string& k) {
    const auto it = seen.find(k);
    return it == seen.end() ? std::size_t{0} : it->second;
  };
  if (!(cfg.diffupt.finetune.lr < cfg.diffupt.pretrain.lr)) {
    const std::size_t l = line_of("pipeline.finetune_lr") ? line_of("pipeline.finetune_lr") : line_of("pipeline.pretrain_lr");
    throw ConfigError("invalid value for " + where("pipeline", "finetune_lr", l) +
                          ": finetune_lr must be smaller than pretrain_lr",
                      l);
  }
  if (cfg.diffupt.generation.filter.enabled &&
      !(cfg.diffupt.generation.filter.threshold > 0.0 && cfg.diffupt.generation.filter.threshold < 1.0)) {
    const std::size_t l = line_of("pipeline.filter_threshold");
    throw ConfigError("invalid value for " + where("pipeline", "filter_threshold", l) + ": must lie in (0, 1)", l);
  }
  if (cfg.classifier.widths.empty()) {
    const std::size_t l = line_of("classifier.widths");
    throw ConfigError("invalid value for " + where("classifier", "widths", l) + ": needs at least one stage", l);
  }
  try {
    cfg.validate();
  } catch (const std::exception& e) {
    throw ConfigError(std::string("invalid configuration: ") + e.what(), 0);
  }
  return cfg;
}

WorkbenchConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file " + path.string(), 0);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string serialize_config(const WorkbenchConfig& cfg) {
  std::string out;
  std::string section;
  for (const auto& f : fields()) {
    if (f.section != section) {
      if (!section.empty()) out += "\n";
      section = f.section;
      out += "[" + section + "]\n";
    }
    out += f.key + " = " + f.get(cfg) + "\n";
  }
  return out;
}

std::string content_hash(const std::string& text) {
  boost::uuids::detail::sha1 sha;
  const std::string head = "blob " + std::to_string(text.size()) + std::string(1, '\0');
  sha.process_bytes(head.data(), head.size());
  sha.process_bytes(text.data(), text.size());
  boost::uuids::detail::sha1::digest_type digest;
  sha.get_digest(digest);
  char hex[41];
  for (int i = 0; i < 5; ++i) std::snprintf(hex + 8 * i, 9, "%08x", digest[i]);
  return std::string(hex, 40);
}

std::vector<KeyInfo> schema() {
  const WorkbenchConfig defaults;
  std::vector<KeyInfo> out;
  for (const auto& f : fields()) out.push_back({f.section, f.key, f.get(defaults)});
  return out;
}

}  // namespace diffupt::config
