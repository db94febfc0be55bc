#pragma once

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "autodiff.hpp"
#include "data_tu.hpp"
#include "layers.hpp"
#include "pattern.hpp"
#include "rng.hpp"

namespace mgcheb {

struct ModelConfig {
  FusionMethod fusion = FusionMethod::SingleEdge;
  std::size_t k_order = 4;
  std::vector<std::size_t> conv_widths{32, 32, 32};
  std::size_t fc_width = 96;
  std::size_t n_classes = 2;
  double dropout_p = 0.1;
  std::size_t proj_hidden = 128;
  std::size_t edge_hidden = 128;
  bool use_learned_edges = false;
  bool learned_edge_recompute = false;
  std::size_t annotated_relations = 1;

  std::size_t relations() const { return annotated_relations + (use_learned_edges ? 1 : 0); }

  void validate() const {
    if (k_order < 1) throw ConfigError("k_order", "must be >= 1");
    if (conv_widths.empty()) throw ConfigError("conv_widths", "needs at least one layer");
    for (auto w : conv_widths)
      if (w == 0) throw ConfigError("conv_widths", "widths must be positive");
    if (fc_width == 0) throw ConfigError("fc_width", "must be positive");
    if (n_classes < 2) throw ConfigError("n_classes", "must be >= 2");
    if (!(dropout_p >= 0.0 && dropout_p < 1.0)) throw ConfigError("dropout", "must be in [0, 1)");
    if (uses_projection(fusion) && proj_hidden == 0) throw ConfigError("proj_hidden", "must be positive");
    if (use_learned_edges && edge_hidden == 0) throw ConfigError("edge_hidden", "must be positive");
    if (annotated_relations == 0) throw ConfigError("annotated_relations", "must be >= 1");
    try {
      check_relation_count(fusion, relations());
    } catch (const DimensionError& e) {
      throw ConfigError("fusion", std::string(e.what()) + (use_learned_edges ? " (learned edges add one)" : ""));
    }
  }
};

/// Architectures from the dataset table (GC widths, FC width, classes).
inline ModelConfig preset_config(const std::string& dataset) {
  ModelConfig c;
  if (dataset == "NCI1" || dataset == "NCI109") {
    c.conv_widths = {32, 64, 128};
    c.fc_width = 256;
  } else if (dataset == "ENZYMES") {
    c.conv_widths = {32, 64, 512};
    c.fc_width = 256;
    c.n_classes = 6;
  } else if (dataset == "PROTEINS") {
    c.edge_hidden = 32;
  }
  return c;
}

struct BatchNormLayer {
  Parameter gamma;
  Parameter beta;
  ad::BatchNormState state;

  BatchNormLayer(std::size_t width, const std::string& prefix)
      : gamma(prefix + ".gamma", DenseMat(1, width, 1.0), false),
        beta(prefix + ".beta", DenseMat(1, width, 0.0), false),
        state(width) {}

  Var forward(Tape& tape, const Var& x, bool train) {
    return ad::batch_norm(x, tape.param(gamma), tape.param(beta), state, train);
  }
};

/// conv → BN → ReLU (× layers), global max pool, dropout, FC → BN → ReLU, dropout, FC.
class Model {
 public:
  static Model build(const ModelConfig& config, std::size_t x_in, std::uint64_t seed) {
    config.validate();
    if (x_in == 0) throw ConfigError("x_in", "input feature width must be positive");
    Model m;
    m.config_ = config;
    m.x_in_ = x_in;
    Rng rng(seed);
    std::size_t width = x_in;
    for (std::size_t l = 0; l < config.conv_widths.size(); ++l) {
      const std::string tag = "conv" + std::to_string(l);
      if (config.use_learned_edges && (l == 0 || config.learned_edge_recompute))
        m.edges_.emplace_back(width, config.edge_hidden, rng, "edge" + std::to_string(l));
      m.convs_.emplace_back(config.fusion, width, config.conv_widths[l], config.k_order, config.relations(),
                            config.proj_hidden, rng, tag);
      m.norms_.emplace_back(config.conv_widths[l], "bn" + std::to_string(l));
      width = config.conv_widths[l];
    }
    // FC1 feeds a batch norm, which cancels any bias.
    m.fc1_.emplace(width, config.fc_width, false, rng, "fc1");
    m.fc_norm_.emplace(config.fc_width, "bn_fc1");
    m.fc2_.emplace(config.fc_width, config.n_classes, true, rng, "fc2");
    return m;
  }

  const ModelConfig& config() const noexcept { return config_; }
  std::size_t x_in() const noexcept { return x_in_; }
  std::vector<ConvLayer>& convs() noexcept { return convs_; }
  std::vector<EdgeLearner>& edge_learners() noexcept { return edges_; }
  Linear& fc1() { return *fc1_; }
  Linear& fc2() { return *fc2_; }

  std::vector<Parameter*> parameters() {
    std::vector<Parameter*> ps;
    for (auto& e : edges_)
      for (auto* p : e.parameters()) ps.push_back(p);
    for (std::size_t l = 0; l < convs_.size(); ++l) {
      for (auto* p : convs_[l].parameters()) ps.push_back(p);
      ps.push_back(&norms_[l].gamma);
      ps.push_back(&norms_[l].beta);
    }
    for (auto* p : fc1_->parameters()) ps.push_back(p);
    ps.push_back(&fc_norm_->gamma);
    ps.push_back(&fc_norm_->beta);
    for (auto* p : fc2_->parameters()) ps.push_back(p);
    return ps;
  }

  std::size_t trainable_count() {
    std::size_t n = 0;
    for (auto* p : parameters()) n += p->value.size();
    return n;
  }

  void zero_grad() {
    for (auto* p : parameters()) p->zero_grad();
  }

  /// Logits, one row per graph. `dropout_rng` is required when training with dropout.
  Var forward(Tape& tape, const Batch& batch, bool train, Rng* dropout_rng = nullptr) {
    if (batch.features.cols() != x_in_)
      throw DimensionError("Model: batch has " + std::to_string(batch.features.cols()) + " input features, model expects " +
                           std::to_string(x_in_));
    if (batch.laplacians.size() != config_.annotated_relations)
      throw DimensionError("Model: batch carries " + std::to_string(batch.laplacians.size()) +
                           " annotated relations, model expects " + std::to_string(config_.annotated_relations));
    const bool drop = train && config_.dropout_p > 0.0;
    if (drop && dropout_rng == nullptr) throw Error("Model: training with dropout needs a random generator");

    Var h = tape.constant(batch.features);
    PatternPtr pattern;
    std::optional<Relation> learned;
    if (config_.use_learned_edges) {
      pattern = PairPattern::within_segments(batch.segments);
      learned = learned_relation(edges_[0].learn(tape, h, pattern));
    }
    for (std::size_t l = 0; l < convs_.size(); ++l) {
      std::vector<Relation> rels;
      for (const auto& lap : batch.laplacians) rels.push_back(Relation::annotated(lap));
      if (config_.use_learned_edges) {
        if (config_.learned_edge_recompute && l > 0) learned = learned_relation(edges_[l].learn(tape, h, pattern));
        rels.push_back(*learned);
      }
      h = convs_[l].forward(tape, rels, h);
      h = ad::relu(norms_[l].forward(tape, h, train));
    }
    Var z = global_max_pool(h, batch.segments, batch.n_graphs);
    if (drop) z = ad::dropout(z, config_.dropout_p, *dropout_rng, true);
    z = ad::relu(fc_norm_->forward(tape, fc1_->forward(tape, z), train));
    if (drop) z = ad::dropout(z, config_.dropout_p, *dropout_rng, true);
    return fc2_->forward(tape, z);
  }

  /// Arrays restored by load(): every parameter plus batch-norm running statistics.
  std::vector<std::pair<std::string, DenseMat*>> state_arrays() {
    std::vector<std::pair<std::string, DenseMat*>> out;
    for (auto* p : parameters()) out.emplace_back(p->name, &p->value);
    for (std::size_t l = 0; l < norms_.size(); ++l) {
      out.emplace_back("bn" + std::to_string(l) + ".running_mean", &norms_[l].state.running_mean);
      out.emplace_back("bn" + std::to_string(l) + ".running_var", &norms_[l].state.running_var);
    }
    out.emplace_back("bn_fc1.running_mean", &fc_norm_->state.running_mean);
    out.emplace_back("bn_fc1.running_var", &fc_norm_->state.running_var);
    return out;
  }

 private:
  Model() = default;

  ModelConfig config_;
  std::size_t x_in_ = 0;
  std::vector<EdgeLearner> edges_;
  std::vector<ConvLayer> convs_;
  std::vector<BatchNormLayer> norms_;
  std::optional<Linear> fc1_;
  std::optional<BatchNormLayer> fc_norm_;
  std::optional<Linear> fc2_;
};

inline Var classification_loss(const Var& logits, const Batch& batch) {
  return ad::cross_entropy_with_logits(logits, batch.labels);
}

inline std::vector<std::size_t> argmax_rows(const DenseMat& logits) {
  std::vector<std::size_t> out(logits.rows());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < logits.cols(); ++c)
      if (logits(i, c) > logits(i, best)) best = c;
    out[i] = best;
  }
  return out;
}

/// Eval-mode logits for a batch.
inline DenseMat predict_logits(Model& model, const Batch& batch) {
  Tape tape;
  return model.forward(tape, batch, false).value();
}

// ---------------------------------------------------------------------------------------------
// Checkpoints
//
//   mgcheb-checkpoint 1
//   x_in <int>
//   config <key> = <value>        (one line per ModelConfig field)
//   tensor <name> <rows> <cols>
//   <rows lines of <cols> space-separated values, %.17g>
//   ...
//   end
//
// Values are printed with 17 significant digits, which round-trips IEEE doubles exactly.
// ---------------------------------------------------------------------------------------------

inline std::string join_sizes(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::vector<std::pair<std::string, std::string>> model_config_entries(const ModelConfig& c) {
  return {{"fusion", std::string(to_string(c.fusion))},
          {"k_order", std::to_string(c.k_order)},
          {"conv_widths", join_sizes(c.conv_widths)},
          {"fc_width", std::to_string(c.fc_width)},
          {"n_classes", std::to_string(c.n_classes)},
          {"dropout", format_double(c.dropout_p)},
          {"proj_hidden", std::to_string(c.proj_hidden)},
          {"edge_hidden", std::to_string(c.edge_hidden)},
          {"use_learned_edges", c.use_learned_edges ? "true" : "false"},
          {"learned_edge_recompute", c.learned_edge_recompute ? "true" : "false"},
          {"annotated_relations", std::to_string(c.annotated_relations)}};
}

inline void save_checkpoint(Model& model, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write checkpoint " + path.string());
  out << "mgcheb-checkpoint 1\n";
  out << "x_in " << model.x_in() << "\n";
  for (const auto& [k, v] : model_config_entries(model.config())) out << "config " << k << " = " << v << "\n";
  for (const auto& [name, m] : model.state_arrays()) {
    out << "tensor " << name << " " << m->rows() << " " << m->cols() << "\n";
    for (std::size_t i = 0; i < m->rows(); ++i) {
      for (std::size_t j = 0; j < m->cols(); ++j) out << (j ? " " : "") << format_double((*m)(i, j));
      out << "\n";
    }
  }
  out << "end\n";
}

namespace detail {
inline std::vector<std::size_t> parse_size_list(const std::string& key, const std::string& s) {
  std::vector<std::size_t> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    std::size_t pos = 0;
    try {
      const long long v = std::stoll(tok, &pos);
      if (v <= 0) throw ConfigError(key, "entries must be positive");
      while (pos < tok.size() && std::isspace(static_cast<unsigned char>(tok[pos]))) ++pos;
      if (pos != tok.size()) throw ConfigError(key, "bad integer '" + tok + "'");
      out.push_back(static_cast<std::size_t>(v));
    } catch (const std::logic_error&) {
      throw ConfigError(key, "bad integer '" + tok + "'");
    }
  }
  return out;
}
}  // namespace detail

/// Applies one model key; returns false if the key is not a model key.
inline bool apply_model_entry(ModelConfig& c, const std::string& key, const std::string& value) {
  auto as_size = [&](const std::string& k) {
    const auto v = detail::parse_size_list(k, value);
    if (v.size() != 1) throw ConfigError(k, "expected one integer");
    return v[0];
  };
  auto as_bool = [&](const std::string& k) {
    if (value == "true" || value == "1" || value == "yes") return true;
    if (value == "false" || value == "0" || value == "no") return false;
    throw ConfigError(k, "expected true/false, got '" + value + "'");
  };
  if (key == "fusion") {
    const auto f = parse_fusion(value);
    if (!f) throw ConfigError(key, "unknown fusion '" + value + "'");
    c.fusion = *f;
  } else if (key == "k_order") {
    c.k_order = as_size(key);
  } else if (key == "conv_widths") {
    c.conv_widths = detail::parse_size_list(key, value);
  } else if (key == "fc_width") {
    c.fc_width = as_size(key);
  } else if (key == "n_classes") {
    c.n_classes = as_size(key);
  } else if (key == "dropout") {
    try {
      std::size_t pos = 0;
      c.dropout_p = std::stod(value, &pos);
      if (pos != value.size()) throw ConfigError(key, "bad number '" + value + "'");
    } catch (const std::logic_error&) {
      throw ConfigError(key, "bad number '" + value + "'");
    }
  } else if (key == "proj_hidden") {
    c.proj_hidden = as_size(key);
  } else if (key == "edge_hidden") {
    c.edge_hidden = as_size(key);
  } else if (key == "use_learned_edges") {
    c.use_learned_edges = as_bool(key);
  } else if (key == "learned_edge_recompute") {
    c.learned_edge_recompute = as_bool(key);
  } else if (key == "annotated_relations") {
    c.annotated_relations = as_size(key);
  } else {
    return false;
  }
  return true;
}

inline Model load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open checkpoint " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != "mgcheb-checkpoint 1")
    throw Error(path.string() + ": not a version-1 checkpoint");
  std::size_t x_in = 0;
  ModelConfig cfg;
  std::map<std::string, DenseMat> tensors;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "x_in") {
      ls >> x_in;
    } else if (tag == "config") {
      std::string key, eq, value;
      ls >> key >> eq;
      std::getline(ls, value);
      value.erase(0, value.find_first_not_of(' '));
      if (!apply_model_entry(cfg, key, value)) throw Error(path.string() + ": unknown config key " + key);
    } else if (tag == "tensor") {
      std::string name;
      std::size_t r = 0, c = 0;
      ls >> name >> r >> c;
      DenseMat m(r, c);
      for (std::size_t k = 0; k < r * c; ++k) {
        std::string tok;
        if (!(in >> tok)) throw Error(path.string() + ": truncated tensor " + name);
        m[k] = std::strtod(tok.c_str(), nullptr);
      }
      std::getline(in, line);
      tensors.emplace(name, std::move(m));
    } else if (tag == "end") {
      break;
    } else if (!tag.empty()) {
      throw Error(path.string() + ": unexpected line '" + line + "'");
    }
  }
  Model model = Model::build(cfg, x_in, 0);
  for (auto& [name, dst] : model.state_arrays()) {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw Error(path.string() + ": missing tensor " + name);
    if (!it->second.same_shape(*dst)) throw Error(path.string() + ": tensor " + name + " has wrong shape");
    *dst = it->second;
  }
  return model;
}

}  // namespace mgcheb
