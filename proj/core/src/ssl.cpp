#include "objcrop/ssl.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <numbers>
#include <numeric>

#include <nlohmann/json.hpp>

#include "objcrop/config_json.hpp"
#include "objcrop/errors.hpp"
#include "objcrop/ppm.hpp"

static_assert(std::endian::native == std::endian::little,
              "artifact file formats are little-endian");

namespace objcrop {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using nlohmann::json;

void TrainConfig::validate() const {
  if (!(temperature > 0.0)) throw ConfigError("train: temperature must be > 0");
  if (!(momentum > 0.0 && momentum <= 1.0)) throw ConfigError("train: momentum must be in (0,1]");
  if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (queue_size < 1 || queue_size % batch_size != 0)
    throw ConfigError("train: queue_size must be a positive multiple of batch_size");
  if (epochs < 0) throw ConfigError("train: epochs must be >= 0");
  if (lr < 0.0) throw ConfigError("train: lr must be >= 0");
  if (weight_decay < 0.0) throw ConfigError("train: weight_decay must be >= 0");
  if (arch.hidden < 1 || arch.feature_dim < 1 || arch.head_hidden < 1 || arch.embed_dim < 1)
    throw ConfigError("train: architecture widths must be >= 1");
  crop.validate();
}

namespace {

DenseLayer init_layer(int out_dim, int in_dim, double w_std, Rng& rng) {
  DenseLayer l;
  l.W.resize(out_dim, in_dim);
  for (int j = 0; j < in_dim; ++j)
    for (int i = 0; i < out_dim; ++i) l.W(i, j) = rng.normal() * w_std;
  // Small positive bias keeps narrow layers from starting fully dead.
  l.b = VectorXd::Constant(out_dim, 0.01);
  return l;
}

const ProjectionHead& head_for(const Encoder& e, ViewRole role) {
  return role == ViewRole::Object ? e.head_obj : e.head_ctx;
}

}  // namespace

Encoder init_encoder(int input_dim, const ArchConfig& arch, Rng& rng) {
  Encoder e;
  e.l1 = init_layer(arch.hidden, input_dim, std::sqrt(2.0 / input_dim), rng);
  e.l2 = init_layer(arch.feature_dim, arch.hidden, std::sqrt(1.0 / arch.hidden), rng);
  for (ProjectionHead* h : {&e.head_obj, &e.head_ctx}) {
    h->l1 = init_layer(arch.head_hidden, arch.feature_dim, std::sqrt(2.0 / arch.feature_dim), rng);
    h->l2 = init_layer(arch.embed_dim, arch.head_hidden, std::sqrt(1.0 / arch.head_hidden), rng);
  }
  return e;
}

ForwardResult ssl_forward(const Encoder& enc, const MatrixXd& X, ViewRole role,
                          ForwardTape* tape) {
  if (X.rows() != enc.l1.W.cols())
    throw ConfigError("forward: input has " + std::to_string(X.rows()) +
                      " rows, encoder expects " + std::to_string(enc.l1.W.cols()));
  const ProjectionHead& head = head_for(enc, role);
  MatrixXd A0 = (enc.l1.W * X).colwise() + enc.l1.b;
  MatrixXd H1 = A0.cwiseMax(0.0);
  MatrixXd F = (enc.l2.W * H1).colwise() + enc.l2.b;
  MatrixXd A1 = (head.l1.W * F).colwise() + head.l1.b;
  MatrixXd G1 = A1.cwiseMax(0.0);
  MatrixXd E = (head.l2.W * G1).colwise() + head.l2.b;

  VectorXd norms = E.colwise().norm();
  for (Eigen::Index j = 0; j < norms.size(); ++j)
    if (norms(j) == 0.0)
      throw ConfigError("forward: zero-length embedding; normalization undefined");
  ForwardResult out;
  out.features = F;
  out.embeddings = E.array().rowwise() / norms.transpose().array();
  if (tape) {
    tape->X = X;
    tape->A0 = std::move(A0);
    tape->H1 = std::move(H1);
    tape->F = std::move(F);
    tape->A1 = std::move(A1);
    tape->G1 = std::move(G1);
    tape->E = std::move(E);
    tape->inv_norm = norms.cwiseInverse();
    tape->role = role;
  }
  return out;
}

EncoderGrads ssl_backward(const Encoder& enc, const ForwardTape& tape, const MatrixXd& dZ) {
  const ProjectionHead& head = head_for(enc, tape.role);
  // Through the L2 normalization: z = e/|e|, de = (dz - z (z.dz)) / |e|.
  const Eigen::Index B = dZ.cols();
  MatrixXd Z = tape.E.array().rowwise() * tape.inv_norm.transpose().array();
  MatrixXd dE(dZ.rows(), B);
  for (Eigen::Index j = 0; j < B; ++j) {
    const double zdot = Z.col(j).dot(dZ.col(j));
    dE.col(j) = (dZ.col(j) - zdot * Z.col(j)) * tape.inv_norm(j);
  }

  EncoderGrads g;
  auto& ghead = tape.role == ViewRole::Object ? g.head_obj : g.head_ctx;
  auto& gother = tape.role == ViewRole::Object ? g.head_ctx : g.head_obj;

  ghead.l2.W = dE * tape.G1.transpose();
  ghead.l2.b = dE.rowwise().sum();
  MatrixXd dG1 = head.l2.W.transpose() * dE;
  MatrixXd dA1 = (tape.A1.array() > 0.0).select(dG1, 0.0);
  ghead.l1.W = dA1 * tape.F.transpose();
  ghead.l1.b = dA1.rowwise().sum();
  MatrixXd dF = head.l1.W.transpose() * dA1;

  g.l2.W = dF * tape.H1.transpose();
  g.l2.b = dF.rowwise().sum();
  MatrixXd dH1 = enc.l2.W.transpose() * dF;
  MatrixXd dA0 = (tape.A0.array() > 0.0).select(dH1, 0.0);
  g.l1.W = dA0 * tape.X.transpose();
  g.l1.b = dA0.rowwise().sum();

  // The unused head receives zero gradient.
  const ProjectionHead& other = tape.role == ViewRole::Object ? enc.head_ctx : enc.head_obj;
  gother.l1.W = MatrixXd::Zero(other.l1.W.rows(), other.l1.W.cols());
  gother.l1.b = VectorXd::Zero(other.l1.b.size());
  gother.l2.W = MatrixXd::Zero(other.l2.W.rows(), other.l2.W.cols());
  gother.l2.b = VectorXd::Zero(other.l2.b.size());
  return g;
}

std::pair<double, VectorXd> info_nce(const VectorXd& q, const VectorXd& k_pos,
                                     const MatrixXd& negatives, double tau) {
  if (!(tau > 0.0)) throw ConfigError("info_nce: tau must be > 0");
  if (q.norm() == 0.0 || k_pos.norm() == 0.0)
    throw ConfigError("info_nce: zero-length input vector; normalization must precede");
  const Eigen::Index n = negatives.cols();
  const double lp = q.dot(k_pos) / tau;
  VectorXd ln(n);
  if (n > 0) ln = negatives.transpose() * q / tau;
  double m = lp;
  for (Eigen::Index i = 0; i < n; ++i) m = std::max(m, ln(i));
  double sum = std::exp(lp - m);
  for (Eigen::Index i = 0; i < n; ++i) sum += std::exp(ln(i) - m);
  const double lse = m + std::log(sum);
  const double loss = lse - lp;

  const double p_pos = std::exp(lp - lse);
  VectorXd grad = (p_pos - 1.0) * k_pos / tau;
  for (Eigen::Index i = 0; i < n; ++i) grad += std::exp(ln(i) - lse) / tau * negatives.col(i);
  return {loss, grad};
}

BatchLoss info_nce_batch(const MatrixXd& Z, const MatrixXd& K, const MatrixXd& negatives,
                         double tau) {
  if (!(tau > 0.0)) throw ConfigError("info_nce: tau must be > 0");
  const Eigen::Index B = Z.cols(), n = negatives.cols();
  BatchLoss out;
  out.dZ = MatrixXd::Zero(Z.rows(), B);
  VectorXd lp = (Z.array() * K.array()).colwise().sum().transpose() / tau;
  MatrixXd ln;
  if (n > 0) ln = negatives.transpose() * Z / tau;  // n x B

  double loss_sum = 0.0, pos_sum = 0.0, neg_sum = 0.0;
  for (Eigen::Index j = 0; j < B; ++j) {
    double m = lp(j);
    for (Eigen::Index i = 0; i < n; ++i) m = std::max(m, ln(i, j));
    double sum = std::exp(lp(j) - m);
    for (Eigen::Index i = 0; i < n; ++i) sum += std::exp(ln(i, j) - m);
    const double lse = m + std::log(sum);
    loss_sum += lse - lp(j);
    pos_sum += lp(j) * tau;
    const double p_pos = std::exp(lp(j) - lse);
    out.dZ.col(j) = (p_pos - 1.0) / (tau * B) * K.col(j);
    if (n > 0) {
      VectorXd p = (ln.col(j).array() - lse).exp();
      out.dZ.col(j) += negatives * p / (tau * B);
      neg_sum += ln.col(j).sum() * tau;
    }
  }
  out.loss = loss_sum / static_cast<double>(B);
  out.pos_sim = pos_sum / static_cast<double>(B);
  out.neg_sim = n > 0 ? neg_sum / static_cast<double>(n * B) : 0.0;
  return out;
}

namespace {

template <class Fn>
void for_each_layer(Encoder& e, Fn&& fn) {
  fn(e.l1);
  fn(e.l2);
  fn(e.head_obj.l1);
  fn(e.head_obj.l2);
  fn(e.head_ctx.l1);
  fn(e.head_ctx.l2);
}

template <class Fn>
void for_each_layer_pair(Encoder& a, const Encoder& b, Fn&& fn) {
  fn(a.l1, b.l1);
  fn(a.l2, b.l2);
  fn(a.head_obj.l1, b.head_obj.l1);
  fn(a.head_obj.l2, b.head_obj.l2);
  fn(a.head_ctx.l1, b.head_ctx.l1);
  fn(a.head_ctx.l2, b.head_ctx.l2);
}

}  // namespace

void queue_push(ModelState& state, const Eigen::MatrixXd& cols) {
  const int K = static_cast<int>(state.queue.cols());
  if (cols.rows() != state.queue.rows())
    throw ConfigError("queue_push: embedding dimension mismatch");
  for (Eigen::Index j = 0; j < cols.cols(); ++j) {
    state.queue.col(state.queue_ptr) = cols.col(j);
    state.queue_ptr = (state.queue_ptr + 1) % K;
  }
  state.queue_count = std::min<int>(state.queue_count + static_cast<int>(cols.cols()), K);
}

void momentum_update(Encoder& key, const Encoder& query, double m) {
  for_each_layer_pair(key, query, [m](DenseLayer& k, const DenseLayer& q) {
    if (k.W.rows() != q.W.rows() || k.W.cols() != q.W.cols() || k.b.size() != q.b.size())
      throw ConfigError("momentum_update: shape mismatch between key and query");
    k.W = m * k.W + (1.0 - m) * q.W;
    k.b = m * k.b + (1.0 - m) * q.b;
  });
}

void sgd_step(Encoder& params, const EncoderGrads& g, double lr, double weight_decay) {
  for_each_layer_pair(params, g, [&](DenseLayer& p, const DenseLayer& gl) {
    p.W -= lr * (gl.W + weight_decay * p.W);
    p.b -= lr * (gl.b + weight_decay * p.b);
  });
}

VectorXd standardize_view(const ImageRGB& view, const Eigen::Vector3d& mean,
                          const Eigen::Vector3d& std) {
  VectorXd x(static_cast<Eigen::Index>(view.data.size()));
  const double* m = mean.data();
  const double* s = std.data();
  for (std::size_t i = 0; i < view.data.size(); ++i) {
    const int c = static_cast<int>(i % 3);
    x(static_cast<Eigen::Index>(i)) = (view.data[i] / 255.0 - m[c]) / s[c];
  }
  return x;
}

namespace {

// Routing per the dual-head design: object and context views use their own
// heads, except that scene-scene and obj-obj+shift pairs go through a single
// head (the object head).
ViewRole route_role(Strategy st, ViewRole tagged) {
  if (st == Strategy::SceneScene || st == Strategy::ObjObjShift) return ViewRole::Object;
  return tagged;
}

std::vector<BBox> boxes_for_entry(const ManifestEntry& e, Strategy st,
                                  const ProposalCache* cache) {
  std::vector<BBox> boxes;
  if (strategy_needs_proposals(st)) {
    for (const auto& p : cache->at(e.image)) boxes.push_back(p.box);
  } else if (strategy_needs_gt(st)) {
    for (const auto& o : e.objects) boxes.push_back(o.box);
  }
  return boxes;
}

void write_metrics_row(std::ofstream& f, const EpochMetrics& m) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%.17g\n", m.epoch, m.loss, m.pos_sim,
                m.neg_sim, m.lr);
  f << buf;
  f.flush();
}

}  // namespace

PretrainResult pretrain(const DatasetManifest& train, const ProposalCache* cache,
                        const TrainConfig& cfg, const std::filesystem::path& metrics_csv,
                        const ModelState* resume) {
  cfg.validate();
  if (train.entries.empty()) throw MissingInputError("pretrain: empty dataset");
  const Strategy st = cfg.strategy;
  if (strategy_needs_proposals(st)) {
    if (!cache)
      throw MissingInputError(std::string("pretrain: strategy ") + strategy_name(st) +
                              " requires a proposal cache");
    std::vector<std::string> keys;
    for (const auto& e : train.entries) keys.push_back(e.image);
    cache->require(keys);
  }
  if (strategy_needs_gt(st))
    for (const auto& e : train.entries)
      if (e.objects.empty())
        throw MissingInputError(std::string("pretrain: strategy ") + strategy_name(st) +
                                " requires ground-truth boxes for every image (missing for " +
                                e.image + ")");

  const int d0 = 3 * cfg.crop.target * cfg.crop.target;
  const int B = cfg.batch_size;
  const std::size_t n = train.entries.size();

  // Decode the dataset once; every epoch re-crops from RAM.
  std::vector<ImageRGB> images(n);
  std::vector<std::vector<BBox>> boxes(n);
  for (std::size_t i = 0; i < n; ++i) {
    images[i] = ppm_load(train.image_path(train.entries[i]));
    boxes[i] = boxes_for_entry(train.entries[i], st, cache);
  }

  double s_min = cfg.crop.scale_lo;
  if (cfg.crop.s_min_override) {
    s_min = *cfg.crop.s_min_override;
  } else if (strategy_needs_proposals(st)) {
    s_min = compute_smin(*cache, train, cfg.crop.scale_lo);
  } else if (strategy_needs_gt(st)) {
    s_min = compute_smin_gt(train, cfg.crop.scale_lo);
  }

  Rng rng(cfg.seed);
  ModelState state;
  if (resume) {
    state = *resume;
    if (state.input_side != cfg.crop.target || state.queue.cols() != cfg.queue_size ||
        state.queue.rows() != cfg.arch.embed_dim)
      throw ConfigError("pretrain: resume checkpoint does not match the config");
    rng.set_state(state.rng_state);
  } else {
    state.input_side = cfg.crop.target;
    state.query = init_encoder(d0, cfg.arch, rng);
    state.key = state.query;
    state.queue = MatrixXd::Zero(cfg.arch.embed_dim, cfg.queue_size);
    // Per-channel normalization statistics from the first images.
    const std::size_t n_stat = std::min<std::size_t>(n, 512);
    Eigen::Vector3d sum = Eigen::Vector3d::Zero(), sumsq = Eigen::Vector3d::Zero();
    std::int64_t count = 0;
    for (std::size_t i = 0; i < n_stat; ++i) {
      const auto& img = images[i];
      for (std::size_t p = 0; p < img.data.size(); p += 3) {
        for (int c = 0; c < 3; ++c) {
          const double v = img.data[p + c] / 255.0;
          sum(c) += v;
          sumsq(c) += v * v;
        }
        ++count;
      }
    }
    state.norm_mean = sum / static_cast<double>(count);
    const Eigen::Vector3d var =
        sumsq / static_cast<double>(count) - state.norm_mean.cwiseProduct(state.norm_mean);
    state.norm_std = var.cwiseMax(0.0).cwiseSqrt().cwiseMax(1e-8);
  }

  std::ofstream csv;
  if (!metrics_csv.empty()) {
    const bool append = resume && std::filesystem::exists(metrics_csv);
    csv.open(metrics_csv, append ? std::ios::app : std::ios::trunc);
    if (!csv) throw MissingInputError("cannot write metrics csv: " + metrics_csv.string());
    if (!append) csv << "epoch,loss,pos_sim,neg_sim,lr\n";
  }

  PretrainResult result;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  const std::size_t steps_per_epoch = n / static_cast<std::size_t>(B);

  MatrixXd Xq(d0, B), Xk(d0, B);
  for (int epoch = state.epochs_done; epoch < cfg.epochs; ++epoch) {
    const double lr_now =
        cfg.cosine_lr
            ? cfg.lr * 0.5 * (1.0 + std::cos(std::numbers::pi * epoch / std::max(1, cfg.epochs)))
            : cfg.lr;
    double loss_sum = 0, pos_sum = 0, neg_sum = 0;
    std::size_t neg_steps = 0;

    // The visit order is a fresh shuffle each epoch, a pure function of the
    // RNG state, so a resumed run replays the interrupted one exactly.
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = n; i > 1; --i)
      std::swap(order[i - 1],
                order[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(i) - 1))]);

    for (std::size_t s = 0; s < steps_per_epoch; ++s) {
      ViewRole role_q = ViewRole::Object, role_k = ViewRole::Context;
      for (int slot = 0; slot < B; ++slot) {
        const std::size_t idx = order[s * B + slot];
        ViewPair vp = sample_pair(images[idx], boxes[idx], st, cfg.crop, s_min, rng);
        if (cfg.swap_views) {
          std::swap(vp.view_a, vp.view_b);
          std::swap(vp.role_a, vp.role_b);
          std::swap(vp.src_a, vp.src_b);
        }
        Xq.col(slot) = standardize_view(vp.view_a, state.norm_mean, state.norm_std);
        Xk.col(slot) = standardize_view(vp.view_b, state.norm_mean, state.norm_std);
        role_q = route_role(st, vp.role_a);
        role_k = route_role(st, vp.role_b);
      }

      ForwardTape tape;
      const ForwardResult fq = ssl_forward(state.query, Xq, role_q, &tape);
      const ForwardResult fk = ssl_forward(state.key, Xk, role_k);  // stop-gradient

      const auto negatives = state.queue.leftCols(state.queue_count);
      const BatchLoss bl = info_nce_batch(fq.embeddings, fk.embeddings, negatives,
                                          cfg.temperature);
      const EncoderGrads grads = ssl_backward(state.query, tape, bl.dZ);
      sgd_step(state.query, grads, lr_now, cfg.weight_decay);
      momentum_update(state.key, state.query, cfg.momentum);

      queue_push(state, fk.embeddings);

      ++state.step;
      loss_sum += bl.loss;
      pos_sum += bl.pos_sim;
      if (negatives.cols() > 0) {
        neg_sum += bl.neg_sim;
        ++neg_steps;
      }
    }

    EpochMetrics m;
    m.epoch = epoch + 1;
    const double denom = std::max<std::size_t>(steps_per_epoch, 1);
    m.loss = loss_sum / denom;
    m.pos_sim = pos_sum / denom;
    m.neg_sim = neg_steps > 0 ? neg_sum / static_cast<double>(neg_steps) : 0.0;
    m.lr = lr_now;
    result.metrics.push_back(m);
    if (csv.is_open()) write_metrics_row(csv, m);
    state.epochs_done = epoch + 1;
  }

  rng.state(state.rng_state);
  result.state = std::move(state);
  return result;
}

// ---------------------------------------------------------------------------
// Checkpoint format: magic "OBJCROP1", u32 version, u64 json length, json
// (config + scalar state), u32 tensor count, then per tensor: u32 name
// length, name, u32 ndim, u64 dims, f64 payload (column-major).

namespace {

constexpr char kCkptMagic[8] = {'O', 'B', 'J', 'C', 'R', 'O', 'P', '1'};
constexpr std::uint32_t kCkptVersion = 1;

struct NamedTensor {
  std::string name;
  std::vector<std::uint64_t> dims;
  const double* data;
  std::size_t len;
};

void collect_tensors(const ModelState& st, std::vector<NamedTensor>& out) {
  auto add_m = [&](const std::string& name, const MatrixXd& m) {
    out.push_back({name,
                   {static_cast<std::uint64_t>(m.rows()), static_cast<std::uint64_t>(m.cols())},
                   m.data(),
                   static_cast<std::size_t>(m.size())});
  };
  auto add_v = [&](const std::string& name, const VectorXd& v) {
    out.push_back({name, {static_cast<std::uint64_t>(v.size())}, v.data(),
                   static_cast<std::size_t>(v.size())});
  };
  auto add_enc = [&](const std::string& prefix, const Encoder& e) {
    add_m(prefix + "_l1_W", e.l1.W);
    add_v(prefix + "_l1_b", e.l1.b);
    add_m(prefix + "_l2_W", e.l2.W);
    add_v(prefix + "_l2_b", e.l2.b);
    add_m(prefix + "_obj_l1_W", e.head_obj.l1.W);
    add_v(prefix + "_obj_l1_b", e.head_obj.l1.b);
    add_m(prefix + "_obj_l2_W", e.head_obj.l2.W);
    add_v(prefix + "_obj_l2_b", e.head_obj.l2.b);
    add_m(prefix + "_ctx_l1_W", e.head_ctx.l1.W);
    add_v(prefix + "_ctx_l1_b", e.head_ctx.l1.b);
    add_m(prefix + "_ctx_l2_W", e.head_ctx.l2.W);
    add_v(prefix + "_ctx_l2_b", e.head_ctx.l2.b);
  };
  add_enc("q", st.query);
  add_enc("k", st.key);
  add_m("queue", st.queue);
  out.push_back({"norm_mean", {3}, st.norm_mean.data(), 3});
  out.push_back({"norm_std", {3}, st.norm_std.data(), 3});
}

char hexdigit(unsigned v) { return v < 10 ? char('0' + v) : char('a' + v - 10); }

std::string u64_hex(std::uint64_t v) {
  std::string s = "0x";
  for (int i = 60; i >= 0; i -= 4) s += hexdigit((v >> i) & 0xF);
  return s;
}

std::uint64_t parse_u64_hex(const std::string& s) {
  return std::stoull(s, nullptr, 16);
}

}  // namespace

void checkpoint_save(const ModelState& state, const TrainConfig& cfg,
                     const std::filesystem::path& path) {
  json meta;
  meta["config"] = train_config_to_json(cfg);
  meta["step"] = state.step;
  meta["epochs_done"] = state.epochs_done;
  meta["queue_ptr"] = state.queue_ptr;
  meta["queue_count"] = state.queue_count;
  meta["input_side"] = state.input_side;
  meta["rng_state"] = {u64_hex(state.rng_state[0]), u64_hex(state.rng_state[1]),
                       u64_hex(state.rng_state[2]), u64_hex(state.rng_state[3])};
  const std::string js = meta.dump();

  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw MissingInputError("cannot write checkpoint: " + path.string());
  f.write(kCkptMagic, sizeof kCkptMagic);
  auto put = [&f](const auto& v) { f.write(reinterpret_cast<const char*>(&v), sizeof v); };
  put(kCkptVersion);
  const std::uint64_t jlen = js.size();
  put(jlen);
  f.write(js.data(), static_cast<std::streamsize>(js.size()));

  std::vector<NamedTensor> tensors;
  collect_tensors(state, tensors);
  const std::uint32_t n = static_cast<std::uint32_t>(tensors.size());
  put(n);
  for (const auto& t : tensors) {
    const std::uint32_t name_len = static_cast<std::uint32_t>(t.name.size());
    put(name_len);
    f.write(t.name.data(), name_len);
    const std::uint32_t ndim = static_cast<std::uint32_t>(t.dims.size());
    put(ndim);
    for (const auto d : t.dims) put(d);
    f.write(reinterpret_cast<const char*>(t.data),
            static_cast<std::streamsize>(t.len * sizeof(double)));
  }
}

namespace {

template <class T>
T ckpt_get(std::ifstream& f, const char* what) {
  T v;
  f.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!f) throw ParseError(std::string("checkpoint: truncated file reading ") + what);
  return v;
}

}  // namespace

Checkpoint checkpoint_load(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw MissingInputError("cannot open checkpoint: " + path.string());
  char magic[8];
  f.read(magic, sizeof magic);
  if (!f || std::memcmp(magic, kCkptMagic, sizeof magic) != 0)
    throw VersionError("checkpoint: bad magic");
  const auto version = ckpt_get<std::uint32_t>(f, "version");
  if (version != kCkptVersion)
    throw VersionError("checkpoint: unsupported version " + std::to_string(version));
  const auto jlen = ckpt_get<std::uint64_t>(f, "json length");
  std::string js(jlen, '\0');
  f.read(js.data(), static_cast<std::streamsize>(jlen));
  if (!f) throw ParseError("checkpoint: truncated file reading config json");
  json meta;
  try {
    meta = json::parse(js);
  } catch (const json::exception& e) {
    throw ParseError(std::string("checkpoint: bad config json: ") + e.what());
  }

  Checkpoint ck;
  ck.config = train_config_from_json(meta.at("config"));
  ck.state.step = meta.at("step").get<std::int64_t>();
  ck.state.epochs_done = meta.at("epochs_done").get<int>();
  ck.state.queue_ptr = meta.at("queue_ptr").get<int>();
  ck.state.queue_count = meta.at("queue_count").get<int>();
  ck.state.input_side = meta.at("input_side").get<int>();
  const auto& rs = meta.at("rng_state");
  for (int i = 0; i < 4; ++i) ck.state.rng_state[i] = parse_u64_hex(rs.at(i).get<std::string>());

  const auto n_tensors = ckpt_get<std::uint32_t>(f, "tensor count");
  std::vector<std::pair<std::string, MatrixXd>> tensors;
  std::vector<std::vector<std::uint64_t>> dims_list;
  for (std::uint32_t i = 0; i < n_tensors; ++i) {
    const auto name_len = ckpt_get<std::uint32_t>(f, "tensor name length");
    std::string name(name_len, '\0');
    f.read(name.data(), name_len);
    if (!f) throw ParseError("checkpoint: truncated file reading tensor name");
    const auto ndim = ckpt_get<std::uint32_t>(f, "tensor rank");
    std::vector<std::uint64_t> dims(ndim);
    std::uint64_t total = 1;
    for (auto& d : dims) {
      d = ckpt_get<std::uint64_t>(f, "tensor dims");
      total *= d;
    }
    MatrixXd m(ndim == 2 ? static_cast<Eigen::Index>(dims[0]) : static_cast<Eigen::Index>(total),
               ndim == 2 ? static_cast<Eigen::Index>(dims[1]) : 1);
    f.read(reinterpret_cast<char*>(m.data()),
           static_cast<std::streamsize>(total * sizeof(double)));
    if (!f) throw ParseError("checkpoint: truncated file reading tensor " + name);
    tensors.emplace_back(std::move(name), std::move(m));
    dims_list.push_back(std::move(dims));
  }

  auto find = [&](const std::string& name) -> std::pair<const MatrixXd*, const std::vector<std::uint64_t>*> {
    for (std::size_t i = 0; i < tensors.size(); ++i)
      if (tensors[i].first == name) return {&tensors[i].second, &dims_list[i]};
    throw ParseError("checkpoint: missing tensor " + name);
  };

  const auto& arch = ck.config.arch;
  const std::uint64_t d0 = static_cast<std::uint64_t>(3) * ck.state.input_side * ck.state.input_side;
  auto load_enc = [&](const std::string& prefix, Encoder& e) {
    struct Want {
      std::string name;
      std::vector<std::uint64_t> dims;
      MatrixXd* mat;
      VectorXd* vec;
    };
    const std::uint64_t H = arch.hidden, Fd = arch.feature_dim, Hh = arch.head_hidden,
                        Ed = arch.embed_dim;
    std::vector<Want> wants = {
        {prefix + "_l1_W", {H, d0}, &e.l1.W, nullptr},
        {prefix + "_l1_b", {H}, nullptr, &e.l1.b},
        {prefix + "_l2_W", {Fd, H}, &e.l2.W, nullptr},
        {prefix + "_l2_b", {Fd}, nullptr, &e.l2.b},
        {prefix + "_obj_l1_W", {Hh, Fd}, &e.head_obj.l1.W, nullptr},
        {prefix + "_obj_l1_b", {Hh}, nullptr, &e.head_obj.l1.b},
        {prefix + "_obj_l2_W", {Ed, Hh}, &e.head_obj.l2.W, nullptr},
        {prefix + "_obj_l2_b", {Ed}, nullptr, &e.head_obj.l2.b},
        {prefix + "_ctx_l1_W", {Hh, Fd}, &e.head_ctx.l1.W, nullptr},
        {prefix + "_ctx_l1_b", {Hh}, nullptr, &e.head_ctx.l1.b},
        {prefix + "_ctx_l2_W", {Ed, Hh}, &e.head_ctx.l2.W, nullptr},
        {prefix + "_ctx_l2_b", {Ed}, nullptr, &e.head_ctx.l2.b},
    };
    for (auto& w : wants) {
      auto [mat, dims] = find(w.name);
      if (*dims != w.dims) throw ParseError("checkpoint: shape mismatch for " + w.name);
      if (w.mat)
        *w.mat = *mat;
      else
        *w.vec = mat->col(0);
    }
  };
  load_enc("q", ck.state.query);
  load_enc("k", ck.state.key);
  {
    auto [mat, dims] = find("queue");
    if (dims->size() != 2 || (*dims)[0] != static_cast<std::uint64_t>(arch.embed_dim) ||
        (*dims)[1] != static_cast<std::uint64_t>(ck.config.queue_size))
      throw ParseError("checkpoint: shape mismatch for queue");
    ck.state.queue = *mat;
  }
  for (const char* name : {"norm_mean", "norm_std"}) {
    auto [mat, dims] = find(name);
    if (dims->size() != 1 || (*dims)[0] != 3)
      throw ParseError(std::string("checkpoint: shape mismatch for ") + name);
    Eigen::Vector3d v = mat->col(0).head<3>();
    if (std::string(name) == "norm_mean")
      ck.state.norm_mean = v;
    else
      ck.state.norm_std = v;
  }
  return ck;
}

}  // namespace objcrop
