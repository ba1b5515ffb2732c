#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include <Eigen/Dense>

#include "objcrop/cropper.hpp"
#include "objcrop/manifest.hpp"
#include "objcrop/objectness.hpp"

namespace objcrop {

/// Encoder/head widths. Defaults are the reference desk-scale architecture;
/// tests shrink them to make exhaustive finite-difference checks cheap.
struct ArchConfig {
  int hidden = 512;       // backbone hidden width
  int feature_dim = 256;  // backbone feature width (probe tap point)
  int head_hidden = 256;  // projection head hidden width
  int embed_dim = 64;     // loss-space embedding width
};

struct DenseLayer {
  Eigen::MatrixXd W;
  Eigen::VectorXd b;
};

/// 2-layer projection head: feature -> head_hidden (ReLU) -> embed.
struct ProjectionHead {
  DenseLayer l1, l2;
};

/// Backbone (flatten -> hidden ReLU -> feature) plus object and context
/// projection heads.
struct Encoder {
  DenseLayer l1, l2;
  ProjectionHead head_obj, head_ctx;
};

/// Gradients share the parameter layout.
using EncoderGrads = Encoder;

struct TrainConfig {
  double temperature = 0.2;
  double momentum = 0.999;      // key-encoder EMA coefficient
  int queue_size = 4096;        // negative queue capacity, multiple of batch
  double lr = 0.03;
  double weight_decay = 1e-4;
  int batch_size = 64;
  int epochs = 200;
  std::uint64_t seed = 1;
  Strategy strategy = Strategy::ObjObjDilate;
  CropConfig crop;
  ArchConfig arch;
  bool cosine_lr = false;   // constant lr by default
  bool swap_views = false;  // use view_b as the query

  void validate() const;
};

/// Everything checkpointed: query/key parameters, negative queue, input
/// normalization, and the training RNG state.
struct ModelState {
  Encoder query, key;
  Eigen::MatrixXd queue;  // embed_dim x queue_size, column per entry
  int queue_ptr = 0;
  int queue_count = 0;
  std::int64_t step = 0;
  int epochs_done = 0;
  int input_side = 0;  // view side the encoder was built for
  Eigen::Vector3d norm_mean = Eigen::Vector3d::Zero();
  Eigen::Vector3d norm_std = Eigen::Vector3d::Ones();
  std::uint64_t rng_state[4] = {0, 0, 0, 0};
};

Encoder init_encoder(int input_dim, const ArchConfig& arch, Rng& rng);

/// Intermediate activations kept for the backward pass.
struct ForwardTape {
  Eigen::MatrixXd X, A0, H1, F, A1, G1, E;
  Eigen::VectorXd inv_norm;
  ViewRole role = ViewRole::Object;
};

struct ForwardResult {
  Eigen::MatrixXd features;    // feature_dim x batch (pre-head, probe tap)
  Eigen::MatrixXd embeddings;  // embed_dim x batch, unit columns
};

/// Batch forward through the backbone and the head selected by `role`.
/// X is input_dim x batch, already scaled to [0,1] and standardized.
/// Throws on input shape mismatch and on zero-norm embeddings.
ForwardResult ssl_forward(const Encoder& enc, const Eigen::MatrixXd& X, ViewRole role,
                          ForwardTape* tape = nullptr);

/// Backprop of dL/dembeddings to every encoder parameter (input gradient is
/// not formed).
EncoderGrads ssl_backward(const Encoder& enc, const ForwardTape& tape,
                          const Eigen::MatrixXd& dZ);

/// InfoNCE with dot-product scores: loss = -log exp(q.k/t) / (exp(q.k/t) +
/// sum_i exp(q.n_i/t)) and its exact gradient w.r.t. q. Keys and negatives
/// take no gradient. negatives may have zero columns (loss 0).
std::pair<double, Eigen::VectorXd> info_nce(const Eigen::VectorXd& q,
                                            const Eigen::VectorXd& k_pos,
                                            const Eigen::MatrixXd& negatives, double tau);

struct BatchLoss {
  double loss = 0.0;
  Eigen::MatrixXd dZ;   // dL/dZ, embed_dim x batch
  double pos_sim = 0.0;  // mean q.k over the batch
  double neg_sim = 0.0;  // mean q.negative over batch x negatives (0 if none)
};

/// Mean InfoNCE over a batch of query/key columns against a shared negative
/// set.
BatchLoss info_nce_batch(const Eigen::MatrixXd& Z, const Eigen::MatrixXd& K,
                         const Eigen::MatrixXd& negatives, double tau);

/// theta_k <- m * theta_k + (1-m) * theta_q, elementwise, all tensors.
void momentum_update(Encoder& key, const Encoder& query, double m);

/// FIFO ring insert of key-embedding columns into the negative queue.
/// Occupancy grows until the queue is full, then the oldest batch is
/// overwritten.
void queue_push(ModelState& state, const Eigen::MatrixXd& cols);

/// Plain SGD with weight decay: theta <- theta - lr * (g + wd * theta).
void sgd_step(Encoder& params, const EncoderGrads& g, double lr, double weight_decay);

/// Flattens a view to a standardized column: (value/255 - mean_c) / std_c,
/// interleaved RGB in row-major pixel order.
Eigen::VectorXd standardize_view(const ImageRGB& view, const Eigen::Vector3d& mean,
                                 const Eigen::Vector3d& std);

struct EpochMetrics {
  int epoch = 0;
  double loss = 0.0;
  double pos_sim = 0.0;
  double neg_sim = 0.0;
  double lr = 0.0;
};

struct PretrainResult {
  ModelState state;
  std::vector<EpochMetrics> metrics;
};

/// Momentum-contrast pretraining over the manifest with the configured
/// pairing strategy. `cache` supplies proposals for proposal strategies
/// (may be null otherwise); Gt* strategies read manifest boxes. Writes one
/// metrics row per epoch to metrics_csv (skipped when empty). Deterministic
/// given (manifest, cfg); pass `resume` to continue a checkpointed run.
PretrainResult pretrain(const DatasetManifest& train, const ProposalCache* cache,
                        const TrainConfig& cfg, const std::filesystem::path& metrics_csv,
                        const ModelState* resume = nullptr);

struct Checkpoint {
  ModelState state;
  TrainConfig config;
};

/// Versioned container, magic "OBJCROP1": embedded config JSON followed by
/// named little-endian f64 tensors. save(load(x)) is byte-identical.
void checkpoint_save(const ModelState& state, const TrainConfig& cfg,
                     const std::filesystem::path& path);
Checkpoint checkpoint_load(const std::filesystem::path& path);

}  // namespace objcrop
