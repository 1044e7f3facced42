#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "gridwatch/pipeline.hpp"
#include "gridwatch/rng.hpp"
#include "gridwatch/tensor.hpp"

namespace gridwatch::nn {

// One LSTM cell: four gates over the concatenated [a_prev, x_t].
struct LstmCellParams {
    Tensor Wc, Wu, Wf, Wo;  // hidden x (hidden + input)
    Tensor bc, bu, bf, bo;  // hidden
    int hidden = 0;
    int input = 0;
};

struct DenseLayerParams {
    Tensor W;  // out x in
    Tensor b;  // out
    enum class Act { Tanh, Sigmoid, Linear } act = Act::Tanh;
};

enum class ModelKind { Lstm, Dense };

struct AeModel {
    ModelKind kind = ModelKind::Lstm;
    std::vector<int> layer_sizes;  // [m, h1, ..., bottleneck]
    int T = 6;
    double hidden_dropout = 0.005;
    std::pair<double, double> input_dropout{0.0, 0.2};
    bool repeat_bottleneck = false;  // decoder input: per-step sequence (default) or repeated final state

    std::vector<LstmCellParams> enc_lstm, dec_lstm;
    std::vector<DenseLayerParams> enc_dense, dec_dense;

    pipe::Scaler scaler;    // frozen training scaler (for lineage/deployment)
    std::uint64_t seed = 0;
    std::string data_hash;  // config hash of the dataset the model was trained on

    int m() const { return layer_sizes.front(); }
    int bottleneck() const { return layer_sizes.back(); }

    // flat parameter registry, stable order; used by Adam, the gradient
    // checker and serialization
    std::vector<Tensor*> params();
    std::vector<const Tensor*> params() const;
    std::vector<std::string> param_names() const;
    std::size_t param_count() const;
};

// Glorot-uniform kernels, zero biases, forget-gate bias 1.
AeModel make_model(ModelKind kind, std::vector<int> layer_sizes, int T,
                   std::pair<double, double> input_dropout, double hidden_dropout,
                   std::uint64_t seed);

// Table-derived widths rescaled to a different measurement count m
// (multiples of 8, bottleneck kept below m).
std::vector<int> scale_layer_sizes(const std::vector<int>& reference, int ref_m, int m);

struct LstmStepResult {
    std::vector<double> a, c;
    std::vector<double> candidate, gate_u, gate_f, gate_o;
};

// One cell step: candidate/update/forget/output gates over [a_prev, z_t],
// then c_t = gu.*candidate + gf.*c_prev and a_t = go.*tanh(c_t).
LstmStepResult lstm_cell_forward(const LstmCellParams& p, const std::vector<double>& z_t,
                                 const std::vector<double>& a_prev,
                                 const std::vector<double>& c_prev);

enum class CorruptMode { Train, Infer };

struct DropoutMask {
    Tensor D;  // m x T, 1 = dropped
    std::vector<double> drawn_ratio;  // per column (Train) or just column T-1 (Infer)

    std::vector<int> masked_rows(int col) const;
};

// corrupted = window - window .* D. Train mode masks every column
// independently; Infer masks only the final column.
std::pair<Tensor, DropoutMask> corrupt(const Tensor& window, std::pair<double, double> d_range,
                                       rng::Rng& gen, CorruptMode mode);

// Per-layer, per-step intermediates kept for backpropagation through time.
struct ForwardCache;

Tensor model_forward(const AeModel& model, const Tensor& window, bool training,
                     rng::Rng* dropout_rng, ForwardCache* cache,
                     bool* input_out_of_range = nullptr);

// Convenience inference-mode forward.
Tensor model_reconstruct(const AeModel& model, const Tensor& window);

// Gradients of a scalar loss with d(loss)/d(reconstruction) given; layout
// parallel to AeModel::params().
void model_backward(const AeModel& model, const ForwardCache& cache, const Tensor& d_recon,
                    std::vector<Tensor>& grads);

std::vector<Tensor> zero_like_params(const AeModel& model);

// Owning wrapper so callers can reuse cache storage across samples.
class ForwardWorkspace {
  public:
    ForwardWorkspace();
    ~ForwardWorkspace();
    ForwardWorkspace(const ForwardWorkspace&) = delete;
    ForwardWorkspace& operator=(const ForwardWorkspace&) = delete;
    ForwardCache* get() { return cache_; }

  private:
    ForwardCache* cache_;
};

// Binary model file: magic + version + JSON manifest + named float64 blobs.
// Round-trips bit-exactly.
void save_model(const std::string& path, const AeModel& model);
AeModel load_model(const std::string& path);

}  // namespace gridwatch::nn
