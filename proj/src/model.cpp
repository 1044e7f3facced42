#include "gridwatch/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "gridwatch/errors.hpp"

#include <json.hpp>

namespace gridwatch::nn {

namespace {

inline double sigmoid(double x) {
    if (x >= 0.0) {
        const double e = std::exp(-x);
        return 1.0 / (1.0 + e);
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

// out = W x + b
void affine(const Tensor& W, const double* x, const Tensor& b, double* out) {
    const int rows = W.dim(0), cols = W.dim(1);
    const double* w = W.data();
    for (int r = 0; r < rows; ++r) {
        const double* wr = w + static_cast<std::size_t>(r) * cols;
        double acc = b[static_cast<std::size_t>(r)];
        for (int c = 0; c < cols; ++c) acc += wr[c] * x[c];
        out[r] = acc;
    }
}

// dW += outer(dz, x); db += dz; dx += W^T dz
void affine_backward(const Tensor& W, const double* x, const double* dz, Tensor& dW, Tensor& db,
                     double* dx) {
    const int rows = W.dim(0), cols = W.dim(1);
    const double* w = W.data();
    double* dw = dW.data();
    for (int r = 0; r < rows; ++r) {
        const double g = dz[r];
        db[static_cast<std::size_t>(r)] += g;
        double* dwr = dw + static_cast<std::size_t>(r) * cols;
        const double* wr = w + static_cast<std::size_t>(r) * cols;
        for (int c = 0; c < cols; ++c) {
            dwr[c] += g * x[c];
            if (dx) dx[c] += wr[c] * g;
        }
    }
}

struct LstmStepCache {
    std::vector<double> concat;  // [a_prev, x]
    std::vector<double> ctilde, gu, gf, go, c, tanh_c, a, c_prev;
};

struct LstmLayerCache {
    std::vector<LstmStepCache> steps;  // T entries
    std::vector<std::vector<double>> inputs;  // post-dropout inputs per step
};

struct DenseStepCache {
    std::vector<std::vector<double>> pre;   // per layer, pre-activation
    std::vector<std::vector<double>> post;  // per layer, post-activation (post-dropout)
};

}  // namespace

struct ForwardCache {
    // lstm: encoder layers then decoder layers
    std::vector<LstmLayerCache> lstm_layers;
    // dense: per time column, per layer
    std::vector<DenseStepCache> dense_cols;
    // hidden dropout masks (scaled inverted-dropout factors), per site
    std::vector<Tensor> dropout_masks;
    Tensor input;  // the (corrupted) window the pass consumed
    bool training = false;
};

ForwardWorkspace::ForwardWorkspace() : cache_(new ForwardCache) {}
ForwardWorkspace::~ForwardWorkspace() { delete cache_; }

std::vector<Tensor*> AeModel::params() {
    std::vector<Tensor*> out;
    auto add_lstm = [&](std::vector<LstmCellParams>& stack) {
        for (auto& l : stack) {
            out.push_back(&l.Wc);
            out.push_back(&l.Wu);
            out.push_back(&l.Wf);
            out.push_back(&l.Wo);
            out.push_back(&l.bc);
            out.push_back(&l.bu);
            out.push_back(&l.bf);
            out.push_back(&l.bo);
        }
    };
    auto add_dense = [&](std::vector<DenseLayerParams>& stack) {
        for (auto& l : stack) {
            out.push_back(&l.W);
            out.push_back(&l.b);
        }
    };
    if (kind == ModelKind::Lstm) {
        add_lstm(enc_lstm);
        add_lstm(dec_lstm);
    } else {
        add_dense(enc_dense);
        add_dense(dec_dense);
    }
    return out;
}

std::vector<const Tensor*> AeModel::params() const {
    auto mut = const_cast<AeModel*>(this)->params();
    return {mut.begin(), mut.end()};
}

std::vector<std::string> AeModel::param_names() const {
    std::vector<std::string> out;
    auto add_lstm = [&](const char* prefix, const std::vector<LstmCellParams>& stack) {
        for (std::size_t i = 0; i < stack.size(); ++i) {
            const std::string base = std::string(prefix) + std::to_string(i) + ".";
            for (const char* n : {"Wc", "Wu", "Wf", "Wo", "bc", "bu", "bf", "bo"})
                out.push_back(base + n);
        }
    };
    auto add_dense = [&](const char* prefix, const std::vector<DenseLayerParams>& stack) {
        for (std::size_t i = 0; i < stack.size(); ++i) {
            const std::string base = std::string(prefix) + std::to_string(i) + ".";
            out.push_back(base + "W");
            out.push_back(base + "b");
        }
    };
    if (kind == ModelKind::Lstm) {
        add_lstm("enc", enc_lstm);
        add_lstm("dec", dec_lstm);
    } else {
        add_dense("enc", enc_dense);
        add_dense("dec", dec_dense);
    }
    return out;
}

std::size_t AeModel::param_count() const {
    std::size_t n = 0;
    for (const auto* t : params()) n += t->size();
    return n;
}

namespace {

LstmCellParams make_lstm_cell(int hidden, int input, rng::Rng& gen) {
    LstmCellParams p;
    p.hidden = hidden;
    p.input = input;
    const double bound = std::sqrt(6.0 / (hidden + input + hidden));
    for (Tensor* w : {&p.Wc, &p.Wu, &p.Wf, &p.Wo}) {
        *w = Tensor(hidden, hidden + input);
        for (std::size_t i = 0; i < w->size(); ++i) (*w)[i] = gen.uniform(-bound, bound);
    }
    p.bc = Tensor(hidden);
    p.bu = Tensor(hidden);
    p.bf = Tensor(hidden);
    p.bo = Tensor(hidden);
    p.bf.fill(1.0);  // forget-gate bias starts open
    return p;
}

DenseLayerParams make_dense_layer(int out_dim, int in_dim, DenseLayerParams::Act act,
                                  rng::Rng& gen) {
    DenseLayerParams p;
    p.act = act;
    p.W = Tensor(out_dim, in_dim);
    const double bound = std::sqrt(6.0 / (out_dim + in_dim));
    for (std::size_t i = 0; i < p.W.size(); ++i) p.W[i] = gen.uniform(-bound, bound);
    p.b = Tensor(out_dim);
    return p;
}

}  // namespace

AeModel make_model(ModelKind kind, std::vector<int> layer_sizes, int T,
                   std::pair<double, double> input_dropout, double hidden_dropout,
                   std::uint64_t seed) {
    if (layer_sizes.size() < 2) throw ValidationError("make_model: need at least [m, bottleneck]");
    for (int s : layer_sizes)
        if (s < 1) throw ValidationError("make_model: layer sizes must be >= 1");
    if (layer_sizes.back() >= layer_sizes.front())
        throw ValidationError("make_model: bottleneck must be smaller than the input dimension");
    if (T < 1) throw ValidationError("make_model: T must be >= 1");
    if (input_dropout.first < 0.0 || input_dropout.second > 1.0 ||
        input_dropout.first > input_dropout.second)
        throw ValidationError("make_model: bad input dropout range");

    AeModel m;
    m.kind = kind;
    m.layer_sizes = std::move(layer_sizes);
    m.T = T;
    m.input_dropout = input_dropout;
    m.hidden_dropout = hidden_dropout;
    m.seed = seed;

    rng::Rng gen(rng::derive(seed, "init"));
    const auto& s = m.layer_sizes;
    const int depth = static_cast<int>(s.size()) - 1;
    if (kind == ModelKind::Lstm) {
        for (int i = 0; i < depth; ++i) m.enc_lstm.push_back(make_lstm_cell(s[i + 1], s[i], gen));
        // decoder mirrors the stack; final hidden size is the input dimension
        for (int i = depth - 1; i >= 0; --i)
            m.dec_lstm.push_back(make_lstm_cell(s[i], s[i + 1], gen));
    } else {
        for (int i = 0; i < depth; ++i)
            m.enc_dense.push_back(make_dense_layer(s[i + 1], s[i], DenseLayerParams::Act::Tanh, gen));
        for (int i = depth - 1; i >= 0; --i)
            m.dec_dense.push_back(make_dense_layer(
                s[i], s[i + 1],
                i == 0 ? DenseLayerParams::Act::Sigmoid : DenseLayerParams::Act::Tanh, gen));
    }
    return m;
}

std::vector<int> scale_layer_sizes(const std::vector<int>& reference, int ref_m, int m) {
    std::vector<int> out;
    out.push_back(m);
    for (std::size_t i = 1; i < reference.size(); ++i) {
        const double scaled = static_cast<double>(reference[i]) * m / ref_m;
        int w = static_cast<int>(std::lround(scaled / 8.0)) * 8;
        w = std::max(w, 8);
        out.push_back(w);
    }
    // keep the bottleneck strictly below m
    while (out.back() >= m && out.back() > 8) out.back() -= 8;
    if (out.back() >= m) out.back() = std::max(1, m - 1);
    return out;
}

LstmStepResult lstm_cell_forward(const LstmCellParams& p, const std::vector<double>& z_t,
                                 const std::vector<double>& a_prev,
                                 const std::vector<double>& c_prev) {
    const int h = p.hidden, in = p.input;
    if (static_cast<int>(z_t.size()) != in || static_cast<int>(a_prev.size()) != h ||
        static_cast<int>(c_prev.size()) != h)
        throw ShapeError("lstm_cell_forward: input shapes do not match the cell");
    std::vector<double> concat(static_cast<std::size_t>(h + in));
    std::copy(a_prev.begin(), a_prev.end(), concat.begin());
    std::copy(z_t.begin(), z_t.end(), concat.begin() + h);
    LstmStepResult r;
    r.candidate.resize(static_cast<std::size_t>(h));
    r.gate_u.resize(static_cast<std::size_t>(h));
    r.gate_f.resize(static_cast<std::size_t>(h));
    r.gate_o.resize(static_cast<std::size_t>(h));
    r.c.resize(static_cast<std::size_t>(h));
    r.a.resize(static_cast<std::size_t>(h));
    std::vector<double> z(static_cast<std::size_t>(h));
    affine(p.Wc, concat.data(), p.bc, z.data());
    for (int i = 0; i < h; ++i) r.candidate[static_cast<std::size_t>(i)] = std::tanh(z[static_cast<std::size_t>(i)]);
    affine(p.Wu, concat.data(), p.bu, z.data());
    for (int i = 0; i < h; ++i) r.gate_u[static_cast<std::size_t>(i)] = sigmoid(z[static_cast<std::size_t>(i)]);
    affine(p.Wf, concat.data(), p.bf, z.data());
    for (int i = 0; i < h; ++i) r.gate_f[static_cast<std::size_t>(i)] = sigmoid(z[static_cast<std::size_t>(i)]);
    affine(p.Wo, concat.data(), p.bo, z.data());
    for (int i = 0; i < h; ++i) r.gate_o[static_cast<std::size_t>(i)] = sigmoid(z[static_cast<std::size_t>(i)]);
    for (int i = 0; i < h; ++i) {
        const auto ii = static_cast<std::size_t>(i);
        r.c[ii] = r.gate_u[ii] * r.candidate[ii] + r.gate_f[ii] * c_prev[ii];
        r.a[ii] = r.gate_o[ii] * std::tanh(r.c[ii]);
    }
    return r;
}

std::vector<int> DropoutMask::masked_rows(int col) const {
    std::vector<int> rows;
    for (int r = 0; r < D.dim(0); ++r)
        if (D.at(r, col) != 0.0) rows.push_back(r);
    return rows;
}

std::pair<Tensor, DropoutMask> corrupt(const Tensor& window, std::pair<double, double> d_range,
                                       rng::Rng& gen, CorruptMode mode) {
    if (window.rank() != 2) throw ShapeError("corrupt: window must be m x T");
    if (d_range.first < 0.0 || d_range.second > 1.0 || d_range.first > d_range.second)
        throw ValidationError("corrupt: bad dropout range");
    const int m = window.dim(0), T = window.dim(1);
    DropoutMask mask;
    mask.D = Tensor(m, T);
    Tensor corrupted = window;

    int lo_count = static_cast<int>(std::ceil(d_range.first * m - 1e-9));
    int hi_count = static_cast<int>(std::floor(d_range.second * m + 1e-9));
    if (lo_count > hi_count) {
        // no integer count realizes the range exactly; use the nearest
        lo_count = hi_count = std::clamp(
            static_cast<int>(std::lround(0.5 * (d_range.first + d_range.second) * m)), 0, m);
    }
    auto mask_column = [&](int col) {
        const double rho = gen.uniform(d_range.first, d_range.second);
        mask.drawn_ratio.push_back(rho);
        int count = static_cast<int>(std::lround(rho * m));
        count = std::clamp(count, lo_count, hi_count);
        if (count <= 0) return;
        for (int r : gen.sample_without_replacement(m, count)) {
            mask.D.at(r, col) = 1.0;
            corrupted.at(r, col) = 0.0;
        }
    };
    if (mode == CorruptMode::Train) {
        for (int col = 0; col < T; ++col) mask_column(col);
    } else {
        mask_column(T - 1);
    }
    return {std::move(corrupted), std::move(mask)};
}

namespace {

void lstm_layer_forward(const LstmCellParams& p, const std::vector<std::vector<double>>& inputs,
                        LstmLayerCache& cache, std::vector<std::vector<double>>& outputs) {
    const int T = static_cast<int>(inputs.size());
    const int h = p.hidden, in = p.input;
    cache.steps.resize(static_cast<std::size_t>(T));
    cache.inputs = inputs;
    outputs.assign(static_cast<std::size_t>(T), std::vector<double>(static_cast<std::size_t>(h)));
    std::vector<double> a_prev(static_cast<std::size_t>(h), 0.0);
    std::vector<double> c_prev(static_cast<std::size_t>(h), 0.0);
    std::vector<double> z(static_cast<std::size_t>(h));
    for (int t = 0; t < T; ++t) {
        auto& st = cache.steps[static_cast<std::size_t>(t)];
        st.concat.resize(static_cast<std::size_t>(h + in));
        std::copy(a_prev.begin(), a_prev.end(), st.concat.begin());
        std::copy(inputs[static_cast<std::size_t>(t)].begin(), inputs[static_cast<std::size_t>(t)].end(),
                  st.concat.begin() + h);
        st.c_prev = c_prev;
        st.ctilde.resize(static_cast<std::size_t>(h));
        st.gu.resize(static_cast<std::size_t>(h));
        st.gf.resize(static_cast<std::size_t>(h));
        st.go.resize(static_cast<std::size_t>(h));
        st.c.resize(static_cast<std::size_t>(h));
        st.tanh_c.resize(static_cast<std::size_t>(h));
        st.a.resize(static_cast<std::size_t>(h));

        affine(p.Wc, st.concat.data(), p.bc, z.data());
        for (int i = 0; i < h; ++i) st.ctilde[static_cast<std::size_t>(i)] = std::tanh(z[static_cast<std::size_t>(i)]);
        affine(p.Wu, st.concat.data(), p.bu, z.data());
        for (int i = 0; i < h; ++i) st.gu[static_cast<std::size_t>(i)] = sigmoid(z[static_cast<std::size_t>(i)]);
        affine(p.Wf, st.concat.data(), p.bf, z.data());
        for (int i = 0; i < h; ++i) st.gf[static_cast<std::size_t>(i)] = sigmoid(z[static_cast<std::size_t>(i)]);
        affine(p.Wo, st.concat.data(), p.bo, z.data());
        for (int i = 0; i < h; ++i) st.go[static_cast<std::size_t>(i)] = sigmoid(z[static_cast<std::size_t>(i)]);
        for (int i = 0; i < h; ++i) {
            const auto ii = static_cast<std::size_t>(i);
            st.c[ii] = st.gu[ii] * st.ctilde[ii] + st.gf[ii] * st.c_prev[ii];
            st.tanh_c[ii] = std::tanh(st.c[ii]);
            st.a[ii] = st.go[ii] * st.tanh_c[ii];
        }
        a_prev = st.a;
        c_prev = st.c;
        outputs[static_cast<std::size_t>(t)] = st.a;
    }
}

// Backward through one LSTM layer. d_out[t] = dLoss/d a^<t> from above.
// Returns gradients for the layer inputs and accumulates parameter grads.
void lstm_layer_backward(const LstmCellParams& p, const LstmLayerCache& cache,
                         const std::vector<std::vector<double>>& d_out,
                         Tensor& dWc, Tensor& dWu, Tensor& dWf, Tensor& dWo, Tensor& dbc,
                         Tensor& dbu, Tensor& dbf, Tensor& dbo,
                         std::vector<std::vector<double>>& d_inputs) {
    const int T = static_cast<int>(cache.steps.size());
    const int h = p.hidden, in = p.input;
    d_inputs.assign(static_cast<std::size_t>(T), std::vector<double>(static_cast<std::size_t>(in), 0.0));
    std::vector<double> da_next(static_cast<std::size_t>(h), 0.0);
    std::vector<double> dc_next(static_cast<std::size_t>(h), 0.0);
    std::vector<double> da(static_cast<std::size_t>(h)), dc(static_cast<std::size_t>(h));
    std::vector<double> dzc(static_cast<std::size_t>(h)), dzu(static_cast<std::size_t>(h)),
        dzf(static_cast<std::size_t>(h)), dzo(static_cast<std::size_t>(h));
    std::vector<double> dconcat(static_cast<std::size_t>(h + in));
    for (int t = T - 1; t >= 0; --t) {
        const auto& st = cache.steps[static_cast<std::size_t>(t)];
        for (int i = 0; i < h; ++i) {
            const auto ii = static_cast<std::size_t>(i);
            da[ii] = d_out[static_cast<std::size_t>(t)][ii] + da_next[ii];
            dc[ii] = dc_next[ii] + da[ii] * st.go[ii] * (1.0 - st.tanh_c[ii] * st.tanh_c[ii]);
            const double dgo = da[ii] * st.tanh_c[ii];
            dzo[ii] = dgo * st.go[ii] * (1.0 - st.go[ii]);
            const double dgu = dc[ii] * st.ctilde[ii];
            dzu[ii] = dgu * st.gu[ii] * (1.0 - st.gu[ii]);
            const double dgf = dc[ii] * st.c_prev[ii];
            dzf[ii] = dgf * st.gf[ii] * (1.0 - st.gf[ii]);
            const double dctilde = dc[ii] * st.gu[ii];
            dzc[ii] = dctilde * (1.0 - st.ctilde[ii] * st.ctilde[ii]);
            dc_next[ii] = dc[ii] * st.gf[ii];
        }
        std::fill(dconcat.begin(), dconcat.end(), 0.0);
        affine_backward(p.Wc, st.concat.data(), dzc.data(), dWc, dbc, dconcat.data());
        affine_backward(p.Wu, st.concat.data(), dzu.data(), dWu, dbu, dconcat.data());
        affine_backward(p.Wf, st.concat.data(), dzf.data(), dWf, dbf, dconcat.data());
        affine_backward(p.Wo, st.concat.data(), dzo.data(), dWo, dbo, dconcat.data());
        for (int i = 0; i < h; ++i) da_next[static_cast<std::size_t>(i)] = dconcat[static_cast<std::size_t>(i)];
        for (int i = 0; i < in; ++i)
            d_inputs[static_cast<std::size_t>(t)][static_cast<std::size_t>(i)] = dconcat[static_cast<std::size_t>(h + i)];
    }
}

}  // namespace

Tensor model_forward(const AeModel& model, const Tensor& window, bool training,
                     rng::Rng* dropout_rng, ForwardCache* cache, bool* input_out_of_range) {
    if (window.rank() != 2 || window.dim(0) != model.m() || window.dim(1) != model.T)
        throw ShapeError("model_forward: window shape mismatch (want " + std::to_string(model.m()) +
                         "x" + std::to_string(model.T) + ")");
    if (input_out_of_range) {
        *input_out_of_range = false;
        for (std::size_t i = 0; i < window.size(); ++i) {
            const double v = window[i];
            if (v < -0.5 || v > 1.5) {
                *input_out_of_range = true;
                break;
            }
        }
    }

    ForwardWorkspace scratch_owner;
    ForwardCache& cc = cache ? *cache : *scratch_owner.get();
    cc.lstm_layers.clear();
    cc.dense_cols.clear();
    cc.dropout_masks.clear();
    cc.input = window;
    cc.training = training;

    const int m = model.m(), T = model.T;
    const bool use_hidden_dropout = training && model.hidden_dropout > 0.0 && dropout_rng;
    Tensor recon(m, T);

    if (model.kind == ModelKind::Lstm) {
        cc.lstm_layers.resize(model.enc_lstm.size() + model.dec_lstm.size());
        std::vector<std::vector<double>> seq(static_cast<std::size_t>(T),
                                             std::vector<double>(static_cast<std::size_t>(m)));
        for (int t = 0; t < T; ++t)
            for (int a = 0; a < m; ++a) seq[static_cast<std::size_t>(t)][static_cast<std::size_t>(a)] = window.at(a, t);

        std::size_t li = 0;
        for (std::size_t e = 0; e < model.enc_lstm.size(); ++e, ++li) {
            std::vector<std::vector<double>> out;
            lstm_layer_forward(model.enc_lstm[e], seq, cc.lstm_layers[li], out);
            // inverted dropout between encoder layers
            if (use_hidden_dropout && e + 1 < model.enc_lstm.size()) {
                const double keep = 1.0 - model.hidden_dropout;
                Tensor dmask(static_cast<int>(out[0].size()), T);
                for (int t = 0; t < T; ++t)
                    for (std::size_t i = 0; i < out[static_cast<std::size_t>(t)].size(); ++i) {
                        const double factor = dropout_rng->uniform01() < keep ? 1.0 / keep : 0.0;
                        dmask.at(static_cast<int>(i), t) = factor;
                        out[static_cast<std::size_t>(t)][i] *= factor;
                    }
                cc.dropout_masks.push_back(std::move(dmask));
            }
            seq = std::move(out);
        }
        if (model.repeat_bottleneck) {
            const auto last = seq.back();
            for (auto& s : seq) s = last;
        }
        for (std::size_t d = 0; d < model.dec_lstm.size(); ++d, ++li) {
            std::vector<std::vector<double>> out;
            lstm_layer_forward(model.dec_lstm[d], seq, cc.lstm_layers[li], out);
            seq = std::move(out);
        }
        for (int t = 0; t < T; ++t)
            for (int a = 0; a < m; ++a) recon.at(a, t) = seq[static_cast<std::size_t>(t)][static_cast<std::size_t>(a)];
        return recon;
    }

    // dense: every column independently through the MLP
    cc.dense_cols.resize(static_cast<std::size_t>(T));
    const std::size_t n_layers = model.enc_dense.size() + model.dec_dense.size();
    if (use_hidden_dropout) {
        // one mask tensor per dropout site (between encoder layers), per column
        for (std::size_t e = 0; e + 1 < model.enc_dense.size(); ++e) {
            Tensor dmask(model.enc_dense[e].W.dim(0), T);
            const double keep = 1.0 - model.hidden_dropout;
            for (std::size_t i = 0; i < dmask.size(); ++i)
                dmask[i] = dropout_rng->uniform01() < keep ? 1.0 / keep : 0.0;
            cc.dropout_masks.push_back(std::move(dmask));
        }
    }
    for (int t = 0; t < T; ++t) {
        auto& col_cache = cc.dense_cols[static_cast<std::size_t>(t)];
        col_cache.pre.resize(n_layers);
        col_cache.post.resize(n_layers);
        std::vector<double> x(static_cast<std::size_t>(m));
        for (int a = 0; a < m; ++a) x[static_cast<std::size_t>(a)] = window.at(a, t);
        std::size_t li = 0;
        std::size_t site = 0;
        auto run_layer = [&](const DenseLayerParams& p, bool dropout_here) {
            auto& pre = col_cache.pre[li];
            pre.resize(static_cast<std::size_t>(p.W.dim(0)));
            affine(p.W, x.data(), p.b, pre.data());
            auto& post = col_cache.post[li];
            post.resize(pre.size());
            for (std::size_t i = 0; i < pre.size(); ++i) {
                switch (p.act) {
                    case DenseLayerParams::Act::Tanh: post[i] = std::tanh(pre[i]); break;
                    case DenseLayerParams::Act::Sigmoid: post[i] = sigmoid(pre[i]); break;
                    case DenseLayerParams::Act::Linear: post[i] = pre[i]; break;
                }
            }
            if (dropout_here && use_hidden_dropout) {
                const auto& dmask = cc.dropout_masks[site];
                for (std::size_t i = 0; i < post.size(); ++i) post[i] *= dmask.at(static_cast<int>(i), t);
                ++site;
            }
            x = post;
            ++li;
        };
        for (std::size_t e = 0; e < model.enc_dense.size(); ++e)
            run_layer(model.enc_dense[e], e + 1 < model.enc_dense.size());
        for (const auto& d : model.dec_dense) run_layer(d, false);
        for (int a = 0; a < m; ++a) recon.at(a, t) = x[static_cast<std::size_t>(a)];
    }
    return recon;
}

Tensor model_reconstruct(const AeModel& model, const Tensor& window) {
    return model_forward(model, window, false, nullptr, nullptr);
}

std::vector<Tensor> zero_like_params(const AeModel& model) {
    std::vector<Tensor> out;
    for (const auto* p : model.params()) {
        Tensor t(p->shape());
        out.push_back(std::move(t));
    }
    return out;
}

void model_backward(const AeModel& model, const ForwardCache& cache, const Tensor& d_recon,
                    std::vector<Tensor>& grads) {
    if (grads.size() != model.params().size())
        throw ShapeError("model_backward: gradient sink layout mismatch");
    const int m = model.m(), T = model.T;
    if (d_recon.dim(0) != m || d_recon.dim(1) != T) throw ShapeError("model_backward: d_recon shape");

    if (model.kind == ModelKind::Lstm) {
        const std::size_t n_enc = model.enc_lstm.size();
        const std::size_t n_dec = model.dec_lstm.size();
        std::vector<std::vector<double>> d_seq(static_cast<std::size_t>(T),
                                               std::vector<double>(static_cast<std::size_t>(m)));
        for (int t = 0; t < T; ++t)
            for (int a = 0; a < m; ++a)
                d_seq[static_cast<std::size_t>(t)][static_cast<std::size_t>(a)] = d_recon.at(a, t);

        // decoder stack, top down; grads layout: enc layers then dec layers, 8 tensors each
        for (std::size_t d = n_dec; d-- > 0;) {
            const std::size_t li = n_enc + d;
            const std::size_t g0 = (n_enc + d) * 8;
            std::vector<std::vector<double>> d_in;
            lstm_layer_backward(model.dec_lstm[d], cache.lstm_layers[li], d_seq, grads[g0],
                                grads[g0 + 1], grads[g0 + 2], grads[g0 + 3], grads[g0 + 4],
                                grads[g0 + 5], grads[g0 + 6], grads[g0 + 7], d_in);
            d_seq = std::move(d_in);
        }
        if (model.repeat_bottleneck) {
            // all decoder steps consumed the same final bottleneck state
            for (int t = 0; t < T - 1; ++t)
                for (std::size_t i = 0; i < d_seq.back().size(); ++i)
                    d_seq.back()[i] += d_seq[static_cast<std::size_t>(t)][i];
            for (int t = 0; t < T - 1; ++t)
                std::fill(d_seq[static_cast<std::size_t>(t)].begin(), d_seq[static_cast<std::size_t>(t)].end(), 0.0);
        }
        std::size_t site = cache.dropout_masks.size();
        for (std::size_t e = n_enc; e-- > 0;) {
            if (e + 1 < n_enc && cache.training && !cache.dropout_masks.empty()) {
                // layer e's outputs were dropout-scaled before feeding e+1
                --site;
                const auto& dmask = cache.dropout_masks[site];
                for (int t = 0; t < T; ++t)
                    for (std::size_t i = 0; i < d_seq[static_cast<std::size_t>(t)].size(); ++i)
                        d_seq[static_cast<std::size_t>(t)][i] *= dmask.at(static_cast<int>(i), t);
            }
            const std::size_t g0 = e * 8;
            std::vector<std::vector<double>> d_in;
            lstm_layer_backward(model.enc_lstm[e], cache.lstm_layers[e], d_seq, grads[g0],
                                grads[g0 + 1], grads[g0 + 2], grads[g0 + 3], grads[g0 + 4],
                                grads[g0 + 5], grads[g0 + 6], grads[g0 + 7], d_in);
            d_seq = std::move(d_in);
        }
        return;
    }

    // dense
    const std::size_t n_enc = model.enc_dense.size();
    const std::size_t n_layers = n_enc + model.dec_dense.size();
    for (int t = 0; t < T; ++t) {
        const auto& col_cache = cache.dense_cols[static_cast<std::size_t>(t)];
        std::vector<double> dy(static_cast<std::size_t>(m));
        for (int a = 0; a < m; ++a) dy[static_cast<std::size_t>(a)] = d_recon.at(a, t);
        std::size_t site = cache.dropout_masks.size();
        for (std::size_t li = n_layers; li-- > 0;) {
            const bool is_enc = li < n_enc;
            const DenseLayerParams& p =
                is_enc ? model.enc_dense[li] : model.dec_dense[li - n_enc];
            const bool dropout_here = is_enc && li + 1 < n_enc;
            if (dropout_here && cache.training && !cache.dropout_masks.empty()) {
                --site;
                const auto& dmask = cache.dropout_masks[site];
                for (std::size_t i = 0; i < dy.size(); ++i) dy[i] *= dmask.at(static_cast<int>(i), t);
            }
            std::vector<double> dz(col_cache.pre[li].size());
            // activation recovered from pre (post may carry dropout scaling)
            switch (p.act) {
                case DenseLayerParams::Act::Tanh:
                    for (std::size_t i = 0; i < dz.size(); ++i) {
                        const double a = std::tanh(col_cache.pre[li][i]);
                        dz[i] = dy[i] * (1.0 - a * a);
                    }
                    break;
                case DenseLayerParams::Act::Sigmoid:
                    for (std::size_t i = 0; i < dz.size(); ++i) {
                        const double a = sigmoid(col_cache.pre[li][i]);
                        dz[i] = dy[i] * a * (1.0 - a);
                    }
                    break;
                case DenseLayerParams::Act::Linear:
                    for (std::size_t i = 0; i < dz.size(); ++i) dz[i] = dy[i];
                    break;
            }
            const std::vector<double>* x;
            std::vector<double> input_col;
            if (li == 0) {
                input_col.resize(static_cast<std::size_t>(m));
                for (int a = 0; a < m; ++a) input_col[static_cast<std::size_t>(a)] = cache.input.at(a, t);
                x = &input_col;
            } else {
                x = &col_cache.post[li - 1];
            }
            std::vector<double> dx(x->size(), 0.0);
            const std::size_t g0 = li * 2;
            affine_backward(p.W, x->data(), dz.data(), grads[g0], grads[g0 + 1], dx.data());
            dy = std::move(dx);
        }
    }
}

namespace {

constexpr char kModelMagic[4] = {'G', 'W', 'N', 'N'};
constexpr std::uint32_t kModelVersion = 1;

}  // namespace

static_assert(std::endian::native == std::endian::little, "model format is little-endian");

void save_model(const std::string& path, const AeModel& model) {
    nlohmann::json manifest;
    manifest["format"] = "gridwatch-ae-model";
    manifest["version"] = kModelVersion;
    manifest["kind"] = model.kind == ModelKind::Lstm ? "lstm" : "dense";
    manifest["layer_sizes"] = model.layer_sizes;
    manifest["T"] = model.T;
    manifest["hidden_dropout"] = model.hidden_dropout;
    manifest["input_dropout"] = {model.input_dropout.first, model.input_dropout.second};
    manifest["repeat_bottleneck"] = model.repeat_bottleneck;
    manifest["seed"] = model.seed;
    manifest["data_hash"] = model.data_hash;
    if (model.scaler.size() > 0)
        manifest["scaler"] = {{"min", model.scaler.min},
                              {"max", model.scaler.max},
                              {"constant", model.scaler.constant}};
    nlohmann::json tensors = nlohmann::json::array();
    const auto names = model.param_names();
    const auto params = model.params();
    for (std::size_t i = 0; i < params.size(); ++i) {
        tensors.push_back({{"name", names[i]}, {"shape", params[i]->shape()}});
    }
    manifest["tensors"] = tensors;
    const std::string mj = manifest.dump();

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write model file: " + path);
    f.write(kModelMagic, 4);
    const std::uint32_t v = kModelVersion;
    f.write(reinterpret_cast<const char*>(&v), sizeof v);
    const std::uint32_t hlen = static_cast<std::uint32_t>(mj.size());
    f.write(reinterpret_cast<const char*>(&hlen), sizeof hlen);
    f.write(mj.data(), static_cast<std::streamsize>(mj.size()));
    for (const auto* p : params)
        f.write(reinterpret_cast<const char*>(p->data()),
                static_cast<std::streamsize>(p->size() * sizeof(double)));
    if (!f) throw IoError("short write: " + path);
}

AeModel load_model(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open model file: " + path);
    char magic[4];
    f.read(magic, 4);
    if (!f || std::memcmp(magic, kModelMagic, 4) != 0)
        throw VersionError("model file: bad magic (not a gridwatch model): " + path);
    std::uint32_t version = 0;
    f.read(reinterpret_cast<char*>(&version), sizeof version);
    if (!f) throw TruncatedError("model file: truncated header");
    if (version != kModelVersion)
        throw VersionError("model file: unsupported version " + std::to_string(version));
    std::uint32_t hlen = 0;
    f.read(reinterpret_cast<char*>(&hlen), sizeof hlen);
    if (!f) throw TruncatedError("model file: truncated header");
    std::string mj(hlen, '\0');
    f.read(mj.data(), hlen);
    if (!f) throw TruncatedError("model file: truncated manifest");
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(mj);
    } catch (const nlohmann::json::parse_error& e) {
        throw VersionError(std::string("model file: unreadable manifest: ") + e.what());
    }

    AeModel model = make_model(
        manifest.at("kind").get<std::string>() == "lstm" ? ModelKind::Lstm : ModelKind::Dense,
        manifest.at("layer_sizes").get<std::vector<int>>(), manifest.at("T").get<int>(),
        {manifest.at("input_dropout").at(0).get<double>(),
         manifest.at("input_dropout").at(1).get<double>()},
        manifest.at("hidden_dropout").get<double>(), manifest.value("seed", 0ull));
    model.repeat_bottleneck = manifest.value("repeat_bottleneck", false);
    model.data_hash = manifest.value("data_hash", "");
    if (manifest.contains("scaler")) {
        model.scaler.min = manifest["scaler"].at("min").get<std::vector<double>>();
        model.scaler.max = manifest["scaler"].at("max").get<std::vector<double>>();
        model.scaler.constant = manifest["scaler"].at("constant").get<std::vector<bool>>();
    }

    const auto names = model.param_names();
    auto params = model.params();
    const auto& tensors = manifest.at("tensors");
    if (tensors.size() != params.size())
        throw ShapeError("model file: tensor table has " + std::to_string(tensors.size()) +
                         " entries, architecture needs " + std::to_string(params.size()));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto shape = tensors.at(i).at("shape").get<std::vector<int>>();
        const std::string name = tensors.at(i).at("name").get<std::string>();
        if (name != names[i])
            throw ShapeError("model file: tensor '" + name + "' out of order (expected '" +
                             names[i] + "')");
        if (shape != params[i]->shape())
            throw ShapeError("model file: tensor '" + name + "' shape mismatch");
        f.read(reinterpret_cast<char*>(params[i]->data()),
               static_cast<std::streamsize>(params[i]->size() * sizeof(double)));
        if (!f) throw TruncatedError("model file: truncated blob for tensor '" + name + "'");
    }
    return model;
}

}  // namespace gridwatch::nn
