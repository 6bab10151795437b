#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "soli/image.hpp"
#include "soli/imageops.hpp"
#include "soli/params.hpp"
#include "soli/tensor.hpp"
#include "soli/vocab.hpp"

namespace soli {

// ---------------------------------------------------------------------------
// Model shapes
// ---------------------------------------------------------------------------

// Image branch: stride-2 3x3 conv blocks with ReLU, global average pool,
// linear projection to the embedding.
struct EncoderSpec {
    int input_side = 64;
    std::vector<int> channels = {16, 32, 64};
    int embed_dim = 64;

    bool operator==(const EncoderSpec&) const = default;
};

// Caption branch: token embedding, one tanh recurrent cell whose initial
// hidden state is a learned linear map of the image embedding, linear output.
struct DecoderSpec {
    int embed_dim = 64;
    int token_dim = 32;
    int hidden_dim = 128;
    int vocab_size = 0;

    bool operator==(const DecoderSpec&) const = default;
};

template <typename T>
void register_encoder_params(ParamStore<T>& store, const EncoderSpec& spec) {
    int in_ch = Image::kChannels;
    for (std::size_t i = 0; i < spec.channels.size(); ++i) {
        const std::string base = "enc.conv" + std::to_string(i);
        store.add(base + ".w", {spec.channels[i], in_ch, 3, 3});
        store.add(base + ".b", {spec.channels[i]});
        in_ch = spec.channels[i];
    }
    store.add("enc.proj.w", {spec.embed_dim, in_ch});
    store.add("enc.proj.b", {spec.embed_dim});
}

template <typename T>
void register_decoder_params(ParamStore<T>& store, const DecoderSpec& spec) {
    store.add("dec.tok.w", {spec.vocab_size, spec.token_dim});
    store.add("dec.init.w", {spec.hidden_dim, spec.embed_dim});
    store.add("dec.init.b", {spec.hidden_dim});
    store.add("dec.rnn.wx", {spec.hidden_dim, spec.token_dim});
    store.add("dec.rnn.wh", {spec.hidden_dim, spec.hidden_dim});
    store.add("dec.rnn.b", {spec.hidden_dim});
    store.add("dec.out.w", {spec.vocab_size, spec.hidden_dim});
    store.add("dec.out.b", {spec.vocab_size});
}

inline bool is_encoder_param(const std::string& name) {
    return name.rfind("enc.", 0) == 0;
}
inline bool is_decoder_param(const std::string& name) {
    return name.rfind("dec.", 0) == 0;
}

// ---------------------------------------------------------------------------
// Preprocess
// ---------------------------------------------------------------------------

// Resize to side x side and scale channels to [0,1]; layout (3, side, side).
template <typename T = float>
Tensor<T> preprocess(const Image& img, int side) {
    Image r = (img.width == side && img.height == side) ? img
                                                        : bilinear_resize(img, side, side);
    Tensor<T> out({Image::kChannels, side, side});
    for (int c = 0; c < Image::kChannels; ++c)
        for (int y = 0; y < side; ++y)
            for (int x = 0; x < side; ++x)
                out.at(c, y, x) = static_cast<T>(r.at(x, y, c)) / T(255);
    return out;
}

// Stack (3,S,S) tensors into a batch (B,3,S,S).
template <typename T>
Tensor<T> stack_batch(const std::vector<const Tensor<T>*>& items) {
    if (items.empty()) throw ArgumentError("cannot stack an empty batch");
    const auto& s = items[0]->shape;
    Tensor<T> out({static_cast<int>(items.size()), s[0], s[1], s[2]});
    std::size_t per = items[0]->numel();
    for (std::size_t i = 0; i < items.size(); ++i) {
        if (items[i]->shape != s)
            throw ArgumentError("batch items disagree in shape: " + items[i]->shape_str() +
                                " vs " + items[0]->shape_str());
        std::copy(items[i]->data.begin(), items[i]->data.end(),
                  out.data.begin() + i * per);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Encoder forward/backward
// ---------------------------------------------------------------------------

template <typename T>
struct EncTape {
    Tensor<T> input;
    std::vector<Tensor<T>> act; // post-ReLU activations per block
    Tensor<T> pooled;
    bool live = false;
};

namespace detail {

inline int conv_out_side(int in) { return (in - 1) / 2 + 1; } // 3x3, stride 2, pad 1

// out[b,oc,oy,ox] = bias[oc] + sum_{ic,ky,kx} w[oc,ic,ky,kx] * in[b,ic,2oy+ky-1,2ox+kx-1]
template <typename T>
Tensor<T> conv3x3s2_forward(const Tensor<T>& in, const Tensor<T>& w, const Tensor<T>& b) {
    const int B = in.dim(0), IC = in.dim(1), H = in.dim(2), W = in.dim(3);
    const int OC = w.dim(0), OH = conv_out_side(H), OW = conv_out_side(W);
    Tensor<T> out({B, OC, OH, OW});
    for (int n = 0; n < B; ++n)
        for (int oc = 0; oc < OC; ++oc)
            for (int oy = 0; oy < OH; ++oy)
                for (int ox = 0; ox < OW; ++ox) {
                    T acc = b[static_cast<std::size_t>(oc)];
                    for (int ic = 0; ic < IC; ++ic)
                        for (int ky = 0; ky < 3; ++ky) {
                            const int iy = 2 * oy + ky - 1;
                            if (iy < 0 || iy >= H) continue;
                            for (int kx = 0; kx < 3; ++kx) {
                                const int ix = 2 * ox + kx - 1;
                                if (ix < 0 || ix >= W) continue;
                                acc += w.at(oc, ic, ky, kx) * in.at(n, ic, iy, ix);
                            }
                        }
                    out.at(n, oc, oy, ox) = acc;
                }
    return out;
}

template <typename T>
void conv3x3s2_backward(const Tensor<T>& in, const Tensor<T>& w, const Tensor<T>& dout,
                        Tensor<T>& din, std::vector<T>& dw, std::vector<T>& db) {
    const int B = in.dim(0), IC = in.dim(1), H = in.dim(2), W = in.dim(3);
    const int OC = w.dim(0), OH = dout.dim(2), OW = dout.dim(3);
    for (int n = 0; n < B; ++n)
        for (int oc = 0; oc < OC; ++oc)
            for (int oy = 0; oy < OH; ++oy)
                for (int ox = 0; ox < OW; ++ox) {
                    const T g = dout.at(n, oc, oy, ox);
                    db[static_cast<std::size_t>(oc)] += g;
                    for (int ic = 0; ic < IC; ++ic)
                        for (int ky = 0; ky < 3; ++ky) {
                            const int iy = 2 * oy + ky - 1;
                            if (iy < 0 || iy >= H) continue;
                            for (int kx = 0; kx < 3; ++kx) {
                                const int ix = 2 * ox + kx - 1;
                                if (ix < 0 || ix >= W) continue;
                                const std::size_t wi =
                                    ((static_cast<std::size_t>(oc) * IC + ic) * 3 + ky) * 3 + kx;
                                dw[wi] += g * in.at(n, ic, iy, ix);
                                din.at(n, ic, iy, ix) += g * w.data[wi];
                            }
                        }
                }
}

} // namespace detail

template <typename T>
Tensor<T> encoder_forward(const EncoderSpec& spec, const ParamStore<T>& params,
                          const Tensor<T>& batch, EncTape<T>& tape) {
    if (batch.shape.size() != 4 || batch.dim(1) != Image::kChannels ||
        batch.dim(2) != spec.input_side || batch.dim(3) != spec.input_side)
        throw ArgumentError("encode: expected shape [B,3," + std::to_string(spec.input_side) +
                            "," + std::to_string(spec.input_side) + "], got " +
                            batch.shape_str());

    tape = EncTape<T>{};
    tape.input = batch;

    const Tensor<T>* cur = &tape.input;
    for (std::size_t i = 0; i < spec.channels.size(); ++i) {
        const std::string base = "enc.conv" + std::to_string(i);
        Tensor<T> z = detail::conv3x3s2_forward(*cur, params.value(base + ".w"),
                                                params.value(base + ".b"));
        for (auto& v : z.data) v = v > T(0) ? v : T(0);
        tape.act.push_back(std::move(z));
        cur = &tape.act.back();
    }

    // Global average pool.
    const int B = cur->dim(0), C = cur->dim(1), HW = cur->dim(2) * cur->dim(3);
    tape.pooled = Tensor<T>({B, C});
    for (int n = 0; n < B; ++n)
        for (int c = 0; c < C; ++c) {
            T acc = 0;
            const std::size_t off = (static_cast<std::size_t>(n) * C + c) * HW;
            for (int i = 0; i < HW; ++i) acc += cur->data[off + i];
            tape.pooled.at(n, c) = acc / static_cast<T>(HW);
        }

    // Linear projection to the embedding.
    const auto& pw = params.value("enc.proj.w");
    const auto& pb = params.value("enc.proj.b");
    const int E = spec.embed_dim;
    Tensor<T> emb({B, E});
    for (int n = 0; n < B; ++n)
        for (int e = 0; e < E; ++e) {
            T acc = pb[static_cast<std::size_t>(e)];
            for (int c = 0; c < C; ++c) acc += pw.at(e, c) * tape.pooled.at(n, c);
            emb.at(n, e) = acc;
        }

    tape.live = true;
    return emb;
}

template <typename T>
void encoder_backward(const EncoderSpec& spec, ParamStore<T>& params,
                      const Tensor<T>& grad_emb, EncTape<T>& tape) {
    if (!tape.live)
        throw StateError("encoder backward called without a recorded forward pass");
    tape.live = false;

    const Tensor<T>& last = tape.act.back();
    const int B = last.dim(0), C = last.dim(1), HW = last.dim(2) * last.dim(3);
    const int E = spec.embed_dim;

    auto& proj = params.param("enc.proj.w");
    auto& projb = params.param("enc.proj.b");
    Tensor<T> dpooled({B, C});
    for (int n = 0; n < B; ++n)
        for (int e = 0; e < E; ++e) {
            const T g = grad_emb.at(n, e);
            projb.value.grad[static_cast<std::size_t>(e)] += g;
            for (int c = 0; c < C; ++c) {
                proj.value.grad[static_cast<std::size_t>(e) * C + c] += g * tape.pooled.at(n, c);
                dpooled.at(n, c) += g * proj.value.at(e, c);
            }
        }

    // Un-pool.
    Tensor<T> dcur(last.shape);
    for (int n = 0; n < B; ++n)
        for (int c = 0; c < C; ++c) {
            const T g = dpooled.at(n, c) / static_cast<T>(HW);
            const std::size_t off = (static_cast<std::size_t>(n) * C + c) * HW;
            for (int i = 0; i < HW; ++i) dcur.data[off + i] = g;
        }

    for (int i = static_cast<int>(spec.channels.size()) - 1; i >= 0; --i) {
        const std::string base = "enc.conv" + std::to_string(i);
        const Tensor<T>& post = tape.act[static_cast<std::size_t>(i)];
        for (std::size_t k = 0; k < dcur.data.size(); ++k)
            if (post.data[k] <= T(0)) dcur.data[k] = T(0);

        const Tensor<T>& in = i == 0 ? tape.input : tape.act[static_cast<std::size_t>(i) - 1];
        Tensor<T> din(in.shape);
        detail::conv3x3s2_backward(in, params.value(base + ".w"), dcur, din,
                                   params.param(base + ".w").value.grad,
                                   params.param(base + ".b").value.grad);
        dcur = std::move(din);
    }
}

// ---------------------------------------------------------------------------
// Decoder forward/backward (teacher forcing) and greedy decoding
// ---------------------------------------------------------------------------

template <typename T>
struct DecTape {
    Tensor<T> emb;   // [B,E]
    TokenBatch toks; // input ids
    Tensor<T> h0;    // [B,H]
    Tensor<T> hs;    // [B,T,H] post-tanh hidden states
    bool live = false;
};

template <typename T>
Tensor<T> decoder_forward(const DecoderSpec& spec, const ParamStore<T>& params,
                          const Tensor<T>& emb, const TokenBatch& toks, DecTape<T>& tape) {
    require_shape({toks.batch, spec.embed_dim}, emb.shape, "decode: embedding");
    for (int id : toks.ids)
        if (id < 0 || id >= spec.vocab_size)
            throw ArgumentError("decode: token id " + std::to_string(id) +
                                " outside vocabulary of size " +
                                std::to_string(spec.vocab_size));

    const int B = toks.batch, Tn = toks.len, H = spec.hidden_dim, E = spec.embed_dim;
    const int D = spec.token_dim, M = spec.vocab_size;
    const auto& tok = params.value("dec.tok.w");
    const auto& iw = params.value("dec.init.w");
    const auto& ib = params.value("dec.init.b");
    const auto& wx = params.value("dec.rnn.wx");
    const auto& wh = params.value("dec.rnn.wh");
    const auto& rb = params.value("dec.rnn.b");
    const auto& ow = params.value("dec.out.w");
    const auto& ob = params.value("dec.out.b");

    tape = DecTape<T>{};
    tape.emb = emb;
    tape.toks = toks;
    tape.h0 = Tensor<T>({B, H});
    tape.hs = Tensor<T>({B, Tn, H});
    Tensor<T> logits({B, Tn, M});

    for (int n = 0; n < B; ++n) {
        for (int h = 0; h < H; ++h) {
            T acc = ib[static_cast<std::size_t>(h)];
            for (int e = 0; e < E; ++e) acc += iw.at(h, e) * emb.at(n, e);
            tape.h0.at(n, h) = acc;
        }
        for (int t = 0; t < Tn; ++t) {
            const int id = toks.at(n, t);
            for (int h = 0; h < H; ++h) {
                T acc = rb[static_cast<std::size_t>(h)];
                for (int d = 0; d < D; ++d) acc += wx.at(h, d) * tok.at(id, d);
                for (int k = 0; k < H; ++k)
                    acc += wh.at(h, k) * (t == 0 ? tape.h0.at(n, k) : tape.hs.at(n, t - 1, k));
                tape.hs.at(n, t, h) = std::tanh(acc);
            }
            for (int m = 0; m < M; ++m) {
                T acc = ob[static_cast<std::size_t>(m)];
                for (int h = 0; h < H; ++h) acc += ow.at(m, h) * tape.hs.at(n, t, h);
                logits.at(n, t, m) = acc;
            }
        }
    }

    tape.live = true;
    return logits;
}

// Returns the gradient with respect to the image embedding.
template <typename T>
Tensor<T> decoder_backward(const DecoderSpec& spec, ParamStore<T>& params,
                           const Tensor<T>& grad_logits, DecTape<T>& tape) {
    if (!tape.live)
        throw StateError("decoder backward called without a recorded forward pass");
    tape.live = false;

    const int B = tape.toks.batch, Tn = tape.toks.len, H = spec.hidden_dim;
    const int E = spec.embed_dim, D = spec.token_dim, M = spec.vocab_size;
    require_shape({B, Tn, M}, grad_logits.shape, "decode backward: logits gradient");

    const auto& tok = params.value("dec.tok.w");
    const auto& iw = params.value("dec.init.w");
    const auto& wx = params.value("dec.rnn.wx");
    const auto& wh = params.value("dec.rnn.wh");
    const auto& ow = params.value("dec.out.w");
    auto& dtok = params.param("dec.tok.w").value.grad;
    auto& diw = params.param("dec.init.w").value.grad;
    auto& dib = params.param("dec.init.b").value.grad;
    auto& dwx = params.param("dec.rnn.wx").value.grad;
    auto& dwh = params.param("dec.rnn.wh").value.grad;
    auto& drb = params.param("dec.rnn.b").value.grad;
    auto& dow = params.param("dec.out.w").value.grad;
    auto& dob = params.param("dec.out.b").value.grad;

    Tensor<T> demb({B, E});
    std::vector<T> dh(static_cast<std::size_t>(H)), da(static_cast<std::size_t>(H));

    for (int n = 0; n < B; ++n) {
        std::fill(dh.begin(), dh.end(), T(0));
        for (int t = Tn - 1; t >= 0; --t) {
            // Output layer contribution at step t.
            for (int m = 0; m < M; ++m) {
                const T g = grad_logits.at(n, t, m);
                if (g == T(0)) continue;
                dob[static_cast<std::size_t>(m)] += g;
                for (int h = 0; h < H; ++h) {
                    dow[static_cast<std::size_t>(m) * H + h] += g * tape.hs.at(n, t, h);
                    dh[static_cast<std::size_t>(h)] += g * ow.at(m, h);
                }
            }
            // Through tanh.
            for (int h = 0; h < H; ++h) {
                const T hv = tape.hs.at(n, t, h);
                da[static_cast<std::size_t>(h)] = dh[static_cast<std::size_t>(h)] * (T(1) - hv * hv);
            }
            const int id = tape.toks.at(n, t);
            std::fill(dh.begin(), dh.end(), T(0));
            for (int h = 0; h < H; ++h) {
                const T g = da[static_cast<std::size_t>(h)];
                if (g == T(0)) continue;
                drb[static_cast<std::size_t>(h)] += g;
                for (int d = 0; d < D; ++d) {
                    dwx[static_cast<std::size_t>(h) * D + d] += g * tok.at(id, d);
                    dtok[static_cast<std::size_t>(id) * D + d] += g * wx.at(h, d);
                }
                for (int k = 0; k < H; ++k) {
                    const T hprev = t == 0 ? tape.h0.at(n, k) : tape.hs.at(n, t - 1, k);
                    dwh[static_cast<std::size_t>(h) * H + k] += g * hprev;
                    dh[static_cast<std::size_t>(k)] += g * wh.at(h, k);
                }
            }
        }
        // dh now holds the gradient at h0; through the init linear map.
        for (int h = 0; h < H; ++h) {
            const T g = dh[static_cast<std::size_t>(h)];
            if (g == T(0)) continue;
            dib[static_cast<std::size_t>(h)] += g;
            for (int e = 0; e < E; ++e) {
                diw[static_cast<std::size_t>(h) * E + e] += g * tape.emb.at(n, e);
                demb.at(n, e) += g * iw.at(h, e);
            }
        }
    }
    return demb;
}

// Argmax decoding, ties to the lowest id; stops at <eos> or max_len tokens.
template <typename T>
std::vector<int> greedy_decode(const DecoderSpec& spec, const ParamStore<T>& params,
                               std::span<const T> emb_row, int max_len) {
    if (max_len < 1) throw ArgumentError("greedy_decode: max_len must be >= 1");
    if (static_cast<int>(emb_row.size()) != spec.embed_dim)
        throw ArgumentError("greedy_decode: embedding size " +
                            std::to_string(emb_row.size()) + " != " +
                            std::to_string(spec.embed_dim));

    const int H = spec.hidden_dim, E = spec.embed_dim, D = spec.token_dim,
              M = spec.vocab_size;
    const auto& tok = params.value("dec.tok.w");
    const auto& iw = params.value("dec.init.w");
    const auto& ib = params.value("dec.init.b");
    const auto& wx = params.value("dec.rnn.wx");
    const auto& wh = params.value("dec.rnn.wh");
    const auto& rb = params.value("dec.rnn.b");
    const auto& ow = params.value("dec.out.w");
    const auto& ob = params.value("dec.out.b");

    std::vector<T> h(static_cast<std::size_t>(H)), hnext(static_cast<std::size_t>(H));
    for (int k = 0; k < H; ++k) {
        T acc = ib[static_cast<std::size_t>(k)];
        for (int e = 0; e < E; ++e) acc += iw.at(k, e) * emb_row[static_cast<std::size_t>(e)];
        h[static_cast<std::size_t>(k)] = acc;
    }

    std::vector<int> out;
    int cur = Vocabulary::kBos;
    for (int step = 0; step < max_len; ++step) {
        for (int k = 0; k < H; ++k) {
            T acc = rb[static_cast<std::size_t>(k)];
            for (int d = 0; d < D; ++d) acc += wx.at(k, d) * tok.at(cur, d);
            for (int j = 0; j < H; ++j) acc += wh.at(k, j) * h[static_cast<std::size_t>(j)];
            hnext[static_cast<std::size_t>(k)] = std::tanh(acc);
        }
        h.swap(hnext);
        int best = 0;
        T best_v = -std::numeric_limits<T>::infinity();
        for (int m = 0; m < M; ++m) {
            T acc = ob[static_cast<std::size_t>(m)];
            for (int k = 0; k < H; ++k) acc += ow.at(m, k) * h[static_cast<std::size_t>(k)];
            if (acc > best_v) {
                best_v = acc;
                best = m;
            }
        }
        if (best == Vocabulary::kEos) break;
        out.push_back(best);
        cur = best;
    }
    return out;
}

} // namespace soli
