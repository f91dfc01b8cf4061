#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "sqtk/image.hpp"
#include "sqtk/model/config.hpp"
#include "sqtk/nn/graph.hpp"

namespace sqtk {

// Siamese detection/tracking transformer. Scene and template images go
// through the same backbone and neck; pooled template features become query
// contents, learned boxes plus externally supplied (tracked / noisy) boxes
// become query boxes, and the decoder refines boxes layer by layer under a
// block-diagonal group attention mask.
template <class S>
class Model {
 public:
  using Graph = nn::Graph<S>;
  using Var = nn::Var;
  using MatS = nn::Mat<S>;

  struct FeatureMap {
    Var tokens;  // (h*w) x D after neck projection + layernorm
    int h = 0;
    int w = 0;
  };

  struct Features {
    std::vector<FeatureMap> maps;  // finest first, ceil-halving resolutions
  };

  struct Memory {
    Var tokens;  // (sum h*w) x D
    Var pos;     // constant positional encodings, same shape
    int count = 0;
  };

  struct DecodeOutput {
    std::vector<Var> logits;  // per decoder layer, n x 1
    std::vector<Var> boxes;   // per decoder layer, n x 4 (sigmoid space)
  };

  // Captures decoder self-attention weights (one matrix per layer per head)
  // when enabled. Test/debug only.
  struct AttentionDebug {
    bool capture = false;
    std::vector<MatS> self_attention;
  };

  Model(const ModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    Rng rng(derive_seed(seed, 0x6d6f64656cull));
    build_parameters(rng);
  }

  const ModelConfig& config() const { return cfg_; }
  nn::ParameterStore<S>& params() { return params_; }
  const nn::ParameterStore<S>& params() const { return params_; }
  AttentionDebug* debug = nullptr;

  // ---- backbone + neck ----

  Features extract_features(Graph& g, const Image& image) const {
    if (std::min(image.width, image.height) < cfg_.base_stride())
      throw ContractViolation("extract_features: image smaller than the base stride");
    MatS x(static_cast<Eigen::Index>(image.width) * image.height, 3);
    for (int y = 0; y < image.height; ++y)
      for (int xx = 0; xx < image.width; ++xx) {
        const float* p = image.at(xx, y);
        for (int c = 0; c < 3; ++c)
          x(static_cast<Eigen::Index>(y) * image.width + xx, c) = S(p[c]) - S(0.5);
      }
    Var cur = g.leaf(std::move(x));
    int h = image.height, w = image.width;

    Features feats;
    const int n_convs = 2 + cfg_.scales;
    for (int i = 0; i < n_convs; ++i) {
      int oh, ow;
      cur = g.conv2d(cur, h, w, g.param(pc(cv_w_[i])), g.param(pc(cv_b_[i])), 3, 2, 1,
                     &oh, &ow);
      cur = g.gelu(cur);
      h = oh;
      w = ow;
      int s = i - 2;
      if (s >= 0) {
        Var t = g.matmul(cur, g.param(pc(nk_w_[s])));
        t = g.add_rowvec(t, g.param(pc(nk_b_[s])));
        t = g.layernorm_rows(t, g.param(pc(nk_g_[s])), g.param(pc(nk_be_[s])));
        feats.maps.push_back({t, h, w});
      }
    }
    return feats;
  }

  // Eq-style spatial average pooling of each projected map -> S vectors 1 x D.
  std::vector<Var> pool_template(Graph& g, const Features& f) const {
    std::vector<Var> pooled;
    for (const auto& m : f.maps) pooled.push_back(g.mean_rows(m.tokens));
    return pooled;
  }

  Var pooled_matrix(Graph& g, const Features& f) const {
    return g.concat_rows(pool_template(g, f));  // S x D
  }

  // ---- encoder ----

  Memory encode(Graph& g, const Features& f) const {
    std::vector<Var> parts;
    MatS pos(token_count(f), cfg_.hidden_dim);
    std::vector<int> scale_idx;
    Eigen::Index r = 0;
    for (int s = 0; s < static_cast<int>(f.maps.size()); ++s) {
      const auto& m = f.maps[s];
      parts.push_back(m.tokens);
      for (int y = 0; y < m.h; ++y)
        for (int x = 0; x < m.w; ++x) {
          fill_2d_sine(pos, r, (x + 0.5) / m.w, (y + 0.5) / m.h);
          scale_idx.push_back(s);
          ++r;
        }
    }
    Memory mem;
    mem.tokens = g.concat_rows(parts);
    mem.pos = g.leaf(std::move(pos));
    mem.count = static_cast<int>(r);

    // learned per-scale embedding added to the token stream
    Var lvl = g.gather_rows(g.param(pc(scale_embed_)), scale_idx);
    Var x = g.add(mem.tokens, lvl);

    for (int l = 0; l < cfg_.encoder_layers; ++l) {
      const auto& ly = enc_[l];
      Var qk = g.add(x, mem.pos);
      Var attn = attention(g, qk, qk, x, ly.attn, nullptr);
      x = g.layernorm_rows(g.add(x, attn), g.param(pc(ly.ln1_g)), g.param(pc(ly.ln1_b)));
      Var ff = ffn(g, x, ly);
      x = g.layernorm_rows(g.add(x, ff), g.param(pc(ly.ln2_g)), g.param(pc(ly.ln2_b)));
    }
    mem.tokens = x;
    return mem;
  }

  // ---- decoder ----

  // contents: n x D, box_logits: n x 4 in inverse-sigmoid space. The group
  // mask gates decoder self-attention only; true (non-zero) entries allow
  // attention. Cross-attention to memory is unrestricted.
  DecodeOutput decode(Graph& g, Var contents, Var box_logits,
                      std::shared_ptr<const nn::MaskMatrix> mask,
                      const Memory& mem) const {
    const Eigen::Index n = g.value(contents).rows();
    if (g.value(box_logits).rows() != n)
      throw ContractViolation("decode: contents/boxes row mismatch");
    if (mask && (mask->rows() != n || mask->cols() != n))
      throw ContractViolation("decode: group mask side must equal query count");

    DecodeOutput out;
    Var x = contents;
    Var z = box_logits;
    for (int l = 0; l < cfg_.decoder_layers; ++l) {
      const auto& ly = dec_[l];
      Var boxes_in = g.sigmoid(z);
      Var qpos = query_pos(g, boxes_in);
      Var qk = g.add(x, qpos);
      Var self = attention(g, qk, qk, x, ly.self_attn, mask);
      x = g.layernorm_rows(g.add(x, self), g.param(pc(ly.ln1_g)), g.param(pc(ly.ln1_b)));
      Var q = g.add(x, qpos);
      Var kmem = g.add(mem.tokens, mem.pos);
      Var cross = attention(g, q, kmem, mem.tokens, ly.cross_attn, nullptr);
      x = g.layernorm_rows(g.add(x, cross), g.param(pc(ly.ln2_g)), g.param(pc(ly.ln2_b)));
      Var ff = ffn(g, x, ly);
      x = g.layernorm_rows(g.add(x, ff), g.param(pc(ly.ln3_g)), g.param(pc(ly.ln3_b)));

      auto [logits, delta] = classify_and_regress(g, x);
      z = g.add(z, delta);
      out.logits.push_back(logits);
      out.boxes.push_back(g.sigmoid(z));
    }
    return out;
  }

  // Shared detection head: one sigmoid logit plus a 4-vector box delta in
  // inverse-sigmoid space. The final delta layer is zero-initialized, so at
  // initialization boxes pass through unchanged.
  std::pair<Var, Var> classify_and_regress(Graph& g, Var states) const {
    Var logits = g.add_rowvec(g.matmul(states, g.param(pc(cls_w_))), g.param(pc(cls_b_)));
    Var h1 = g.gelu(g.add_rowvec(g.matmul(states, g.param(pc(box_w1_))), g.param(pc(box_b1_))));
    Var h2 = g.gelu(g.add_rowvec(g.matmul(h1, g.param(pc(box_w2_))), g.param(pc(box_b2_))));
    Var delta = g.add_rowvec(g.matmul(h2, g.param(pc(box_w3_))), g.param(pc(box_b3_)));
    return {logits, delta};
  }

  nn::Parameter<S>& query_boxes_param() { return params_.at("query_boxes"); }
  nn::Parameter<S>& label_embed_param() { return params_.at("label_embed"); }

  static int feature_token_count(int image_w, int image_h, int base_stride_log2,
                                 int scales) {
    int h = image_h, w = image_w, total = 0;
    for (int i = 0; i < 2 + scales; ++i) {
      h = (h + 1) / 2;
      w = (w + 1) / 2;
      if (i >= 2) total += h * w;
    }
    return total;
  }

 private:
  using Parameter_ref = nn::Parameter<S>&;

  struct EncLayer {
    std::string attn;  // name prefix
    std::string ln1_g, ln1_b, w1, b1, w2, b2, ln2_g, ln2_b;
  };
  struct DecLayer {
    std::string self_attn, cross_attn;
    std::string ln1_g, ln1_b, ln2_g, ln2_b, ln3_g, ln3_b;
    std::string w1, b1, w2, b2;
  };

  ModelConfig cfg_;
  mutable nn::ParameterStore<S> params_;
  std::vector<std::string> cv_w_, cv_b_, nk_w_, nk_b_, nk_g_, nk_be_;
  std::string scale_embed_;
  std::vector<EncLayer> enc_;
  std::vector<DecLayer> dec_;
  std::string qpos_w1_, qpos_b1_, qpos_w2_, qpos_b2_;
  std::string cls_w_, cls_b_;
  std::string box_w1_, box_b1_, box_w2_, box_b2_, box_w3_, box_b3_;

  Parameter_ref pc(const std::string& name) const { return params_.at(name); }

  int token_count(const Features& f) const {
    int n = 0;
    for (const auto& m : f.maps) n += m.h * m.w;
    return n;
  }

  // ---- shared attention block ----

  Var attention(Graph& g, Var q_in, Var k_in, Var v_in, const std::string& prefix,
                std::shared_ptr<const nn::MaskMatrix> mask) const {
    const int H = cfg_.heads;
    const int dh = cfg_.head_dim();
    Var Q = g.add_rowvec(g.matmul(q_in, g.param(pc(prefix + ".wq"))), g.param(pc(prefix + ".bq")));
    Var K = g.add_rowvec(g.matmul(k_in, g.param(pc(prefix + ".wk"))), g.param(pc(prefix + ".bk")));
    Var V = g.add_rowvec(g.matmul(v_in, g.param(pc(prefix + ".wv"))), g.param(pc(prefix + ".bv")));
    std::vector<Var> heads;
    for (int h = 0; h < H; ++h) {
      Var qh = g.slice_cols(Q, h * dh, dh);
      Var kh = g.slice_cols(K, h * dh, dh);
      Var vh = g.slice_cols(V, h * dh, dh);
      Var scores = g.scale(g.matmul(qh, kh, false, true), S(1) / std::sqrt(S(dh)));
      Var attn = g.softmax_rows_masked(scores, mask);
      if (debug && debug->capture && mask)
        debug->self_attention.push_back(g.value(attn));
      heads.push_back(g.matmul(attn, vh));
    }
    Var cat = g.concat_cols(heads);
    return g.add_rowvec(g.matmul(cat, g.param(pc(prefix + ".wo"))), g.param(pc(prefix + ".bo")));
  }

  template <class L>
  Var ffn(Graph& g, Var x, const L& ly) const {
    Var h = g.gelu(g.add_rowvec(g.matmul(x, g.param(pc(ly.w1))), g.param(pc(ly.b1))));
    return g.add_rowvec(g.matmul(h, g.param(pc(ly.w2))), g.param(pc(ly.b2)));
  }

  Var query_pos(Graph& g, Var boxes) const {
    Var emb = g.box_sine_embed(boxes, cfg_.hidden_dim);
    Var h = g.gelu(g.add_rowvec(g.matmul(emb, g.param(pc(qpos_w1_))), g.param(pc(qpos_b1_))));
    return g.add_rowvec(g.matmul(h, g.param(pc(qpos_w2_))), g.param(pc(qpos_b2_)));
  }

  // 2D sine positional encoding: D/2 channels per coordinate.
  void fill_2d_sine(MatS& pos, Eigen::Index r, double cx, double cy) const {
    const int per = cfg_.hidden_dim / 2;
    const int nf = per / 2;
    std::vector<S> freqs = Graph::sine_frequencies(nf);
    for (int f = 0; f < nf; ++f) {
      pos(r, 2 * f) = std::sin(S(cx) * freqs[f]);
      pos(r, 2 * f + 1) = std::cos(S(cx) * freqs[f]);
      pos(r, per + 2 * f) = std::sin(S(cy) * freqs[f]);
      pos(r, per + 2 * f + 1) = std::cos(S(cy) * freqs[f]);
    }
  }

  // ---- parameter construction ----

  void build_parameters(Rng& rng) {
    const int D = cfg_.hidden_dim;
    const int S_ = cfg_.scales;

    auto xavier = [&](const std::string& name, int rows, int cols) -> std::string {
      auto& p = params_.create(name, rows, cols);
      double lim = std::sqrt(6.0 / (rows + cols));
      for (Eigen::Index i = 0; i < p.value.size(); ++i)
        p.value.data()[i] = static_cast<S>(rng.uniform(-lim, lim));
      return name;
    };
    auto zeros = [&](const std::string& name, int rows, int cols) -> std::string {
      params_.create(name, rows, cols);
      return name;
    };
    auto ones = [&](const std::string& name, int rows, int cols) -> std::string {
      auto& p = params_.create(name, rows, cols);
      p.value.setOnes();
      return name;
    };
    auto small_normal = [&](const std::string& name, int rows, int cols) -> std::string {
      auto& p = params_.create(name, rows, cols);
      for (Eigen::Index i = 0; i < p.value.size(); ++i)
        p.value.data()[i] = static_cast<S>(0.02 * rng.normal());
      return name;
    };

    // backbone: 2 + S stride-2 convs; scale s taps conv index 2 + s
    std::vector<int> ch;
    ch.push_back(3);
    ch.push_back(std::max(4, D / 4));
    ch.push_back(std::max(8, D / 2));
    for (int s = 0; s < S_; ++s) ch.push_back(s == 0 ? 3 * D / 4 : D);
    for (int i = 0; i < 2 + S_; ++i) {
      cv_w_.push_back(xavier("backbone.conv" + std::to_string(i) + ".w",
                             9 * ch[i], ch[i + 1]));
      cv_b_.push_back(zeros("backbone.conv" + std::to_string(i) + ".b", 1, ch[i + 1]));
    }
    for (int s = 0; s < S_; ++s) {
      std::string base = "neck.s" + std::to_string(s);
      nk_w_.push_back(xavier(base + ".w", ch[3 + s], D));
      nk_b_.push_back(zeros(base + ".b", 1, D));
      nk_g_.push_back(ones(base + ".ln_g", 1, D));
      nk_be_.push_back(zeros(base + ".ln_b", 1, D));
    }
    scale_embed_ = small_normal("enc.scale_embed", S_, D);

    auto make_attn = [&](const std::string& prefix) {
      xavier(prefix + ".wq", D, D);
      zeros(prefix + ".bq", 1, D);
      xavier(prefix + ".wk", D, D);
      zeros(prefix + ".bk", 1, D);
      xavier(prefix + ".wv", D, D);
      zeros(prefix + ".bv", 1, D);
      xavier(prefix + ".wo", D, D);
      zeros(prefix + ".bo", 1, D);
      return prefix;
    };

    for (int l = 0; l < cfg_.encoder_layers; ++l) {
      EncLayer ly;
      std::string base = "enc.l" + std::to_string(l);
      ly.attn = make_attn(base + ".attn");
      ly.ln1_g = ones(base + ".ln1_g", 1, D);
      ly.ln1_b = zeros(base + ".ln1_b", 1, D);
      ly.w1 = xavier(base + ".ffn.w1", D, cfg_.ffn_dim);
      ly.b1 = zeros(base + ".ffn.b1", 1, cfg_.ffn_dim);
      ly.w2 = xavier(base + ".ffn.w2", cfg_.ffn_dim, D);
      ly.b2 = zeros(base + ".ffn.b2", 1, D);
      ly.ln2_g = ones(base + ".ln2_g", 1, D);
      ly.ln2_b = zeros(base + ".ln2_b", 1, D);
      enc_.push_back(ly);
    }

    for (int l = 0; l < cfg_.decoder_layers; ++l) {
      DecLayer ly;
      std::string base = "dec.l" + std::to_string(l);
      ly.self_attn = make_attn(base + ".self");
      ly.cross_attn = make_attn(base + ".cross");
      ly.ln1_g = ones(base + ".ln1_g", 1, D);
      ly.ln1_b = zeros(base + ".ln1_b", 1, D);
      ly.ln2_g = ones(base + ".ln2_g", 1, D);
      ly.ln2_b = zeros(base + ".ln2_b", 1, D);
      ly.w1 = xavier(base + ".ffn.w1", D, cfg_.ffn_dim);
      ly.b1 = zeros(base + ".ffn.b1", 1, cfg_.ffn_dim);
      ly.w2 = xavier(base + ".ffn.w2", cfg_.ffn_dim, D);
      ly.b2 = zeros(base + ".ffn.b2", 1, D);
      ly.ln3_g = ones(base + ".ln3_g", 1, D);
      ly.ln3_b = zeros(base + ".ln3_b", 1, D);
      dec_.push_back(ly);
    }

    qpos_w1_ = xavier("dec.qpos.w1", D, D);
    qpos_b1_ = zeros("dec.qpos.b1", 1, D);
    qpos_w2_ = xavier("dec.qpos.w2", D, D);
    qpos_b2_ = zeros("dec.qpos.b2", 1, D);

    cls_w_ = xavier("head.cls.w", D, 1);
    cls_b_ = zeros("head.cls.b", 1, 1);
    // focal prior: start with ~1% positive probability
    params_.at(cls_b_).value(0, 0) = static_cast<S>(-std::log(99.0));
    box_w1_ = xavier("head.box.w1", D, D);
    box_b1_ = zeros("head.box.b1", 1, D);
    box_w2_ = xavier("head.box.w2", D, D);
    box_b2_ = zeros("head.box.b2", 1, D);
    box_w3_ = zeros("head.box.w3", D, 4);
    box_b3_ = zeros("head.box.b3", 1, 4);

    // learned query boxes, stored in inverse-sigmoid space
    auto& qb = params_.create("query_boxes", cfg_.num_queries, 4);
    auto logit = [](double v) { return std::log(v / (1.0 - v)); };
    for (int n = 0; n < cfg_.num_queries; ++n) {
      qb.value(n, 0) = static_cast<S>(logit(rng.uniform(0.08, 0.92)));
      qb.value(n, 1) = static_cast<S>(logit(rng.uniform(0.08, 0.92)));
      qb.value(n, 2) = static_cast<S>(logit(rng.uniform(0.10, 0.35)));
      qb.value(n, 3) = static_cast<S>(logit(rng.uniform(0.10, 0.35)));
    }

    small_normal("label_embed", cfg_.label_embed_count, D);
  }
};

}  // namespace sqtk
