#include "sfa/model.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "sfa/ops.hpp"
#include "sfa/rng.hpp"

namespace sfa {

const char* mode_name(Mode m) {
  switch (m) {
    case Mode::baseline: return "baseline";
    case Mode::sfa: return "sfa";
    case Mode::pooled: return "pooled";
  }
  return "?";
}

Mode mode_from_name(const std::string& s) {
  if (s == "baseline") return Mode::baseline;
  if (s == "sfa") return Mode::sfa;
  if (s == "pooled") return Mode::pooled;
  throw std::invalid_argument("unknown mode '" + s + "' (expected baseline, sfa or pooled)");
}

int FEModelConfig::patches_per_frame() const {
  const int side = image_size / patch_size;
  return side * side;
}

int FEModelConfig::tokens_per_frame() const { return patches_per_frame() + 1; }

void FEModelConfig::validate() const {
  if (image_size <= 0 || patch_size <= 0 || image_size % patch_size != 0)
    throw std::invalid_argument("image_size " + std::to_string(image_size) +
                                " must be a positive multiple of patch_size " +
                                std::to_string(patch_size));
  if (hidden <= 0 || heads <= 0 || hidden % heads != 0)
    throw std::invalid_argument("hidden " + std::to_string(hidden) +
                                " must be a positive multiple of heads " + std::to_string(heads));
  if (channels <= 0 || num_frames <= 0 || num_classes <= 0 || mlp_dim <= 0)
    throw std::invalid_argument("config has a non-positive dimension");
  if (spatial_depth < 0 || temporal_depth < 0 || adapter_hidden < 0)
    throw std::invalid_argument("config has a negative depth or width");
}

FEModelConfig FEModelConfig::preset(const std::string& name) {
  FEModelConfig c;
  if (name == "desk") return c;
  // Full-scale variants, used by the cost model only.
  c.image_size = 224;
  c.channels = 3;
  c.temporal_depth = 4;
  c.num_classes = 400;
  c.num_frames = 32;
  c.variant = name;
  if (name == "B") {
    c.patch_size = 16; c.hidden = 768; c.heads = 12; c.spatial_depth = 12; c.mlp_dim = 3072;
  } else if (name == "L") {
    c.patch_size = 16; c.hidden = 1024; c.heads = 16; c.spatial_depth = 24; c.mlp_dim = 4096;
  } else if (name == "H") {
    c.patch_size = 14; c.hidden = 1280; c.heads = 16; c.spatial_depth = 32; c.mlp_dim = 5120;
  } else if (name == "g") {
    c.patch_size = 14; c.hidden = 1408; c.heads = 16; c.spatial_depth = 40; c.mlp_dim = 6144;
  } else {
    throw std::invalid_argument("unknown model preset '" + name + "' (desk, B, L, H, g)");
  }
  c.adapter_hidden = c.hidden;
  return c;
}

void ParamStore::add(const std::string& name, Tensor t) {
  if (!t.defined()) throw std::invalid_argument("cannot add undefined tensor '" + name + "'");
  if (entries_.count(name)) throw std::invalid_argument("duplicate parameter '" + name + "'");
  const std::string group = group_of(name);
  auto it = freeze_.find(group);
  if (it == freeze_.end()) {
    freeze_[group] = false;
    t.set_requires_grad(true);
  } else {
    t.set_requires_grad(!it->second);
  }
  entries_.emplace(name, std::move(t));
}

bool ParamStore::has(const std::string& name) const { return entries_.count(name) > 0; }

bool ParamStore::has_group(const std::string& group) const { return freeze_.count(group) > 0; }

const Tensor& ParamStore::at(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw std::out_of_range("no parameter '" + name + "'");
  return it->second;
}

Tensor& ParamStore::at(const std::string& name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw std::out_of_range("no parameter '" + name + "'");
  return it->second;
}

std::string ParamStore::group_of(const std::string& name) {
  auto dot = name.find('.');
  if (dot == std::string::npos || dot == 0)
    throw std::invalid_argument("parameter name '" + name + "' has no group prefix");
  return name.substr(0, dot);
}

std::vector<std::string> ParamStore::group_names() const {
  std::vector<std::string> out;
  for (const auto& [g, f] : freeze_) out.push_back(g);
  return out;
}

void ParamStore::set_frozen(const std::string& group, bool frozen) {
  auto it = freeze_.find(group);
  if (it == freeze_.end()) throw std::out_of_range("no parameter group '" + group + "'");
  it->second = frozen;
  for (auto& [name, t] : entries_)
    if (group_of(name) == group) t.set_requires_grad(!frozen);
}

bool ParamStore::frozen(const std::string& group) const {
  auto it = freeze_.find(group);
  if (it == freeze_.end()) throw std::out_of_range("no parameter group '" + group + "'");
  return it->second;
}

std::map<std::string, long long> ParamStore::group_sizes() const {
  std::map<std::string, long long> out;
  for (const auto& [g, f] : freeze_) out[g] = 0;
  for (const auto& [name, t] : entries_) out[group_of(name)] += t.size();
  return out;
}

long long ParamStore::total_size() const {
  long long n = 0;
  for (const auto& [name, t] : entries_) n += t.size();
  return n;
}

namespace {

void block_shapes(std::vector<std::pair<std::string, std::vector<int>>>& out,
                  const std::string& prefix, int d, int m) {
  out.push_back({prefix + ".ln1.g", {d}});
  out.push_back({prefix + ".ln1.b", {d}});
  for (const char* w : {"wq", "wk", "wv", "wo"}) out.push_back({prefix + ".attn." + std::string(w), {d, d}});
  for (const char* b : {"bq", "bk", "bv", "bo"}) out.push_back({prefix + ".attn." + std::string(b), {d}});
  out.push_back({prefix + ".ln2.g", {d}});
  out.push_back({prefix + ".ln2.b", {d}});
  out.push_back({prefix + ".mlp.w1", {d, m}});
  out.push_back({prefix + ".mlp.b1", {m}});
  out.push_back({prefix + ".mlp.w2", {m, d}});
  out.push_back({prefix + ".mlp.b2", {d}});
}

std::string blk_name(const std::string& stack, int i) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%s.blk%02d", stack.c_str(), i);
  return buf;
}

}  // namespace

std::vector<std::pair<std::string, std::vector<int>>> param_shapes(const FEModelConfig& cfg,
                                                                   Mode mode) {
  cfg.validate();
  const int d = cfg.hidden;
  std::vector<std::pair<std::string, std::vector<int>>> out;

  out.push_back({"spatial.patch.w", {cfg.patch_size * cfg.patch_size * cfg.channels, d}});
  out.push_back({"spatial.patch.b", {d}});
  out.push_back({"spatial.cls", {1, d}});
  out.push_back({"spatial.pos", {cfg.tokens_per_frame(), d}});
  for (int i = 0; i < cfg.spatial_depth; ++i) block_shapes(out, blk_name("spatial", i), d, cfg.mlp_dim);
  out.push_back({"spatial.norm.g", {d}});
  out.push_back({"spatial.norm.b", {d}});

  if (mode != Mode::pooled) {
    out.push_back({"temporal.cls", {1, d}});
    out.push_back({"temporal.pos", {cfg.num_frames, d}});
    for (int i = 0; i < cfg.temporal_depth; ++i) block_shapes(out, blk_name("temporal", i), d, cfg.mlp_dim);
    out.push_back({"temporal.norm.g", {d}});
    out.push_back({"temporal.norm.b", {d}});
  }

  if (mode == Mode::sfa) {
    const int ah = cfg.adapter_hidden > 0 ? cfg.adapter_hidden : d;
    out.push_back({"adapter.w1", {d, ah}});
    out.push_back({"adapter.b1", {ah}});
    out.push_back({"adapter.w2", {ah, d}});
    out.push_back({"adapter.b2", {d}});
  }

  out.push_back({"head.w", {d, cfg.num_classes}});
  out.push_back({"head.b", {cfg.num_classes}});
  return out;
}

std::map<std::string, long long> count_params(const FEModelConfig& cfg, Mode mode) {
  std::map<std::string, long long> out;
  long long total = 0;
  for (const auto& [name, shape] : param_shapes(cfg, mode)) {
    const long long n = shape_size(shape);
    out[ParamStore::group_of(name)] += n;
    total += n;
  }
  out["total"] = total;
  return out;
}

Tensor interpolate_temporal_posemb(const Tensor& table, int target_frames) {
  if (table.ndim() != 2)
    throw std::invalid_argument("posemb table must be 2-d, got " + shape_str(table.shape()));
  if (target_frames < 1)
    throw std::invalid_argument("target frame count must be >= 1, got " + std::to_string(target_frames));
  const int src = table.rows(), d = table.cols();
  if (src == target_frames) return table.detached_copy();
  if (src < 2)
    throw std::invalid_argument("cannot interpolate a length-" + std::to_string(src) +
                                " posemb table to length " + std::to_string(target_frames));

  Tensor out = Tensor::zeros({target_frames, d});
  auto dst = out.raw_data();
  auto srcv = table.data();
  for (int j = 0; j < target_frames; ++j) {
    const double t = target_frames == 1 ? 0.0
                                        : double(j) * double(src - 1) / double(target_frames - 1);
    int i0 = int(t);
    if (i0 > src - 2) i0 = src - 2;
    const double frac = t - i0;
    if (frac == 0.0) {
      for (int c = 0; c < d; ++c) dst[size_t(j) * d + c] = srcv[size_t(i0) * d + c];
    } else {
      for (int c = 0; c < d; ++c)
        dst[size_t(j) * d + c] = quantize((1.0 - frac) * srcv[size_t(i0) * d + c] +
                                          frac * srcv[size_t(i0 + 1) * d + c]);
    }
  }
  return out;
}

Tensor init_param_record(const std::string& name, const std::vector<int>& shape, uint64_t seed) {
  Tensor t = Tensor::zeros(shape);
  const std::string leaf = name.substr(name.rfind('.') + 1);
  if (leaf == "g") {
    auto buf = t.raw_data();
    for (double& v : buf) v = 1.0;
  } else if (leaf[0] == 'b') {
    // biases and layer-norm shifts start at zero
  } else if (name == "adapter.w2") {
    // zero second layer: the adapter starts as the identity
  } else {
    Rng rng(hash_combine(seed, hash_str(name)));
    auto buf = t.raw_data();
    for (double& v : buf) v = rng.next_trunc_normal(0.02);
    quantize_buffer(buf);
  }
  return t;
}

FEModel::FEModel(FEModelConfig cfg) : cfg_(std::move(cfg)) { cfg_.validate(); }

ParamStore FEModel::init_params(Mode mode, uint64_t seed) const {
  ParamStore ps;
  for (const auto& [name, shape] : param_shapes(cfg_, mode))
    ps.add(name, init_param_record(name, shape, seed));
  return ps;
}

std::vector<Tensor> FEModel::patch_embed(const Video& clip, const ParamStore& ps) const {
  clip.check_consistent();
  if (clip.height != cfg_.image_size || clip.width != cfg_.image_size ||
      clip.channels != cfg_.channels)
    throw std::invalid_argument("clip " + std::to_string(clip.height) + "x" +
                                std::to_string(clip.width) + "x" + std::to_string(clip.channels) +
                                " does not match config " + std::to_string(cfg_.image_size) + "x" +
                                std::to_string(cfg_.image_size) + "x" + std::to_string(cfg_.channels));
  const int p = cfg_.patch_size;
  const int side = cfg_.image_size / p;
  const int n = cfg_.patches_per_frame();
  const int pdim = p * p * cfg_.channels;
  const Tensor& w = ps.at("spatial.patch.w");
  const Tensor& b = ps.at("spatial.patch.b");
  const Tensor& cls = ps.at("spatial.cls");
  const Tensor& pos = ps.at("spatial.pos");

  std::vector<Tensor> out;
  out.reserve(size_t(clip.frames));
  for (int t = 0; t < clip.frames; ++t) {
    std::vector<double> patches(size_t(n) * size_t(pdim));
    for (int py = 0; py < side; ++py)
      for (int px = 0; px < side; ++px) {
        double* row = patches.data() + size_t(py * side + px) * pdim;
        int k = 0;
        for (int y = 0; y < p; ++y)
          for (int x = 0; x < p; ++x)
            for (int c = 0; c < cfg_.channels; ++c)
              row[k++] = clip.at(t, py * p + y, px * p + x, c);
      }
    Tensor pm = Tensor::from_data({n, pdim}, std::move(patches));
    Tensor projected = add_bias(matmul(pm, w), b);
    Tensor tokens = add(concat_rows({cls, projected}), pos);
    out.push_back(std::move(tokens));
  }
  return out;
}

Tensor FEModel::encoder_block(const ParamStore& ps, const std::string& prefix, Tensor x) const {
  const int d = cfg_.hidden;
  const int heads = cfg_.heads;
  const int dh = d / heads;
  const double inv_sqrt_dh = 1.0 / std::sqrt(double(dh));

  Tensor h = layer_norm(x, ps.at(prefix + ".ln1.g"), ps.at(prefix + ".ln1.b"));
  Tensor q = add_bias(matmul(h, ps.at(prefix + ".attn.wq")), ps.at(prefix + ".attn.bq"));
  Tensor k = add_bias(matmul(h, ps.at(prefix + ".attn.wk")), ps.at(prefix + ".attn.bk"));
  Tensor v = add_bias(matmul(h, ps.at(prefix + ".attn.wv")), ps.at(prefix + ".attn.bv"));

  std::vector<Tensor> head_outs;
  head_outs.reserve(size_t(heads));
  for (int i = 0; i < heads; ++i) {
    Tensor qh = slice_cols(q, i * dh, dh);
    Tensor kh = slice_cols(k, i * dh, dh);
    Tensor vh = slice_cols(v, i * dh, dh);
    Tensor probs = softmax(scale(matmul(qh, transpose(kh)), inv_sqrt_dh));
    head_outs.push_back(matmul(probs, vh));
  }
  Tensor att = concat_cols(head_outs);
  Tensor o = add_bias(matmul(att, ps.at(prefix + ".attn.wo")), ps.at(prefix + ".attn.bo"));
  Tensor x1 = add(x, o);

  Tensor m = layer_norm(x1, ps.at(prefix + ".ln2.g"), ps.at(prefix + ".ln2.b"));
  Tensor mh = gelu(add_bias(matmul(m, ps.at(prefix + ".mlp.w1")), ps.at(prefix + ".mlp.b1")));
  Tensor mo = add_bias(matmul(mh, ps.at(prefix + ".mlp.w2")), ps.at(prefix + ".mlp.b2"));
  return add(x1, mo);
}

Tensor FEModel::encode_tokens(const ParamStore& ps, const std::string& prefix, int depth,
                              Tensor x) const {
  for (int i = 0; i < depth; ++i) x = encoder_block(ps, blk_name(prefix, i), x);
  return layer_norm(x, ps.at(prefix + ".norm.g"), ps.at(prefix + ".norm.b"));
}

Tensor FEModel::spatial_encode(const std::vector<Tensor>& frame_tokens,
                               const ParamStore& ps) const {
  if (frame_tokens.empty()) throw std::invalid_argument("spatial_encode: no frames");
  std::vector<Tensor> reps;
  reps.reserve(frame_tokens.size());
  for (const Tensor& tokens : frame_tokens) {
    Tensor enc = encode_tokens(ps, "spatial", cfg_.spatial_depth, tokens);
    reps.push_back(slice_rows(enc, 0, 1));
  }
  return reps.size() == 1 ? reps[0] : concat_rows(reps);
}

Tensor FEModel::adapter_apply(const Tensor& frame_reps, const ParamStore& ps) const {
  Tensor h = gelu(add_bias(matmul(frame_reps, ps.at("adapter.w1")), ps.at("adapter.b1")));
  Tensor delta = add_bias(matmul(h, ps.at("adapter.w2")), ps.at("adapter.b2"));
  return add(frame_reps, delta);
}

Tensor FEModel::temporal_encode(const Tensor& frame_reps, const ParamStore& ps) const {
  const Tensor& pos = ps.at("temporal.pos");
  if (frame_reps.ndim() != 2 || frame_reps.rows() != pos.rows())
    throw std::invalid_argument("temporal_encode: " + std::to_string(frame_reps.rows()) +
                                " frames but the positional table holds " +
                                std::to_string(pos.rows()));
  Tensor x = concat_rows({ps.at("temporal.cls"), add(frame_reps, pos)});
  Tensor enc = encode_tokens(ps, "temporal", cfg_.temporal_depth, x);
  return slice_rows(enc, 0, 1);
}

Tensor FEModel::forward(const Video& clip, const ParamStore& ps, Mode mode) const {
  if (mode == Mode::sfa && !ps.has_group("adapter"))
    throw std::invalid_argument("sfa-mode forward needs an adapter group");
  if (mode == Mode::baseline && ps.has_group("adapter"))
    throw std::invalid_argument("baseline-mode forward on a store with an adapter group");

  Tensor reps = spatial_encode(patch_embed(clip, ps), ps);
  Tensor pooled;
  if (mode == Mode::pooled) {
    pooled = mean_rows(reps);
  } else {
    if (mode == Mode::sfa) reps = adapter_apply(reps, ps);
    pooled = temporal_encode(reps, ps);
  }
  return add_bias(matmul(pooled, ps.at("head.w")), ps.at("head.b"));
}

Tensor FEModel::forward_batch(const std::vector<Video>& clips, const ParamStore& ps,
                              Mode mode) const {
  if (clips.empty()) throw std::invalid_argument("forward_batch: empty batch");
  std::vector<Tensor> rows;
  rows.reserve(clips.size());
  for (const Video& clip : clips) rows.push_back(forward(clip, ps, mode));
  return rows.size() == 1 ? rows[0] : concat_rows(rows);
}

}  // namespace sfa
