#include "sfa/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "sfa/rng.hpp"

namespace sfa {

namespace {

using nlohmann::json;

json config_to_json(const FEModelConfig& c) {
  return json{{"variant", c.variant},
              {"image_size", c.image_size},
              {"patch_size", c.patch_size},
              {"channels", c.channels},
              {"num_frames", c.num_frames},
              {"hidden", c.hidden},
              {"heads", c.heads},
              {"spatial_depth", c.spatial_depth},
              {"temporal_depth", c.temporal_depth},
              {"mlp_dim", c.mlp_dim},
              {"adapter_hidden", c.adapter_hidden},
              {"num_classes", c.num_classes}};
}

FEModelConfig config_from_json(const json& j) {
  FEModelConfig c;
  c.variant = j.at("variant").get<std::string>();
  c.image_size = j.at("image_size").get<int>();
  c.patch_size = j.at("patch_size").get<int>();
  c.channels = j.at("channels").get<int>();
  c.num_frames = j.at("num_frames").get<int>();
  c.hidden = j.at("hidden").get<int>();
  c.heads = j.at("heads").get<int>();
  c.spatial_depth = j.at("spatial_depth").get<int>();
  c.temporal_depth = j.at("temporal_depth").get<int>();
  c.mlp_dim = j.at("mlp_dim").get<int>();
  c.adapter_hidden = j.at("adapter_hidden").get<int>();
  c.num_classes = j.at("num_classes").get<int>();
  return c;
}

void put_u8(std::vector<uint8_t>& out, uint8_t v) { out.push_back(v); }

void put_u16(std::vector<uint8_t>& out, uint16_t v) {
  out.push_back(uint8_t(v & 0xff));
  out.push_back(uint8_t(v >> 8));
}

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(uint8_t(v >> (8 * i)));
}

struct Reader {
  const std::vector<uint8_t>& bytes;
  size_t pos = 0;
  std::string context = "header";

  void need(size_t n) const {
    if (pos + n > bytes.size())
      throw CheckpointError(CheckpointErrorKind::truncated,
                            "checkpoint truncated while reading " + context);
  }
  uint8_t u8() {
    need(1);
    return bytes[pos++];
  }
  uint16_t u16() {
    need(2);
    uint16_t v = uint16_t(bytes[pos]) | uint16_t(bytes[pos + 1]) << 8;
    pos += 2;
    return v;
  }
  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= uint32_t(bytes[pos + i]) << (8 * i);
    pos += 4;
    return v;
  }
  std::string str(size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(bytes.data() + pos), n);
    pos += n;
    return s;
  }
};

const char kMagic[5] = {'S', 'F', 'A', 'V', '1'};

}  // namespace

CheckpointMeta make_meta(const ParamStore& store, const FEModelConfig& config, Mode mode,
                         const std::string& stage, int epoch, uint64_t dataset_seed) {
  CheckpointMeta meta;
  meta.config = config;
  meta.mode = mode;
  meta.stage = stage;
  meta.epoch = epoch;
  meta.dataset_seed = dataset_seed;
  meta.groups = store.freeze_flags();
  return meta;
}

std::vector<uint8_t> save_checkpoint(const ParamStore& store, const CheckpointMeta& meta) {
  json jmeta{{"config", config_to_json(meta.config)},
             {"mode", mode_name(meta.mode)},
             {"stage", meta.stage},
             {"epoch", meta.epoch},
             {"dataset_seed", meta.dataset_seed},
             {"groups", meta.groups}};
  const std::string meta_text = jmeta.dump();

  std::vector<uint8_t> out;
  out.insert(out.end(), kMagic, kMagic + 5);
  put_u8(out, 1);
  put_u32(out, uint32_t(meta_text.size()));
  out.insert(out.end(), meta_text.begin(), meta_text.end());
  put_u32(out, uint32_t(store.entries().size()));
  for (const auto& [name, t] : store.entries()) {  // std::map: lexicographic
    put_u16(out, uint16_t(name.size()));
    out.insert(out.end(), name.begin(), name.end());
    put_u8(out, uint8_t(t.ndim()));
    for (int d : t.shape()) put_u32(out, uint32_t(d));
    for (double v : t.data()) put_u32(out, std::bit_cast<uint32_t>(float(v)));
  }
  return out;
}

Checkpoint load_checkpoint(const std::vector<uint8_t>& bytes) {
  Reader r{bytes};
  if (bytes.size() < 5 || std::memcmp(bytes.data(), kMagic, 5) != 0)
    throw CheckpointError(CheckpointErrorKind::bad_magic, "not a checkpoint stream (bad magic)");
  r.pos = 5;
  const uint8_t version = r.u8();
  if (version != 1)
    throw CheckpointError(CheckpointErrorKind::bad_version,
                          "unsupported checkpoint version " + std::to_string(version));

  r.context = "meta";
  const uint32_t meta_len = r.u32();
  const std::string meta_text = r.str(meta_len);
  Checkpoint ck;
  try {
    const json j = json::parse(meta_text);
    ck.meta.config = config_from_json(j.at("config"));
    ck.meta.mode = mode_from_name(j.at("mode").get<std::string>());
    ck.meta.stage = j.at("stage").get<std::string>();
    ck.meta.epoch = j.at("epoch").get<int>();
    ck.meta.dataset_seed = j.at("dataset_seed").get<uint64_t>();
    ck.meta.groups = j.at("groups").get<std::map<std::string, bool>>();
  } catch (const json::exception& e) {
    throw CheckpointError(CheckpointErrorKind::bad_meta,
                          std::string("malformed checkpoint meta: ") + e.what());
  }

  r.context = "record table";
  const uint32_t count = r.u32();
  std::string prev_name;
  for (uint32_t i = 0; i < count; ++i) {
    r.context = "record " + std::to_string(i) + " name";
    const uint16_t name_len = r.u16();
    const std::string name = r.str(name_len);
    r.context = "record '" + name + "'";
    if (i > 0 && !(prev_name < name))
      throw CheckpointError(CheckpointErrorKind::bad_order,
                            "record '" + name + "' out of order after '" + prev_name + "'");
    prev_name = name;

    const std::string group = ParamStore::group_of(name);
    if (!ck.meta.groups.count(group))
      throw CheckpointError(CheckpointErrorKind::unknown_group,
                            "record '" + name + "' names group '" + group +
                                "' absent from the meta group map");

    const uint8_t ndim = r.u8();
    std::vector<int> shape(ndim);
    long long n = 1;
    for (int d = 0; d < ndim; ++d) {
      const uint32_t dim = r.u32();
      if (dim == 0 || dim > (1u << 30))
        throw CheckpointError(CheckpointErrorKind::length_mismatch,
                              "record '" + name + "' has invalid dimension " +
                                  std::to_string(dim));
      shape[d] = int(dim);
      n *= dim;
    }
    r.need(size_t(n) * 4);
    std::vector<double> values(static_cast<size_t>(n));
    for (long long k = 0; k < n; ++k) {
      uint32_t raw = 0;
      std::memcpy(&raw, bytes.data() + r.pos + size_t(k) * 4, 4);
      values[size_t(k)] = double(std::bit_cast<float>(raw));
    }
    r.pos += size_t(n) * 4;
    ck.store.add(name, Tensor::from_data(shape, std::move(values)));
  }
  if (r.pos != bytes.size())
    throw CheckpointError(CheckpointErrorKind::length_mismatch,
                          std::to_string(bytes.size() - r.pos) +
                              " trailing bytes after the last record");

  for (const auto& [group, frozen] : ck.meta.groups)
    if (ck.store.has_group(group)) ck.store.set_frozen(group, frozen);
  return ck;
}

void save_checkpoint_file(const std::string& path, const ParamStore& store,
                          const CheckpointMeta& meta) {
  const std::vector<uint8_t> bytes = save_checkpoint(store, meta);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CheckpointError(CheckpointErrorKind::io, "cannot open '" + path + "' for write");
  out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
  if (!out) throw CheckpointError(CheckpointErrorKind::io, "short write to '" + path + "'");
}

Checkpoint load_checkpoint_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError(CheckpointErrorKind::io, "cannot open '" + path + "' for read");
  std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                             std::istreambuf_iterator<char>());
  return load_checkpoint(bytes);
}

namespace {

// Architecture fields that the stage-2 transfer cannot change.
std::string config_mismatch_list(const FEModelConfig& a, const FEModelConfig& b) {
  std::ostringstream diff;
  auto field = [&](const char* fname, int x, int y) {
    if (x != y) diff << (diff.tellp() > 0 ? ", " : "") << fname << " (" << x << " vs " << y << ")";
  };
  field("image_size", a.image_size, b.image_size);
  field("patch_size", a.patch_size, b.patch_size);
  field("channels", a.channels, b.channels);
  field("hidden", a.hidden, b.hidden);
  field("heads", a.heads, b.heads);
  field("spatial_depth", a.spatial_depth, b.spatial_depth);
  field("temporal_depth", a.temporal_depth, b.temporal_depth);
  field("mlp_dim", a.mlp_dim, b.mlp_dim);
  return diff.str();
}

Tensor copy_record(const Checkpoint& src, const std::string& name,
                   const std::vector<int>& shape) {
  if (!src.store.has(name))
    throw SurgeryError("source checkpoint is missing record '" + name + "'");
  const Tensor& t = src.store.at(name);
  if (t.shape() != shape)
    throw SurgeryError("source record '" + name + "' has shape " + shape_str(t.shape()) +
                       ", expected " + shape_str(shape));
  return t.detached_copy();
}

}  // namespace

ParamStore surgery_stage2_init(const Checkpoint& stage1, const FEModelConfig& target,
                               HeadPolicy head_policy, uint64_t seed) {
  target.validate();
  const std::string diff = config_mismatch_list(stage1.meta.config, target);
  if (!diff.empty())
    throw SurgeryError("stage-1 checkpoint is architecturally incompatible: " + diff);
  if (head_policy == HeadPolicy::copy && stage1.meta.config.num_classes != target.num_classes)
    throw SurgeryError("cannot copy a " + std::to_string(stage1.meta.config.num_classes) +
                       "-way head into a " + std::to_string(target.num_classes) +
                       "-way model; use head reinitialization");
  if (!stage1.store.has_group("temporal"))
    throw SurgeryError("source checkpoint has no temporal group; need a full stage-1 model");

  ParamStore out;
  for (const auto& [name, shape] : param_shapes(target, Mode::sfa)) {
    const std::string group = ParamStore::group_of(name);
    if (group == "adapter") {
      out.add(name, init_param_record(name, shape, seed));
    } else if (name == "temporal.pos") {
      out.add(name, interpolate_temporal_posemb(stage1.store.at(name), target.num_frames));
    } else if (group == "head" && head_policy == HeadPolicy::reinit) {
      out.add(name, init_param_record(name, shape, seed));
    } else {
      out.add(name, copy_record(stage1, name, shape));
    }
  }
  out.set_frozen("spatial", true);
  return out;
}

ParamStore copy_all_init(const Checkpoint& source, const FEModelConfig& target) {
  target.validate();
  const std::string diff = config_mismatch_list(source.meta.config, target);
  if (!diff.empty())
    throw SurgeryError("source checkpoint is architecturally incompatible: " + diff);
  if (source.meta.config.num_classes != target.num_classes)
    throw SurgeryError("carrying weights across class counts (" +
                       std::to_string(source.meta.config.num_classes) + " vs " +
                       std::to_string(target.num_classes) + ") is not supported");

  ParamStore out;
  for (const auto& [name, shape] : param_shapes(target, source.meta.mode)) {
    if (name == "temporal.pos")
      out.add(name, interpolate_temporal_posemb(source.store.at(name), target.num_frames));
    else
      out.add(name, copy_record(source, name, shape));
  }
  return out;
}

const char* ablation_variant_name(AblationVariant v) {
  switch (v) {
    case AblationVariant::full_finetune: return "full_finetune";
    case AblationVariant::frozen_spatial: return "frozen_spatial";
    case AblationVariant::frozen_temporal: return "frozen_temporal";
    case AblationVariant::frozen_spatial_adapter: return "frozen_spatial_adapter";
    case AblationVariant::surgery: return "surgery";
  }
  return "?";
}

AblationVariant ablation_variant_from_name(const std::string& s) {
  if (s == "full_finetune" || s == "baseline") return AblationVariant::full_finetune;
  if (s == "frozen_spatial" || s == "I") return AblationVariant::frozen_spatial;
  if (s == "frozen_temporal" || s == "II") return AblationVariant::frozen_temporal;
  if (s == "frozen_spatial_adapter" || s == "III") return AblationVariant::frozen_spatial_adapter;
  if (s == "surgery" || s == "V") return AblationVariant::surgery;
  throw std::invalid_argument("unknown ablation variant '" + s + "'");
}

Mode ablation_mode(AblationVariant variant) {
  switch (variant) {
    case AblationVariant::frozen_spatial_adapter:
    case AblationVariant::surgery:
      return Mode::sfa;
    default:
      return Mode::baseline;
  }
}

ParamStore ablation_init(AblationVariant variant, const AblationSources& sources,
                         const FEModelConfig& config, uint64_t seed) {
  if (variant == AblationVariant::surgery) {
    if (!sources.stage1)
      throw SurgeryError("surgery variant needs a stage-1 checkpoint source");
    return surgery_stage2_init(*sources.stage1, config, HeadPolicy::copy, seed);
  }

  const Checkpoint* src = sources.spatial_source;
  if (!src) throw SurgeryError(std::string("variant ") + ablation_variant_name(variant) +
                               " needs a spatial source checkpoint");
  if (!src->store.has_group("spatial"))
    throw SurgeryError("spatial source checkpoint has no spatial group");
  const std::string diff = config_mismatch_list(src->meta.config, config);
  if (!diff.empty())
    throw SurgeryError("spatial source is architecturally incompatible: " + diff);

  const Mode mode = ablation_mode(variant);
  ParamStore out;
  for (const auto& [name, shape] : param_shapes(config, mode)) {
    if (ParamStore::group_of(name) == "spatial")
      out.add(name, copy_record(*src, name, shape));
    else
      out.add(name, init_param_record(name, shape, seed));
  }
  if (variant == AblationVariant::frozen_spatial ||
      variant == AblationVariant::frozen_spatial_adapter)
    out.set_frozen("spatial", true);
  if (variant == AblationVariant::frozen_temporal) out.set_frozen("temporal", true);
  return out;
}

}  // namespace sfa
