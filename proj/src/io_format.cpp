#include "conan/io_format.hpp"

#include <yaml-cpp/yaml.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "conan/errors.hpp"

namespace conan::io {

std::uint64_t fnv1a64(const std::uint8_t* data, std::size_t size) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < size; ++i) {
    h ^= data[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

namespace {

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out.insert(out.end(), b, b + n);
  }
  void u8(std::uint8_t v) { out.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  std::vector<std::uint8_t> out;
};

class Reader {
 public:
  Reader(const std::vector<std::uint8_t>& b, std::size_t end) : b_(b), end_(end) {}
  void need(std::size_t n) const {
    if (pos_ + n > end_) throw IntegrityError("file is truncated");
  }
  std::uint8_t u8() {
    need(1);
    return b_[pos_++];
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b_[pos_++]) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b_[pos_++]) << (8 * i);
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string text(std::size_t n) {
    need(n);
    std::string s(reinterpret_cast<const char*>(b_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }

 private:
  const std::vector<std::uint8_t>& b_;
  std::size_t end_;
  std::size_t pos_ = 0;
};

constexpr char kContainerMagic[4] = {'C', 'N', 'A', 'N'};
constexpr char kCheckpointMagic[8] = {'C', 'N', 'A', 'N', 'C', 'K', 'P', 'T'};

bool has_magic(const std::vector<std::uint8_t>& b, const char* magic, std::size_t n) {
  return b.size() >= n && std::memcmp(b.data(), magic, n) == 0;
}

void check_keys(const YAML::Node& node, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!node.IsMap()) throw SchemaError(where + " must be a mapping");
  for (const auto& kv : node) {
    const std::string key = kv.first.as<std::string>();
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw SchemaError("unknown key '" + key + "' in " + where);
  }
}

YAML::Node require(const YAML::Node& node, const char* key, const std::string& where) {
  const YAML::Node v = node[key];
  if (!v) throw SchemaError("missing key '" + std::string(key) + "' in " + where);
  return v;
}

template <typename T>
T scalar(const YAML::Node& node, const std::string& what) {
  try {
    return node.as<T>();
  } catch (const YAML::Exception&) {
    throw SchemaError("malformed value for " + what);
  }
}

YAML::Node parse_yaml(const std::string& text, const std::string& what) {
  try {
    return YAML::Load(text);
  } catch (const YAML::Exception& e) {
    throw SchemaError(what + " is not valid YAML: " + e.what());
  }
}

void emit_provenance(YAML::Emitter& out, const std::string& provenance) {
  if (provenance.empty()) return;
  out << YAML::Key << "provenance" << YAML::Value << parse_yaml(provenance, "provenance");
}

std::string dump(const YAML::Node& node) {
  YAML::Emitter e;
  e.SetDoublePrecision(17);
  e << node;
  return e.c_str();
}

}  // namespace

// --- container --------------------------------------------------------------

std::vector<std::uint8_t> encode_container(const EmbeddingContainer& c) {
  if (c.float_width != 4 && c.float_width != 8) throw SchemaError("float width must be 4 or 8");
  if (c.values.size() != c.count * c.d) throw DimensionError("container holds the wrong number of values");
  Writer w;
  w.bytes(kContainerMagic, 4);
  w.u32(kContainerVersion);
  w.u32(c.d);
  w.u64(c.count);
  w.u8(c.float_width);
  const std::size_t start = w.out.size();
  for (double v : c.values) c.float_width == 8 ? w.f64(v) : w.f32(static_cast<float>(v));
  w.u64(fnv1a64(w.out.data() + start, w.out.size() - start));
  return std::move(w.out);
}

EmbeddingContainer decode_container(const std::vector<std::uint8_t>& bytes) {
  if (!has_magic(bytes, kContainerMagic, 4)) throw SchemaError("not an embedding container");
  Reader r(bytes, bytes.size());
  r.text(4);
  const std::uint32_t version = r.u32();
  if (version != kContainerVersion)
    throw VersionError("unsupported container version " + std::to_string(version));
  EmbeddingContainer c;
  c.d = r.u32();
  c.count = r.u64();
  c.float_width = r.u8();
  if (c.float_width != 4 && c.float_width != 8) throw SchemaError("float width must be 4 or 8");
  const std::size_t header = r.pos();
  if (c.d != 0 && c.count > (bytes.size() / c.d) / c.float_width) throw IntegrityError("file is truncated");
  const std::size_t payload = static_cast<std::size_t>(c.count) * c.d * c.float_width;
  if (bytes.size() != header + payload + 8)
    throw IntegrityError(bytes.size() < header + payload + 8 ? "file is truncated" : "trailing bytes after checksum");
  c.values.reserve(static_cast<std::size_t>(c.count) * c.d);
  for (std::size_t i = 0; i < static_cast<std::size_t>(c.count) * c.d; ++i)
    c.values.push_back(c.float_width == 8 ? r.f64() : static_cast<double>(r.f32()));
  if (r.u64() != fnv1a64(bytes.data() + header, payload)) throw IntegrityError("container checksum mismatch");
  return c;
}

void write_container(const std::filesystem::path& path, const EmbeddingContainer& c) {
  write_file(path, encode_container(c));
}

EmbeddingContainer read_container(const std::filesystem::path& path) { return decode_container(read_file(path)); }

// --- manifest ----------------------------------------------------------------

std::string emit_manifest(const Manifest& m) {
  YAML::Emitter out;
  out.SetDoublePrecision(17);
  out << YAML::BeginMap;
  out << YAML::Key << "format_version" << YAML::Value << m.version;
  out << YAML::Key << "d" << YAML::Value << m.d;
  out << YAML::Key << "container" << YAML::Value << m.container;
  emit_provenance(out, m.provenance);
  out << YAML::Key << "templates" << YAML::Value << YAML::BeginSeq;
  for (const ManifestEntry& e : m.templates) {
    out << YAML::BeginMap;
    out << YAML::Key << "id" << YAML::Value << e.template_id;
    out << YAML::Key << "subject" << YAML::Value << e.subject_id;
    out << YAML::Key << "distribution" << YAML::Value << std::string(to_string(e.distribution));
    out << YAML::Key << "split" << YAML::Value << std::string(to_string(e.split));
    out << YAML::Key << "rows" << YAML::Value << YAML::Flow << e.rows;
    if (!e.media.empty()) out << YAML::Key << "media" << YAML::Value << YAML::Flow << e.media;
    if (!e.quality.empty()) {
      out << YAML::Key << "quality" << YAML::Value << YAML::Flow << YAML::BeginSeq;
      for (const auto& q : e.quality) q ? out << *q : out << YAML::Null;
      out << YAML::EndSeq;
    }
    out << YAML::EndMap;
  }
  out << YAML::EndSeq << YAML::EndMap;
  return std::string(out.c_str()) + "\n";
}

Manifest parse_manifest(const std::string& text) {
  const YAML::Node root = parse_yaml(text, "manifest");
  check_keys(root, {"format_version", "d", "container", "templates", "provenance"}, "manifest");
  Manifest m;
  m.version = scalar<std::uint32_t>(require(root, "format_version", "manifest"), "format_version");
  if (m.version != kManifestVersion) throw VersionError("unsupported manifest version " + std::to_string(m.version));
  m.d = scalar<std::uint32_t>(require(root, "d", "manifest"), "d");
  m.container = scalar<std::string>(require(root, "container", "manifest"), "container");
  if (root["provenance"]) m.provenance = dump(root["provenance"]);
  const YAML::Node templates = require(root, "templates", "manifest");
  if (!templates.IsSequence()) throw SchemaError("templates must be a list");
  std::set<std::string> ids;
  for (const YAML::Node& t : templates) {
    check_keys(t, {"id", "subject", "distribution", "split", "rows", "media", "quality"}, "template entry");
    ManifestEntry e;
    e.template_id = scalar<std::string>(require(t, "id", "template entry"), "id");
    const std::string where = "template '" + e.template_id + "'";
    if (!ids.insert(e.template_id).second) throw SchemaError("duplicate template id '" + e.template_id + "'");
    e.subject_id = scalar<std::string>(require(t, "subject", where), "subject");
    e.distribution = parse_distribution(scalar<std::string>(require(t, "distribution", where), "distribution"));
    e.split = parse_split(scalar<std::string>(require(t, "split", where), "split"));
    e.rows = scalar<std::vector<std::uint64_t>>(require(t, "rows", where), where + " rows");
    if (t["media"]) {
      e.media = scalar<std::vector<std::string>>(t["media"], where + " media");
      if (e.media.size() != e.rows.size()) throw SchemaError(where + " needs one media id per row");
    }
    if (t["quality"]) {
      if (!t["quality"].IsSequence() || t["quality"].size() != e.rows.size())
        throw SchemaError(where + " needs one quality entry per row");
      for (const YAML::Node& q : t["quality"])
        e.quality.push_back(q.IsNull() ? std::nullopt : std::optional<double>(scalar<double>(q, where + " quality")));
    }
    m.templates.push_back(std::move(e));
  }
  return m;
}

void check_manifest(const Manifest& m, std::uint64_t container_rows) {
  std::vector<bool> claimed(container_rows, false);
  for (const ManifestEntry& e : m.templates)
    for (std::uint64_t r : e.rows) {
      if (r >= container_rows)
        throw SchemaError("template '" + e.template_id + "' refers to row " + std::to_string(r) + " of " +
                          std::to_string(container_rows));
      if (claimed[r]) throw SchemaError("row " + std::to_string(r) + " is claimed by more than one template");
      claimed[r] = true;
    }
}

std::filesystem::path save_dataset(const std::filesystem::path& manifest_path, const Dataset& ds,
                                   std::uint8_t float_width, const std::string& provenance) {
  std::filesystem::path container_path = manifest_path;
  container_path.replace_extension(".cnan");
  EmbeddingContainer c;
  c.d = static_cast<std::uint32_t>(ds.d);
  c.float_width = float_width;
  Manifest m;
  m.d = c.d;
  m.container = container_path.filename().string();
  m.provenance = provenance;
  for (const Template& t : ds.templates) {
    ManifestEntry e{t.id, t.subject_id, t.distribution, t.split, {}, {}, {}};
    bool any_quality = false;
    for (std::size_t i = 0; i < t.size(); ++i) {
      const Embedding& emb = t.embeddings[i];
      if (emb.vector.size() != ds.d) throw DimensionError("template '" + t.id + "' does not match the dataset d");
      e.rows.push_back(c.count++);
      c.values.insert(c.values.end(), emb.vector.begin(), emb.vector.end());
      e.media.push_back(emb.media_id);
      e.quality.push_back(emb.quality_hint);
      any_quality = any_quality || emb.quality_hint.has_value();
    }
    if (!any_quality) e.quality.clear();
    bool default_media = true;
    for (std::size_t i = 0; i < t.size(); ++i) default_media = default_media && e.media[i] == t.id + "/" + std::to_string(i);
    if (default_media) e.media.clear();
    m.templates.push_back(std::move(e));
  }
  write_container(container_path, c);
  write_text(manifest_path, emit_manifest(m));
  return manifest_path;
}

Dataset load_dataset(const std::filesystem::path& manifest_path) {
  const std::vector<std::uint8_t> text = read_file(manifest_path);
  const Manifest m = parse_manifest(std::string(text.begin(), text.end()));
  const EmbeddingContainer c = read_container(manifest_path.parent_path() / m.container);
  if (c.d != m.d) throw SchemaError("manifest d " + std::to_string(m.d) + " does not match container d " + std::to_string(c.d));
  check_manifest(m, c.count);
  Dataset ds;
  ds.d = m.d;
  for (const ManifestEntry& e : m.templates) {
    Template t{e.template_id, e.subject_id, e.distribution, e.split, {}};
    for (std::size_t i = 0; i < e.rows.size(); ++i) {
      Embedding emb;
      const auto row = c.row(e.rows[i]);
      emb.vector.assign(row.begin(), row.end());
      emb.media_id = e.media.empty() ? e.template_id + "/" + std::to_string(i) : e.media[i];
      if (!e.quality.empty()) emb.quality_hint = e.quality[i];
      t.embeddings.push_back(std::move(emb));
    }
    ds.templates.push_back(std::move(t));
  }
  return ds;
}

// --- checkpoint --------------------------------------------------------------

namespace {

struct TensorRecord {
  std::string name;
  const Tensor* value;
  std::optional<ParamGroup> group;
};

void emit_shape(YAML::Emitter& out, const Shape& s) { out << YAML::Flow << std::vector<std::size_t>(s.begin(), s.end()); }

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& c) {
  const ModelConfig& cfg = c.model.config;
  std::vector<TensorRecord> tensors;
  for (const auto& p : c.model.params.all()) tensors.push_back({p.name, &p.value, p.group});
  Tensor memory_matrix;
  if (c.trainer) {
    const TrainerState& t = *c.trainer;
    const auto& all = c.model.params.all();
    if (t.adam.m.size() != all.size() || t.adam.v.size() != all.size() || t.best.size() != all.size())
      throw DimensionError("trainer state does not match the model parameters");
    for (std::size_t i = 0; i < all.size(); ++i) tensors.push_back({"trainer.adam.m/" + all[i].name, &t.adam.m[i], {}});
    for (std::size_t i = 0; i < all.size(); ++i) tensors.push_back({"trainer.adam.v/" + all[i].name, &t.adam.v[i], {}});
    for (std::size_t i = 0; i < all.size(); ++i)
      tensors.push_back({"trainer.best/" + all[i].name, &t.best.all()[i].value, {}});
    if (!t.memory.empty()) {
      memory_matrix = t.memory.matrix();
      tensors.push_back({"trainer.memory", &memory_matrix, {}});
    }
  }

  YAML::Emitter out;
  out.SetDoublePrecision(17);
  out << YAML::BeginMap;
  out << YAML::Key << "format_version" << YAML::Value << kCheckpointVersion;
  out << YAML::Key << "model" << YAML::Value << YAML::BeginMap;
  out << YAML::Key << "d" << YAML::Value << cfg.d;
  out << YAML::Key << "heads" << YAML::Value << cfg.heads;
  out << YAML::Key << "hidden" << YAML::Value << YAML::Flow << std::vector<std::size_t>{cfg.hidden1(), cfg.hidden2()};
  out << YAML::Key << "summary_blocks" << YAML::Value << YAML::Flow << cfg.layout.names();
  out << YAML::Key << "probe_transform" << YAML::Value << cfg.probe_transform;
  out << YAML::Key << "softmax_temperature" << YAML::Value << cfg.softmax_temperature;
  out << YAML::EndMap;
  out << YAML::Key << "loss_temperature" << YAML::Value << c.tau;
  emit_provenance(out, c.provenance);

  std::size_t offset = 0;
  out << YAML::Key << "tensors" << YAML::Value << YAML::BeginSeq;
  for (const TensorRecord& t : tensors) {
    out << YAML::Flow << YAML::BeginMap << YAML::Key << "name" << YAML::Value << t.name;
    out << YAML::Key << "shape" << YAML::Value;
    emit_shape(out, t.value->shape());
    out << YAML::Key << "offset" << YAML::Value << offset;
    if (t.group) out << YAML::Key << "group" << YAML::Value << std::string(to_string(*t.group));
    out << YAML::EndMap;
    offset += t.value->size() * 8;
  }
  out << YAML::EndSeq;

  if (c.trainer) {
    const TrainerState& t = *c.trainer;
    out << YAML::Key << "trainer" << YAML::Value << YAML::BeginMap;
    out << YAML::Key << "epoch" << YAML::Value << t.epoch;
    out << YAML::Key << "since_improvement" << YAML::Value << t.since_improvement;
    out << YAML::Key << "best_val" << YAML::Value << t.best_val;
    out << YAML::Key << "best_epoch" << YAML::Value << t.best_epoch;
    out << YAML::Key << "adam_step" << YAML::Value << t.adam.step;
    out << YAML::Key << "rng" << YAML::Value << t.rng;
    out << YAML::Key << "memory_capacity" << YAML::Value << t.memory.capacity();
    out << YAML::Key << "memory" << YAML::Value << YAML::BeginSeq;
    for (const auto& e : t.memory.entries())
      out << YAML::Flow << std::vector<std::string>{e.subject_id, std::string(to_string(e.distribution))};
    out << YAML::EndSeq;
    out << YAML::Key << "history" << YAML::Value << YAML::BeginSeq;
    for (const auto& h : t.history)
      out << YAML::Flow << YAML::BeginSeq << h.epoch << h.loss << h.val_rank1 << h.wall_seconds << YAML::EndSeq;
    out << YAML::EndSeq;
    out << YAML::EndMap;
  }
  out << YAML::EndMap;
  const std::string header = std::string(out.c_str()) + "\n";

  Writer w;
  w.bytes(kCheckpointMagic, 8);
  w.u32(kCheckpointVersion);
  w.u64(header.size());
  const std::size_t start = w.out.size();
  w.bytes(header.data(), header.size());
  for (const TensorRecord& t : tensors)
    for (double v : t.value->values()) w.f64(v);
  w.u64(fnv1a64(w.out.data() + start, w.out.size() - start));
  return std::move(w.out);
}

Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes, const std::optional<ModelConfig>& expect) {
  if (!has_magic(bytes, kCheckpointMagic, 8)) throw SchemaError("not a checkpoint");
  if (bytes.size() < 28) throw IntegrityError("file is truncated");
  Reader r(bytes, bytes.size() - 8);
  r.text(8);
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) throw VersionError("unsupported checkpoint version " + std::to_string(version));
  const std::uint64_t header_len = r.u64();
  const std::size_t start = r.pos();
  {
    std::uint64_t stored = 0;
    for (int i = 0; i < 8; ++i) stored |= static_cast<std::uint64_t>(bytes[bytes.size() - 8 + i]) << (8 * i);
    if (stored != fnv1a64(bytes.data() + start, bytes.size() - 8 - start))
      throw IntegrityError("checkpoint checksum mismatch");
  }
  const std::string header = r.text(header_len);
  const std::size_t payload_start = r.pos();
  const std::size_t payload_len = bytes.size() - 8 - payload_start;

  const YAML::Node root = parse_yaml(header, "checkpoint header");
  check_keys(root, {"format_version", "model", "loss_temperature", "provenance", "tensors", "trainer"}, "checkpoint header");
  if (scalar<std::uint32_t>(require(root, "format_version", "checkpoint header"), "format_version") != version)
    throw SchemaError("header version disagrees with the file version");
  const YAML::Node mnode = require(root, "model", "checkpoint header");
  check_keys(mnode, {"d", "heads", "hidden", "summary_blocks", "probe_transform", "softmax_temperature"}, "model");
  ModelConfig cfg;
  cfg.d = scalar<std::size_t>(require(mnode, "d", "model"), "d");
  cfg.heads = scalar<std::size_t>(require(mnode, "heads", "model"), "heads");
  const auto hidden = scalar<std::vector<std::size_t>>(require(mnode, "hidden", "model"), "hidden");
  if (hidden.size() != 2) throw SchemaError("hidden must list two widths");
  cfg.hidden = {hidden[0], hidden[1]};
  cfg.layout = SummaryLayout::from_names(scalar<std::vector<std::string>>(require(mnode, "summary_blocks", "model"), "summary_blocks"));
  cfg.probe_transform = scalar<bool>(require(mnode, "probe_transform", "model"), "probe_transform");
  cfg.softmax_temperature = scalar<double>(require(mnode, "softmax_temperature", "model"), "softmax_temperature");
  try {
    cfg.check();
  } catch (const ParameterError& e) {
    throw SchemaError(std::string("checkpoint model settings are invalid: ") + e.what());
  }
  if (expect) {
    if (expect->d != cfg.d) throw SchemaError("checkpoint has d = " + std::to_string(cfg.d) + ", expected " + std::to_string(expect->d));
    if (expect->heads != cfg.heads) throw SchemaError("checkpoint head count differs from the expected model");
    if (!(expect->layout == cfg.layout)) throw SchemaError("checkpoint summary block order differs from the expected model");
  }

  Checkpoint c;
  c.tau = scalar<double>(require(root, "loss_temperature", "checkpoint header"), "loss_temperature");
  if (root["provenance"]) c.provenance = dump(root["provenance"]);
  c.model.config = cfg;

  std::map<std::string, Tensor> loaded;
  std::vector<std::string> order;
  std::map<std::string, std::string> groups;
  const YAML::Node tnode = require(root, "tensors", "checkpoint header");
  if (!tnode.IsSequence()) throw SchemaError("tensors must be a list");
  std::size_t expected_offset = 0;
  for (const YAML::Node& t : tnode) {
    check_keys(t, {"name", "shape", "offset", "group"}, "tensor entry");
    const std::string name = scalar<std::string>(require(t, "name", "tensor entry"), "tensor name");
    const Shape shape = scalar<std::vector<std::size_t>>(require(t, "shape", name), name + " shape");
    const std::size_t offset = scalar<std::size_t>(require(t, "offset", name), name + " offset");
    if (shape.empty() || shape.size() > 2) throw SchemaError("tensor '" + name + "' must have rank 1 or 2");
    std::size_t n = 1;
    for (std::size_t e : shape) n *= e;
    if (offset != expected_offset || offset + n * 8 > payload_len) throw SchemaError("tensor '" + name + "' lies outside the payload");
    expected_offset += n * 8;
    Reader pr(bytes, payload_start + offset + n * 8);
    pr.text(payload_start + offset);
    std::vector<double> values(n);
    for (double& v : values) v = pr.f64();
    if (loaded.count(name)) throw SchemaError("duplicate tensor '" + name + "'");
    loaded.emplace(name, Tensor(shape, std::move(values)));
    order.push_back(name);
    if (t["group"]) groups[name] = scalar<std::string>(t["group"], name + " group");
  }
  if (expected_offset != payload_len) throw SchemaError("payload length does not match the tensor directory");

  auto take = [&](const std::string& name, const Shape& shape) {
    auto it = loaded.find(name);
    if (it == loaded.end()) throw SchemaError("checkpoint lacks tensor '" + name + "'");
    if (it->second.shape() != shape) throw SchemaError("tensor '" + name + "' has the wrong shape");
    Tensor t = std::move(it->second);
    loaded.erase(it);
    return t;
  };
  const std::vector<ParamSpec> specs = param_specs(cfg);
  for (std::size_t i = 0; i < specs.size(); ++i) {
    if (i >= order.size() || order[i] != specs[i].name) throw SchemaError("checkpoint parameters are not in model order");
    if (groups[specs[i].name] != to_string(specs[i].group)) throw SchemaError("parameter '" + specs[i].name + "' has the wrong group");
    c.model.params.add(specs[i].name, take(specs[i].name, specs[i].shape), specs[i].group);
  }

  if (const YAML::Node tr = root["trainer"]) {
    check_keys(tr, {"epoch", "since_improvement", "best_val", "best_epoch", "adam_step", "rng", "memory_capacity", "memory", "history"},
               "trainer");
    TrainerState s;
    s.model = c.model;
    s.epoch = scalar<std::size_t>(require(tr, "epoch", "trainer"), "epoch");
    s.since_improvement = scalar<std::size_t>(require(tr, "since_improvement", "trainer"), "since_improvement");
    s.best_val = scalar<double>(require(tr, "best_val", "trainer"), "best_val");
    s.best_epoch = scalar<std::size_t>(require(tr, "best_epoch", "trainer"), "best_epoch");
    s.adam.step = scalar<std::uint64_t>(require(tr, "adam_step", "trainer"), "adam_step");
    s.rng = scalar<std::string>(require(tr, "rng", "trainer"), "rng");
    const std::size_t memory_capacity = scalar<std::size_t>(require(tr, "memory_capacity", "trainer"), "memory_capacity");
    for (const auto& spec : specs) {
      s.adam.m.push_back(take("trainer.adam.m/" + spec.name, spec.shape));
      s.adam.v.push_back(take("trainer.adam.v/" + spec.name, spec.shape));
    }
    for (const auto& spec : specs) s.best.add(spec.name, take("trainer.best/" + spec.name, spec.shape), spec.group);
    const YAML::Node mem = require(tr, "memory", "trainer");
    std::vector<MemoryEntry> entries;
    if (mem.size() > 0) {
      const Tensor z = take("trainer.memory", {mem.size(), cfg.d});
      for (const YAML::Node& e : mem) {
        const auto pair = scalar<std::vector<std::string>>(e, "memory entry");
        if (pair.size() != 2) throw SchemaError("memory entries are [subject, distribution]");
        const auto row = z.row(entries.size());
        entries.push_back(MemoryEntry{Tensor({cfg.d}, std::vector<double>(row.begin(), row.end())), pair[0],
                                      parse_distribution(pair[1])});
      }
    }
    try {
      s.memory = CrossBatchMemory::restore(memory_capacity, std::move(entries));
    } catch (const DimensionError& e) {
      throw SchemaError(std::string("trainer memory: ") + e.what());
    }
    for (const YAML::Node& h : require(tr, "history", "trainer")) {
      if (!h.IsSequence() || h.size() != 4) throw SchemaError("history rows are [epoch, loss, val_rank1, wall_seconds]");
      s.history.push_back({h[0].as<std::size_t>(), h[1].as<double>(), h[2].as<double>(), h[3].as<double>()});
    }
    c.trainer = std::move(s);
  }
  if (!loaded.empty()) throw SchemaError("checkpoint has unexpected tensor '" + loaded.begin()->first + "'");
  return c;
}

void write_checkpoint(const std::filesystem::path& path, const Checkpoint& c) { write_file(path, encode_checkpoint(c)); }

Checkpoint read_checkpoint(const std::filesystem::path& path, const std::optional<ModelConfig>& expect) {
  return decode_checkpoint(read_file(path), expect);
}

// --- files -------------------------------------------------------------------

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path.string() + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("cannot read '" + path.string() + "'");
  return bytes;
}

void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write '" + path.string() + "'");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("cannot write '" + path.string() + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move '" + tmp.string() + "' into place: " + ec.message());
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  write_file(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

}  // namespace conan::io
