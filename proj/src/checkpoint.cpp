#include "fdan/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "fdan/util.hpp"

namespace fdan {

namespace {

constexpr char kMagic[4] = {'F', 'D', 'A', 'N'};
constexpr uint16_t kVersion = 1;
constexpr char kAlphabetSep = '\x1f';

void put_u16(std::ostream& os, uint16_t v) {
  char b[2] = {static_cast<char>(v & 0xff), static_cast<char>(v >> 8)};
  os.write(b, 2);
}
void put_u32(std::ostream& os, uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(b, 4);
}
void put_u64(std::ostream& os, uint64_t v) {
  char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  os.write(b, 8);
}
void put_f64(std::ostream& os, double d) {
  uint64_t bits;
  std::memcpy(&bits, &d, 8);
  put_u64(os, bits);
}

uint16_t get_u16(std::istream& is) {
  unsigned char b[2];
  is.read(reinterpret_cast<char*>(b), 2);
  return static_cast<uint16_t>(b[0] | (b[1] << 8));
}
uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}
uint64_t get_u64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}
double get_f64(std::istream& is) {
  uint64_t bits = get_u64(is);
  double d;
  std::memcpy(&d, &bits, 8);
  return d;
}

}  // namespace

void write_checkpoint_entries(const std::string& path,
                              const std::vector<std::pair<std::string, std::string>>& meta,
                              const std::vector<NamedArray>& arrays) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write checkpoint: " + path);
  os.write(kMagic, 4);
  put_u16(os, kVersion);
  for (const auto& [k, v] : meta) {
    std::string name = "meta." + k + "=" + v;
    put_u32(os, static_cast<uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    os.put(1);  // dtype f64
    os.put(0);  // rank 0: no dims, no data
  }
  for (const auto& a : arrays) {
    put_u32(os, static_cast<uint32_t>(a.name.size()));
    os.write(a.name.data(), static_cast<std::streamsize>(a.name.size()));
    os.put(1);
    os.put(static_cast<char>(a.dims.size()));
    uint64_t n = 1;
    for (uint64_t d : a.dims) {
      put_u64(os, d);
      n *= d;
    }
    if (n != a.f64.size())
      throw std::logic_error("checkpoint: dims do not match data for " + a.name);
    for (double v : a.f64) put_f64(os, v);
  }
  if (!os) throw std::runtime_error("checkpoint write failed: " + path);
}

void read_checkpoint_entries(const std::string& path,
                             std::map<std::string, std::string>& meta_out,
                             std::vector<NamedArray>& arrays_out) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open checkpoint: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0)
    throw std::runtime_error("not a FDAN checkpoint: " + path);
  uint16_t version = get_u16(is);
  if (version != kVersion)
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(version));
  while (true) {
    uint32_t name_len = get_u32(is);
    if (!is) break;
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    int dtype = is.get();
    int rank = is.get();
    if (!is) throw std::runtime_error("truncated checkpoint: " + path);
    if (dtype != 0 && dtype != 1)
      throw std::runtime_error("checkpoint: unknown dtype code in " + name);
    NamedArray a;
    a.name = name;
    uint64_t n = 1;
    for (int r = 0; r < rank; ++r) {
      a.dims.push_back(get_u64(is));
      n *= a.dims.back();
    }
    if (rank == 0) {
      if (name.rfind("meta.", 0) == 0) {
        std::string body = name.substr(5);
        size_t eq = body.find('=');
        if (eq == std::string::npos)
          throw std::runtime_error("checkpoint: malformed meta entry " + name);
        meta_out[body.substr(0, eq)] = body.substr(eq + 1);
        continue;
      }
      n = 0;
    }
    a.f64.resize(n);
    for (uint64_t i = 0; i < n; ++i)
      a.f64[i] = dtype == 1 ? get_f64(is) : static_cast<double>([&] {
        uint32_t bits = get_u32(is);
        float f;
        std::memcpy(&f, &bits, 4);
        return f;
      }());
    if (!is) throw std::runtime_error("truncated checkpoint: " + path);
    arrays_out.push_back(std::move(a));
  }
}

namespace {

std::string join_ints(const std::vector<int>& v) {
  std::ostringstream os;
  for (size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
  return os.str();
}

std::vector<int> parse_ints(const std::string& s) {
  std::vector<int> out;
  for (const auto& p : split(s, ','))
    if (!trim(p).empty()) out.push_back(std::stoi(trim(p)));
  return out;
}

std::string join_strings(const std::vector<std::string>& v, char sep) {
  std::string out;
  for (size_t i = 0; i < v.size(); ++i) {
    if (i) out += sep;
    out += v[i];
  }
  return out;
}

}  // namespace

void save_model(const std::string& path, const ModelParams& params,
                const std::vector<std::pair<std::string, std::string>>& extra_meta,
                const std::vector<NamedArray>& extra_arrays) {
  std::vector<std::pair<std::string, std::string>> meta;
  const ModelConfig& c = params.cfg;
  meta.emplace_back("alphabet", join_strings(params.vocab.characters(), kAlphabetSep));
  meta.emplace_back("classes", join_strings(params.vocab.entity_classes(), ','));
  meta.emplace_back("root", params.vocab.root_class());
  meta.emplace_back("d", std::to_string(c.d));
  meta.emplace_back("layers", std::to_string(c.layers));
  meta.emplace_back("heads", std::to_string(c.heads));
  meta.emplace_back("ffn_mult", std::to_string(c.ffn_mult));
  meta.emplace_back("enc_channels", join_ints(c.encoder_channels()));
  meta.emplace_back("l_max", std::to_string(c.l_max));
  meta.emplace_back("n_max_line", std::to_string(c.n_max_line));
  meta.emplace_back("n_max_flat", std::to_string(c.n_max_flat));
  meta.emplace_back("variant", to_string(c.variant));
  meta.emplace_back("seed", std::to_string(c.seed));
  for (const auto& kv : extra_meta) meta.push_back(kv);

  std::vector<NamedArray> arrays;
  for (const auto& [name, t] : params.named_params()) {
    NamedArray a;
    a.name = name;
    for (int s : t->shape) a.dims.push_back(static_cast<uint64_t>(s));
    a.f64 = t->val;
    arrays.push_back(std::move(a));
  }
  for (const auto& a : extra_arrays) arrays.push_back(a);
  write_checkpoint_entries(path, meta, arrays);
}

LoadedModel load_model(const std::string& path) {
  std::map<std::string, std::string> meta;
  std::vector<NamedArray> arrays;
  read_checkpoint_entries(path, meta, arrays);

  auto need = [&](const std::string& k) -> const std::string& {
    auto it = meta.find(k);
    if (it == meta.end())
      throw std::runtime_error("checkpoint missing meta key '" + k + "': " + path);
    return it->second;
  };

  std::vector<std::string> chars;
  for (const auto& s : split(need("alphabet"), kAlphabetSep))
    if (!s.empty()) chars.push_back(s);
  std::vector<std::string> classes;
  for (const auto& s : split(need("classes"), ','))
    if (!trim(s).empty()) classes.push_back(trim(s));
  Vocabulary vocab = classes.empty() ? Vocabulary::chars_only(chars)
                                     : Vocabulary::with_layout(chars, classes, need("root"));

  ModelConfig cfg;
  cfg.d = std::stoi(need("d"));
  cfg.layers = std::stoi(need("layers"));
  cfg.heads = std::stoi(need("heads"));
  cfg.ffn_mult = std::stoi(need("ffn_mult"));
  cfg.enc_channels = parse_ints(need("enc_channels"));
  cfg.l_max = std::stoi(need("l_max"));
  cfg.n_max_line = std::stoi(need("n_max_line"));
  cfg.n_max_flat = std::stoi(need("n_max_flat"));
  cfg.variant = variant_from_string(need("variant"));
  cfg.seed = std::stoull(need("seed"));

  LoadedModel lm{ModelParams::init(cfg, vocab), std::move(meta), {}};
  std::map<std::string, NamedArray*> by_name;
  for (auto& a : arrays) by_name[a.name] = &a;
  std::set<std::string> consumed;
  for (auto& [name, t] : lm.params.named_params()) {
    auto it = by_name.find(name);
    if (it == by_name.end())
      throw std::runtime_error("checkpoint missing parameter '" + name + "': " + path);
    if (static_cast<int64_t>(it->second->f64.size()) != t->size())
      throw std::runtime_error("checkpoint parameter '" + name + "' has wrong size");
    t->val = it->second->f64;
    consumed.insert(name);
  }
  for (auto& a : arrays)
    if (!consumed.count(a.name)) lm.extra_arrays.push_back(std::move(a));
  return lm;
}

}  // namespace fdan
