#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "fdan/net.hpp"

namespace fdan {

// Checkpoint file: magic "FDAN", u16 version, little-endian throughout.
// Entries: u32 name length, UTF-8 name, u8 dtype (0=f32, 1=f64), u8 rank,
// u64 dims, row-major raw values. Rank-0 entries carry no values; metadata
// rides in their names as "meta.<key>=<value>".
struct NamedArray {
  std::string name;
  std::vector<uint64_t> dims;
  std::vector<double> f64;
};

void write_checkpoint_entries(const std::string& path,
                              const std::vector<std::pair<std::string, std::string>>& meta,
                              const std::vector<NamedArray>& arrays);
void read_checkpoint_entries(const std::string& path,
                             std::map<std::string, std::string>& meta_out,
                             std::vector<NamedArray>& arrays_out);

// Saves parameters plus optional extra arrays (optimizer state, rng) and
// extra metadata. Writing the same state twice is byte-identical.
void save_model(const std::string& path, const ModelParams& params,
                const std::vector<std::pair<std::string, std::string>>& extra_meta = {},
                const std::vector<NamedArray>& extra_arrays = {});

struct LoadedModel {
  ModelParams params;
  std::map<std::string, std::string> meta;
  std::vector<NamedArray> extra_arrays;  // entries not consumed by the model
};
LoadedModel load_model(const std::string& path);

}  // namespace fdan
