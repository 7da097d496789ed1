#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "equiflow/params.hpp"

namespace equiflow {

// Checkpoint = <stem>.weights (versioned binary container of named little-
// endian f64 tensors) + <stem>.manifest (text key = value pairs).

void write_manifest(const std::string& path, const std::map<std::string, std::string>& kv);
std::map<std::string, std::string> read_manifest(const std::string& path);

void write_tensor_container(const std::string& path,
                            const std::vector<std::pair<std::string, Tensor>>& tensors);
std::vector<std::pair<std::string, Tensor>> read_tensor_container(const std::string& path);

struct Checkpoint {
  std::map<std::string, std::string> manifest;
  std::vector<std::pair<std::string, Tensor>> tensors;

  const Tensor* find(const std::string& name) const;
};

void save_checkpoint(const std::string& stem, const ParamStore& store,
                     const std::map<std::string, std::string>& manifest,
                     const std::vector<std::pair<std::string, Tensor>>& extra = {});
Checkpoint load_checkpoint(const std::string& stem);

// Copies tensors into the store by name; every store entry must be present
// with a matching shape.
void load_into_store(const Checkpoint& ckpt, ParamStore& store);

}  // namespace equiflow
