#pragma once

#include <cstdint>
#include <string>
#include <utility>

#include "equiflow/targets.hpp"

namespace equiflow {

// Dataset file: one text header line
//   equiflow-dataset n=<n> d=<d> count=<count> kind=<kind> seed=<seed>
// followed by count * n * d little-endian f64 position records.
struct DatasetHeader {
  TargetKind kind = TargetKind::DW4;
  int n = 0;
  int d = 0;
  std::int64_t count = 0;
  std::uint64_t seed = 0;
};

void write_dataset(const std::string& path, const DatasetHeader& header, const Tensor& samples);
std::pair<DatasetHeader, Tensor> read_dataset(const std::string& path);

}  // namespace equiflow
