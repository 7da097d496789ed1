#include "equiflow/dataset.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace equiflow {

void write_dataset(const std::string& path, const DatasetHeader& header, const Tensor& samples) {
  if (samples.shape() != Shape{header.count, header.n, header.d})
    throw std::invalid_argument("dataset: samples shape does not match the header");
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path);
  os << "equiflow-dataset n=" << header.n << " d=" << header.d << " count=" << header.count
     << " kind=" << to_string(header.kind) << " seed=" << header.seed << "\n";
  os.write(reinterpret_cast<const char*>(samples.data()),
           static_cast<std::streamsize>(samples.size()) * static_cast<std::streamsize>(sizeof(double)));
  if (!os) throw std::runtime_error("dataset: short write to " + path);
}

std::pair<DatasetHeader, Tensor> read_dataset(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read " + path);
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("dataset: missing header in " + path);
  std::istringstream hs(line);
  std::string tag;
  hs >> tag;
  if (tag != "equiflow-dataset") throw std::runtime_error("dataset: bad header in " + path);
  DatasetHeader header;
  std::string field;
  while (hs >> field) {
    const auto eq = field.find('=');
    if (eq == std::string::npos) throw std::runtime_error("dataset: bad header field " + field);
    const std::string key = field.substr(0, eq), value = field.substr(eq + 1);
    if (key == "n") header.n = std::stoi(value);
    else if (key == "d") header.d = std::stoi(value);
    else if (key == "count") header.count = std::stoll(value);
    else if (key == "kind") header.kind = target_kind_from_string(value);
    else if (key == "seed") header.seed = std::stoull(value);
    else throw std::runtime_error("dataset: unknown header field " + key);
  }
  if (header.n < 2 || header.d < 2 || header.count < 0)
    throw std::runtime_error("dataset: invalid header values in " + path);
  Tensor samples(Shape{header.count, header.n, header.d});
  is.read(reinterpret_cast<char*>(samples.data()),
          static_cast<std::streamsize>(samples.size()) * static_cast<std::streamsize>(sizeof(double)));
  if (!is) throw std::runtime_error("dataset: truncated records in " + path);
  return {header, std::move(samples)};
}

}  // namespace equiflow
