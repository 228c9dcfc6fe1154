#include "tinyrec/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

static_assert(std::endian::native == std::endian::little,
              "checkpoint blob writer assumes a little-endian host");

namespace tinyrec {

const std::string* CheckpointData::find_meta(const std::string& key) const {
    for (const auto& [k, v] : meta)
        if (k == key) return &v;
    return nullptr;
}

const Tensor* CheckpointData::find_tensor(const std::string& name) const {
    for (const auto& nt : tensors)
        if (nt.name == name) return &nt.tensor;
    return nullptr;
}

void save_checkpoint(const std::string& stem, const std::vector<NamedTensor>& tensors,
                     const std::vector<std::pair<std::string, std::string>>& meta) {
    std::ofstream manifest(stem + ".manifest");
    if (!manifest) throw std::runtime_error("save_checkpoint: cannot open " + stem + ".manifest");
    for (const auto& [k, v] : meta) {
        if (k.find(' ') != std::string::npos)
            throw std::invalid_argument("save_checkpoint: meta key contains a space: " + k);
        manifest << "#meta " << k << " " << v << "\n";
    }
    std::ofstream blob(stem + ".bin", std::ios::binary);
    if (!blob) throw std::runtime_error("save_checkpoint: cannot open " + stem + ".bin");
    for (const auto& nt : tensors) {
        if (nt.name.find(' ') != std::string::npos)
            throw std::invalid_argument("save_checkpoint: tensor name contains a space: " + nt.name);
        manifest << nt.name << " f64";
        for (int d : nt.tensor.shape()) manifest << " " << d;
        manifest << "\n";
        const auto vals = nt.tensor.values();
        blob.write(reinterpret_cast<const char*>(vals.data()),
                   static_cast<std::streamsize>(vals.size() * sizeof(double)));
    }
    if (!manifest || !blob) throw std::runtime_error("save_checkpoint: write failed for " + stem);
}

CheckpointData load_checkpoint(const std::string& stem) {
    std::ifstream manifest(stem + ".manifest");
    if (!manifest) throw std::runtime_error("load_checkpoint: cannot open " + stem + ".manifest");
    std::ifstream blob(stem + ".bin", std::ios::binary);
    if (!blob) throw std::runtime_error("load_checkpoint: cannot open " + stem + ".bin");

    CheckpointData out;
    std::string line;
    while (std::getline(manifest, line)) {
        if (line.empty()) continue;
        std::istringstream is(line);
        std::string head;
        is >> head;
        if (head == "#meta") {
            std::string key;
            is >> key;
            std::string value;
            std::getline(is, value);
            if (!value.empty() && value.front() == ' ') value.erase(0, 1);
            out.meta.emplace_back(key, value);
            continue;
        }
        std::string dtype;
        is >> dtype;
        if (dtype != "f64")
            throw std::runtime_error("load_checkpoint: unsupported dtype '" + dtype + "' for " + head);
        Shape shape;
        int d;
        while (is >> d) shape.push_back(d);
        const auto count = static_cast<size_t>(shape_numel(shape));
        std::vector<double> data(count);
        blob.read(reinterpret_cast<char*>(data.data()),
                  static_cast<std::streamsize>(count * sizeof(double)));
        if (static_cast<size_t>(blob.gcount()) != count * sizeof(double))
            throw std::runtime_error("load_checkpoint: blob truncated at tensor " + head);
        out.tensors.push_back({head, Tensor::from(std::move(shape), std::move(data))});
    }
    // the blob must be fully consumed
    blob.peek();
    if (!blob.eof()) throw std::runtime_error("load_checkpoint: trailing bytes in " + stem + ".bin");
    return out;
}

uint64_t params_fingerprint(const std::vector<NamedTensor>& tensors) {
    uint64_t h = 0xcbf29ce484222325ULL;
    auto mix = [&h](const void* p, size_t n) {
        const auto* bytes = static_cast<const unsigned char*>(p);
        for (size_t i = 0; i < n; ++i) {
            h ^= bytes[i];
            h *= 0x100000001b3ULL;
        }
    };
    for (const auto& nt : tensors) {
        mix(nt.name.data(), nt.name.size());
        for (int d : nt.tensor.shape()) mix(&d, sizeof(d));
        const auto vals = nt.tensor.values();
        mix(vals.data(), vals.size() * sizeof(double));
    }
    return h;
}

}  // namespace tinyrec
