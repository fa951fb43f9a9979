#include "hairshift/tensor_io.hpp"

#include <fstream>

#include "hairshift/errors.hpp"
#include "json.hpp"

namespace hairshift {

namespace fs = std::filesystem;
using nlohmann::json;

void save_tensor(const fs::path& dir, const std::string& name, const Tensor& t) {
    fs::create_directories(dir);
    json header;
    header["name"] = name;
    header["dtype"] = "f32";
    header["shape"] = t.shape();
    header["layout"] = "row-major";
    header["endianness"] = "little";
    {
        std::ofstream jf(dir / (name + ".json"));
        if (!jf) throw IoError("cannot write tensor header for " + name);
        jf << header.dump(2) << "\n";
    }
    std::ofstream bf(dir / (name + ".bin"), std::ios::binary);
    if (!bf) throw IoError("cannot write tensor blob for " + name);
    std::vector<float> narrow(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) narrow[i] = static_cast<float>(t[i]);
    bf.write(reinterpret_cast<const char*>(narrow.data()),
             static_cast<std::streamsize>(narrow.size() * sizeof(float)));
    if (!bf) throw IoError("short write on tensor blob for " + name);
}

Tensor load_tensor(const fs::path& dir, const std::string& name) {
    std::ifstream jf(dir / (name + ".json"));
    if (!jf) throw IoError("missing tensor header: " + (dir / (name + ".json")).string());
    json header;
    try {
        jf >> header;
    } catch (const json::exception& e) {
        throw IoError("bad tensor header for " + name + ": " + e.what());
    }
    if (header.value("dtype", "") != "f32" || header.value("layout", "") != "row-major" ||
        header.value("endianness", "") != "little")
        throw IoError("unsupported tensor encoding for " + name);
    std::vector<std::size_t> shape = header.at("shape").get<std::vector<std::size_t>>();
    const std::size_t n = Tensor::count(shape);

    std::ifstream bf(dir / (name + ".bin"), std::ios::binary);
    if (!bf) throw IoError("missing tensor blob: " + (dir / (name + ".bin")).string());
    std::vector<float> narrow(n);
    bf.read(reinterpret_cast<char*>(narrow.data()), static_cast<std::streamsize>(n * sizeof(float)));
    if (static_cast<std::size_t>(bf.gcount()) != n * sizeof(float))
        throw IoError("tensor blob truncated for " + name);
    Tensor t(shape);
    for (std::size_t i = 0; i < n; ++i) t[i] = static_cast<double>(narrow[i]);
    return t;
}

bool tensor_exists(const fs::path& dir, const std::string& name) {
    return fs::exists(dir / (name + ".json")) && fs::exists(dir / (name + ".bin"));
}

}  // namespace hairshift
