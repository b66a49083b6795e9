#include "featsim/checkpoint.hpp"

#include <fstream>

#include "featsim/error.hpp"
#include "featsim/tsr.hpp"

namespace featsim::checkpoint {

namespace fs = std::filesystem;
using nlohmann::json;

void save(const fs::path& dir, const std::string& kind, const json& config, const std::vector<const Parameter*>& params) {
    fs::create_directories(dir);
    json list = json::array();
    for (std::size_t i = 0; i < params.size(); ++i) {
        const Parameter& p = *params[i];
        const std::string file = p.name() + ".tsr";
        tsr::write(p.value(), dir / file);
        list.push_back({{"name", p.name()}, {"file", file}, {"shape", p.value().shape()}});
    }
    const json manifest{{"format", "featsim-checkpoint-1"}, {"kind", kind}, {"config", config}, {"parameters", list}};
    std::ofstream f(dir / "manifest.json", std::ios::trunc);
    if (!f) throw RuntimeError("cannot write " + (dir / "manifest.json").string());
    f << manifest.dump(2) << '\n';
}

Contents load(const fs::path& dir) {
    const fs::path mpath = dir / "manifest.json";
    std::ifstream f(mpath);
    if (!f) throw RuntimeError("checkpoint manifest not found: " + mpath.string());
    Contents c;
    json manifest;
    try {
        manifest = json::parse(f);
        c.kind = manifest.at("kind").get<std::string>();
        c.config = manifest.at("config");
        for (const auto& e : manifest.at("parameters")) {
            const auto name = e.at("name").get<std::string>();
            const auto file = e.at("file").get<std::string>();
            const auto shape = e.at("shape").get<Shape>();
            if (file.find('/') != std::string::npos || file.find("..") != std::string::npos)
                throw RuntimeError("checkpoint " + dir.string() + ": parameter file '" + file + "' escapes the directory");
            Tensor t = tsr::read_tensor(dir / file);
            if (t.shape() != shape)
                throw RuntimeError("checkpoint " + dir.string() + ": parameter '" + name + "' has shape " +
                                   shape_to_string(t.shape()) + " on disk but " + shape_to_string(shape) +
                                   " in the manifest");
            c.parameters.push_back({name, std::move(t)});
        }
    } catch (const json::exception& e) {
        throw RuntimeError("corrupt checkpoint manifest " + mpath.string() + ": " + e.what());
    }
    return c;
}

void assign(const Contents& contents, const std::vector<Parameter*>& params) {
    if (contents.parameters.size() != params.size())
        throw RuntimeError("checkpoint lists " + std::to_string(contents.parameters.size()) +
                           " parameters, architecture has " + std::to_string(params.size()));
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto& e = contents.parameters[i];
        if (e.name != params[i]->name())
            throw RuntimeError("checkpoint parameter " + std::to_string(i) + " is '" + e.name + "', expected '" +
                               params[i]->name() + "'");
        if (e.value.shape() != params[i]->value().shape())
            throw RuntimeError("checkpoint parameter '" + e.name + "' has shape " + shape_to_string(e.value.shape()) +
                               ", architecture expects " + shape_to_string(params[i]->value().shape()));
    }
    for (std::size_t i = 0; i < params.size(); ++i) params[i]->mutable_value() = contents.parameters[i].value;
}

bool exists(const fs::path& dir) { return fs::exists(dir / "manifest.json"); }

}  // namespace featsim::checkpoint
