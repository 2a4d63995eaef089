#include "hazeforge/ad/checkpoint.hpp"

#include <fstream>

using nlohmann::json;

namespace hazeforge::ad {

void save_checkpoint(const Graph<float>& g, const std::string& prefix, int64_t step, const json& extra) {
    Checkpoint ck;
    ck.step = step;
    ck.extra = extra;
    for (const auto& [name, id] : g.parameters()) {
        ck.params.emplace_back(name, g.val(id));
        ck.shapes.push_back(g.shape(id));
    }
    save_checkpoint(ck, prefix);
}

void save_checkpoint(const Checkpoint& ck, const std::string& prefix) {
    json meta;
    meta["format_version"] = 1;
    meta["step"] = ck.step;
    meta["extra"] = ck.extra;
    json table = json::array();
    size_t offset = 0;
    for (size_t i = 0; i < ck.params.size(); ++i) {
        const auto& [name, data] = ck.params[i];
        const Shape& s = ck.shapes[i];
        table.push_back({{"name", name},
                         {"shape", {s.n, s.c, s.h, s.w}},
                         {"offset", offset},
                         {"count", data.size()}});
        offset += data.size();
    }
    meta["params"] = std::move(table);

    std::ofstream jf(prefix + ".json");
    if (!jf) throw IoError("checkpoint: cannot write " + prefix + ".json");
    jf << meta.dump(2) << "\n";

    std::ofstream bf(prefix + ".bin", std::ios::binary);
    if (!bf) throw IoError("checkpoint: cannot write " + prefix + ".bin");
    for (const auto& [name, data] : ck.params)
        bf.write(reinterpret_cast<const char*>(data.data()),
                 static_cast<std::streamsize>(data.size() * sizeof(float)));
    if (!bf) throw IoError("checkpoint: write failed for " + prefix + ".bin");
}

Checkpoint load_checkpoint(const std::string& prefix) {
    std::ifstream jf(prefix + ".json");
    if (!jf) throw IoError("checkpoint: missing " + prefix + ".json");
    json meta;
    try {
        jf >> meta;
    } catch (const json::exception& e) {
        throw FormatError("checkpoint: bad json in " + prefix + ".json: " + e.what());
    }
    if (meta.value("format_version", 0) != 1)
        throw FormatError("checkpoint: unsupported format version in " + prefix + ".json");

    Checkpoint ck;
    ck.step = meta.at("step").get<int64_t>();
    ck.extra = meta.value("extra", json::object());

    std::ifstream bf(prefix + ".bin", std::ios::binary);
    if (!bf) throw IoError("checkpoint: missing " + prefix + ".bin");
    for (const auto& rec : meta.at("params")) {
        const auto name = rec.at("name").get<std::string>();
        const auto count = rec.at("count").get<size_t>();
        const auto offset = rec.at("offset").get<size_t>();
        const auto& sh = rec.at("shape");
        Shape s{sh.at(0).get<int>(), sh.at(1).get<int>(), sh.at(2).get<int>(), sh.at(3).get<int>()};
        if (s.count() != count) throw FormatError("checkpoint: shape/count mismatch for " + name);
        std::vector<float> data(count);
        bf.seekg(static_cast<std::streamoff>(offset * sizeof(float)));
        bf.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(count * sizeof(float)));
        if (static_cast<size_t>(bf.gcount()) != count * sizeof(float))
            throw IntegrityError("checkpoint: truncated payload in " + prefix + ".bin at " + name);
        ck.params.emplace_back(name, std::move(data));
        ck.shapes.push_back(s);
    }
    return ck;
}

void apply_checkpoint(Graph<float>& g, const Checkpoint& ck) {
    const auto& params = g.parameters();
    for (size_t i = 0; i < ck.params.size(); ++i) {
        const auto& [name, data] = ck.params[i];
        auto it = params.find(name);
        if (it == params.end()) throw ConfigError("checkpoint: graph has no parameter '" + name + "'");
        if (g.val(it->second).size() != data.size())
            throw ShapeError("checkpoint: size mismatch for parameter '" + name + "'");
        g.set_leaf(it->second, std::span<const float>(data));
    }
}

Checkpoint average_checkpoints(const std::vector<Checkpoint>& cks) {
    if (cks.empty()) throw ConfigError("average_checkpoints: no checkpoints given");
    Checkpoint out = cks.front();
    for (size_t p = 0; p < out.params.size(); ++p) {
        auto& [name, dst] = out.params[p];
        std::vector<double> acc(dst.size(), 0.0);
        for (const auto& ck : cks) {
            if (ck.params.size() != out.params.size() || ck.params[p].first != name)
                throw ConfigError("average_checkpoints: parameter tables differ");
            const auto& src = ck.params[p].second;
            if (src.size() != dst.size()) throw ShapeError("average_checkpoints: size mismatch for " + name);
            for (size_t i = 0; i < src.size(); ++i) acc[i] += static_cast<double>(src[i]);
        }
        const double inv = 1.0 / static_cast<double>(cks.size());
        for (size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<float>(acc[i] * inv);
    }
    out.step = cks.back().step;
    return out;
}

}  // namespace hazeforge::ad
