#include "holmes/zoo.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "holmes/errors.hpp"
#include "holmes/rng.hpp"

namespace holmes {

namespace {

void validate_profile(const ModelProfile& p) {
    auto fail = [&](const std::string& field, const std::string& why) {
        throw InvalidArgument("profile '" + p.id + "': field '" + field + "' " + why);
    };
    if (p.id.empty()) fail("id", "must be non-empty");
    if (p.depth <= 0) fail("depth", "must be positive");
    if (p.width <= 0) fail("width", "must be positive");
    if (!(p.macs > 0.0) || !std::isfinite(p.macs)) fail("macs", "must be positive and finite");
    if (!(p.memory_mb > 0.0) || !std::isfinite(p.memory_mb)) fail("memory_mb", "must be positive and finite");
    if (p.modality.empty()) fail("modality", "must be non-empty");
    if (p.input_len <= 0) fail("input_len", "must be positive");
    if (!(p.target_auc > 0.5 && p.target_auc < 1.0)) fail("target_auc", "must lie in (0.5, 1.0)");
}

}  // namespace

ModelZoo::ModelZoo(std::vector<ModelProfile> profiles) : profiles_(std::move(profiles)) {
    std::set<std::string> seen;
    for (const auto& p : profiles_) {
        validate_profile(p);
        if (!seen.insert(p.id).second) throw InvalidArgument("zoo: duplicate id '" + p.id + "'");
    }
}

double ModelZoo::selected_macs(const Selector& b) const {
    require_length(b, size(), "selected_macs");
    double total = 0.0;
    for (std::size_t i = 0; i < size(); ++i)
        if (b[i]) total += profiles_[i].macs;
    return total;
}

std::size_t ModelZoo::index_of(const std::string& id) const {
    for (std::size_t i = 0; i < size(); ++i)
        if (profiles_[i].id == id) return i;
    throw InvalidArgument("zoo: unknown model id '" + id + "'");
}

std::string lead_modality(int lead) {
    static const char* roman[] = {"I", "II", "III"};
    if (lead >= 1 && lead <= 3) return std::string("ECG-") + roman[lead - 1];
    return "ECG-" + std::to_string(lead);
}

ModelZoo generate_zoo(int leads, const std::vector<int>& filter_grid, const std::vector<int>& block_grid,
                      std::uint64_t seed, const ZooGenOptions& opts) {
    if (leads < 1) throw InvalidArgument("generate_zoo: leads must be >= 1");
    if (filter_grid.empty()) throw InvalidArgument("generate_zoo: filter grid is empty");
    if (block_grid.empty()) throw InvalidArgument("generate_zoo: block grid is empty");
    for (int w : filter_grid)
        if (w <= 0) throw InvalidArgument("generate_zoo: filter grid values must be positive");
    for (int d : block_grid)
        if (d <= 0) throw InvalidArgument("generate_zoo: block grid values must be positive");
    if (opts.input_len <= 0 || !(opts.kappa > 0.0)) throw InvalidArgument("generate_zoo: bad cost model options");

    // Size rank of width*depth within one lead, ties sharing their average rank.
    std::vector<double> sizes;
    for (int w : filter_grid)
        for (int d : block_grid) sizes.push_back(static_cast<double>(w) * d);
    std::vector<double> sorted = sizes;
    std::sort(sorted.begin(), sorted.end());
    auto norm_rank = [&](double v) {
        if (sorted.size() < 2) return 0.0;
        auto lo = std::lower_bound(sorted.begin(), sorted.end(), v) - sorted.begin();
        auto hi = std::upper_bound(sorted.begin(), sorted.end(), v) - sorted.begin();
        double avg = 0.5 * static_cast<double>(lo + hi - 1);
        return avg / static_cast<double>(sorted.size() - 1);
    };

    Rng rng(derive_seed(seed, "zoo.target_auc"));
    std::uniform_real_distribution<double> noise(-opts.auc_noise, opts.auc_noise);

    std::vector<ModelProfile> out;
    out.reserve(static_cast<std::size_t>(leads) * sizes.size());
    for (int lead = 1; lead <= leads; ++lead) {
        for (int w : filter_grid) {
            for (int d : block_grid) {
                ModelProfile p;
                p.modality = lead_modality(lead);
                p.id = "ecg" + std::to_string(lead) + "_w" + std::to_string(w) + "_d" + std::to_string(d);
                p.width = w;
                p.depth = d;
                p.input_len = opts.input_len;
                p.macs = opts.kappa * w * d * static_cast<double>(opts.input_len);
                // Activations for one segment plus weights; carried, never enforced.
                p.memory_mb = 16.0 + 4.0 * static_cast<double>(opts.input_len) * w * 4.0 / (1024.0 * 1024.0) +
                              9.0 * w * w * d * 4.0 / (1024.0 * 1024.0);
                double base = 0.70 + 0.25 * norm_rank(static_cast<double>(w) * d);
                p.target_auc = std::clamp(base + noise(rng), 0.51, 0.99);
                out.push_back(std::move(p));
            }
        }
    }
    return ModelZoo(std::move(out));
}

namespace {

const std::vector<std::string> kProfileFields = {"id",       "depth",    "width",     "macs",
                                                 "memory_mb", "modality", "input_len", "target_auc"};

template <typename T>
T field(const nlohmann::json& obj, const std::string& name, std::size_t index) {
    auto where = "zoo[" + std::to_string(index) + "]." + name;
    auto it = obj.find(name);
    if (it == obj.end()) throw ParseError(where + ": missing field");
    try {
        if constexpr (std::is_same_v<T, int>) {
            if (!it->is_number_integer()) throw ParseError(where + ": expected integer");
        } else if constexpr (std::is_same_v<T, double>) {
            if (!it->is_number()) throw ParseError(where + ": expected number");
        } else {
            if (!it->is_string()) throw ParseError(where + ": expected string");
        }
        return it->get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(where + ": " + e.what());
    }
}

}  // namespace

std::string zoo_to_json(const ModelZoo& zoo) {
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (const auto& p : zoo.profiles()) {
        nlohmann::ordered_json o;
        o["id"] = p.id;
        o["depth"] = p.depth;
        o["width"] = p.width;
        o["macs"] = p.macs;
        o["memory_mb"] = p.memory_mb;
        o["modality"] = p.modality;
        o["input_len"] = p.input_len;
        o["target_auc"] = p.target_auc;
        arr.push_back(std::move(o));
    }
    return arr.dump(2) + "\n";
}

ModelZoo zoo_from_json(const std::string& text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("zoo: invalid JSON: ") + e.what());
    }
    if (!doc.is_array()) throw ParseError("zoo: top level must be an array of profiles");

    std::vector<ModelProfile> profiles;
    std::set<std::string> ids;
    for (std::size_t i = 0; i < doc.size(); ++i) {
        const auto& obj = doc[i];
        auto where = "zoo[" + std::to_string(i) + "]";
        if (!obj.is_object()) throw ParseError(where + ": expected object");
        for (auto it = obj.begin(); it != obj.end(); ++it)
            if (std::find(kProfileFields.begin(), kProfileFields.end(), it.key()) == kProfileFields.end())
                throw ParseError(where + "." + it.key() + ": unknown field");
        ModelProfile p;
        p.id = field<std::string>(obj, "id", i);
        p.depth = field<int>(obj, "depth", i);
        p.width = field<int>(obj, "width", i);
        p.macs = field<double>(obj, "macs", i);
        p.memory_mb = field<double>(obj, "memory_mb", i);
        p.modality = field<std::string>(obj, "modality", i);
        p.input_len = field<int>(obj, "input_len", i);
        p.target_auc = field<double>(obj, "target_auc", i);
        if (!ids.insert(p.id).second) throw ParseError(where + ".id: duplicate id '" + p.id + "'");
        try {
            validate_profile(p);
        } catch (const InvalidArgument& e) {
            throw ParseError(where + ": " + e.what());
        }
        profiles.push_back(std::move(p));
    }
    return ModelZoo(std::move(profiles));
}

void save_zoo(const ModelZoo& zoo, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InvalidArgument("save_zoo: cannot open '" + path.string() + "' for writing");
    out << zoo_to_json(zoo);
    if (!out) throw InvalidArgument("save_zoo: write failed for '" + path.string() + "'");
}

ModelZoo load_zoo(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InvalidArgument("load_zoo: cannot open '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return zoo_from_json(ss.str());
}

}  // namespace holmes
