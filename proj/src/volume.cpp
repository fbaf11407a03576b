#include "survfuse/volume.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "survfuse/errors.hpp"

namespace survfuse {

using nlohmann::json;

void Volume::validate() const {
    for (long s : shape)
        if (s <= 0) throw DataError("volume shape must be positive per axis");
    for (double s : spacing)
        if (!(s > 0.0)) throw DataError("volume spacing must be positive");
    if (static_cast<long>(data.size()) != size())
        throw DataError("volume data length does not match shape");
}

Volume load_volume(const std::string& data_path, const std::string& sidecar_path) {
    std::ifstream side(sidecar_path);
    if (!side) throw DataError("cannot open sidecar: " + sidecar_path);
    json j = json::parse(side, nullptr, false);
    if (j.is_discarded()) throw DataError("malformed sidecar (invalid JSON): " + sidecar_path);
    Volume v;
    try {
        auto shape = j.at("shape").get<std::vector<long>>();
        if (shape.size() != 3) throw DataError("sidecar shape must have 3 entries");
        std::copy(shape.begin(), shape.end(), v.shape.begin());
        if (j.contains("spacing")) {
            auto sp = j.at("spacing").get<std::vector<double>>();
            if (sp.size() != 3) throw DataError("sidecar spacing must have 3 entries");
            std::copy(sp.begin(), sp.end(), v.spacing.begin());
        }
        if (j.contains("origin")) {
            auto org = j.at("origin").get<std::vector<double>>();
            if (org.size() != 3) throw DataError("sidecar origin must have 3 entries");
            std::copy(org.begin(), org.end(), v.origin.begin());
        }
    } catch (const json::exception& e) {
        throw DataError("malformed sidecar " + sidecar_path + ": " + e.what());
    }

    std::ifstream file(data_path, std::ios::binary);
    if (!file) throw DataError("cannot open volume data: " + data_path);
    file.seekg(0, std::ios::end);
    const long actual = static_cast<long>(file.tellg());
    const long expected = 4 * v.shape[0] * v.shape[1] * v.shape[2];
    if (actual != expected)
        throw DataError("volume size mismatch for " + data_path + ": expected " +
                        std::to_string(expected) + " bytes, found " + std::to_string(actual));
    file.seekg(0);
    std::vector<char> bytes(static_cast<std::size_t>(actual));
    file.read(bytes.data(), actual);
    if (!file) throw DataError("short read on " + data_path);
    v.data.resize(static_cast<std::size_t>(expected / 4));
    for (std::size_t i = 0; i < v.data.size(); ++i) {
        std::uint32_t bits = 0;
        for (int b = 0; b < 4; ++b)
            bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[4 * i + b])) << (8 * b);
        float f;
        std::memcpy(&f, &bits, 4);
        v.data[i] = static_cast<double>(f);
    }
    v.validate();
    return v;
}

void save_volume(const Volume& v, const std::string& data_path, const std::string& sidecar_path) {
    v.validate();
    json j;
    j["shape"] = std::vector<long>(v.shape.begin(), v.shape.end());
    j["spacing"] = std::vector<double>(v.spacing.begin(), v.spacing.end());
    j["origin"] = std::vector<double>(v.origin.begin(), v.origin.end());
    std::ofstream side(sidecar_path);
    if (!side) throw DataError("cannot write sidecar: " + sidecar_path);
    side << j.dump(2) << "\n";

    std::ofstream file(data_path, std::ios::binary);
    if (!file) throw DataError("cannot write volume data: " + data_path);
    std::vector<char> bytes(v.data.size() * 4);
    for (std::size_t i = 0; i < v.data.size(); ++i) {
        const float f = static_cast<float>(v.data[i]);
        std::uint32_t bits;
        std::memcpy(&bits, &f, 4);
        for (int b = 0; b < 4; ++b)
            bytes[4 * i + b] = static_cast<char>((bits >> (8 * b)) & 0xFF);
    }
    file.write(bytes.data(), static_cast<long>(bytes.size()));
    if (!file) throw DataError("short write on " + data_path);
}

namespace {

// Copies src into a zero target of the given shape, aligning centers; odd
// differences shift toward the low side in both directions.
Volume recenter(const Volume& src, std::array<long, 3> target) {
    Volume out;
    out.shape = target;
    out.spacing = src.spacing;
    out.origin = src.origin;
    out.data.assign(static_cast<std::size_t>(out.size()), 0.0);
    std::array<long, 3> src_lo{}, dst_lo{}, span{};
    for (int a = 0; a < 3; ++a) {
        if (src.shape[a] >= target[a]) {
            src_lo[a] = (src.shape[a] - target[a] + 1) / 2;
            dst_lo[a] = 0;
            span[a] = target[a];
        } else {
            src_lo[a] = 0;
            dst_lo[a] = (target[a] - src.shape[a] + 1) / 2;
            span[a] = src.shape[a];
        }
    }
    for (long d = 0; d < span[0]; ++d)
        for (long h = 0; h < span[1]; ++h) {
            const double* s = &src.data[((src_lo[0] + d) * src.shape[1] + src_lo[1] + h) *
                                            src.shape[2] +
                                        src_lo[2]];
            double* t = &out.data[((dst_lo[0] + d) * out.shape[1] + dst_lo[1] + h) * out.shape[2] +
                                  dst_lo[2]];
            std::copy(s, s + span[2], t);
        }
    return out;
}

}  // namespace

Volume crop_to_box(const Volume& v, const BoundingBox& box, std::array<long, 3> target_dhw) {
    v.validate();
    for (int a = 0; a < 3; ++a) {
        if (box.min[a] >= box.max[a])
            throw DataError("degenerate bounding box: min >= max on an axis");
        if (box.min[a] < 0 || box.max[a] > v.shape[a])
            throw DataError("bounding box outside volume bounds");
        if (target_dhw[a] <= 0) throw ConfigError("crop target must be positive");
    }
    Volume region;
    region.shape = box.extent();
    region.spacing = v.spacing;
    region.origin = v.origin;
    region.data.resize(static_cast<std::size_t>(region.size()));
    for (long d = 0; d < region.shape[0]; ++d)
        for (long h = 0; h < region.shape[1]; ++h) {
            const double* s =
                &v.data[((box.min[0] + d) * v.shape[1] + box.min[1] + h) * v.shape[2] + box.min[2]];
            std::copy(s, s + region.shape[2], &region.at(d, h, 0));
        }
    return recenter(region, target_dhw);
}

Volume normalize(const Volume& v, NormalizeMethod method) {
    v.validate();
    Volume out = v;
    if (method == NormalizeMethod::MinMax) {
        const auto [lo_it, hi_it] = std::minmax_element(v.data.begin(), v.data.end());
        const double lo = *lo_it, hi = *hi_it;
        if (hi == lo) {
            std::fill(out.data.begin(), out.data.end(), 0.0);
        } else {
            // divide rather than multiply by a reciprocal: keeps max at exactly 1.0
            const double range = hi - lo;
            for (double& x : out.data) x = (x - lo) / range;
        }
    } else {
        double mean = 0.0;
        for (double x : v.data) mean += x;
        mean /= static_cast<double>(v.data.size());
        double var = 0.0;
        for (double x : v.data) var += (x - mean) * (x - mean);
        var /= static_cast<double>(v.data.size());
        if (var == 0.0) {
            std::fill(out.data.begin(), out.data.end(), 0.0);
        } else {
            const double inv = 1.0 / std::sqrt(var);
            for (double& x : out.data) x = (x - mean) * inv;
        }
    }
    return out;
}

Volume fuse(const Volume& ct, const Volume& pet) {
    ct.validate();
    pet.validate();
    if (ct.shape != pet.shape) throw DataError("fuse: volume shapes differ");
    Volume out = ct;
    for (std::size_t i = 0; i < out.data.size(); ++i)
        out.data[i] = 0.5 * (ct.data[i] + pet.data[i]);
    return out;
}

Volume center_crop(const Volume& v, std::array<long, 3> target_whd) {
    v.validate();
    const std::array<long, 3> target_dhw{target_whd[2], target_whd[1], target_whd[0]};
    for (int a = 0; a < 3; ++a) {
        if (target_dhw[a] <= 0) throw ConfigError("crop target must be positive");
        if (target_dhw[a] > v.shape[a])
            throw DataError("center_crop target exceeds source shape");
    }
    return recenter(v, target_dhw);
}

std::map<std::string, BoundingBox> load_bounding_boxes(const std::string& csv_path) {
    std::ifstream file(csv_path);
    if (!file) throw DataError("cannot open bounding-box csv: " + csv_path);
    std::map<std::string, BoundingBox> out;
    std::string line;
    bool first = true;
    long lineno = 0;
    while (std::getline(file, line)) {
        ++lineno;
        while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(cell);
        if (first) {
            first = false;
            if (!cells.empty() && cells[0] == "PatientID") continue;  // header optional
        }
        if (cells.size() != 7)
            throw DataError("bounding-box csv line " + std::to_string(lineno) +
                            ": expected 7 fields, got " + std::to_string(cells.size()));
        BoundingBox box;
        long vals[6];
        for (int i = 0; i < 6; ++i) {
            try {
                std::size_t pos = 0;
                vals[i] = std::stol(cells[static_cast<std::size_t>(i) + 1], &pos);
                if (pos != cells[static_cast<std::size_t>(i) + 1].size()) throw std::invalid_argument("");
            } catch (const std::exception&) {
                throw DataError("bounding-box csv line " + std::to_string(lineno) +
                                ": non-integer coordinate '" + cells[static_cast<std::size_t>(i) + 1] +
                                "'");
            }
        }
        // columns are x1,y1,z1,x2,y2,z2 with (x, y, z) = (W, H, D)
        box.min = {vals[2], vals[1], vals[0]};
        box.max = {vals[5], vals[4], vals[3]};
        if (!out.emplace(cells[0], box).second)
            throw DataError("duplicate patient id in bounding-box csv: " + cells[0]);
    }
    return out;
}

}  // namespace survfuse
