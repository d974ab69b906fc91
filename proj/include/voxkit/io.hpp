#pragma once

#include <fstream>
#include <string>

#include "voxkit/patch.hpp"
#include "voxkit/voxelize.hpp"

namespace voxkit {

// Raw LiDAR scan: little-endian float32 groups of (x, y, z, intensity).
inline PointCloud read_lidar_bin(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open scan file: " + path);
    in.seekg(0, std::ios::end);
    const std::streamoff bytes = in.tellg();
    in.seekg(0, std::ios::beg);
    if (bytes % (4 * sizeof(float)) != 0)
        throw ConfigError("scan file size is not a multiple of 16 bytes: " + path);
    const size_t n = size_t(bytes) / (4 * sizeof(float));
    PointCloud pc;
    pc.points.resize(n);
    pc.intensity.resize(n);
    for (size_t i = 0; i < n; ++i) {
        float rec[4];
        in.read(reinterpret_cast<char*>(rec), sizeof(rec));
        pc.points[i] = {rec[0], rec[1], rec[2]};
        pc.intensity[i] = rec[3];
    }
    if (!in) throw ConfigError("truncated scan file: " + path);
    return pc;
}

inline void write_lidar_bin(const std::string& path, const PointCloud& pc) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write scan file: " + path);
    for (size_t i = 0; i < pc.points.size(); ++i) {
        float rec[4] = {pc.points[i][0], pc.points[i][1], pc.points[i][2],
                        pc.intensity.empty() ? 0.0f : pc.intensity[i]};
        out.write(reinterpret_cast<const char*>(rec), sizeof(rec));
    }
}

// Binary PPM (P6), 8 bits per channel; pixels normalized to [0,1] on load.
inline Image<float> read_ppm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open image file: " + path);
    std::string magic;
    in >> magic;
    if (magic != "P6") throw ConfigError("expected a binary PPM (P6) image: " + path);
    int w = 0, h = 0, maxval = 0;
    auto next_int = [&](int& v) {
        // skip whitespace and '#' comment lines
        for (;;) {
            in >> std::ws;
            if (in.peek() == '#') {
                std::string line;
                std::getline(in, line);
                continue;
            }
            in >> v;
            return;
        }
    };
    next_int(w);
    next_int(h);
    next_int(maxval);
    if (!in || w < 1 || h < 1 || maxval != 255)
        throw ConfigError("unsupported PPM header in " + path);
    in.get();  // single whitespace after maxval
    Image<float> img(h, w);
    std::vector<unsigned char> raw(size_t(w) * size_t(h) * 3);
    in.read(reinterpret_cast<char*>(raw.data()), std::streamsize(raw.size()));
    if (!in) throw ConfigError("truncated PPM payload: " + path);
    for (size_t i = 0; i < raw.size(); ++i) img.data[i] = float(raw[i]) / 255.0f;
    return img;
}

inline void write_ppm(const std::string& path, const Image<float>& img) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot write image file: " + path);
    out << "P6\n" << img.w << " " << img.h << "\n255\n";
    for (float v : img.data) {
        const int q = int(std::lround(std::min(1.0f, std::max(0.0f, v)) * 255.0f));
        out.put(char(q));
    }
}

}  // namespace voxkit
