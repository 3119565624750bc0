#pragma once

// Evaluation quantities: alignment error traces and response times,
// Chamfer distance between clouds, contrast-to-noise ratio on grayscale
// images, and force-regulation statistics.

#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <vector>

#include "asee/geometry.hpp"
#include "asee/kdtree.hpp"

namespace asee {

struct TimeSeries {
    std::vector<double> t;
    std::vector<double> value;

    std::size_t size() const { return t.size(); }
    bool empty() const { return t.empty(); }

    void push(double time, double v) {
        t.push_back(time);
        value.push_back(v);
    }

    void validate() const {
        if (t.size() != value.size()) throw InvalidArgument("time series columns differ in length");
        for (std::size_t i = 1; i < t.size(); ++i)
            if (!(t[i] > t[i - 1])) throw InvalidArgument("time series timestamps must strictly increase");
    }
};

struct VectorSeries {
    std::vector<double> t;
    std::vector<Vec3> value;
};

/// Per-sample angle (degrees) between synchronized vector series.
inline TimeSeries angular_error_series(const VectorSeries& ee, const VectorSeries& gt) {
    if (ee.value.size() != gt.value.size() || ee.t.size() != ee.value.size())
        throw InvalidArgument("angular_error_series: series lengths differ");
    TimeSeries out;
    for (std::size_t i = 0; i < ee.value.size(); ++i) out.push(ee.t[i], angle_between(ee.value[i], gt.value[i]));
    return out;
}

/// Peak-to-valley intervals. A peak is a 3-sample local maximum above
/// `peak_threshold`; its valley is the first later sample where the series
/// stops decreasing (or the last sample). The next peak search resumes at
/// the valley.
inline std::vector<double> response_time(const TimeSeries& err, double peak_threshold = 5.0) {
    if (err.empty()) throw InvalidArgument("response_time: empty series");
    const auto& v = err.value;
    const std::size_t n = v.size();
    std::vector<double> out;
    std::size_t i = 1;
    while (i + 1 < n) {
        const bool peak = v[i] > peak_threshold && v[i] >= v[i - 1] && v[i] > v[i + 1];
        if (!peak) {
            ++i;
            continue;
        }
        std::size_t j = i + 1;
        while (j + 1 < n && v[j + 1] < v[j]) ++j;
        out.push_back(err.t[j] - err.t[i]);
        i = j + 1;
    }
    return out;
}

/// Symmetric mean nearest-neighbour distance (Euclidean, not squared):
/// 0.5 * (mean_a d(a, B) + mean_b d(b, A)).
inline double chamfer_distance(const std::vector<Vec3>& a, const std::vector<Vec3>& b) {
    if (a.empty() || b.empty()) throw InvalidArgument("chamfer_distance: empty cloud");
    auto directed = [](const std::vector<Vec3>& from, const std::vector<Vec3>& to) {
        const KdTree tree(to);
        double sum = 0.0;
        for (const auto& p : from) sum += std::sqrt(tree.nearest(p).dist2);
        return sum / static_cast<double>(from.size());
    };
    return 0.5 * (directed(a, b) + directed(b, a));
}

inline double chamfer_distance(const PointCloud& a, const PointCloud& b) { return chamfer_distance(a.points, b.points); }

struct GrayImage {
    int width = 0;
    int height = 0;
    std::vector<double> pixels;  // row-major

    double at(int x, int y) const { return pixels[static_cast<std::size_t>(y) * width + x]; }
};

struct Roi {
    int x = 0;
    int y = 0;
    int w = 10;
    int h = 10;

    bool inside(const GrayImage& img) const {
        return w > 0 && h > 0 && x >= 0 && y >= 0 && x + w <= img.width && y + h <= img.height;
    }
};

namespace detail {

struct MeanStd {
    double mean;
    double stddev;
};

// Two passes; population standard deviation.
inline MeanStd roi_stats(const GrayImage& img, const Roi& r) {
    double sum = 0.0;
    for (int y = r.y; y < r.y + r.h; ++y)
        for (int x = r.x; x < r.x + r.w; ++x) sum += img.at(x, y);
    const double n = static_cast<double>(r.w) * r.h;
    const double mean = sum / n;
    double sq = 0.0;
    for (int y = r.y; y < r.y + r.h; ++y)
        for (int x = r.x; x < r.x + r.w; ++x) sq += (img.at(x, y) - mean) * (img.at(x, y) - mean);
    return {mean, std::sqrt(sq / n)};
}

} // namespace detail

/// |mu_roi - mu_bg| / sqrt(sigma_roi^2 + sigma_bg^2).
inline double cnr(const GrayImage& img, const Roi& roi, const Roi& bg) {
    if (!roi.inside(img) || !bg.inside(img)) throw InvalidArgument("cnr: ROI outside image bounds");
    const auto s = detail::roi_stats(img, roi);
    const auto b = detail::roi_stats(img, bg);
    const double num = std::abs(s.mean - b.mean);
    const double den = std::sqrt(s.stddev * s.stddev + b.stddev * b.stddev);
    if (den == 0.0) {
        if (num == 0.0) return 0.0;
        throw DivideByZero("cnr: both regions are constant with distinct means");
    }
    return num / den;
}

struct ForceErrorStats {
    double mean = 0.0;                 // N
    double stddev = 0.0;               // N, population
    double fraction_within_half = 0.0; // |error| <= 0.5 N
    double mean_abs = 0.0;             // N
};

inline ForceErrorStats force_error_stats(const TimeSeries& force, double f_desired) {
    if (force.empty()) throw InvalidArgument("force_error_stats: empty series");
    const double n = static_cast<double>(force.size());
    ForceErrorStats s;
    double within = 0.0;
    for (double f : force.value) {
        const double e = f - f_desired;
        s.mean += e;
        s.mean_abs += std::abs(e);
        within += std::abs(e) <= 0.5 ? 1.0 : 0.0;
    }
    s.mean /= n;
    s.mean_abs /= n;
    double sq = 0.0;
    for (double f : force.value) sq += (f - f_desired - s.mean) * (f - f_desired - s.mean);
    s.stddev = std::sqrt(sq / n);
    s.fraction_within_half = within / n;
    return s;
}

/// Plain (P2) or raw (P5, 8- or 16-bit) PGM.
inline GrayImage read_pgm(std::istream& in) {
    auto next_token = [&in] {
        std::string tok;
        while (in >> tok) {
            if (tok[0] == '#') {
                std::string rest;
                std::getline(in, rest);
                continue;
            }
            return tok;
        }
        throw IoError("truncated PGM header");
    };
    const std::string magic = next_token();
    if (magic != "P2" && magic != "P5") throw IoError("not a PGM image");
    GrayImage img;
    img.width = std::stoi(next_token());
    img.height = std::stoi(next_token());
    const int maxval = std::stoi(next_token());
    if (img.width <= 0 || img.height <= 0 || maxval <= 0 || maxval > 65535) throw IoError("bad PGM header");
    const auto count = static_cast<std::size_t>(img.width) * img.height;
    img.pixels.resize(count);
    if (magic == "P2") {
        for (auto& p : img.pixels) {
            int v;
            if (!(in >> v)) throw IoError("truncated PGM data");
            p = v;
        }
    } else {
        in.get();  // single whitespace after maxval
        const int bytes = maxval < 256 ? 1 : 2;
        for (auto& p : img.pixels) {
            unsigned char b[2] = {0, 0};
            if (!in.read(reinterpret_cast<char*>(b), bytes)) throw IoError("truncated PGM data");
            p = bytes == 1 ? b[0] : (b[0] << 8) | b[1];
        }
    }
    return img;
}

inline GrayImage read_pgm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    return read_pgm(in);
}

/// Two-column CSV (t, value); a non-numeric first line is taken as a header.
inline TimeSeries read_time_series_csv(std::istream& in) {
    TimeSeries s;
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        std::stringstream ss(line);
        std::string a, b;
        std::getline(ss, a, ',');
        std::getline(ss, b, ',');
        try {
            s.push(std::stod(a), std::stod(b));
        } catch (const std::exception&) {
            if (!first) throw IoError("malformed time-series row: " + line);
        }
        first = false;
    }
    s.validate();
    return s;
}

inline void write_time_series_csv(std::ostream& out, const TimeSeries& s, const std::string& value_name = "value") {
    out << "t," << value_name << '\n' << std::setprecision(9);
    for (std::size_t i = 0; i < s.size(); ++i) out << s.t[i] << ',' << s.value[i] << '\n';
}

} // namespace asee
