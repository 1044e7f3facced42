#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <ostream>

#include "gridwatch/errors.hpp"
#include "gridwatch/pipeline.hpp"

#include <json.hpp>

static_assert(std::endian::native == std::endian::little,
              "artifact formats are little-endian; big-endian hosts unsupported");

namespace gridwatch::pipe {

namespace {

constexpr char kMagic[4] = {'G', 'W', 'M', 'S'};
constexpr std::uint32_t kVersion = 1;

void write_u32(std::ostream& os, std::uint32_t v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

std::uint32_t read_u32(std::istream& is) {
    std::uint32_t v = 0;
    is.read(reinterpret_cast<char*>(&v), sizeof v);
    if (!is) throw TruncatedError("series file: truncated header");
    return v;
}

}  // namespace

void save_series(const std::string& path, const MeasurementSeries& s) {
    nlohmann::json header;
    header["format"] = "gridwatch-measurement-series";
    header["version"] = kVersion;
    header["shape"] = {s.m(), s.n_steps()};
    header["noise_sigma"] = s.noise_sigma;
    header["seed"] = s.seed;
    header["config_hash"] = s.config_hash;
    header["scaled_included"] = s.z_scaled.has_value();
    if (s.scaler.size() > 0) {
        header["scaler"] = {{"min", s.scaler.min}, {"max", s.scaler.max}, {"constant", s.scaler.constant}};
    }
    const std::string hj = header.dump();

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write series file: " + path);
    f.write(kMagic, 4);
    write_u32(f, kVersion);
    write_u32(f, static_cast<std::uint32_t>(hj.size()));
    f.write(hj.data(), static_cast<std::streamsize>(hj.size()));
    f.write(reinterpret_cast<const char*>(s.z_raw.data()),
            static_cast<std::streamsize>(s.z_raw.size() * sizeof(double)));
    if (s.z_scaled) {
        f.write(reinterpret_cast<const char*>(s.z_scaled->data()),
                static_cast<std::streamsize>(s.z_scaled->size() * sizeof(double)));
    }
    if (!f) throw IoError("short write: " + path);
}

MeasurementSeries load_series(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open series file: " + path);
    char magic[4];
    f.read(magic, 4);
    if (!f || std::memcmp(magic, kMagic, 4) != 0)
        throw VersionError("series file: bad magic (not a measurement series): " + path);
    const std::uint32_t version = read_u32(f);
    if (version != kVersion)
        throw VersionError("series file: unsupported version " + std::to_string(version));
    const std::uint32_t hlen = read_u32(f);
    std::string hj(hlen, '\0');
    f.read(hj.data(), hlen);
    if (!f) throw TruncatedError("series file: truncated header");
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(hj);
    } catch (const nlohmann::json::parse_error& e) {
        throw VersionError(std::string("series file: unreadable header: ") + e.what());
    }
    const auto shape = header.at("shape");
    const int m = shape.at(0).get<int>();
    const int n = shape.at(1).get<int>();
    if (m <= 0 || n <= 0) throw ShapeError("series file: bad shape");

    MeasurementSeries s;
    s.z_raw = Tensor(m, n);
    s.noise_sigma = header.value("noise_sigma", 0.0);
    s.seed = header.value("seed", 0ull);
    s.config_hash = header.value("config_hash", "");
    if (header.contains("scaler")) {
        s.scaler.min = header["scaler"].at("min").get<std::vector<double>>();
        s.scaler.max = header["scaler"].at("max").get<std::vector<double>>();
        s.scaler.constant = header["scaler"].at("constant").get<std::vector<bool>>();
        if (s.scaler.size() != m) throw ShapeError("series file: scaler size != m");
    }
    f.read(reinterpret_cast<char*>(s.z_raw.data()),
           static_cast<std::streamsize>(s.z_raw.size() * sizeof(double)));
    if (!f) throw TruncatedError("series file: truncated raw data block");
    if (header.value("scaled_included", false)) {
        Tensor sc(m, n);
        f.read(reinterpret_cast<char*>(sc.data()),
               static_cast<std::streamsize>(sc.size() * sizeof(double)));
        if (!f) throw TruncatedError("series file: truncated scaled data block");
        s.z_scaled = std::move(sc);
    }
    return s;
}

void write_series_csv(const MeasurementSeries& s, std::ostream& os) {
    char buf[32];
    for (int r = 0; r < s.m(); ++r) {
        for (int t = 0; t < s.n_steps(); ++t) {
            std::snprintf(buf, sizeof(buf), "%.17g", s.z_raw.at(r, t));
            os << (t ? "," : "") << buf;
        }
        os << '\n';
    }
}

}  // namespace gridwatch::pipe
