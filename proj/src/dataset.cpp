#include "lfr/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

namespace lfr::data {

void DatasetSpec::validate() const {
    if (generator != "gaussian-blobs" && generator != "random-rectangles" && generator != "smooth-noise")
        throw config_error("dataset: unknown generator '" + generator + "'");
    if (size < 8 || size > 64) throw config_error("dataset: size must be in [8, 64]");
    if (channels != 1 && channels != 3) throw config_error("dataset: channels must be 1 or 3");
    if (count < 1) throw config_error("dataset: count must be >= 1");
    ranges.validate();
}

namespace {

void gen_blobs(Image& im, Rng& rng) {
    const int k = static_cast<int>(rng.uniform_int(2, 5));
    const double bg = rng.uniform(0.05, 0.2);
    struct Blob {
        double cy, cx, s, a;
    };
    std::vector<Blob> blobs;
    for (int i = 0; i < k; ++i)
        blobs.push_back({rng.uniform(0, im.h), rng.uniform(0, im.w),
                         rng.uniform(im.h / 10.0, im.h / 3.0), rng.uniform(0.3, 1.0)});
    for (int ch = 0; ch < im.c; ++ch) {
        const double tint = im.c == 1 ? 1.0 : rng.uniform(0.6, 1.0);
        for (int y = 0; y < im.h; ++y)
            for (int x = 0; x < im.w; ++x) {
                double v = bg;
                for (const auto& b : blobs) {
                    const double d2 = (y - b.cy) * (y - b.cy) + (x - b.cx) * (x - b.cx);
                    v += b.a * tint * std::exp(-0.5 * d2 / (b.s * b.s));
                }
                im.at(y, x, ch) = static_cast<float>(std::min(1.0, v));
            }
    }
}

void gen_rects(Image& im, Rng& rng) {
    const double bg = rng.uniform(0.0, 0.3);
    for (auto& v : im.v) v = static_cast<float>(bg);
    const int k = static_cast<int>(rng.uniform_int(3, 6));
    for (int i = 0; i < k; ++i) {
        int y0 = static_cast<int>(rng.uniform_int(0, im.h - 2));
        int x0 = static_cast<int>(rng.uniform_int(0, im.w - 2));
        int y1 = static_cast<int>(rng.uniform_int(y0 + 1, im.h - 1));
        int x1 = static_cast<int>(rng.uniform_int(x0 + 1, im.w - 1));
        for (int ch = 0; ch < im.c; ++ch) {
            const double val = rng.uniform(0.2, 1.0);
            for (int y = y0; y <= y1; ++y)
                for (int x = x0; x <= x1; ++x) im.at(y, x, ch) = static_cast<float>(val);
        }
    }
}

void gen_smooth(Image& im, Rng& rng) {
    const int g = std::max(2, im.h / 4);
    for (int ch = 0; ch < im.c; ++ch) {
        std::vector<double> grid(static_cast<size_t>(g) * g);
        for (auto& v : grid) v = rng.uniform();
        for (int y = 0; y < im.h; ++y)
            for (int x = 0; x < im.w; ++x) {
                // bilinear sample of the coarse grid, half-pixel centers
                double fy = (y + 0.5) * g / im.h - 0.5;
                double fx = (x + 0.5) * g / im.w - 0.5;
                fy = std::min(std::max(fy, 0.0), static_cast<double>(g - 1));
                fx = std::min(std::max(fx, 0.0), static_cast<double>(g - 1));
                const int y0 = static_cast<int>(fy), x0 = static_cast<int>(fx);
                const int y1 = std::min(y0 + 1, g - 1), x1 = std::min(x0 + 1, g - 1);
                const double wy = fy - y0, wx = fx - x0;
                const double v = (1 - wy) * ((1 - wx) * grid[static_cast<size_t>(y0) * g + x0] +
                                             wx * grid[static_cast<size_t>(y0) * g + x1]) +
                                 wy * ((1 - wx) * grid[static_cast<size_t>(y1) * g + x0] +
                                       wx * grid[static_cast<size_t>(y1) * g + x1]);
                im.at(y, x, ch) = static_cast<float>(v);
            }
    }
}

}  // namespace

Image synth_image(const std::string& generator, int size, int channels, uint64_t seed,
                  uint64_t index) {
    Image im(size, size, channels);
    Rng rng(Rng::derive(seed, 0x53594E ^ (index * 0x9E3779B97F4A7C15ULL + 1)));
    if (generator == "gaussian-blobs") gen_blobs(im, rng);
    else if (generator == "random-rectangles") gen_rects(im, rng);
    else if (generator == "smooth-noise") gen_smooth(im, rng);
    else throw config_error("synth_image: unknown generator '" + generator + "'");
    return im;
}

DatasetContainer synth_dataset(const DatasetSpec& spec) {
    spec.validate();
    DatasetContainer ds;
    ds.h = spec.size;
    ds.w = spec.size;
    ds.c = spec.channels;
    ds.seed = spec.seed;
    ds.generator = spec.generator;
    ds.records.resize(static_cast<size_t>(spec.count));
    for (int i = 0; i < spec.count; ++i) {
        auto& rec = ds.records[static_cast<size_t>(i)];
        rec.hq = synth_image(spec.generator, spec.size, spec.channels, spec.seed,
                             static_cast<uint64_t>(i));
        rec.params = degrade::sample_params(spec.ranges,
                                            Rng::derive(spec.seed, 0xD39 + static_cast<uint64_t>(i)));
        rec.lq = degrade::apply(rec.hq, rec.params,
                                Rng::derive(spec.seed, 0x105E + static_cast<uint64_t>(i)));
    }
    return ds;
}

namespace {

void put_u32v(std::vector<unsigned char>& v, uint32_t x) {
    for (int i = 0; i < 4; ++i) v.push_back(static_cast<unsigned char>(x >> (8 * i)));
}
void put_u64v(std::vector<unsigned char>& v, uint64_t x) {
    for (int i = 0; i < 8; ++i) v.push_back(static_cast<unsigned char>(x >> (8 * i)));
}
void put_f32v(std::vector<unsigned char>& v, float x) {
    uint32_t b;
    std::memcpy(&b, &x, 4);
    put_u32v(v, b);
}
void put_f64v(std::vector<unsigned char>& v, double x) {
    uint64_t b;
    std::memcpy(&b, &x, 8);
    put_u64v(v, b);
}

struct Reader {
    const unsigned char* p;
    const unsigned char* end;
    uint32_t u32() {
        check(4);
        uint32_t x = 0;
        for (int i = 0; i < 4; ++i) x |= static_cast<uint32_t>(*p++) << (8 * i);
        return x;
    }
    uint64_t u64() {
        check(8);
        uint64_t x = 0;
        for (int i = 0; i < 8; ++i) x |= static_cast<uint64_t>(*p++) << (8 * i);
        return x;
    }
    float f32() {
        const uint32_t b = u32();
        float x;
        std::memcpy(&x, &b, 4);
        return x;
    }
    double f64() {
        const uint64_t b = u64();
        double x;
        std::memcpy(&x, &b, 8);
        return x;
    }
    void check(size_t n) {
        if (p + n > end) throw std::runtime_error("dataset: truncated container");
    }
};

void put_image(std::vector<unsigned char>& v, const Image& im) {
    for (float x : im.v) put_f32v(v, x);
}

}  // namespace

std::vector<unsigned char> DatasetContainer::serialize() const {
    std::vector<unsigned char> v;
    v.push_back('L');
    v.push_back('F');
    v.push_back('R');
    v.push_back('D');
    put_u32v(v, kVersion);
    put_u64v(v, records.size());
    put_u32v(v, static_cast<uint32_t>(h));
    put_u32v(v, static_cast<uint32_t>(w));
    put_u32v(v, static_cast<uint32_t>(c));
    put_u64v(v, seed);
    put_u32v(v, static_cast<uint32_t>(generator.size()));
    for (char ch : generator) v.push_back(static_cast<unsigned char>(ch));
    for (const auto& rec : records) {
        LFR_REQUIRE(rec.hq.h == h && rec.hq.w == w && rec.hq.c == c && rec.lq.same_shape(rec.hq),
                    "dataset: record shape does not match header");
        put_image(v, rec.hq);
        put_image(v, rec.lq);
        put_f64v(v, rec.params.sigma);
        put_f64v(v, rec.params.r);
        put_f64v(v, rec.params.delta);
        put_u32v(v, static_cast<uint32_t>(rec.params.q));
        put_u32v(v, static_cast<uint32_t>(rec.params.kernel_size));
    }
    return v;
}

uint64_t DatasetContainer::hash() const {
    const auto bytes = serialize();
    return fnv1a64(bytes.data(), bytes.size());
}

void DatasetContainer::save(const std::string& path) const {
    const auto bytes = serialize();
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("dataset: cannot open for write: " + path);
    os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!os) throw std::runtime_error("dataset: write failed: " + path);
}

DatasetContainer DatasetContainer::load(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("dataset: cannot open for read: " + path);
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(is)),
                                     std::istreambuf_iterator<char>());
    Reader r{bytes.data(), bytes.data() + bytes.size()};
    r.check(4);
    if (std::memcmp(r.p, "LFRD", 4) != 0) throw std::runtime_error("dataset: bad magic in " + path);
    r.p += 4;
    const uint32_t version = r.u32();
    if (version != kVersion) throw std::runtime_error("dataset: unsupported version in " + path);
    DatasetContainer ds;
    const uint64_t count = r.u64();
    ds.h = static_cast<int>(r.u32());
    ds.w = static_cast<int>(r.u32());
    ds.c = static_cast<int>(r.u32());
    ds.seed = r.u64();
    const uint32_t glen = r.u32();
    r.check(glen);
    ds.generator.assign(reinterpret_cast<const char*>(r.p), glen);
    r.p += glen;
    ds.records.resize(count);
    for (auto& rec : ds.records) {
        rec.hq = Image(ds.h, ds.w, ds.c);
        for (auto& x : rec.hq.v) x = r.f32();
        rec.lq = Image(ds.h, ds.w, ds.c);
        for (auto& x : rec.lq.v) x = r.f32();
        rec.params.sigma = r.f64();
        rec.params.r = r.f64();
        rec.params.delta = r.f64();
        rec.params.q = static_cast<int>(r.u32());
        rec.params.kernel_size = static_cast<int>(r.u32());
    }
    return ds;
}

std::vector<Image> DatasetContainer::hq_images(size_t begin, size_t end) const {
    end = std::min(end, records.size());
    std::vector<Image> out;
    for (size_t i = begin; i < end; ++i) out.push_back(records[i].hq);
    return out;
}

std::vector<Image> DatasetContainer::lq_images(size_t begin, size_t end) const {
    end = std::min(end, records.size());
    std::vector<Image> out;
    for (size_t i = begin; i < end; ++i) out.push_back(records[i].lq);
    return out;
}

}  // namespace lfr::data
