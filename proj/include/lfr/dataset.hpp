#pragma once

#include <string>
#include <vector>

#include "lfr/degrade.hpp"
#include "lfr/image.hpp"

namespace lfr::data {

struct DatasetSpec {
    std::string generator = "gaussian-blobs";  // gaussian-blobs | random-rectangles | smooth-noise
    int size = 16;
    int channels = 1;
    int count = 2048;
    uint64_t seed = 0;
    degrade::ParamRanges ranges;

    void validate() const;
};

struct Record {
    Image hq, lq;
    degrade::DegradationParams params;
};

struct DatasetContainer {
    static constexpr uint32_t kVersion = 1;
    int h = 0, w = 0, c = 0;
    uint64_t seed = 0;
    std::string generator;
    std::vector<Record> records;

    void save(const std::string& path) const;
    static DatasetContainer load(const std::string& path);
    std::vector<unsigned char> serialize() const;
    uint64_t hash() const;

    std::vector<Image> hq_images(size_t begin = 0, size_t end = SIZE_MAX) const;
    std::vector<Image> lq_images(size_t begin = 0, size_t end = SIZE_MAX) const;
};

// Deterministic HQ image for (generator, seed, index).
Image synth_image(const std::string& generator, int size, int channels, uint64_t seed, uint64_t index);

// HQ via the procedural generator, LQ via the degradation pipeline with
// per-record sampled parameters.
DatasetContainer synth_dataset(const DatasetSpec& spec);

}  // namespace lfr::data
