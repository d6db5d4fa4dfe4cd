// Copyright Contributors to the ov4d Project
// SPDX-License-Identifier: Apache-2.0
//
// On-disk formats. Binary formats are little-endian with a 4-byte magic and
// u32 version; truncated payloads are rejected with expected vs. actual byte
// counts. Structured-text formats are JSON (scene scripts may contain //
// comments).
//
//   OV4D  panoptic sequence: semantics u16, instances u32, visibility
//         bit-packed per frame (row-major, x fastest, LSB-first), plus a
//         length-prefixed JSON block with the label spec, grid origin and
//         voxel size, and frame timestamps.
//   GSET  Gaussian sets: per Gaussian f32 center(3), scale(3), quaternion
//         (w,x,y,z), opacity, embedding(C).
//   QOUT  raw query outputs: f32 class scores (QxC), kind byte per query,
//         u32 track IDs, f32 mask scores (QxXxYxZ).
//   FGRD  feature grids: f64 geometry header, f32 occupancy, f32 features.
#pragma once

#include "ov4d/gaussian.hpp"
#include "ov4d/grid.hpp"
#include "ov4d/labelgen.hpp"
#include "ov4d/mask_infer.hpp"
#include "ov4d/simgen.hpp"
#include "ov4d/trackers.hpp"

#include <json.hpp>

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace ov4d {

namespace io {

using nlohmann::json;

// ------------------------------------------------------------ byte plumbing

inline std::vector<uint8_t> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "' for reading");
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                               std::istreambuf_iterator<char>());
    return bytes;
}

inline void write_file(const std::string& path, const std::vector<uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()),
              std::streamsize(bytes.size()));
    if (!out) throw IoError("short write to '" + path + "'");
}

class Writer {
  public:
    void reserve(std::size_t size) { bytes_.reserve(size); }
    void u8(uint8_t v) { bytes_.push_back(v); }
    void u16(uint16_t v) { le(v); }
    void u32(uint32_t v) { le(v); }
    void u64(uint64_t v) { le(v); }
    void i64(int64_t v) { le(uint64_t(v)); }
    void f32(float v) {
        uint32_t bits;
        std::memcpy(&bits, &v, 4);
        le(bits);
    }
    void f64(double v) {
        uint64_t bits;
        std::memcpy(&bits, &v, 8);
        le(bits);
    }
    void magic(const char m[5]) {
        bytes_.insert(bytes_.end(), m, m + 4);
    }
    void raw(const void* data, std::size_t size) {
        const auto* p = static_cast<const uint8_t*>(data);
        bytes_.insert(bytes_.end(), p, p + size);
    }
    // Bulk little-endian array append; memcpy on LE hosts.
    template <typename T>
    void le_array(const T* data, std::size_t count) {
        static_assert(std::is_integral_v<T> && std::is_unsigned_v<T>);
        if constexpr (std::endian::native == std::endian::little) {
            raw(data, count * sizeof(T));
        } else {
            for (std::size_t i = 0; i < count; ++i) le(data[i]);
        }
    }
    const std::vector<uint8_t>& bytes() const { return bytes_; }

  private:
    template <typename T>
    void le(T v) {
        for (std::size_t i = 0; i < sizeof(T); ++i)
            bytes_.push_back(uint8_t(v >> (8 * i)));
    }
    std::vector<uint8_t> bytes_;
};

class Reader {
  public:
    Reader(const std::vector<uint8_t>& bytes, std::string name)
        : bytes_(bytes), name_(std::move(name)) {}

    uint8_t u8() { return need(1), bytes_[pos_++]; }
    uint16_t u16() { return uint16_t(le(2)); }
    uint32_t u32() { return uint32_t(le(4)); }
    uint64_t u64() { return le(8); }
    int64_t i64() { return int64_t(le(8)); }
    float f32() {
        const uint32_t bits = u32();
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }
    double f64() {
        const uint64_t bits = u64();
        double v;
        std::memcpy(&v, &bits, 8);
        return v;
    }
    void expect_magic(const char m[5]) {
        need(4);
        if (std::memcmp(bytes_.data() + pos_, m, 4) != 0)
            throw IoError(name_ + ": bad magic at offset 0, expected '" +
                          std::string(m, 4) + "'");
        pos_ += 4;
    }
    std::string str(std::size_t size) {
        need(size);
        std::string s(reinterpret_cast<const char*>(bytes_.data() + pos_), size);
        pos_ += size;
        return s;
    }
    const uint8_t* raw(std::size_t size) {
        need(size);
        const uint8_t* p = bytes_.data() + pos_;
        pos_ += size;
        return p;
    }
    // Bulk little-endian array read; memcpy on LE hosts.
    template <typename T>
    void le_array(T* out, std::size_t count) {
        static_assert(std::is_integral_v<T> && std::is_unsigned_v<T>);
        const uint8_t* p = raw(count * sizeof(T));
        if constexpr (std::endian::native == std::endian::little) {
            std::memcpy(out, p, count * sizeof(T));
        } else {
            for (std::size_t i = 0; i < count; ++i) {
                uint64_t v = 0;
                for (std::size_t b = 0; b < sizeof(T); ++b)
                    v |= uint64_t(p[i * sizeof(T) + b]) << (8 * b);
                out[i] = T(v);
            }
        }
    }
    std::size_t offset() const { return pos_; }
    std::size_t remaining() const { return bytes_.size() - pos_; }

    void need(std::size_t size) const {
        if (pos_ + size > bytes_.size())
            throw IoError(name_ + ": truncated at offset " + std::to_string(pos_) +
                          ", expected " + std::to_string(pos_ + size) +
                          " bytes but file has " + std::to_string(bytes_.size()));
    }

  private:
    uint64_t le(std::size_t size) {
        need(size);
        uint64_t v = 0;
        for (std::size_t i = 0; i < size; ++i)
            v |= uint64_t(bytes_[pos_ + i]) << (8 * i);
        pos_ += size;
        return v;
    }
    const std::vector<uint8_t>& bytes_;
    std::string name_;
    std::size_t pos_ = 0;
};

namespace detail {

// Reads one grid dimension triple with plausibility bounds so corrupted
// headers fail cleanly before any allocation.
inline std::array<int, 3> read_dims(Reader& r, const std::string& name) {
    std::array<int, 3> dims;
    for (int a = 0; a < 3; ++a) {
        const uint32_t d = r.u32();
        if (d < 1 || d > (1u << 21))
            throw IoError(name + ": implausible dimension " + std::to_string(d));
        dims[a] = int(d);
    }
    const uint64_t n =
        uint64_t(dims[0]) * uint64_t(dims[1]) * uint64_t(dims[2]);
    if (n > (uint64_t(1) << 40))
        throw IoError(name + ": implausible voxel count " + std::to_string(n));
    return dims;
}

} // namespace detail

// ------------------------------------------------------------- label specs

inline json label_spec_to_json(const LabelSpec& spec) {
    json j;
    j["classes"] = spec.classes;
    j["thing"] = std::vector<bool>(spec.thing_flags.begin(), spec.thing_flags.end());
    j["free"] = spec.free_class;
    if (spec.unknown_class) j["unknown"] = *spec.unknown_class;
    else j["unknown"] = nullptr;
    return j;
}

inline LabelSpec label_spec_from_json(const json& j) {
    LabelSpec spec;
    spec.classes = j.at("classes").get<std::vector<std::string>>();
    spec.thing_flags = j.at("thing").get<std::vector<bool>>();
    spec.free_class = j.at("free").get<uint16_t>();
    if (j.contains("unknown") && !j.at("unknown").is_null())
        spec.unknown_class = j.at("unknown").get<uint16_t>();
    validate_label_spec(spec);
    return spec;
}

inline LabelSpec read_label_spec(const std::string& path) {
    const auto bytes = read_file(path);
    try {
        return label_spec_from_json(
            json::parse(bytes.begin(), bytes.end(), nullptr, true, true));
    } catch (const json::exception& e) {
        throw IoError(path + ": " + e.what());
    }
}

// ------------------------------------------------------------------- OV4D

inline constexpr uint32_t kOv4dVersion = 1;

inline std::vector<uint8_t> encode_ov4d(const TrackedSequence& seq) {
    validate_sequence(seq);
    if (seq.frames.empty()) throw std::invalid_argument("OV4D: empty sequence");
    const GridGeometry& geom = seq.geometry();
    const std::size_t n = geom.voxel_count();

    Writer w;
    w.reserve(24 + seq.frames.size() * (n * 6 + (n + 7) / 8) + 4096);
    w.magic("OV4D");
    w.u32(kOv4dVersion);
    for (int d : geom.dims) w.u32(uint32_t(d));
    w.u32(uint32_t(seq.labels.num_classes()));
    w.u32(uint32_t(seq.frames.size()));
    for (const auto& g : seq.frames) {
        w.le_array(g.semantics.data(), n);
        w.le_array(g.instances.data(), n);
        for (std::size_t v = 0; v < n; v += 8) {
            uint8_t byte = 0;
            for (std::size_t b = 0; b < 8 && v + b < n; ++b)
                if (g.visibility[v + b]) byte |= uint8_t(1 << b);
            w.u8(byte);
        }
    }
    json meta = label_spec_to_json(seq.labels);
    meta["origin"] = {geom.origin.x, geom.origin.y, geom.origin.z};
    meta["voxel_size"] = {geom.voxel_size.x, geom.voxel_size.y, geom.voxel_size.z};
    meta["timestamps"] = seq.timestamps;
    const std::string text = meta.dump();
    w.u32(uint32_t(text.size()));
    w.raw(text.data(), text.size());
    return w.bytes();
}

inline void write_ov4d(const std::string& path, const TrackedSequence& seq) {
    write_file(path, encode_ov4d(seq));
}

inline TrackedSequence decode_ov4d(const std::vector<uint8_t>& bytes,
                                   const std::string& name) {
    Reader r(bytes, name);
    r.expect_magic("OV4D");
    const uint32_t version = r.u32();
    if (version != kOv4dVersion)
        throw IoError(name + ": unsupported OV4D version " + std::to_string(version));
    GridGeometry geom;
    geom.dims = detail::read_dims(r, name);
    const uint32_t num_classes = r.u32();
    const uint32_t num_frames = r.u32();
    if (num_frames == 0) throw IoError(name + ": zero frame count");
    const std::size_t n =
        std::size_t(geom.dims[0]) * geom.dims[1] * geom.dims[2];
    // Header sanity before any allocation: the frame payload must fit.
    const uint64_t per_frame = uint64_t(n) * 6 + (n + 7) / 8;
    if (per_frame > r.remaining() || num_frames > r.remaining() / per_frame)
        throw IoError(name + ": truncated, header promises " +
                      std::to_string(num_frames) + " frames of " +
                      std::to_string(per_frame) + " bytes but only " +
                      std::to_string(r.remaining()) + " remain");

    TrackedSequence seq;
    for (uint32_t f = 0; f < num_frames; ++f) {
        PanopticGrid g;
        g.semantics.resize(n);
        const std::size_t sem_offset = r.offset();
        r.le_array(g.semantics.data(), n);
        for (std::size_t v = 0; v < n; ++v)
            if (g.semantics[v] >= num_classes)
                throw IoError(name + ": semantic class " +
                              std::to_string(g.semantics[v]) +
                              " out of range at offset " +
                              std::to_string(sem_offset + v * 2));
        g.instances.resize(n);
        r.le_array(g.instances.data(), n);
        g.visibility.resize(n);
        const uint8_t* packed = r.raw((n + 7) / 8);
        for (std::size_t v = 0; v < n; ++v)
            g.visibility[v] = (packed[v / 8] >> (v % 8)) & 1;
        seq.frames.push_back(std::move(g));
    }
    const uint32_t meta_size = r.u32();
    const std::string text = r.str(meta_size);
    try {
        const json meta = json::parse(text);
        seq.labels = label_spec_from_json(meta);
        const auto origin = meta.at("origin");
        const auto vs = meta.at("voxel_size");
        geom.origin = {origin.at(0), origin.at(1), origin.at(2)};
        geom.voxel_size = {vs.at(0), vs.at(1), vs.at(2)};
        seq.timestamps = meta.at("timestamps").get<std::vector<int64_t>>();
        validate_geometry(geom);
    } catch (const std::exception& e) {
        throw IoError(name + ": bad metadata block: " + e.what());
    }
    if (seq.labels.num_classes() != num_classes)
        throw IoError(name + ": class count mismatch between header and metadata");
    if (seq.timestamps.size() != seq.frames.size())
        throw IoError(name + ": timestamp count mismatch");
    for (auto& g : seq.frames) g.geometry = geom;
    try {
        validate_sequence(seq);
    } catch (const std::exception& e) {
        throw IoError(name + ": inconsistent sequence: " + e.what());
    }
    return seq;
}

inline TrackedSequence read_ov4d(const std::string& path) {
    return decode_ov4d(read_file(path), path);
}

// ------------------------------------------------------------------- GSET

inline constexpr uint32_t kGsetVersion = 1;

inline std::vector<uint8_t> encode_gset(const GaussianSet& set) {
    Writer w;
    w.magic("GSET");
    w.u32(kGsetVersion);
    w.u32(uint32_t(set.size()));
    w.u32(uint32_t(set.embedding_dim));
    for (const auto& g : set.gaussians) {
        if (g.embedding.size() != set.embedding_dim)
            throw ShapeError("GSET: embedding dimension mismatch");
        for (int a = 0; a < 3; ++a) w.f32(float(g.center[a]));
        for (int a = 0; a < 3; ++a) w.f32(float(g.scale[a]));
        w.f32(float(g.rotation.w));
        w.f32(float(g.rotation.x));
        w.f32(float(g.rotation.y));
        w.f32(float(g.rotation.z));
        w.f32(float(g.opacity));
        for (double e : g.embedding) w.f32(float(e));
    }
    return w.bytes();
}

inline void write_gset(const std::string& path, const GaussianSet& set) {
    write_file(path, encode_gset(set));
}

inline GaussianSet decode_gset(const std::vector<uint8_t>& bytes,
                               const std::string& name) {
    Reader r(bytes, name);
    r.expect_magic("GSET");
    const uint32_t version = r.u32();
    if (version != kGsetVersion)
        throw IoError(name + ": unsupported GSET version " + std::to_string(version));
    const uint32_t count = r.u32();
    const uint32_t dim = r.u32();
    const uint64_t record = (11 + uint64_t(dim)) * 4;
    if (count > 0 && (record > r.remaining() || count > r.remaining() / record))
        throw IoError(name + ": truncated, header promises " + std::to_string(count) +
                      " records of " + std::to_string(record) + " bytes but only " +
                      std::to_string(r.remaining()) + " remain");
    GaussianSet set;
    set.embedding_dim = dim;
    set.gaussians.reserve(count);
    for (uint32_t i = 0; i < count; ++i) {
        Gaussian g;
        for (int a = 0; a < 3; ++a) g.center[a] = r.f32();
        for (int a = 0; a < 3; ++a) g.scale[a] = r.f32();
        g.rotation.w = r.f32();
        g.rotation.x = r.f32();
        g.rotation.y = r.f32();
        g.rotation.z = r.f32();
        g.opacity = r.f32();
        g.embedding.resize(dim);
        for (uint32_t c = 0; c < dim; ++c) g.embedding[c] = r.f32();
        set.gaussians.push_back(std::move(g));
    }
    try {
        validate_set(set);
    } catch (const std::exception& e) {
        throw IoError(name + ": invalid Gaussian data: " + e.what());
    }
    return set;
}

inline GaussianSet read_gset(const std::string& path) {
    return decode_gset(read_file(path), path);
}

// ------------------------------------------------------------------- FGRD

inline constexpr uint32_t kFgrdVersion = 1;

inline std::vector<uint8_t> encode_fgrd(const FeatureGrid& grid) {
    Writer w;
    w.magic("FGRD");
    w.u32(kFgrdVersion);
    for (int d : grid.geometry.dims) w.u32(uint32_t(d));
    w.u32(uint32_t(grid.embedding_dim));
    for (int a = 0; a < 3; ++a) w.f64(grid.geometry.origin[a]);
    for (int a = 0; a < 3; ++a) w.f64(grid.geometry.voxel_size[a]);
    for (double o : grid.occupancy) w.f32(float(o));
    for (double f : grid.features) w.f32(float(f));
    return w.bytes();
}

inline void write_fgrd(const std::string& path, const FeatureGrid& grid) {
    write_file(path, encode_fgrd(grid));
}

inline FeatureGrid decode_fgrd(const std::vector<uint8_t>& bytes,
                               const std::string& name) {
    Reader r(bytes, name);
    r.expect_magic("FGRD");
    const uint32_t version = r.u32();
    if (version != kFgrdVersion)
        throw IoError(name + ": unsupported FGRD version " + std::to_string(version));
    FeatureGrid grid;
    grid.geometry.dims = detail::read_dims(r, name);
    grid.embedding_dim = r.u32();
    for (int a = 0; a < 3; ++a) grid.geometry.origin[a] = r.f64();
    for (int a = 0; a < 3; ++a) grid.geometry.voxel_size[a] = r.f64();
    try {
        validate_geometry(grid.geometry);
    } catch (const std::exception& e) {
        throw IoError(name + ": bad geometry: " + e.what());
    }
    const std::size_t n = grid.geometry.voxel_count();
    const uint64_t payload = uint64_t(n) * 4 * (1 + uint64_t(grid.embedding_dim));
    if (payload / 4 / (1 + uint64_t(grid.embedding_dim)) != n ||
        payload > r.remaining())
        throw IoError(name + ": truncated, payload needs " + std::to_string(payload) +
                      " bytes but only " + std::to_string(r.remaining()) + " remain");
    grid.occupancy.resize(n);
    for (std::size_t v = 0; v < n; ++v) grid.occupancy[v] = r.f32();
    grid.features.resize(n * grid.embedding_dim);
    for (auto& f : grid.features) f = r.f32();
    return grid;
}

inline FeatureGrid read_fgrd(const std::string& path) {
    return decode_fgrd(read_file(path), path);
}

// ------------------------------------------------------------------- QOUT

inline constexpr uint32_t kQoutVersion = 1;

inline std::vector<uint8_t> encode_qout(const QueryOutput& out) {
    validate_query_output(out);
    Writer w;
    w.magic("QOUT");
    w.u32(kQoutVersion);
    w.u32(uint32_t(out.num_queries()));
    w.u32(uint32_t(out.num_classes));
    for (int d : out.dims) w.u32(uint32_t(d));
    for (double s : out.class_scores) w.f32(float(s));
    for (QueryKind k : out.kinds) w.u8(uint8_t(k));
    for (uint32_t id : out.track_ids) w.u32(id);
    for (double m : out.mask_scores) w.f32(float(m));
    return w.bytes();
}

inline void write_qout(const std::string& path, const QueryOutput& out) {
    write_file(path, encode_qout(out));
}

inline QueryOutput decode_qout(const std::vector<uint8_t>& bytes,
                               const std::string& name) {
    Reader r(bytes, name);
    r.expect_magic("QOUT");
    const uint32_t version = r.u32();
    if (version != kQoutVersion)
        throw IoError(name + ": unsupported QOUT version " + std::to_string(version));
    QueryOutput out;
    const uint32_t q = r.u32();
    out.num_classes = r.u32();
    out.dims = detail::read_dims(r, name);
    // Header sanity before allocation.
    const uint64_t per_query =
        uint64_t(out.num_classes) * 4 + 1 + 4 + uint64_t(out.voxel_count()) * 4;
    if (q > 0 && (per_query > r.remaining() || q > r.remaining() / per_query))
        throw IoError(name + ": truncated, header promises " + std::to_string(q) +
                      " queries of " + std::to_string(per_query) + " bytes but only " +
                      std::to_string(r.remaining()) + " remain");
    out.class_scores.resize(std::size_t(q) * out.num_classes);
    for (auto& s : out.class_scores) s = r.f32();
    out.kinds.resize(q);
    for (auto& k : out.kinds) {
        const uint8_t b = r.u8();
        if (b > 1) throw IoError(name + ": bad query kind byte");
        k = QueryKind(b);
    }
    out.track_ids.resize(q);
    for (auto& id : out.track_ids) id = r.u32();
    out.mask_scores.resize(std::size_t(q) * out.voxel_count());
    for (auto& m : out.mask_scores) m = r.f32();
    try {
        validate_query_output(out);
    } catch (const std::exception& e) {
        throw IoError(name + ": invalid query data: " + e.what());
    }
    return out;
}

inline QueryOutput read_qout(const std::string& path) {
    return decode_qout(read_file(path), path);
}

// --------------------------------------------------------------- box JSONL

inline std::string boxes_to_jsonl(const std::vector<BoxAnnotation>& boxes) {
    std::ostringstream os;
    for (const auto& b : boxes) {
        json j;
        j["timestep"] = b.timestep;
        j["instance_id"] = b.instance_id;
        j["class"] = b.class_id;
        j["center"] = {b.center.x, b.center.y, b.center.z};
        j["size"] = {b.size.x, b.size.y, b.size.z};
        j["yaw"] = b.yaw;
        os << j.dump() << "\n";
    }
    return os.str();
}

inline void write_boxes(const std::string& path, const std::vector<BoxAnnotation>& boxes) {
    const std::string text = boxes_to_jsonl(boxes);
    write_file(path, std::vector<uint8_t>(text.begin(), text.end()));
}

inline std::vector<BoxAnnotation> boxes_from_jsonl(const std::string& text,
                                                   const std::string& name) {
    std::vector<BoxAnnotation> boxes;
    std::istringstream is(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty() || line.find_first_not_of(" \t\r") == std::string::npos)
            continue;
        try {
            const json j = json::parse(line);
            BoxAnnotation b;
            b.timestep = j.at("timestep").get<int64_t>();
            b.instance_id = j.at("instance_id").get<uint32_t>();
            b.class_id = j.at("class").get<uint16_t>();
            const auto& c = j.at("center");
            b.center = {c[0], c[1], c[2]};
            const auto& s = j.at("size");
            b.size = {s[0], s[1], s[2]};
            b.yaw = j.value("yaw", 0.0);
            if (b.instance_id == 0)
                throw std::invalid_argument("instance_id must be nonzero");
            if (b.size.x <= 0 || b.size.y <= 0 || b.size.z <= 0)
                throw std::invalid_argument("size components must be > 0");
            boxes.push_back(b);
        } catch (const std::exception& e) {
            throw IoError(name + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return boxes;
}

inline std::vector<BoxAnnotation> read_boxes(const std::string& path) {
    const auto bytes = read_file(path);
    return boxes_from_jsonl(std::string(bytes.begin(), bytes.end()), path);
}

// ------------------------------------------------------------ scene script

inline SceneScript scene_script_from_json(const json& j) {
    SceneScript s;
    const auto& g = j.at("geometry");
    const auto& o = g.at("origin");
    const auto& vs = g.at("voxel_size");
    const auto& d = g.at("dims");
    s.geometry.origin = {o[0], o[1], o[2]};
    s.geometry.voxel_size = {vs[0], vs[1], vs[2]};
    s.geometry.dims = {d[0], d[1], d[2]};
    s.labels = label_spec_from_json(j.at("labels"));
    s.frames = j.at("frames").get<int64_t>();
    s.seed = j.value("seed", uint64_t(0));
    for (const auto& jo : j.value("objects", json::array())) {
        SceneObject obj;
        obj.class_id = jo.at("class").get<uint16_t>();
        const auto& sz = jo.at("size");
        obj.size = {sz[0], sz[1], sz[2]};
        for (const auto& jp : jo.at("trajectory")) {
            SceneObject::Pose p;
            p.frame = jp.at("frame").get<int64_t>();
            const auto& c = jp.at("center");
            p.center = {c[0], c[1], c[2]};
            p.yaw = jp.value("yaw", 0.0);
            obj.trajectory.push_back(p);
        }
        s.objects.push_back(std::move(obj));
    }
    for (const auto& jr : j.value("stuff", json::array())) {
        StuffRegion r;
        r.class_id = jr.at("class").get<uint16_t>();
        const auto& mn = jr.at("min");
        const auto& mx = jr.at("max");
        r.min = {mn[0], mn[1], mn[2]};
        r.max = {mx[0], mx[1], mx[2]};
        s.stuff.push_back(r);
    }
    if (j.contains("frustum") && !j.at("frustum").is_null()) {
        const auto& jf = j.at("frustum");
        Frustum f;
        const auto& a = jf.at("apex");
        f.apex = {a[0], a[1], a[2]};
        f.azimuth = jf.at("azimuth").get<double>();
        f.half_angle = jf.at("half_angle").get<double>();
        s.frustum = f;
    }
    return s;
}

inline SceneScript read_scene_script(const std::string& path) {
    const auto bytes = read_file(path);
    try {
        // Comments allowed so fixture scenes can be annotated.
        return scene_script_from_json(
            json::parse(bytes.begin(), bytes.end(), nullptr, true, true));
    } catch (const json::exception& e) {
        throw IoError(path + ": " + e.what());
    }
}

// -------------------------------------------------------------- corrupt ops

inline std::vector<CorruptOp> corrupt_ops_from_json(const json& j) {
    std::vector<CorruptOp> ops;
    for (const auto& jo : j) {
        CorruptOp op;
        op.kind = corrupt_kind_from_name(jo.at("op").get<std::string>());
        if (jo.contains("a")) op.id_a = jo.at("a").get<uint32_t>();
        if (jo.contains("id")) op.id_a = jo.at("id").get<uint32_t>();
        if (jo.contains("b")) op.id_b = jo.at("b").get<uint32_t>();
        if (jo.contains("frame")) op.frame = jo.at("frame").get<int64_t>();
        op.prob = jo.value("prob", 0.5);
        op.count = jo.value("count", 1);
        op.fresh = jo.value("fresh", false);
        ops.push_back(op);
    }
    return ops;
}

inline std::vector<CorruptOp> parse_corrupt_ops(const std::string& text) {
    try {
        return corrupt_ops_from_json(json::parse(text));
    } catch (const json::exception& e) {
        throw std::invalid_argument(std::string("bad ops JSON: ") + e.what());
    }
}

// ------------------------------------------------------------------ config

struct ToolConfig {
    TrackerParams tracker;
    AggregateConfig inference;
};

inline ToolConfig config_from_json(const json& j) {
    ToolConfig cfg;
    if (j.contains("tracker")) {
        const auto& t = j.at("tracker");
        cfg.tracker.min_iou = t.value("min_iou", cfg.tracker.min_iou);
        cfg.tracker.min_sim = t.value("min_sim", cfg.tracker.min_sim);
        cfg.tracker.max_misses = t.value("max_misses", cfg.tracker.max_misses);
        if (t.contains("kalman")) {
            const auto& k = t.at("kalman");
            auto& kp = cfg.tracker.kalman;
            kp.process_pos = k.value("process_pos", kp.process_pos);
            kp.process_size = k.value("process_size", kp.process_size);
            kp.process_vel = k.value("process_vel", kp.process_vel);
            kp.measure_pos = k.value("measure_pos", kp.measure_pos);
            kp.measure_size = k.value("measure_size", kp.measure_size);
            kp.init_pos = k.value("init_pos", kp.init_pos);
            kp.init_size = k.value("init_size", kp.init_size);
            kp.init_vel = k.value("init_vel", kp.init_vel);
        }
    }
    if (j.contains("inference")) {
        const auto& i = j.at("inference");
        cfg.inference.threshold = i.value("threshold", cfg.inference.threshold);
        cfg.inference.mask_threshold =
            i.value("mask_threshold", cfg.inference.mask_threshold);
        if (i.contains("mode")) {
            const std::string m = i.at("mode").get<std::string>();
            if (m == "split") cfg.inference.mode = AggregateMode::Split;
            else if (m == "unified") cfg.inference.mode = AggregateMode::Unified;
            else throw std::invalid_argument("config: mode must be split or unified");
        }
    }
    return cfg;
}

inline ToolConfig read_config(const std::string& path) {
    const auto bytes = read_file(path);
    try {
        return config_from_json(
            json::parse(bytes.begin(), bytes.end(), nullptr, true, true));
    } catch (const json::exception& e) {
        throw IoError(path + ": " + e.what());
    }
}

} // namespace io
} // namespace ov4d
