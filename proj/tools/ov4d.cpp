// Copyright Contributors to the ov4d Project
// SPDX-License-Identifier: Apache-2.0
//
// Command-line surface. Exit codes: 0 ok, 1 I/O or file format, 2 shape or
// semantic mismatch, 3 bad arguments.

#include "ov4d/io.hpp"
#include "ov4d/metrics.hpp"
#include "ov4d/serialize.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <limits>
#include <string>
#include <vector>

namespace {

constexpr int kExitOk = 0;
constexpr int kExitIo = 1;
constexpr int kExitShape = 2;
constexpr int kExitArgs = 3;

struct Vec3Flag {
    std::vector<double> v;
    ov4d::Vec3 get() const {
        if (v.size() != 3) throw std::invalid_argument("expected three values");
        return {v[0], v[1], v[2]};
    }
};

int run_evaluate(const std::string& gt_path, const std::string& pred_path, bool flawed,
                 const std::string& report_path) {
    const auto gt = ov4d::io::read_ov4d(gt_path);
    const auto pred = ov4d::io::read_ov4d(pred_path);
    const auto report = ov4d::stq_report(gt, pred, flawed);
    const std::string text = ov4d::report_to_text(report);
    if (report_path.empty() || report_path == "-") {
        std::cout << text;
    } else {
        ov4d::io::write_file(report_path, std::vector<uint8_t>(text.begin(), text.end()));
    }
    return kExitOk;
}

int run_splat(const std::string& gset_path, const std::vector<int>& dims,
              const Vec3Flag& voxel_size, const Vec3Flag& origin, double truncation,
              int expect_dim, const std::string& out_path) {
    const auto set = ov4d::io::read_gset(gset_path);
    if (expect_dim >= 0 && std::size_t(expect_dim) != set.embedding_dim)
        throw ov4d::ShapeError("GSET embedding dim " + std::to_string(set.embedding_dim) +
                               " does not match --embedding-dim " +
                               std::to_string(expect_dim));
    ov4d::GridGeometry geom;
    if (dims.size() != 3) throw std::invalid_argument("--dims needs three values");
    geom.dims = {dims[0], dims[1], dims[2]};
    geom.voxel_size = voxel_size.get();
    geom.origin = origin.get();

    const auto grid = ov4d::splat(set, geom, truncation);
    ov4d::io::write_fgrd(out_path, grid);

    double mean = 0.0, mx = 0.0;
    std::size_t occupied = 0;
    for (double o : grid.occupancy) {
        mean += o;
        mx = std::max(mx, o);
        occupied += o > 0.5;
    }
    mean /= double(grid.occupancy.size());
    std::printf("gaussians %zu  voxels %zu  occupancy mean %.6f  max %.6f  >0.5 %zu\n",
                set.size(), grid.occupancy.size(), mean, mx, occupied);
    return kExitOk;
}

int run_labelgen(const std::string& semantics_path, const std::string& boxes_path,
                 double margin, double max_distance, const std::string& out_path) {
    auto seq = ov4d::io::read_ov4d(semantics_path);
    const auto boxes = ov4d::io::read_boxes(boxes_path);
    ov4d::AssignConfig cfg;
    cfg.box_margin = margin;
    cfg.max_distance = max_distance;
    ov4d::AssignStats stats;
    const auto out = ov4d::assign_instances(seq, boxes, cfg, &stats);
    ov4d::io::write_ov4d(out_path, out);
    std::printf("assigned %lld voxels, %lld thing voxels without a same-class box\n",
                (long long)stats.assigned, (long long)stats.unmatched);
    return kExitOk;
}

int run_track(const std::string& pred_path, const std::string& method,
              const std::string& config_path, const std::string& features_csv,
              double min_iou, double min_sim, int max_misses,
              const std::string& out_path) {
    const auto seq = ov4d::io::read_ov4d(pred_path);

    ov4d::io::ToolConfig cfg;
    if (!config_path.empty()) cfg = ov4d::io::read_config(config_path);
    if (min_iou >= 0) cfg.tracker.min_iou = min_iou;
    if (min_sim >= 0) cfg.tracker.min_sim = min_sim;
    if (max_misses >= 0) cfg.tracker.max_misses = max_misses;

    ov4d::TrackerMethod m;
    if (method == "per-frame") m = ov4d::TrackerMethod::PerFrame;
    else if (method == "iou") m = ov4d::TrackerMethod::Iou;
    else if (method == "cosine") m = ov4d::TrackerMethod::Cosine;
    else if (method == "ab3dmot") m = ov4d::TrackerMethod::Ab3dmot;
    else throw std::invalid_argument("--method must be per-frame|iou|cosine|ab3dmot");

    std::vector<std::vector<double>> features;
    std::size_t feature_dim = 0;
    if (!features_csv.empty()) {
        std::istringstream is(features_csv);
        std::string path;
        while (std::getline(is, path, ',')) {
            const auto grid = ov4d::io::read_fgrd(path);
            if (grid.geometry.dims != seq.geometry().dims)
                throw ov4d::ShapeError("feature grid dims mismatch: " + path);
            feature_dim = grid.embedding_dim;
            features.push_back(grid.features);
        }
    }
    const auto out = ov4d::apply_tracker(seq, m, cfg.tracker,
                                         features.empty() ? nullptr : &features,
                                         feature_dim);
    ov4d::io::write_ov4d(out_path, out);
    return kExitOk;
}

int run_sim(const std::string& script_path, const std::string& gt_path,
            const std::string& boxes_path) {
    const auto script = ov4d::io::read_scene_script(script_path);
    const auto result = ov4d::render(script);
    ov4d::io::write_ov4d(gt_path, result.sequence);
    if (!boxes_path.empty()) ov4d::io::write_boxes(boxes_path, result.boxes);
    return kExitOk;
}

int run_corrupt(const std::string& in_path, const std::string& ops_text, uint64_t seed,
                const std::string& out_path) {
    const auto seq = ov4d::io::read_ov4d(in_path);
    std::string text = ops_text;
    if (!text.empty() && text[0] == '@') {
        const auto bytes = ov4d::io::read_file(text.substr(1));
        text.assign(bytes.begin(), bytes.end());
    }
    const auto ops = ov4d::io::parse_corrupt_ops(text);
    ov4d::io::write_ov4d(out_path, ov4d::corrupt(seq, ops, seed));
    return kExitOk;
}

int run_infer(const std::string& qout_csv, const std::string& labels_path,
              const Vec3Flag& origin, const Vec3Flag& voxel_size,
              const std::string& config_path, double threshold, const std::string& mode,
              bool per_frame, const std::string& out_path) {
    const auto spec = ov4d::io::read_label_spec(labels_path);
    ov4d::io::ToolConfig cfg;
    if (!config_path.empty()) cfg = ov4d::io::read_config(config_path);
    if (threshold >= 0) cfg.inference.threshold = threshold;
    if (mode == "split") cfg.inference.mode = ov4d::AggregateMode::Split;
    else if (mode == "unified") cfg.inference.mode = ov4d::AggregateMode::Unified;
    else if (!mode.empty())
        throw std::invalid_argument("--mode must be split or unified");

    std::vector<ov4d::QueryOutput> frames;
    std::istringstream is(qout_csv);
    std::string path;
    while (std::getline(is, path, ',')) frames.push_back(ov4d::io::read_qout(path));
    if (frames.empty()) throw std::invalid_argument("--qout lists no files");

    ov4d::GridGeometry geom;
    geom.dims = frames[0].dims;
    geom.origin = origin.get();
    geom.voxel_size = voxel_size.get();

    ov4d::TrackedSequence seq;
    if (per_frame) {
        seq = ov4d::per_frame_ids(frames, geom, spec, cfg.inference);
    } else {
        seq.labels = spec;
        for (std::size_t f = 0; f < frames.size(); ++f) {
            seq.frames.push_back(ov4d::aggregate(frames[f], geom, spec, cfg.inference));
            seq.timestamps.push_back(int64_t(f));
        }
    }
    ov4d::io::write_ov4d(out_path, seq);
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"4D panoptic occupancy toolkit"};
    app.require_subcommand(1);

    // evaluate
    auto* evaluate = app.add_subcommand("evaluate", "Score a prediction against ground truth");
    std::string gt_path, pred_path, report_path;
    bool flawed = false;
    evaluate->add_option("--gt", gt_path, "ground-truth OV4D file")->required();
    evaluate->add_option("--pred", pred_path, "prediction OV4D file")->required();
    evaluate->add_flag("--flawed", flawed,
                       "intersect tubes with ground-truth-occupied space");
    evaluate->add_option("--report", report_path, "output report path ('-' for stdout)");

    // splat
    auto* splat = app.add_subcommand("splat", "Splat a Gaussian set onto a voxel grid");
    std::string gset_path, fgrd_path;
    std::vector<int> dims;
    Vec3Flag voxel_size, origin;
    double truncation = ov4d::kDefaultTruncationSigma;
    int expect_dim = -1;
    splat->add_option("--gaussians", gset_path, "GSET file")->required();
    splat->add_option("--dims", dims, "grid dims X Y Z")->expected(3)->required();
    splat->add_option("--voxel-size", voxel_size.v, "meters per axis")
        ->expected(3)
        ->required();
    splat->add_option("--origin", origin.v, "grid origin, meters")->expected(3)->required();
    splat->add_option("--truncation", truncation,
                      "Mahalanobis cutoff in sigmas ('inf' for dense)");
    splat->add_option("--embedding-dim", expect_dim, "expected embedding dimension");
    splat->add_option("--out", fgrd_path, "output FGRD file")->required();

    // labelgen
    auto* labelgen = app.add_subcommand("labelgen", "Assign instance IDs from boxes");
    std::string sem_path, boxes_path, labelgen_out;
    double margin = 0.0;
    double max_distance = std::numeric_limits<double>::infinity();
    labelgen->add_option("--semantics", sem_path, "semantic OV4D file")->required();
    labelgen->add_option("--boxes", boxes_path, "box annotations (JSON lines)")->required();
    labelgen->add_option("--margin", margin, "box inflation margin, meters");
    labelgen->add_option("--max-distance", max_distance,
                         "cap for nearest-box fallback, meters");
    labelgen->add_option("--out", labelgen_out, "output OV4D file")->required();

    // track
    auto* track = app.add_subcommand("track", "Re-associate instance IDs across frames");
    std::string track_pred, track_method, track_config, track_features, track_out;
    double min_iou = -1, min_sim = -1;
    int max_misses = -1;
    track->add_option("--pred", track_pred, "input OV4D file")->required();
    track->add_option("--method", track_method, "per-frame|iou|cosine|ab3dmot")
        ->required();
    track->add_option("--config", track_config, "JSON config file");
    track->add_option("--features", track_features,
                      "comma-separated per-frame FGRD files (cosine)");
    track->add_option("--min-iou", min_iou, "override: minimum IoU");
    track->add_option("--min-sim", min_sim, "override: minimum cosine similarity");
    track->add_option("--max-misses", max_misses, "override: misses before retiring");
    track->add_option("--out", track_out, "output OV4D file")->required();

    // sim
    auto* sim = app.add_subcommand("sim", "Render a synthetic scene script");
    std::string script_path, sim_gt, sim_boxes;
    sim->add_option("--script", script_path, "scene script (JSON, // comments ok)")
        ->required();
    sim->add_option("--out-gt", sim_gt, "output ground-truth OV4D file")->required();
    sim->add_option("--out-boxes", sim_boxes, "output box annotations (JSON lines)");

    // corrupt
    auto* corrupt = app.add_subcommand("corrupt", "Apply corruptions to a sequence");
    std::string corrupt_in, corrupt_ops, corrupt_out;
    uint64_t corrupt_seed = 0;
    corrupt->add_option("--in", corrupt_in, "input OV4D file")->required();
    corrupt->add_option("--ops", corrupt_ops, "ops JSON array, or @file")->required();
    corrupt->add_option("--seed", corrupt_seed, "RNG seed");
    corrupt->add_option("--out", corrupt_out, "output OV4D file")->required();

    // infer
    auto* infer = app.add_subcommand("infer", "Aggregate query outputs into a sequence");
    std::string qout_csv, labels_path, infer_config, infer_mode, infer_out;
    Vec3Flag infer_origin, infer_voxel;
    double threshold = -1;
    bool per_frame = false;
    infer->add_option("--qout", qout_csv, "comma-separated per-frame QOUT files")
        ->required();
    infer->add_option("--labels", labels_path, "label spec JSON")->required();
    infer->add_option("--origin", infer_origin.v, "grid origin, meters")
        ->expected(3)
        ->required();
    infer->add_option("--voxel-size", infer_voxel.v, "meters per axis")
        ->expected(3)
        ->required();
    infer->add_option("--config", infer_config, "JSON config file");
    infer->add_option("--threshold", threshold, "override: query score threshold");
    infer->add_option("--mode", infer_mode, "split|unified");
    infer->add_flag("--per-frame", per_frame, "fresh instance IDs every frame");
    infer->add_option("--out", infer_out, "output OV4D file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        app.exit(e); // prints message / usage
        return e.get_exit_code() == 0 ? kExitOk : kExitArgs;
    }

    try {
        if (*evaluate) return run_evaluate(gt_path, pred_path, flawed, report_path);
        if (*splat)
            return run_splat(gset_path, dims, voxel_size, origin, truncation, expect_dim,
                             fgrd_path);
        if (*labelgen)
            return run_labelgen(sem_path, boxes_path, margin, max_distance, labelgen_out);
        if (*track)
            return run_track(track_pred, track_method, track_config, track_features,
                             min_iou, min_sim, max_misses, track_out);
        if (*sim) return run_sim(script_path, sim_gt, sim_boxes);
        if (*corrupt) return run_corrupt(corrupt_in, corrupt_ops, corrupt_seed, corrupt_out);
        if (*infer)
            return run_infer(qout_csv, labels_path, infer_origin, infer_voxel,
                             infer_config, threshold, infer_mode, per_frame, infer_out);
    } catch (const ov4d::IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitIo;
    } catch (const ov4d::ShapeError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitShape;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitArgs;
    } catch (const std::out_of_range& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitArgs;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitIo;
    }
    return kExitArgs;
}
