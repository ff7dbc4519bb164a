#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "rftwin/geo.hpp"
#include "rftwin/measurement.hpp"
#include "rftwin/nn.hpp"

namespace rftwin::fingerprint {

/// AoI partitioned into rows x cols equal cells; class indices run row-major
/// from the south-west corner.
struct AoiGrid {
    geo::Rect bounds;
    int rows = 1;
    int cols = 1;

    int cell_count() const { return rows * cols; }
    void validate() const;
};

/// Cell index for a position inside the bounds. Cells are half-open with the
/// max edges closed; outside positions are rejected.
int label_of(const AoiGrid& grid, const geo::EnuPosition& pos);

/// Geometric center of a cell, in the local frame.
geo::EnuPosition cell_center(const AoiGrid& grid, int cls);
/// Same center mapped back to geodetic coordinates.
geo::GeoPosition centroid_of(const AoiGrid& grid, int cls, const geo::LocalFrame& frame);

/// Rasterized flight log over the UAV flight area. Channel 0 holds the mean
/// RSSI per pixel (fill_dbm where unvisited); channel 1 the visit counts
/// normalized to [0, 1].
struct FingerprintImage {
    int h = 0;
    int w = 0;
    std::vector<double> rssi_dbm;  // h * w, row 0 = south edge
    std::vector<double> visit;     // h * w, 0 = no visit
    double fill_dbm = -120.0;
};

FingerprintImage rasterize(const measurement::MeasurementLog& log, const geo::LocalFrame& frame,
                           const geo::Rect& flight_area, int h, int w, double fill_dbm = -120.0);

/// Network input: channel 0 standardized to zero mean / unit variance over
/// visited pixels (constant images map to zeros), channel 1 passed through.
nn::Tensor to_input_tensor(const FingerprintImage& img);

/// Binary image file (magic, dims, doubles); referenced by dataset manifests.
void save_image(const FingerprintImage& img, const std::filesystem::path& path);
FingerprintImage load_image(const std::filesystem::path& path);

struct Dataset {
    std::vector<FingerprintImage> images;
    std::vector<int> labels;
};

/// Dataset manifest: CSV `image_path,label`, paths relative to the manifest.
void write_dataset(const Dataset& ds, const std::filesystem::path& dir,
                   const std::string& manifest_name = "manifest.csv");
Dataset read_dataset(const std::filesystem::path& manifest_path);

struct TrainConfig {
    int epochs = 200;
    double lr0 = 1e-3;
    double decay_factor = 0.1;  // endpoint ratio of the exponential schedule
    double weight_decay = 1e-3;
    int batch_size = 32;
    double train_frac = 0.70;
    double val_frac = 0.15;
    double test_frac = 0.15;
    std::uint64_t seed = 0;
    std::vector<int> conv_channels = {8, 16, 32};
    int kernel_size = 3;

    void validate() const;
};

/// lr0 * decay^(epoch / (epochs - 1)): continuous exponential decay reaching
/// lr0 * decay at the final epoch. Real-valued epoch so midpoints are exact.
double lr_schedule(const TrainConfig& cfg, double epoch);

struct TrainMetrics {
    // Recipe echo.
    int epochs = 0;
    double lr0 = 0.0;
    double lr_final = 0.0;
    double decay_factor = 0.0;
    double weight_decay = 0.0;
    int batch_size = 0;
    double train_frac = 0.0, val_frac = 0.0, test_frac = 0.0;
    int n_train = 0, n_val = 0, n_test = 0;
    // Curves and outcomes.
    std::vector<double> train_loss;    // per epoch
    std::vector<double> val_accuracy;  // per epoch
    double best_val_accuracy = 0.0;
    int best_epoch = -1;
    double test_accuracy = 0.0;
    double final_train_accuracy = 0.0;
};

/// Seeded 70/15/15 shuffle split, mini-batch SGD with decoupled weight decay
/// (theta <- theta - lr * (grad + wd * theta)); returns the parameters at the
/// best validation accuracy.
std::pair<nn::CnnModel, TrainMetrics> train(const Dataset& ds, const AoiGrid& grid,
                                            const TrainConfig& cfg);

void write_metrics_json(const TrainMetrics& m, const std::filesystem::path& path);

}  // namespace rftwin::fingerprint
