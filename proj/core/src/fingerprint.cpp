#include "rftwin/fingerprint.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "rftwin/io_util.hpp"

namespace rftwin::fingerprint {

namespace {

constexpr char kImageMagic[8] = {'R', 'F', 'T', 'W', 'F', 'P', 'I', '1'};

}  // namespace

void AoiGrid::validate() const {
    if (rows < 1 || cols < 1) throw std::invalid_argument("grid needs rows, cols >= 1");
    if (bounds.degenerate()) throw std::invalid_argument("grid bounds are degenerate");
}

int label_of(const AoiGrid& grid, const geo::EnuPosition& pos) {
    grid.validate();
    if (!grid.bounds.contains(pos))
        throw std::invalid_argument("position outside the AoI bounds");
    const double cell_w = grid.bounds.width() / grid.cols;
    const double cell_h = grid.bounds.height() / grid.rows;
    int col = static_cast<int>((pos.east_m - grid.bounds.min_east_m) / cell_w);
    int row = static_cast<int>((pos.north_m - grid.bounds.min_north_m) / cell_h);
    col = std::min(col, grid.cols - 1);  // closed max edge
    row = std::min(row, grid.rows - 1);
    return row * grid.cols + col;
}

geo::EnuPosition cell_center(const AoiGrid& grid, int cls) {
    grid.validate();
    if (cls < 0 || cls >= grid.cell_count())
        throw std::invalid_argument("class index out of range");
    const double cell_w = grid.bounds.width() / grid.cols;
    const double cell_h = grid.bounds.height() / grid.rows;
    const int row = cls / grid.cols;
    const int col = cls % grid.cols;
    return {grid.bounds.min_east_m + (col + 0.5) * cell_w,
            grid.bounds.min_north_m + (row + 0.5) * cell_h, 0.0};
}

geo::GeoPosition centroid_of(const AoiGrid& grid, int cls, const geo::LocalFrame& frame) {
    return geo::to_geo(frame, cell_center(grid, cls));
}

FingerprintImage rasterize(const measurement::MeasurementLog& log, const geo::LocalFrame& frame,
                           const geo::Rect& flight_area, int h, int w, double fill_dbm) {
    if (h < 8 || w < 8) throw std::invalid_argument("rasterize needs H, W >= 8");
    if (log.samples.empty()) throw std::invalid_argument("rasterize needs a non-empty log");
    if (flight_area.degenerate()) throw std::invalid_argument("flight area is degenerate");

    const double px_w = flight_area.width() / w;
    const double px_h = flight_area.height() / h;
    std::vector<double> sum(static_cast<std::size_t>(h) * w, 0.0);
    std::vector<double> count(static_cast<std::size_t>(h) * w, 0.0);

    for (const auto& s : log.samples) {
        const geo::EnuPosition p = geo::to_enu(frame, s.pos);
        if (!flight_area.contains(p)) continue;  // off-area samples don't bin
        int col = static_cast<int>((p.east_m - flight_area.min_east_m) / px_w);
        int row = static_cast<int>((p.north_m - flight_area.min_north_m) / px_h);
        col = std::min(col, w - 1);
        row = std::min(row, h - 1);
        const std::size_t idx = static_cast<std::size_t>(row) * w + col;
        sum[idx] += s.rssi_dbm;
        count[idx] += 1.0;
    }

    double max_count = 0.0;
    for (double c : count) max_count = std::max(max_count, c);
    if (max_count == 0.0)
        throw std::invalid_argument("no samples fall inside the flight area");

    FingerprintImage img;
    img.h = h;
    img.w = w;
    img.fill_dbm = fill_dbm;
    img.rssi_dbm.resize(sum.size());
    img.visit.resize(sum.size());
    for (std::size_t i = 0; i < sum.size(); ++i) {
        img.rssi_dbm[i] = count[i] > 0.0 ? sum[i] / count[i] : fill_dbm;
        img.visit[i] = count[i] / max_count;
    }
    return img;
}

nn::Tensor to_input_tensor(const FingerprintImage& img) {
    double mean = 0.0;
    std::size_t visited = 0;
    for (std::size_t i = 0; i < img.rssi_dbm.size(); ++i) {
        if (img.visit[i] > 0.0) {
            mean += img.rssi_dbm[i];
            ++visited;
        }
    }
    if (visited == 0) throw std::invalid_argument("image has no visited pixels");
    mean /= static_cast<double>(visited);
    double var = 0.0;
    for (std::size_t i = 0; i < img.rssi_dbm.size(); ++i)
        if (img.visit[i] > 0.0) var += (img.rssi_dbm[i] - mean) * (img.rssi_dbm[i] - mean);
    var /= static_cast<double>(visited);
    const double std_dev = std::sqrt(var);
    // Zero-variance guard: constant channels standardize to zeros.
    const double scale = std_dev > 1e-12 ? 1.0 / std_dev : 0.0;

    nn::Tensor t({2, img.h, img.w});
    const std::size_t plane = img.rssi_dbm.size();
    for (std::size_t i = 0; i < plane; ++i) {
        // Unvisited pixels are neutral zeros; the visit channel already
        // separates "no data" from "weak signal".
        t.data[i] = img.visit[i] > 0.0 ? (img.rssi_dbm[i] - mean) * scale : 0.0;
        t.data[plane + i] = img.visit[i];
    }
    return t;
}

void save_image(const FingerprintImage& img, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write image file: " + path.string());
    out.write(kImageMagic, sizeof(kImageMagic));
    const std::uint32_t h = static_cast<std::uint32_t>(img.h);
    const std::uint32_t w = static_cast<std::uint32_t>(img.w);
    out.write(reinterpret_cast<const char*>(&h), sizeof(h));
    out.write(reinterpret_cast<const char*>(&w), sizeof(w));
    out.write(reinterpret_cast<const char*>(&img.fill_dbm), sizeof(img.fill_dbm));
    out.write(reinterpret_cast<const char*>(img.rssi_dbm.data()),
              static_cast<std::streamsize>(img.rssi_dbm.size() * sizeof(double)));
    out.write(reinterpret_cast<const char*>(img.visit.data()),
              static_cast<std::streamsize>(img.visit.size() * sizeof(double)));
    if (!out) throw std::runtime_error("image write failed: " + path.string());
}

FingerprintImage load_image(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open image file: " + path.string());
    char magic[sizeof(kImageMagic)];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kImageMagic, sizeof(kImageMagic)) != 0)
        throw std::runtime_error(path.string() + ": not a fingerprint image (bad magic)");
    std::uint32_t h = 0, w = 0;
    in.read(reinterpret_cast<char*>(&h), sizeof(h));
    in.read(reinterpret_cast<char*>(&w), sizeof(w));
    FingerprintImage img;
    in.read(reinterpret_cast<char*>(&img.fill_dbm), sizeof(img.fill_dbm));
    if (!in || h == 0 || w == 0 || h > 4096 || w > 4096)
        throw std::runtime_error(path.string() + ": bad image header");
    img.h = static_cast<int>(h);
    img.w = static_cast<int>(w);
    img.rssi_dbm.resize(static_cast<std::size_t>(h) * w);
    img.visit.resize(static_cast<std::size_t>(h) * w);
    in.read(reinterpret_cast<char*>(img.rssi_dbm.data()),
            static_cast<std::streamsize>(img.rssi_dbm.size() * sizeof(double)));
    in.read(reinterpret_cast<char*>(img.visit.data()),
            static_cast<std::streamsize>(img.visit.size() * sizeof(double)));
    if (!in) throw std::runtime_error(path.string() + ": truncated image data");
    return img;
}

void write_dataset(const Dataset& ds, const std::filesystem::path& dir,
                   const std::string& manifest_name) {
    if (ds.images.size() != ds.labels.size())
        throw std::invalid_argument("dataset images/labels size mismatch");
    std::filesystem::create_directories(dir);
    std::string manifest = "image_path,label\n";
    char name[32];
    for (std::size_t i = 0; i < ds.images.size(); ++i) {
        std::snprintf(name, sizeof(name), "img_%05zu.fpi", i);
        save_image(ds.images[i], dir / name);
        manifest += std::string(name) + "," + std::to_string(ds.labels[i]) + "\n";
    }
    write_text_file(dir / manifest_name, manifest);
}

Dataset read_dataset(const std::filesystem::path& manifest_path) {
    const std::string text = read_text_file(manifest_path);
    const auto base = manifest_path.parent_path();
    Dataset ds;
    int line_no = 0;
    for (const auto& line : split(text, '\n')) {
        ++line_no;
        const std::string body{trim(line)};
        if (body.empty() || body == "image_path,label") continue;
        const auto fields = split(body, ',');
        if (fields.size() != 2)
            throw std::runtime_error(manifest_path.string() + " line " +
                                     std::to_string(line_no) + ": expected 'image_path,label'");
        ds.images.push_back(load_image(base / fields[0]));
        ds.labels.push_back(static_cast<int>(
            parse_int(fields[1], manifest_path.string() + " line " + std::to_string(line_no))));
    }
    if (ds.images.empty()) throw std::runtime_error(manifest_path.string() + ": empty dataset");
    return ds;
}

void TrainConfig::validate() const {
    if (epochs < 1) throw std::invalid_argument("epochs must be >= 1");
    if (!(lr0 > 0.0)) throw std::invalid_argument("lr0 must be > 0");
    if (!(decay_factor > 0.0)) throw std::invalid_argument("decay_factor must be > 0");
    if (!(weight_decay >= 0.0)) throw std::invalid_argument("weight_decay must be >= 0");
    if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
    if (std::abs(train_frac + val_frac + test_frac - 1.0) > 1e-9)
        throw std::invalid_argument("dataset split fractions must sum to 1");
    if (conv_channels.empty()) throw std::invalid_argument("need at least one conv stage");
}

double lr_schedule(const TrainConfig& cfg, double epoch) {
    if (!(epoch >= 0.0 && epoch < cfg.epochs))
        throw std::invalid_argument("epoch outside [0, epochs)");
    if (cfg.epochs == 1) return cfg.lr0;
    return cfg.lr0 * std::pow(cfg.decay_factor, epoch / (cfg.epochs - 1));
}

namespace {

double accuracy(const nn::CnnModel& model, const std::vector<nn::Tensor>& inputs,
                const std::vector<int>& labels, const std::vector<std::size_t>& idx) {
    if (idx.empty()) return 0.0;
    std::size_t correct = 0;
    for (std::size_t i : idx)
        if (nn::predict_class(model, inputs[i]) == labels[i]) ++correct;
    return static_cast<double>(correct) / static_cast<double>(idx.size());
}

}  // namespace

std::pair<nn::CnnModel, TrainMetrics> train(const Dataset& ds, const AoiGrid& grid,
                                            const TrainConfig& cfg) {
    cfg.validate();
    grid.validate();
    const std::size_t n = ds.images.size();
    if (ds.labels.size() != n) throw std::invalid_argument("dataset images/labels mismatch");
    if (n < static_cast<std::size_t>(10 * grid.cell_count()))
        throw std::invalid_argument("dataset too small: need >= 10 samples per class");
    for (int label : ds.labels)
        if (label < 0 || label >= grid.cell_count())
            throw std::invalid_argument("dataset label out of range");

    std::vector<nn::Tensor> inputs;
    inputs.reserve(n);
    for (const auto& img : ds.images) inputs.push_back(to_input_tensor(img));
    const int in_h = ds.images.front().h;
    const int in_w = ds.images.front().w;
    for (const auto& img : ds.images)
        if (img.h != in_h || img.w != in_w)
            throw std::invalid_argument("dataset images must share one shape");

    Rng rng(Rng::derive(cfg.seed, {0x7261696e}));  // training stream

    // Seeded shuffle split.
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = n - 1; i > 0; --i) {
        const auto j = static_cast<std::size_t>(rng.uniform01() * static_cast<double>(i + 1));
        std::swap(order[i], order[std::min(j, i)]);
    }
    const auto n_train = static_cast<std::size_t>(std::lround(cfg.train_frac * n));
    const auto n_val = static_cast<std::size_t>(std::lround(cfg.val_frac * n));
    std::vector<std::size_t> train_idx(order.begin(), order.begin() + n_train);
    std::vector<std::size_t> val_idx(order.begin() + n_train, order.begin() + n_train + n_val);
    std::vector<std::size_t> test_idx(order.begin() + n_train + n_val, order.end());

    nn::CnnModel model = nn::CnnModel::init(2, in_h, in_w, cfg.conv_channels, grid.cell_count(),
                                            cfg.kernel_size, rng);

    TrainMetrics metrics;
    metrics.epochs = cfg.epochs;
    metrics.lr0 = cfg.lr0;
    metrics.lr_final = lr_schedule(cfg, cfg.epochs - 1);
    metrics.decay_factor = cfg.decay_factor;
    metrics.weight_decay = cfg.weight_decay;
    metrics.batch_size = cfg.batch_size;
    metrics.train_frac = cfg.train_frac;
    metrics.val_frac = cfg.val_frac;
    metrics.test_frac = cfg.test_frac;
    metrics.n_train = static_cast<int>(train_idx.size());
    metrics.n_val = static_cast<int>(val_idx.size());
    metrics.n_test = static_cast<int>(test_idx.size());

    nn::CnnModel best = model;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double lr = lr_schedule(cfg, epoch);
        // Fresh shuffle per epoch.
        for (std::size_t i = train_idx.size() - 1; i > 0; --i) {
            const auto j = static_cast<std::size_t>(rng.uniform01() * static_cast<double>(i + 1));
            std::swap(train_idx[i], train_idx[std::min(j, i)]);
        }

        double epoch_loss = 0.0;
        std::size_t batches = 0;
        for (std::size_t start = 0; start < train_idx.size();
             start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t end =
                std::min(start + static_cast<std::size_t>(cfg.batch_size), train_idx.size());
            nn::Gradients batch_grad = nn::Gradients::zeros_like(model);
            double batch_loss = 0.0;
            for (std::size_t i = start; i < end; ++i) {
                const auto res = nn::backward(model, inputs[train_idx[i]],
                                              ds.labels[train_idx[i]]);
                batch_grad.accumulate(res.grads, 1.0);
                batch_loss += res.loss;
            }
            const double inv = 1.0 / static_cast<double>(end - start);
            batch_grad.scale(inv);
            batch_loss *= inv;

            auto params = nn::parameters(model);
            for (std::size_t p = 0; p < params.size(); ++p) {
                double* theta = params[p]->data.data();
                const double* g = batch_grad.tensors[p].data.data();
                const std::size_t len = params[p]->data.size();
                for (std::size_t i = 0; i < len; ++i)
                    theta[i] -= lr * (g[i] + cfg.weight_decay * theta[i]);
            }
            epoch_loss += batch_loss;
            ++batches;
        }
        metrics.train_loss.push_back(epoch_loss / static_cast<double>(batches));

        const double val_acc = accuracy(model, inputs, ds.labels, val_idx);
        metrics.val_accuracy.push_back(val_acc);
        if (val_acc > metrics.best_val_accuracy || metrics.best_epoch < 0) {
            metrics.best_val_accuracy = val_acc;
            metrics.best_epoch = epoch;
            best = model;
        }
    }

    metrics.final_train_accuracy = accuracy(model, inputs, ds.labels, train_idx);
    metrics.test_accuracy = accuracy(best, inputs, ds.labels, test_idx);
    return {std::move(best), std::move(metrics)};
}

void write_metrics_json(const TrainMetrics& m, const std::filesystem::path& path) {
    nlohmann::json j;
    j["epochs"] = m.epochs;
    j["lr0"] = m.lr0;
    j["lr_final"] = m.lr_final;
    j["decay_factor"] = m.decay_factor;
    j["weight_decay"] = m.weight_decay;
    j["batch_size"] = m.batch_size;
    j["split"] = {m.train_frac, m.val_frac, m.test_frac};
    j["n_train"] = m.n_train;
    j["n_val"] = m.n_val;
    j["n_test"] = m.n_test;
    j["train_loss"] = m.train_loss;
    j["val_accuracy"] = m.val_accuracy;
    j["best_val_accuracy"] = m.best_val_accuracy;
    j["best_epoch"] = m.best_epoch;
    j["test_accuracy"] = m.test_accuracy;
    j["final_train_accuracy"] = m.final_train_accuracy;
    write_text_file(path, j.dump(2) + "\n");
}

}  // namespace rftwin::fingerprint
