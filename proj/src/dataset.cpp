#include "hsemis/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "hsemis/hstn.hpp"
#include "hsemis/rng.hpp"

namespace hsemis {

namespace fs = std::filesystem;

void save_dataset(const fs::path& dir, const Dataset& ds) {
    fs::create_directories(dir);
    std::ostringstream csv;
    csv << "id,grade\n";
    for (std::size_t i = 0; i < ds.size(); ++i) {
        write_hstn(dir / (ds.ids[i] + ".hstn"), ds.images[i]);
        csv << ds.ids[i] << ',' << ds.labels[i] << '\n';
    }
    write_text_atomic(dir / "labels.csv", csv.str());
}

Dataset load_dataset(const fs::path& dir) {
    std::ifstream is(dir / "labels.csv");
    if (!is) throw DataError("load_dataset: missing " + (dir / "labels.csv").string());
    Dataset ds;
    std::string line;
    bool header = true;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        if (header) {
            header = false;
            if (line.rfind("id,", 0) == 0) continue;
        }
        const auto comma = line.find(',');
        if (comma == std::string::npos) throw DataError("load_dataset: malformed labels row: " + line);
        const std::string id = line.substr(0, comma);
        const int grade = std::stoi(line.substr(comma + 1));
        ds.ids.push_back(id);
        ds.labels.push_back(grade);
        ds.images.push_back(read_hstn(dir / (id + ".hstn")));
    }
    if (ds.images.empty()) throw DataError("load_dataset: empty dataset in " + dir.string());
    return ds;
}

std::vector<std::pair<std::string, Tensor>> load_tensor_dir(const fs::path& dir) {
    std::vector<std::pair<std::string, Tensor>> out;
    if (!fs::exists(dir)) throw DataError("load_tensor_dir: no such directory " + dir.string());
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.path().extension() == ".hstn") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& p : files) out.emplace_back(p.stem().string(), read_hstn(p));
    if (out.empty()) throw DataError("load_tensor_dir: no .hstn files in " + dir.string());
    return out;
}

SplitResult split_dataset(const Dataset& ds, double label_fraction, double test_fraction,
                          std::uint64_t seed) {
    if (!(label_fraction > 0.0 && label_fraction < 1.0)) {
        throw ConfigError("split: label fraction must lie in (0,1)");
    }
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
        throw ConfigError("split: test fraction must lie in (0,1)");
    }
    int max_label = 0;
    for (int g : ds.labels) max_label = std::max(max_label, g);
    std::vector<std::vector<int>> by_class(static_cast<std::size_t>(max_label) + 1);
    for (std::size_t i = 0; i < ds.size(); ++i) {
        by_class[static_cast<std::size_t>(ds.labels[i])].push_back(static_cast<int>(i));
    }

    Rng rng(seed);
    SplitResult out;
    auto push = [&ds](Dataset& dst, int idx) {
        dst.images.push_back(ds.images[static_cast<std::size_t>(idx)]);
        dst.labels.push_back(ds.labels[static_cast<std::size_t>(idx)]);
        dst.ids.push_back(ds.ids[static_cast<std::size_t>(idx)]);
    };
    for (std::size_t g = 0; g < by_class.size(); ++g) {
        auto& idx = by_class[g];
        if (idx.empty()) continue;
        rng.shuffle(idx);
        const int n = static_cast<int>(idx.size());
        const int n_test = static_cast<int>(std::lround(test_fraction * n));
        const int n_train = n - n_test;
        const int n_labeled = static_cast<int>(std::lround(label_fraction * n_train));
        if (n_labeled == 0) {
            throw DataError("split: grade " + std::to_string(g) +
                            " has no labeled samples at fraction " + std::to_string(label_fraction));
        }
        for (int i = 0; i < n; ++i) {
            if (i < n_test) {
                push(out.test, idx[static_cast<std::size_t>(i)]);
            } else if (i < n_test + n_labeled) {
                push(out.labeled, idx[static_cast<std::size_t>(i)]);
            } else {
                push(out.unlabeled, idx[static_cast<std::size_t>(i)]);
            }
        }
    }
    return out;
}

} // namespace hsemis
