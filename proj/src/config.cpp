#include "hsemis/config.hpp"

#include <fstream>
#include <sstream>

namespace hsemis {

namespace {

long parse_long(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const long out = std::stol(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return out;
    } catch (const std::exception&) {
        throw ConfigError("config: key " + key + " expects an integer, got '" + v + "'");
    }
}

double parse_double(const std::string& key, const std::string& v) {
    try {
        std::size_t pos = 0;
        const double out = std::stod(v, &pos);
        if (pos != v.size()) throw std::invalid_argument(v);
        return out;
    } catch (const std::exception&) {
        throw ConfigError("config: key " + key + " expects a number, got '" + v + "'");
    }
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError("config: key " + key + " expects true/false, got '" + v + "'");
}

template <typename T>
std::vector<T> parse_list(const std::string& key, const std::string& v) {
    std::vector<T> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        out.push_back(static_cast<T>(parse_long(key, item)));
    }
    if (out.empty()) throw ConfigError("config: key " + key + " expects a comma list");
    return out;
}

template <typename T> std::string join(const std::vector<T>& v) {
    std::ostringstream os;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) os << ',';
        os << v[i];
    }
    return os.str();
}

void expect_range(const std::string& key, double v, double lo, double hi, bool open_lo, bool open_hi) {
    const bool ok_lo = open_lo ? v > lo : v >= lo;
    const bool ok_hi = open_hi ? v < hi : v <= hi;
    if (!ok_lo || !ok_hi) {
        std::ostringstream os;
        os << "config: " << key << " = " << v << " outside " << (open_lo ? '(' : '[') << lo << ", "
           << hi << (open_hi ? ')' : ']');
        throw ConfigError(os.str());
    }
}

} // namespace

RunConfig RunConfig::defaults() { return RunConfig{}; }

RunConfig RunConfig::from_file(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("config: cannot open " + path.string());
    std::stringstream ss;
    ss << is.rdbuf();
    return from_string(ss.str());
}

RunConfig RunConfig::from_string(const std::string& content) {
    RunConfig cfg = defaults();
    std::stringstream ss(content);
    std::string line;
    while (std::getline(ss, line)) {
        // strip comments and whitespace
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        const auto begin = line.find_first_not_of(" \t\r");
        if (begin == std::string::npos) continue;
        const auto end = line.find_last_not_of(" \t\r");
        line = line.substr(begin, end - begin + 1);
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError("config: expected key=value, got '" + line + "'");
        std::string key = line.substr(0, eq);
        std::string value = line.substr(eq + 1);
        const auto kend = key.find_last_not_of(" \t");
        key = key.substr(0, kend + 1);
        const auto vbegin = value.find_first_not_of(" \t");
        value = vbegin == std::string::npos ? "" : value.substr(vbegin);
        cfg.set(key, value);
    }
    cfg.validate();
    return cfg;
}

void RunConfig::set(const std::string& key, const std::string& value) {
    if (key == "seed") seed = static_cast<std::uint64_t>(parse_long(key, value));
    else if (key == "data.dir") data_dir = value;
    else if (key == "data.image_size") synth.image_size = static_cast<int>(parse_long(key, value));
    else if (key == "data.classes") synth.class_count = static_cast<int>(parse_long(key, value));
    else if (key == "data.counts") synth.per_class = parse_list<long>(key, value);
    else if (key == "data.gaps") synth.gap_widths = parse_list<int>(key, value);
    else if (key == "data.blobs") synth.blob_counts = parse_list<int>(key, value);
    else if (key == "data.noise_sigma") synth.noise_sigma = parse_double(key, value);
    else if (key == "data.jitter") synth.jitter = static_cast<int>(parse_long(key, value));
    else if (key == "data.test_fraction") test_fraction = parse_double(key, value);
    else if (key == "data.label_fraction") label_fraction = parse_double(key, value);
    else if (key == "mirec.patch") mirec.patch = static_cast<int>(parse_long(key, value));
    else if (key == "mirec.mask_ratio") mirec.mask_ratio = parse_double(key, value);
    else if (key == "mirec.alpha") mirec.alpha = parse_double(key, value);
    else if (key == "mirec.steps") mirec.steps = static_cast<int>(parse_long(key, value));
    else if (key == "mirec.batch") mirec.batch = static_cast<int>(parse_long(key, value));
    else if (key == "mirec.lr") mirec.lr = parse_double(key, value);
    else if (key == "mirec.weight_decay") mirec.weight_decay = parse_double(key, value);
    else if (key == "sirl.tau") sirl_tau = parse_double(key, value);
    else if (key == "sirl.alpha") sirl_alpha = parse_double(key, value);
    else if (key == "sirl.samples_per_class") sirl_samples_per_class = static_cast<int>(parse_long(key, value));
    else if (key == "sirl.extractor") sirl_extractor = value;
    else if (key == "qcn.layers") qtest.qcn_layers = static_cast<int>(parse_long(key, value));
    else if (key == "qcn.qubits") qtest.qcn_qubits = static_cast<int>(parse_long(key, value));
    else if (key == "qcn.wire") qtest.qcn_wire = static_cast<int>(parse_long(key, value));
    else if (key == "qcn.lr") qtest.qcn_lr = parse_double(key, value);
    else if (key == "qcn.batch") qcn_batch = static_cast<int>(parse_long(key, value));
    else if (key == "qtest.mu") qtest.mu = parse_double(key, value);
    else if (key == "qtest.omega") qtest.omega = parse_double(key, value);
    else if (key == "qtest.lambda_schedule") qtest.lambda_schedule = value;
    else if (key == "qtest.lambda_max") qtest.lambda_max = parse_double(key, value);
    else if (key == "qtest.ramp_fraction") qtest.ramp_fraction = parse_double(key, value);
    else if (key == "qtest.lr") qtest.lr = parse_double(key, value);
    else if (key == "qtest.weight_decay") qtest.weight_decay = parse_double(key, value);
    else if (key == "qtest.steps") qtest.steps = static_cast<int>(parse_long(key, value));
    else if (key == "qtest.batch_labeled") qtest.batch_labeled = static_cast<int>(parse_long(key, value));
    else if (key == "qtest.batch_unlabeled") qtest.batch_unlabeled = static_cast<int>(parse_long(key, value));
    else if (key == "qtest.eval_every") qtest.eval_every = static_cast<int>(parse_long(key, value));
    else if (key == "qtest.patience") qtest.patience = static_cast<int>(parse_long(key, value));
    else if (key == "qtest.val_fraction") qtest.val_fraction = parse_double(key, value);
    else if (key == "aug.ops_per_sample") qtest.aug_ops = static_cast<int>(parse_long(key, value));
    else if (key == "him.mode") him_mode = value;
    else if (key == "run.baseline") run_baseline = parse_bool(key, value);
    else if (key == "baseline.steps") baseline_steps = static_cast<int>(parse_long(key, value));
    else throw ConfigError("config: unknown key '" + key + "'");
}

void RunConfig::validate() const {
    if (data_dir.empty()) validate_spec(synth);
    expect_range("data.test_fraction", test_fraction, 0.0, 1.0, true, true);
    expect_range("data.label_fraction", label_fraction, 0.0, 1.0, true, true);
    if (mirec.patch < 2 || (mirec.patch & (mirec.patch - 1)) != 0) {
        throw ConfigError("config: mirec.patch must be a power of two >= 2");
    }
    if (synth.image_size % 32 != 0 || synth.image_size % mirec.patch != 0) {
        throw ConfigError("config: data.image_size must be divisible by 32 and by mirec.patch");
    }
    expect_range("mirec.mask_ratio", mirec.mask_ratio, 0.0, 1.0, true, true);
    if (mirec.alpha < 0.0) throw ConfigError("config: mirec.alpha must be nonnegative");
    if (mirec.steps < 1 || mirec.batch < 1) throw ConfigError("config: mirec steps/batch must be positive");
    expect_range("mirec.lr", mirec.lr, 0.0, 1.0, true, false);
    if (mirec.weight_decay < 0.0) throw ConfigError("config: mirec.weight_decay must be nonnegative");

    if (sirl_tau <= 0.0) throw ConfigError("config: sirl.tau must be positive");
    expect_range("sirl.alpha", sirl_alpha, 0.0, 1.0, false, false);
    if (sirl_samples_per_class < 1) throw ConfigError("config: sirl.samples_per_class must be positive");
    if (sirl_extractor != "base" && sirl_extractor != "pixel") {
        throw ConfigError("config: sirl.extractor must be base or pixel");
    }

    if (qtest.qcn_qubits < 1 || qtest.qcn_qubits > 12) {
        throw ConfigError("config: qcn.qubits must lie in [1,12]");
    }
    if (qtest.qcn_layers < 1) throw ConfigError("config: qcn.layers must be positive");
    if (qtest.qcn_wire >= qtest.qcn_qubits) throw ConfigError("config: qcn.wire out of range");
    expect_range("qcn.lr", qtest.qcn_lr, 0.0, 1.0, true, false);
    if (qcn_batch < 1) throw ConfigError("config: qcn.batch must be positive");
    expect_range("qtest.mu", qtest.mu, 0.0, 1.0, true, true);
    if (qtest.omega <= 0.0) throw ConfigError("config: qtest.omega must be positive");
    if (qtest.lambda_schedule != "ramp" && qtest.lambda_schedule != "const") {
        throw ConfigError("config: qtest.lambda_schedule must be ramp or const");
    }
    if (qtest.lambda_max < 0.0) throw ConfigError("config: qtest.lambda_max must be nonnegative");
    expect_range("qtest.ramp_fraction", qtest.ramp_fraction, 0.0, 1.0, true, false);
    expect_range("qtest.lr", qtest.lr, 0.0, 1.0, true, false);
    if (qtest.weight_decay < 0.0) throw ConfigError("config: qtest.weight_decay must be nonnegative");
    if (qtest.steps < 1 || qtest.batch_labeled < 1 || qtest.batch_unlabeled < 0) {
        throw ConfigError("config: qtest steps/batch sizes invalid");
    }
    if (qtest.eval_every < 1 || qtest.patience < 1) {
        throw ConfigError("config: qtest.eval_every and qtest.patience must be positive");
    }
    expect_range("qtest.val_fraction", qtest.val_fraction, 0.0, 1.0, true, true);
    if (qtest.aug_ops < 1) throw ConfigError("config: aug.ops_per_sample must be positive");
    if (him_mode != "koa-fixed" && him_mode != "count-balanced") {
        throw ConfigError("config: him.mode must be koa-fixed or count-balanced");
    }
    if (baseline_steps < 0) throw ConfigError("config: baseline.steps must be nonnegative");
}

std::string RunConfig::to_string() const {
    std::ostringstream os;
    os << "seed=" << seed << '\n';
    os << "data.dir=" << data_dir << '\n';
    os << "data.image_size=" << synth.image_size << '\n';
    os << "data.classes=" << synth.class_count << '\n';
    os << "data.counts=" << join(synth.per_class) << '\n';
    os << "data.gaps=" << join(synth.gap_widths) << '\n';
    os << "data.blobs=" << join(synth.blob_counts) << '\n';
    os << "data.noise_sigma=" << synth.noise_sigma << '\n';
    os << "data.jitter=" << synth.jitter << '\n';
    os << "data.test_fraction=" << test_fraction << '\n';
    os << "data.label_fraction=" << label_fraction << '\n';
    os << "mirec.patch=" << mirec.patch << '\n';
    os << "mirec.mask_ratio=" << mirec.mask_ratio << '\n';
    os << "mirec.alpha=" << mirec.alpha << '\n';
    os << "mirec.steps=" << mirec.steps << '\n';
    os << "mirec.batch=" << mirec.batch << '\n';
    os << "mirec.lr=" << mirec.lr << '\n';
    os << "mirec.weight_decay=" << mirec.weight_decay << '\n';
    os << "sirl.tau=" << sirl_tau << '\n';
    os << "sirl.alpha=" << sirl_alpha << '\n';
    os << "sirl.samples_per_class=" << sirl_samples_per_class << '\n';
    os << "sirl.extractor=" << sirl_extractor << '\n';
    os << "qcn.layers=" << qtest.qcn_layers << '\n';
    os << "qcn.qubits=" << qtest.qcn_qubits << '\n';
    os << "qcn.wire=" << qtest.qcn_wire << '\n';
    os << "qcn.lr=" << qtest.qcn_lr << '\n';
    os << "qcn.batch=" << qcn_batch << '\n';
    os << "qtest.mu=" << qtest.mu << '\n';
    os << "qtest.omega=" << qtest.omega << '\n';
    os << "qtest.lambda_schedule=" << qtest.lambda_schedule << '\n';
    os << "qtest.lambda_max=" << qtest.lambda_max << '\n';
    os << "qtest.ramp_fraction=" << qtest.ramp_fraction << '\n';
    os << "qtest.lr=" << qtest.lr << '\n';
    os << "qtest.weight_decay=" << qtest.weight_decay << '\n';
    os << "qtest.steps=" << qtest.steps << '\n';
    os << "qtest.batch_labeled=" << qtest.batch_labeled << '\n';
    os << "qtest.batch_unlabeled=" << qtest.batch_unlabeled << '\n';
    os << "qtest.eval_every=" << qtest.eval_every << '\n';
    os << "qtest.patience=" << qtest.patience << '\n';
    os << "qtest.val_fraction=" << qtest.val_fraction << '\n';
    os << "aug.ops_per_sample=" << qtest.aug_ops << '\n';
    os << "him.mode=" << him_mode << '\n';
    os << "run.baseline=" << (run_baseline ? "true" : "false") << '\n';
    os << "baseline.steps=" << baseline_steps << '\n';
    return os.str();
}

} // namespace hsemis
