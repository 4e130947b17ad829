#include "hsemis/hstn.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

namespace hsemis {

namespace fs = std::filesystem;

namespace {

constexpr char kMagic[4] = {'H', 'S', 'T', 'N'};
constexpr std::uint64_t kMaxElements = 1ULL << 31;

void put_u32(std::string& buf, std::uint32_t v) {
    char b[4];
    b[0] = static_cast<char>(v & 0xff);
    b[1] = static_cast<char>((v >> 8) & 0xff);
    b[2] = static_cast<char>((v >> 16) & 0xff);
    b[3] = static_cast<char>((v >> 24) & 0xff);
    buf.append(b, 4);
}

std::uint32_t get_u32(const char* p) {
    return static_cast<std::uint32_t>(static_cast<unsigned char>(p[0])) |
           (static_cast<std::uint32_t>(static_cast<unsigned char>(p[1])) << 8) |
           (static_cast<std::uint32_t>(static_cast<unsigned char>(p[2])) << 16) |
           (static_cast<std::uint32_t>(static_cast<unsigned char>(p[3])) << 24);
}

void put_f32(std::string& buf, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(buf, bits);
}

float get_f32(const char* p) {
    const std::uint32_t bits = get_u32(p);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
}

void write_file_atomic(const fs::path& path, const std::string& content) {
    fs::path dir = path.parent_path();
    if (!dir.empty()) fs::create_directories(dir);
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw DataError("write: cannot open " + tmp.string());
        os.write(content.data(), static_cast<std::streamsize>(content.size()));
        if (!os) throw DataError("write: short write to " + tmp.string());
    }
    fs::rename(tmp, path);
}

} // namespace

void write_text_atomic(const fs::path& path, const std::string& content) {
    write_file_atomic(path, content);
}

void write_hstn(const fs::path& path, const Tensor& t) {
    std::string buf;
    buf.reserve(16 + t.values().size() * 4);
    buf.append(kMagic, 4);
    put_u32(buf, static_cast<std::uint32_t>(t.rank()));
    for (int i = 0; i < t.rank(); ++i) put_u32(buf, static_cast<std::uint32_t>(t.dim(i)));
    for (double v : t.values()) put_f32(buf, static_cast<float>(v));
    write_file_atomic(path, buf);
}

Tensor read_hstn(const fs::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("hstn: cannot open " + path.string());
    std::string buf((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    if (buf.size() < 8) throw DataError("hstn: truncated header in " + path.string());
    if (std::memcmp(buf.data(), kMagic, 4) != 0) {
        std::ostringstream os;
        os << "hstn: bad magic in " << path.string() << " (got bytes";
        for (int i = 0; i < 4; ++i)
            os << ' ' << static_cast<int>(static_cast<unsigned char>(buf[static_cast<std::size_t>(i)]));
        os << ", want 'HSTN')";
        throw DataError(os.str());
    }
    const std::uint32_t rank = get_u32(buf.data() + 4);
    if (rank > 8) throw DataError("hstn: rank " + std::to_string(rank) + " too large in " + path.string());
    if (buf.size() < 8 + 4ull * rank) throw DataError("hstn: truncated dims in " + path.string());
    Shape shape;
    std::uint64_t count = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
        const std::uint32_t d = get_u32(buf.data() + 8 + 4 * i);
        if (d == 0) throw DataError("hstn: zero dimension in " + path.string());
        count *= d;
        if (count > kMaxElements) throw DataError("hstn: dim overflow in " + path.string());
        shape.push_back(static_cast<int>(d));
    }
    const std::size_t payload_off = 8 + 4ull * rank;
    if (buf.size() != payload_off + 4 * count) {
        throw DataError("hstn: payload size mismatch in " + path.string() + " (have " +
                        std::to_string(buf.size() - payload_off) + " bytes, want " +
                        std::to_string(4 * count) + ")");
    }
    std::vector<double> values(count);
    for (std::uint64_t i = 0; i < count; ++i) {
        values[i] = static_cast<double>(get_f32(buf.data() + payload_off + 4 * i));
    }
    return Tensor(std::move(shape), std::move(values));
}

void save_checkpoint(const fs::path& dir, const std::vector<std::pair<std::string, Tensor>>& tensors,
                     const std::vector<std::pair<std::string, std::string>>& meta) {
    fs::create_directories(dir);
    std::string manifest;
    for (const auto& [name, t] : tensors) {
        write_hstn(dir / (name + ".hstn"), t);
        manifest += name + "\n";
    }
    write_file_atomic(dir / "manifest.txt", manifest);
    if (!meta.empty()) {
        std::string m;
        for (const auto& [k, v] : meta) m += k + "=" + v + "\n";
        write_file_atomic(dir / "meta.txt", m);
    }
}

void load_checkpoint(const fs::path& dir, std::vector<std::pair<std::string, Tensor>> tensors) {
    for (auto& [name, t] : tensors) {
        const fs::path p = dir / (name + ".hstn");
        Tensor loaded = read_hstn(p);
        if (loaded.shape() != t.shape()) {
            throw DataError("checkpoint: shape mismatch for " + name + ": file " +
                            shape_str(loaded.shape()) + " vs model " + shape_str(t.shape()));
        }
        t.raw_values() = loaded.values();
    }
}

std::vector<std::pair<std::string, std::string>> read_checkpoint_meta(const fs::path& dir) {
    std::vector<std::pair<std::string, std::string>> out;
    std::ifstream is(dir / "meta.txt");
    if (!is) return out;
    std::string line;
    while (std::getline(is, line)) {
        const auto pos = line.find('=');
        if (pos == std::string::npos) continue;
        out.emplace_back(line.substr(0, pos), line.substr(pos + 1));
    }
    return out;
}

} // namespace hsemis
