#include "mvinpaint/artifact.hpp"

#include <cstring>
#include <fstream>

namespace mvi {

namespace {

constexpr char kMagic[4] = {'M', 'V', 'I', 'A'};

template <typename T>
void put_pod(std::ostream& os, const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

void put_string(std::ostream& os, const std::string& s) {
    put_pod<uint64_t>(os, s.size());
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

struct Reader {
    std::istream& is;
    const std::filesystem::path& file;

    template <typename T>
    T pod() {
        T v{};
        if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) fail("truncated");
        return v;
    }
    std::string string(uint64_t limit = 1ull << 32) {
        uint64_t n = pod<uint64_t>();
        if (n > limit) fail("corrupt length");
        std::string s(n, '\0');
        if (n && !is.read(s.data(), static_cast<std::streamsize>(n))) fail("truncated");
        return s;
    }
    [[noreturn]] void fail(const std::string& why) {
        throw InputError("stage artifact " + file.string() + ": " + why);
    }
};

}  // namespace

const cv::Mat& Artifact::get(const std::string& name) const {
    auto it = mats.find(name);
    if (it == mats.end()) throw InputError("stage artifact '" + stage + "' has no entry '" + name + "'");
    return it->second;
}

void Artifact::save(const std::filesystem::path& file) const {
    if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
    std::ofstream os(file, std::ios::binary);
    if (!os) throw InputError("cannot write stage artifact " + file.string());
    os.write(kMagic, 4);
    put_pod<uint32_t>(os, kVersion);
    put_string(os, stage);
    put_string(os, meta.dump());
    put_pod<uint64_t>(os, mats.size());
    for (const auto& [name, m0] : mats) {
        cv::Mat m = m0.isContinuous() ? m0 : m0.clone();
        put_string(os, name);
        put_pod<int32_t>(os, m.type());
        put_pod<int32_t>(os, m.rows);
        put_pod<int32_t>(os, m.cols);
        const size_t bytes = m.empty() ? 0 : m.total() * m.elemSize();
        put_pod<uint64_t>(os, bytes);
        if (bytes) os.write(reinterpret_cast<const char*>(m.data), static_cast<std::streamsize>(bytes));
    }
    if (!os) throw InputError("failed writing stage artifact " + file.string());
}

Artifact Artifact::load(const std::filesystem::path& file) {
    std::ifstream is(file, std::ios::binary);
    if (!is) throw InputError("missing stage artifact: " + file.string());
    Reader r{is, file};
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) r.fail("not an artifact file");
    const uint32_t version = r.pod<uint32_t>();
    if (version != kVersion) r.fail("format version " + std::to_string(version) + " is not supported");
    Artifact a;
    a.stage = r.string(1 << 10);
    try {
        a.meta = nlohmann::json::parse(r.string());
    } catch (const nlohmann::json::exception&) {
        r.fail("corrupt metadata");
    }
    const uint64_t count = r.pod<uint64_t>();
    for (uint64_t i = 0; i < count; ++i) {
        std::string name = r.string(1 << 12);
        const int type = r.pod<int32_t>(), rows = r.pod<int32_t>(), cols = r.pod<int32_t>();
        const uint64_t bytes = r.pod<uint64_t>();
        cv::Mat m;
        if (rows > 0 && cols > 0) {
            if (rows > (1 << 16) || cols > (1 << 16)) r.fail("corrupt matrix size");
            m.create(rows, cols, type);
            if (bytes != m.total() * m.elemSize()) r.fail("corrupt matrix size");
            if (!is.read(reinterpret_cast<char*>(m.data), static_cast<std::streamsize>(bytes))) r.fail("truncated");
        } else if (bytes != 0) {
            r.fail("corrupt matrix size");
        }
        a.mats[name] = m;
    }
    return a;
}

}  // namespace mvi
