#include "commentsim/util/fs.hpp"

#include "commentsim/error.hpp"

#include <fstream>
#include <sstream>

namespace commentsim::util {
namespace fs = std::filesystem;

std::vector<std::uint8_t> read_bytes(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorKind::input, "cannot open " + path.string());
    }
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorKind::input, "cannot open " + path.string());
    }
    std::ostringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

namespace {

void write_raw(const fs::path& path, const char* data, std::size_t size) {
    if (path.has_parent_path()) {
        fs::create_directories(path.parent_path());
    }
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw Error(ErrorKind::internal, "cannot write " + tmp.string());
        }
        out.write(data, static_cast<std::streamsize>(size));
        if (!out) {
            throw Error(ErrorKind::internal, "short write to " + tmp.string());
        }
    }
    fs::rename(tmp, path);
}

}  // namespace

void write_atomic(const fs::path& path, std::string_view content) {
    write_raw(path, content.data(), content.size());
}

void write_atomic(const fs::path& path, const std::vector<std::uint8_t>& content) {
    write_raw(path, reinterpret_cast<const char*>(content.data()), content.size());
}

}  // namespace commentsim::util
