// Small shared helpers for the test binaries.

#ifndef PROCATTN_TESTS_UTIL_HPP
#define PROCATTN_TESTS_UTIL_HPP

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

namespace procattn::testing {

// Unique scratch directory removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& hint = "procattn-test") {
        std::random_device rd;
        std::ostringstream os;
        os << hint << "-" << std::hex << rd() << rd();
        path_ = std::filesystem::temp_directory_path() / os.str();
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path file(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline void write_file(const std::filesystem::path& p, const std::string& content) {
    std::ofstream out(p, std::ios::binary);
    out << content;
}

inline std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

}  // namespace procattn::testing

#endif
